#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "claimvec/claims.hpp"

namespace claimvec {

using TokenId = std::uint32_t;
using Rng = std::mt19937_64;

/// Walker/Vose alias table: O(1) draws from a fixed discrete distribution.
class AliasTable {
public:
    AliasTable() = default;
    explicit AliasTable(std::span<const double> weights);

    std::size_t size() const noexcept { return prob_.size(); }
    bool empty() const noexcept { return prob_.empty(); }

    /// One uniform draw per sample: the integer part picks a column, the fraction
    /// decides between the column and its alias.
    std::size_t sample(Rng& rng) const noexcept {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * double(prob_.size());
        std::size_t col = static_cast<std::size_t>(u);
        if (col >= prob_.size()) col = prob_.size() - 1;
        return (u - double(col)) < prob_[col] ? col : alias_[col];
    }

private:
    std::vector<double> prob_;
    std::vector<std::uint32_t> alias_;
};

struct VocabOptions {
    std::uint64_t min_count = 5;
    double alpha = 0.75;
};

/**
 * Token vocabulary with counts and the negative-sampling noise distribution
 * p(w) proportional to count(w)^alpha.
 *
 * Ids are dense and assigned by descending count, ties broken lexicographically.
 * Immutable once built.
 */
class Vocabulary {
public:
    Vocabulary() = default;
    /// `entries` must already be in id order.
    Vocabulary(std::vector<std::pair<std::string, std::uint64_t>> entries, std::uint64_t min_count, double alpha);

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token(TokenId id) const { return tokens_.at(id); }
    std::uint64_t count(TokenId id) const { return counts_.at(id); }
    std::optional<TokenId> find(std::string_view token) const;
    std::uint64_t total_count() const noexcept { return total_; }
    std::uint64_t min_count() const noexcept { return min_count_; }
    double alpha() const noexcept { return alpha_; }
    /// Noise probability of `id`.
    double noise_probability(TokenId id) const { return noise_p_.at(id); }
    const AliasTable& noise_table() const noexcept { return noise_; }

    std::vector<TokenId> encode(std::span<const std::string> tokens) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.tokens_ == b.tokens_ && a.counts_ == b.counts_ && a.min_count_ == b.min_count_ &&
               a.alpha_ == b.alpha_;
    }

private:
    std::vector<std::string> tokens_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, TokenId> index_;
    std::vector<double> noise_p_;
    AliasTable noise_;
    std::uint64_t total_ = 0;
    std::uint64_t min_count_ = 1;
    double alpha_ = 0.75;
};

Vocabulary build_vocab(std::span<const std::vector<std::string>> documents, const VocabOptions& opts = {});
Vocabulary build_vocab(const Cohort& cohort, const VocabOptions& opts = {});

/// Draws a noise token. With `exclude` set, rejects that id and redraws.
/// Throws Error when exclusion is requested on a one-token vocabulary.
TokenId sample_negative(const Vocabulary& vocab, Rng& rng, std::optional<TokenId> exclude = std::nullopt);

// Text layout: header "V min_count alpha", then "token<TAB>count" per id.
void write_vocab(std::ostream& out, const Vocabulary& vocab);
Vocabulary read_vocab(std::istream& in, const std::string& source = "<vocab>");

}  // namespace claimvec
