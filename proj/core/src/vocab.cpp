#include "claimvec/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "claimvec/error.hpp"
#include "claimvec/io.hpp"

namespace claimvec {

AliasTable::AliasTable(std::span<const double> weights) {
    const std::size_t n = weights.size();
    if (n == 0) return;
    if (n > std::size_t(UINT32_MAX)) throw Error("alias table too large");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw Error("alias table weights must be finite and non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw Error("alias table needs positive total weight");

    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
        scaled[i] = weights[i] * double(n) / total;
        (scaled[i] < 1.0 ? small : large).push_back(std::uint32_t(i));
    }
    while (!small.empty() && !large.empty()) {
        const auto s = small.back();
        small.pop_back();
        const auto l = large.back();
        prob_[s] = scaled[s];
        alias_[s] = l;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if (scaled[l] < 1.0) {
            large.pop_back();
            small.push_back(l);
        }
    }
    // Leftovers are 1 up to rounding.
    for (auto i : large) prob_[i] = 1.0, alias_[i] = i;
    for (auto i : small) prob_[i] = 1.0, alias_[i] = i;
}

Vocabulary::Vocabulary(std::vector<std::pair<std::string, std::uint64_t>> entries, std::uint64_t min_count,
                       double alpha)
    : min_count_(min_count), alpha_(alpha) {
    if (entries.empty()) throw Error("empty vocabulary");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and >= 0");
    tokens_.reserve(entries.size());
    counts_.reserve(entries.size());
    for (auto& [tok, cnt] : entries) {
        if (cnt == 0) throw Error("token '" + tok + "' has zero count");
        if (!index_.emplace(tok, TokenId(tokens_.size())).second) throw Error("duplicate token '" + tok + "'");
        tokens_.push_back(std::move(tok));
        counts_.push_back(cnt);
        total_ += cnt;
    }
    std::vector<double> w(counts_.size());
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) z += (w[i] = std::pow(double(counts_[i]), alpha_));
    noise_p_.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) noise_p_[i] = w[i] / z;
    noise_ = AliasTable(w);
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens)
        if (auto it = index_.find(t); it != index_.end()) ids.push_back(it->second);
    return ids;
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> documents, const VocabOptions& opts) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& doc : documents)
        for (const auto& tok : doc) ++counts[tok];
    std::vector<std::pair<std::string, std::uint64_t>> kept;
    for (auto& [tok, cnt] : counts)
        if (cnt >= opts.min_count) kept.emplace_back(tok, cnt);
    if (kept.empty()) throw Error("empty vocabulary: no token reaches min_count " + std::to_string(opts.min_count));
    // std::map iteration is lexicographic, so a stable sort on count keeps ties in that order.
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return Vocabulary(std::move(kept), opts.min_count, opts.alpha);
}

Vocabulary build_vocab(const Cohort& cohort, const VocabOptions& opts) {
    if (cohort.documents.empty()) throw Error("cannot build a vocabulary from an empty cohort");
    std::vector<std::vector<std::string>> docs;
    docs.reserve(cohort.documents.size());
    for (const auto& d : cohort.documents) docs.push_back(d.tokens);
    return build_vocab(docs, opts);
}

TokenId sample_negative(const Vocabulary& vocab, Rng& rng, std::optional<TokenId> exclude) {
    if (vocab.size() == 0) throw Error("cannot sample from an empty vocabulary");
    if (exclude && vocab.size() < 2)
        throw Error("negative sampling with exclusion needs at least 2 tokens in the vocabulary");
    while (true) {
        const auto id = TokenId(vocab.noise_table().sample(rng));
        if (!exclude || id != *exclude) return id;
    }
}

void write_vocab(std::ostream& out, const Vocabulary& vocab) {
    out << vocab.size() << ' ' << vocab.min_count() << ' ' << io::format_double(vocab.alpha()) << '\n';
    for (TokenId i = 0; i < vocab.size(); ++i) out << vocab.token(i) << '\t' << vocab.count(i) << '\n';
}

Vocabulary read_vocab(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(source, 1, "header", "missing header");
    auto head = io::split(io::trim(line), ' ');
    long long v = 0, min_count = 0;
    double alpha = 0;
    if (head.size() != 3 || !io::parse_int(head[0], v) || !io::parse_int(head[1], min_count) ||
        !io::parse_double(head[2], alpha) || v < 0 || min_count < 0)
        throw ParseError(source, 1, "header", "expected 'V min_count alpha'");
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    entries.reserve(std::size_t(v));
    std::size_t lineno = 1;
    while (entries.size() < std::size_t(v) && std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto tab = line.find('\t');
        long long cnt = 0;
        if (tab == std::string::npos || tab == 0 || !io::parse_int(std::string_view(line).substr(tab + 1), cnt) || cnt <= 0)
            throw ParseError(source, lineno, "entry", "expected 'token<TAB>count'");
        entries.emplace_back(line.substr(0, tab), std::uint64_t(cnt));
    }
    if (entries.size() != std::size_t(v))
        throw ParseError(source, lineno, "entries", "expected " + std::to_string(v) + " tokens, found " +
                                                        std::to_string(entries.size()));
    return Vocabulary(std::move(entries), std::uint64_t(min_count), alpha);
}

}  // namespace claimvec
