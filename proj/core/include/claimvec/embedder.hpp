#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "claimvec/claims.hpp"
#include "claimvec/error.hpp"
#include "claimvec/vocab.hpp"

namespace claimvec {

/// Dense row-major matrix.
template <class T>
class BasicMatrix {
public:
    BasicMatrix() = default;
    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;

enum class ParagraphModel : std::uint8_t { PV_DBOW, PV_DM };

std::string_view to_string(ParagraphModel m) noexcept;
std::optional<ParagraphModel> parse_paragraph_model(std::string_view s) noexcept;

/// How PV-DM combines the document vector with its context word vectors. Only the mean
/// is supported.
enum class DmCombine : std::uint8_t { Mean };

struct EmbedConfig {
    ParagraphModel model = ParagraphModel::PV_DBOW;
    std::size_t dim = 100;
    /// Maximum context half-width. Pure PV-DBOW ignores it; it only shapes PV-DM contexts
    /// and the skip-gram pass of `joint_word_training`.
    std::size_t window = 15;
    std::size_t negatives = 5;
    std::size_t epochs = 10;
    double lr_start = 0.025;
    double lr_end = 1e-4;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    DmCombine dm_combine = DmCombine::Mean;
    bool joint_word_training = false;
    /// Use the full window at every position instead of b ~ Uniform{1..window}.
    bool fixed_window = false;
    /// Frequent-token downsampling threshold; 0 disables it.
    double subsample = 0.0;

    friend bool operator==(const EmbedConfig&, const EmbedConfig&) = default;
};

void validate(const EmbedConfig& config);
std::string embed_config_to_json(const EmbedConfig& config);
EmbedConfig embed_config_from_json(std::string_view json_text);

struct EmbeddingModel {
    EmbedConfig config;
    Vocabulary vocab;
    std::vector<std::string> doc_ids;
    Matrix doc_vectors;  // one row per training document
    Matrix word_in;      // context vectors (PV-DM, joint skip-gram)
    Matrix word_out;     // prediction vectors
    std::unordered_map<std::string, std::size_t> doc_index;  // patient_id -> doc_vectors row

    std::optional<std::size_t> find_doc(const std::string& patient_id) const {
        auto it = doc_index.find(patient_id);
        if (it == doc_index.end()) return std::nullopt;
        return it->second;
    }
    /// Word vectors that carry learned structure: `word_in` when the model trains it,
    /// otherwise `word_out`.
    const Matrix& word_vectors() const noexcept {
        return (config.model == ParagraphModel::PV_DM || config.joint_word_training) ? word_in : word_out;
    }

    friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b) {
        return a.config == b.config && a.vocab == b.vocab && a.doc_ids == b.doc_ids &&
               a.doc_vectors == b.doc_vectors && a.word_in == b.word_in && a.word_out == b.word_out;
    }
};

/// Uniform(-0.5/dim, 0.5/dim) document and input-word vectors, zero output vectors.
EmbeddingModel init_model(const EmbedConfig& config, Vocabulary vocab, std::vector<std::string> doc_ids);

/**
 * Negative-sampling loss for one predictor vector `center`:
 *
 *   L = -log sigma(u_target . c) - sum_j log sigma(-u_j . c)
 *
 * with u the rows of `word_out`. Returns L, dL/dc, and dL/du for each listed row in the
 * order target, negatives... (repeated negatives get one entry each; their true
 * gradient is the sum).
 */
template <class T>
struct NsLossGrad {
    T loss{};
    std::vector<T> grad_center;
    std::vector<std::vector<T>> grad_out_rows;
};

namespace detail {
template <class T>
T softplus(T z) {
    return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
}
template <class T>
T sigmoid(T z) {
    return z >= 0 ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}
}  // namespace detail

template <class T>
NsLossGrad<T> ns_loss_and_grads(std::span<const T> center, TokenId target, std::span<const TokenId> negatives,
                                const BasicMatrix<T>& word_out) {
    const std::size_t dim = center.size();
    if (word_out.cols() != dim) throw Error("ns_loss_and_grads: dimension mismatch");
    NsLossGrad<T> out;
    out.grad_center.assign(dim, T(0));
    auto term = [&](TokenId w, bool positive) {
        if (w >= word_out.rows()) throw Error("ns_loss_and_grads: token id out of range");
        auto u = word_out.row(w);
        T score = 0;
        for (std::size_t i = 0; i < dim; ++i) score += u[i] * center[i];
        // d/ds of -log sigma(s) is sigma(s) - 1; of -log sigma(-s) is sigma(s).
        const T coef = positive ? detail::sigmoid(score) - T(1) : detail::sigmoid(score);
        out.loss += detail::softplus(positive ? -score : score);
        std::vector<T> gu(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            out.grad_center[i] += coef * u[i];
            gu[i] = coef * center[i];
        }
        out.grad_out_rows.push_back(std::move(gu));
    };
    term(target, true);
    for (auto w : negatives) {
        if (w == target) throw Error("ns_loss_and_grads: target listed among negatives");
        term(w, false);
    }
    return out;
}

struct TrainStats {
    std::vector<double> epoch_mean_loss;  // mean loss per negative-sampling update
    std::size_t skipped_documents = 0;    // documents without any in-vocabulary token
    std::uint64_t updates = 0;
};

/**
 * Trains `model` in place for `config.epochs` passes.
 *
 * `documents[i]` feeds row i of `doc_vectors`; the learning rate decays linearly from
 * lr_start to lr_end over the planned number of token positions. With one worker the
 * result is a pure function of (config, documents). With several workers the shards
 * update the shared matrices without locks and the result depends on scheduling.
 */
TrainStats train(EmbeddingModel& model, std::span<const std::vector<TokenId>> documents);
/// Trains on the cohort documents; rows follow cohort order and must match `doc_ids`.
TrainStats train(EmbeddingModel& model, const Cohort& cohort);

struct InferOptions {
    std::size_t epochs = 20;
    double lr = 0.025;
    std::uint64_t seed = 1;
};

/// Fits a fresh document vector against frozen word matrices.
std::vector<float> infer_doc_vector(const EmbeddingModel& model, std::span<const std::string> tokens,
                                    const InferOptions& opts = {});

/**
 * Mean negative-sampling loss of `doc_vector` over the document's token positions, with
 * negatives and PV-DM windows drawn from `seed`. Nothing is updated, so two calls with the
 * same seed see the same sampled objective.
 */
double document_objective(const EmbeddingModel& model, std::span<const TokenId> tokens,
                          std::span<const float> doc_vector, std::uint64_t seed);

bool all_finite(const EmbeddingModel& model) noexcept;

inline constexpr std::string_view kEmbeddingFormatVersion = "claimvec-embedding/1";

void save_model(const EmbeddingModel& model, std::ostream& out);
void save_model(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_model(std::istream& in);
EmbeddingModel load_model(const std::filesystem::path& path);

/// word2vec text format: "N dim", then "doc:<patient_id> v..." and "word:<code> v..." rows.
void export_vectors(const EmbeddingModel& model, std::ostream& out);

template <class T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw Error("cosine_similarity: dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * double(b[i]);
        na += double(a[i]) * double(a[i]);
        nb += double(b[i]) * double(b[i]);
    }
    if (na == 0.0 || nb == 0.0) throw Error("cosine_similarity: zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace claimvec
