#include "claimvec/embedder.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

#include "claimvec/io.hpp"
#include "json.hpp"

namespace claimvec {

static_assert(std::endian::native == std::endian::little, "model files are written in little-endian byte order");

namespace {

Rng make_rng(std::uint64_t seed, std::uint32_t stream, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream, tag};
    return Rng(seq);
}

constexpr std::uint32_t kInitTag = 0x1a17;
constexpr std::uint32_t kTrainTag = 0x7a1b;
constexpr std::uint32_t kInferTag = 0x1bfe;

void fill_uniform(std::span<float> values, std::size_t dim, Rng& rng) {
    const float half = 0.5f / static_cast<float>(dim);
    std::uniform_real_distribution<float> dist(-half, half);
    for (auto& v : values) v = dist(rng);
}

std::size_t draw_window(const EmbedConfig& cfg, Rng& rng) {
    if (cfg.fixed_window) return cfg.window;
    return std::uniform_int_distribution<std::size_t>(1, cfg.window)(rng);
}

// Relaxed atomic access for lock-free shared training; plain access otherwise.
template <bool Shared>
struct Access {
    static float load(const float* p) noexcept {
        if constexpr (Shared)
            return std::atomic_ref<float>(*const_cast<float*>(p)).load(std::memory_order_relaxed);
        else
            return *p;
    }
    static void add(float* p, float v) noexcept {
        if constexpr (Shared) {
            std::atomic_ref<float> ref(*p);
            ref.store(ref.load(std::memory_order_relaxed) + v, std::memory_order_relaxed);
        } else {
            *p += v;
        }
    }
};

/// Negative-sampling SGD over the shared matrices. `word_out_w` is null when the output
/// matrix is frozen (inference, objective evaluation).
template <bool Shared>
class NsEngine {
public:
    using A = Access<Shared>;

    NsEngine(const EmbeddingModel& model, Matrix* word_out_w, Rng rng)
        : model_(model), out_w_(word_out_w), dim_(model.config.dim), k_(model.config.negatives),
          neu1e_(dim_), rng_(std::move(rng)) {}

    Rng& rng() noexcept { return rng_; }
    double loss_sum() const noexcept { return loss_; }
    std::uint64_t updates() const noexcept { return updates_; }
    void reset_loss() noexcept { loss_ = 0.0, updates_ = 0; }

    /// Scores `c` against the target and k noise tokens. Accumulates -lr * dL/dc into
    /// `neu1e()` and, unless frozen, applies -lr * dL/du to the touched output rows.
    void update(const float* c, TokenId target, float lr) {
        std::fill(neu1e_.begin(), neu1e_.end(), 0.0f);
        double loss = 0.0;
        for (std::size_t d = 0; d <= k_; ++d) {
            const TokenId w = d == 0 ? target : sample_negative(model_.vocab, rng_, target);
            const float* u = model_.word_out.data() + std::size_t(w) * dim_;
            float f = 0.0f;
            for (std::size_t i = 0; i < dim_; ++i) f += A::load(u + i) * c[i];
            const bool positive = d == 0;
            loss += detail::softplus(double(positive ? -f : f));
            const float g = (float(positive) - detail::sigmoid(f)) * lr;
            for (std::size_t i = 0; i < dim_; ++i) neu1e_[i] += g * A::load(u + i);
            if (out_w_ != nullptr && g != 0.0f) {
                float* uw = out_w_->data() + std::size_t(w) * dim_;
                for (std::size_t i = 0; i < dim_; ++i) A::add(uw + i, g * c[i]);
            }
        }
        loss_ += loss;
        ++updates_;
    }

    std::span<const float> neu1e() const noexcept { return neu1e_; }

private:
    const EmbeddingModel& model_;
    Matrix* out_w_;
    std::size_t dim_;
    std::size_t k_;
    std::vector<float> neu1e_;
    Rng rng_;
    double loss_ = 0.0;
    std::uint64_t updates_ = 0;
};

struct WorkerLoss {
    std::vector<double> sum;
    std::vector<std::uint64_t> count;
};

template <bool Shared>
void run_worker(EmbeddingModel& model, std::span<const std::vector<TokenId>> docs, std::size_t begin,
                std::size_t end, std::uint32_t worker, std::uint64_t planned, std::atomic<std::uint64_t>& processed,
                WorkerLoss& loss_out) {
    using A = Access<Shared>;
    const auto& cfg = model.config;
    const std::size_t dim = cfg.dim;
    NsEngine<Shared> engine(model, &model.word_out, make_rng(cfg.seed, worker, kTrainTag));
    auto& rng = engine.rng();
    std::vector<float> c(dim);
    std::vector<TokenId> seq;
    std::vector<std::size_t> ctx;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double total = double(model.vocab.total_count());
    loss_out.sum.assign(cfg.epochs, 0.0);
    loss_out.count.assign(cfg.epochs, 0);

    auto load_row = [&](const float* src, float* dst) {
        for (std::size_t i = 0; i < dim; ++i) dst[i] = A::load(src + i);
    };
    auto add_row = [&](float* dst, std::span<const float> delta, float scale) {
        for (std::size_t i = 0; i < dim; ++i) A::add(dst + i, delta[i] * scale);
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        engine.reset_loss();
        for (std::size_t d = begin; d < end; ++d) {
            const auto& doc = docs[d];
            if (doc.empty()) continue;
            seq.clear();
            if (cfg.subsample > 0.0) {
                for (auto w : doc) {
                    const double f = double(model.vocab.count(w)) / total;
                    const double keep = (std::sqrt(f / cfg.subsample) + 1.0) * cfg.subsample / f;
                    if (keep >= 1.0 || unit(rng) < keep) seq.push_back(w);
                }
            } else {
                seq.assign(doc.begin(), doc.end());
            }
            const std::uint64_t start = processed.fetch_add(doc.size(), std::memory_order_relaxed);
            float* doc_row = model.doc_vectors.data() + d * dim;

            for (std::size_t t = 0; t < seq.size(); ++t) {
                const double progress = std::min(1.0, double(start + t) / double(planned));
                const float lr = float(cfg.lr_start - (cfg.lr_start - cfg.lr_end) * progress);
                const TokenId target = seq[t];

                if (cfg.model == ParagraphModel::PV_DBOW) {
                    load_row(doc_row, c.data());
                    engine.update(c.data(), target, lr);
                    add_row(doc_row, engine.neu1e(), 1.0f);
                    if (cfg.joint_word_training) {
                        const std::size_t b = draw_window(cfg, rng);
                        const std::size_t lo = t >= b ? t - b : 0;
                        const std::size_t hi = std::min(seq.size() - 1, t + b);
                        for (std::size_t j = lo; j <= hi; ++j) {
                            if (j == t) continue;
                            float* in_row = model.word_in.data() + std::size_t(seq[j]) * dim;
                            load_row(in_row, c.data());
                            engine.update(c.data(), target, lr);
                            add_row(in_row, engine.neu1e(), 1.0f);
                        }
                    }
                } else {
                    const std::size_t b = draw_window(cfg, rng);
                    const std::size_t lo = t >= b ? t - b : 0;
                    const std::size_t hi = std::min(seq.size() - 1, t + b);
                    ctx.clear();
                    for (std::size_t j = lo; j <= hi; ++j)
                        if (j != t) ctx.push_back(j);
                    load_row(doc_row, c.data());
                    for (auto j : ctx) {
                        const float* in_row = model.word_in.data() + std::size_t(seq[j]) * dim;
                        for (std::size_t i = 0; i < dim; ++i) c[i] += A::load(in_row + i);
                    }
                    const float share = 1.0f / float(ctx.size() + 1);
                    for (auto& v : c) v *= share;
                    engine.update(c.data(), target, lr);
                    // dc/d(input) = 1/(n+1) for the document vector and each context row.
                    add_row(doc_row, engine.neu1e(), share);
                    for (auto j : ctx) add_row(model.word_in.data() + std::size_t(seq[j]) * dim, engine.neu1e(), share);
                }
            }
        }
        loss_out.sum[epoch] = engine.loss_sum();
        loss_out.count[epoch] = engine.updates();
    }
}

struct Writer {
    std::ostream& out;
    void bytes(const void* p, std::size_t n) { out.write(static_cast<const char*>(p), std::streamsize(n)); }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void str(std::string_view s) {
        u32(std::uint32_t(s.size()));
        bytes(s.data(), s.size());
    }
    void matrix(const Matrix& m) { bytes(m.data(), m.storage().size() * sizeof(float)); }
};

struct Reader {
    std::istream& in;
    void bytes(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), std::streamsize(n));
        if (std::size_t(in.gcount()) != n) throw FormatError("corrupt model file: truncated");
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, sizeof v);
        return v;
    }
    std::string str(std::size_t limit = std::size_t(1) << 30) {
        const auto n = u32();
        if (n > limit) throw FormatError("corrupt model file: string length " + std::to_string(n));
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    Matrix matrix(std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        bytes(m.data(), rows * cols * sizeof(float));
        return m;
    }
};

constexpr char kMagic[8] = {'C', 'L', 'M', 'V', 'E', 'M', 'B', '\0'};

}  // namespace

std::string_view to_string(ParagraphModel m) noexcept { return m == ParagraphModel::PV_DBOW ? "PV_DBOW" : "PV_DM"; }

std::optional<ParagraphModel> parse_paragraph_model(std::string_view s) noexcept {
    if (s == "PV_DBOW" || s == "pv_dbow" || s == "dbow") return ParagraphModel::PV_DBOW;
    if (s == "PV_DM" || s == "pv_dm" || s == "dm") return ParagraphModel::PV_DM;
    return std::nullopt;
}

void validate(const EmbedConfig& c) {
    if (c.dim < 1) throw ConfigError("embed.dim must be >= 1");
    if (c.window < 1) throw ConfigError("embed.window must be >= 1");
    if (c.negatives < 1) throw ConfigError("embed.negatives must be >= 1");
    if (c.workers < 1) throw ConfigError("embed.workers must be >= 1");
    if (!(c.lr_end >= 0.0) || !(c.lr_end <= c.lr_start)) throw ConfigError("embed: need 0 <= lr_end <= lr_start");
    if (!(c.subsample >= 0.0)) throw ConfigError("embed.subsample must be >= 0");
}

std::string embed_config_to_json(const EmbedConfig& c) {
    nlohmann::ordered_json j;
    j["model"] = std::string(to_string(c.model));
    j["dim"] = c.dim;
    j["window"] = c.window;
    j["negatives"] = c.negatives;
    j["epochs"] = c.epochs;
    j["lr_start"] = c.lr_start;
    j["lr_end"] = c.lr_end;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["dm_combine"] = "mean";
    j["joint_word_training"] = c.joint_word_training;
    j["fixed_window"] = c.fixed_window;
    j["subsample"] = c.subsample;
    return j.dump();
}

EmbedConfig embed_config_from_json(std::string_view text) {
    EmbedConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.contains("model")) {
            auto m = parse_paragraph_model(j.at("model").get<std::string>());
            if (!m) throw ConfigError("embed.model must be PV_DBOW or PV_DM");
            c.model = *m;
        }
        if (j.value("dm_combine", std::string("mean")) != "mean") throw ConfigError("embed.dm_combine supports only 'mean'");
        c.dim = j.value("dim", c.dim);
        c.window = j.value("window", c.window);
        c.negatives = j.value("negatives", c.negatives);
        c.epochs = j.value("epochs", c.epochs);
        c.lr_start = j.value("lr_start", c.lr_start);
        c.lr_end = j.value("lr_end", c.lr_end);
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        c.joint_word_training = j.value("joint_word_training", c.joint_word_training);
        c.fixed_window = j.value("fixed_window", c.fixed_window);
        c.subsample = j.value("subsample", c.subsample);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("embed config: ") + e.what());
    }
    validate(c);
    return c;
}

EmbeddingModel init_model(const EmbedConfig& config, Vocabulary vocab, std::vector<std::string> doc_ids) {
    validate(config);
    if (vocab.size() == 0) throw Error("init_model: empty vocabulary");
    EmbeddingModel m;
    m.config = config;
    m.vocab = std::move(vocab);
    m.doc_ids = std::move(doc_ids);
    for (std::size_t i = 0; i < m.doc_ids.size(); ++i)
        if (!m.doc_index.emplace(m.doc_ids[i], i).second) throw Error("init_model: duplicate document id " + m.doc_ids[i]);
    const std::size_t dim = config.dim;
    m.doc_vectors = Matrix(m.doc_ids.size(), dim);
    m.word_in = Matrix(m.vocab.size(), dim);
    m.word_out = Matrix(m.vocab.size(), dim, 0.0f);
    auto rng = make_rng(config.seed, 0, kInitTag);
    fill_uniform(m.doc_vectors.storage(), dim, rng);
    fill_uniform(m.word_in.storage(), dim, rng);
    return m;
}

TrainStats train(EmbeddingModel& model, std::span<const std::vector<TokenId>> documents) {
    const auto& cfg = model.config;
    validate(cfg);
    if (documents.size() != model.doc_vectors.rows())
        throw Error("train: " + std::to_string(documents.size()) + " documents for " +
                    std::to_string(model.doc_vectors.rows()) + " document vectors");
    TrainStats stats;
    std::uint64_t per_epoch = 0;
    for (const auto& d : documents) {
        if (d.empty()) ++stats.skipped_documents;
        per_epoch += d.size();
        for (auto w : d)
            if (w >= model.vocab.size()) throw Error("train: token id out of vocabulary range");
    }
    if (cfg.epochs == 0 || per_epoch == 0) {
        stats.epoch_mean_loss.assign(cfg.epochs, 0.0);
        return stats;
    }
    if (model.vocab.size() < 2) throw Error("train: negative sampling needs at least 2 vocabulary tokens");

    const std::uint64_t planned = per_epoch * cfg.epochs;
    std::atomic<std::uint64_t> processed{0};
    const std::size_t workers = std::min<std::size_t>(cfg.workers, documents.size());
    std::vector<WorkerLoss> losses(workers);
    if (workers <= 1) {
        run_worker<false>(model, documents, 0, documents.size(), 0, planned, processed, losses[0]);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (documents.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t b = w * chunk, e = std::min(documents.size(), b + chunk);
            pool.emplace_back([&, w, b, e] {
                run_worker<true>(model, documents, b, e, std::uint32_t(w), planned, processed, losses[w]);
            });
        }
    }
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        double sum = 0;
        std::uint64_t n = 0;
        for (const auto& l : losses) sum += l.sum[e], n += l.count[e];
        stats.epoch_mean_loss.push_back(n ? sum / double(n) : 0.0);
        stats.updates += n;
    }
    return stats;
}

TrainStats train(EmbeddingModel& model, const Cohort& cohort) {
    if (cohort.documents.size() != model.doc_ids.size()) throw Error("train: cohort size does not match model documents");
    std::vector<std::vector<TokenId>> docs;
    docs.reserve(cohort.documents.size());
    for (std::size_t i = 0; i < cohort.documents.size(); ++i) {
        if (cohort.documents[i].patient_id != model.doc_ids[i])
            throw Error("train: document " + std::to_string(i) + " is " + cohort.documents[i].patient_id +
                        ", model expects " + model.doc_ids[i]);
        docs.push_back(model.vocab.encode(cohort.documents[i].tokens));
    }
    return train(model, docs);
}

namespace {

// Shared by inference and objective evaluation: one pass over `ids` that updates only
// `vec` (scaled by `lr`), returns the mean loss.
double frozen_pass(const EmbeddingModel& model, std::span<const TokenId> ids, std::span<float> vec,
                   NsEngine<false>& engine, double lr_begin, double lr_stop, std::uint64_t offset,
                   std::uint64_t planned) {
    const auto& cfg = model.config;
    const std::size_t dim = cfg.dim;
    std::vector<float> c(dim);
    engine.reset_loss();
    for (std::size_t t = 0; t < ids.size(); ++t) {
        const double progress = planned ? std::min(1.0, double(offset + t) / double(planned)) : 0.0;
        const float lr = float(lr_begin - (lr_begin - lr_stop) * progress);
        if (cfg.model == ParagraphModel::PV_DBOW) {
            std::copy(vec.begin(), vec.end(), c.begin());
            engine.update(c.data(), ids[t], lr);
            for (std::size_t i = 0; i < dim; ++i) vec[i] += engine.neu1e()[i];
        } else {
            const std::size_t b = draw_window(cfg, engine.rng());
            const std::size_t lo = t >= b ? t - b : 0;
            const std::size_t hi = std::min(ids.size() - 1, t + b);
            std::copy(vec.begin(), vec.end(), c.begin());
            std::size_t n = 0;
            for (std::size_t j = lo; j <= hi; ++j) {
                if (j == t) continue;
                auto row = model.word_in.row(ids[j]);
                for (std::size_t i = 0; i < dim; ++i) c[i] += row[i];
                ++n;
            }
            const float share = 1.0f / float(n + 1);
            for (auto& v : c) v *= share;
            engine.update(c.data(), ids[t], lr);
            for (std::size_t i = 0; i < dim; ++i) vec[i] += engine.neu1e()[i] * share;
        }
    }
    return engine.updates() ? engine.loss_sum() / double(engine.updates()) : 0.0;
}

}  // namespace

std::vector<float> infer_doc_vector(const EmbeddingModel& model, std::span<const std::string> tokens,
                                    const InferOptions& opts) {
    const auto ids = model.vocab.encode(tokens);
    if (ids.empty()) throw Error("infer_doc_vector: document has no in-vocabulary tokens");
    if (model.vocab.size() < 2) throw Error("infer_doc_vector: negative sampling needs at least 2 vocabulary tokens");
    auto rng = make_rng(opts.seed, 0, kInferTag);
    std::vector<float> vec(model.config.dim);
    fill_uniform(vec, model.config.dim, rng);
    NsEngine<false> engine(model, nullptr, std::move(rng));
    const double lr_stop = std::min(opts.lr, model.config.lr_end);
    const std::uint64_t planned = std::uint64_t(ids.size()) * opts.epochs;
    for (std::size_t e = 0; e < opts.epochs; ++e)
        frozen_pass(model, ids, vec, engine, opts.lr, lr_stop, e * ids.size(), planned);
    return vec;
}

double document_objective(const EmbeddingModel& model, std::span<const TokenId> tokens,
                          std::span<const float> doc_vector, std::uint64_t seed) {
    if (tokens.empty()) throw Error("document_objective: empty document");
    if (doc_vector.size() != model.config.dim) throw Error("document_objective: dimension mismatch");
    std::vector<float> vec(doc_vector.begin(), doc_vector.end());
    NsEngine<false> engine(model, nullptr, make_rng(seed, 1, kInferTag));
    return frozen_pass(model, tokens, vec, engine, 0.0, 0.0, 0, 0);
}

bool all_finite(const EmbeddingModel& model) noexcept {
    auto finite = [](const Matrix& m) {
        return std::all_of(m.storage().begin(), m.storage().end(), [](float v) { return std::isfinite(v); });
    };
    return finite(model.doc_vectors) && finite(model.word_in) && finite(model.word_out);
}

// Model file layout (little-endian):
//   magic[8] "CLMVEMB\0" | str version | str config-json |
//   u64 V | u64 min_count | f64 alpha | V x (str token, u64 count) |
//   u64 D | D x str doc_id | u64 dim |
//   f32 doc_vectors[D*dim] | f32 word_in[V*dim] | f32 word_out[V*dim]
// where str is (u32 length, bytes).
void save_model(const EmbeddingModel& model, std::ostream& out) {
    Writer w{out};
    w.bytes(kMagic, sizeof kMagic);
    w.str(kEmbeddingFormatVersion);
    w.str(embed_config_to_json(model.config));
    w.u64(model.vocab.size());
    w.u64(model.vocab.min_count());
    w.f64(model.vocab.alpha());
    for (TokenId i = 0; i < model.vocab.size(); ++i) {
        w.str(model.vocab.token(i));
        w.u64(model.vocab.count(i));
    }
    w.u64(model.doc_ids.size());
    for (const auto& id : model.doc_ids) w.str(id);
    w.u64(model.config.dim);
    w.matrix(model.doc_vectors);
    w.matrix(model.word_in);
    w.matrix(model.word_out);
    if (!out) throw Error("save_model: write failed");
}

void save_model(const EmbeddingModel& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, [&](std::ostream& out) { save_model(model, out); });
}

EmbeddingModel load_model(std::istream& in) {
    Reader r{in};
    char magic[sizeof kMagic];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a claimvec embedding model file");
    const auto version = r.str(256);
    if (version != kEmbeddingFormatVersion)
        throw FormatError("model file version '" + version + "' does not match supported version '" +
                          std::string(kEmbeddingFormatVersion) + "'");
    EmbeddingModel m;
    m.config = embed_config_from_json(r.str());
    const auto v = r.u64();
    const auto min_count = r.u64();
    const double alpha = r.f64();
    if (v == 0 || v > (std::uint64_t(1) << 31)) throw FormatError("corrupt model file: vocabulary size " + std::to_string(v));
    std::vector<std::pair<std::string, std::uint64_t>> entries;
    entries.reserve(v);
    for (std::uint64_t i = 0; i < v; ++i) {
        auto tok = r.str(1 << 16);
        entries.emplace_back(std::move(tok), r.u64());
    }
    m.vocab = Vocabulary(std::move(entries), min_count, alpha);
    const auto d = r.u64();
    if (d > (std::uint64_t(1) << 31)) throw FormatError("corrupt model file: document count " + std::to_string(d));
    m.doc_ids.reserve(d);
    for (std::uint64_t i = 0; i < d; ++i) m.doc_ids.push_back(r.str(1 << 16));
    for (std::size_t i = 0; i < m.doc_ids.size(); ++i) m.doc_index.emplace(m.doc_ids[i], i);
    const auto dim = r.u64();
    if (dim != m.config.dim) throw FormatError("corrupt model file: dimension does not match config");
    m.doc_vectors = r.matrix(d, dim);
    m.word_in = r.matrix(v, dim);
    m.word_out = r.matrix(v, dim);
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("corrupt model file: trailing bytes");
    return m;
}

EmbeddingModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model file " + path.string());
    return load_model(in);
}

void export_vectors(const EmbeddingModel& model, std::ostream& out) {
    const auto& words = model.word_vectors();
    out << (model.doc_ids.size() + model.vocab.size()) << ' ' << model.config.dim << '\n';
    auto row = [&](const std::string& id, std::span<const float> v) {
        out << id;
        for (float x : v) out << ' ' << io::format_float(x);
        out << '\n';
    };
    for (std::size_t i = 0; i < model.doc_ids.size(); ++i) row("doc:" + model.doc_ids[i], model.doc_vectors.row(i));
    for (TokenId i = 0; i < model.vocab.size(); ++i) row("word:" + model.vocab.token(i), words.row(i));
}

}  // namespace claimvec
