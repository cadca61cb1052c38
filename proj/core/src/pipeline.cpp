#include "claimvec/pipeline.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "claimvec/error.hpp"
#include "claimvec/features.hpp"
#include "claimvec/io.hpp"
#include "json.hpp"

namespace claimvec {

namespace fs = std::filesystem;

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::string_view kCohortFile = "cohort.jsonl";
constexpr std::string_view kLabelsFile = "labels.csv";
constexpr std::string_view kSplitFile = "split.json";
constexpr std::string_view kGridFile = "grid.json";
constexpr std::string_view kVocabFile = "vocab.tsv";
constexpr std::string_view kEmbeddingFile = "embedding.bin";
constexpr std::string_view kEmbeddingFeaturesFile = "embedding_features.csv";
constexpr std::string_view kBaselineFeaturesFile = "baseline1_features.csv";
constexpr std::string_view kPredictionsFile = "predictions.csv";
constexpr std::string_view kReportFile = "report.json";
constexpr std::string_view kReportTextFile = "report.txt";
constexpr std::string_view kConfigFile = "config.json";

constexpr std::array<std::string_view, 2> kRepresentations = {"baseline1", "embedding"};
constexpr std::array<std::string_view, 2> kLearners = {"ridge", "gbt"};

std::string model_file(std::string_view rep, std::string_view learner) {
    return "model_" + std::string(rep) + "_" + std::string(learner) + ".json";
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

void say(const Logger& log, const std::string& msg) {
    if (log) log(msg);
}

// ---- artifacts

Cohort load_cohort(const PipelineConfig& c, const Workdir& wd) {
    wd.verify(std::string(kCohortFile));
    std::ifstream in(wd.path(kCohortFile), std::ios::binary);
    return read_cohort(in, c.base_year, c.target_year, wd.path(kCohortFile).string());
}

std::vector<RiskLabel> load_labels(const Workdir& wd) {
    wd.verify(std::string(kLabelsFile));
    std::ifstream in(wd.path(kLabelsFile), std::ios::binary);
    return read_labels_csv(in, wd.path(kLabelsFile).string());
}

Split load_split(const Workdir& wd) {
    wd.verify(std::string(kSplitFile));
    try {
        const auto j = json::parse(io::read_file(wd.path(kSplitFile)));
        return Split{j.at("train").get<std::vector<std::string>>(), j.at("test").get<std::vector<std::string>>()};
    } catch (const json::exception& e) {
        throw FormatError(std::string("split.json: ") + e.what());
    }
}

void write_matrix_csv(std::ostream& out, std::span<const std::string> ids, const DesignMatrix& X) {
    out << "patient_id";
    for (const auto& n : X.col_names()) out << ',' << n;
    out << '\n';
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        out << ids[std::size_t(i)];
        for (Eigen::Index j = 0; j < X.cols(); ++j) out << ',' << io::format_double(X.values()(i, j));
        out << '\n';
    }
}

/// Named matrix keyed by patient id.
struct Table {
    std::vector<std::string> ids;
    std::unordered_map<std::string, Eigen::Index> row_of;
    DesignMatrix X;

    DesignMatrix rows_for(std::span<const std::string> wanted) const {
        std::vector<Eigen::Index> rows;
        rows.reserve(wanted.size());
        for (const auto& id : wanted) {
            auto it = row_of.find(id);
            if (it == row_of.end()) throw Error("no feature row for patient " + id);
            rows.push_back(it->second);
        }
        return X.select_rows(rows);
    }
};

Table read_matrix_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string(), 1, "header", "empty file");
    const auto head = io::split(io::trim(line), ',');
    if (head.empty() || head[0] != "patient_id")
        throw ParseError(path.string(), 1, "header", "first column must be patient_id");
    std::vector<std::string> names(head.begin() + 1, head.end());
    std::vector<std::vector<double>> rows;
    Table t;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = io::trim(line);
        if (trimmed.empty()) continue;
        const auto cells = io::split(trimmed, ',');
        if (cells.size() != head.size())
            throw ParseError(path.string(), line_no, "row",
                             "expected " + std::to_string(head.size()) + " fields, got " + std::to_string(cells.size()));
        std::vector<double> r(names.size());
        for (std::size_t j = 0; j < names.size(); ++j)
            if (!io::parse_double(cells[j + 1], r[j]))
                throw ParseError(path.string(), line_no, names[j], "not a number: '" + std::string(cells[j + 1]) + "'");
        t.row_of.emplace(std::string(cells[0]), Eigen::Index(t.ids.size()));
        t.ids.emplace_back(cells[0]);
        rows.push_back(std::move(r));
    }
    Eigen::MatrixXd V(Eigen::Index(rows.size()), Eigen::Index(names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < names.size(); ++j) V(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
    t.X = DesignMatrix(std::move(names), std::move(V));
    return t;
}

Table load_table(const Workdir& wd, std::string_view artifact) {
    wd.verify(std::string(artifact));
    return read_matrix_csv(wd.path(artifact));
}

std::vector<double> label_values(const std::vector<RiskLabel>& labels, std::span<const std::string> ids) {
    std::unordered_map<std::string, double> by_id;
    for (const auto& l : labels) by_id.emplace(l.patient_id, l.risk_score);
    std::vector<double> y;
    y.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error("no label for patient " + id);
        y.push_back(it->second);
    }
    return y;
}

Cohort subset(const Cohort& cohort, std::span<const std::string> ids) {
    std::unordered_set<std::string> keep(ids.begin(), ids.end());
    Cohort out{cohort.base_year, cohort.target_year, {}};
    for (const auto& d : cohort.documents)
        if (keep.contains(d.patient_id)) out.documents.push_back(d);
    return out;
}

/// Cohort the embeddings train on: everyone, or only the training patients in holdout mode.
Cohort training_corpus(const PipelineConfig& c, const Cohort& cohort, const Split& split) {
    return c.holdout_infer ? subset(cohort, split.train) : cohort;
}

std::vector<double> read_external_scores(const fs::path& path, std::span<const std::string> ids) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open external scores " + path.string());
    std::unordered_map<std::string, double> scores;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = io::trim(line);
        if (t.empty() || (line_no == 1 && t.starts_with("patient_id"))) continue;
        const auto cells = io::split(t, ',');
        double v = 0.0;
        if (cells.size() != 2 || !io::parse_double(cells[1], v))
            throw ParseError(path.string(), line_no, "score", "expected patient_id,score");
        scores[std::string(cells[0])] = v;
    }
    std::vector<double> out;
    for (const auto& id : ids) {
        auto it = scores.find(id);
        if (it == scores.end()) throw Error("external scores have no row for patient " + id);
        out.push_back(it->second);
    }
    return out;
}

ParagraphModel parse_model_name(const std::string& s) {
    auto m = parse_paragraph_model(s);
    if (!m) throw ConfigError("unknown paragraph model '" + s + "'");
    return *m;
}

}  // namespace

// ---------------------------------------------------------------- config

PipelineConfig parse_pipeline_config(std::string_view text, const fs::path& base_dir) {
    PipelineConfig c;
    try {
        const auto j = json::parse(text);
        const auto& paths = j.at("paths");
        c.claims = resolve(base_dir, paths.at("claims").get<std::string>());
        c.members = resolve(base_dir, paths.at("members").get<std::string>());
        c.code_map = resolve(base_dir, paths.at("code_map").get<std::string>());
        c.workdir = resolve(base_dir, paths.at("workdir").get<std::string>());
        if (paths.contains("external_scores") && !paths.at("external_scores").is_null())
            c.external_scores = resolve(base_dir, paths.at("external_scores").get<std::string>());

        if (j.contains("years")) {
            c.base_year = j.at("years").value("base", c.base_year);
            c.target_year = j.at("years").value("target", c.target_year);
        }
        const auto& seeds = j.at("seeds");
        c.split_seed = seeds.at("split").get<std::uint64_t>();
        c.cv_seed = seeds.at("cv").get<std::uint64_t>();
        c.embed_seed = seeds.at("embed").get<std::uint64_t>();
        c.infer_seed = seeds.at("infer").get<std::uint64_t>();
        c.split_fraction = j.value("split_fraction", c.split_fraction);

        if (j.contains("vocab")) c.min_count = j.at("vocab").value("min_count", c.min_count);
        if (j.contains("labels") && j.at("labels").contains("cost_cap") && !j.at("labels").at("cost_cap").is_null())
            c.cost_cap = j.at("labels").at("cost_cap").get<double>();
        if (j.contains("embed")) c.embed = embed_config_from_json(j.at("embed").dump());
        c.embed.seed = c.embed_seed;

        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            c.grid_enabled = g.value("enabled", c.grid_enabled);
            c.grid_concurrency = g.value("concurrency", c.grid_concurrency);
            if (g.contains("models") || g.contains("dims") || g.contains("windows")) {
                std::vector<std::string> models = g.value("models", std::vector<std::string>{"PV_DBOW", "PV_DM"});
                auto dims = g.value("dims", std::vector<std::size_t>{100, 200, 300});
                auto windows = g.value("windows", std::vector<std::size_t>{10, 15, 20});
                c.grid.clear();
                for (const auto& m : models)
                    for (auto d : dims)
                        for (auto w : windows) c.grid.push_back({parse_model_name(m), d, w});
            }
        }
        if (j.contains("ridge")) {
            const auto& r = j.at("ridge");
            if (r.contains("lambda_grid")) c.lambda_grid = r.at("lambda_grid").get<std::vector<double>>();
            c.k_folds = r.value("k_folds", c.k_folds);
        }
        if (j.contains("gbt")) {
            const auto& g = j.at("gbt");
            c.gbt.max_depth = g.value("max_depth", c.gbt.max_depth);
            c.gbt.n_rounds = g.value("n_rounds", c.gbt.n_rounds);
            c.gbt.learning_rate = g.value("learning_rate", c.gbt.learning_rate);
            c.gbt.min_samples_leaf = g.value("min_samples_leaf", c.gbt.min_samples_leaf);
            c.gbt.n_bins = g.value("n_bins", c.gbt.n_bins);
        }
        if (j.contains("modes")) {
            const auto& m = j.at("modes");
            c.holdout_infer = m.value("holdout_infer", c.holdout_infer);
            c.pr_population = m.value("pr_population", c.pr_population);
            c.infer_epochs = m.value("infer_epochs", c.infer_epochs);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    auto c = parse_pipeline_config(io::read_file(path), path.parent_path());
    validate(c);
    return c;
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
    ordered_json j;
    j["paths"] = {{"claims", c.claims.string()},
                  {"members", c.members.string()},
                  {"code_map", c.code_map.string()},
                  {"workdir", c.workdir.string()}};
    if (c.external_scores) j["paths"]["external_scores"] = c.external_scores->string();
    j["years"] = {{"base", c.base_year}, {"target", c.target_year}};
    j["seeds"] = {{"split", c.split_seed}, {"cv", c.cv_seed}, {"embed", c.embed_seed}, {"infer", c.infer_seed}};
    j["split_fraction"] = c.split_fraction;
    j["vocab"] = {{"min_count", c.min_count}};
    j["labels"] = {{"cost_cap", c.cost_cap ? ordered_json(*c.cost_cap) : ordered_json(nullptr)}};
    j["embed"] = ordered_json::parse(embed_config_to_json(c.embed));
    ordered_json grid = ordered_json::array();
    for (const auto& p : c.grid)
        grid.push_back({{"model", std::string(to_string(p.model))}, {"dim", p.dim}, {"window", p.window}});
    j["grid"] = {{"enabled", c.grid_enabled}, {"concurrency", c.grid_concurrency}, {"points", grid}};
    j["ridge"] = {{"lambda_grid", c.lambda_grid}, {"k_folds", c.k_folds}};
    j["gbt"] = {{"max_depth", c.gbt.max_depth},
                {"n_rounds", c.gbt.n_rounds},
                {"learning_rate", c.gbt.learning_rate},
                {"min_samples_leaf", c.gbt.min_samples_leaf},
                {"n_bins", c.gbt.n_bins}};
    j["modes"] = {{"holdout_infer", c.holdout_infer},
                  {"pr_population", c.pr_population},
                  {"infer_epochs", c.infer_epochs}};
    return j.dump(2) + "\n";
}

void validate(const PipelineConfig& c) {
    for (const auto& [name, p] : {std::pair{"claims", c.claims}, {"members", c.members}, {"code_map", c.code_map}})
        if (!fs::exists(p)) throw ConfigError(std::string("paths.") + name + " does not exist: " + p.string());
    if (c.external_scores && !fs::exists(*c.external_scores))
        throw ConfigError("paths.external_scores does not exist: " + c.external_scores->string());
    if (c.workdir.empty()) throw ConfigError("paths.workdir must be set");
    if (c.target_year <= c.base_year) throw ConfigError("years.target must be after years.base");
    if (!(c.split_fraction > 0.0 && c.split_fraction < 1.0)) throw ConfigError("split_fraction must be in (0,1)");
    if (c.min_count < 1) throw ConfigError("vocab.min_count must be >= 1");
    if (c.cost_cap && !(*c.cost_cap > 0.0)) throw ConfigError("labels.cost_cap must be > 0");
    validate(c.embed);
    if (c.grid_enabled && c.grid.empty()) throw ConfigError("grid is enabled but has no points");
    if (c.grid_concurrency < 1) throw ConfigError("grid.concurrency must be >= 1");
    if (c.lambda_grid.empty()) throw ConfigError("ridge.lambda_grid must not be empty");
    for (double l : c.lambda_grid)
        if (!(l >= 0.0)) throw ConfigError("ridge.lambda_grid values must be >= 0");
    if (c.k_folds < 2) throw ConfigError("ridge.k_folds must be >= 2");
    validate(c.gbt);
    if (c.pr_population != "all" && c.pr_population != "test")
        throw ConfigError("modes.pr_population must be 'all' or 'test'");
    if (c.infer_epochs < 1) throw ConfigError("modes.infer_epochs must be >= 1");
}

// ---------------------------------------------------------------- workdir

Workdir::Workdir(fs::path root) : root_(std::move(root)) {
    if (!has_manifest()) return;
    try {
        const auto j = json::parse(io::read_file(root_ / "manifest.json"));
        if (j.at("format").get<std::string>() != "claimvec-manifest") throw FormatError("not a claimvec manifest");
        if (j.at("version").get<int>() != kManifestVersion)
            throw FormatError("manifest version " + std::to_string(j.at("version").get<int>()) +
                              " does not match supported version " + std::to_string(kManifestVersion));
        for (auto& [name, e] : j.at("artifacts").items())
            artifacts_[name] = ManifestEntry{e.at("sha256").get<std::string>(), e.at("stage").get<std::string>()};
    } catch (const json::exception& e) {
        throw FormatError("manifest.json: " + std::string(e.what()));
    }
}

bool Workdir::has_manifest() const { return fs::exists(root_ / "manifest.json"); }

void Workdir::record(const std::string& artifact, const std::string& stage) {
    artifacts_[artifact] = ManifestEntry{io::sha256_file(path(artifact)), stage};
    save();
}

void Workdir::save() const {
    ordered_json j;
    j["format"] = "claimvec-manifest";
    j["version"] = kManifestVersion;
    ordered_json arts = ordered_json::object();
    for (const auto& [name, e] : artifacts_) arts[name] = {{"sha256", e.sha256}, {"stage", e.stage}};
    j["artifacts"] = std::move(arts);
    fs::create_directories(root_);
    io::write_file_atomic(root_ / "manifest.json", j.dump(2) + "\n");
}

void Workdir::require(const std::string& artifact) const {
    if (!artifacts_.contains(artifact))
        throw Error("artifact " + artifact + " is not in the manifest of " + root_.string() + "; run its stage first");
}

void Workdir::verify(const std::string& artifact) const {
    require(artifact);
    const auto p = path(artifact);
    if (!fs::exists(p)) throw FormatError("artifact " + artifact + " is listed in the manifest but missing");
    const auto actual = io::sha256_file(p);
    if (actual != artifacts_.at(artifact).sha256)
        throw FormatError("artifact " + artifact + " hash mismatch: manifest " + artifacts_.at(artifact).sha256 +
                          ", file " + actual);
}

void Workdir::verify_all() const {
    for (const auto& [name, _] : artifacts_) verify(name);
}

// ---------------------------------------------------------------- stages

void stage_cohort(const PipelineConfig& c, Workdir& wd, const Logger& log) {
    const auto claims = parse_claims(c.claims);
    const auto members = parse_members(c.members);
    const auto cohort = build_cohort(claims, members, c.base_year, c.target_year);
    if (cohort.size() == 0) throw Error("no member meets the inclusion rules");
    fs::create_directories(wd.root());
    io::write_file_atomic(wd.path(kCohortFile), [&](std::ostream& out) { write_cohort(out, cohort); });
    wd.record(std::string(kCohortFile), "cohort");
    say(log, "cohort: " + std::to_string(claims.size()) + " claims, " + std::to_string(members.size()) +
                 " members, " + std::to_string(cohort.size()) + " patients included");
}

void stage_label(const PipelineConfig& c, Workdir& wd, const Logger& log) {
    const auto cohort = load_cohort(c, wd);
    const auto labels = compute_risk_labels(cohort, c.target_year, LabelOptions{c.cost_cap});
    std::vector<std::string> ids;
    for (const auto& d : cohort.documents) ids.push_back(d.patient_id);
    const auto split = split_train_test(ids, c.split_fraction, c.split_seed);
    io::write_file_atomic(wd.path(kLabelsFile), [&](std::ostream& out) { write_labels_csv(out, labels); });
    ordered_json sj;
    sj["fraction"] = c.split_fraction;
    sj["seed"] = c.split_seed;
    sj["train"] = split.train;
    sj["test"] = split.test;
    io::write_file_atomic(wd.path(kSplitFile), sj.dump() + "\n");
    wd.record(std::string(kLabelsFile), "label");
    wd.record(std::string(kSplitFile), "label");
    say(log, "label: " + std::to_string(labels.size()) + " labels, " + std::to_string(split.train.size()) +
                 " train / " + std::to_string(split.test.size()) + " test");
}

void stage_grid(const PipelineConfig& c, Workdir& wd, const Logger& log) {
    const auto cohort = load_cohort(c, wd);
    const auto labels = load_labels(wd);
    const auto split = load_split(wd);
    const auto corpus = training_corpus(c, cohort, split);
    GridOptions opts;
    opts.base = c.embed;
    opts.vocab.min_count = c.min_count;
    opts.lambda_grid = c.lambda_grid;
    opts.k_folds = c.k_folds;
    opts.cv_seed = c.cv_seed;
    opts.concurrency = c.grid_concurrency;
    opts.on_entry = [&](const GridEntry& e) {
        std::string msg = "grid: " + std::string(to_string(e.point.model)) + " dim=" + std::to_string(e.point.dim) +
                          " window=" + std::to_string(e.point.window);
        msg += e.failed() ? " failed: " + e.error : " cv_r2=" + io::format_double(*e.cv_r2);
        say(log, msg);
    };
    Report r;
    r.grid = run_grid(corpus, labels, c.grid, split.train, opts);
    if (!r.grid->best) throw Error("every grid entry failed");
    io::write_file_atomic(wd.path(kGridFile), report_to_json(r));
    wd.record(std::string(kGridFile), "grid");
}

EmbedConfig resolved_embed_config(const PipelineConfig& c, const Workdir& wd) {
    EmbedConfig cfg = c.embed;
    cfg.seed = c.embed_seed;
    if (!c.grid_enabled) return cfg;
    wd.verify(std::string(kGridFile));
    const auto r = report_from_json(io::read_file(wd.path(kGridFile)));
    if (!r.grid || !r.grid->best_entry()) throw Error("grid.json has no selected entry");
    const auto& p = r.grid->best_entry()->point;
    cfg.model = p.model;
    cfg.dim = p.dim;
    cfg.window = p.window;
    return cfg;
}

void stage_embed(const PipelineConfig& c, Workdir& wd, const Logger& log) {
    const auto cohort = load_cohort(c, wd);
    const auto split = load_split(wd);
    const auto corpus = training_corpus(c, cohort, split);
    const auto cfg = resolved_embed_config(c, wd);
    auto vocab = build_vocab(corpus, VocabOptions{c.min_count});
    std::vector<std::string> doc_ids;
    for (const auto& d : corpus.documents) doc_ids.push_back(d.patient_id);
    auto model = init_model(cfg, std::move(vocab), std::move(doc_ids));
    const auto stats = train(model, corpus);
    if (!all_finite(model)) throw Error("embedding training produced non-finite values");

    std::vector<std::string> all_ids;
    for (const auto& d : cohort.documents) all_ids.push_back(d.patient_id);
    DesignMatrix X;
    if (c.holdout_infer) {
        const auto base = embedding_design(model, split.train);
        Eigen::MatrixXd V(Eigen::Index(all_ids.size()), Eigen::Index(cfg.dim));
        std::unordered_map<std::string, Eigen::Index> train_row;
        for (std::size_t i = 0; i < split.train.size(); ++i) train_row.emplace(split.train[i], Eigen::Index(i));
        for (std::size_t i = 0; i < cohort.documents.size(); ++i) {
            const auto& d = cohort.documents[i];
            if (auto it = train_row.find(d.patient_id); it != train_row.end()) {
                V.row(Eigen::Index(i)) = base.values().row(it->second);
                continue;
            }
            const auto v = infer_doc_vector(model, d.tokens, InferOptions{c.infer_epochs, cfg.lr_start, c.infer_seed + i});
            for (std::size_t k = 0; k < cfg.dim; ++k) V(Eigen::Index(i), Eigen::Index(k)) = double(v[k]);
        }
        X = DesignMatrix(base.col_names(), std::move(V));
    } else {
        X = embedding_design(model, all_ids);
    }

    save_model(model, wd.path(kEmbeddingFile));
    io::write_file_atomic(wd.path(kVocabFile), [&](std::ostream& out) { write_vocab(out, model.vocab); });
    io::write_file_atomic(wd.path(kEmbeddingFeaturesFile), [&](std::ostream& out) { write_matrix_csv(out, all_ids, X); });
    wd.record(std::string(kEmbeddingFile), "embed");
    wd.record(std::string(kVocabFile), "embed");
    wd.record(std::string(kEmbeddingFeaturesFile), "embed");
    say(log, "embed: " + std::string(to_string(cfg.model)) + " dim=" + std::to_string(cfg.dim) +
                 " window=" + std::to_string(cfg.window) + ", vocabulary " + std::to_string(model.vocab.size()) +
                 ", final epoch loss " +
                 (stats.epoch_mean_loss.empty() ? std::string("n/a") : io::format_double(stats.epoch_mean_loss.back())));
}

void stage_featurize(const PipelineConfig& c, Workdir& wd, const Logger& log) {
    const auto cohort = load_cohort(c, wd);
    const auto code_map = load_code_set_map(c.code_map);
    const auto rows = extract_features(cohort, code_map);
    io::write_file_atomic(wd.path(kBaselineFeaturesFile), [&](std::ostream& out) { write_features_csv(out, rows); });
    wd.record(std::string(kBaselineFeaturesFile), "featurize");
    say(log, "featurize: " + std::to_string(rows.size()) + " rows x " + std::to_string(kFeatureCount) + " features");
}

void stage_fit(const PipelineConfig& c, Workdir& wd, const Logger& log) {
    const auto labels = load_labels(wd);
    const auto split = load_split(wd);
    const auto y = label_values(labels, split.train);
    for (auto rep : kRepresentations) {
        const auto table =
            load_table(wd, rep == "baseline1" ? kBaselineFeaturesFile : kEmbeddingFeaturesFile);
        const auto X = table.rows_for(split.train);
        const auto cv = cv_select_lambda(X, y, c.lambda_grid, c.k_folds, c.cv_seed);
        const FittedModel ridge = fit_ridge(X, y, cv.best_lambda);
        const FittedModel gbt = fit_gbt(X, y, c.gbt);
        for (auto learner : kLearners) {
            const auto name = model_file(rep, learner);
            io::write_file_atomic(wd.path(name), model_to_json(learner == "ridge" ? ridge : gbt) + "\n");
            wd.record(name, "fit");
        }
        say(log, "fit: " + std::string(rep) + " ridge lambda=" + io::format_double(cv.best_lambda) + " (cv r2 " +
                     io::format_double(cv.best_score) + "), gbt " + std::to_string(c.gbt.n_rounds) + " rounds");
    }
}

void stage_evaluate(const PipelineConfig& c, Workdir& wd, const Logger& log) {
    const auto cohort = load_cohort(c, wd);
    const auto labels = load_labels(wd);
    const auto split = load_split(wd);

    std::vector<std::string> all_ids;
    std::unordered_map<std::string, Demographic> demo_of;
    for (const auto& d : cohort.documents) {
        all_ids.push_back(d.patient_id);
        demo_of.emplace(d.patient_id, Demographic{d.member.sex, c.base_year - d.member.birth_year});
    }
    const auto& pr_ids = c.pr_population == "test" ? split.test : all_ids;
    std::vector<Demographic> pr_groups;
    for (const auto& id : pr_ids) pr_groups.push_back(demo_of.at(id));
    const auto y_test = label_values(labels, split.test);
    const auto y_pr = label_values(labels, pr_ids);
    const auto embed_cfg = resolved_embed_config(c, wd);

    Report report;
    std::vector<std::pair<std::string, std::vector<double>>> pred_columns;
    for (auto rep : kRepresentations) {
        const auto table =
            load_table(wd, rep == "baseline1" ? kBaselineFeaturesFile : kEmbeddingFeaturesFile);
        const auto X_test = table.rows_for(split.test);
        const auto X_pr = table.rows_for(pr_ids);
        const auto X_all = table.rows_for(all_ids);
        for (auto learner : kLearners) {
            const auto name = model_file(rep, learner);
            wd.verify(name);
            const auto model = model_from_json(io::read_file(wd.path(name)));
            auto r = evaluate(std::string(rep), std::string(learner), model, X_test, y_test, X_pr, y_pr, pr_groups,
                              c.pr_population);
            ordered_json cfg;
            cfg["learner"] = ordered_json::parse(r.config_json);
            if (rep == "embedding") {
                auto ej = ordered_json::parse(embed_config_to_json(embed_cfg));
                ej["holdout_infer"] = c.holdout_infer;
                cfg["embedding"] = std::move(ej);
            }
            r.config_json = cfg.dump();
            report.models.push_back(std::move(r));
            pred_columns.emplace_back(std::string(rep) + "_" + std::string(learner), predict(model, X_all));
        }
    }
    if (c.external_scores) {
        const auto s_test = read_external_scores(*c.external_scores, split.test);
        const auto s_pr = read_external_scores(*c.external_scores, pr_ids);
        report.models.push_back(
            evaluate_predictions("external", "score", y_test, s_test, y_pr, s_pr, pr_groups, c.pr_population));
        pred_columns.emplace_back("external_score", read_external_scores(*c.external_scores, all_ids));
    }
    if (c.grid_enabled) {
        wd.verify(std::string(kGridFile));
        report.grid = report_from_json(io::read_file(wd.path(kGridFile))).grid;
    }

    std::unordered_set<std::string> test_set(split.test.begin(), split.test.end());
    const auto y_all = label_values(labels, all_ids);
    io::write_file_atomic(wd.path(kPredictionsFile), [&](std::ostream& out) {
        out << "patient_id,set,risk_score";
        for (const auto& [name, _] : pred_columns) out << ',' << name;
        out << '\n';
        for (std::size_t i = 0; i < all_ids.size(); ++i) {
            out << all_ids[i] << ',' << (test_set.contains(all_ids[i]) ? "test" : "train") << ','
                << io::format_double(y_all[i]);
            for (const auto& [_, p] : pred_columns) out << ',' << io::format_double(p[i]);
            out << '\n';
        }
    });
    io::write_file_atomic(wd.path(kReportFile), report_to_json(report));
    io::write_file_atomic(wd.path(kReportTextFile), render_text(report));
    wd.record(std::string(kPredictionsFile), "evaluate");
    wd.record(std::string(kReportFile), "evaluate");
    wd.record(std::string(kReportTextFile), "evaluate");
    for (const auto& m : report.models)
        say(log, "evaluate: " + m.model_name() + " r2=" + io::format_double(m.r2) + " mae=" + io::format_double(m.mae));
}

Report run_pipeline(const PipelineConfig& c, const Logger& log) {
    validate(c);
    fs::create_directories(c.workdir);
    Workdir wd(c.workdir);
    io::write_file_atomic(wd.path(kConfigFile), pipeline_config_to_json(c));
    wd.record(std::string(kConfigFile), "run");

    using Stage = void (*)(const PipelineConfig&, Workdir&, const Logger&);
    std::vector<std::pair<std::string, Stage>> stages = {{"cohort", stage_cohort}, {"label", stage_label}};
    if (c.grid_enabled) stages.emplace_back("grid", stage_grid);
    stages.emplace_back("embed", stage_embed);
    stages.emplace_back("featurize", stage_featurize);
    stages.emplace_back("fit", stage_fit);
    stages.emplace_back("evaluate", stage_evaluate);
    for (const auto& [name, fn] : stages) {
        try {
            fn(c, wd, log);
        } catch (const std::exception& e) {
            throw Error("stage " + name + ": " + e.what());
        }
    }
    return report_from_json(io::read_file(wd.path(kReportFile)));
}

Report load_report(const fs::path& workdir) {
    Workdir wd(workdir);
    if (!wd.has_manifest()) throw Error("no manifest.json in " + workdir.string());
    wd.verify_all();
    wd.verify(std::string(kReportFile));
    return report_from_json(io::read_file(wd.path(kReportFile)));
}

}  // namespace claimvec
