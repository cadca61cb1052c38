#include "claimvec/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "claimvec/error.hpp"
#include "claimvec/io.hpp"
#include "json.hpp"

namespace claimvec {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad_left(std::string s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }
std::string pad_right(std::string s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

// Undefined cells are rendered with this marker.
constexpr std::string_view kUndefined = "\xE2\x80\x94";

std::string learner_label(const std::string& learner) {
    if (learner == "ridge") return "RIDGE";
    if (learner == "gbt") return "GBT";
    return learner;
}

std::string representation_label(const std::string& rep) {
    if (rep == "baseline1") return "Baseline Model 1";
    if (rep == "embedding") return "Embeddings-based Model";
    if (rep == "demographics") return "Demographics only";
    return rep;
}

}  // namespace

EvaluationReport evaluate_predictions(std::string representation, std::string learner,
                                      std::span<const double> y_test, std::span<const double> yhat_test,
                                      std::span<const double> pr_actual, std::span<const double> pr_predicted,
                                      std::span<const Demographic> pr_groups, std::string pr_population) {
    if (y_test.empty()) throw Error("evaluate: empty test set");
    EvaluationReport r;
    r.representation = std::move(representation);
    r.learner = std::move(learner);
    r.r2 = r_squared(y_test, yhat_test);
    r.mae = mae(y_test, yhat_test);
    r.n_test = y_test.size();
    r.pr_population = std::move(pr_population);
    r.n_pr = pr_actual.size();
    r.predictive_ratios = predictive_ratios(pr_predicted, pr_actual, pr_groups);
    return r;
}

EvaluationReport evaluate(std::string representation, std::string learner, const FittedModel& model,
                          const DesignMatrix& X_test, std::span<const double> y_test,
                          const DesignMatrix& X_pr, std::span<const double> y_pr,
                          std::span<const Demographic> pr_groups, std::string pr_population) {
    if (X_test.rows() == 0 || y_test.empty()) throw Error("evaluate: empty test set");
    const auto yhat = predict(model, X_test);
    const auto pr_hat = predict(model, X_pr);
    auto r = evaluate_predictions(std::move(representation), std::move(learner), y_test, yhat, y_pr, pr_hat,
                                  pr_groups, std::move(pr_population));
    if (const auto* ridge = std::get_if<RidgeModel>(&model))
        r.config_json = ordered_json{{"lambda", ridge->lambda}}.dump();
    else {
        const auto& p = std::get<GbtModel>(model).params;
        r.config_json = ordered_json{{"max_depth", p.max_depth},
                                     {"n_rounds", p.n_rounds},
                                     {"learning_rate", p.learning_rate},
                                     {"min_samples_leaf", p.min_samples_leaf},
                                     {"n_bins", p.n_bins}}
                            .dump();
    }
    return r;
}

// ---------------------------------------------------------------- grid search

std::vector<GridPoint> full_grid() {
    std::vector<GridPoint> g;
    for (auto m : {ParagraphModel::PV_DBOW, ParagraphModel::PV_DM})
        for (std::size_t dim : {100, 200, 300})
            for (std::size_t window : {10, 15, 20}) g.push_back({m, dim, window});
    return g;
}

std::optional<std::size_t> select_best(std::span<const GridEntry> entries) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.failed()) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& b = entries[*best];
        if (*e.cv_r2 > *b.cv_r2 || (*e.cv_r2 == *b.cv_r2 && e.point < b.point)) best = i;
    }
    return best;
}

DesignMatrix embedding_design(const EmbeddingModel& model, std::span<const std::string> ids) {
    const std::size_t dim = model.config.dim;
    std::vector<std::string> names;
    char buf[32];
    for (std::size_t k = 0; k < dim; ++k) {
        std::snprintf(buf, sizeof buf, "emb_%03zu", k);
        names.emplace_back(buf);
    }
    Eigen::MatrixXd V(Eigen::Index(ids.size()), Eigen::Index(dim));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto row = model.find_doc(ids[i]);
        if (!row) throw Error("embedding_design: no document vector for patient " + ids[i]);
        const auto v = model.doc_vectors.row(*row);
        for (std::size_t k = 0; k < dim; ++k) V(Eigen::Index(i), Eigen::Index(k)) = double(v[k]);
    }
    return DesignMatrix(std::move(names), std::move(V));
}

GridResult run_grid(const Cohort& cohort, std::span<const RiskLabel> labels, std::span<const GridPoint> grid,
                    std::span<const std::string> train_ids, const GridOptions& opts) {
    if (grid.empty()) throw ConfigError("run_grid: empty grid");
    std::unordered_map<std::string, double> score;
    for (const auto& l : labels) score.emplace(l.patient_id, l.risk_score);
    std::vector<double> y;
    y.reserve(train_ids.size());
    for (const auto& id : train_ids) {
        auto it = score.find(id);
        if (it == score.end()) throw Error("run_grid: no label for training patient " + id);
        y.push_back(it->second);
    }
    const auto vocab = build_vocab(cohort, opts.vocab);
    std::vector<std::string> doc_ids;
    for (const auto& d : cohort.documents) doc_ids.push_back(d.patient_id);

    GridResult result;
    result.entries.resize(grid.size());
    auto run_one = [&](std::size_t i) {
        auto& e = result.entries[i];
        e.point = grid[i];
        try {
            EmbedConfig cfg = opts.base;
            cfg.model = grid[i].model;
            cfg.dim = grid[i].dim;
            cfg.window = grid[i].window;
            auto model = init_model(cfg, vocab, doc_ids);
            train(model, cohort);
            if (!all_finite(model)) throw Error("training produced non-finite values");
            const auto X = embedding_design(model, train_ids);
            const auto cv = cv_select_lambda(X, y, opts.lambda_grid, opts.k_folds, opts.cv_seed);
            e.cv_r2 = cv.best_score;
            e.best_lambda = cv.best_lambda;
        } catch (const std::exception& ex) {
            e.cv_r2.reset();
            e.error = ex.what();
        }
    };

    const std::size_t n_threads = std::clamp<std::size_t>(opts.concurrency, 1, grid.size());
    if (n_threads == 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            run_one(i);
            if (opts.on_entry) opts.on_entry(result.entries[i]);
        }
    } else {
        std::atomic<std::size_t> next{0};
        {
            std::vector<std::jthread> pool;
            for (std::size_t t = 0; t < n_threads; ++t)
                pool.emplace_back([&] {
                    for (std::size_t i; (i = next.fetch_add(1)) < grid.size();) run_one(i);
                });
        }
        if (opts.on_entry)
            for (const auto& e : result.entries) opts.on_entry(e);
    }
    result.best = select_best(result.entries);
    return result;
}

// ---------------------------------------------------------------- report

std::string report_to_json(const Report& report) {
    ordered_json j;
    j["format"] = "claimvec-report";
    j["version"] = kReportVersion;
    j["age_bands"] = std::vector<std::string>(kAgeBandLabels.begin(), kAgeBandLabels.end());
    ordered_json models = ordered_json::array();
    for (const auto& m : report.models) {
        ordered_json mj;
        mj["name"] = m.model_name();
        mj["representation"] = m.representation;
        mj["learner"] = m.learner;
        mj["r2"] = m.r2;
        mj["mae"] = m.mae;
        mj["n_test"] = m.n_test;
        mj["pr_population"] = m.pr_population;
        mj["n_pr"] = m.n_pr;
        mj["config"] = ordered_json::parse(m.config_json);
        ordered_json prs = ordered_json::array();
        for (const auto& g : m.predictive_ratios) {
            ordered_json gj;
            gj["sex"] = std::string(to_string(g.sex));
            gj["age_band"] = std::string(kAgeBandLabels[g.age_band]);
            gj["n"] = g.n;
            gj["pr"] = g.pr ? ordered_json(*g.pr) : ordered_json(nullptr);
            prs.push_back(std::move(gj));
        }
        mj["predictive_ratios"] = std::move(prs);
        models.push_back(std::move(mj));
    }
    j["models"] = std::move(models);
    if (report.grid) {
        ordered_json entries = ordered_json::array();
        for (const auto& e : report.grid->entries) {
            ordered_json ej;
            ej["model"] = std::string(to_string(e.point.model));
            ej["dim"] = e.point.dim;
            ej["window"] = e.point.window;
            ej["cv_r2"] = e.cv_r2 ? ordered_json(*e.cv_r2) : ordered_json(nullptr);
            ej["best_lambda"] = e.best_lambda;
            if (e.failed()) ej["error"] = e.error;
            entries.push_back(std::move(ej));
        }
        ordered_json g;
        g["entries"] = std::move(entries);
        g["best"] = report.grid->best ? ordered_json(*report.grid->best) : ordered_json(nullptr);
        j["grid"] = std::move(g);
    }
    return j.dump(2) + "\n";
}

Report report_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        if (j.at("format").get<std::string>() != "claimvec-report") throw FormatError("not a claimvec report");
        const int version = j.at("version").get<int>();
        if (version != kReportVersion)
            throw FormatError("report version " + std::to_string(version) + " does not match supported version " +
                              std::to_string(kReportVersion));
        Report r;
        for (const auto& mj : j.at("models")) {
            EvaluationReport m;
            m.representation = mj.at("representation").get<std::string>();
            m.learner = mj.at("learner").get<std::string>();
            m.r2 = mj.at("r2").get<double>();
            m.mae = mj.at("mae").get<double>();
            m.n_test = mj.at("n_test").get<std::size_t>();
            m.pr_population = mj.at("pr_population").get<std::string>();
            m.n_pr = mj.at("n_pr").get<std::size_t>();
            m.config_json = ordered_json(mj.at("config")).dump();
            for (const auto& gj : mj.at("predictive_ratios")) {
                GroupRatio g;
                const auto sex = parse_sex(gj.at("sex").get<std::string>());
                if (!sex) throw FormatError("report: bad sex " + gj.at("sex").dump());
                g.sex = *sex;
                const auto band = gj.at("age_band").get<std::string>();
                auto it = std::find(kAgeBandLabels.begin(), kAgeBandLabels.end(), band);
                if (it == kAgeBandLabels.end()) throw FormatError("report: unknown age band '" + band + "'");
                g.age_band = std::size_t(it - kAgeBandLabels.begin());
                g.n = gj.at("n").get<std::size_t>();
                if (!gj.at("pr").is_null()) g.pr = gj.at("pr").get<double>();
                m.predictive_ratios.push_back(g);
            }
            r.models.push_back(std::move(m));
        }
        if (j.contains("grid")) {
            GridResult g;
            for (const auto& ej : j.at("grid").at("entries")) {
                GridEntry e;
                const auto model = parse_paragraph_model(ej.at("model").get<std::string>());
                if (!model) throw FormatError("report: bad grid model " + ej.at("model").dump());
                e.point = {*model, ej.at("dim").get<std::size_t>(), ej.at("window").get<std::size_t>()};
                if (!ej.at("cv_r2").is_null()) e.cv_r2 = ej.at("cv_r2").get<double>();
                e.best_lambda = ej.at("best_lambda").get<double>();
                if (ej.contains("error")) e.error = ej.at("error").get<std::string>();
                g.entries.push_back(std::move(e));
            }
            if (!j.at("grid").at("best").is_null()) g.best = j.at("grid").at("best").get<std::size_t>();
            r.grid = std::move(g);
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("report json: ") + e.what());
    }
}

std::string render_text(const Report& report) {
    std::ostringstream out;

    out << "R^2 and MAE in the test set";
    if (!report.models.empty()) out << " (N = " << report.models.front().n_test << ")";
    out << "\n\n";
    out << pad_right("Model", 28) << pad_left("R^2", 8) << pad_left("MAE", 8) << "\n";
    std::vector<std::string> reps;
    for (const auto& m : report.models)
        if (std::find(reps.begin(), reps.end(), m.representation) == reps.end()) reps.push_back(m.representation);
    for (const auto& rep : reps) {
        out << representation_label(rep) << "\n";
        for (const auto& m : report.models) {
            if (m.representation != rep) continue;
            out << pad_right("   " + learner_label(m.learner), 28) << pad_left(fixed(m.r2, 2), 8)
                << pad_left(fixed(m.mae, 2), 8) << "\n";
        }
    }

    if (!report.models.empty()) {
        out << "\nPredictive ratios by age and sex (N = " << report.models.front().n_pr << ", population: "
            << report.models.front().pr_population << ")\n\n";
        std::vector<std::string> heads;
        std::size_t width = 8;
        for (const auto& m : report.models) {
            heads.push_back(m.model_name());
            width = std::max(width, m.model_name().size() + 2);
        }
        out << pad_right("Sex", 8) << pad_right("Age", 10) << pad_left("N", 8);
        for (const auto& h : heads) out << pad_left(h, width);
        out << "\n";
        for (auto sex : {Sex::Male, Sex::Female}) {
            for (std::size_t b = 0; b < kAgeBandCount; ++b) {
                std::optional<std::size_t> n;
                std::vector<std::string> cells;
                for (const auto& m : report.models) {
                    auto it = std::find_if(m.predictive_ratios.begin(), m.predictive_ratios.end(),
                                           [&](const GroupRatio& g) { return g.sex == sex && g.age_band == b; });
                    if (it == m.predictive_ratios.end()) {
                        cells.emplace_back(kUndefined);
                        continue;
                    }
                    if (!n) n = it->n;
                    cells.push_back(it->pr ? fixed(*it->pr, 3) : std::string(kUndefined));
                }
                if (!n) continue;
                out << pad_right(sex == Sex::Male ? "Male" : "Female", 8) << pad_right(std::string(kAgeBandLabels[b]), 10)
                    << pad_left(std::to_string(*n), 8);
                // The dash is three bytes but one column wide.
                for (const auto& c : cells) out << pad_left(c, c == kUndefined ? width + 2 : width);
                out << "\n";
            }
        }
    }

    if (report.grid) {
        out << "\nEmbedding grid search (mean CV R^2 on the training set)\n\n";
        out << pad_right("", 2) << pad_right("Model", 9) << pad_left("Dim", 5) << pad_left("Window", 8)
            << pad_left("CV R^2", 10) << pad_left("lambda", 10) << "\n";
        for (std::size_t i = 0; i < report.grid->entries.size(); ++i) {
            const auto& e = report.grid->entries[i];
            out << pad_right(report.grid->best == i ? "*" : "", 2) << pad_right(std::string(to_string(e.point.model)), 9)
                << pad_left(std::to_string(e.point.dim), 5) << pad_left(std::to_string(e.point.window), 8);
            if (e.failed())
                out << "  failed: " << e.error;
            else
                out << pad_left(fixed(*e.cv_r2, 4), 10) << pad_left(io::format_double(e.best_lambda), 10);
            out << "\n";
        }
    }
    return out.str();
}

}  // namespace claimvec
