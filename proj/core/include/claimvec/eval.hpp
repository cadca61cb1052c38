#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "claimvec/claims.hpp"
#include "claimvec/demographics.hpp"
#include "claimvec/embedder.hpp"
#include "claimvec/features.hpp"
#include "claimvec/metrics.hpp"
#include "claimvec/models.hpp"

namespace claimvec {

struct EvaluationReport {
    std::string representation;  // e.g. "baseline1", "embedding"
    std::string learner;         // "ridge" or "gbt"
    double r2 = 0.0;
    double mae = 0.0;
    std::size_t n_test = 0;
    std::string pr_population;  // "all" or "test"
    std::size_t n_pr = 0;
    std::vector<GroupRatio> predictive_ratios;
    std::string config_json = "{}";  // echo of the settings that produced the model

    std::string model_name() const { return representation + "/" + learner; }
};

/**
 * Scores one model. R^2 and MAE use the test rows; predictive ratios use the PR
 * population, which may be the test set itself or the whole cohort. Throws Error
 * when the test set is empty.
 */
EvaluationReport evaluate_predictions(std::string representation, std::string learner,
                                      std::span<const double> y_test, std::span<const double> yhat_test,
                                      std::span<const double> pr_actual, std::span<const double> pr_predicted,
                                      std::span<const Demographic> pr_groups, std::string pr_population = "all");

EvaluationReport evaluate(std::string representation, std::string learner, const FittedModel& model,
                          const DesignMatrix& X_test, std::span<const double> y_test,
                          const DesignMatrix& X_pr, std::span<const double> y_pr,
                          std::span<const Demographic> pr_groups, std::string pr_population = "all");

// ---------------------------------------------------------------- grid search

struct GridPoint {
    ParagraphModel model = ParagraphModel::PV_DBOW;
    std::size_t dim = 100;
    std::size_t window = 15;

    friend auto operator<=>(const GridPoint&, const GridPoint&) = default;
};

/// PV-DBOW and PV-DM over dims {100, 200, 300} and windows {10, 15, 20}: 18 points.
std::vector<GridPoint> full_grid();

struct GridEntry {
    GridPoint point;
    std::optional<double> cv_r2;  // empty when the entry failed
    double best_lambda = 0.0;
    std::string error;

    bool failed() const noexcept { return !cv_r2.has_value(); }
};

struct GridResult {
    std::vector<GridEntry> entries;
    std::optional<std::size_t> best;  // index into entries; empty when every entry failed

    const GridEntry* best_entry() const { return best ? &entries[*best] : nullptr; }
};

/// Highest cv_r2 among successful entries; ties go to the smallest (model, dim, window).
std::optional<std::size_t> select_best(std::span<const GridEntry> entries);

struct GridOptions {
    EmbedConfig base;  // model, dim and window are overwritten per entry
    VocabOptions vocab;
    std::vector<double> lambda_grid = default_lambda_grid();
    std::size_t k_folds = 5;
    std::uint64_t cv_seed = 1;
    std::size_t concurrency = 1;  // grid entries trained at once
    std::function<void(const GridEntry&)> on_entry;  // progress hook, called in entry order
};

/// Doc-vector design matrix for `ids` with columns emb_000, emb_001, ...
DesignMatrix embedding_design(const EmbeddingModel& model, std::span<const std::string> ids);

/**
 * Trains one embedding per grid point on the whole cohort, then scores it by k-fold
 * CV ridge R^2 over the training ids only. A point that throws is recorded as failed
 * and the search continues.
 */
GridResult run_grid(const Cohort& cohort, std::span<const RiskLabel> labels, std::span<const GridPoint> grid,
                    std::span<const std::string> train_ids, const GridOptions& opts);

// ---------------------------------------------------------------- report

inline constexpr int kReportVersion = 1;

struct Report {
    std::vector<EvaluationReport> models;
    std::optional<GridResult> grid;
};

std::string report_to_json(const Report& report);
Report report_from_json(std::string_view json_text);

/// Aligned-text R^2/MAE table, predictive-ratio table, and grid summary when present.
std::string render_text(const Report& report);

}  // namespace claimvec
