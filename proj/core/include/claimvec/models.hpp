#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace claimvec {

/// Named, finite N x P feature matrix.
class DesignMatrix {
public:
    DesignMatrix() = default;
    /// Throws Error on empty shape, name/width mismatch, duplicate names, or non-finite values.
    DesignMatrix(std::vector<std::string> col_names, Eigen::MatrixXd values);

    Eigen::Index rows() const noexcept { return values_.rows(); }
    Eigen::Index cols() const noexcept { return values_.cols(); }
    const std::vector<std::string>& col_names() const noexcept { return names_; }
    const Eigen::MatrixXd& values() const noexcept { return values_; }
    std::optional<Eigen::Index> column(std::string_view name) const;

    DesignMatrix select_rows(std::span<const Eigen::Index> rows) const;
    DesignMatrix select_columns(std::span<const std::string> names) const;

private:
    std::vector<std::string> names_;
    Eigen::MatrixXd values_;
};

// ---------------------------------------------------------------- ridge

struct RidgeOptions {
    bool fit_intercept = true;
    bool standardize = true;
};

struct RidgeModel {
    std::vector<std::string> input_columns;  // every fit-time column
    std::vector<std::string> dropped_columns;  // constant at fit time, ignored
    std::vector<Eigen::Index> kept;          // indices into input_columns
    Eigen::VectorXd means;                   // per kept column
    Eigen::VectorXd scales;                  // per kept column
    Eigen::VectorXd coefficients;            // standardized space
    double intercept = 0.0;
    double lambda = 0.0;
    RidgeOptions options;
};

/**
 * Ridge regression with an unpenalized intercept.
 *
 * Columns are centered and scaled to unit (population) standard deviation; constant
 * columns are dropped and listed in `dropped_columns`. The coefficients solve
 * (Z'Z + lambda I) b = Z'(y - ybar) through a column-pivoted QR of the stacked system
 * [Z; sqrt(lambda) I], and the normal-equation residual is checked against
 * 1e-8 * max(1, |Z'y|_inf). Throws Error for a rank-deficient design with lambda = 0.
 */
RidgeModel fit_ridge(const DesignMatrix& X, std::span<const double> y, double lambda, const RidgeOptions& opts = {});

/// 13 values log-spaced over [1e-3, 1e3].
std::vector<double> default_lambda_grid();

struct CvResult {
    double best_lambda = 0.0;
    double best_score = 0.0;
    std::vector<double> mean_scores;               // per grid value
    std::vector<std::vector<double>> fold_scores;  // [grid value][fold]
};

/// k-fold CV over `lambda_grid` by mean validation R^2. Ties go to the larger lambda.
CvResult cv_select_lambda(const DesignMatrix& X, std::span<const double> y, std::span<const double> lambda_grid,
                          std::size_t k_folds, std::uint64_t seed, const RidgeOptions& opts = {});

// ---------------------------------------------------------------- boosted trees

struct GbtParams {
    int max_depth = 6;
    int n_rounds = 200;
    double learning_rate = 0.1;
    std::size_t min_samples_leaf = 20;
    std::size_t n_bins = 256;
};

void validate(const GbtParams& params);

struct TreeNode {
    int feature = -1;  // index into input_columns; -1 marks a leaf
    double threshold = 0.0;  // go left when x <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output

    bool is_leaf() const noexcept { return feature < 0; }
};

/// Flat regression tree; node 0 is the root.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const noexcept;
    int depth() const noexcept;
};

struct GbtModel {
    std::vector<std::string> input_columns;
    double base_prediction = 0.0;
    double learning_rate = 0.1;
    GbtParams params;
    std::vector<RegressionTree> trees;
    std::vector<double> train_mse;  // [0] for the base prediction, then one entry per round
};

/**
 * Squared-loss gradient boosting over histogram splits.
 *
 * Every feature is cut into at most `n_bins` quantile bins once. Each round grows a
 * depth-limited tree on the current residuals, choosing splits by variance reduction
 * under `min_samples_leaf`, with leaf values equal to the mean residual.
 */
GbtModel fit_gbt(const DesignMatrix& X, std::span<const double> y, const GbtParams& params = {});

// ---------------------------------------------------------------- prediction / persistence

using FittedModel = std::variant<RidgeModel, GbtModel>;

/// Aligns X to the fit-time columns by name; throws Error listing missing and extra columns.
std::vector<double> predict(const RidgeModel& model, const DesignMatrix& X);
std::vector<double> predict(const GbtModel& model, const DesignMatrix& X);
std::vector<double> predict(const FittedModel& model, const DesignMatrix& X);

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(std::string_view json_text);

}  // namespace claimvec
