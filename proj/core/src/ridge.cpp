#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "claimvec/error.hpp"
#include "claimvec/metrics.hpp"
#include "claimvec/models.hpp"

namespace claimvec {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> y) {
    return {y.data(), Eigen::Index(y.size())};
}

}  // namespace

RidgeModel fit_ridge(const DesignMatrix& X, std::span<const double> y, double lambda, const RidgeOptions& opts) {
    const Eigen::Index n = X.rows();
    if (Eigen::Index(y.size()) != n) throw Error("fit_ridge: y has " + std::to_string(y.size()) + " rows, X has " + std::to_string(n));
    if (n < 2) throw Error("fit_ridge: need at least 2 rows");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("fit_ridge: lambda must be finite and >= 0");
    const auto yv = as_vector(y);
    if (!yv.allFinite()) throw Error("fit_ridge: y contains NaN or Inf");

    RidgeModel m;
    m.input_columns = X.col_names();
    m.lambda = lambda;
    m.options = opts;
    const auto& V = X.values();

    std::vector<double> means, scales;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double mean = opts.fit_intercept ? V.col(j).mean() : 0.0;
        double scale = 1.0;
        if (opts.standardize) {
            const double var = (V.col(j).array() - V.col(j).mean()).square().mean();
            scale = std::sqrt(var);
            if (!(scale > 1e-12 * std::max(1.0, std::abs(V.col(j).mean())))) {
                m.dropped_columns.push_back(X.col_names()[std::size_t(j)]);
                continue;
            }
        }
        m.kept.push_back(j);
        means.push_back(mean);
        scales.push_back(scale);
    }
    const Eigen::Index k = Eigen::Index(m.kept.size());
    m.means = Eigen::Map<Eigen::VectorXd>(means.data(), k);
    m.scales = Eigen::Map<Eigen::VectorXd>(scales.data(), k);
    const double ybar = opts.fit_intercept ? yv.mean() : 0.0;
    m.intercept = ybar;
    if (k == 0) {
        m.coefficients = Eigen::VectorXd::Zero(0);
        return m;
    }

    Eigen::MatrixXd Z(n, k);
    for (Eigen::Index c = 0; c < k; ++c) Z.col(c) = (V.col(m.kept[std::size_t(c)]).array() - m.means(c)) / m.scales(c);
    const Eigen::VectorXd yc = yv.array() - ybar;

    Eigen::MatrixXd A(n + k, k);
    A.topRows(n) = Z;
    A.bottomRows(k) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(k, k);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + k);
    b.head(n) = yc;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < k)
        throw Error("fit_ridge: design is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                    std::to_string(k) + "); use lambda > 0");
    Eigen::VectorXd beta = qr.solve(b);

    const Eigen::MatrixXd G = Z.transpose() * Z + lambda * Eigen::MatrixXd::Identity(k, k);
    const Eigen::VectorXd rhs = Z.transpose() * yc;
    const double bound = 1e-8 * std::max(1.0, (Z.transpose() * yv).cwiseAbs().maxCoeff());
    Eigen::VectorXd residual = G * beta - rhs;
    if (residual.cwiseAbs().maxCoeff() > bound) {
        // One step of iterative refinement on the normal equations.
        beta -= G.ldlt().solve(residual);
        residual = G * beta - rhs;
        if (residual.cwiseAbs().maxCoeff() > bound)
            throw Error("fit_ridge: normal-equation residual " + std::to_string(residual.cwiseAbs().maxCoeff()) +
                        " exceeds " + std::to_string(bound));
    }
    if (!beta.allFinite()) throw Error("fit_ridge: non-finite coefficients");
    m.coefficients = std::move(beta);
    return m;
}

std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int i = 0; i < 13; ++i) grid.push_back(std::pow(10.0, -3.0 + 0.5 * i));
    return grid;
}

CvResult cv_select_lambda(const DesignMatrix& X, std::span<const double> y, std::span<const double> lambda_grid,
                          std::size_t k_folds, std::uint64_t seed, const RidgeOptions& opts) {
    if (lambda_grid.empty()) throw ConfigError("cv_select_lambda: empty lambda grid");
    if (k_folds < 2) throw ConfigError("cv_select_lambda: need k_folds >= 2");
    const auto n = std::size_t(X.rows());
    if (y.size() != n) throw Error("cv_select_lambda: y length mismatch");
    if (n / k_folds < 2)
        throw Error("cv_select_lambda: " + std::to_string(n) + " rows leave a fold with fewer than 2 samples");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<Eigen::Index>> fold_rows(k_folds);
    for (std::size_t i = 0; i < n; ++i) fold_rows[i % k_folds].push_back(Eigen::Index(order[i]));
    for (auto& f : fold_rows) std::sort(f.begin(), f.end());

    CvResult res;
    res.fold_scores.assign(lambda_grid.size(), std::vector<double>(k_folds));
    for (std::size_t f = 0; f < k_folds; ++f) {
        std::vector<Eigen::Index> train_rows;
        for (std::size_t g = 0; g < k_folds; ++g)
            if (g != f) train_rows.insert(train_rows.end(), fold_rows[g].begin(), fold_rows[g].end());
        std::sort(train_rows.begin(), train_rows.end());
        const auto Xtr = X.select_rows(train_rows);
        const auto Xva = X.select_rows(fold_rows[f]);
        std::vector<double> ytr, yva;
        for (auto r : train_rows) ytr.push_back(y[std::size_t(r)]);
        for (auto r : fold_rows[f]) yva.push_back(y[std::size_t(r)]);
        for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
            const auto model = fit_ridge(Xtr, ytr, lambda_grid[l], opts);
            res.fold_scores[l][f] = r_squared(yva, predict(model, Xva));
        }
    }
    res.mean_scores.resize(lambda_grid.size());
    bool have = false;
    for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
        const auto& s = res.fold_scores[l];
        res.mean_scores[l] = std::accumulate(s.begin(), s.end(), 0.0) / double(s.size());
        const double score = res.mean_scores[l];
        if (!have || score > res.best_score || (score == res.best_score && lambda_grid[l] > res.best_lambda)) {
            res.best_score = score;
            res.best_lambda = lambda_grid[l];
            have = true;
        }
    }
    return res;
}

}  // namespace claimvec
