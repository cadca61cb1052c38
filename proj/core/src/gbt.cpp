#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "claimvec/error.hpp"
#include "claimvec/models.hpp"

namespace claimvec {

namespace {

/// Per-feature cut points: bin(x) is the first i with x <= edges[i], or edges.size().
struct Binning {
    std::vector<std::vector<double>> edges;
    std::vector<std::vector<std::uint16_t>> codes;  // [feature][row]
};

Binning make_bins(const Eigen::MatrixXd& V, std::size_t n_bins) {
    const Eigen::Index n = V.rows();
    Binning b;
    b.edges.resize(std::size_t(V.cols()));
    b.codes.resize(std::size_t(V.cols()));
    std::vector<double> sorted(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
        for (Eigen::Index i = 0; i < n; ++i) sorted[std::size_t(i)] = V(i, j);
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> distinct;
        std::unique_copy(sorted.begin(), sorted.end(), std::back_inserter(distinct));
        auto& e = b.edges[std::size_t(j)];
        if (distinct.size() <= n_bins) {
            for (std::size_t i = 0; i + 1 < distinct.size(); ++i) e.push_back(0.5 * (distinct[i] + distinct[i + 1]));
        } else {
            for (std::size_t q = 1; q < n_bins; ++q) {
                const double v = sorted[std::size_t(q * std::size_t(n) / n_bins)];
                if (v < distinct.back() && (e.empty() || v > e.back())) e.push_back(v);
            }
        }
        auto& codes = b.codes[std::size_t(j)];
        codes.resize(std::size_t(n));
        for (Eigen::Index i = 0; i < n; ++i)
            codes[std::size_t(i)] =
                std::uint16_t(std::lower_bound(e.begin(), e.end(), V(i, j)) - e.begin());
    }
    return b;
}

class TreeBuilder {
public:
    TreeBuilder(const Binning& bins, const GbtParams& params, std::span<const double> residual)
        : bins_(bins), params_(params), residual_(residual) {}

    /// Grows one tree and writes each row's leaf value into `leaf_out`.
    RegressionTree build(std::vector<std::uint32_t> rows, std::vector<double>& leaf_out) {
        RegressionTree tree;
        tree_ = &tree;
        leaf_out_ = &leaf_out;
        grow(std::move(rows), 0);
        return tree;
    }

private:
    int grow(std::vector<std::uint32_t> rows, int depth) {
        const int id = int(tree_->nodes.size());
        tree_->nodes.emplace_back();
        double sum = 0.0;
        for (auto r : rows) sum += residual_[r];
        const double n = double(rows.size());
        const auto msl = std::max<std::size_t>(1, params_.min_samples_leaf);

        int best_feature = -1;
        std::size_t best_bin = 0;
        double best_gain = 0.0;
        if (depth < params_.max_depth && rows.size() >= 2 * msl) {
            const double parent = sum * sum / n;
            std::vector<double> hsum;
            std::vector<std::size_t> hcnt;
            for (std::size_t f = 0; f < bins_.edges.size(); ++f) {
                const std::size_t nb = bins_.edges[f].size() + 1;
                if (nb < 2) continue;
                hsum.assign(nb, 0.0);
                hcnt.assign(nb, 0);
                const auto& codes = bins_.codes[f];
                for (auto r : rows) {
                    hsum[codes[r]] += residual_[r];
                    ++hcnt[codes[r]];
                }
                double sl = 0.0;
                std::size_t nl = 0;
                for (std::size_t b = 0; b + 1 < nb; ++b) {
                    sl += hsum[b];
                    nl += hcnt[b];
                    const std::size_t nr = rows.size() - nl;
                    if (nl < msl) continue;
                    if (nr < msl) break;
                    const double sr = sum - sl;
                    const double gain = sl * sl / double(nl) + sr * sr / double(nr) - parent;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feature = int(f);
                        best_bin = b;
                    }
                }
            }
            // Ignore splits whose gain is indistinguishable from rounding noise.
            if (best_gain <= 1e-12 * std::max(1.0, parent)) best_feature = -1;
        }

        if (best_feature < 0) {
            const double value = sum / n;
            tree_->nodes[std::size_t(id)].value = value;
            for (auto r : rows) (*leaf_out_)[r] = value;
            return id;
        }

        std::vector<std::uint32_t> left, right;
        const auto& codes = bins_.codes[std::size_t(best_feature)];
        for (auto r : rows) (codes[r] <= best_bin ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        const int l = grow(std::move(left), depth + 1);
        const int r = grow(std::move(right), depth + 1);
        auto& node = tree_->nodes[std::size_t(id)];
        node.feature = best_feature;
        node.threshold = bins_.edges[std::size_t(best_feature)][best_bin];
        node.left = l;
        node.right = r;
        return id;
    }

    const Binning& bins_;
    const GbtParams& params_;
    std::span<const double> residual_;
    RegressionTree* tree_ = nullptr;
    std::vector<double>* leaf_out_ = nullptr;
};

double mse(std::span<const double> y, std::span<const double> f) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - f[i]) * (y[i] - f[i]);
    return s / double(y.size());
}

}  // namespace

void validate(const GbtParams& p) {
    if (p.max_depth < 1) throw ConfigError("gbt.max_depth must be >= 1");
    if (p.n_rounds < 0) throw ConfigError("gbt.n_rounds must be >= 0");
    if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0)) throw ConfigError("gbt.learning_rate must be in (0,1]");
    if (p.min_samples_leaf < 1) throw ConfigError("gbt.min_samples_leaf must be >= 1");
    if (p.n_bins < 2 || p.n_bins > 65536) throw ConfigError("gbt.n_bins must be in [2, 65536]");
}

double RegressionTree::predict(std::span<const double> x) const noexcept {
    int i = 0;
    while (!nodes[std::size_t(i)].is_leaf()) {
        const auto& node = nodes[std::size_t(i)];
        i = x[std::size_t(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return nodes[std::size_t(i)].value;
}

int RegressionTree::depth() const noexcept {
    // Nodes are created parent-first, so one forward pass assigns depths.
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].is_leaf()) continue;
        d[std::size_t(nodes[i].left)] = d[std::size_t(nodes[i].right)] = d[i] + 1;
        deepest = std::max(deepest, d[i] + 1);
    }
    return deepest;
}

GbtModel fit_gbt(const DesignMatrix& X, std::span<const double> y, const GbtParams& params) {
    validate(params);
    const auto n = std::size_t(X.rows());
    if (y.size() != n) throw Error("fit_gbt: y length mismatch");
    if (n < 2) throw Error("fit_gbt: need at least 2 rows");
    if (n > std::size_t(UINT32_MAX)) throw Error("fit_gbt: too many rows");
    for (double v : y)
        if (!std::isfinite(v)) throw Error("fit_gbt: y contains NaN or Inf");

    GbtModel m;
    m.input_columns = X.col_names();
    m.params = params;
    m.learning_rate = params.learning_rate;
    m.base_prediction = std::accumulate(y.begin(), y.end(), 0.0) / double(n);

    const auto bins = make_bins(X.values(), params.n_bins);
    std::vector<double> fitted(n, m.base_prediction), residual(n), leaf(n);
    std::vector<std::uint32_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0u);
    m.train_mse.push_back(mse(y, fitted));

    for (int round = 0; round < params.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - fitted[i];
        TreeBuilder builder(bins, params, residual);
        auto tree = builder.build(all_rows, leaf);
        for (std::size_t i = 0; i < n; ++i) fitted[i] += params.learning_rate * leaf[i];
        m.trees.push_back(std::move(tree));
        m.train_mse.push_back(mse(y, fitted));
    }
    return m;
}

}  // namespace claimvec
