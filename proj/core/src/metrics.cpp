#include "claimvec/metrics.hpp"

#include <array>
#include <cmath>
#include <string>

#include "claimvec/error.hpp"

namespace claimvec {

double r_squared(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw Error("r_squared: length mismatch");
    if (y.size() < 2) throw Error("r_squared: need at least 2 observations");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= double(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y[i] - yhat[i];
        const double d = y[i] - mean;
        ss_res += e * e;
        ss_tot += d * d;
    }
    if (!(ss_tot > 0.0)) throw Error("r_squared: actual values have zero variance");
    return 1.0 - ss_res / ss_tot;
}

double mae(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw Error("mae: length mismatch");
    if (y.empty()) throw Error("mae: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(y[i] - yhat[i]);
    return sum / double(y.size());
}

std::vector<GroupRatio> predictive_ratios(std::span<const double> predicted, std::span<const double> actual,
                                          std::span<const Demographic> groups) {
    const std::size_t n = predicted.size();
    if (actual.size() != n || groups.size() != n) throw Error("predictive_ratios: length mismatch");
    if (n == 0) throw Error("predictive_ratios: empty input");
    double pred_total = 0.0, act_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) pred_total += predicted[i], act_total += actual[i];
    if (!(pred_total > 0.0) || !(act_total > 0.0))
        throw Error("predictive_ratios: population means of predicted and actual must be positive");
    const double pred_scale = double(n) / pred_total;
    const double act_scale = double(n) / act_total;

    struct Cell {
        std::size_t n = 0;
        double pred = 0.0;
        double act = 0.0;
    };
    std::array<std::array<Cell, kAgeBandCount>, 2> cells{};
    for (std::size_t i = 0; i < n; ++i) {
        if (groups[i].age < 0) throw Error("predictive_ratios: negative age " + std::to_string(groups[i].age));
        auto& c = cells[groups[i].sex == Sex::Male ? 0 : 1][age_band_of(groups[i].age)];
        ++c.n;
        c.pred += predicted[i] * pred_scale;
        c.act += actual[i] * act_scale;
    }
    std::vector<GroupRatio> out;
    for (int s = 0; s < 2; ++s) {
        for (std::size_t b = 0; b < kAgeBandCount; ++b) {
            const auto& c = cells[s][b];
            if (c.n == 0) continue;
            GroupRatio g;
            g.sex = s == 0 ? Sex::Male : Sex::Female;
            g.age_band = b;
            g.n = c.n;
            // Group sums share the 1/n factor, so the ratio of sums is the ratio of means.
            if (c.act != 0.0) g.pr = c.pred / c.act;
            out.push_back(g);
        }
    }
    return out;
}

}  // namespace claimvec
