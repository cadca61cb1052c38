#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "claimvec/demographics.hpp"

namespace claimvec {

/// 1 - SS_res / SS_tot. Throws Error when lengths differ, n < 2, or y is constant.
double r_squared(std::span<const double> y, std::span<const double> yhat);

/// Mean absolute error. Throws Error when lengths differ or the input is empty.
double mae(std::span<const double> y, std::span<const double> yhat);

struct GroupRatio {
    Sex sex = Sex::Male;
    std::size_t age_band = 0;
    std::size_t n = 0;
    std::optional<double> pr;  // empty when the group's mean actual is zero
};

/**
 * Predictive ratios by (sex, age band).
 *
 * Predicted and actual values are first rescaled to mean 1.0 over the whole input;
 * pr(g) = mean rescaled prediction over g / mean rescaled actual over g. Only populated
 * cells are returned, males first, bands in ascending order.
 */
std::vector<GroupRatio> predictive_ratios(std::span<const double> predicted, std::span<const double> actual,
                                          std::span<const Demographic> groups);

}  // namespace claimvec
