#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "claimvec/claims.hpp"

namespace claimvec {

inline constexpr std::size_t kAgeBandCount = 21;

/// Band i covers ages (kAgeBandUpper[i-1], kAgeBandUpper[i]]; the last band is open ("84+").
inline constexpr std::array<int, kAgeBandCount> kAgeBandUpper = {
    1, 2, 4, 9, 14, 18, 20, 24, 29, 34, 39, 44, 49, 54, 59, 64, 69, 74, 79, 84, 1000};

inline constexpr std::array<std::string_view, kAgeBandCount> kAgeBandLabels = {
    "(0, 1]",   "(1, 2]",   "(2, 4]",   "(4, 9]",   "(9, 14]",  "(14, 18]", "(18, 20]",
    "(20, 24]", "(24, 29]", "(29, 34]", "(34, 39]", "(39, 44]", "(44, 49]", "(49, 54]",
    "(54, 59]", "(59, 64]", "(64, 69]", "(69, 74]", "(74, 79]", "(79, 84]", "84+"};

/// Ages 0 and 1 both land in the first band. Negative ages are a caller error.
constexpr std::size_t age_band_of(int age) noexcept {
    for (std::size_t i = 0; i + 1 < kAgeBandCount; ++i)
        if (age <= kAgeBandUpper[i]) return i;
    return kAgeBandCount - 1;
}

struct Demographic {
    Sex sex = Sex::Female;
    int age = 0;
};

}  // namespace claimvec
