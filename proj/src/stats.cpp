// SPDX-License-Identifier: Apache-2.0

#include "clva/stats.hpp"

#include <algorithm>
#include <cmath>

namespace clva {

MeanStd population_stats(std::span<const double> xs) {
    if (xs.empty()) {
        return {};
    }
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    if (*lo == *hi) {
        return {*lo, 0.0};
    }
    const double n = static_cast<double>(xs.size());
    double sum = 0.0;
    for (double x : xs) {
        sum += x;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(ss / n)};
}

} // namespace clva
