// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

namespace clva {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; ///< population standard deviation
};

/// Two-pass population mean and standard deviation. A constant input yields
/// exactly {value, 0}.
MeanStd population_stats(std::span<const double> xs);

} // namespace clva
