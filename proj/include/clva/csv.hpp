// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

namespace clva {

/// 9 significant digits, the precision used by every CSV this library writes.
std::string csv_number(double v);

/// As csv_number, with "nan" for an undefined value.
std::string csv_number(const std::optional<double>& v);

} // namespace clva
