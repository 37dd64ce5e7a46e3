// SPDX-License-Identifier: Apache-2.0

#include "clva/csv.hpp"

#include <cstdio>

namespace clva {

std::string csv_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string csv_number(const std::optional<double>& v) {
    return v ? csv_number(*v) : std::string("nan");
}

} // namespace clva
