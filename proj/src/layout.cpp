// SPDX-License-Identifier: Apache-2.0

#include "clva/layout.hpp"

#include "clva/errors.hpp"

#include <string>

namespace clva {

TokenLayout build_layout(std::size_t n_sys, std::size_t n_vis, std::size_t n_txt) {
    if (n_vis == 0) {
        throw LayoutError("layout: visual span must contain at least one token");
    }
    if (n_txt == 0) {
        throw LayoutError("layout: text span must contain at least one token");
    }
    TokenLayout layout;
    layout.sys_ = {0, n_sys};
    layout.vis_ = {n_sys, n_sys + n_vis};
    layout.txt_ = {n_sys + n_vis, n_sys + n_vis + n_txt};
    return layout;
}

} // namespace clva
