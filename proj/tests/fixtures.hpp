// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/layout.hpp"
#include "clva/matrix.hpp"
#include "clva/profiler.hpp"
#include "clva/trace.hpp"

#include <initializer_list>
#include <vector>

namespace fixture {

using clva::Matrix;

/// Causal matrix with uniform rows.
inline Matrix uniform_causal(std::size_t s) {
    Matrix a(s, s);
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            a(i, j) = 1.0 / static_cast<double>(i + 1);
        }
    }
    return a;
}

/// uniform_causal with row `row` replaced.
inline Matrix with_row(Matrix a, std::size_t row, std::initializer_list<double> values) {
    std::size_t j = 0;
    for (double v : values) {
        a(row, j++) = v;
    }
    for (; j < a.cols(); ++j) {
        a(row, j) = 0.0;
    }
    return a;
}

inline clva::AttentionTrace single_layer(clva::TokenLayout lay, std::vector<Matrix> heads,
                                         std::vector<Matrix> values = {},
                                         std::size_t head_dim = 0) {
    const std::size_t h = heads.size();
    return clva::AttentionTrace(1, h, head_dim, lay, std::move(heads), std::move(values));
}

/// A profile with the given intensity rows and no trace behind it.
inline clva::HeadProfile profile_of(const std::vector<std::vector<double>>& phi) {
    clva::HeadProfile p;
    p.vis_intensity = Matrix(phi.size(), phi.front().size());
    p.prompt_intensity = Matrix(phi.size(), phi.front().size());
    for (std::size_t l = 0; l < phi.size(); ++l) {
        for (std::size_t h = 0; h < phi[l].size(); ++h) {
            p.vis_intensity(l, h) = phi[l][h];
            p.prompt_intensity(l, h) = 1.0 - phi[l][h];
        }
    }
    return p;
}

} // namespace fixture
