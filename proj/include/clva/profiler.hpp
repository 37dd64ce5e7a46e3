// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/matrix.hpp"
#include "clva/trace.hpp"

#include <cstddef>
#include <iosfwd>
#include <vector>

namespace clva {

inline constexpr double kDefaultLambdaVis = 1.0;

using HeadSet = std::vector<std::size_t>;

/// Per-(layer, head) attention intensities and the visual-sensitivity
/// classification derived from them.
struct HeadProfile {
    /// L x H mean text->visual attention mass.
    Matrix vis_intensity;
    /// L x H mean text->(system U text) attention mass.
    Matrix prompt_intensity;

    // Populated by classify_heads.
    std::vector<double> per_layer_mean;
    std::vector<double> per_layer_std;
    double lambda_vis = kDefaultLambdaVis;
    std::vector<HeadSet> sens;
    std::vector<HeadSet> insens;
    /// Per layer: sens set came from the fallback (max-intensity head).
    std::vector<bool> sens_fallback;
    /// Per layer: insens set came from the fallback (min-intensity head).
    std::vector<bool> insens_fallback;

    std::size_t layers() const { return vis_intensity.rows(); }
    std::size_t heads() const { return vis_intensity.cols(); }
    bool classified() const { return sens.size() == layers(); }
    bool fallback_used(std::size_t layer) const {
        return sens_fallback.at(layer) || insens_fallback.at(layer);
    }
};

/// Mean attention mass each head sends from the text rows to the visual
/// columns, and to the causally visible system and text columns.
HeadProfile head_intensity(const AttentionTrace& trace);

/// Splits the heads of every layer into those above mean + lambda_vis * std
/// (sensitive) and below mean - lambda_vis * std (insensitive), using the
/// population std. Boundary values belong to neither set. An empty set falls
/// back to the single extreme head (lowest index on ties).
HeadProfile classify_heads(HeadProfile profile, double lambda_vis = kDefaultLambdaVis);

/// head_intensity followed by classify_heads.
HeadProfile profile_trace(const AttentionTrace& trace, double lambda_vis = kDefaultLambdaVis);

/// CSV: layer,head,vis_intensity,prompt_intensity,is_sens,is_insens.
void export_intensity_matrix(const HeadProfile& profile, std::ostream& sink);

} // namespace clva
