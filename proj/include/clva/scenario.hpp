// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/profiler.hpp"
#include "clva/trace.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace clva {

/// Constructed attention trace with a known ground-truth region and a known
/// noise region. Sensitive heads attend to the ground truth in the mid layers
/// and slide toward the noise pattern as gamma rises in the final layers;
/// insensitive heads attend to the noise pattern everywhere.
///
/// Empty per-layer vectors are filled in by resolve_scenario.
struct DriftScenario {
    std::size_t layers = 8;
    std::size_t heads = 4;
    std::size_t n_sys = 2;
    std::size_t n_vis = 16;
    std::size_t n_txt = 6;
    std::size_t head_dim = 8;
    bool with_values = true;

    /// Visual-token indices (0-based within the visual span).
    std::vector<std::size_t> gt_region{5};
    std::vector<std::size_t> noise_region{0, 3, 12};

    /// Designated heads per layer; default {1} and {2} at every layer.
    std::vector<HeadSet> sensitive_heads;
    std::vector<HeadSet> insensitive_heads;

    /// Positive-anchor layer where the drift starts; defaults to
    /// default_anchor_layers(layers).mid.
    std::optional<std::size_t> l_mid;

    /// Drift coefficient per layer. Default: 0 through l_mid, then linear up
    /// to gamma_max at the last layer.
    std::vector<double> gamma;
    double gamma_max = 0.85;

    /// Linguistic mass of the sensitive heads' last row per layer. Default:
    /// linear from rho_first to rho_last.
    std::vector<double> rho;
    double rho_first = 0.3;
    double rho_last = 0.6;

    /// Share of C_gt on gt_region and of C_noise on noise_region.
    double concentration = 0.85;
    /// Visual mass of insensitive and remaining heads relative to the
    /// sensitive heads' 1 - rho.
    double insens_visual_ratio = 0.25;
    double other_visual_ratio = 0.6;
    /// Relative multiplicative jitter applied to every generated weight.
    double jitter = 0.02;

    std::uint64_t seed = 20240611;
};

/// Fills defaults and checks invariants (disjoint regions, gamma(l_mid) = 0,
/// gamma(last) > 0, concentration >= 0.8, ranges). Throws ValidationError or
/// ArgumentError.
DriftScenario resolve_scenario(DriftScenario spec);

/// Generates the trace; the result passes AttentionTrace validation.
AttentionTrace make_scenario(const DriftScenario& spec);

/// Mean over heads of the last-row attention mass on the ground-truth region
/// at `layer`.
double region_mass(const AttentionTrace& trace, std::size_t layer,
                   const std::vector<std::size_t>& region);

} // namespace clva
