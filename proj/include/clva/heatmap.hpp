// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/anchors.hpp"
#include "clva/profiler.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace clva {

/// Which heads of the chosen layer feed the heatmap.
struct HeadSelector {
    enum class Kind { all, sensitive, insensitive, explicit_list };
    Kind kind = Kind::all;
    HeadSet heads; ///< used by explicit_list

    /// "all", "sensitive", "insensitive" or a comma-separated head list.
    static HeadSelector parse(const std::string& text);
    HeadSet resolve(const HeadProfile& profile, std::size_t layer) const;
};

struct HeatmapSpec {
    std::size_t layer = 0;
    HeadSelector heads;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Min-max scaled grayscale pixels, row-major; a constant map is all zeros.
/// Throws ArgumentError when rows * cols != map size.
std::vector<std::uint8_t> heatmap_pixels(const std::vector<double>& map, std::size_t rows,
                                         std::size_t cols);

/// Writes a binary PGM (P5, maxval 255) and returns its pixels.
std::vector<std::uint8_t> render_heatmap(const SaliencyMap& map, const HeatmapSpec& spec,
                                         std::ostream& sink);

} // namespace clva
