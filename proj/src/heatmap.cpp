// SPDX-License-Identifier: Apache-2.0

#include "clva/heatmap.hpp"

#include "clva/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace clva {

HeadSelector HeadSelector::parse(const std::string& text) {
    HeadSelector sel;
    if (text == "all") {
        sel.kind = Kind::all;
    } else if (text == "sensitive") {
        sel.kind = Kind::sensitive;
    } else if (text == "insensitive") {
        sel.kind = Kind::insensitive;
    } else {
        sel.kind = Kind::explicit_list;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::size_t used = 0;
            unsigned long v = 0;
            try {
                v = std::stoul(item, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != item.size()) {
                throw ArgumentError("head selector: '" + text +
                                    "' is not all, sensitive, insensitive or a head list");
            }
            sel.heads.push_back(v);
        }
        if (sel.heads.empty()) {
            throw ArgumentError("head selector: empty head list");
        }
    }
    return sel;
}

HeadSet HeadSelector::resolve(const HeadProfile& profile, std::size_t layer) const {
    switch (kind) {
    case Kind::all: {
        HeadSet all(profile.heads());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }
    case Kind::sensitive: return profile.sens.at(layer);
    case Kind::insensitive: return profile.insens.at(layer);
    case Kind::explicit_list: return heads;
    }
    return heads;
}

std::vector<std::uint8_t> heatmap_pixels(const std::vector<double>& map, std::size_t rows,
                                         std::size_t cols) {
    if (rows == 0 || cols == 0 || rows * cols != map.size()) {
        throw ArgumentError("heatmap: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " does not match " + std::to_string(map.size()) + " tokens");
    }
    const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
    const double range = *hi - *lo;
    std::vector<std::uint8_t> px(map.size(), 0);
    if (range > 0.0) {
        for (std::size_t k = 0; k < map.size(); ++k) {
            px[k] = static_cast<std::uint8_t>(std::lround(255.0 * (map[k] - *lo) / range));
        }
    }
    return px;
}

std::vector<std::uint8_t> render_heatmap(const SaliencyMap& map, const HeatmapSpec& spec,
                                         std::ostream& sink) {
    auto px = heatmap_pixels(map.values, spec.rows, spec.cols);
    sink << "P5\n" << spec.cols << ' ' << spec.rows << "\n255\n";
    sink.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!sink) {
        throw IoError("render_heatmap: sink write failed");
    }
    return px;
}

} // namespace clva
