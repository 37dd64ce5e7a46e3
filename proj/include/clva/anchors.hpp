// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/layout.hpp"
#include "clva/profiler.hpp"
#include "clva/trace.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace clva {

inline constexpr double kDefaultTau = 2.0;
inline constexpr double kDefaultEpsilon = 1e-8;

/// Last-query attention over the visual tokens, averaged over a head set.
struct SaliencyMap {
    std::vector<double> values;
    std::size_t source_layer = 0;
    HeadSet source_heads;
    std::size_t query_row = 0;

    std::size_t size() const { return values.size(); }
};

/// Mean over `heads` of A_h^(layer)(query_row, j) for j in `columns`.
/// Throws ArgumentError for an empty head set or out-of-range indices.
SaliencyMap extract_saliency(const AttentionTrace& trace, std::size_t layer,
                             const HeadSet& heads, std::size_t query_row, Span columns);

/// Visual-span saliency. query_row defaults to the last token and must lie in
/// the text span.
SaliencyMap extract_saliency(const AttentionTrace& trace, std::size_t layer,
                             const HeadSet& heads,
                             std::optional<std::size_t> query_row = std::nullopt);

struct ZScoreMask {
    std::vector<double> z;
    std::vector<std::uint8_t> mask;
};

/// z_j = (M_j - mean) / (std + epsilon) with the population std; mask_j = z_j > tau.
/// Throws ArgumentError when fewer than two values are given.
ZScoreMask zscore_mask(const std::vector<double>& values, double tau = kDefaultTau,
                       double epsilon = kDefaultEpsilon);

/// Positive (mid-layer, sensitive heads) and negative (first-layer,
/// insensitive heads) anchors with their outlier masks.
struct AnchorSet {
    SaliencyMap pos_map;
    SaliencyMap neg_map;
    std::vector<double> pos_z;
    std::vector<double> neg_z;
    std::vector<std::uint8_t> pos_mask;
    std::vector<std::uint8_t> neg_mask;
    double tau = kDefaultTau;
    double epsilon = kDefaultEpsilon;
    std::size_t l_mid = 0;
    std::size_t l_neg = 0;

    std::size_t size() const { return pos_mask.size(); }
};

/// 0-based anchor layers for a model of `layers` layers.
struct AnchorLayers {
    std::size_t mid = 0;
    std::size_t neg = 0;
};

/// Positive anchor at 1-indexed layer max(2, L/2 - 2) (clamped to L), negative
/// anchor at the first decoder layer. Returned 0-based.
AnchorLayers default_anchor_layers(std::size_t layers);

struct AnchorOptions {
    std::size_t l_mid = 0;
    std::size_t l_neg = 0;
    double tau = kDefaultTau;
    double epsilon = kDefaultEpsilon;
    /// Defaults to the last token.
    std::optional<std::size_t> query_row;
    /// Saliency over every key column instead of the visual span; used for the
    /// compressor cross-attention placement.
    bool all_columns = false;
};

AnchorSet derive_anchor_set(const AttentionTrace& trace, const HeadProfile& profile,
                            const AnchorOptions& options);

AnchorSet derive_anchor_set(const AttentionTrace& trace, const HeadProfile& profile,
                            std::size_t l_mid, std::size_t l_neg, double tau = kDefaultTau,
                            double epsilon = kDefaultEpsilon);

/// Recomputes z-scores and masks of an existing anchor set from new maps.
void remask(AnchorSet& anchors, SaliencyMap pos_map, SaliencyMap neg_map);

} // namespace clva
