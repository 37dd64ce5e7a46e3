// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/anchors.hpp"
#include "clva/layout.hpp"
#include "clva/matrix.hpp"
#include "clva/profiler.hpp"
#include "clva/trace.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace clva {

/// Shannon entropy (nats) of the map renormalized to a distribution over the
/// visual tokens, with 0 ln 0 = 0. Throws ArgumentError for an empty or
/// all-zero map.
double attention_entropy(std::span<const double> map);
double attention_entropy(const SaliencyMap& map);

/// Population Pearson correlation. Empty when either input has zero variance.
/// Throws ArgumentError for unequal lengths or fewer than two entries.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// Linguistic (system + text columns) and visual parts of one attention output row.
struct OutputDecomposition {
    std::size_t row = 0;
    std::vector<double> linguistic; ///< O_P
    std::vector<double> visual;     ///< O_V
    double linguistic_norm = 0.0;
    double visual_norm = 0.0;
};

/// Splits sum_j attn_row[j] * values.row(j) into its linguistic and visual
/// column contributions.
OutputDecomposition output_decomposition(std::span<const double> attn_row, const Matrix& values,
                                         const TokenLayout& layout, std::size_t row = 0);

/// Decomposition of row `row` of head (layer, head). Throws ArgumentError when
/// the trace carries no values or the row is outside the text span.
OutputDecomposition output_decomposition(const AttentionTrace& trace, std::size_t layer,
                                         std::size_t head, std::size_t row);

/// Which heads form the per-layer map whose entropy is reported.
enum class DriftHeads { all, sensitive, insensitive };

struct DriftOptions {
    DriftHeads heads = DriftHeads::all;
    /// Defaults to the last token.
    std::optional<std::size_t> query_row;
};

struct DriftMetrics {
    std::vector<std::size_t> layer;
    std::vector<double> entropy;
    /// Correlation with the negative anchor map; empty when undefined.
    std::vector<std::optional<double>> r_neg;
    /// Correlation with the positive anchor map; empty when undefined.
    std::vector<std::optional<double>> r_pos;
};

/// Per-layer entropy of the selected heads' last-row map and its Pearson
/// correlation with both anchor maps.
DriftMetrics drift_report(const AttentionTrace& trace, const HeadProfile& profile,
                          const AnchorSet& anchors, const DriftOptions& options = {});

/// CSV: layer,entropy,r_neg,r_pos (undefined correlations written as nan).
void export_drift_metrics(const DriftMetrics& metrics, std::ostream& sink);

} // namespace clva
