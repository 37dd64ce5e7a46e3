// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/anchors.hpp"
#include "clva/layout.hpp"
#include "clva/matrix.hpp"
#include "clva/trace.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clva {

inline constexpr double kDefaultAlpha = 14.0;
inline constexpr double kDefaultBeta = 0.9;

/// Signs applied to the positive and negative anchor terms.
enum class SignMode {
    standard, ///< 1 + alpha*Zpos - beta*Zneg
    pos_only, ///< 1 + alpha*Zpos
    neg_only, ///< 1 - beta*Zneg
    flipped,  ///< 1 - alpha*Zpos + beta*Zneg
};

enum class Placement {
    /// Text rows attending to visual columns of a decoder self-attention.
    decoder_self_attention,
    /// Every query row against every key column, as in the cross-attention of
    /// a query-compressing visual abstractor.
    compressor_cross_attention,
};

enum class AnchorRefresh { frozen, per_step };

/// Half-open interval of 0-based layer indices.
struct LayerRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    bool empty() const { return begin >= end; }
    bool contains(std::size_t l) const { return l >= begin && l < end; }
    friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

struct InterventionConfig {
    double alpha = kDefaultAlpha;
    double beta = kDefaultBeta;
    /// Unset means every layer strictly after the positive-anchor layer.
    std::optional<LayerRange> layer_range;
    SignMode sign_mode = SignMode::standard;
    Placement placement = Placement::decoder_self_attention;
    AnchorRefresh anchor_refresh = AnchorRefresh::frozen;
    double clamp_floor = 0.0;
};

std::string to_string(SignMode mode);
std::string to_string(Placement placement);
std::string to_string(AnchorRefresh refresh);
SignMode parse_sign_mode(const std::string& text);
Placement parse_placement(const std::string& text);
AnchorRefresh parse_anchor_refresh(const std::string& text);

/// Throws ArgumentError for negative alpha, beta or clamp_floor.
void check_config(const InterventionConfig& cfg);

/// The configured range, or (l_mid, layers) when unset. Throws ArgumentError
/// when the range exceeds the model.
LayerRange resolve_layer_range(const InterventionConfig& cfg, const AnchorSet& anchors,
                               std::size_t layers);

/// Per-column factor max(clamp_floor, 1 + s_a*alpha*Zpos(j) - s_b*beta*Zneg(j)).
std::vector<double> modulation_factors(const AnchorSet& anchors, const InterventionConfig& cfg);

/// Factor 1 + (alpha - beta) * Zavg(j), Zavg the head-average of the masks,
/// floored at clamp_floor.
std::vector<double> averaged_factors(const std::vector<std::vector<std::uint8_t>>& masks,
                                     double alpha, double beta, double clamp_floor = 0.0);

struct RowOutcome {
    bool touched = false;
    /// Sum of the modulated row before renormalization; 1 when untouched.
    double normalizer = 1.0;
};

/// Multiplies row[columns.begin + j] by factors[j] and renormalizes the whole
/// row. A row is left bit-identical when every factor is exactly 1 or when the
/// modulated row has no mass left.
RowOutcome reanchor_row(std::span<double> row, Span columns, std::span<const double> factors);

/// Attention masses of one row restricted to anchor regions.
struct RowMasses {
    double pos = 0.0;
    double neg = 0.0;
    double linguistic = 0.0;
};

struct RowReport {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t row = 0;
    bool touched = false;
    double normalizer = 1.0;
    RowMasses pre;
    RowMasses post;
};

struct ReanchorResult {
    Matrix attn;
    std::vector<RowReport> rows;
};

/// Re-anchors one head's attention matrix. Only text rows (every row under the
/// compressor placement) are modulated; other rows are copied unchanged.
ReanchorResult reanchor_attention(const Matrix& attn, const TokenLayout& layout,
                                  const AnchorSet& anchors, const InterventionConfig& cfg);

/// Averaged-anchor ablation: a single fractional mask, the mean of per-head
/// binary masks, modulates text->visual attention by 1 + (alpha - beta)*Zavg.
Matrix reanchor_averaged(const Matrix& attn, const TokenLayout& layout,
                         const std::vector<std::vector<std::uint8_t>>& per_head_masks,
                         double alpha, double beta, double clamp_floor = 0.0);

/// One binary mask per head of `layer`, each from that head's own last-row
/// visual saliency.
std::vector<std::vector<std::uint8_t>> per_head_masks(const AttentionTrace& trace,
                                                      std::size_t layer,
                                                      double tau = kDefaultTau,
                                                      double epsilon = kDefaultEpsilon);

struct LayerReport {
    std::size_t layer = 0;
    std::size_t rows_touched = 0;
    /// Means over heads and modulated rows.
    RowMasses pre;
    RowMasses post;
};

struct InterventionReport {
    LayerRange range;
    std::vector<LayerReport> layers;
    std::vector<RowReport> rows;
    std::size_t rows_touched = 0;
};

struct InterventionOutcome {
    AttentionTrace trace;
    InterventionReport report;
};

/// Re-anchors every head of every layer in the configured range. Layers
/// outside the range are copied bit-identical.
InterventionOutcome apply_to_trace(const AttentionTrace& trace, const AnchorSet& anchors,
                                   const InterventionConfig& cfg);

} // namespace clva
