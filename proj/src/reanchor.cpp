// SPDX-License-Identifier: Apache-2.0

#include "clva/reanchor.hpp"

#include "clva/errors.hpp"

#include <algorithm>

namespace clva {

std::string to_string(SignMode mode) {
    switch (mode) {
    case SignMode::standard: return "standard";
    case SignMode::pos_only: return "pos_only";
    case SignMode::neg_only: return "neg_only";
    case SignMode::flipped: return "flipped";
    }
    return "?";
}

std::string to_string(Placement placement) {
    return placement == Placement::decoder_self_attention ? "decoder_self_attention"
                                                          : "compressor_cross_attention";
}

std::string to_string(AnchorRefresh refresh) {
    return refresh == AnchorRefresh::frozen ? "frozen" : "per_step";
}

SignMode parse_sign_mode(const std::string& text) {
    for (auto m : {SignMode::standard, SignMode::pos_only, SignMode::neg_only, SignMode::flipped}) {
        if (text == to_string(m)) {
            return m;
        }
    }
    throw ArgumentError("unknown sign mode '" + text +
                        "' (expected standard, pos_only, neg_only or flipped)");
}

Placement parse_placement(const std::string& text) {
    for (auto p : {Placement::decoder_self_attention, Placement::compressor_cross_attention}) {
        if (text == to_string(p)) {
            return p;
        }
    }
    throw ArgumentError("unknown placement '" + text + "'");
}

AnchorRefresh parse_anchor_refresh(const std::string& text) {
    for (auto r : {AnchorRefresh::frozen, AnchorRefresh::per_step}) {
        if (text == to_string(r)) {
            return r;
        }
    }
    throw ArgumentError("unknown anchor refresh policy '" + text + "'");
}

void check_config(const InterventionConfig& cfg) {
    if (!(cfg.alpha >= 0.0) || !(cfg.beta >= 0.0)) {
        throw ArgumentError("intervention: alpha and beta must be non-negative");
    }
    if (!(cfg.clamp_floor >= 0.0)) {
        throw ArgumentError("intervention: clamp_floor must be non-negative");
    }
}

LayerRange resolve_layer_range(const InterventionConfig& cfg, const AnchorSet& anchors,
                               std::size_t layers) {
    const LayerRange r = cfg.layer_range.value_or(LayerRange{anchors.l_mid + 1, layers});
    if (r.begin > layers || r.end > layers) {
        throw ArgumentError("intervention: layer range [" + std::to_string(r.begin) + ", " +
                            std::to_string(r.end) + ") exceeds the " +
                            std::to_string(layers) + "-layer model");
    }
    return r;
}

std::vector<double> modulation_factors(const AnchorSet& anchors, const InterventionConfig& cfg) {
    check_config(cfg);
    if (anchors.pos_mask.size() != anchors.neg_mask.size()) {
        throw ArgumentError("intervention: positive and negative masks differ in length");
    }
    double s_pos = 1.0;
    double s_neg = 1.0;
    switch (cfg.sign_mode) {
    case SignMode::standard: break;
    case SignMode::pos_only: s_neg = 0.0; break;
    case SignMode::neg_only: s_pos = 0.0; break;
    case SignMode::flipped: s_pos = -1.0; s_neg = -1.0; break;
    }
    std::vector<double> f(anchors.pos_mask.size());
    for (std::size_t j = 0; j < f.size(); ++j) {
        const double zp = anchors.pos_mask[j] ? 1.0 : 0.0;
        const double zn = anchors.neg_mask[j] ? 1.0 : 0.0;
        f[j] = std::max(cfg.clamp_floor, 1.0 + s_pos * cfg.alpha * zp - s_neg * cfg.beta * zn);
    }
    return f;
}

std::vector<double> averaged_factors(const std::vector<std::vector<std::uint8_t>>& masks,
                                     double alpha, double beta, double clamp_floor) {
    if (masks.empty()) {
        throw ArgumentError("reanchor_averaged: empty mask list");
    }
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(clamp_floor >= 0.0)) {
        throw ArgumentError("reanchor_averaged: alpha, beta and clamp_floor must be non-negative");
    }
    const std::size_t n = masks.front().size();
    std::vector<double> avg(n, 0.0);
    for (const auto& m : masks) {
        if (m.size() != n) {
            throw ArgumentError("reanchor_averaged: masks differ in length");
        }
        for (std::size_t j = 0; j < n; ++j) {
            avg[j] += m[j] ? 1.0 : 0.0;
        }
    }
    const double inv = 1.0 / static_cast<double>(masks.size());
    for (double& v : avg) {
        v = std::max(clamp_floor, 1.0 + (alpha - beta) * (v * inv));
    }
    return avg;
}

RowOutcome reanchor_row(std::span<double> row, Span columns, std::span<const double> factors) {
    if (columns.size() != factors.size() || columns.end > row.size()) {
        throw ArgumentError("reanchor_row: factor count does not match the column span");
    }
    if (std::all_of(factors.begin(), factors.end(), [](double f) { return f == 1.0; })) {
        return {};
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        const double v =
            columns.contains(j) ? row[j] * factors[j - columns.begin] : row[j];
        sum += v;
    }
    if (!(sum > 0.0)) {
        return {};
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
        const double v =
            columns.contains(j) ? row[j] * factors[j - columns.begin] : row[j];
        row[j] = v / sum;
    }
    return {true, sum};
}

namespace {

struct Region {
    Span rows;
    Span columns;
};

Region modulated_region(const TokenLayout& layout, Placement placement) {
    if (placement == Placement::compressor_cross_attention) {
        return {{0, layout.seq_len()}, {0, layout.seq_len()}};
    }
    return {layout.txt(), layout.vis()};
}

RowMasses row_masses(std::span<const double> row, const Region& region,
                     const AnchorSet& anchors) {
    RowMasses m;
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (region.columns.contains(j)) {
            const std::size_t k = j - region.columns.begin;
            if (anchors.pos_mask[k]) {
                m.pos += row[j];
            }
            if (anchors.neg_mask[k]) {
                m.neg += row[j];
            }
        } else {
            m.linguistic += row[j];
        }
    }
    return m;
}

void check_mask_length(const AnchorSet& anchors, const Region& region) {
    if (anchors.pos_mask.size() != region.columns.size() ||
        anchors.neg_mask.size() != region.columns.size()) {
        throw ArgumentError("intervention: anchor masks have length " +
                            std::to_string(anchors.pos_mask.size()) + ", expected " +
                            std::to_string(region.columns.size()));
    }
}

ReanchorResult reanchor_with_factors(const Matrix& attn, const Region& region,
                                     const AnchorSet& anchors, std::span<const double> factors) {
    if (attn.rows() != attn.cols() || region.rows.end > attn.rows()) {
        throw ArgumentError("intervention: attention matrix does not match the layout");
    }
    ReanchorResult out{attn, {}};
    out.rows.reserve(region.rows.size());
    for (std::size_t i = region.rows.begin; i < region.rows.end; ++i) {
        RowReport r;
        r.row = i;
        r.pre = row_masses(attn.row(i), region, anchors);
        const RowOutcome o = reanchor_row(out.attn.row(i), region.columns, factors);
        r.touched = o.touched;
        r.normalizer = o.normalizer;
        r.post = row_masses(out.attn.row(i), region, anchors);
        out.rows.push_back(r);
    }
    return out;
}

} // namespace

ReanchorResult reanchor_attention(const Matrix& attn, const TokenLayout& layout,
                                  const AnchorSet& anchors, const InterventionConfig& cfg) {
    const Region region = modulated_region(layout, cfg.placement);
    check_mask_length(anchors, region);
    const auto factors = modulation_factors(anchors, cfg);
    return reanchor_with_factors(attn, region, anchors, factors);
}

Matrix reanchor_averaged(const Matrix& attn, const TokenLayout& layout,
                         const std::vector<std::vector<std::uint8_t>>& per_head_masks,
                         double alpha, double beta, double clamp_floor) {
    const auto factors = averaged_factors(per_head_masks, alpha, beta, clamp_floor);
    if (factors.size() != layout.n_vis()) {
        throw ArgumentError("reanchor_averaged: masks do not span the visual tokens");
    }
    if (attn.rows() != layout.seq_len() || attn.cols() != layout.seq_len()) {
        throw ArgumentError("reanchor_averaged: attention matrix does not match the layout");
    }
    Matrix out = attn;
    for (std::size_t i = layout.txt().begin; i < layout.txt().end; ++i) {
        reanchor_row(out.row(i), layout.vis(), factors);
    }
    return out;
}

std::vector<std::vector<std::uint8_t>> per_head_masks(const AttentionTrace& trace,
                                                      std::size_t layer, double tau,
                                                      double epsilon) {
    std::vector<std::vector<std::uint8_t>> masks;
    masks.reserve(trace.heads());
    for (std::size_t h = 0; h < trace.heads(); ++h) {
        const SaliencyMap m = extract_saliency(trace, layer, {h});
        masks.push_back(zscore_mask(m.values, tau, epsilon).mask);
    }
    return masks;
}

InterventionOutcome apply_to_trace(const AttentionTrace& trace, const AnchorSet& anchors,
                                   const InterventionConfig& cfg) {
    check_config(cfg);
    const LayerRange range = resolve_layer_range(cfg, anchors, trace.layers());
    const Region region = modulated_region(trace.layout(), cfg.placement);
    check_mask_length(anchors, region);
    const auto factors = modulation_factors(anchors, cfg);

    InterventionReport report;
    report.range = range;
    std::vector<Matrix> attn = trace.all_attn();
    for (std::size_t l = range.begin; l < range.end; ++l) {
        LayerReport lr;
        lr.layer = l;
        std::size_t counted = 0;
        for (std::size_t h = 0; h < trace.heads(); ++h) {
            ReanchorResult res = reanchor_with_factors(trace.attn(l, h), region, anchors, factors);
            attn[l * trace.heads() + h] = std::move(res.attn);
            for (RowReport& r : res.rows) {
                r.layer = l;
                r.head = h;
                lr.pre.pos += r.pre.pos;
                lr.pre.neg += r.pre.neg;
                lr.pre.linguistic += r.pre.linguistic;
                lr.post.pos += r.post.pos;
                lr.post.neg += r.post.neg;
                lr.post.linguistic += r.post.linguistic;
                ++counted;
                if (r.touched) {
                    ++lr.rows_touched;
                }
                report.rows.push_back(r);
            }
        }
        if (counted > 0) {
            const double inv = 1.0 / static_cast<double>(counted);
            for (RowMasses* m : {&lr.pre, &lr.post}) {
                m->pos *= inv;
                m->neg *= inv;
                m->linguistic *= inv;
            }
        }
        report.rows_touched += lr.rows_touched;
        report.layers.push_back(lr);
    }

    AttentionTrace out(trace.layers(), trace.heads(), trace.head_dim(), trace.layout(),
                       std::move(attn), trace.all_values(), trace.meta());
    return {std::move(out), std::move(report)};
}

} // namespace clva
