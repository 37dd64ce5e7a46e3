// SPDX-License-Identifier: Apache-2.0

#include "clva/anchors.hpp"

#include "clva/errors.hpp"
#include "clva/stats.hpp"

#include <algorithm>
#include <string>

namespace clva {

SaliencyMap extract_saliency(const AttentionTrace& trace, std::size_t layer,
                             const HeadSet& heads, std::size_t query_row, Span columns) {
    if (heads.empty()) {
        throw ArgumentError("extract_saliency: empty head set");
    }
    if (layer >= trace.layers()) {
        throw ArgumentError("extract_saliency: layer " + std::to_string(layer) +
                            " out of range (trace has " + std::to_string(trace.layers()) +
                            ")");
    }
    if (query_row >= trace.seq_len() || columns.end > trace.seq_len() || columns.empty()) {
        throw ArgumentError("extract_saliency: query row or column span out of range");
    }
    for (std::size_t h : heads) {
        if (h >= trace.heads()) {
            throw ArgumentError("extract_saliency: head " + std::to_string(h) + " out of range");
        }
    }

    SaliencyMap m;
    m.values.assign(columns.size(), 0.0);
    m.source_layer = layer;
    m.source_heads = heads;
    m.query_row = query_row;
    for (std::size_t h : heads) {
        const auto row = trace.attn(layer, h).row(query_row);
        for (std::size_t j = 0; j < columns.size(); ++j) {
            m.values[j] += row[columns.begin + j];
        }
    }
    const double inv = 1.0 / static_cast<double>(heads.size());
    for (double& v : m.values) {
        v *= inv;
    }
    return m;
}

SaliencyMap extract_saliency(const AttentionTrace& trace, std::size_t layer,
                             const HeadSet& heads, std::optional<std::size_t> query_row) {
    const std::size_t row = query_row.value_or(trace.seq_len() - 1);
    if (!trace.layout().txt().contains(row)) {
        throw ArgumentError("extract_saliency: query row " + std::to_string(row) +
                            " is outside the text span");
    }
    return extract_saliency(trace, layer, heads, row, trace.layout().vis());
}

ZScoreMask zscore_mask(const std::vector<double>& values, double tau, double epsilon) {
    if (values.size() < 2) {
        throw ArgumentError("zscore_mask: need at least two values, got " +
                            std::to_string(values.size()));
    }
    const MeanStd st = population_stats(values);
    ZScoreMask out;
    out.z.reserve(values.size());
    out.mask.reserve(values.size());
    for (double v : values) {
        const double z = (v - st.mean) / (st.std + epsilon);
        out.z.push_back(z);
        out.mask.push_back(z > tau ? 1 : 0);
    }
    return out;
}

AnchorLayers default_anchor_layers(std::size_t layers) {
    if (layers == 0) {
        throw ArgumentError("default_anchor_layers: model has no layers");
    }
    const std::size_t half = layers / 2;
    std::size_t mid_1based = half > 4 ? half - 2 : 2;
    mid_1based = std::min(mid_1based, layers);
    return {mid_1based - 1, 0};
}

void remask(AnchorSet& a, SaliencyMap pos_map, SaliencyMap neg_map) {
    if (pos_map.size() != neg_map.size()) {
        throw ArgumentError("remask: positive and negative maps differ in length");
    }
    auto pos = zscore_mask(pos_map.values, a.tau, a.epsilon);
    auto neg = zscore_mask(neg_map.values, a.tau, a.epsilon);
    a.pos_map = std::move(pos_map);
    a.neg_map = std::move(neg_map);
    a.pos_z = std::move(pos.z);
    a.pos_mask = std::move(pos.mask);
    a.neg_z = std::move(neg.z);
    a.neg_mask = std::move(neg.mask);
}

AnchorSet derive_anchor_set(const AttentionTrace& trace, const HeadProfile& profile,
                            const AnchorOptions& opt) {
    if (!profile.classified()) {
        throw ArgumentError("derive_anchor_set: profile has not been classified");
    }
    if (opt.l_mid >= trace.layers() || opt.l_neg >= trace.layers() ||
        profile.layers() != trace.layers()) {
        throw ArgumentError("derive_anchor_set: anchor layer out of range");
    }
    const std::size_t row = opt.query_row.value_or(trace.seq_len() - 1);
    SaliencyMap pos;
    SaliencyMap neg;
    if (opt.all_columns) {
        const Span all{0, trace.seq_len()};
        pos = extract_saliency(trace, opt.l_mid, profile.sens[opt.l_mid], row, all);
        neg = extract_saliency(trace, opt.l_neg, profile.insens[opt.l_neg], row, all);
    } else {
        pos = extract_saliency(trace, opt.l_mid, profile.sens[opt.l_mid], row);
        neg = extract_saliency(trace, opt.l_neg, profile.insens[opt.l_neg], row);
    }
    AnchorSet a;
    a.tau = opt.tau;
    a.epsilon = opt.epsilon;
    a.l_mid = opt.l_mid;
    a.l_neg = opt.l_neg;
    remask(a, std::move(pos), std::move(neg));
    return a;
}

AnchorSet derive_anchor_set(const AttentionTrace& trace, const HeadProfile& profile,
                            std::size_t l_mid, std::size_t l_neg, double tau, double epsilon) {
    AnchorOptions opt;
    opt.l_mid = l_mid;
    opt.l_neg = l_neg;
    opt.tau = tau;
    opt.epsilon = epsilon;
    return derive_anchor_set(trace, profile, opt);
}

} // namespace clva
