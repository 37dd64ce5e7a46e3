// SPDX-License-Identifier: Apache-2.0

#include "clva/diagnostics.hpp"

#include "clva/csv.hpp"
#include "clva/errors.hpp"
#include "clva/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace clva {

double attention_entropy(std::span<const double> map) {
    if (map.empty()) {
        throw ArgumentError("attention_entropy: empty map");
    }
    double total = 0.0;
    for (double v : map) {
        if (v < 0.0) {
            throw ArgumentError("attention_entropy: negative entry");
        }
        total += v;
    }
    if (!(total > 0.0)) {
        throw ArgumentError("attention_entropy: all-zero map has no distribution");
    }
    double h = 0.0;
    for (double v : map) {
        if (v > 0.0) {
            const double p = v / total;
            h -= p * std::log(p);
        }
    }
    return h;
}

double attention_entropy(const SaliencyMap& map) { return attention_entropy(map.values); }

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ArgumentError("pearson: inputs differ in length");
    }
    if (a.size() < 2) {
        throw ArgumentError("pearson: need at least two entries");
    }
    const double ma = population_stats(a).mean;
    const double mb = population_stats(b).mean;
    double saa = 0.0;
    double sbb = 0.0;
    double sab = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double da = a[k] - ma;
        const double db = b[k] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        return std::nullopt;
    }
    const double r = sab / std::sqrt(saa * sbb);
    return std::clamp(r, -1.0, 1.0);
}

OutputDecomposition output_decomposition(std::span<const double> attn_row, const Matrix& values,
                                         const TokenLayout& layout, std::size_t row) {
    if (attn_row.size() != layout.seq_len() || values.rows() != layout.seq_len()) {
        throw ArgumentError("output_decomposition: row or value matrix does not match layout");
    }
    OutputDecomposition d;
    d.row = row;
    d.linguistic.assign(values.cols(), 0.0);
    d.visual.assign(values.cols(), 0.0);
    for (std::size_t j = 0; j < attn_row.size(); ++j) {
        auto& target = layout.vis().contains(j) ? d.visual : d.linguistic;
        const auto v = values.row(j);
        for (std::size_t k = 0; k < v.size(); ++k) {
            target[k] += attn_row[j] * v[k];
        }
    }
    auto norm = [](const std::vector<double>& x) {
        return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
    };
    d.linguistic_norm = norm(d.linguistic);
    d.visual_norm = norm(d.visual);
    return d;
}

OutputDecomposition output_decomposition(const AttentionTrace& trace, std::size_t layer,
                                         std::size_t head, std::size_t row) {
    if (!trace.has_values()) {
        throw ArgumentError("output_decomposition: trace has no value payload");
    }
    if (!trace.layout().txt().contains(row)) {
        throw ArgumentError("output_decomposition: row is outside the text span");
    }
    return output_decomposition(trace.attn(layer, head).row(row), trace.values(layer, head),
                                trace.layout(), row);
}

DriftMetrics drift_report(const AttentionTrace& trace, const HeadProfile& profile,
                          const AnchorSet& anchors, const DriftOptions& options) {
    if (!profile.classified() || profile.layers() != trace.layers()) {
        throw ArgumentError("drift_report: profile does not belong to this trace");
    }
    if (anchors.pos_map.size() != trace.layout().n_vis()) {
        throw ArgumentError("drift_report: anchor maps do not span the visual tokens");
    }
    HeadSet all(trace.heads());
    std::iota(all.begin(), all.end(), std::size_t{0});

    DriftMetrics m;
    for (std::size_t l = 0; l < trace.layers(); ++l) {
        const HeadSet& heads = options.heads == DriftHeads::all         ? all
                               : options.heads == DriftHeads::sensitive ? profile.sens[l]
                                                                        : profile.insens[l];
        const SaliencyMap map = extract_saliency(trace, l, heads, options.query_row);
        m.layer.push_back(l);
        m.entropy.push_back(attention_entropy(map));
        m.r_neg.push_back(pearson(map.values, anchors.neg_map.values));
        m.r_pos.push_back(pearson(map.values, anchors.pos_map.values));
    }
    return m;
}

void export_drift_metrics(const DriftMetrics& m, std::ostream& sink) {
    sink << "layer,entropy,r_neg,r_pos\n";
    for (std::size_t k = 0; k < m.layer.size(); ++k) {
        sink << m.layer[k] << ',' << csv_number(m.entropy[k]) << ',' << csv_number(m.r_neg[k])
             << ',' << csv_number(m.r_pos[k]) << '\n';
    }
    if (!sink) {
        throw IoError("export_drift_metrics: sink write failed");
    }
}

} // namespace clva
