// SPDX-License-Identifier: Apache-2.0

#include "clva/profiler.hpp"

#include "clva/csv.hpp"
#include "clva/errors.hpp"
#include "clva/stats.hpp"

#include <algorithm>
#include <ostream>

namespace clva {

HeadProfile head_intensity(const AttentionTrace& trace) {
    const TokenLayout& lay = trace.layout();
    const Span txt = lay.txt();
    const Span vis = lay.vis();
    if (txt.empty()) {
        throw LayoutError("head_intensity: text span is empty");
    }
    const double n_txt = static_cast<double>(txt.size());

    HeadProfile p;
    p.vis_intensity = Matrix(trace.layers(), trace.heads());
    p.prompt_intensity = Matrix(trace.layers(), trace.heads());
    for (std::size_t l = 0; l < trace.layers(); ++l) {
        for (std::size_t h = 0; h < trace.heads(); ++h) {
            const Matrix& a = trace.attn(l, h);
            double vis_sum = 0.0;
            double prompt_sum = 0.0;
            for (std::size_t i = txt.begin; i < txt.end; ++i) {
                for (std::size_t j = 0; j <= i; ++j) {
                    if (vis.contains(j)) {
                        vis_sum += a(i, j);
                    } else {
                        prompt_sum += a(i, j);
                    }
                }
            }
            p.vis_intensity(l, h) = vis_sum / n_txt;
            p.prompt_intensity(l, h) = prompt_sum / n_txt;
        }
    }
    return p;
}

HeadProfile classify_heads(HeadProfile p, double lambda_vis) {
    if (lambda_vis < 0.0) {
        throw ArgumentError("classify_heads: lambda_vis must be non-negative");
    }
    const std::size_t L = p.layers();
    const std::size_t H = p.heads();
    if (L == 0 || H == 0) {
        throw ArgumentError("classify_heads: profile has no intensities");
    }
    p.lambda_vis = lambda_vis;
    p.per_layer_mean.assign(L, 0.0);
    p.per_layer_std.assign(L, 0.0);
    p.sens.assign(L, {});
    p.insens.assign(L, {});
    p.sens_fallback.assign(L, false);
    p.insens_fallback.assign(L, false);

    for (std::size_t l = 0; l < L; ++l) {
        const auto row = p.vis_intensity.row(l);
        const MeanStd st = population_stats(row);
        p.per_layer_mean[l] = st.mean;
        p.per_layer_std[l] = st.std;
        const double upper = st.mean + lambda_vis * st.std;
        const double lower = st.mean - lambda_vis * st.std;
        for (std::size_t h = 0; h < H; ++h) {
            if (row[h] > upper) {
                p.sens[l].push_back(h);
            } else if (row[h] < lower) {
                p.insens[l].push_back(h);
            }
        }
        // max_element/min_element return the first extreme, i.e. lowest index.
        if (p.sens[l].empty()) {
            p.sens[l] = {static_cast<std::size_t>(std::max_element(row.begin(), row.end()) -
                                                  row.begin())};
            p.sens_fallback[l] = true;
        }
        if (p.insens[l].empty()) {
            p.insens[l] = {static_cast<std::size_t>(std::min_element(row.begin(), row.end()) -
                                                    row.begin())};
            p.insens_fallback[l] = true;
        }
    }
    return p;
}

HeadProfile profile_trace(const AttentionTrace& trace, double lambda_vis) {
    return classify_heads(head_intensity(trace), lambda_vis);
}

void export_intensity_matrix(const HeadProfile& p, std::ostream& sink) {
    auto member = [](const HeadSet& set, std::size_t h) {
        return std::find(set.begin(), set.end(), h) != set.end();
    };
    sink << "layer,head,vis_intensity,prompt_intensity,is_sens,is_insens\n";
    for (std::size_t l = 0; l < p.layers(); ++l) {
        for (std::size_t h = 0; h < p.heads(); ++h) {
            const bool s = p.classified() && member(p.sens[l], h);
            const bool ins = p.classified() && member(p.insens[l], h);
            sink << l << ',' << h << ',' << csv_number(p.vis_intensity(l, h)) << ','
                 << csv_number(p.prompt_intensity(l, h)) << ',' << (s ? 1 : 0) << ','
                 << (ins ? 1 : 0) << '\n';
        }
    }
    if (!sink) {
        throw IoError("export_intensity_matrix: sink write failed");
    }
}

} // namespace clva
