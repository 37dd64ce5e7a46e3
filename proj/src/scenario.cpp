// SPDX-License-Identifier: Apache-2.0

#include "clva/scenario.hpp"

#include "clva/anchors.hpp"
#include "clva/errors.hpp"
#include "clva/rng.hpp"

#include <algorithm>
#include <string>

namespace clva {

namespace {

bool contains(const std::vector<std::size_t>& xs, std::size_t v) {
    return std::find(xs.begin(), xs.end(), v) != xs.end();
}

/// Distribution over n tokens placing `mass` on `region` and the rest on the
/// complement, each part jittered and renormalized to its own share.
std::vector<double> concentrated(Rng& rng, std::size_t n, const std::vector<std::size_t>& region,
                                 double mass, double jitter) {
    std::vector<double> w(n);
    double in_sum = 0.0;
    double out_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        w[j] = 1.0 + jitter * rng.symmetric();
        (contains(region, j) ? in_sum : out_sum) += w[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (contains(region, j)) {
            w[j] *= mass / in_sum;
        } else {
            w[j] *= (1.0 - mass) / out_sum;
        }
    }
    return w;
}

std::vector<double> near_uniform(Rng& rng, std::size_t n, double jitter) {
    std::vector<double> w(n);
    double sum = 0.0;
    for (double& v : w) {
        v = 1.0 + jitter * rng.symmetric();
        sum += v;
    }
    for (double& v : w) {
        v /= sum;
    }
    return w;
}

void check_heads(const std::vector<HeadSet>& sets, std::size_t layers, std::size_t heads,
                 const char* what) {
    if (sets.size() != layers) {
        throw ArgumentError(std::string("scenario: ") + what + " needs one head set per layer");
    }
    for (const auto& s : sets) {
        if (s.empty()) {
            throw ArgumentError(std::string("scenario: empty ") + what + " set");
        }
        for (std::size_t h : s) {
            if (h >= heads) {
                throw ArgumentError(std::string("scenario: ") + what + " head out of range");
            }
        }
    }
}

} // namespace

DriftScenario resolve_scenario(DriftScenario s) {
    if (s.layers == 0 || s.heads == 0 || s.n_vis < 2 || s.n_txt == 0) {
        throw ArgumentError("scenario: need layers, heads, n_txt >= 1 and n_vis >= 2");
    }
    if (s.with_values && s.head_dim == 0) {
        throw ArgumentError("scenario: values require head_dim > 0");
    }
    if (s.gt_region.empty() || s.noise_region.empty()) {
        throw ArgumentError("scenario: ground-truth and noise regions must be non-empty");
    }
    for (auto* region : {&s.gt_region, &s.noise_region}) {
        std::sort(region->begin(), region->end());
        region->erase(std::unique(region->begin(), region->end()), region->end());
        if (region->back() >= s.n_vis) {
            throw ArgumentError("scenario: region index outside the visual span");
        }
        if (region->size() == s.n_vis) {
            throw ArgumentError("scenario: a region may not cover every visual token");
        }
    }
    for (std::size_t j : s.gt_region) {
        if (contains(s.noise_region, j)) {
            throw ValidationError("scenario: ground-truth and noise regions overlap at token " +
                                  std::to_string(j));
        }
    }
    if (!(s.concentration >= 0.8 && s.concentration <= 1.0)) {
        throw ArgumentError("scenario: concentration must lie in [0.8, 1]");
    }
    if (!(s.jitter >= 0.0 && s.jitter < 1.0)) {
        throw ArgumentError("scenario: jitter must lie in [0, 1)");
    }
    if (!(s.insens_visual_ratio >= 0.0 && s.insens_visual_ratio <= 1.0 &&
          s.other_visual_ratio >= 0.0 && s.other_visual_ratio <= 1.0)) {
        throw ArgumentError("scenario: visual ratios must lie in [0, 1]");
    }

    const std::size_t L = s.layers;
    if (!s.l_mid) {
        s.l_mid = default_anchor_layers(L).mid;
    }
    if (*s.l_mid >= L) {
        throw ArgumentError("scenario: l_mid out of range");
    }
    if (s.sensitive_heads.empty()) {
        s.sensitive_heads.assign(L, HeadSet{std::min<std::size_t>(1, s.heads - 1)});
    }
    if (s.insensitive_heads.empty()) {
        s.insensitive_heads.assign(L, HeadSet{std::min<std::size_t>(2, s.heads - 1)});
    }
    check_heads(s.sensitive_heads, L, s.heads, "sensitive");
    check_heads(s.insensitive_heads, L, s.heads, "insensitive");
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t h : s.sensitive_heads[l]) {
            if (contains(s.insensitive_heads[l], h)) {
                throw ValidationError("scenario: head " + std::to_string(h) +
                                      " is both sensitive and insensitive at layer " +
                                      std::to_string(l));
            }
        }
    }

    if (s.gamma.empty()) {
        s.gamma.assign(L, 0.0);
        const std::size_t mid = *s.l_mid;
        if (L - 1 > mid) {
            for (std::size_t l = mid + 1; l < L; ++l) {
                s.gamma[l] = s.gamma_max * static_cast<double>(l - mid) /
                             static_cast<double>(L - 1 - mid);
            }
        }
    }
    if (s.rho.empty()) {
        s.rho.assign(L, s.rho_first);
        for (std::size_t l = 0; l < L && L > 1; ++l) {
            s.rho[l] = s.rho_first + (s.rho_last - s.rho_first) * static_cast<double>(l) /
                                         static_cast<double>(L - 1);
        }
    }
    if (s.gamma.size() != L || s.rho.size() != L) {
        throw ArgumentError("scenario: gamma and rho need one entry per layer");
    }
    for (std::size_t l = 0; l < L; ++l) {
        if (!(s.gamma[l] >= 0.0 && s.gamma[l] <= 1.0)) {
            throw ArgumentError("scenario: gamma must lie in [0, 1]");
        }
        if (!(s.rho[l] >= 0.0 && s.rho[l] < 1.0)) {
            throw ArgumentError("scenario: rho must lie in [0, 1)");
        }
    }
    return s;
}

AttentionTrace make_scenario(const DriftScenario& spec) {
    const DriftScenario s = resolve_scenario(spec);
    const TokenLayout layout = build_layout(s.n_sys, s.n_vis, s.n_txt);
    const std::size_t S = layout.seq_len();
    const std::size_t n = s.n_vis;
    const std::size_t last = S - 1;
    Rng rng(s.seed);

    std::vector<Matrix> attn;
    attn.reserve(s.layers * s.heads);
    for (std::size_t l = 0; l < s.layers; ++l) {
        for (std::size_t h = 0; h < s.heads; ++h) {
            Matrix a(S, S);
            for (std::size_t i = 0; i < last; ++i) {
                const auto w = near_uniform(rng, i + 1, s.jitter);
                std::copy(w.begin(), w.end(), a.row(i).begin());
            }

            const double base_visual = 1.0 - s.rho[l];
            std::vector<double> visual;
            double visual_mass = 0.0;
            if (contains(s.sensitive_heads[l], h)) {
                const auto gt = concentrated(rng, n, s.gt_region, s.concentration, s.jitter);
                const auto noise = concentrated(rng, n, s.noise_region, s.concentration, s.jitter);
                visual.resize(n);
                for (std::size_t j = 0; j < n; ++j) {
                    visual[j] = (1.0 - s.gamma[l]) * gt[j] + s.gamma[l] * noise[j];
                }
                visual_mass = base_visual;
            } else if (contains(s.insensitive_heads[l], h)) {
                visual = concentrated(rng, n, s.noise_region, s.concentration, s.jitter);
                visual_mass = base_visual * s.insens_visual_ratio;
            } else {
                visual = near_uniform(rng, n, s.jitter);
                visual_mass = base_visual * s.other_visual_ratio * (1.0 + s.jitter * rng.symmetric());
            }
            const auto linguistic = near_uniform(rng, S - n, s.jitter);

            auto row = a.row(last);
            std::size_t k = 0;
            for (std::size_t j = 0; j < S; ++j) {
                if (layout.vis().contains(j)) {
                    row[j] = visual_mass * visual[j - layout.vis().begin];
                } else {
                    row[j] = (1.0 - visual_mass) * linguistic[k++];
                }
            }
            attn.push_back(std::move(a));
        }
    }

    std::vector<Matrix> values;
    if (s.with_values) {
        values.reserve(s.layers * s.heads);
        for (std::size_t k = 0; k < s.layers * s.heads; ++k) {
            Matrix v(S, s.head_dim);
            for (double& x : v.data()) {
                x = rng.normal();
            }
            values.push_back(std::move(v));
        }
    }

    TraceMeta meta;
    meta.model_id = "drift-scenario";
    meta.notes = "seed=" + std::to_string(s.seed);
    AttentionTrace trace(s.layers, s.heads, s.head_dim, layout,
                         std::move(attn), std::move(values), std::move(meta));
    trace.require_valid();
    return trace;
}

double region_mass(const AttentionTrace& trace, std::size_t layer,
                   const std::vector<std::size_t>& region) {
    const std::size_t last = trace.seq_len() - 1;
    const std::size_t vis0 = trace.layout().vis().begin;
    double total = 0.0;
    for (std::size_t h = 0; h < trace.heads(); ++h) {
        const auto row = trace.attn(layer, h).row(last);
        for (std::size_t j : region) {
            total += row[vis0 + j];
        }
    }
    return total / static_cast<double>(trace.heads());
}

} // namespace clva
