// SPDX-License-Identifier: Apache-2.0

#include "clva/serialize.hpp"

#include "clva/errors.hpp"

namespace clva {

using nlohmann::json;

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json optional_series(const std::vector<std::optional<double>>& xs) {
    json arr = json::array();
    for (const auto& x : xs) {
        arr.push_back(optional_json(x));
    }
    return arr;
}

json masses_json(const RowMasses& m) {
    return {{"pos", m.pos}, {"neg", m.neg}, {"linguistic", m.linguistic}};
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        out = it->get<T>();
    }
}

} // namespace

void to_json(json& j, const SaliencyMap& m) {
    j = {{"values", m.values},
         {"source_layer", m.source_layer},
         {"source_heads", m.source_heads},
         {"query_row", m.query_row}};
}

void from_json(const json& j, SaliencyMap& m) {
    j.at("values").get_to(m.values);
    read_if(j, "source_layer", m.source_layer);
    read_if(j, "source_heads", m.source_heads);
    read_if(j, "query_row", m.query_row);
}

void to_json(json& j, const AnchorSet& a) {
    j = {{"l_mid", a.l_mid},
         {"l_neg", a.l_neg},
         {"tau", a.tau},
         {"epsilon", a.epsilon},
         {"pos_map", a.pos_map.values},
         {"neg_map", a.neg_map.values},
         {"pos_z", a.pos_z},
         {"neg_z", a.neg_z},
         {"pos_mask", a.pos_mask},
         {"neg_mask", a.neg_mask},
         {"pos_heads", a.pos_map.source_heads},
         {"neg_heads", a.neg_map.source_heads},
         {"query_row", a.pos_map.query_row}};
}

void from_json(const json& j, AnchorSet& a) {
    j.at("l_mid").get_to(a.l_mid);
    j.at("l_neg").get_to(a.l_neg);
    j.at("tau").get_to(a.tau);
    j.at("epsilon").get_to(a.epsilon);
    j.at("pos_map").get_to(a.pos_map.values);
    j.at("neg_map").get_to(a.neg_map.values);
    j.at("pos_z").get_to(a.pos_z);
    j.at("neg_z").get_to(a.neg_z);
    j.at("pos_mask").get_to(a.pos_mask);
    j.at("neg_mask").get_to(a.neg_mask);
    read_if(j, "pos_heads", a.pos_map.source_heads);
    read_if(j, "neg_heads", a.neg_map.source_heads);
    std::size_t row = 0;
    read_if(j, "query_row", row);
    a.pos_map.query_row = row;
    a.neg_map.query_row = row;
    a.pos_map.source_layer = a.l_mid;
    a.neg_map.source_layer = a.l_neg;
}

AnchorSet parse_anchor_set(const json& j) {
    AnchorSet a;
    try {
        a = j.get<AnchorSet>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("anchor document: ") + e.what());
    }
    const std::size_t n = a.pos_mask.size();
    if (a.neg_mask.size() != n || a.pos_map.size() != n || a.neg_map.size() != n ||
        a.pos_z.size() != n || a.neg_z.size() != n) {
        throw ValidationError("anchor document: arrays differ in length");
    }
    for (auto v : a.pos_mask) {
        if (v > 1) throw ValidationError("anchor document: mask entries must be 0 or 1");
    }
    for (auto v : a.neg_mask) {
        if (v > 1) throw ValidationError("anchor document: mask entries must be 0 or 1");
    }
    return a;
}

void to_json(json& j, const InterventionConfig& c) {
    j = {{"alpha", c.alpha},
         {"beta", c.beta},
         {"sign_mode", to_string(c.sign_mode)},
         {"placement", to_string(c.placement)},
         {"anchor_refresh", to_string(c.anchor_refresh)},
         {"clamp_floor", c.clamp_floor}};
    if (c.layer_range) {
        j["layer_range"] = {c.layer_range->begin, c.layer_range->end};
    } else {
        j["layer_range"] = nullptr;
    }
}

void to_json(json& j, const InterventionReport& r) {
    json layers = json::array();
    for (const auto& l : r.layers) {
        layers.push_back({{"layer", l.layer},
                          {"rows_touched", l.rows_touched},
                          {"pre", masses_json(l.pre)},
                          {"post", masses_json(l.post)}});
    }
    json normalizers = json::array();
    for (const auto& row : r.rows) {
        normalizers.push_back(
            {{"layer", row.layer}, {"head", row.head}, {"row", row.row},
             {"touched", row.touched}, {"normalizer", row.normalizer}});
    }
    j = {{"layer_range", {r.range.begin, r.range.end}},
         {"rows_touched", r.rows_touched},
         {"layers", layers},
         {"rows", normalizers}};
}

void to_json(json& j, const DriftMetrics& m) {
    j = {{"layer", m.layer},
         {"entropy", m.entropy},
         {"r_neg", optional_series(m.r_neg)},
         {"r_pos", optional_series(m.r_pos)}};
}

void to_json(json& j, const HeadProfile& p) {
    json vis = json::array();
    json prompt = json::array();
    for (std::size_t l = 0; l < p.layers(); ++l) {
        auto v = p.vis_intensity.row(l);
        auto q = p.prompt_intensity.row(l);
        vis.push_back(std::vector<double>(v.begin(), v.end()));
        prompt.push_back(std::vector<double>(q.begin(), q.end()));
    }
    j = {{"vis_intensity", vis},
         {"prompt_intensity", prompt},
         {"lambda_vis", p.lambda_vis},
         {"per_layer_mean", p.per_layer_mean},
         {"per_layer_std", p.per_layer_std},
         {"sens", p.sens},
         {"insens", p.insens},
         {"sens_fallback", p.sens_fallback},
         {"insens_fallback", p.insens_fallback}};
}

void to_json(json& j, const DriftScenario& s) {
    j = {{"layers", s.layers},
         {"heads", s.heads},
         {"n_sys", s.n_sys},
         {"n_vis", s.n_vis},
         {"n_txt", s.n_txt},
         {"head_dim", s.head_dim},
         {"with_values", s.with_values},
         {"gt_region", s.gt_region},
         {"noise_region", s.noise_region},
         {"sensitive_heads", s.sensitive_heads},
         {"insensitive_heads", s.insensitive_heads},
         {"gamma", s.gamma},
         {"gamma_max", s.gamma_max},
         {"rho", s.rho},
         {"rho_first", s.rho_first},
         {"rho_last", s.rho_last},
         {"concentration", s.concentration},
         {"insens_visual_ratio", s.insens_visual_ratio},
         {"other_visual_ratio", s.other_visual_ratio},
         {"jitter", s.jitter},
         {"seed", s.seed}};
    j["l_mid"] = s.l_mid ? json(*s.l_mid) : json(nullptr);
}

void from_json(const json& j, DriftScenario& s) {
    read_if(j, "layers", s.layers);
    read_if(j, "heads", s.heads);
    read_if(j, "n_sys", s.n_sys);
    read_if(j, "n_vis", s.n_vis);
    read_if(j, "n_txt", s.n_txt);
    read_if(j, "head_dim", s.head_dim);
    read_if(j, "with_values", s.with_values);
    read_if(j, "gt_region", s.gt_region);
    read_if(j, "noise_region", s.noise_region);
    read_if(j, "sensitive_heads", s.sensitive_heads);
    read_if(j, "insensitive_heads", s.insensitive_heads);
    read_if(j, "gamma", s.gamma);
    read_if(j, "gamma_max", s.gamma_max);
    read_if(j, "rho", s.rho);
    read_if(j, "rho_first", s.rho_first);
    read_if(j, "rho_last", s.rho_last);
    read_if(j, "concentration", s.concentration);
    read_if(j, "insens_visual_ratio", s.insens_visual_ratio);
    read_if(j, "other_visual_ratio", s.other_visual_ratio);
    read_if(j, "jitter", s.jitter);
    read_if(j, "seed", s.seed);
    if (auto it = j.find("l_mid"); it != j.end() && !it->is_null()) {
        s.l_mid = it->get<std::size_t>();
    }
}

void to_json(json& j, const ExperimentReport& r) {
    auto decomposition = [](const std::optional<DecompositionSummary>& d) {
        return d ? json{{"linguistic_norm", d->linguistic_norm}, {"visual_norm", d->visual_norm}}
                 : json(nullptr);
    };
    j = {{"scenario", r.scenario},
         {"config", r.params.cfg},
         {"tau", r.params.tau},
         {"lambda_vis", r.params.lambda_vis},
         {"epsilon", r.params.epsilon},
         {"profile", r.pipeline.profile},
         {"anchors", r.pipeline.anchors},
         {"intervention", r.pipeline.intervention.report},
         {"drift_pre", r.pipeline.pre},
         {"drift_post", r.pipeline.post},
         {"gt_mass_pre", r.gt_mass_pre},
         {"gt_mass_post", r.gt_mass_post},
         {"noise_mass_pre", r.noise_mass_pre},
         {"noise_mass_post", r.noise_mass_post},
         {"r_neg_pre", optional_json(r.r_neg_pre)},
         {"r_neg_post", optional_json(r.r_neg_post)},
         {"decomposition_pre", decomposition(r.decomposition_pre)},
         {"decomposition_post", decomposition(r.decomposition_post)}};
}

} // namespace clva
