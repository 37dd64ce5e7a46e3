// SPDX-License-Identifier: Apache-2.0

#include "clva/experiment.hpp"

#include "clva/csv.hpp"
#include "clva/errors.hpp"

#include <algorithm>
#include <future>
#include <ostream>

namespace clva {

PipelineResult run_pipeline(const AttentionTrace& trace, const PipelineParams& params) {
    const AnchorLayers defaults = default_anchor_layers(trace.layers());
    AnchorOptions opt;
    opt.l_mid = params.l_mid.value_or(defaults.mid);
    opt.l_neg = params.l_neg.value_or(defaults.neg);
    opt.tau = params.tau;
    opt.epsilon = params.epsilon;
    opt.all_columns = params.cfg.placement == Placement::compressor_cross_attention;

    PipelineResult r;
    r.profile = profile_trace(trace, params.lambda_vis);
    r.anchors = derive_anchor_set(trace, r.profile, opt);
    r.intervention = apply_to_trace(trace, r.anchors, params.cfg);
    if (!opt.all_columns) {
        r.pre = drift_report(trace, r.profile, r.anchors);
        r.post = drift_report(r.intervention.trace, r.profile, r.anchors);
    }
    return r;
}

namespace {

std::optional<DecompositionSummary> summarize(const AttentionTrace& trace) {
    if (!trace.has_values()) {
        return std::nullopt;
    }
    DecompositionSummary s;
    const std::size_t last_layer = trace.layers() - 1;
    for (std::size_t h = 0; h < trace.heads(); ++h) {
        const auto d = output_decomposition(trace, last_layer, h, trace.seq_len() - 1);
        s.linguistic_norm += d.linguistic_norm;
        s.visual_norm += d.visual_norm;
    }
    s.linguistic_norm /= static_cast<double>(trace.heads());
    s.visual_norm /= static_cast<double>(trace.heads());
    return s;
}

} // namespace

ExperimentReport run_experiment(const DriftScenario& scenario, const PipelineParams& params) {
    ExperimentReport rep;
    rep.scenario = resolve_scenario(scenario);
    rep.params = params;
    PipelineParams p = params;
    if (!p.l_mid) {
        p.l_mid = rep.scenario.l_mid;
    }
    rep.params = p;
    const AttentionTrace trace = make_scenario(rep.scenario);
    rep.pipeline = run_pipeline(trace, p);

    const AttentionTrace& after = rep.pipeline.intervention.trace;
    const std::size_t last = trace.layers() - 1;
    rep.gt_mass_pre = region_mass(trace, last, rep.scenario.gt_region);
    rep.gt_mass_post = region_mass(after, last, rep.scenario.gt_region);
    rep.noise_mass_pre = region_mass(trace, last, rep.scenario.noise_region);
    rep.noise_mass_post = region_mass(after, last, rep.scenario.noise_region);
    if (!rep.pipeline.pre.r_neg.empty()) {
        rep.r_neg_pre = rep.pipeline.pre.r_neg.back();
        rep.r_neg_post = rep.pipeline.post.r_neg.back();
    }
    rep.decomposition_pre = summarize(trace);
    rep.decomposition_post = summarize(after);
    return rep;
}

ExperimentReport run_experiment(const DriftScenario& scenario, const InterventionConfig& cfg,
                                double tau, double lambda_vis) {
    PipelineParams p;
    p.cfg = cfg;
    p.tau = tau;
    p.lambda_vis = lambda_vis;
    return run_experiment(scenario, p);
}

namespace {

template <typename Cell>
std::vector<SweepRow> sweep_grid(const std::vector<double>& alphas,
                                 const std::vector<double>& betas, Cell cell) {
    if (alphas.empty() || betas.empty()) {
        throw ArgumentError("sweep: alpha and beta grids must be non-empty");
    }
    std::vector<std::future<SweepRow>> jobs;
    jobs.reserve(alphas.size() * betas.size());
    for (double a : alphas) {
        for (double b : betas) {
            jobs.push_back(std::async(std::launch::async, cell, a, b));
        }
    }
    std::vector<SweepRow> rows;
    rows.reserve(jobs.size());
    for (auto& j : jobs) {
        rows.push_back(j.get());
    }
    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& x, const SweepRow& y) {
        return x.alpha != y.alpha ? x.alpha < y.alpha : x.beta < y.beta;
    });
    return rows;
}

} // namespace

std::vector<SweepRow> run_sweep(const DriftScenario& scenario, const std::vector<double>& alphas,
                                const std::vector<double>& betas, const PipelineParams& fixed) {
    const DriftScenario resolved = resolve_scenario(scenario);
    return sweep_grid(alphas, betas, [&](double a, double b) {
        PipelineParams p = fixed;
        p.cfg.alpha = a;
        p.cfg.beta = b;
        const ExperimentReport rep = run_experiment(resolved, p);
        return SweepRow{a, b, rep.gt_mass_post, rep.r_neg_post};
    });
}

std::vector<SweepRow> run_sweep(const AttentionTrace& trace, const std::vector<double>& alphas,
                                const std::vector<double>& betas, const PipelineParams& fixed) {
    return sweep_grid(alphas, betas, [&](double a, double b) {
        PipelineParams p = fixed;
        p.cfg.alpha = a;
        p.cfg.beta = b;
        const PipelineResult r = run_pipeline(trace, p);
        SweepRow row{a, b, std::nullopt, std::nullopt};
        if (!r.post.r_neg.empty()) {
            row.r_neg = r.post.r_neg.back();
        }
        return row;
    });
}

void export_sweep(const std::vector<SweepRow>& rows, std::ostream& sink) {
    sink << "alpha,beta,gt_mass,r_neg\n";
    for (const SweepRow& r : rows) {
        sink << csv_number(r.alpha) << ',' << csv_number(r.beta) << ',' << csv_number(r.gt_mass)
             << ',' << csv_number(r.r_neg) << '\n';
    }
    if (!sink) {
        throw IoError("export_sweep: sink write failed");
    }
}

} // namespace clva
