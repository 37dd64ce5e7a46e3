// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/anchors.hpp"
#include "clva/diagnostics.hpp"
#include "clva/profiler.hpp"
#include "clva/reanchor.hpp"
#include "clva/scenario.hpp"
#include "clva/trace.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

namespace clva {

struct PipelineParams {
    InterventionConfig cfg;
    double tau = kDefaultTau;
    double lambda_vis = kDefaultLambdaVis;
    double epsilon = kDefaultEpsilon;
    /// Default anchor layers when unset.
    std::optional<std::size_t> l_mid;
    std::optional<std::size_t> l_neg;
};

/// profile -> anchors -> intervene -> diagnose on one trace.
struct PipelineResult {
    HeadProfile profile;
    AnchorSet anchors;
    InterventionOutcome intervention;
    DriftMetrics pre;
    DriftMetrics post;
};

PipelineResult run_pipeline(const AttentionTrace& trace, const PipelineParams& params);

/// Final-layer decomposition norms averaged over heads at the last row.
struct DecompositionSummary {
    double linguistic_norm = 0.0;
    double visual_norm = 0.0;
};

struct ExperimentReport {
    DriftScenario scenario; ///< resolved
    PipelineParams params;
    PipelineResult pipeline;
    double gt_mass_pre = 0.0;
    double gt_mass_post = 0.0;
    double noise_mass_pre = 0.0;
    double noise_mass_post = 0.0;
    std::optional<double> r_neg_pre;
    std::optional<double> r_neg_post;
    std::optional<DecompositionSummary> decomposition_pre;
    std::optional<DecompositionSummary> decomposition_post;
};

/// Generates the scenario trace, runs the pipeline, and reports final-layer
/// ground-truth mass and negative-reference correlation before and after.
ExperimentReport run_experiment(const DriftScenario& scenario, const PipelineParams& params);

ExperimentReport run_experiment(const DriftScenario& scenario, const InterventionConfig& cfg,
                                double tau = kDefaultTau, double lambda_vis = kDefaultLambdaVis);

struct SweepRow {
    double alpha = 0.0;
    double beta = 0.0;
    std::optional<double> gt_mass; ///< empty for a plain trace (no ground truth)
    std::optional<double> r_neg;
};

/// Evaluates every (alpha, beta) pair of the grids with the remaining
/// parameters fixed. Cells run concurrently; rows come back sorted by
/// (alpha, beta).
std::vector<SweepRow> run_sweep(const DriftScenario& scenario, const std::vector<double>& alphas,
                                const std::vector<double>& betas, const PipelineParams& fixed);

std::vector<SweepRow> run_sweep(const AttentionTrace& trace, const std::vector<double>& alphas,
                                const std::vector<double>& betas, const PipelineParams& fixed);

/// CSV: alpha,beta,gt_mass,r_neg.
void export_sweep(const std::vector<SweepRow>& rows, std::ostream& sink);

} // namespace clva
