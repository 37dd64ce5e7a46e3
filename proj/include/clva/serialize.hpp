// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/anchors.hpp"
#include "clva/diagnostics.hpp"
#include "clva/experiment.hpp"
#include "clva/profiler.hpp"
#include "clva/reanchor.hpp"
#include "clva/scenario.hpp"

#include <json.hpp>

// JSON documents exchanged between CLI stages. Conversions are found by
// nlohmann::json through ADL.

namespace clva {

void to_json(nlohmann::json& j, const SaliencyMap& m);
void from_json(const nlohmann::json& j, SaliencyMap& m);

void to_json(nlohmann::json& j, const AnchorSet& a);
void from_json(const nlohmann::json& j, AnchorSet& a);

void to_json(nlohmann::json& j, const InterventionConfig& c);
void to_json(nlohmann::json& j, const InterventionReport& r);
void to_json(nlohmann::json& j, const DriftMetrics& m);
void to_json(nlohmann::json& j, const HeadProfile& p);

void to_json(nlohmann::json& j, const DriftScenario& s);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, DriftScenario& s);

void to_json(nlohmann::json& j, const ExperimentReport& r);

/// Validates an anchor document (array lengths, mask values) and converts it.
/// Throws ValidationError.
AnchorSet parse_anchor_set(const nlohmann::json& j);

} // namespace clva
