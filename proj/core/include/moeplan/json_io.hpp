#pragma once

// JSON encodings of the library's public structures. Every from_json accepts
// exactly what the matching to_json emits; unknown keys are rejected with a
// ConfigError naming the offending path.

#include <string_view>

#include <nlohmann/json.hpp>

#include "moeplan/balance.hpp"
#include "moeplan/catalog.hpp"
#include "moeplan/perf_model.hpp"
#include "moeplan/pipeline.hpp"
#include "moeplan/planner.hpp"

namespace moeplan {

using nlohmann::json;

// Overlay readers: keys present in `j` replace the corresponding fields of
// `dst`, others keep their current value. `path` prefixes error messages.
void read_gpu(const json& j, GpuSpec& dst, std::string_view path);
void read_model(const json& j, MoeModelSpec& dst, std::string_view path);
void read_workload(const json& j, WorkloadSpec& dst, std::string_view path);
void read_limits(const json& j, SearchLimits& dst, std::string_view path);

void to_json(json& j, const GpuSpec& g);
void from_json(const json& j, GpuSpec& g);
void to_json(json& j, const MoeModelSpec& m);
void from_json(const json& j, MoeModelSpec& m);
void to_json(json& j, const WorkloadSpec& w);
void from_json(const json& j, WorkloadSpec& w);
void to_json(json& j, const SearchLimits& l);
void from_json(const json& j, SearchLimits& l);

void to_json(json& j, const UtilCurve& u);
void from_json(const json& j, UtilCurve& u);
void to_json(json& j, const CommBackend& b);
void from_json(const json& j, CommBackend& b);
void to_json(json& j, const CostModel& cm);
void from_json(const json& j, CostModel& cm);

void to_json(json& j, const StageTimes& t);
void from_json(const json& j, StageTimes& t);
void to_json(json& j, const MemoryReport& r);
void from_json(const json& j, MemoryReport& r);
void to_json(json& j, const ConstraintSlack& s);
void from_json(const json& j, ConstraintSlack& s);
void to_json(json& j, const DeploymentPlan& p);
void from_json(const json& j, DeploymentPlan& p);

Binding parse_binding(std::string_view text);

// The timeline is included only when non-empty.
void to_json(json& j, const SimReport& r);
void from_json(const json& j, SimReport& r);
void to_json(json& j, const JitterReport& r);
void from_json(const json& j, JitterReport& r);

void to_json(json& j, const Placement& p);
void from_json(const json& j, Placement& p);
void to_json(json& j, const AttnBatchPlan& p);
void from_json(const json& j, AttnBatchPlan& p);

// Output-only summaries.
void to_json(json& j, const CandidateRecord& c);
void to_json(json& j, const SearchResult& r);
void to_json(json& j, const HeteroResult& r);

}  // namespace moeplan
