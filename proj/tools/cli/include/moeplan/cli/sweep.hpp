#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "moeplan/catalog.hpp"
#include "moeplan/planner.hpp"

namespace moeplan::cli {

enum class SweepVariable { microbatches, dp_degree, batch_size, gpu_pair };

std::string_view to_string(SweepVariable v);
SweepVariable parse_sweep_variable(std::string_view text);

struct SweepSpec {
  SweepVariable variable = SweepVariable::microbatches;
  // Integers for microbatches / dp_degree / batch_size, "ATTN/EXPERT" for gpu_pair.
  std::vector<std::string> values;
  PlanSkeleton fixed;
  std::int64_t attn_batch = 64;  // requests per attention node per micro-batch

  // Throws ConfigError on an empty range.
  void validate() const;
};

// Expands "1..4", "1,2,8" or "H20/L40S,L40S/H20" into sweep values.
std::vector<std::string> parse_sweep_values(std::string_view text);

struct SweepContext {
  MoeModelSpec model;
  WorkloadSpec workload;
  SearchLimits limits;
  Catalog catalog;
  GpuSpec gpu_a;
  GpuSpec gpu_e;
  CostModelFactory costs;
};

struct SweepRow {
  std::string value;
  bool feasible = false;  // false when the value could not be evaluated
  std::string binding;    // first violated plan constraint, "none" when all hold
  std::string error;      // why an infeasible row failed
  PlanSkeleton skeleton;
  std::string gpu_a;
  std::string gpu_e;
  std::int64_t global_batch = 0;
  StageTimes times;
  double latency = 0.0;  // simulated time of one decoding iteration (time between tokens)
  double throughput = 0.0;
  double normalized_throughput = 0.0;  // throughput / first feasible row's throughput
  double per_gpu_throughput = 0.0;
  double tpuc = 0.0;
  double attention_idle = 0.0;
  double expert_idle = 0.0;
};

// One row per value. Rows for invalid values are marked infeasible and the
// sweep continues. Latency comes from the event simulator, so micro-batch
// counts below the communication-hiding minimum are measured, not assumed.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, const SweepContext& ctx);

// value,feasible,binding,error,gpu_a,gpu_e,tp_a,tp_e,n_a,m,B,T_a,T_e,T_c,latency_s,
// throughput,normalized_throughput,per_gpu_throughput,tpuc,attention_idle,expert_idle
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace moeplan::cli
