#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moeplan/catalog.hpp"
#include "moeplan/perf_model.hpp"
#include "moeplan/pipeline.hpp"

namespace moeplan {

// Structural choice of a plan before the batch size is fixed.
struct PlanSkeleton {
  int tp_a = 1;
  int tp_e = 1;
  int n_a = 1;      // attention nodes
  int experts = 1;  // expert nodes, one expert each
  int m = 3;        // micro-batches

  bool operator==(const PlanSkeleton&) const = default;
};

// Remaining headroom of each acceptance constraint; negative means violated.
struct ConstraintSlack {
  double balance = 0.0;           // slack - |T_a - T_e| / T_f
  double comm_hiding = 0.0;       // T_f - T_c, seconds
  int microbatches = 0;           // m - min_microbatches (or -m when unhideable)
  double attention_memory = 0.0;  // bytes
  double expert_memory = 0.0;     // bytes
  double slo = 0.0;               // SLO - T_iter_upper, seconds

  bool operator==(const ConstraintSlack&) const = default;
};

// Constraint that rejected a candidate. `none` marks an accepted plan.
enum class Binding {
  none,
  attention_memory,  // tp_a * C_a <= P_a, or KV cache overflow at the smallest batch
  expert_memory,     // tp_e * C_e <= P_e
  slo,               // no batch meets the latency SLO
  comm_not_hidden,   // T_c >= T_f
  microbatches,      // m < min_microbatches
  balance,           // |T_a - T_e| / T_f above the configured slack
  no_cost_model,     // cost provider has no model for this (tp_a, tp_e)
};

std::string_view to_string(Binding b);

struct DeploymentPlan {
  PlanSkeleton skeleton;
  std::int64_t global_batch = 0;  // B, multiple of m * n_a
  GpuSpec gpu_a;
  GpuSpec gpu_e;
  CostMetric metric = CostMetric::price;

  double attn_batch = 0.0;    // b_a = B / (m n_a)
  double expert_batch = 0.0;  // b_e = B K / (m E), times the configured imbalance
  StageTimes times;
  double iter_upper = 0.0;       // m T_f L
  double total_latency = 0.0;    // closed form, one decoding iteration
  double simulated_total = 0.0;  // event simulator, 0 until filled
  double throughput = 0.0;       // tokens / s
  double cost = 0.0;             // price or watts of the deployment
  double tpuc = 0.0;
  MemoryReport memory;
  ConstraintSlack slack;
  Binding binding = Binding::none;

  int total_gpus() const { return skeleton.tp_a * skeleton.n_a + skeleton.tp_e * skeleton.experts; }
};

// Planner inputs shared by every candidate.
struct PlanContext {
  MoeModelSpec model;
  WorkloadSpec workload;
  SearchLimits limits;
  GpuSpec gpu_a;
  GpuSpec gpu_e;
};

// Cost model for a concrete (attention GPU, tp_a, expert GPU, tp_e); nullopt
// when no calibration is available for that configuration.
using CostModelFactory =
    std::function<std::optional<CostModel>(const GpuSpec& gpu_a, int tp_a, const GpuSpec& gpu_e, int tp_e)>;

// Roofline-calibrated factory (one calibration per call).
CostModelFactory synthetic_cost_factory(const MoeModelSpec& model, const WorkloadSpec& workload,
                                        RooflineOracle oracle = {}, UtilCurve util = {},
                                        CommBackend backend = CommBackend::m2n());
// Same model for every configuration, e.g. calibrated from a measured profile.
CostModelFactory fixed_cost_factory(CostModel cm);

// n_a balancing attention and expert time: (k1 E) / (k3 K) rounded to the
// neighbouring integer that minimises |T_a - T_e| at a representative
// per-node micro-batch (ties pick the smaller), at least 1.
int balance_attention_nodes(const CostModel& cm, int experts, int topk, double representative_batch = 128.0);

// Evaluates every derived metric and constraint of a plan at global batch B.
// `binding` names the first violated constraint (memory, SLO, then
// constraints 2, 3, 1), or none.
DeploymentPlan evaluate_plan(const PlanSkeleton& skeleton, std::int64_t global_batch, const PlanContext& ctx,
                             const CostModel& cm);

// Largest B (multiple of m n_a) meeting T_iter_upper <= SLO and the KV
// capacity constraint, found by doubling then binary search. nullopt when
// even B = m n_a is infeasible.
std::optional<DeploymentPlan> max_batch_under_slo(const PlanSkeleton& skeleton, const PlanContext& ctx,
                                                  const CostModel& cm);

// Largest B satisfying every plan constraint, at most the max_batch_under_slo
// batch. When no smaller batch helps, the SLO/KV-limited plan is returned with
// its binding constraint set; nullopt when even B = m n_a breaks SLO or memory.
std::optional<DeploymentPlan> max_feasible_batch(const PlanSkeleton& skeleton, const PlanContext& ctx,
                                                 const CostModel& cm);

// Enumerated values; empty vectors mean the defaults ({1,2,4,8} capped by the
// node size, m in 3..N_m).
struct SearchSpace {
  std::vector<int> tp_a;
  std::vector<int> tp_e;
  std::vector<int> microbatches;
};

std::vector<int> tp_choices(const GpuSpec& gpu);

struct CandidateRecord {
  PlanSkeleton skeleton;
  Binding binding = Binding::none;
  std::optional<DeploymentPlan> plan;  // evaluated plan, also for rejected ones when available
};

struct SearchResult {
  std::optional<DeploymentPlan> best;
  std::vector<CandidateRecord> candidates;  // canonical (tp_e, tp_a, m) order
  int evaluations = 0;                      // batch-size searches performed

  bool feasible() const { return best.has_value(); }
  // Most frequent rejection reason when nothing is feasible.
  Binding binding() const;
};

// True when `a` should be preferred over `b`: higher tpuc, then fewer GPUs,
// smaller m, smaller tp_a.
bool plan_better(const DeploymentPlan& a, const DeploymentPlan& b);

// Deployment plan search for the decoding phase over tp sizes and
// micro-batch counts; picks the highest throughput per unit cost.
SearchResult search(const PlanContext& ctx, const CostModelFactory& costs, const SearchSpace& space = {});

struct PairResult {
  std::string gpu_a;
  std::string gpu_e;
  SearchResult result;
};

struct HeteroResult {
  std::vector<PairResult> ranked;      // feasible pairs, best first
  std::vector<PairResult> infeasible;  // searched, no plan
  std::vector<std::pair<std::string, std::string>> excluded;  // (pair, reason), never searched
};

// Runs search() for every ordered (attention GPU, expert GPU) pair of the
// catalog. Under the power metric pairs with a GPU lacking max_power are
// excluded. Pairs are searched concurrently; output order is canonical.
HeteroResult hetero_search(const MoeModelSpec& model, const Catalog& catalog, const CostModelFactory& costs,
                           const WorkloadSpec& workload, const SearchLimits& limits,
                           const SearchSpace& space = {});

// CSV of every candidate: tp_a,tp_e,n_a,m,B,T_a,T_e,T_c,iter_upper,tpuc,binding
void write_candidates_csv(std::ostream& out, const SearchResult& result);

}  // namespace moeplan
