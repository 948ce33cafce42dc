#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string_view>
#include <vector>

#include "moeplan/perf_model.hpp"

namespace moeplan {

struct ExpertLoad {
  int expert_id = 0;
  double active_cost = 0.0;  // a_i, cost of the expert's active tokens per batch
};

enum class PlacementMode { integral, replicated, fractional };

std::string_view to_string(PlacementMode mode);
PlacementMode parse_placement_mode(std::string_view text);

struct BalanceOptions {
  PlacementMode mode = PlacementMode::integral;
  int max_replicas = 2;                      // replicated mode only
  std::optional<int> max_experts_per_node;   // integral and replicated modes
  int rebalance_interval = 1;                // decoding iterations between rebalances, carried to the output
};

// Allocation fractions x(i, j) of expert i on node j, rows sum to one.
struct Placement {
  PlacementMode mode = PlacementMode::integral;
  int max_replicas = 1;
  int nodes = 0;
  std::vector<int> expert_ids;  // row order
  std::vector<double> x;        // row-major, expert_ids.size() x nodes

  int experts() const { return static_cast<int>(expert_ids.size()); }
  double& at(int expert, int node) { return x[static_cast<std::size_t>(expert) * nodes + node]; }
  double at(int expert, int node) const { return x[static_cast<std::size_t>(expert) * nodes + node]; }
  int replicas(int expert) const;

  // Throws std::invalid_argument unless every row sums to 1 (within 1e-9),
  // entries lie in [0, 1] and the mode's per-row support limit holds.
  void validate() const;
};

// C_j = sum_i x(i, j) * max(a_i, k_cold). Loads are matched to rows by position.
std::vector<double> node_cost(const Placement& placement, const std::vector<ExpertLoad>& loads, double k_cold);

// Greedy placement minimising max_j C_j. Experts are taken in decreasing
// effective cost max(a_i, k_cold).
//   integral:   each expert to the least-loaded node (LPT).
//   replicated: experts above the average node cost are split evenly over up
//               to max_replicas distinct nodes, then all pieces go LPT.
//   fractional: wrap-around fill of nodes to exactly the average cost.
// Ties go to the lowest node index.
Placement balance_experts(const std::vector<ExpertLoad>& loads, int nodes, double k_cold,
                          const BalanceOptions& options = {});

struct Request {
  std::int64_t id = 0;
  std::int64_t seq_len = 0;
};

struct AttnBatchPlan {
  std::vector<std::vector<std::int64_t>> node_requests;  // request ids per node
  std::vector<double> node_time;                         // predicted seconds, fixed cost included
  double target_time = 0.0;
  int over_target = 0;  // nodes whose predicted time exceeds target_time

  double max_time() const;
  double min_time() const;
  double imbalance_ratio() const { return max_time() / min_time(); }
};

// Per-request cost alpha * seq_len + beta; each node also pays the fixed cost
// k2. Requests are taken longest first onto the least-loaded node (ties to
// the lowest index), then single moves or swaps between the slowest and the
// fastest node are applied while they lower max / min. Nodes still above
// target_time are counted in `over_target`.
AttnBatchPlan compose_attention_batches(const std::vector<Request>& requests, int n_a, const CostModel& cm,
                                        double target_time);

// CSV with header id,seq_len.
std::vector<Request> read_requests(std::istream& in, std::string_view origin = "<requests>");

struct LoadTraceRow {
  int layer = 0;
  int expert_id = 0;
  double token_count = 0.0;
};

// CSV with header layer,expert_id,token_count.
std::vector<LoadTraceRow> read_load_trace(std::istream& in, std::string_view origin = "<trace>");

// Per-expert token totals, over one layer or summed over all, by expert id.
std::vector<ExpertLoad> loads_from_trace(const std::vector<LoadTraceRow>& rows,
                                         std::optional<int> layer = std::nullopt);

}  // namespace moeplan
