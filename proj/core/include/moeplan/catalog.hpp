#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace moeplan {

// All physical quantities use SI base units: bytes, bytes/second, FLOP/second,
// seconds, watts. Prices are dimensionless relative costs.
inline constexpr double kGB = 1e9;
inline constexpr double kTFLOPS = 1e12;

struct GpuSpec {
  std::string name;
  double price = 0.0;            // relative cost units (L20 = 1.00)
  double mem_capacity = 0.0;     // bytes
  double mem_bandwidth = 0.0;    // bytes/s
  double compute = 0.0;          // FLOP/s, bf16 dense
  double net_bandwidth = 0.0;    // bytes/s, inter-node, per GPU
  double intra_bandwidth = 0.0;  // bytes/s, intra-node (NVLink/PCIe), per GPU
  std::optional<double> max_power;  // watts; unknown when absent
  int max_gpus_per_node = 8;

  // Throws ConfigError naming the violated invariant.
  void validate() const;

  bool operator==(const GpuSpec&) const = default;
};

// Ordered collection of GPU types with case-insensitive lookup.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<GpuSpec> entries);

  const GpuSpec* find(std::string_view name) const;
  const GpuSpec& at(std::string_view name) const;

  const std::vector<GpuSpec>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool operator==(const Catalog&) const = default;

 private:
  std::vector<GpuSpec> entries_;
};

struct MoeModelSpec {
  std::string name;
  int layers = 0;
  int hidden = 0;
  int intermediate = 0;
  int experts = 0;
  int topk = 0;
  int gqa_group = 1;  // query heads per KV head
  std::optional<int> head_dim;
  int bytes_per_param = 2;

  void validate() const;

  bool operator==(const MoeModelSpec&) const = default;
};

struct WorkloadSpec {
  std::int64_t avg_seq_len = 730;  // tokens resident in KV cache per request
  double slo_tbt = 0.150;          // seconds
  std::int64_t input_len_median = 571;
  std::int64_t output_len_median = 159;

  void validate() const;

  bool operator==(const WorkloadSpec&) const = default;
};

enum class CostMetric { price, power };

struct SearchLimits {
  int max_microbatches = 4;
  CostMetric cost_metric = CostMetric::price;
  // Allowed |T_a - T_e| / T_f for an accepted plan.
  double balance_slack = 0.10;
  // Multiplier on the average expert batch; > 1 models hot experts.
  double expert_imbalance = 1.0;

  void validate() const;

  bool operator==(const SearchLimits&) const = default;
};

Catalog builtin_catalog();
std::vector<MoeModelSpec> builtin_models();

// Case-insensitive; accepts a few spellings ("mixtral", "scaled_moe").
std::optional<MoeModelSpec> find_builtin_model(std::string_view name);
MoeModelSpec builtin_model(std::string_view name);

std::string_view to_string(CostMetric metric);
CostMetric parse_cost_metric(std::string_view text);

// Lower-cased copy with '_' and ' ' folded to '-'.
std::string normalize_name(std::string_view name);

}  // namespace moeplan
