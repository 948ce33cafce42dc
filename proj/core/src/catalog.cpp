#include "moeplan/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "moeplan/error.hpp"

namespace moeplan {
namespace {

void require_positive(double value, std::string_view what, std::string_view owner) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ConfigError(fmt::format("{}: {} must be > 0 (got {})", owner, what, value));
  }
}

void require_positive(std::int64_t value, std::string_view what, std::string_view owner) {
  if (value <= 0) {
    throw ConfigError(fmt::format("{}: {} must be > 0 (got {})", owner, what, value));
  }
}

}  // namespace

std::string normalize_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    if (c == '_' || c == ' ') {
      out.push_back('-');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

void GpuSpec::validate() const {
  if (name.empty()) throw ConfigError("gpu: name must not be empty");
  require_positive(price, "price", name);
  require_positive(mem_capacity, "mem_capacity", name);
  require_positive(mem_bandwidth, "mem_bandwidth", name);
  require_positive(compute, "compute", name);
  require_positive(net_bandwidth, "net_bandwidth", name);
  require_positive(intra_bandwidth, "intra_bandwidth", name);
  if (max_power) require_positive(*max_power, "max_power", name);
  if (max_gpus_per_node != 1 && max_gpus_per_node != 2 && max_gpus_per_node != 4 &&
      max_gpus_per_node != 8) {
    throw ConfigError(fmt::format("{}: max_gpus_per_node must be one of 1,2,4,8 (got {})", name,
                                  max_gpus_per_node));
  }
}

Catalog::Catalog(std::vector<GpuSpec> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    entries_[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (normalize_name(entries_[i].name) == normalize_name(entries_[j].name)) {
        throw ConfigError(fmt::format("catalog: duplicate GPU name '{}'", entries_[i].name));
      }
    }
  }
}

const GpuSpec* Catalog::find(std::string_view name) const {
  const std::string key = normalize_name(name);
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const GpuSpec& g) { return normalize_name(g.name) == key; });
  return it == entries_.end() ? nullptr : &*it;
}

const GpuSpec& Catalog::at(std::string_view name) const {
  if (const GpuSpec* g = find(name)) return *g;
  throw ConfigError(fmt::format("unknown GPU '{}'", name));
}

void MoeModelSpec::validate() const {
  const std::string owner = name.empty() ? "model" : name;
  require_positive(std::int64_t{layers}, "layers", owner);
  require_positive(std::int64_t{hidden}, "hidden", owner);
  require_positive(std::int64_t{intermediate}, "intermediate", owner);
  require_positive(std::int64_t{experts}, "experts", owner);
  if (topk < 1 || topk > experts) {
    throw ConfigError(
        fmt::format("{}: K out of range (topk={} must satisfy 1 <= K <= E={})", owner, topk, experts));
  }
  if (gqa_group < 1) {
    throw ConfigError(fmt::format("{}: gqa_group must be >= 1 (got {})", owner, gqa_group));
  }
  if (bytes_per_param < 1) {
    throw ConfigError(fmt::format("{}: bytes_per_param must be >= 1 (got {})", owner, bytes_per_param));
  }
  if (head_dim) {
    if (*head_dim < 1 || hidden % *head_dim != 0) {
      throw ConfigError(
          fmt::format("{}: head_dim {} does not divide hidden {}", owner, *head_dim, hidden));
    }
    const int query_heads = hidden / *head_dim;
    if (query_heads % gqa_group != 0) {
      throw ConfigError(fmt::format("{}: gqa_group {} does not divide query head count {}", owner,
                                    gqa_group, query_heads));
    }
  }
}

void WorkloadSpec::validate() const {
  require_positive(avg_seq_len, "avg_seq_len", "workload");
  require_positive(slo_tbt, "slo_tbt", "workload");
  require_positive(input_len_median, "input_len_median", "workload");
  require_positive(output_len_median, "output_len_median", "workload");
}

void SearchLimits::validate() const {
  if (max_microbatches < 3) {
    throw ConfigError(fmt::format("limits: max_microbatches must be >= 3 (got {})", max_microbatches));
  }
  if (!(balance_slack >= 0.0)) {
    throw ConfigError(fmt::format("limits: balance_slack must be >= 0 (got {})", balance_slack));
  }
  if (!(expert_imbalance >= 1.0)) {
    throw ConfigError(
        fmt::format("limits: expert_imbalance must be >= 1 (got {})", expert_imbalance));
  }
}

Catalog builtin_catalog() {
  // Price, capacity, bandwidth and compute follow the published vendor table
  // normalized to L20. Network and intra-node bandwidths are per-GPU shares
  // of typical server configurations and are overridable via config.
  std::vector<GpuSpec> gpus;
  gpus.push_back({"L20", 1.00, 48 * kGB, 864 * kGB, 119.5 * kTFLOPS, 12.5 * kGB, 32 * kGB,
                  std::nullopt, 8});
  gpus.push_back({"H800", 5.28, 80 * kGB, 3430.4 * kGB, 989 * kTFLOPS, 50 * kGB, 400 * kGB,
                  std::nullopt, 8});
  gpus.push_back({"A800", 2.26, 80 * kGB, 2039 * kGB, 312 * kTFLOPS, 25 * kGB, 400 * kGB,
                  std::nullopt, 8});
  gpus.push_back({"H20", 1.85, 96 * kGB, 4096 * kGB, 148 * kTFLOPS, 25 * kGB, 900 * kGB, 500.0, 8});
  gpus.push_back({"L40S", 1.08, 48 * kGB, 864 * kGB, 362 * kTFLOPS, 12.5 * kGB, 32 * kGB, 350.0, 8});
  return Catalog(std::move(gpus));
}

std::vector<MoeModelSpec> builtin_models() {
  return {
      {"Mixtral-8x22B", 56, 6144, 16384, 8, 2, 6, 128, 2},
      {"DBRX", 40, 6144, 10752, 16, 4, 6, 128, 2},
      {"Scaled-MoE", 48, 8192, 8192, 32, 4, 8, std::nullopt, 2},
  };
}

std::optional<MoeModelSpec> find_builtin_model(std::string_view name) {
  std::string key = normalize_name(name);
  if (key == "mixtral") key = "mixtral-8x22b";
  if (key == "scaledmoe" || key == "scaled") key = "scaled-moe";
  for (auto& m : builtin_models()) {
    if (normalize_name(m.name) == key) return m;
  }
  return std::nullopt;
}

MoeModelSpec builtin_model(std::string_view name) {
  if (auto m = find_builtin_model(name)) return *m;
  throw ConfigError(fmt::format("unknown model '{}'", name));
}

std::string_view to_string(CostMetric metric) {
  return metric == CostMetric::power ? "power" : "price";
}

CostMetric parse_cost_metric(std::string_view text) {
  const std::string key = normalize_name(text);
  if (key == "price" || key == "cost") return CostMetric::price;
  if (key == "power") return CostMetric::power;
  throw ConfigError(fmt::format("unknown cost metric '{}' (expected price or power)", text));
}

}  // namespace moeplan
