#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "moeplan/catalog.hpp"

namespace moeplan {

// A fully validated planning configuration.
//
// File format (JSON, unknown keys rejected at every level):
//
//   {
//     "hardware": ["H20", {"name": "L40S", "price": 1.1}, {...full GpuSpec...}],
//     "model":    "DBRX"  |  {"name": "DBRX", "topk": 2}  |  {...full MoeModelSpec...},
//     "workload": {"avg_seq_len": 730, "slo_tbt": 0.15, ...},
//     "limits":   {"max_microbatches": 4, "cost_metric": "price", ...}
//   }
//
// Only "model" is required. Entries naming a builtin GPU or model start from
// the builtin values and override the fields given. An absent "hardware" key
// selects the builtin catalog. See docs/config.md for every field.
struct Config {
  Catalog catalog = builtin_catalog();
  MoeModelSpec model;
  WorkloadSpec workload;
  SearchLimits limits;

  bool operator==(const Config&) const = default;
};

// Throws ConfigError with line/column context on malformed JSON and with the
// field path on schema or invariant violations.
Config parse_config(std::string_view text, std::string_view origin = "<config>");
Config load_config(const std::filesystem::path& path);

// Canonical JSON; parse_config(dump_config(c)) == c.
std::string dump_config(const Config& config, int indent = 2);

}  // namespace moeplan
