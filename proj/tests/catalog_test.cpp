#include <doctest.h>

#include "moeplan/catalog.hpp"
#include "moeplan/error.hpp"

using namespace moeplan;

TEST_CASE("builtin GPU table") {
  const Catalog c = builtin_catalog();
  CHECK(c.size() == 5);
  CHECK(c.at("H20").mem_bandwidth == 4096 * kGB);
  CHECK(c.at("L40S").compute == 362 * kTFLOPS);
  CHECK(c.at("L20").price == 1.00);
  CHECK(c.at("A800").compute == 312 * kTFLOPS);
  CHECK(c.at("H800").mem_capacity == 80 * kGB);
  CHECK(c.at("H20").max_power.has_value());
  CHECK_FALSE(c.at("L20").max_power.has_value());
  for (const auto& g : c) CHECK_NOTHROW(g.validate());
}

TEST_CASE("GPU lookup ignores case and separators") {
  const Catalog c = builtin_catalog();
  CHECK(c.at("h20").name == "H20");
  CHECK(c.at("l40s").name == "L40S");
  CHECK(c.find("B200") == nullptr);
  CHECK_THROWS_AS(c.at("B200"), ConfigError);
}

TEST_CASE("builtin models") {
  CHECK(builtin_models().size() == 3);
  CHECK(builtin_model("DBRX").layers == 40);
  CHECK(builtin_model("Mixtral-8x22B").topk == 2);
  CHECK(builtin_model("Scaled-MoE").experts == 32);
  CHECK(builtin_model("mixtral").name == "Mixtral-8x22B");
  CHECK(builtin_model("scaled_moe").name == "Scaled-MoE");
  CHECK_FALSE(find_builtin_model("llama").has_value());
  CHECK_THROWS_AS(builtin_model("llama"), ConfigError);
  for (const auto& m : builtin_models()) CHECK_NOTHROW(m.validate());
}

TEST_CASE("GPU invariants") {
  GpuSpec g = builtin_catalog().at("H20");
  g.max_gpus_per_node = 3;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = builtin_catalog().at("H20");
  g.mem_bandwidth = 0;
  CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("mem_bandwidth"), ConfigError);
  g = builtin_catalog().at("H20");
  g.max_power = -1.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("catalog rejects duplicate names") {
  auto entries = builtin_catalog().entries();
  entries.push_back(entries.front());
  entries.back().name = "l20";
  CHECK_THROWS_WITH_AS(Catalog{entries}, doctest::Contains("duplicate"), ConfigError);
}

TEST_CASE("model invariants") {
  MoeModelSpec m = builtin_model("DBRX");
  m.topk = 0;
  CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("K out of range"), ConfigError);
  m.topk = 17;
  CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("K out of range"), ConfigError);
  m = builtin_model("DBRX");
  m.gqa_group = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = builtin_model("DBRX");
  m.gqa_group = 7;  // 48 query heads
  CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("does not divide"), ConfigError);
}

TEST_CASE("workload and limits invariants") {
  WorkloadSpec w;
  CHECK(w.avg_seq_len == 730);
  CHECK(w.slo_tbt == 0.150);
  w.slo_tbt = 0;
  CHECK_THROWS_AS(w.validate(), ConfigError);

  SearchLimits l;
  CHECK(l.max_microbatches == 4);
  l.max_microbatches = 2;
  CHECK_THROWS_AS(l.validate(), ConfigError);
  l = {};
  l.expert_imbalance = 0.5;
  CHECK_THROWS_AS(l.validate(), ConfigError);
}

TEST_CASE("cost metric names") {
  CHECK(parse_cost_metric("price") == CostMetric::price);
  CHECK(parse_cost_metric("Power") == CostMetric::power);
  CHECK(to_string(CostMetric::power) == "power");
  CHECK_THROWS_AS(parse_cost_metric("watts"), ConfigError);
}
