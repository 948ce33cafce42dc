#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "moeplan/config.hpp"
#include "moeplan/error.hpp"

using namespace moeplan;

TEST_CASE("minimal config takes defaults") {
  const Config c = parse_config(R"({"model": "DBRX"})");
  CHECK(c.model == builtin_model("DBRX"));
  CHECK(c.catalog == builtin_catalog());
  CHECK(c.workload == WorkloadSpec{});
  CHECK(c.limits == SearchLimits{});
}

TEST_CASE("config overrides") {
  const Config c = parse_config(R"({
    "model": {"name": "DBRX", "topk": 2},
    "workload": {"slo_tbt": 0.2},
    "limits": {"cost_metric": "power", "max_microbatches": 6},
    "hardware": ["H20", {"name": "L40S", "price": 1.5}]
  })");
  CHECK(c.workload.slo_tbt == 0.2);
  CHECK(c.workload.avg_seq_len == 730);
  CHECK(c.model.topk == 2);
  CHECK(c.model.layers == 40);
  CHECK(c.limits.cost_metric == CostMetric::power);
  CHECK(c.limits.max_microbatches == 6);
  REQUIRE(c.catalog.size() == 2);
  CHECK(c.catalog.at("L40S").price == 1.5);
  CHECK(c.catalog.at("L40S").compute == 362 * kTFLOPS);
}

TEST_CASE("config validation errors") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"model": {"name": "DBRX", "topk": 0}})"),
                       doctest::Contains("K out of range"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"workload": {}})"), doctest::Contains("model"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"model": "DBRX", "extra": 1})"), doctest::Contains("extra"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"model": "DBRX", "workload": {"slo": 1}})"),
                       doctest::Contains("slo"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"model": "DBRX", "hardware": [{"name": "B200", "price": 3}]})"),
                       doctest::Contains("missing required key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"model": {"name": "custom", "layers": 2}})"),
                       doctest::Contains("missing required key"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": "DBRX", "workload": {"slo_tbt": "fast"}})"), ConfigError);
}

TEST_CASE("malformed JSON reports the position") {
  CHECK_THROWS_WITH_AS(parse_config("{\n  \"model\": \"DBRX\",\n}", "cfg.json"), doctest::Contains("cfg.json:3:"),
                       ConfigError);
}

TEST_CASE("custom hardware and model") {
  const Config c = parse_config(R"({
    "model": {"name": "tiny", "layers": 2, "hidden": 64, "intermediate": 128, "experts": 4, "topk": 1},
    "hardware": [{"name": "X1", "price": 2, "mem_capacity": 1e10, "mem_bandwidth": 1e12,
                  "compute": 1e14, "net_bandwidth": 1e10, "intra_bandwidth": 1e11}]
  })");
  CHECK(c.model.hidden == 64);
  CHECK(c.model.gqa_group == 1);
  CHECK(c.catalog.at("x1").price == 2);
  CHECK_FALSE(c.catalog.at("x1").max_power.has_value());
}

TEST_CASE("dump and parse round trip") {
  const Config a = parse_config(R"({"model": {"name": "Mixtral-8x22B", "gqa_group": 8},
                                    "workload": {"avg_seq_len": 1000}, "hardware": ["H20", "L20"]})");
  const Config b = parse_config(dump_config(a));
  CHECK(a == b);
  const Config d;
  CHECK_THROWS_AS(parse_config(dump_config(d)), ConfigError);  // no model
}

TEST_CASE("load_config reads files") {
  const auto path = std::filesystem::temp_directory_path() / "moeplan_config_test.json";
  {
    std::ofstream out(path);
    out << R"({"model": "Scaled-MoE"})";
  }
  CHECK(load_config(path).model.name == "Scaled-MoE");
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), ConfigError);
}
