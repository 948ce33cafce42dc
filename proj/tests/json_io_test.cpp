#include <doctest.h>

#include "moeplan/error.hpp"
#include "moeplan/json_io.hpp"

using namespace moeplan;

namespace {

// Encode, decode, encode again; both encodings must agree.
template <class T>
T round_trip(const T& value) {
  const json first = value;
  const T back = first.get<T>();
  CHECK(json(back) == first);
  // Through text as well, so doubles survive serialization.
  CHECK(json::parse(first.dump()).get<T>() == back);
  return back;
}

template <class T>
void json_round_trip(const T& value) {
  const json first = value;
  CHECK(json(json::parse(first.dump()).get<T>()) == first);
}

DeploymentPlan sample_plan() {
  const MoeModelSpec model = builtin_model("DBRX");
  const GpuSpec gpu = builtin_catalog().at("H20");
  const PlanContext ctx{model, WorkloadSpec{}, SearchLimits{}, gpu, gpu};
  const CostModel cm = synthetic_cost_model(model, ctx.workload, gpu, 2, gpu, 1);
  return evaluate_plan({2, 1, 2, 16, 3}, 6 * 100, ctx, cm);
}

}  // namespace

TEST_CASE("catalog types round trip") {
  for (const auto& g : builtin_catalog()) CHECK(round_trip(g) == g);
  for (const auto& m : builtin_models()) CHECK(round_trip(m) == m);
  WorkloadSpec w;
  w.slo_tbt = 0.2;
  CHECK(round_trip(w) == w);
  SearchLimits l;
  l.cost_metric = CostMetric::power;
  l.expert_imbalance = 1.3;
  CHECK(round_trip(l) == l);
}

TEST_CASE("cost model types round trip") {
  CHECK(round_trip(UtilCurve::saturating(1234.5)) == UtilCurve::saturating(1234.5));
  const UtilCurve table = UtilCurve::table({{10, 0.2}, {1000, 0.9}});
  CHECK(round_trip(table) == table);
  CHECK(round_trip(CommBackend::nccl()) == CommBackend::nccl());
  const CostModel cm = synthetic_cost_model(builtin_model("Mixtral-8x22B"), WorkloadSpec{},
                                            builtin_catalog().at("H20"), 2, builtin_catalog().at("L40S"), 4);
  CHECK(round_trip(cm) == cm);
}

TEST_CASE("pipeline types round trip") {
  const StageTimes t{0.001, 0.002, 0.0005};
  CHECK(round_trip(t) == t);
  const SimReport r = simulate(t, 3, 2);
  CHECK(round_trip(r) == r);
  SimReport summary = r;
  summary.timeline.clear();
  CHECK_FALSE(json(summary).contains("timeline"));
  CHECK(round_trip(summary) == summary);
  const JitterReport j = simulate_with_jitter(t, 3, 2, CommBackend::nccl(), 1, 8);
  CHECK(round_trip(j) == j);
}

TEST_CASE("plan round trip") {
  const DeploymentPlan p = sample_plan();
  json_round_trip(p);
  json_round_trip(p.memory);
  CHECK(round_trip(p.slack) == p.slack);
  const json j = p;
  CHECK(j.at("binding") == to_string(p.binding));
  for (Binding b : {Binding::none, Binding::slo, Binding::no_cost_model, Binding::attention_memory}) {
    CHECK(parse_binding(to_string(b)) == b);
  }
  CHECK_THROWS_AS(parse_binding("gravity"), ConfigError);
}

TEST_CASE("balance types round trip") {
  std::vector<ExpertLoad> loads{{0, 5}, {1, 3}, {2, 1}};
  const Placement p = balance_experts(loads, 2, 1, {.mode = PlacementMode::fractional});
  json_round_trip(p);
  const Placement back = json(p).get<Placement>();
  CHECK(back.x == p.x);
  CHECK(back.mode == p.mode);

  CostModel cm;
  cm.attention = {1e-6, 1e-5, 1e-4};
  const AttnBatchPlan a = compose_attention_batches({{1, 100}, {2, 300}, {3, 200}}, 2, cm, 1e-3);
  json_round_trip(a);
}

TEST_CASE("decoding rejects unknown keys and wrong types") {
  json g = builtin_catalog().at("H20");
  g["colour"] = "green";
  CHECK_THROWS_WITH_AS(g.get<GpuSpec>(), doctest::Contains("colour"), ConfigError);

  json m = builtin_model("DBRX");
  m["layers"] = "forty";
  CHECK_THROWS_WITH_AS(m.get<MoeModelSpec>(), doctest::Contains("layers"), ConfigError);

  json w = WorkloadSpec{};
  w.erase("slo_tbt");
  CHECK(w.get<WorkloadSpec>().slo_tbt == WorkloadSpec{}.slo_tbt);
  w["slo_tbt"] = json::array();
  CHECK_THROWS_AS(w.get<WorkloadSpec>(), ConfigError);
}

TEST_CASE("overlay readers keep unspecified fields") {
  MoeModelSpec m = builtin_model("DBRX");
  read_model(json{{"topk", 2}}, m, "model");
  CHECK(m.topk == 2);
  CHECK(m.layers == 40);
  GpuSpec g = builtin_catalog().at("H20");
  read_gpu(json{{"price", 9.0}}, g, "gpu");
  CHECK(g.price == 9.0);
  CHECK(g.compute == builtin_catalog().at("H20").compute);
  CHECK_THROWS_AS(read_gpu(json{{"prise", 9.0}}, g, "gpu"), ConfigError);
}

TEST_CASE("search summaries serialize") {
  const MoeModelSpec model = builtin_model("Mixtral-8x22B");
  const GpuSpec gpu = builtin_catalog().at("H20");
  const PlanContext ctx{model, WorkloadSpec{}, SearchLimits{}, gpu, gpu};
  const SearchResult r = search(ctx, synthetic_cost_factory(model, ctx.workload), {{1, 2}, {1}, {4}});
  const json j = r;
  CHECK(j.at("candidates").size() == 2);
  CHECK(j.contains("best"));
}
