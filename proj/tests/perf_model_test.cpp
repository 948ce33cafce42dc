#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "moeplan/error.hpp"
#include "moeplan/perf_model.hpp"
#include "oracles/kv.hpp"

using namespace moeplan;

namespace {

GpuSpec synthetic_gpu(double compute, double bandwidth) {
  return {"X", 1.0, 80 * kGB, bandwidth, compute, 25 * kGB, 400 * kGB, std::nullopt, 8};
}

}  // namespace

TEST_CASE("gemm_flops") {
  CHECK(gemm_flops(1, 1, 1) == 2);
  CHECK(gemm_flops(156, 6144, 16384) == 31'406'948'352ULL);
  CHECK_THROWS_AS(gemm_flops(0, 6144, 16384), std::invalid_argument);
  CHECK_THROWS_AS(gemm_flops(1, 0, 1), std::invalid_argument);
  const std::uint64_t big = std::uint64_t{1} << 32;
  CHECK_THROWS_AS(gemm_flops(big, big, big), std::overflow_error);
}

TEST_CASE("compute-bound batch") {
  CHECK(min_compute_bound_batch(synthetic_gpu(312e12, 2e12)) == 156);
  CHECK(min_compute_bound_batch(synthetic_gpu(1e12, 1e12)) == 1);
  CHECK(min_compute_bound_batch(builtin_catalog().at("H20")) == 37);
  CHECK(min_compute_bound_batch(synthetic_gpu(312e12 + 1e9, 2e12)) == 157);
}

TEST_CASE("ffn utilization") {
  const GpuSpec a800 = synthetic_gpu(312e12, 2e12);
  CHECK(ffn_utilization(156, a800, MoeRouting{2, 8}) == 0.25);
  CHECK(ffn_utilization(0, a800, MoeRouting{2, 8}) == 0.0);
  CHECK(ffn_utilization(156, a800) == 1.0);
  CHECK(ffn_utilization(1e6, a800) == 1.0);
  CHECK(ffn_utilization(78, a800) == doctest::Approx(0.5));
  CHECK_THROWS_AS(ffn_utilization(-1, a800), std::invalid_argument);
}

TEST_CASE("parameter sizes") {
  const ParamSizes mixtral = param_sizes(builtin_model("Mixtral-8x22B"));
  CHECK(mixtral.expert_bytes == 22'548'578'304.0);

  MoeModelSpec unit{"unit", 1, 1024, 1024, 2, 1, 1, std::nullopt, 1};
  const ParamSizes p = param_sizes(unit);
  CHECK(p.attention_bytes == 4.0 * 1024 * 1024);
  CHECK(p.expert_bytes == 2.0 * 1024 * 1024);

  // Large g approaches the output-plus-query projections only.
  unit.gqa_group = 1 << 20;
  CHECK(param_sizes(unit).attention_bytes == doctest::Approx(2.0 * 1024 * 1024).epsilon(1e-5));
}

TEST_CASE("linear stage times") {
  CostModel cm;
  cm.attention = {1e-9, 2e-6, 30e-6};
  cm.seq_len = 1000;
  cm.expert_slope = 5e-6;
  cm.expert_fixed = 20e-6;
  CHECK(attention_time(0, cm) == 30e-6);
  CHECK(expert_time(0, cm) == 20e-6);
  CHECK(attention_time(200, cm) - cm.k2() == doctest::Approx(2 * (attention_time(100, cm) - cm.k2())));
  CHECK(cm.k1() == doctest::Approx(3e-6));
  CHECK(cm.at_seq_len(2000).k1() == doctest::Approx(4e-6));
  CHECK_THROWS_AS(attention_time(-1, cm), std::invalid_argument);
  cm.expert_slope = 0;
  CHECK_THROWS_AS(cm.validate(), ConfigError);
}

TEST_CASE("communication time") {
  MoeModelSpec model = builtin_model("Mixtral-8x22B");
  CostModel cm;
  cm.util = UtilCurve::ideal();
  cm.backend = CommBackend{"zero", 0.0, 0.0, 8, 1.0};

  SUBCASE("symmetric volumes") {
    // dispatch b_a h K / tp_a equals combine b_e h / tp_e
    CommInputs in{64, 128, 1, 1, 10e9, 10e9, 1};
    const auto br = comm_breakdown(in, model, cm);
    CHECK(br.dispatch_bytes == br.combine_bytes);
    CHECK(br.dispatch_seconds == br.combine_seconds);
    CHECK(comm_time(in, model, cm) == doctest::Approx(64.0 * 6144 * 2 * 2 / 10e9));
  }
  SUBCASE("fast attention links leave the expert side") {
    CommInputs in{64, 128, 1, 1, 1e300, 10e9, 1};
    CHECK(comm_time(in, model, cm) == doctest::Approx(128.0 * 6144 * 2 / 10e9));
  }
  SUBCASE("overheads and receiver penalty") {
    cm.backend = CommBackend::nccl();
    CommInputs in{0, 0, 1, 1, 10e9, 10e9, 1};
    // Dispatch fans out to E = 8 receivers: no penalty; combine to one.
    CHECK(comm_time(in, model, cm) == doctest::Approx(150e-6));
    model.experts = 16;
    model.topk = 2;
    CHECK(comm_time(in, model, cm) == doctest::Approx(150e-6 + 8 * 15e-6));
  }
  SUBCASE("small messages use less bandwidth") {
    cm.util = UtilCurve::saturating(64 * 1024);
    CommInputs in{1, 0, 1, 1, 10e9, 10e9, 1};
    const double bytes = 6144.0 * 2 * 2;
    CHECK(comm_time(in, model, cm) == doctest::Approx(bytes / (10e9 * bytes / (bytes + 65536))));
  }
  CHECK_THROWS_AS(comm_time({1, 1, 0, 1, 1e9, 1e9, 1}, model, cm), std::invalid_argument);
  CHECK_THROWS_AS(comm_time({1, 1, 1, 1, 0, 1e9, 1}, model, cm), std::invalid_argument);
}

TEST_CASE("per-pair message size") {
  CHECK(per_pair_message_bytes(128, builtin_model("Mixtral-8x22B"), 2) == 196608.0);
}

TEST_CASE("util curves") {
  const UtilCurve sat = UtilCurve::saturating(1000);
  CHECK(sat(1000) == 0.5);
  CHECK(sat(0) == 0.0);
  CHECK(UtilCurve::ideal()(1) == 1.0);
  const UtilCurve t = UtilCurve::table({{100, 0.2}, {1000, 0.6}, {10000, 0.9}});
  CHECK(t(10) == 0.2);
  CHECK(t(550) == doctest::Approx(0.4));
  CHECK(t(1e9) == 0.9);
  CHECK_THROWS_AS(UtilCurve::table({{100, 0.5}, {50, 0.6}}), ConfigError);
  CHECK_THROWS_AS(UtilCurve::table({{100, 0.5}, {200, 0.4}}), ConfigError);
  CHECK_THROWS_AS(UtilCurve::table({{100, 0.5}, {200, 1.5}}), ConfigError);
}

TEST_CASE("KV cache check agrees with exact arithmetic") {
  MoeModelSpec mixtral = builtin_model("Mixtral-8x22B");
  mixtral.gqa_group = 8;
  mixtral.head_dim = std::nullopt;
  WorkloadSpec w;
  GpuSpec gpu = synthetic_gpu(312e12, 2e12);

  const auto agree = [&](int m, std::int64_t b_a, int tp_a, std::int64_t cap) {
    gpu.mem_capacity = static_cast<double>(cap);
    const MemoryReport r = kv_cache_check(m, b_a, mixtral, w, tp_a, gpu);
    const oracle::KvQuery q{m, b_a, w.avg_seq_len, mixtral.hidden, mixtral.layers, mixtral.gqa_group,
                            mixtral.bytes_per_param, tp_a, cap};
    CHECK(r.attention_fits == oracle::kv_fits(q));
    CHECK(r.kv_bytes == doctest::Approx(oracle::kv_bytes(q).convert_to<double>()));
    return r;
  };

  const MemoryReport r = agree(3, 128, 2, 80'000'000'000);
  CHECK(r.kv_bytes == doctest::Approx(4.0 * 3 * 128 * 730 * 6144 * 56 / 8));
  agree(3, 0, 2, 80'000'000'000);

  // Exactly at the boundary the strict inequality fails.
  oracle::KvQuery q{3, 128, w.avg_seq_len, mixtral.hidden, mixtral.layers, 8, 2, 1, 0};
  const auto need = oracle::kv_bytes(q) + oracle::attention_param_bytes(q);
  REQUIRE(denominator(need) == 1);
  const auto exact = numerator(need).convert_to<std::int64_t>();
  CHECK_FALSE(agree(3, 128, 1, exact).attention_fits);
  CHECK(agree(3, 128, 1, exact + 1).attention_fits);

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> mdist(1, 8), tp(0, 3), g(0, 3);
  std::uniform_int_distribution<std::int64_t> bdist(0, 4096), cdist(1'000'000'000, 200'000'000'000);
  for (int i = 0; i < 500; ++i) {
    mixtral.gqa_group = 1 << g(rng);
    agree(mdist(rng), bdist(rng), 1 << tp(rng), cdist(rng));
  }
}

TEST_CASE("KV cache degenerate cases") {
  const MoeModelSpec model = builtin_model("DBRX");
  const WorkloadSpec w;
  GpuSpec gpu = synthetic_gpu(312e12, 2e12);
  const ParamSizes p = param_sizes(model);

  const MemoryReport empty = kv_cache_check(4, 0, model, w, 1, gpu);
  CHECK(empty.kv_bytes == 0.0);
  CHECK(empty.attention_fits == (p.attention_bytes < gpu.mem_capacity));

  gpu.mem_capacity = p.attention_bytes / 2 - 1;
  for (std::int64_t b : {0, 1, 1000}) CHECK_FALSE(kv_cache_check(1, b, model, w, 2, gpu).attention_fits);
  CHECK_FALSE(attention_weights_fit(model, 2, gpu));

  gpu.mem_capacity = p.expert_bytes / 2;
  CHECK_FALSE(expert_weights_fit(model, 2, gpu));
  CHECK(expert_weights_fit(model, 4, gpu));
  CHECK_FALSE(kv_cache_check(1, 1, model, w, 8, gpu, 2, gpu).expert_fits);
}

TEST_CASE("affine calibration") {
  const std::vector<ProfilePoint> exact{{1, 5 + 2}, {2, 10 + 2}};
  const AffineFit f = calibrate(exact);
  CHECK(f.slope == doctest::Approx(5));
  CHECK(f.intercept == doctest::Approx(2));
  CHECK(f.rms_residual == doctest::Approx(0).epsilon(1e-12));

  CHECK_THROWS_AS(calibrate(std::vector<ProfilePoint>{{1, 1}}), CalibrationError);
  CHECK_THROWS_AS(calibrate(std::vector<ProfilePoint>{{3, 1}, {3, 2}}), CalibrationError);

  const std::vector<ProfilePoint> negative{{1, 1.0}, {2, 3.0}, {3, 5.0}};  // intercept -1
  CHECK(calibrate(negative).intercept == doctest::Approx(-1));
  const AffineFit clamped = calibrate(negative, {.nonnegative_intercept = true});
  CHECK(clamped.intercept == 0.0);
  CHECK(clamped.slope == doctest::Approx((1.0 + 6 + 15) / (1 + 4 + 9)));
}

TEST_CASE("calibration on the roofline oracle") {
  const MoeModelSpec model = builtin_model("Mixtral-8x22B");
  const GpuSpec h20 = builtin_catalog().at("H20");
  const RooflineOracle oracle;

  SUBCASE("memory-bound expert slope is bytes per token over bandwidth") {
    // Far below the compute-bound batch every point is bandwidth limited.
    const std::vector<double> batches{1, 2, 3, 4, 5, 6, 7, 8};
    const auto pts = oracle.expert_points(batches, model, h20, 1);
    const AffineFit f = calibrate(pts);
    const double per_token = model.bytes_per_param * (2.0 * model.hidden + 2.0 * model.intermediate);
    CHECK(std::abs(f.slope / (per_token / h20.mem_bandwidth) - 1) < 1e-6);
  }
  SUBCASE("held-out predictions within 5%") {
    const CostModel cm = synthetic_cost_model(model, WorkloadSpec{}, h20, 2, h20, 2);
    for (double b : {24.0, 300.0, 500.0}) {
      const double truth = oracle.attention_time(b, 730, model, h20, 2);
      CHECK(std::abs(attention_time(b, cm) / truth - 1) < 0.05);
    }
    // b = 100 sits on the roofline corner; the best affine fit over the grid is 7.2% off there.
    const double corner = oracle.attention_time(100, 730, model, h20, 2);
    CHECK(std::abs(attention_time(100, cm) / corner - 1) < 0.10);
    for (double b : {96.0, 500.0, 1500.0}) {
      const double truth = oracle.expert_time(b, model, h20, 2);
      CHECK(std::abs(expert_time(b, cm) / truth - 1) < 0.05);
    }
  }
  SUBCASE("two sequence lengths separate alpha") {
    const auto grid = attention_calibration_batches();
    auto pts = oracle.attention_points(grid, 730, model, h20, 1);
    const auto longer = oracle.attention_points(grid, 1460, model, h20, 1);
    pts.insert(pts.end(), longer.begin(), longer.end());
    const AttentionFit f = calibrate_attention(pts);
    // KV traffic per token and sequence position: 2 h / g values.
    const double alpha = 2.0 * model.hidden / model.gqa_group * model.bytes_per_param / h20.mem_bandwidth;
    CHECK(f.coeffs.per_seq_token == doctest::Approx(alpha).epsilon(1e-6));
    CHECK(f.coeffs.fixed >= 0.0);
  }
}

TEST_CASE("backend presets") {
  CHECK(CommBackend::m2n().base_overhead < CommBackend::nccl().base_overhead);
  CHECK(CommBackend::m2n().jitter_p99_factor < CommBackend::nccl().jitter_p99_factor);
  CommBackend bad = CommBackend::m2n();
  bad.jitter_p99_factor = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
