#include "moeplan/perf_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iterator>
#include <limits>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

#include "moeplan/error.hpp"

namespace moeplan {
namespace {

__extension__ typedef __int128 int128;

double sq(double x) { return x * x; }

void require_tp(int tp, std::string_view what) {
  if (tp < 1) throw std::invalid_argument(fmt::format("{} must be >= 1 (got {})", what, tp));
}

}  // namespace

std::uint64_t gemm_flops(std::uint64_t b, std::uint64_t h_in, std::uint64_t h_out) {
  if (b == 0 || h_in == 0 || h_out == 0) {
    throw std::invalid_argument("gemm_flops: all dimensions must be > 0");
  }
  std::uint64_t out = 2;
  for (std::uint64_t f : {b, h_in, h_out}) {
    if (__builtin_mul_overflow(out, f, &out)) {
      throw std::overflow_error(
          fmt::format("gemm_flops: 2*{}*{}*{} exceeds 64-bit range", b, h_in, h_out));
    }
  }
  return out;
}

std::int64_t min_compute_bound_batch(const GpuSpec& gpu) {
  gpu.validate();
  const double ratio = gpu.compute / gpu.mem_bandwidth;
  const double nearest = std::round(ratio);
  // Ratios of exactly representable integers that land on an integer are
  // not rounded up because of a last-bit error.
  if (std::abs(ratio - nearest) <= 1e-12 * ratio) return std::max<std::int64_t>(1, std::llround(nearest));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(ratio)));
}

double ffn_utilization(double b, const GpuSpec& gpu, std::optional<MoeRouting> moe) {
  if (!(b >= 0.0)) throw std::invalid_argument("ffn_utilization: batch must be >= 0");
  double util;
  if (moe) {
    if (moe->topk < 1 || moe->experts < moe->topk) {
      throw std::invalid_argument("ffn_utilization: need 1 <= topk <= experts");
    }
    util = (b * gpu.mem_bandwidth * moe->topk) / (gpu.compute * moe->experts);
  } else {
    util = (b * gpu.mem_bandwidth) / gpu.compute;
  }
  return std::min(util, 1.0);
}

ParamSizes param_sizes(const MoeModelSpec& model) {
  model.validate();
  const double L = model.layers;
  const double h = model.hidden;
  const double g = model.gqa_group;
  const double bytes = model.bytes_per_param;
  ParamSizes p;
  // QKV: h x h(1 + 2/g); output: h x h. Written over g to stay exact.
  p.attention_bytes = 2.0 * bytes * L * h * h * (g + 1.0) / g;
  p.expert_bytes = 2.0 * bytes * L * h * static_cast<double>(model.intermediate);
  return p;
}

// ---------------------------------------------------------------------------

UtilCurve::UtilCurve() : curve_(Saturating{}) {}

UtilCurve UtilCurve::saturating(double half_bytes) {
  if (!(half_bytes >= 0.0) || !std::isfinite(half_bytes)) {
    throw ConfigError(fmt::format("util curve: half_bytes must be finite and >= 0 (got {})", half_bytes));
  }
  UtilCurve c;
  c.curve_ = Saturating{half_bytes};
  return c;
}

UtilCurve UtilCurve::table(std::vector<std::pair<double, double>> points) {
  if (points.empty()) throw ConfigError("util curve: table needs at least one point");
  std::sort(points.begin(), points.end());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto [x, u] = points[i];
    if (!(x > 0.0)) throw ConfigError(fmt::format("util curve: message size must be > 0 (got {})", x));
    if (!(u > 0.0 && u <= 1.0)) {
      throw ConfigError(fmt::format("util curve: utilization must be in (0, 1] (got {} at {} bytes)", u, x));
    }
    if (i > 0) {
      const auto [px, pu] = points[i - 1];
      if (x == px) throw ConfigError(fmt::format("util curve: duplicate message size {}", x));
      if (u < pu) {
        throw ConfigError(fmt::format("util curve: utilization decreases between {} and {} bytes", px, x));
      }
      // Keeps transfer time x / util(x) non-decreasing on every segment.
      if (x / u < px / pu) {
        throw ConfigError(
            fmt::format("util curve: transfer time decreases between {} and {} bytes", px, x));
      }
    }
  }
  UtilCurve c;
  c.curve_ = Table{std::move(points)};
  return c;
}

double UtilCurve::operator()(double message_bytes) const {
  if (const auto* s = std::get_if<Saturating>(&curve_)) {
    if (s->half_bytes == 0.0) return 1.0;
    if (message_bytes <= 0.0) return 0.0;
    return message_bytes / (message_bytes + s->half_bytes);
  }
  const auto& pts = std::get<Table>(curve_).points;
  if (message_bytes <= pts.front().first) return pts.front().second;
  if (message_bytes >= pts.back().first) return pts.back().second;
  auto hi = std::upper_bound(pts.begin(), pts.end(), message_bytes,
                             [](double x, const auto& p) { return x < p.first; });
  auto lo = std::prev(hi);
  const double t = (message_bytes - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

void CommBackend::validate() const {
  if (!(base_overhead >= 0.0)) throw ConfigError(fmt::format("backend {}: base_overhead must be >= 0", name));
  if (!(per_receiver_penalty >= 0.0)) {
    throw ConfigError(fmt::format("backend {}: per_receiver_penalty must be >= 0", name));
  }
  if (receiver_batch < 1) throw ConfigError(fmt::format("backend {}: receiver_batch must be >= 1", name));
  if (!(jitter_p99_factor >= 1.0)) {
    throw ConfigError(fmt::format("backend {}: jitter_p99_factor must be >= 1 (got {})", name, jitter_p99_factor));
  }
}

CommBackend CommBackend::m2n() { return {"m2n", 20e-6, 0.0, 8, 1.1}; }

CommBackend CommBackend::nccl() { return {"nccl", 150e-6, 15e-6, 8, 3.0}; }

// ---------------------------------------------------------------------------

CostModel CostModel::at_seq_len(std::int64_t s) const {
  if (s <= 0) throw std::invalid_argument("CostModel::at_seq_len: s must be > 0");
  CostModel out = *this;
  out.seq_len = s;
  return out;
}

void CostModel::validate() const {
  if (!(k1() > 0.0)) throw ConfigError(fmt::format("cost model: k1 must be > 0 (got {})", k1()));
  if (!(k3() > 0.0)) throw ConfigError(fmt::format("cost model: k3 must be > 0 (got {})", k3()));
  if (!(k2() >= 0.0)) throw ConfigError(fmt::format("cost model: k2 must be >= 0 (got {})", k2()));
  if (!(k4() >= 0.0)) throw ConfigError(fmt::format("cost model: k4 must be >= 0 (got {})", k4()));
  if (!(attention.per_seq_token >= 0.0)) {
    throw ConfigError(fmt::format("cost model: alpha must be >= 0 (got {})", attention.per_seq_token));
  }
  if (seq_len <= 0) throw ConfigError("cost model: seq_len must be > 0");
  backend.validate();
}

double attention_time(double b_a, const CostModel& cm) {
  if (!(b_a >= 0.0)) throw std::invalid_argument("attention_time: batch must be >= 0");
  return cm.k1() * b_a + cm.k2();
}

double expert_time(double b_e, const CostModel& cm) {
  if (!(b_e >= 0.0)) throw std::invalid_argument("expert_time: batch must be >= 0");
  return cm.k3() * b_e + cm.k4();
}

// ---------------------------------------------------------------------------

CommBreakdown comm_breakdown(const CommInputs& in, const MoeModelSpec& model, const CostModel& cm) {
  require_tp(in.tp_a, "tp_a");
  require_tp(in.tp_e, "tp_e");
  if (!(in.attn_tokens >= 0.0) || !(in.expert_tokens >= 0.0)) {
    throw std::invalid_argument("comm_time: batches must be >= 0");
  }
  if (!(in.attn_net_bandwidth > 0.0) || !(in.expert_net_bandwidth > 0.0)) {
    throw std::invalid_argument("comm_time: network bandwidths must be > 0");
  }
  const double h = model.hidden;
  const double bytes = model.bytes_per_param;
  const auto& be = cm.backend;

  auto transfer = [&](double volume, double bandwidth, int receivers) {
    double t = be.base_overhead +
               be.per_receiver_penalty * std::max(0, receivers - be.receiver_batch);
    if (volume > 0.0) t += volume / (bandwidth * cm.util(volume));
    return t;
  };

  CommBreakdown out;
  out.dispatch_bytes = in.attn_tokens * h * model.topk * bytes / in.tp_a;
  out.combine_bytes = in.expert_tokens * h * bytes / in.tp_e;
  out.dispatch_seconds = transfer(out.dispatch_bytes, in.attn_net_bandwidth, model.experts);
  out.combine_seconds = transfer(out.combine_bytes, in.expert_net_bandwidth, in.attention_nodes);
  return out;
}

double comm_time(const CommInputs& in, const MoeModelSpec& model, const CostModel& cm) {
  return comm_breakdown(in, model, cm).seconds();
}

double per_pair_message_bytes(double b_a, const MoeModelSpec& model, int tp_a) {
  require_tp(tp_a, "tp_a");
  return b_a * model.topk / model.experts * model.hidden * model.bytes_per_param / tp_a;
}

// ---------------------------------------------------------------------------

MemoryReport kv_cache_check(int m, std::int64_t b_a, const MoeModelSpec& model,
                            const WorkloadSpec& workload, int tp_a, const GpuSpec& gpu_a) {
  if (m < 1) throw std::invalid_argument("kv_cache_check: m must be >= 1");
  if (b_a < 0) throw std::invalid_argument("kv_cache_check: b_a must be >= 0");
  require_tp(tp_a, "tp_a");
  model.validate();
  workload.validate();

  const int128 bytes = model.bytes_per_param;
  const int128 L = model.layers;
  const int128 h = model.hidden;
  const int128 g = model.gqa_group;
  const int128 s = workload.avg_seq_len;
  const int128 cap = std::llround(gpu_a.mem_capacity);

  // Everything scaled by g so the comparison stays integral.
  const int128 kv_g = 2 * bytes * m * int128{b_a} * s * h * L;
  const int128 params_g = 2 * bytes * L * h * h * (g + 1);
  const int128 budget_g = g * tp_a * cap;

  const ParamSizes p = param_sizes(model);
  MemoryReport r;
  r.kv_bytes = static_cast<double>(kv_g) / static_cast<double>(g);
  r.attention_param_bytes = p.attention_bytes;
  r.expert_param_bytes = p.expert_bytes;
  r.attention_fits = kv_g + params_g < budget_g;
  r.attention_slack_bytes = static_cast<double>(budget_g - kv_g - params_g) / static_cast<double>(g);
  return r;
}

MemoryReport kv_cache_check(int m, std::int64_t b_a, const MoeModelSpec& model,
                            const WorkloadSpec& workload, int tp_a, const GpuSpec& gpu_a, int tp_e,
                            const GpuSpec& gpu_e) {
  MemoryReport r = kv_cache_check(m, b_a, model, workload, tp_a, gpu_a);
  require_tp(tp_e, "tp_e");
  r.expert_slack_bytes = tp_e * gpu_e.mem_capacity - r.expert_param_bytes;
  r.expert_fits = expert_weights_fit(model, tp_e, gpu_e);
  return r;
}

bool attention_weights_fit(const MoeModelSpec& model, int tp_a, const GpuSpec& gpu_a) {
  require_tp(tp_a, "tp_a");
  const int128 g = model.gqa_group;
  const int128 params_g = 2 * int128{model.bytes_per_param} * model.layers * int128{model.hidden} *
                          model.hidden * (g + 1);
  return params_g < g * tp_a * int128{std::llround(gpu_a.mem_capacity)};
}

bool expert_weights_fit(const MoeModelSpec& model, int tp_e, const GpuSpec& gpu_e) {
  require_tp(tp_e, "tp_e");
  const int128 params = 2 * int128{model.bytes_per_param} * model.layers * int128{model.hidden} *
                        model.intermediate;
  return params < tp_e * int128{std::llround(gpu_e.mem_capacity)};
}

// ---------------------------------------------------------------------------

AffineFit calibrate(std::span<const ProfilePoint> points, FitOptions options) {
  if (points.size() < 2) {
    throw CalibrationError(fmt::format("calibrate: need at least 2 points (got {})", points.size()));
  }
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    if (!std::isfinite(p.batch) || !std::isfinite(p.seconds)) {
      throw CalibrationError("calibrate: non-finite profile point");
    }
    mx += p.batch;
    my += p.seconds;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    sxx += sq(p.batch - mx);
    sxy += (p.batch - mx) * (p.seconds - my);
  }
  if (!(sxx > 0.0)) {
    throw CalibrationError("calibrate: degenerate fit, all batch sizes are equal");
  }
  AffineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (options.nonnegative_intercept && fit.intercept < 0.0) {
    double sxx0 = 0.0, sxy0 = 0.0;
    for (const auto& p : points) {
      sxx0 += p.batch * p.batch;
      sxy0 += p.batch * p.seconds;
    }
    fit.slope = sxy0 / sxx0;
    fit.intercept = 0.0;
  }
  double ss = 0.0;
  for (const auto& p : points) ss += sq(p.seconds - (fit.slope * p.batch + fit.intercept));
  fit.rms_residual = std::sqrt(ss / n);
  return fit;
}

namespace {

// Solves the k x k normal equations for design rows `xs` (k <= 3) by Gaussian
// elimination with partial pivoting. Returns nullopt when singular.
template <std::size_t K>
std::optional<std::array<double, K>> least_squares(const std::vector<std::array<double, K>>& xs,
                                                   const std::vector<double>& ys) {
  std::array<std::array<double, K + 1>, K> a{};
  for (std::size_t r = 0; r < xs.size(); ++r) {
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j) a[i][j] += xs[r][i] * xs[r][j];
      a[i][K] += xs[r][i] * ys[r];
    }
  }
  double scale = 0.0;
  for (std::size_t i = 0; i < K; ++i) scale = std::max(scale, std::abs(a[i][i]));
  for (std::size_t c = 0; c < K; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < K; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    if (!(std::abs(a[piv][c]) > 1e-13 * scale)) return std::nullopt;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < K; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j <= K; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::array<double, K> out{};
  for (std::size_t i = 0; i < K; ++i) out[i] = a[i][K] / a[i][i];
  return out;
}

}  // namespace

AttentionFit calibrate_attention(std::span<const ProfilePoint> points, FitOptions options) {
  std::map<std::int64_t, int> seq_lens;
  for (const auto& p : points) ++seq_lens[p.seq_len];
  const bool separable = seq_lens.size() >= 2 && !seq_lens.contains(0);

  AttentionFit out;
  if (separable) {
    std::vector<double> ys;
    std::vector<std::array<double, 3>> x3;
    for (const auto& p : points) {
      x3.push_back({p.batch * static_cast<double>(p.seq_len), p.batch, 1.0});
      ys.push_back(p.seconds);
    }
    auto sol = least_squares(x3, ys);
    if (sol && (*sol)[2] < 0.0 && options.nonnegative_intercept) {
      std::vector<std::array<double, 2>> x2;
      for (const auto& r : x3) x2.push_back({r[0], r[1]});
      auto s2 = least_squares(x2, ys);
      sol = s2 ? std::optional<std::array<double, 3>>({(*s2)[0], (*s2)[1], 0.0}) : std::nullopt;
    }
    if (sol && (*sol)[0] >= 0.0) {
      out.coeffs = {(*sol)[0], (*sol)[1], (*sol)[2]};
      double ss = 0.0;
      for (std::size_t r = 0; r < x3.size(); ++r) {
        const double pred = out.coeffs.per_seq_token * x3[r][0] + out.coeffs.per_token * x3[r][1] +
                            out.coeffs.fixed;
        ss += sq(ys[r] - pred);
      }
      out.rms_residual = std::sqrt(ss / static_cast<double>(x3.size()));
      return out;
    }
  }
  const AffineFit fit = calibrate(points, options);
  out.coeffs = {0.0, fit.slope, fit.intercept};
  out.rms_residual = fit.rms_residual;
  return out;
}

// ---------------------------------------------------------------------------

double RooflineOracle::attention_flops(double b, const MoeModelSpec& model, int tp) const {
  const double h = model.hidden;
  const double g = model.gqa_group;
  // QKV project (b, h) x (h, h(1+2/g)/tp) and output (b, h/tp) x (h/tp, h).
  return 2.0 * b * h * h * (1.0 + 2.0 / g) / tp + 2.0 * b * (h / tp) * h;
}

double RooflineOracle::attention_bytes(double b, std::int64_t seq_len, const MoeModelSpec& model,
                                       int tp) const {
  const double h = model.hidden;
  const double g = model.gqa_group;
  const double bytes = model.bytes_per_param;
  const double weights = h * h * (2.0 + 2.0 / g) / tp;
  const double kv = 2.0 * b * static_cast<double>(seq_len) * h / g / tp;
  const double activations = b * h * (2.0 + (2.0 + 2.0 / g) / tp);
  return bytes * (weights + kv + activations);
}

double RooflineOracle::expert_flops(double b, const MoeModelSpec& model, int tp) const {
  const double h = model.hidden;
  const double hi = model.intermediate;
  return 2.0 * (2.0 * b * h * hi / tp);
}

double RooflineOracle::expert_bytes(double b, const MoeModelSpec& model, int tp) const {
  const double h = model.hidden;
  const double hi = model.intermediate;
  const double bytes = model.bytes_per_param;
  return bytes * (2.0 * h * hi / tp + b * (2.0 * h + 2.0 * hi / tp));
}

double RooflineOracle::allreduce_seconds(double b, const MoeModelSpec& model, const GpuSpec& gpu,
                                         int tp) const {
  if (tp <= 1) return 0.0;
  const double payload = b * model.hidden * model.bytes_per_param;
  return 2.0 * (tp - 1) / tp * payload / gpu.intra_bandwidth;
}

double RooflineOracle::attention_time(double b, std::int64_t seq_len, const MoeModelSpec& model,
                                      const GpuSpec& gpu, int tp) const {
  const double roof = std::max(attention_flops(b, model, tp) / gpu.compute,
                               attention_bytes(b, seq_len, model, tp) / gpu.mem_bandwidth);
  return roof + allreduce_seconds(b, model, gpu, tp) + attention_overhead;
}

double RooflineOracle::expert_time(double b, const MoeModelSpec& model, const GpuSpec& gpu, int tp) const {
  const double roof = std::max(expert_flops(b, model, tp) / gpu.compute,
                               expert_bytes(b, model, tp) / gpu.mem_bandwidth);
  return roof + allreduce_seconds(b, model, gpu, tp) + expert_overhead;
}

std::vector<ProfilePoint> RooflineOracle::attention_points(std::span<const double> batches,
                                                           std::int64_t seq_len,
                                                           const MoeModelSpec& model,
                                                           const GpuSpec& gpu, int tp) const {
  std::vector<ProfilePoint> pts;
  pts.reserve(batches.size());
  for (double b : batches) pts.push_back({b, attention_time(b, seq_len, model, gpu, tp), seq_len});
  return pts;
}

std::vector<ProfilePoint> RooflineOracle::expert_points(std::span<const double> batches,
                                                        const MoeModelSpec& model, const GpuSpec& gpu,
                                                        int tp) const {
  std::vector<ProfilePoint> pts;
  pts.reserve(batches.size());
  for (double b : batches) pts.push_back({b, expert_time(b, model, gpu, tp), 0});
  return pts;
}

std::vector<double> attention_calibration_batches() {
  std::vector<double> out;
  for (int b = 16; b <= 512; b += 16) out.push_back(b);
  return out;
}

std::vector<double> expert_calibration_batches() {
  std::vector<double> out;
  for (int b = 64; b <= 2048; b += 64) out.push_back(b);
  return out;
}

CostModel synthetic_cost_model(const MoeModelSpec& model, const WorkloadSpec& workload,
                               const GpuSpec& gpu_a, int tp_a, const GpuSpec& gpu_e, int tp_e,
                               const RooflineOracle& oracle, UtilCurve util, CommBackend backend) {
  require_tp(tp_a, "tp_a");
  require_tp(tp_e, "tp_e");
  const std::int64_t s = workload.avg_seq_len;
  const auto attn_grid = attention_calibration_batches();
  std::vector<ProfilePoint> attn = oracle.attention_points(attn_grid, s, model, gpu_a, tp_a);
  const auto attn_long = oracle.attention_points(attn_grid, 2 * s, model, gpu_a, tp_a);
  attn.insert(attn.end(), attn_long.begin(), attn_long.end());
  const AttentionFit af = calibrate_attention(attn);

  const auto exp_pts = oracle.expert_points(expert_calibration_batches(), model, gpu_e, tp_e);
  const AffineFit ef = calibrate(exp_pts, {.nonnegative_intercept = true});

  CostModel cm;
  cm.attention = af.coeffs;
  cm.expert_slope = ef.slope;
  cm.expert_fixed = ef.intercept;
  cm.seq_len = s;
  cm.util = std::move(util);
  cm.backend = std::move(backend);
  cm.validate();
  return cm;
}

}  // namespace moeplan
