#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "moeplan/catalog.hpp"

namespace moeplan {

// ---------------------------------------------------------------------------
// Roofline primitives
// ---------------------------------------------------------------------------

// FLOPs of a (b x h_in) * (h_in x h_out) GEMM. Throws std::invalid_argument on
// a zero dimension and std::overflow_error if the count exceeds 64 bits.
std::uint64_t gemm_flops(std::uint64_t b, std::uint64_t h_in, std::uint64_t h_out);

// Smallest batch (tokens) at which a weight-streaming GEMM becomes
// compute-bound on `gpu`: ceil(compute / mem_bandwidth).
std::int64_t min_compute_bound_batch(const GpuSpec& gpu);

struct MoeRouting {
  int topk = 1;
  int experts = 1;
};

// Theoretical FFN MFU at batch `b`: min(b * BW / F, 1) for a dense FFN, with
// the per-expert batch scaled by topk/experts for MoE.
double ffn_utilization(double b, const GpuSpec& gpu, std::optional<MoeRouting> moe = std::nullopt);

struct ParamSizes {
  double attention_bytes = 0.0;  // QKV + output projections, all layers
  double expert_bytes = 0.0;     // one expert's two FFN GEMMs, all layers
};

ParamSizes param_sizes(const MoeModelSpec& model);

// ---------------------------------------------------------------------------
// Network utilization and communication backends
// ---------------------------------------------------------------------------

// Fraction of link bandwidth achieved as a function of message size.
class UtilCurve {
 public:
  struct Saturating {
    double half_bytes = 64.0 * 1024.0;  // size at which utilization is 1/2
    bool operator==(const Saturating&) const = default;
  };
  struct Table {
    std::vector<std::pair<double, double>> points;  // (message_bytes, utilization), sorted
    bool operator==(const Table&) const = default;
  };

  UtilCurve();  // saturating with the default half-utilization size

  static UtilCurve saturating(double half_bytes);
  static UtilCurve ideal() { return saturating(0.0); }
  // Piecewise-linear; clamps outside the sampled range. Throws ConfigError
  // unless sizes are increasing, utilization is non-decreasing and in (0, 1].
  static UtilCurve table(std::vector<std::pair<double, double>> points);

  double operator()(double message_bytes) const;

  bool is_table() const { return std::holds_alternative<Table>(curve_); }
  const Saturating* saturating_params() const { return std::get_if<Saturating>(&curve_); }
  const Table* table_points() const { return std::get_if<Table>(&curve_); }

  bool operator==(const UtilCurve&) const = default;

 private:
  std::variant<Saturating, Table> curve_;
};

// Overheads of a dispatch/combine implementation, independent of payload.
struct CommBackend {
  std::string name = "m2n";
  double base_overhead = 0.0;          // seconds per message
  double per_receiver_penalty = 0.0;   // seconds per receiver above receiver_batch
  int receiver_batch = 8;              // receivers handled without penalty
  double jitter_p99_factor = 1.0;      // p99 / p50 of per-message delay

  void validate() const;

  // Low-overhead RDMA-style library and a general-purpose collective library.
  static CommBackend m2n();
  static CommBackend nccl();

  bool operator==(const CommBackend&) const = default;
};

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

// Attention time per micro-batch is (per_seq_token * s + per_token) * b + fixed.
struct AttentionCoeffs {
  double per_seq_token = 0.0;  // alpha, seconds / (token * sequence token)
  double per_token = 0.0;      // beta, seconds / token
  double fixed = 0.0;          // k2, seconds

  bool operator==(const AttentionCoeffs&) const = default;
};

struct CostModel {
  AttentionCoeffs attention;
  double expert_slope = 0.0;  // k3, seconds / token
  double expert_fixed = 0.0;  // k4, seconds
  std::int64_t seq_len = 1;   // s used to evaluate k1
  UtilCurve util;
  CommBackend backend;

  double k1() const { return attention.per_seq_token * static_cast<double>(seq_len) + attention.per_token; }
  double k2() const { return attention.fixed; }
  double k3() const { return expert_slope; }
  double k4() const { return expert_fixed; }

  CostModel at_seq_len(std::int64_t s) const;

  // k1, k3 > 0; k2, k4 >= 0; alpha >= 0.
  void validate() const;

  bool operator==(const CostModel&) const = default;
};

double attention_time(double b_a, const CostModel& cm);
double expert_time(double b_e, const CostModel& cm);

// ---------------------------------------------------------------------------
// Communication time
// ---------------------------------------------------------------------------

struct CommInputs {
  double attn_tokens = 0.0;    // b_a
  double expert_tokens = 0.0;  // b_e
  int tp_a = 1;
  int tp_e = 1;
  double attn_net_bandwidth = 0.0;    // W_a, bytes/s
  double expert_net_bandwidth = 0.0;  // W_e, bytes/s
  int attention_nodes = 1;            // receivers of the combine direction
};

struct CommBreakdown {
  double dispatch_bytes = 0.0;  // b_a * h * K * bytes / tp_a
  double combine_bytes = 0.0;   // b_e * h * bytes / tp_e
  double dispatch_seconds = 0.0;
  double combine_seconds = 0.0;
  double seconds() const { return dispatch_seconds > combine_seconds ? dispatch_seconds : combine_seconds; }
};

CommBreakdown comm_breakdown(const CommInputs& in, const MoeModelSpec& model, const CostModel& cm);
double comm_time(const CommInputs& in, const MoeModelSpec& model, const CostModel& cm);

// Average payload one attention GPU sends to one expert node per micro-batch.
double per_pair_message_bytes(double b_a, const MoeModelSpec& model, int tp_a);

// ---------------------------------------------------------------------------
// Memory accounting
// ---------------------------------------------------------------------------

struct MemoryReport {
  double kv_bytes = 0.0;
  double attention_param_bytes = 0.0;
  double expert_param_bytes = 0.0;
  bool attention_fits = false;
  bool expert_fits = true;
  double attention_slack_bytes = 0.0;  // tp_a * C_a - kv - P_a
  double expert_slack_bytes = 0.0;     // tp_e * C_e - P_e
};

// KV cache of m micro-batches of b_a requests at the workload's sequence
// length must fit beside the attention weights: kv + P_a < tp_a * C_a. The
// comparison is evaluated exactly in integer arithmetic.
MemoryReport kv_cache_check(int m, std::int64_t b_a, const MoeModelSpec& model,
                            const WorkloadSpec& workload, int tp_a, const GpuSpec& gpu_a);
// Same, also checking tp_e * C_e > P_e for the expert node.
MemoryReport kv_cache_check(int m, std::int64_t b_a, const MoeModelSpec& model,
                            const WorkloadSpec& workload, int tp_a, const GpuSpec& gpu_a,
                            int tp_e, const GpuSpec& gpu_e);

bool attention_weights_fit(const MoeModelSpec& model, int tp_a, const GpuSpec& gpu_a);
bool expert_weights_fit(const MoeModelSpec& model, int tp_e, const GpuSpec& gpu_e);

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

enum class ProfileKind { attention, expert };

struct ProfilePoint {
  double batch = 0.0;
  double seconds = 0.0;
  std::int64_t seq_len = 0;  // attention only; 0 = unspecified
};

struct AffineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms_residual = 0.0;
};

struct FitOptions {
  // Refit through the origin when the unconstrained intercept is negative.
  bool nonnegative_intercept = false;
};

// Least-squares affine fit seconds = slope * batch + intercept. Throws
// CalibrationError with fewer than two distinct batch sizes.
AffineFit calibrate(std::span<const ProfilePoint> points, FitOptions options = {});

// Attention fit that separates the sequence-length-proportional slope. With a
// single sequence length the whole slope is attributed to per_token.
struct AttentionFit {
  AttentionCoeffs coeffs;
  double rms_residual = 0.0;
};
AttentionFit calibrate_attention(std::span<const ProfilePoint> points,
                                 FitOptions options = {.nonnegative_intercept = true});

// Synthetic per-layer timings from the roofline: max(FLOPs / F, bytes / BW)
// plus a tensor-parallel all-reduce over the intra-node link and a fixed
// launch overhead. Used in place of measured profiles.
struct RooflineOracle {
  double attention_overhead = 40e-6;  // seconds per layer
  double expert_overhead = 25e-6;

  double attention_flops(double b, const MoeModelSpec& model, int tp) const;
  double attention_bytes(double b, std::int64_t seq_len, const MoeModelSpec& model, int tp) const;
  double expert_flops(double b, const MoeModelSpec& model, int tp) const;
  double expert_bytes(double b, const MoeModelSpec& model, int tp) const;
  double allreduce_seconds(double b, const MoeModelSpec& model, const GpuSpec& gpu, int tp) const;

  double attention_time(double b, std::int64_t seq_len, const MoeModelSpec& model, const GpuSpec& gpu,
                        int tp) const;
  double expert_time(double b, const MoeModelSpec& model, const GpuSpec& gpu, int tp) const;

  std::vector<ProfilePoint> attention_points(std::span<const double> batches, std::int64_t seq_len,
                                             const MoeModelSpec& model, const GpuSpec& gpu, int tp) const;
  std::vector<ProfilePoint> expert_points(std::span<const double> batches, const MoeModelSpec& model,
                                          const GpuSpec& gpu, int tp) const;
};

// Batch grids used for synthetic calibration.
std::vector<double> attention_calibration_batches();
std::vector<double> expert_calibration_batches();

// Cost model for (gpu_a, tp_a) attention nodes and (gpu_e, tp_e) expert nodes
// calibrated against the roofline oracle at the workload's sequence length.
CostModel synthetic_cost_model(const MoeModelSpec& model, const WorkloadSpec& workload,
                               const GpuSpec& gpu_a, int tp_a, const GpuSpec& gpu_e, int tp_e,
                               const RooflineOracle& oracle = {}, UtilCurve util = {},
                               CommBackend backend = CommBackend::m2n());

}  // namespace moeplan
