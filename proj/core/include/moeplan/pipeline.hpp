#pragma once

#include <cstdint>
#include <ostream>
#include <string_view>
#include <vector>

#include "moeplan/perf_model.hpp"

namespace moeplan {

// Per-micro-batch, per-layer stage times (seconds).
struct StageTimes {
  double attention = 0.0;  // T_a
  double expert = 0.0;     // T_e
  double comm = 0.0;       // T_c, one direction

  double forward() const { return attention > expert ? attention : expert; }  // T_f
  void validate() const;

  bool operator==(const StageTimes&) const = default;
};

// Smallest micro-batch count that hides communication behind computation,
// m * T_f >= 2 * (T_f + T_c). When T_c > 0 the cover must be strict, so a
// ratio of exactly one half needs four micro-batches; T_c == 0 gives 2.
// Throws ConstraintError when T_c >= T_f.
int min_microbatches(double comm, double forward);

// Latency of the whole global batch through all layers:
// (T_a + T_e + 2 T_c) + T_f (m L - 1).
double closed_form_total(const StageTimes& times, int m, int layers);

struct IterBounds {
  double lower = 0.0;  // (T_a + T_e + 2 T_c) + m T_f (L - 1)
  double upper = 0.0;  // m T_f L
};
IterBounds closed_form_iter_bounds(const StageTimes& times, int m, int layers);

enum class Resource { attention, expert, dispatch, combine };
enum class Phase { attn, disp, ffn, comb };

std::string_view to_string(Resource r);
std::string_view to_string(Phase p);

struct TimelineEvent {
  Resource resource;
  int microbatch;
  int layer;  // 0-based
  Phase phase;
  double start;
  double end;

  bool operator==(const TimelineEvent&) const = default;
};

struct SimReport {
  // Per micro-batch: end of its last combine minus start of its first attention.
  std::vector<double> microbatch_latency;
  double iter_latency = 0.0;  // max over microbatch_latency
  double total_latency = 0.0;
  double attention_idle_fraction = 0.0;
  double expert_idle_fraction = 0.0;
  // Ordered by (start, resource, microbatch, layer). Attention and expert are
  // exclusive resources; dispatch/combine are non-blocking link delays.
  std::vector<TimelineEvent> timeline;

  bool operator==(const SimReport&) const = default;
};

// Event-driven execution of the ping-pong schedule: m micro-batches, L layers,
// one attention and one expert resource, links modeled as pure delays. Each
// resource serves micro-batches in their original order, layer by layer, with
// no overtaking. Micro-batch j is released at j * T_f, the steady-state offset.
SimReport simulate(const StageTimes& times, int m, int layers);

struct JitterReport {
  int samples = 0;
  double p50_total = 0.0;
  double p99_total = 0.0;
  double mean_total = 0.0;
  double p50_iter = 0.0;
  double p99_iter = 0.0;

  bool operator==(const JitterReport&) const = default;
};

// Repeats the simulation `samples` times with every message delayed by
// (T_c + base_overhead) * X, X lognormal with median 1 and
// p99 / p50 = jitter_p99_factor. Deterministic for a given seed.
JitterReport simulate_with_jitter(const StageTimes& times, int m, int layers, const CommBackend& backend,
                                  std::uint64_t seed, int samples = 64);

// resource,microbatch,layer,phase,start_s,end_s
void write_timeline_csv(std::ostream& out, const SimReport& report);

}  // namespace moeplan
