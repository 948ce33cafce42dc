#include "moeplan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <random>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

#include "moeplan/error.hpp"

namespace moeplan {

void StageTimes::validate() const {
  if (!(attention >= 0.0) || !(expert >= 0.0) || !(comm >= 0.0) || !std::isfinite(attention) ||
      !std::isfinite(expert) || !std::isfinite(comm)) {
    throw std::invalid_argument(
        fmt::format("stage times must be finite and >= 0 (T_a={}, T_e={}, T_c={})", attention, expert, comm));
  }
}

int min_microbatches(double comm, double forward) {
  if (!(forward > 0.0)) throw std::invalid_argument("min_microbatches: T_f must be > 0");
  if (!(comm >= 0.0)) throw std::invalid_argument("min_microbatches: T_c must be >= 0");
  if (comm >= forward) {
    throw ConstraintError(fmt::format(
        "communication not hideable: T_c ({:.6g} s) >= T_f ({:.6g} s)", comm, forward));
  }
  if (comm == 0.0) return 2;
  // m > 2 (1 + T_c / T_f)  <=>  2 T_c < (m - 2) T_f. With T_c < T_f only m = 3
  // and m = 4 qualify, and both sides are exact in floating point.
  return 2.0 * comm < forward ? 3 : 4;
}

namespace {

void check_shape(int m, int layers) {
  if (m < 1) throw std::invalid_argument(fmt::format("micro-batch count must be >= 1 (got {})", m));
  if (layers < 1) throw std::invalid_argument(fmt::format("layer count must be >= 1 (got {})", layers));
}

}  // namespace

double closed_form_total(const StageTimes& times, int m, int layers) {
  times.validate();
  check_shape(m, layers);
  const double first = times.attention + times.expert + 2.0 * times.comm;
  return first + times.forward() * (static_cast<double>(m) * layers - 1.0);
}

IterBounds closed_form_iter_bounds(const StageTimes& times, int m, int layers) {
  times.validate();
  check_shape(m, layers);
  const double tf = times.forward();
  return {times.attention + times.expert + 2.0 * times.comm + m * tf * (layers - 1.0),
          m * tf * layers};
}

std::string_view to_string(Resource r) {
  switch (r) {
    case Resource::attention: return "attention";
    case Resource::expert: return "expert";
    case Resource::dispatch: return "dispatch";
    case Resource::combine: return "combine";
  }
  return "?";
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::attn: return "attn";
    case Phase::disp: return "disp";
    case Phase::ffn: return "ffn";
    case Phase::comb: return "comb";
  }
  return "?";
}

namespace {

// Delay of one dispatch or combine message.
using DelayFn = std::function<double(int microbatch, int layer, Phase phase)>;

class Simulator {
 public:
  Simulator(const StageTimes& times, int m, int layers, DelayFn delay)
      : times_(times), m_(m), layers_(layers), delay_(std::move(delay)) {}

  SimReport run() {
    first_start_.assign(m_, -1.0);
    finish_.assign(m_, 0.0);
    attention_.ready.assign(static_cast<std::size_t>(m_) * layers_, false);
    expert_.ready.assign(static_cast<std::size_t>(m_) * layers_, false);
    const double tf = times_.forward();
    for (int j = 0; j < m_; ++j) push(j * tf, Kind::attn_ready, j, 0);

    while (!events_.empty()) {
      const Event ev = events_.top();
      events_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case Kind::attn_ready:
          attention_.ready[index(ev.microbatch, ev.layer)] = true;
          try_start(attention_, Resource::attention);
          break;
        case Kind::expert_ready:
          expert_.ready[index(ev.microbatch, ev.layer)] = true;
          try_start(expert_, Resource::expert);
          break;
        case Kind::attn_done: {
          attention_.busy = false;
          const double d = delay_(ev.microbatch, ev.layer, Phase::disp);
          record(Resource::dispatch, ev.microbatch, ev.layer, Phase::disp, now_, now_ + d);
          push(now_ + d, Kind::expert_ready, ev.microbatch, ev.layer);
          try_start(attention_, Resource::attention);
          break;
        }
        case Kind::expert_done: {
          expert_.busy = false;
          const double d = delay_(ev.microbatch, ev.layer, Phase::comb);
          record(Resource::combine, ev.microbatch, ev.layer, Phase::comb, now_, now_ + d);
          if (ev.layer + 1 < layers_) {
            push(now_ + d, Kind::attn_ready, ev.microbatch, ev.layer + 1);
          } else {
            finish_[ev.microbatch] = now_ + d;
          }
          try_start(expert_, Resource::expert);
          break;
        }
      }
    }
    return report();
  }

 private:
  enum class Kind { attn_ready, expert_ready, attn_done, expert_done };

  struct Event {
    double time;
    std::uint64_t seq;
    Kind kind;
    int microbatch;
    int layer;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
    }
  };
  // Jobs are served in (layer, micro-batch) order: a micro-batch never
  // overtakes an earlier one, even when its input is ready first.
  struct Server {
    bool busy = false;
    double busy_time = 0.0;
    std::size_t next = 0;
    std::vector<bool> ready;
  };

  std::size_t index(int mb, int layer) const { return static_cast<std::size_t>(layer) * m_ + mb; }

  void push(double t, Kind kind, int mb, int layer) { events_.push({t, seq_++, kind, mb, layer}); }

  void record(Resource r, int mb, int layer, Phase p, double start, double end) {
    timeline_.push_back({r, mb, layer, p, start, end});
  }

  void try_start(Server& server, Resource r) {
    if (server.busy || server.next == server.ready.size() || !server.ready[server.next]) return;
    const int mb = static_cast<int>(server.next % m_);
    const int layer = static_cast<int>(server.next / m_);
    ++server.next;
    server.busy = true;
    const bool attn = r == Resource::attention;
    const double dur = attn ? times_.attention : times_.expert;
    server.busy_time += dur;
    if (attn && first_start_[mb] < 0.0) first_start_[mb] = now_;
    record(r, mb, layer, attn ? Phase::attn : Phase::ffn, now_, now_ + dur);
    push(now_ + dur, attn ? Kind::attn_done : Kind::expert_done, mb, layer);
  }

  SimReport report() {
    SimReport r;
    r.total_latency = *std::max_element(finish_.begin(), finish_.end());
    r.microbatch_latency.resize(m_);
    for (int j = 0; j < m_; ++j) r.microbatch_latency[j] = finish_[j] - first_start_[j];
    r.iter_latency = *std::max_element(r.microbatch_latency.begin(), r.microbatch_latency.end());
    if (r.total_latency > 0.0) {
      r.attention_idle_fraction = 1.0 - attention_.busy_time / r.total_latency;
      r.expert_idle_fraction = 1.0 - expert_.busy_time / r.total_latency;
    }
    std::sort(timeline_.begin(), timeline_.end(), [](const TimelineEvent& a, const TimelineEvent& b) {
      return std::tie(a.start, a.resource, a.microbatch, a.layer) <
             std::tie(b.start, b.resource, b.microbatch, b.layer);
    });
    r.timeline = std::move(timeline_);
    return r;
  }

  StageTimes times_;
  int m_;
  int layers_;
  DelayFn delay_;
  double now_ = 0.0;
  std::uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  Server attention_;
  Server expert_;
  std::vector<double> first_start_;
  std::vector<double> finish_;
  std::vector<TimelineEvent> timeline_;
};

// Linear-interpolated percentile of a sorted sample.
double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

constexpr double kZ99 = 2.3263478740408408;  // standard normal 0.99 quantile

}  // namespace

SimReport simulate(const StageTimes& times, int m, int layers) {
  times.validate();
  check_shape(m, layers);
  const double tc = times.comm;
  return Simulator(times, m, layers, [tc](int, int, Phase) { return tc; }).run();
}

JitterReport simulate_with_jitter(const StageTimes& times, int m, int layers, const CommBackend& backend,
                                  std::uint64_t seed, int samples) {
  times.validate();
  check_shape(m, layers);
  backend.validate();
  if (samples < 1) throw std::invalid_argument("simulate_with_jitter: samples must be >= 1");

  const double base = times.comm + backend.base_overhead;
  const double sigma = std::log(backend.jitter_p99_factor) / kZ99;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> totals, iters;
  totals.reserve(samples);
  iters.reserve(samples);
  for (int s = 0; s < samples; ++s) {
    DelayFn delay = [&](int, int, Phase) {
      return sigma == 0.0 ? base : base * std::exp(sigma * normal(rng));
    };
    const SimReport r = Simulator(times, m, layers, delay).run();
    totals.push_back(r.total_latency);
    iters.push_back(r.iter_latency);
  }

  JitterReport out;
  out.samples = samples;
  double sum = 0.0;
  for (double t : totals) sum += t;
  out.mean_total = sum / samples;
  std::sort(totals.begin(), totals.end());
  std::sort(iters.begin(), iters.end());
  out.p50_total = percentile(totals, 0.50);
  out.p99_total = percentile(totals, 0.99);
  out.p50_iter = percentile(iters, 0.50);
  out.p99_iter = percentile(iters, 0.99);
  return out;
}

void write_timeline_csv(std::ostream& out, const SimReport& report) {
  out << "resource,microbatch,layer,phase,start_s,end_s\n";
  for (const auto& e : report.timeline) {
    out << fmt::format("{},{},{},{},{:.12g},{:.12g}\n", to_string(e.resource), e.microbatch, e.layer,
                       to_string(e.phase), e.start, e.end);
  }
}

}  // namespace moeplan
