#include "moeplan/planner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <map>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

#include "moeplan/error.hpp"

namespace moeplan {

std::string_view to_string(Binding b) {
  switch (b) {
    case Binding::none: return "none";
    case Binding::attention_memory: return "attention_memory";
    case Binding::expert_memory: return "expert_memory";
    case Binding::slo: return "slo";
    case Binding::comm_not_hidden: return "comm_not_hidden";
    case Binding::microbatches: return "microbatches";
    case Binding::balance: return "balance";
    case Binding::no_cost_model: return "no_cost_model";
  }
  return "?";
}

CostModelFactory synthetic_cost_factory(const MoeModelSpec& model, const WorkloadSpec& workload,
                                        RooflineOracle oracle, UtilCurve util, CommBackend backend) {
  return [model, workload, oracle, util = std::move(util), backend = std::move(backend)](
             const GpuSpec& gpu_a, int tp_a, const GpuSpec& gpu_e, int tp_e) -> std::optional<CostModel> {
    try {
      return synthetic_cost_model(model, workload, gpu_a, tp_a, gpu_e, tp_e, oracle, util, backend);
    } catch (const CalibrationError&) {
      return std::nullopt;
    }
  };
}

CostModelFactory fixed_cost_factory(CostModel cm) {
  cm.validate();
  return [cm = std::move(cm)](const GpuSpec&, int, const GpuSpec&, int) -> std::optional<CostModel> {
    return cm;
  };
}

int balance_attention_nodes(const CostModel& cm, int experts, int topk, double representative_batch) {
  if (!(cm.k1() > 0.0) || !(cm.k3() > 0.0)) {
    throw std::invalid_argument("balance_attention_nodes: k1 and k3 must be > 0");
  }
  if (experts < 1 || topk < 1) throw std::invalid_argument("balance_attention_nodes: E and K must be >= 1");
  const double ratio = cm.k1() * experts / (cm.k3() * topk);
  const int lo = std::max(1, static_cast<int>(std::floor(ratio)));
  const int hi = std::max(1, static_cast<int>(std::ceil(ratio)));
  if (lo == hi) return lo;

  // Each attention node holds `representative_batch` tokens of a micro-batch.
  const auto gap = [&](int n_a) {
    const double b_e = representative_batch * n_a * topk / experts;
    return std::abs(attention_time(representative_batch, cm) - expert_time(b_e, cm));
  };
  return gap(hi) < gap(lo) ? hi : lo;
}

namespace {

double deployment_cost(const PlanSkeleton& sk, const GpuSpec& gpu_a, const GpuSpec& gpu_e, CostMetric metric) {
  double unit_a = gpu_a.price;
  double unit_e = gpu_e.price;
  if (metric == CostMetric::power) {
    for (const GpuSpec* g : {&gpu_a, &gpu_e}) {
      if (!g->max_power) {
        throw ConfigError(fmt::format("GPU '{}' has no max_power; the power metric cannot be used", g->name));
      }
    }
    unit_a = *gpu_a.max_power;
    unit_e = *gpu_e.max_power;
  }
  return sk.tp_a * sk.n_a * unit_a + sk.tp_e * sk.experts * unit_e;
}

void check_skeleton(const PlanSkeleton& sk) {
  if (sk.tp_a < 1 || sk.tp_e < 1 || sk.n_a < 1 || sk.experts < 1 || sk.m < 1) {
    throw std::invalid_argument(fmt::format("invalid plan skeleton (tp_a={}, tp_e={}, n_a={}, E={}, m={})",
                                            sk.tp_a, sk.tp_e, sk.n_a, sk.experts, sk.m));
  }
}

// SLO and KV capacity, the two constraints the batch search maximises under.
bool batch_feasible(const DeploymentPlan& p) { return p.memory.attention_fits && p.slack.slo >= 0.0; }

struct Batches {
  double attn = 0.0;
  double expert = 0.0;
};

Batches stage_batches(const PlanSkeleton& sk, std::int64_t global_batch, const PlanContext& ctx) {
  const double per_round = static_cast<double>(sk.m) * sk.n_a;
  return {static_cast<double>(global_batch) / per_round,
          static_cast<double>(global_batch) * ctx.model.topk / (static_cast<double>(sk.m) * sk.experts) *
              ctx.limits.expert_imbalance};
}

StageTimes stage_times(const PlanSkeleton& sk, const Batches& b, const PlanContext& ctx, const CostModel& cm) {
  CommInputs comm;
  comm.attn_tokens = b.attn;
  comm.expert_tokens = b.expert;
  comm.tp_a = sk.tp_a;
  comm.tp_e = sk.tp_e;
  comm.attn_net_bandwidth = ctx.gpu_a.net_bandwidth;
  comm.expert_net_bandwidth = ctx.gpu_e.net_bandwidth;
  comm.attention_nodes = sk.n_a;
  return {attention_time(b.attn, cm), expert_time(b.expert, cm), comm_time(comm, ctx.model, cm)};
}

// Balance, communication hiding and micro-batch count.
bool pipeline_feasible(const StageTimes& t, int m, const SearchLimits& limits) {
  const double tf = t.forward();
  if (std::abs(t.attention - t.expert) / tf > limits.balance_slack) return false;
  if (!(t.comm < tf)) return false;
  return m >= min_microbatches(t.comm, tf);
}

}  // namespace

DeploymentPlan evaluate_plan(const PlanSkeleton& sk, std::int64_t global_batch, const PlanContext& ctx,
                             const CostModel& cm) {
  check_skeleton(sk);
  const std::int64_t per_round = static_cast<std::int64_t>(sk.m) * sk.n_a;
  if (global_batch < per_round || global_batch % per_round != 0) {
    throw std::invalid_argument(
        fmt::format("global batch {} is not a positive multiple of m * n_a = {}", global_batch, per_round));
  }
  const MoeModelSpec& model = ctx.model;

  DeploymentPlan p;
  p.skeleton = sk;
  p.global_batch = global_batch;
  p.gpu_a = ctx.gpu_a;
  p.gpu_e = ctx.gpu_e;
  p.metric = ctx.limits.cost_metric;

  const std::int64_t b_a = global_batch / per_round;
  const Batches batches = stage_batches(sk, global_batch, ctx);
  p.attn_batch = batches.attn;
  p.expert_batch = batches.expert;
  p.times = stage_times(sk, batches, ctx, cm);
  const double tf = p.times.forward();
  const int layers = model.layers;

  p.iter_upper = closed_form_iter_bounds(p.times, sk.m, layers).upper;
  p.total_latency = closed_form_total(p.times, sk.m, layers);
  p.throughput = static_cast<double>(global_batch) / p.total_latency;
  p.cost = deployment_cost(sk, ctx.gpu_a, ctx.gpu_e, p.metric);
  p.tpuc = p.throughput / p.cost;
  p.memory = kv_cache_check(sk.m, b_a, model, ctx.workload, sk.tp_a, ctx.gpu_a, sk.tp_e, ctx.gpu_e);

  p.slack.balance = ctx.limits.balance_slack - std::abs(p.times.attention - p.times.expert) / tf;
  p.slack.comm_hiding = tf - p.times.comm;
  p.slack.microbatches = p.times.comm < tf ? sk.m - min_microbatches(p.times.comm, tf) : -sk.m;
  p.slack.attention_memory = p.memory.attention_slack_bytes;
  p.slack.expert_memory = p.memory.expert_slack_bytes;
  p.slack.slo = ctx.workload.slo_tbt - p.iter_upper;

  if (!p.memory.attention_fits) {
    p.binding = Binding::attention_memory;
  } else if (!p.memory.expert_fits) {
    p.binding = Binding::expert_memory;
  } else if (p.slack.slo < 0.0) {
    p.binding = Binding::slo;
  } else if (p.slack.comm_hiding <= 0.0) {
    p.binding = Binding::comm_not_hidden;
  } else if (p.slack.microbatches < 0) {
    p.binding = Binding::microbatches;
  } else if (p.slack.balance < 0.0) {
    p.binding = Binding::balance;
  }
  return p;
}

std::optional<DeploymentPlan> max_batch_under_slo(const PlanSkeleton& sk, const PlanContext& ctx,
                                                  const CostModel& cm) {
  check_skeleton(sk);
  const std::int64_t per_round = static_cast<std::int64_t>(sk.m) * sk.n_a;
  const auto at = [&](std::int64_t k) { return evaluate_plan(sk, k * per_round, ctx, cm); };

  DeploymentPlan best = at(1);
  if (!batch_feasible(best)) return std::nullopt;

  // Invariant: k = lo feasible, k = hi infeasible.
  constexpr std::int64_t kCap = std::int64_t{1} << 40;
  std::int64_t lo = 1, hi = 2;
  while (true) {
    if (hi > kCap) {
      throw ConstraintError("batch search did not terminate: neither SLO nor memory bounds the batch size");
    }
    DeploymentPlan p = at(hi);
    if (!batch_feasible(p)) break;
    lo = hi;
    best = std::move(p);
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    DeploymentPlan p = at(mid);
    if (batch_feasible(p)) {
      lo = mid;
      best = std::move(p);
    } else {
      hi = mid;
    }
  }
  best.simulated_total = simulate(best.times, sk.m, ctx.model.layers).total_latency;
  return best;
}

std::optional<DeploymentPlan> max_feasible_batch(const PlanSkeleton& skeleton, const PlanContext& ctx,
                                                 const CostModel& cm) {
  std::optional<DeploymentPlan> top = max_batch_under_slo(skeleton, ctx, cm);
  if (!top || top->binding == Binding::none) return top;

  // Pipeline constraints are not monotone in B; walk down from the SLO/KV
  // limit. Throughput grows with B, so the first feasible batch is the best.
  const std::int64_t per_round = static_cast<std::int64_t>(skeleton.m) * skeleton.n_a;
  for (std::int64_t k = top->global_batch / per_round - 1; k >= 1; --k) {
    const StageTimes t = stage_times(skeleton, stage_batches(skeleton, k * per_round, ctx), ctx, cm);
    if (!pipeline_feasible(t, skeleton.m, ctx.limits)) continue;
    DeploymentPlan p = evaluate_plan(skeleton, k * per_round, ctx, cm);
    p.simulated_total = simulate(p.times, skeleton.m, ctx.model.layers).total_latency;
    return p;
  }
  return top;
}

std::vector<int> tp_choices(const GpuSpec& gpu) {
  std::vector<int> out;
  for (int tp : {1, 2, 4, 8}) {
    if (tp <= gpu.max_gpus_per_node) out.push_back(tp);
  }
  return out;
}

Binding SearchResult::binding() const {
  if (best) return Binding::none;
  std::map<Binding, int> counts;
  for (const auto& c : candidates) ++counts[c.binding];
  Binding top = Binding::none;
  int top_count = 0;
  for (const auto& [b, n] : counts) {
    if (n > top_count) {
      top = b;
      top_count = n;
    }
  }
  return top;
}

bool plan_better(const DeploymentPlan& a, const DeploymentPlan& b) {
  if (a.tpuc != b.tpuc) return a.tpuc > b.tpuc;
  const auto key = [](const DeploymentPlan& p) {
    return std::make_tuple(p.total_gpus(), p.skeleton.m, p.skeleton.tp_a, p.skeleton.tp_e);
  };
  return key(a) < key(b);
}

SearchResult search(const PlanContext& ctx, const CostModelFactory& costs, const SearchSpace& space) {
  ctx.model.validate();
  ctx.workload.validate();
  ctx.limits.validate();
  ctx.gpu_a.validate();
  ctx.gpu_e.validate();

  const auto pick = [](const std::vector<int>& given, std::vector<int> fallback) {
    return given.empty() ? fallback : given;
  };
  const std::vector<int> tps_a = pick(space.tp_a, tp_choices(ctx.gpu_a));
  const std::vector<int> tps_e = pick(space.tp_e, tp_choices(ctx.gpu_e));
  std::vector<int> ms = space.microbatches;
  if (ms.empty()) {
    for (int m = 3; m <= ctx.limits.max_microbatches; ++m) ms.push_back(m);
  }
  for (int tp : tps_a) {
    if (tp < 1 || tp > ctx.gpu_a.max_gpus_per_node) {
      throw std::invalid_argument(fmt::format("tp_a={} outside [1, {}]", tp, ctx.gpu_a.max_gpus_per_node));
    }
  }
  for (int tp : tps_e) {
    if (tp < 1 || tp > ctx.gpu_e.max_gpus_per_node) {
      throw std::invalid_argument(fmt::format("tp_e={} outside [1, {}]", tp, ctx.gpu_e.max_gpus_per_node));
    }
  }
  for (int m : ms) {
    if (m < 1) throw std::invalid_argument(fmt::format("micro-batch count {} must be >= 1", m));
  }

  const int experts = ctx.model.experts;
  SearchResult out;
  for (int tp_e : tps_e) {
    for (int tp_a : tps_a) {
      const bool a_fits = attention_weights_fit(ctx.model, tp_a, ctx.gpu_a);
      const bool e_fits = expert_weights_fit(ctx.model, tp_e, ctx.gpu_e);
      std::optional<CostModel> cm;
      if (a_fits && e_fits) cm = costs(ctx.gpu_a, tp_a, ctx.gpu_e, tp_e);
      const int n_a = cm ? balance_attention_nodes(*cm, experts, ctx.model.topk) : 1;

      for (int m : ms) {
        CandidateRecord rec;
        rec.skeleton = {tp_a, tp_e, n_a, experts, m};
        if (!a_fits) {
          rec.binding = Binding::attention_memory;
        } else if (!e_fits) {
          rec.binding = Binding::expert_memory;
        } else if (!cm) {
          rec.binding = Binding::no_cost_model;
        } else {
          ++out.evaluations;
          rec.plan = max_feasible_batch(rec.skeleton, ctx, *cm);
          if (rec.plan) {
            rec.binding = rec.plan->binding;
          } else {
            // Report why even the smallest batch fails.
            rec.binding = evaluate_plan(rec.skeleton, static_cast<std::int64_t>(m) * n_a, ctx, *cm).binding;
          }
        }
        if (rec.binding == Binding::none && (!out.best || plan_better(*rec.plan, *out.best))) {
          out.best = rec.plan;
        }
        out.candidates.push_back(std::move(rec));
      }
    }
  }
  return out;
}

HeteroResult hetero_search(const MoeModelSpec& model, const Catalog& catalog, const CostModelFactory& costs,
                           const WorkloadSpec& workload, const SearchLimits& limits, const SearchSpace& space) {
  if (catalog.empty()) throw ConfigError("hetero_search: the GPU catalog is empty");

  HeteroResult out;
  std::vector<std::pair<const GpuSpec*, const GpuSpec*>> pairs;
  for (const auto& a : catalog) {
    for (const auto& e : catalog) {
      if (limits.cost_metric == CostMetric::power && (!a.max_power || !e.max_power)) {
        const std::string& missing = !a.max_power ? a.name : e.name;
        out.excluded.emplace_back(fmt::format("{}/{}", a.name, e.name),
                                  fmt::format("no max_power for {}", missing));
        continue;
      }
      pairs.emplace_back(&a, &e);
    }
  }

  std::vector<std::future<SearchResult>> jobs;
  jobs.reserve(pairs.size());
  for (const auto& [a, e] : pairs) {
    PlanContext ctx{model, workload, limits, *a, *e};
    jobs.push_back(std::async(std::launch::async, [ctx = std::move(ctx), &costs, &space] {
      return search(ctx, costs, space);
    }));
  }

  std::vector<PairResult> feasible;
  std::vector<DeploymentPlan> bests;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    PairResult r{pairs[i].first->name, pairs[i].second->name, jobs[i].get()};
    if (r.result.feasible()) {
      bests.push_back(*r.result.best);
      feasible.push_back(std::move(r));
    } else {
      out.infeasible.push_back(std::move(r));
    }
  }
  std::vector<std::size_t> order(feasible.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return plan_better(bests[x], bests[y]); });
  for (std::size_t i : order) out.ranked.push_back(std::move(feasible[i]));
  return out;
}

void write_candidates_csv(std::ostream& out, const SearchResult& result) {
  out << "tp_a,tp_e,n_a,m,B,T_a,T_e,T_c,iter_upper,tpuc,binding\n";
  for (const auto& c : result.candidates) {
    const auto& s = c.skeleton;
    if (c.plan) {
      const auto& p = *c.plan;
      out << fmt::format("{},{},{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{}\n", s.tp_a, s.tp_e, s.n_a, s.m,
                         p.global_batch, p.times.attention, p.times.expert, p.times.comm, p.iter_upper, p.tpuc,
                         to_string(c.binding));
    } else {
      out << fmt::format("{},{},{},{},,,,,,,{}\n", s.tp_a, s.tp_e, s.n_a, s.m, to_string(c.binding));
    }
  }
}

}  // namespace moeplan
