#include "moeplan/cli/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "moeplan/balance.hpp"
#include "moeplan/cli/sweep.hpp"
#include "moeplan/config.hpp"
#include "moeplan/error.hpp"
#include "moeplan/json_io.hpp"
#include "moeplan/perf_model.hpp"
#include "moeplan/pipeline.hpp"
#include "moeplan/planner.hpp"
#include "moeplan/profile.hpp"

namespace moeplan::cli {

namespace {

struct Globals {
  std::string config;
  bool json = false;
  bool csv = false;
  bool explain = false;
  std::uint64_t seed = 0;
};

// Options shared by the commands that build a planning context.
struct ModelOptions {
  std::optional<std::string> model;
  std::optional<std::string> gpu;
  std::optional<std::string> gpu_a;
  std::optional<std::string> gpu_e;
  std::optional<std::string> metric;
  std::optional<double> slo;
  std::optional<int> max_microbatches;
  std::optional<std::int64_t> seq_len;
  std::optional<double> imbalance;
  std::optional<double> balance_slack;
  std::optional<std::string> profile;
  std::string backend = "m2n";
};

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--model", o.model, "Builtin model name (overrides the config)");
  cmd->add_option("--gpu", o.gpu, "GPU type for both attention and expert nodes");
  cmd->add_option("--gpu-a", o.gpu_a, "GPU type of attention nodes");
  cmd->add_option("--gpu-e", o.gpu_e, "GPU type of expert nodes");
  cmd->add_option("--metric", o.metric, "Cost metric: price or power");
  cmd->add_option("--slo", o.slo, "Time-between-tokens SLO in seconds");
  cmd->add_option("--max-microbatches", o.max_microbatches, "Largest micro-batch count searched");
  cmd->add_option("--seq-len", o.seq_len, "Average KV-resident sequence length");
  cmd->add_option("--imbalance", o.imbalance, "Expert batch multiplier for hot experts (>= 1)");
  cmd->add_option("--balance-slack", o.balance_slack, "Allowed |T_a - T_e| / T_f");
  cmd->add_option("--profile", o.profile, "Measured profile CSV used instead of the roofline oracle");
  cmd->add_option("--backend", o.backend, "Communication backend: m2n or nccl");
}

CommBackend parse_backend(std::string_view name) {
  const std::string key = normalize_name(name);
  if (key == "m2n") return CommBackend::m2n();
  if (key == "nccl") return CommBackend::nccl();
  throw ConfigError(fmt::format("unknown backend '{}' (expected m2n or nccl)", name));
}

std::string config_path(const Globals& g) {
  if (!g.config.empty()) return g.config;
  if (const char* env = std::getenv(kConfigEnv); env && *env) return env;
  return {};
}

Config load_base_config(const Globals& g) {
  const std::string path = config_path(g);
  if (!path.empty()) return load_config(path);
  Config c;
  c.model.name.clear();
  return c;
}

struct Context {
  Config config;
  CostModelFactory costs;
  CommBackend backend;
};

Context build_context(const Globals& g, const ModelOptions& o) {
  Context ctx;
  ctx.config = load_base_config(g);
  Config& c = ctx.config;
  if (o.model) c.model = builtin_model(*o.model);
  if (c.model.name.empty() && c.model.layers == 0) {
    throw ConfigError("no model given: pass --model or a config file with a \"model\" entry");
  }
  if (o.metric) c.limits.cost_metric = parse_cost_metric(*o.metric);
  if (o.slo) c.workload.slo_tbt = *o.slo;
  if (o.max_microbatches) c.limits.max_microbatches = *o.max_microbatches;
  if (o.seq_len) c.workload.avg_seq_len = *o.seq_len;
  if (o.imbalance) c.limits.expert_imbalance = *o.imbalance;
  if (o.balance_slack) c.limits.balance_slack = *o.balance_slack;
  c.model.validate();
  c.workload.validate();
  c.limits.validate();

  ctx.backend = parse_backend(o.backend);
  if (o.profile) {
    const Profile prof = load_profile(*o.profile);
    ctx.costs = fixed_cost_factory(cost_model_from_profile(prof, c.workload.avg_seq_len, UtilCurve{}, ctx.backend));
  } else {
    ctx.costs = synthetic_cost_factory(c.model, c.workload, RooflineOracle{}, UtilCurve{}, ctx.backend);
  }
  return ctx;
}

// (attention GPU, expert GPU) from --gpu / --gpu-a / --gpu-e; nullopt when none given.
std::optional<std::pair<GpuSpec, GpuSpec>> selected_pair(const Catalog& catalog, const ModelOptions& o) {
  if (!o.gpu && !o.gpu_a && !o.gpu_e) return std::nullopt;
  if (o.gpu && (o.gpu_a || o.gpu_e)) throw ConfigError("--gpu cannot be combined with --gpu-a/--gpu-e");
  if (o.gpu) {
    const GpuSpec& g = catalog.at(*o.gpu);
    return std::pair{g, g};
  }
  if (!o.gpu_a || !o.gpu_e) throw ConfigError("--gpu-a and --gpu-e must be given together");
  return std::pair{catalog.at(*o.gpu_a), catalog.at(*o.gpu_e)};
}

std::string ms(double seconds) { return fmt::format("{:.3f} ms", seconds * 1e3); }
std::string gb(double bytes) { return fmt::format("{:.2f} GB", bytes / kGB); }

void print_plan(std::ostream& out, const DeploymentPlan& p, const MoeModelSpec& model, const WorkloadSpec& w) {
  const auto& s = p.skeleton;
  fmt::print(out, "plan for {} with {} attention / {} experts (metric: {})\n", model.name, p.gpu_a.name,
             p.gpu_e.name, to_string(p.metric));
  fmt::print(out, "  attention nodes   n_a = {} x tp_a = {} GPUs\n", s.n_a, s.tp_a);
  fmt::print(out, "  expert nodes      E = {} x tp_e = {} GPUs\n", s.experts, s.tp_e);
  fmt::print(out, "  micro-batches     m = {}\n", s.m);
  fmt::print(out, "  global batch      B = {} (b_a = {:g}, b_e = {:.6g})\n", p.global_batch, p.attn_batch,
             p.expert_batch);
  fmt::print(out, "  stage times       T_a = {}, T_e = {}, T_c = {}\n", ms(p.times.attention), ms(p.times.expert),
             ms(p.times.comm));
  fmt::print(out, "  iteration         upper bound {} (SLO {}), closed form {}, simulated {}\n", ms(p.iter_upper),
             ms(w.slo_tbt), ms(p.total_latency), ms(p.simulated_total));
  fmt::print(out, "  throughput        {:.1f} tokens/s on {} GPUs, cost {:.2f}, tpuc {:.3f}\n", p.throughput,
             p.total_gpus(), p.cost, p.tpuc);
  fmt::print(out, "  memory            KV {} + attention weights {} per node, expert weights {}\n",
             gb(p.memory.kv_bytes), gb(p.memory.attention_param_bytes), gb(p.memory.expert_param_bytes));
  fmt::print(out, "constraint slack\n");
  fmt::print(out, "  balance           {:+.4f}\n", p.slack.balance);
  fmt::print(out, "  comm hiding       {}\n", ms(p.slack.comm_hiding));
  fmt::print(out, "  micro-batches     {:+d}\n", p.slack.microbatches);
  fmt::print(out, "  attention memory  {}\n", gb(p.slack.attention_memory));
  fmt::print(out, "  expert memory     {}\n", gb(p.slack.expert_memory));
  fmt::print(out, "  SLO               {}\n", ms(p.slack.slo));
}

constexpr const char* kPlanCsvHeader =
    "gpu_a,gpu_e,tp_a,tp_e,n_a,experts,m,B,T_a,T_e,T_c,iter_upper,total_latency,simulated_total,throughput,"
    "cost,tpuc\n";

void plan_csv_row(std::ostream& out, const DeploymentPlan& p) {
  const auto& s = p.skeleton;
  fmt::print(out, "{},{},{},{},{},{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n",
             p.gpu_a.name, p.gpu_e.name, s.tp_a, s.tp_e, s.n_a, s.experts, s.m, p.global_batch, p.times.attention,
             p.times.expert, p.times.comm, p.iter_upper, p.total_latency, p.simulated_total, p.throughput, p.cost,
             p.tpuc);
}

void explain_csv(std::ostream& out, const std::vector<PairResult>& pairs) {
  out << "gpu_a,gpu_e,tp_a,tp_e,n_a,m,B,T_a,T_e,T_c,iter_upper,tpuc,binding\n";
  for (const auto& pr : pairs) {
    for (const auto& c : pr.result.candidates) {
      const auto& s = c.skeleton;
      if (c.plan) {
        const auto& p = *c.plan;
        fmt::print(out, "{},{},{},{},{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{}\n", pr.gpu_a, pr.gpu_e, s.tp_a,
                   s.tp_e, s.n_a, s.m, p.global_batch, p.times.attention, p.times.expert, p.times.comm,
                   p.iter_upper, p.tpuc, to_string(c.binding));
      } else {
        fmt::print(out, "{},{},{},{},{},{},,,,,,,{}\n", pr.gpu_a, pr.gpu_e, s.tp_a, s.tp_e, s.n_a, s.m,
                   to_string(c.binding));
      }
    }
  }
}

std::string binding_summary(const SearchResult& r) {
  std::map<std::string_view, int> counts;
  for (const auto& c : r.candidates) ++counts[to_string(c.binding)];
  std::string out;
  for (const auto& [name, n] : counts) out += fmt::format("{}{}={}", out.empty() ? "" : ", ", name, n);
  return out;
}

// ---------------------------------------------------------------------------

int cmd_plan(const Globals& g, const ModelOptions& o, bool hetero, std::ostream& out) {
  const Context ctx = build_context(g, o);
  const Config& c = ctx.config;
  const auto pair = selected_pair(c.catalog, o);
  if (hetero && pair) throw ConfigError("--hetero searches every GPU pair; drop --gpu/--gpu-a/--gpu-e");

  if (!pair) {
    const HeteroResult r = hetero_search(c.model, c.catalog, ctx.costs, c.workload, c.limits);
    if (g.json) {
      json j = r;
      if (g.explain) {
        json cand = json::array();
        for (const auto* group : {&r.ranked, &r.infeasible}) {
          for (const auto& pr : *group) {
            for (const auto& cr : pr.result.candidates) {
              json row = cr;
              row["gpu_a"] = pr.gpu_a;
              row["gpu_e"] = pr.gpu_e;
              cand.push_back(std::move(row));
            }
          }
        }
        j["candidates"] = std::move(cand);
      }
      out << j.dump(2) << '\n';
    } else if (g.csv) {
      out << kPlanCsvHeader;
      for (const auto& pr : r.ranked) plan_csv_row(out, *pr.result.best);
    } else {
      fmt::print(out, "GPU pairs for {} ranked by throughput per {}\n", c.model.name, to_string(c.limits.cost_metric));
      fmt::print(out, "{:>4}  {:<8} {:<8} {:>4} {:>4} {:>4} {:>2} {:>8} {:>12} {:>10} {:>12}\n", "rank", "attn",
                 "expert", "tp_a", "tp_e", "n_a", "m", "B", "tokens/s", "TBT", "tpuc");
      int rank = 1;
      for (const auto& pr : r.ranked) {
        const auto& p = *pr.result.best;
        fmt::print(out, "{:>4}  {:<8} {:<8} {:>4} {:>4} {:>4} {:>2} {:>8} {:>12.1f} {:>10} {:>12.3f}\n", rank++,
                   pr.gpu_a, pr.gpu_e, p.skeleton.tp_a, p.skeleton.tp_e, p.skeleton.n_a, p.skeleton.m,
                   p.global_batch, p.throughput, ms(p.total_latency), p.tpuc);
      }
      for (const auto& pr : r.infeasible) {
        fmt::print(out, "  infeasible {}/{}: binding {} ({})\n", pr.gpu_a, pr.gpu_e, to_string(pr.result.binding()),
                   binding_summary(pr.result));
      }
      for (const auto& [p, reason] : r.excluded) fmt::print(out, "  excluded {}: {}\n", p, reason);
    }
    if (g.explain && !g.json) {
      std::vector<PairResult> all = r.ranked;
      all.insert(all.end(), r.infeasible.begin(), r.infeasible.end());
      explain_csv(out, all);
    }
    return r.ranked.empty() ? kExitInfeasible : kExitOk;
  }

  const PlanContext pc{c.model, c.workload, c.limits, pair->first, pair->second};
  const SearchResult r = search(pc, ctx.costs);
  if (g.json) {
    out << json(r).dump(2) << '\n';
  } else if (g.csv) {
    out << kPlanCsvHeader;
    if (r.best) plan_csv_row(out, *r.best);
  } else if (r.best) {
    print_plan(out, *r.best, c.model, c.workload);
  } else {
    fmt::print(out, "no feasible plan for {} with {} attention / {} experts\n", c.model.name, pair->first.name,
               pair->second.name);
    fmt::print(out, "  binding constraint: {}\n  candidates: {}\n", to_string(r.binding()), binding_summary(r));
  }
  if (g.explain && !g.json) explain_csv(out, {PairResult{pair->first.name, pair->second.name, r}});
  return r.best ? kExitOk : kExitInfeasible;
}

struct SweepOptions {
  std::string variable;
  std::string values;
  std::optional<int> tp_a, tp_e, n_a, m;
  std::optional<std::int64_t> batch;
};

int cmd_sweep(const Globals& g, const ModelOptions& o, const SweepOptions& so, std::ostream& out) {
  const Context ctx = build_context(g, o);
  const Config& c = ctx.config;
  SweepSpec spec;
  spec.variable = parse_sweep_variable(so.variable);
  spec.values = parse_sweep_values(so.values);
  spec.validate();

  const auto pair = selected_pair(c.catalog, o);
  if (!pair && spec.variable != SweepVariable::gpu_pair) {
    throw ConfigError("pass --gpu or --gpu-a/--gpu-e to fix the GPU pair of the sweep");
  }
  SweepContext sc{c.model, c.workload, c.limits, c.catalog, GpuSpec{}, GpuSpec{}, ctx.costs};
  if (pair) {
    sc.gpu_a = pair->first;
    sc.gpu_e = pair->second;
  }

  // Base skeleton: the searched optimum when one exists, flags override.
  spec.fixed = {1, 1, 1, c.model.experts, 3};
  spec.attn_batch = 64;
  if (pair) {
    const SearchResult base = search({c.model, c.workload, c.limits, sc.gpu_a, sc.gpu_e}, ctx.costs);
    if (base.best) {
      spec.fixed = base.best->skeleton;
      spec.attn_batch = static_cast<std::int64_t>(base.best->attn_batch);
    } else if (const auto cm = ctx.costs(sc.gpu_a, 1, sc.gpu_e, 1)) {
      spec.fixed.n_a = balance_attention_nodes(*cm, c.model.experts, c.model.topk);
    }
  }
  if (so.tp_a) spec.fixed.tp_a = *so.tp_a;
  if (so.tp_e) spec.fixed.tp_e = *so.tp_e;
  if (so.n_a) spec.fixed.n_a = *so.n_a;
  if (so.m) spec.fixed.m = *so.m;
  if (so.batch) spec.attn_batch = *so.batch;

  const auto rows = run_sweep(spec, sc);
  if (g.json) {
    json arr = json::array();
    for (const auto& r : rows) {
      arr.push_back(json{{"value", r.value},
                         {"feasible", r.feasible},
                         {"binding", r.binding},
                         {"error", r.error},
                         {"gpu_a", r.gpu_a},
                         {"gpu_e", r.gpu_e},
                         {"tp_a", r.skeleton.tp_a},
                         {"tp_e", r.skeleton.tp_e},
                         {"n_a", r.skeleton.n_a},
                         {"m", r.skeleton.m},
                         {"global_batch", r.global_batch},
                         {"times", r.times},
                         {"latency", r.latency},
                         {"throughput", r.throughput},
                         {"normalized_throughput", r.normalized_throughput},
                         {"per_gpu_throughput", r.per_gpu_throughput},
                         {"tpuc", r.tpuc},
                         {"attention_idle", r.attention_idle},
                         {"expert_idle", r.expert_idle}});
    }
    out << json{{"variable", to_string(spec.variable)}, {"rows", arr}}.dump(2) << '\n';
  } else if (g.csv) {
    write_sweep_csv(out, rows);
  } else {
    fmt::print(out, "sweep over {} for {}\n", to_string(spec.variable), c.model.name);
    fmt::print(out, "{:>10} {:<17} {:>4} {:>4} {:>4} {:>2} {:>8} {:>11} {:>12} {:>6} {:>10} {:>6} {:>6}  {}\n",
               "value", "pair", "tp_a", "tp_e", "n_a", "m", "B", "TBT", "tokens/s", "norm", "tok/s/GPU", "idleA",
               "idleE", "binding");
    for (const auto& r : rows) {
      if (!r.feasible) {
        fmt::print(out, "{:>10} infeasible: {}{}\n", r.value, r.error,
                   r.binding.empty() ? "" : fmt::format(" (binding {})", r.binding));
        continue;
      }
      fmt::print(out, "{:>10} {:<17} {:>4} {:>4} {:>4} {:>2} {:>8} {:>11} {:>12.1f} {:>6.3f} {:>10.2f} {:>6.3f} {:>6.3f}  {}\n",
                 r.value, r.gpu_a + "/" + r.gpu_e, r.skeleton.tp_a, r.skeleton.tp_e, r.skeleton.n_a, r.skeleton.m,
                 r.global_batch, ms(r.latency), r.throughput, r.normalized_throughput, r.per_gpu_throughput,
                 r.attention_idle, r.expert_idle, r.binding);
    }
  }
  for (const auto& r : rows) {
    if (r.feasible) return kExitOk;
  }
  return kExitInfeasible;
}

struct SimulateOptions {
  double ta = 0.0, te = 0.0, tc = 0.0;
  int m = 0, layers = 0;
  bool jitter = false;
  bool timeline = false;
  int samples = 64;
  std::string backend = "m2n";
};

int cmd_simulate(const Globals& g, const SimulateOptions& so, std::ostream& out) {
  const StageTimes t{so.ta, so.te, so.tc};
  t.validate();
  if (!(t.forward() > 0.0)) throw std::invalid_argument("--ta or --te must be > 0");
  const SimReport sim = simulate(t, so.m, so.layers);
  const double closed = closed_form_total(t, so.m, so.layers);
  const IterBounds bounds = closed_form_iter_bounds(t, so.m, so.layers);
  std::optional<int> min_m;
  if (t.comm < t.forward()) min_m = min_microbatches(t.comm, t.forward());
  std::optional<JitterReport> jit;
  if (so.jitter) jit = simulate_with_jitter(t, so.m, so.layers, parse_backend(so.backend), g.seed, so.samples);

  if (g.json) {
    SimReport shown = sim;
    if (!so.timeline) shown.timeline.clear();
    json j{{"times", t},
           {"m", so.m},
           {"layers", so.layers},
           {"min_microbatches", min_m ? json(*min_m) : json(nullptr)},
           {"closed_form_total", closed},
           {"bounds", {{"lower", bounds.lower}, {"upper", bounds.upper}}},
           {"simulation", shown}};
    if (jit) j["jitter"] = *jit;
    out << j.dump(2) << '\n';
    return kExitOk;
  }
  if (g.csv) {
    write_timeline_csv(out, sim);
    return kExitOk;
  }
  fmt::print(out, "T_a = {:g} s, T_e = {:g} s, T_c = {:g} s, T_f = {:g} s, m = {}, L = {}\n", t.attention, t.expert,
             t.comm, t.forward(), so.m, so.layers);
  if (min_m) {
    fmt::print(out, "min micro-batches    {}{}\n", *min_m,
               so.m < *min_m ? " (m is below it: communication is exposed)" : "");
  } else {
    fmt::print(out, "min micro-batches    none: T_c >= T_f, communication cannot be hidden\n");
  }
  fmt::print(out, "simulated total      {:.9g} s\n", sim.total_latency);
  fmt::print(out, "closed form total    {:.9g} s{}\n", closed,
             min_m && so.m >= *min_m ? "" : " (assumes hidden communication)");
  fmt::print(out, "iteration bounds     [{:.9g}, {:.9g}] s, simulated max {:.9g} s\n", bounds.lower, bounds.upper,
             sim.iter_latency);
  fmt::print(out, "idle fraction        attention {:.4f}, expert {:.4f}\n", sim.attention_idle_fraction,
             sim.expert_idle_fraction);
  if (jit) {
    fmt::print(out, "jitter ({}, {} samples, seed {}): total p50 {:.9g} s, p99 {:.9g} s, mean {:.9g} s\n", so.backend,
               jit->samples, g.seed, jit->p50_total, jit->p99_total, jit->mean_total);
  }
  return kExitOk;
}

struct CalibrateOptions {
  std::string profile;
  std::optional<std::int64_t> seq_len;
};

int cmd_calibrate(const Globals& g, const CalibrateOptions& co, std::ostream& out) {
  const Profile prof = load_profile(co.profile);
  if (prof.attention.empty() && prof.expert.empty() && prof.util.empty()) {
    throw ConfigError(fmt::format("{}: profile has no rows", co.profile));
  }
  std::int64_t seq_len = WorkloadSpec{}.avg_seq_len;
  if (const std::string path = config_path(g); !path.empty()) seq_len = load_config(path).workload.avg_seq_len;
  if (co.seq_len) seq_len = *co.seq_len;
  if (seq_len < 1) throw ConfigError("--seq-len must be >= 1");
  const ProfileCalibration cal = calibrate_profile(prof);

  if (g.json) {
    json j = json::object();
    if (cal.attention) {
      j["attention"] = {{"per_seq_token", cal.attention->coeffs.per_seq_token},
                        {"per_token", cal.attention->coeffs.per_token},
                        {"fixed", cal.attention->coeffs.fixed},
                        {"rms_residual", cal.attention->rms_residual}};
    }
    if (cal.expert) {
      j["expert"] = {{"slope", cal.expert->slope},
                     {"intercept", cal.expert->intercept},
                     {"rms_residual", cal.expert->rms_residual}};
    }
    if (cal.util) j["util"] = *cal.util;
    if (cal.attention && cal.expert) j["cost_model"] = cost_model_from_profile(prof, seq_len);
    out << j.dump(2) << '\n';
    return kExitOk;
  }
  if (g.csv) {
    out << "kind,coefficient,value\n";
    if (cal.attention) {
      fmt::print(out, "attention,per_seq_token,{:.9g}\nattention,per_token,{:.9g}\nattention,fixed,{:.9g}\n",
                 cal.attention->coeffs.per_seq_token, cal.attention->coeffs.per_token, cal.attention->coeffs.fixed);
      fmt::print(out, "attention,rms_residual,{:.9g}\n", cal.attention->rms_residual);
    }
    if (cal.expert) {
      fmt::print(out, "expert,slope,{:.9g}\nexpert,intercept,{:.9g}\nexpert,rms_residual,{:.9g}\n",
                 cal.expert->slope, cal.expert->intercept, cal.expert->rms_residual);
    }
    return kExitOk;
  }
  fmt::print(out, "calibrated from {}\n", co.profile);
  if (cal.attention) {
    const auto& a = cal.attention->coeffs;
    fmt::print(out, "attention  T_a = (alpha * s + beta) * b + k2\n");
    fmt::print(out, "  alpha {:.6g} s, beta {:.6g} s, k2 {:.6g} s\n", a.per_seq_token, a.per_token, a.fixed);
    fmt::print(out, "  k1 at s = {}: {:.6g} s/token, rms residual {:.3g} s ({} points)\n", seq_len,
               a.per_seq_token * static_cast<double>(seq_len) + a.per_token, cal.attention->rms_residual,
               prof.attention.size());
  }
  if (cal.expert) {
    fmt::print(out, "expert     T_e = k3 * b + k4\n");
    fmt::print(out, "  k3 {:.6g} s/token, k4 {:.6g} s, rms residual {:.3g} s ({} points)\n", cal.expert->slope,
               cal.expert->intercept, cal.expert->rms_residual, prof.expert.size());
  }
  if (cal.util) fmt::print(out, "util       table with {} points\n", prof.util.size());
  return kExitOk;
}

struct BalanceCmdOptions {
  std::optional<std::string> trace;
  std::optional<std::string> requests;
  int nodes = 0;
  std::string mode = "integral";
  double k_cold = 0.0;
  int replicas = 2;
  std::optional<int> max_per_node;
  std::optional<int> layer;
  int rebalance_interval = 1;
  std::optional<std::string> profile;
  double alpha = 0.0, beta = 0.0, fixed = 0.0;
  std::optional<double> target;
};

template <class T, class F>
T read_file(const std::string& path, F&& reader) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open '{}'", path));
  return reader(in, path);
}

int cmd_balance_experts(const Globals& g, const BalanceCmdOptions& bo, std::ostream& out) {
  const auto rows = read_file<std::vector<LoadTraceRow>>(
      *bo.trace, [](std::istream& in, const std::string& p) { return read_load_trace(in, p); });
  const auto loads = loads_from_trace(rows, bo.layer);
  BalanceOptions opt;
  opt.mode = parse_placement_mode(bo.mode);
  opt.max_replicas = bo.replicas;
  opt.max_experts_per_node = bo.max_per_node;
  opt.rebalance_interval = bo.rebalance_interval;
  if (opt.rebalance_interval < 1) throw ConfigError("--rebalance-interval must be >= 1");

  const Placement p = balance_experts(loads, bo.nodes, bo.k_cold, opt);
  const auto cost = node_cost(p, loads, bo.k_cold);
  double total = 0.0;
  for (const auto& l : loads) total += std::max(l.active_cost, bo.k_cold);
  const double average = total / bo.nodes;
  const double cmax = *std::max_element(cost.begin(), cost.end());

  if (g.json) {
    out << json{{"placement", p},
                {"node_cost", cost},
                {"c_max", cmax},
                {"average", average},
                {"k_cold", bo.k_cold},
                {"rebalance_interval", opt.rebalance_interval}}
               .dump(2)
        << '\n';
    return kExitOk;
  }
  if (g.csv) {
    out << "expert_id,node,fraction\n";
    for (int i = 0; i < p.experts(); ++i) {
      for (int j = 0; j < p.nodes; ++j) {
        if (p.at(i, j) > 0.0) fmt::print(out, "{},{},{:.12g}\n", p.expert_ids[i], j, p.at(i, j));
      }
    }
    return kExitOk;
  }
  fmt::print(out, "{} placement of {} experts on {} nodes (K_cold {:g}, rebalance every {} iterations)\n",
             to_string(p.mode), p.experts(), p.nodes, bo.k_cold, opt.rebalance_interval);
  for (int j = 0; j < p.nodes; ++j) {
    std::string members;
    for (int i = 0; i < p.experts(); ++i) {
      const double x = p.at(i, j);
      if (x <= 0.0) continue;
      members += x == 1.0 ? fmt::format(" {}", p.expert_ids[i]) : fmt::format(" {}({:.3f})", p.expert_ids[i], x);
    }
    fmt::print(out, "  node {:>3}  C = {:<14.6g} experts:{}\n", j, cost[j], members);
  }
  fmt::print(out, "C_max {:.9g}, average {:.9g}, C_max / average {:.6f}\n", cmax, average,
             average > 0.0 ? cmax / average : 1.0);
  return kExitOk;
}

int cmd_balance_attention(const Globals& g, const BalanceCmdOptions& bo, std::ostream& out) {
  const auto reqs = read_file<std::vector<Request>>(
      *bo.requests, [](std::istream& in, const std::string& p) { return read_requests(in, p); });
  CostModel cm;
  if (bo.profile) {
    const Profile prof = load_profile(*bo.profile);
    if (prof.attention.empty()) throw ConfigError(fmt::format("{}: no attention rows", *bo.profile));
    cm.attention = calibrate_profile(prof).attention->coeffs;
  } else {
    if (bo.alpha < 0.0 || bo.beta < 0.0 || bo.fixed < 0.0 || bo.alpha + bo.beta <= 0.0) {
      throw ConfigError("pass --profile or non-negative --alpha/--beta/--fixed with alpha + beta > 0");
    }
    cm.attention = {bo.alpha, bo.beta, bo.fixed};
  }
  double work = 0.0;
  for (const auto& r : reqs) {
    work += cm.attention.per_seq_token * static_cast<double>(r.seq_len) + cm.attention.per_token;
  }
  const double target = bo.target ? *bo.target : cm.attention.fixed + work / bo.nodes;
  const AttnBatchPlan plan = compose_attention_batches(reqs, bo.nodes, cm, target);

  if (g.json) {
    out << json(plan).dump(2) << '\n';
    return kExitOk;
  }
  if (g.csv) {
    out << "request_id,node\n";
    for (std::size_t j = 0; j < plan.node_requests.size(); ++j) {
      for (auto id : plan.node_requests[j]) fmt::print(out, "{},{}\n", id, j);
    }
    return kExitOk;
  }
  fmt::print(out, "{} requests on {} attention nodes, target {:.6g} s\n", reqs.size(), bo.nodes, target);
  for (std::size_t j = 0; j < plan.node_requests.size(); ++j) {
    fmt::print(out, "  node {:>3}  {:>5} requests  {:.6g} s\n", j, plan.node_requests[j].size(), plan.node_time[j]);
  }
  fmt::print(out, "max / min node time {:.6f}\n", plan.min_time() > 0.0 ? plan.imbalance_ratio() : 0.0);
  if (plan.over_target > 0) fmt::print(out, "{} nodes exceed the target\n", plan.over_target);
  return kExitOk;
}

int cmd_balance(const Globals& g, const BalanceCmdOptions& bo, std::ostream& out) {
  if (bo.trace.has_value() == bo.requests.has_value()) {
    throw ConfigError("pass exactly one of --trace (expert placement) or --requests (attention batches)");
  }
  if (bo.nodes < 1) throw ConfigError("--nodes must be >= 1");
  return bo.trace ? cmd_balance_experts(g, bo, out) : cmd_balance_attention(g, bo, out);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deployment planner for disaggregated mixture-of-experts decoding", "moeplan"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, fmt::format("Config JSON (default: ${})", kConfigEnv));
  app.add_flag("--json", g.json, "Emit JSON");
  app.add_flag("--csv", g.csv, "Emit CSV");
  app.add_flag("--explain", g.explain, "Also emit every searched candidate as CSV");
  app.add_option("--seed", g.seed, "Seed for randomized simulation");

  ModelOptions plan_opts;
  bool hetero = false;
  auto* plan = app.add_subcommand("plan", "Search the deployment plan with the highest throughput per cost");
  add_model_options(plan, plan_opts);
  plan->add_flag("--hetero", hetero, "Search every (attention GPU, expert GPU) pair of the catalog");

  ModelOptions sweep_model;
  SweepOptions sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "Evaluate one plan parameter over a range of values");
  add_model_options(sweep, sweep_model);
  sweep->add_option("--var", sweep_opts.variable, "microbatches, dp_degree, batch_size or gpu_pair")->required();
  sweep->add_option("--values", sweep_opts.values, "Range 'a..b' or list 'x,y,z' (gpu pairs as ATTN/EXPERT)")
      ->required();
  sweep->add_option("--tp-a", sweep_opts.tp_a, "Attention tensor-parallel size");
  sweep->add_option("--tp-e", sweep_opts.tp_e, "Expert tensor-parallel size");
  sweep->add_option("--n-a", sweep_opts.n_a, "Attention node count");
  sweep->add_option("--m", sweep_opts.m, "Micro-batch count");
  sweep->add_option("--batch", sweep_opts.batch, "Requests per attention node per micro-batch");

  SimulateOptions sim_opts;
  auto* sim = app.add_subcommand("simulate", "Run the ping-pong pipeline simulator on given stage times");
  sim->add_option("--ta", sim_opts.ta, "Attention time per micro-batch and layer, seconds")->required();
  sim->add_option("--te", sim_opts.te, "Expert time per micro-batch and layer, seconds")->required();
  sim->add_option("--tc", sim_opts.tc, "One-way communication time, seconds");
  sim->add_option("--m", sim_opts.m, "Micro-batch count")->required();
  sim->add_option("--layers", sim_opts.layers, "Layer count")->required();
  sim->add_flag("--jitter", sim_opts.jitter, "Also run the jittered simulation");
  sim->add_option("--backend", sim_opts.backend, "Backend for --jitter: m2n or nccl");
  sim->add_option("--samples", sim_opts.samples, "Jitter samples");
  sim->add_flag("--timeline", sim_opts.timeline, "Include the event timeline in --json output");

  CalibrateOptions cal_opts;
  auto* cal = app.add_subcommand("calibrate", "Fit cost-model coefficients to a measured profile");
  cal->add_option("--profile", cal_opts.profile, "Profile CSV (kind,x,y[,seq_len])")->required();
  cal->add_option("--seq-len", cal_opts.seq_len, "Sequence length at which k1 is reported");

  BalanceCmdOptions bal_opts;
  auto* bal = app.add_subcommand("balance", "Place experts on nodes or compose attention batches");
  bal->add_option("--trace", bal_opts.trace, "Expert load trace CSV (layer,expert_id,token_count)");
  bal->add_option("--requests", bal_opts.requests, "Request CSV (id,seq_len) for attention batch composition");
  bal->add_option("--nodes", bal_opts.nodes, "Node count")->required();
  bal->add_option("--mode", bal_opts.mode, "integral, replicated or fractional");
  bal->add_option("--k-cold", bal_opts.k_cold, "Minimum cost of a resident expert");
  bal->add_option("--replicas", bal_opts.replicas, "Replica limit in replicated mode");
  bal->add_option("--max-per-node", bal_opts.max_per_node, "Expert count limit per node");
  bal->add_option("--layer", bal_opts.layer, "Use one layer of the trace instead of the sum");
  bal->add_option("--rebalance-interval", bal_opts.rebalance_interval, "Decoding iterations between rebalances");
  bal->add_option("--profile", bal_opts.profile, "Profile CSV providing attention coefficients");
  bal->add_option("--alpha", bal_opts.alpha, "Attention seconds per request per sequence token");
  bal->add_option("--beta", bal_opts.beta, "Attention seconds per request");
  bal->add_option("--fixed", bal_opts.fixed, "Attention fixed seconds per node");
  bal->add_option("--target", bal_opts.target, "Target node time, seconds (default: even split)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (g.json && g.csv) throw ConfigError("--json and --csv are mutually exclusive");
    if (*plan) return cmd_plan(g, plan_opts, hetero, out);
    if (*sweep) return cmd_sweep(g, sweep_model, sweep_opts, out);
    if (*sim) return cmd_simulate(g, sim_opts, out);
    if (*cal) return cmd_calibrate(g, cal_opts, out);
    if (*bal) return cmd_balance(g, bal_opts, out);
  } catch (const std::exception& e) {
    fmt::print(err, "moeplan: error: {}\n", e.what());
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace moeplan::cli
