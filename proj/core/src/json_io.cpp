#include "moeplan/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "moeplan/error.hpp"

namespace moeplan {

namespace {

std::string join(std::string_view path, std::string_view key) {
  return path.empty() ? std::string(key) : fmt::format("{}.{}", path, key);
}

[[noreturn]] void type_error(std::string_view path, std::string_view expected, const json& v) {
  throw ConfigError(fmt::format("{}: expected {}, got {}", path, expected, v.type_name()));
}

void convert(const json& v, double& out, std::string_view path) {
  if (!v.is_number()) type_error(path, "a number", v);
  out = v.get<double>();
  if (!std::isfinite(out)) throw ConfigError(fmt::format("{}: must be finite", path));
}

void convert(const json& v, std::int64_t& out, std::string_view path) {
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw ConfigError(fmt::format("{}: value out of range", path));
    }
    out = static_cast<std::int64_t>(u);
    return;
  }
  if (v.is_number_integer()) {
    out = v.get<std::int64_t>();
    return;
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::trunc(d) && std::abs(d) < 9.0e15) {
      out = static_cast<std::int64_t>(d);
      return;
    }
  }
  type_error(path, "an integer", v);
}

void convert(const json& v, int& out, std::string_view path) {
  std::int64_t wide = 0;
  convert(v, wide, path);
  if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
    throw ConfigError(fmt::format("{}: value out of range", path));
  }
  out = static_cast<int>(wide);
}

void convert(const json& v, std::string& out, std::string_view path) {
  if (!v.is_string()) type_error(path, "a string", v);
  out = v.get<std::string>();
}

template <class T>
void convert(const json& v, std::optional<T>& out, std::string_view path) {
  if (v.is_null()) {
    out.reset();
    return;
  }
  T value{};
  convert(v, value, path);
  out = value;
}

template <class T>
void convert(const json& v, std::vector<T>& out, std::string_view path) {
  if (!v.is_array()) type_error(path, "an array", v);
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    T value{};
    convert(v[i], value, fmt::format("{}[{}]", path, i));
    out.push_back(std::move(value));
  }
}

// A JSON object with a closed key set.
class Fields {
 public:
  Fields(const json& j, std::string_view path, std::initializer_list<std::string_view> allowed)
      : j_(j), path_(path) {
    if (!j.is_object()) type_error(path_.empty() ? "document" : path_, "an object", j);
    for (const auto& [key, value] : j.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        throw ConfigError(fmt::format("{}: unknown key", join(path_, key)));
      }
    }
  }

  bool has(std::string_view key) const { return j_.contains(std::string(key)); }
  const json& raw(std::string_view key) const { return j_.at(std::string(key)); }
  std::string path(std::string_view key) const { return join(path_, key); }

  template <class T>
  void opt(std::string_view key, T& dst) const {
    if (has(key)) convert(raw(key), dst, path(key));
  }

  template <class T>
  void req(std::string_view key, T& dst) const {
    if (!has(key)) throw ConfigError(fmt::format("{}: missing required key", path(key)));
    convert(raw(key), dst, path(key));
  }

 private:
  const json& j_;
  std::string path_;
};

// Rethrows library validation failures with the JSON path in front.
template <class F>
void with_path(std::string_view path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    if (path.empty()) throw;
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

std::string_view resource_name(Resource r) { return to_string(r); }

Resource parse_resource(std::string_view s, std::string_view path) {
  for (Resource r : {Resource::attention, Resource::expert, Resource::dispatch, Resource::combine}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError(fmt::format("{}: unknown resource '{}'", path, s));
}

Phase parse_phase(std::string_view s, std::string_view path) {
  for (Phase p : {Phase::attn, Phase::disp, Phase::ffn, Phase::comb}) {
    if (to_string(p) == s) return p;
  }
  throw ConfigError(fmt::format("{}: unknown phase '{}'", path, s));
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration types

void read_gpu(const json& j, GpuSpec& g, std::string_view path) {
  const Fields f(j, path,
                 {"name", "price", "mem_capacity", "mem_bandwidth", "compute", "net_bandwidth", "intra_bandwidth",
                  "max_power", "max_gpus_per_node"});
  f.opt("name", g.name);
  f.opt("price", g.price);
  f.opt("mem_capacity", g.mem_capacity);
  f.opt("mem_bandwidth", g.mem_bandwidth);
  f.opt("compute", g.compute);
  f.opt("net_bandwidth", g.net_bandwidth);
  f.opt("intra_bandwidth", g.intra_bandwidth);
  f.opt("max_power", g.max_power);
  f.opt("max_gpus_per_node", g.max_gpus_per_node);
}

void to_json(json& j, const GpuSpec& g) {
  j = json{{"name", g.name},
           {"price", g.price},
           {"mem_capacity", g.mem_capacity},
           {"mem_bandwidth", g.mem_bandwidth},
           {"compute", g.compute},
           {"net_bandwidth", g.net_bandwidth},
           {"intra_bandwidth", g.intra_bandwidth},
           {"max_power", g.max_power ? json(*g.max_power) : json(nullptr)},
           {"max_gpus_per_node", g.max_gpus_per_node}};
}

void from_json(const json& j, GpuSpec& g) {
  read_gpu(j, g, "gpu");
  with_path("gpu", [&] { g.validate(); });
}

void read_model(const json& j, MoeModelSpec& m, std::string_view path) {
  const Fields f(j, path,
                 {"name", "layers", "hidden", "intermediate", "experts", "topk", "gqa_group", "head_dim",
                  "bytes_per_param"});
  f.opt("name", m.name);
  f.opt("layers", m.layers);
  f.opt("hidden", m.hidden);
  f.opt("intermediate", m.intermediate);
  f.opt("experts", m.experts);
  f.opt("topk", m.topk);
  f.opt("gqa_group", m.gqa_group);
  f.opt("head_dim", m.head_dim);
  f.opt("bytes_per_param", m.bytes_per_param);
}

void to_json(json& j, const MoeModelSpec& m) {
  j = json{{"name", m.name},
           {"layers", m.layers},
           {"hidden", m.hidden},
           {"intermediate", m.intermediate},
           {"experts", m.experts},
           {"topk", m.topk},
           {"gqa_group", m.gqa_group},
           {"head_dim", m.head_dim ? json(*m.head_dim) : json(nullptr)},
           {"bytes_per_param", m.bytes_per_param}};
}

void from_json(const json& j, MoeModelSpec& m) {
  read_model(j, m, "model");
  with_path("model", [&] { m.validate(); });
}

void read_workload(const json& j, WorkloadSpec& w, std::string_view path) {
  const Fields f(j, path, {"avg_seq_len", "slo_tbt", "input_len_median", "output_len_median"});
  f.opt("avg_seq_len", w.avg_seq_len);
  f.opt("slo_tbt", w.slo_tbt);
  f.opt("input_len_median", w.input_len_median);
  f.opt("output_len_median", w.output_len_median);
}

void to_json(json& j, const WorkloadSpec& w) {
  j = json{{"avg_seq_len", w.avg_seq_len},
           {"slo_tbt", w.slo_tbt},
           {"input_len_median", w.input_len_median},
           {"output_len_median", w.output_len_median}};
}

void from_json(const json& j, WorkloadSpec& w) {
  read_workload(j, w, "workload");
  w.validate();
}

void read_limits(const json& j, SearchLimits& l, std::string_view path) {
  const Fields f(j, path, {"max_microbatches", "cost_metric", "balance_slack", "expert_imbalance"});
  f.opt("max_microbatches", l.max_microbatches);
  if (f.has("cost_metric")) {
    std::string metric;
    f.opt("cost_metric", metric);
    with_path(f.path("cost_metric"), [&] { l.cost_metric = parse_cost_metric(metric); });
  }
  f.opt("balance_slack", l.balance_slack);
  f.opt("expert_imbalance", l.expert_imbalance);
}

void to_json(json& j, const SearchLimits& l) {
  j = json{{"max_microbatches", l.max_microbatches},
           {"cost_metric", to_string(l.cost_metric)},
           {"balance_slack", l.balance_slack},
           {"expert_imbalance", l.expert_imbalance}};
}

void from_json(const json& j, SearchLimits& l) {
  read_limits(j, l, "limits");
  l.validate();
}

// ---------------------------------------------------------------------------
// Cost model

void to_json(json& j, const UtilCurve& u) {
  if (const auto* t = u.table_points()) {
    json pts = json::array();
    for (const auto& [bytes, util] : t->points) pts.push_back(json::array({bytes, util}));
    j = json{{"kind", "table"}, {"points", pts}};
  } else {
    j = json{{"kind", "saturating"}, {"half_bytes", u.saturating_params()->half_bytes}};
  }
}

void from_json(const json& j, UtilCurve& u) {
  const Fields f(j, "util", {"kind", "half_bytes", "points"});
  std::string kind;
  f.req("kind", kind);
  if (kind == "saturating") {
    double half = 0.0;
    f.req("half_bytes", half);
    u = UtilCurve::saturating(half);
  } else if (kind == "table") {
    if (!f.has("points") || !f.raw("points").is_array()) {
      throw ConfigError("util.points: expected an array of [bytes, utilization] pairs");
    }
    std::vector<std::pair<double, double>> pts;
    const json& arr = f.raw("points");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = fmt::format("util.points[{}]", i);
      if (!arr[i].is_array() || arr[i].size() != 2) type_error(p, "a [bytes, utilization] pair", arr[i]);
      double x = 0.0, y = 0.0;
      convert(arr[i][0], x, p);
      convert(arr[i][1], y, p);
      pts.emplace_back(x, y);
    }
    with_path("util", [&] { u = UtilCurve::table(std::move(pts)); });
  } else {
    throw ConfigError(fmt::format("util.kind: unknown curve '{}' (expected saturating or table)", kind));
  }
}

void to_json(json& j, const CommBackend& b) {
  j = json{{"name", b.name},
           {"base_overhead", b.base_overhead},
           {"per_receiver_penalty", b.per_receiver_penalty},
           {"receiver_batch", b.receiver_batch},
           {"jitter_p99_factor", b.jitter_p99_factor}};
}

void from_json(const json& j, CommBackend& b) {
  const Fields f(j, "backend",
                 {"name", "base_overhead", "per_receiver_penalty", "receiver_batch", "jitter_p99_factor"});
  f.opt("name", b.name);
  f.opt("base_overhead", b.base_overhead);
  f.opt("per_receiver_penalty", b.per_receiver_penalty);
  f.opt("receiver_batch", b.receiver_batch);
  f.opt("jitter_p99_factor", b.jitter_p99_factor);
  with_path("backend", [&] { b.validate(); });
}

void to_json(json& j, const CostModel& cm) {
  j = json{{"attention",
            {{"per_seq_token", cm.attention.per_seq_token},
             {"per_token", cm.attention.per_token},
             {"fixed", cm.attention.fixed}}},
           {"expert_slope", cm.expert_slope},
           {"expert_fixed", cm.expert_fixed},
           {"seq_len", cm.seq_len},
           {"k1", cm.k1()},
           {"k2", cm.k2()},
           {"k3", cm.k3()},
           {"k4", cm.k4()},
           {"util", cm.util},
           {"backend", cm.backend}};
}

void from_json(const json& j, CostModel& cm) {
  // k1..k4 are derived and ignored on input.
  const Fields f(j, "cost_model",
                 {"attention", "expert_slope", "expert_fixed", "seq_len", "k1", "k2", "k3", "k4", "util",
                  "backend"});
  if (f.has("attention")) {
    const Fields a(f.raw("attention"), "cost_model.attention", {"per_seq_token", "per_token", "fixed"});
    a.opt("per_seq_token", cm.attention.per_seq_token);
    a.opt("per_token", cm.attention.per_token);
    a.opt("fixed", cm.attention.fixed);
  }
  f.opt("expert_slope", cm.expert_slope);
  f.opt("expert_fixed", cm.expert_fixed);
  f.opt("seq_len", cm.seq_len);
  if (f.has("util")) cm.util = f.raw("util").get<UtilCurve>();
  if (f.has("backend")) cm.backend = f.raw("backend").get<CommBackend>();
  with_path("cost_model", [&] { cm.validate(); });
}

// ---------------------------------------------------------------------------
// Plans

void to_json(json& j, const StageTimes& t) {
  j = json{{"T_a", t.attention}, {"T_e", t.expert}, {"T_c", t.comm}, {"T_f", t.forward()}};
}

void from_json(const json& j, StageTimes& t) {
  const Fields f(j, "times", {"T_a", "T_e", "T_c", "T_f"});
  f.req("T_a", t.attention);
  f.req("T_e", t.expert);
  f.req("T_c", t.comm);
}

void to_json(json& j, const MemoryReport& r) {
  j = json{{"kv_bytes", r.kv_bytes},
           {"attention_param_bytes", r.attention_param_bytes},
           {"expert_param_bytes", r.expert_param_bytes},
           {"attention_fits", r.attention_fits},
           {"expert_fits", r.expert_fits},
           {"attention_slack_bytes", r.attention_slack_bytes},
           {"expert_slack_bytes", r.expert_slack_bytes}};
}

void from_json(const json& j, MemoryReport& r) {
  const Fields f(j, "memory",
                 {"kv_bytes", "attention_param_bytes", "expert_param_bytes", "attention_fits", "expert_fits",
                  "attention_slack_bytes", "expert_slack_bytes"});
  f.req("kv_bytes", r.kv_bytes);
  f.req("attention_param_bytes", r.attention_param_bytes);
  f.req("expert_param_bytes", r.expert_param_bytes);
  for (auto [key, dst] : {std::pair{"attention_fits", &r.attention_fits}, std::pair{"expert_fits", &r.expert_fits}}) {
    const json& v = f.raw(key);
    if (!v.is_boolean()) type_error(f.path(key), "a boolean", v);
    *dst = v.get<bool>();
  }
  f.req("attention_slack_bytes", r.attention_slack_bytes);
  f.req("expert_slack_bytes", r.expert_slack_bytes);
}

void to_json(json& j, const ConstraintSlack& s) {
  j = json{{"balance", s.balance},
           {"comm_hiding", s.comm_hiding},
           {"microbatches", s.microbatches},
           {"attention_memory", s.attention_memory},
           {"expert_memory", s.expert_memory},
           {"slo", s.slo}};
}

void from_json(const json& j, ConstraintSlack& s) {
  const Fields f(j, "slack", {"balance", "comm_hiding", "microbatches", "attention_memory", "expert_memory", "slo"});
  f.req("balance", s.balance);
  f.req("comm_hiding", s.comm_hiding);
  f.req("microbatches", s.microbatches);
  f.req("attention_memory", s.attention_memory);
  f.req("expert_memory", s.expert_memory);
  f.req("slo", s.slo);
}

Binding parse_binding(std::string_view text) {
  for (Binding b : {Binding::none, Binding::attention_memory, Binding::expert_memory, Binding::slo,
                    Binding::comm_not_hidden, Binding::microbatches, Binding::balance, Binding::no_cost_model}) {
    if (to_string(b) == text) return b;
  }
  throw ConfigError(fmt::format("unknown binding constraint '{}'", text));
}

void to_json(json& j, const DeploymentPlan& p) {
  j = json{{"gpu_a", p.gpu_a},
           {"gpu_e", p.gpu_e},
           {"tp_a", p.skeleton.tp_a},
           {"tp_e", p.skeleton.tp_e},
           {"n_a", p.skeleton.n_a},
           {"experts", p.skeleton.experts},
           {"m", p.skeleton.m},
           {"global_batch", p.global_batch},
           {"attn_batch", p.attn_batch},
           {"expert_batch", p.expert_batch},
           {"times", p.times},
           {"iter_upper", p.iter_upper},
           {"total_latency", p.total_latency},
           {"simulated_total", p.simulated_total},
           {"throughput", p.throughput},
           {"cost_metric", to_string(p.metric)},
           {"cost", p.cost},
           {"tpuc", p.tpuc},
           {"total_gpus", p.total_gpus()},
           {"memory", p.memory},
           {"slack", p.slack},
           {"binding", to_string(p.binding)}};
}

void from_json(const json& j, DeploymentPlan& p) {
  const Fields f(j, "plan",
                 {"gpu_a", "gpu_e", "tp_a", "tp_e", "n_a", "experts", "m", "global_batch", "attn_batch",
                  "expert_batch", "times", "iter_upper", "total_latency", "simulated_total", "throughput",
                  "cost_metric", "cost", "tpuc", "total_gpus", "memory", "slack", "binding"});
  p.gpu_a = f.raw("gpu_a").get<GpuSpec>();
  p.gpu_e = f.raw("gpu_e").get<GpuSpec>();
  f.req("tp_a", p.skeleton.tp_a);
  f.req("tp_e", p.skeleton.tp_e);
  f.req("n_a", p.skeleton.n_a);
  f.req("experts", p.skeleton.experts);
  f.req("m", p.skeleton.m);
  f.req("global_batch", p.global_batch);
  f.req("attn_batch", p.attn_batch);
  f.req("expert_batch", p.expert_batch);
  p.times = f.raw("times").get<StageTimes>();
  f.req("iter_upper", p.iter_upper);
  f.req("total_latency", p.total_latency);
  f.req("simulated_total", p.simulated_total);
  f.req("throughput", p.throughput);
  std::string metric, binding;
  f.req("cost_metric", metric);
  p.metric = parse_cost_metric(metric);
  f.req("cost", p.cost);
  f.req("tpuc", p.tpuc);
  p.memory = f.raw("memory").get<MemoryReport>();
  p.slack = f.raw("slack").get<ConstraintSlack>();
  f.req("binding", binding);
  p.binding = parse_binding(binding);
}

// ---------------------------------------------------------------------------
// Simulation

void to_json(json& j, const SimReport& r) {
  j = json{{"microbatch_latency", r.microbatch_latency},
           {"iter_latency", r.iter_latency},
           {"total_latency", r.total_latency},
           {"attention_idle_fraction", r.attention_idle_fraction},
           {"expert_idle_fraction", r.expert_idle_fraction}};
  if (!r.timeline.empty()) {
    json tl = json::array();
    for (const auto& e : r.timeline) {
      tl.push_back(json{{"resource", resource_name(e.resource)},
                        {"microbatch", e.microbatch},
                        {"layer", e.layer},
                        {"phase", to_string(e.phase)},
                        {"start", e.start},
                        {"end", e.end}});
    }
    j["timeline"] = std::move(tl);
  }
}

void from_json(const json& j, SimReport& r) {
  const Fields f(j, "simulation",
                 {"microbatch_latency", "iter_latency", "total_latency", "attention_idle_fraction",
                  "expert_idle_fraction", "timeline"});
  f.req("microbatch_latency", r.microbatch_latency);
  f.req("iter_latency", r.iter_latency);
  f.req("total_latency", r.total_latency);
  f.req("attention_idle_fraction", r.attention_idle_fraction);
  f.req("expert_idle_fraction", r.expert_idle_fraction);
  r.timeline.clear();
  if (f.has("timeline")) {
    const json& tl = f.raw("timeline");
    if (!tl.is_array()) type_error("simulation.timeline", "an array", tl);
    for (std::size_t i = 0; i < tl.size(); ++i) {
      const std::string path = fmt::format("simulation.timeline[{}]", i);
      const Fields e(tl[i], path, {"resource", "microbatch", "layer", "phase", "start", "end"});
      TimelineEvent ev{};
      std::string res, phase;
      e.req("resource", res);
      e.req("phase", phase);
      ev.resource = parse_resource(res, e.path("resource"));
      ev.phase = parse_phase(phase, e.path("phase"));
      e.req("microbatch", ev.microbatch);
      e.req("layer", ev.layer);
      e.req("start", ev.start);
      e.req("end", ev.end);
      r.timeline.push_back(ev);
    }
  }
}

void to_json(json& j, const JitterReport& r) {
  j = json{{"samples", r.samples},   {"p50_total", r.p50_total}, {"p99_total", r.p99_total},
           {"mean_total", r.mean_total}, {"p50_iter", r.p50_iter},   {"p99_iter", r.p99_iter}};
}

void from_json(const json& j, JitterReport& r) {
  const Fields f(j, "jitter", {"samples", "p50_total", "p99_total", "mean_total", "p50_iter", "p99_iter"});
  f.req("samples", r.samples);
  f.req("p50_total", r.p50_total);
  f.req("p99_total", r.p99_total);
  f.req("mean_total", r.mean_total);
  f.req("p50_iter", r.p50_iter);
  f.req("p99_iter", r.p99_iter);
}

// ---------------------------------------------------------------------------
// Balancing

void to_json(json& j, const Placement& p) {
  json rows = json::array();
  for (int i = 0; i < p.experts(); ++i) {
    json row = json::array();
    for (int n = 0; n < p.nodes; ++n) row.push_back(p.at(i, n));
    rows.push_back(std::move(row));
  }
  j = json{{"mode", to_string(p.mode)},
           {"max_replicas", p.max_replicas},
           {"nodes", p.nodes},
           {"expert_ids", p.expert_ids},
           {"x", std::move(rows)}};
}

void from_json(const json& j, Placement& p) {
  const Fields f(j, "placement", {"mode", "max_replicas", "nodes", "expert_ids", "x"});
  std::string mode;
  f.req("mode", mode);
  p.mode = parse_placement_mode(mode);
  f.req("max_replicas", p.max_replicas);
  f.req("nodes", p.nodes);
  f.req("expert_ids", p.expert_ids);
  std::vector<std::vector<double>> rows;
  const json& x = f.raw("x");
  if (!x.is_array() || x.size() != p.expert_ids.size()) {
    throw ConfigError("placement.x: expected one row per expert");
  }
  p.x.clear();
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> row;
    convert(x[i], row, fmt::format("placement.x[{}]", i));
    if (row.size() != static_cast<std::size_t>(p.nodes)) {
      throw ConfigError(fmt::format("placement.x[{}]: expected {} entries", i, p.nodes));
    }
    p.x.insert(p.x.end(), row.begin(), row.end());
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void to_json(json& j, const AttnBatchPlan& p) {
  j = json{{"node_requests", p.node_requests},
           {"node_time", p.node_time},
           {"target_time", p.target_time},
           {"over_target", p.over_target}};
}

void from_json(const json& j, AttnBatchPlan& p) {
  const Fields f(j, "attention_batches", {"node_requests", "node_time", "target_time", "over_target"});
  const json& nr = f.raw("node_requests");
  if (!nr.is_array()) type_error("attention_batches.node_requests", "an array", nr);
  p.node_requests.clear();
  for (std::size_t i = 0; i < nr.size(); ++i) {
    std::vector<std::int64_t> ids;
    convert(nr[i], ids, fmt::format("attention_batches.node_requests[{}]", i));
    p.node_requests.push_back(std::move(ids));
  }
  f.req("node_time", p.node_time);
  f.req("target_time", p.target_time);
  f.opt("over_target", p.over_target);
}

// ---------------------------------------------------------------------------
// Search summaries

void to_json(json& j, const CandidateRecord& c) {
  j = json{{"tp_a", c.skeleton.tp_a},
           {"tp_e", c.skeleton.tp_e},
           {"n_a", c.skeleton.n_a},
           {"m", c.skeleton.m},
           {"binding", to_string(c.binding)}};
  if (c.plan) {
    j["global_batch"] = c.plan->global_batch;
    j["tpuc"] = c.plan->tpuc;
    j["iter_upper"] = c.plan->iter_upper;
  }
}

void to_json(json& j, const SearchResult& r) {
  j = json{{"feasible", r.feasible()},
           {"binding", to_string(r.binding())},
           {"evaluations", r.evaluations},
           {"best", r.best ? json(*r.best) : json(nullptr)},
           {"candidates", r.candidates}};
}

void to_json(json& j, const HeteroResult& r) {
  json ranked = json::array();
  for (const auto& p : r.ranked) {
    ranked.push_back(json{{"gpu_a", p.gpu_a}, {"gpu_e", p.gpu_e}, {"plan", *p.result.best}});
  }
  json infeasible = json::array();
  for (const auto& p : r.infeasible) {
    infeasible.push_back(json{{"gpu_a", p.gpu_a}, {"gpu_e", p.gpu_e}, {"binding", to_string(p.result.binding())}});
  }
  json excluded = json::array();
  for (const auto& [pair, reason] : r.excluded) excluded.push_back(json{{"pair", pair}, {"reason", reason}});
  j = json{{"ranked", ranked}, {"infeasible", infeasible}, {"excluded", excluded}};
}

}  // namespace moeplan
