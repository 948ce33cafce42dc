#include "moeplan/cli/sweep.hpp"

#include <charconv>
#include <stdexcept>

#include <fmt/format.h>

#include "moeplan/error.hpp"
#include "moeplan/pipeline.hpp"

namespace moeplan::cli {

std::string_view to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::microbatches: return "microbatches";
    case SweepVariable::dp_degree: return "dp_degree";
    case SweepVariable::batch_size: return "batch_size";
    case SweepVariable::gpu_pair: return "gpu_pair";
  }
  return "?";
}

SweepVariable parse_sweep_variable(std::string_view text) {
  const std::string key = normalize_name(text);
  if (key == "microbatches" || key == "m") return SweepVariable::microbatches;
  if (key == "dp-degree" || key == "dp" || key == "n-a") return SweepVariable::dp_degree;
  if (key == "batch-size" || key == "batch") return SweepVariable::batch_size;
  if (key == "gpu-pair") return SweepVariable::gpu_pair;
  throw ConfigError(fmt::format(
      "unknown sweep variable '{}' (expected microbatches, dp_degree, batch_size or gpu_pair)", text));
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError(fmt::format("sweep over {}: empty range", to_string(variable)));
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::int64_t parse_integer(std::string_view s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError(fmt::format("'{}' is not an integer", s));
  }
  return v;
}

std::int64_t positive(std::string_view s, std::string_view what) {
  const std::int64_t v = parse_integer(s);
  if (v < 1) throw ConfigError(fmt::format("{} must be >= 1 (got {})", what, v));
  return v;
}

int positive_int(std::string_view s, std::string_view what) {
  const std::int64_t v = positive(s, what);
  if (v > 1'000'000) throw ConfigError(fmt::format("{} {} is out of range", what, v));
  return static_cast<int>(v);
}

void fill(SweepRow& row, const DeploymentPlan& plan, int layers) {
  const SimReport sim = simulate(plan.times, plan.skeleton.m, layers);
  row.feasible = true;
  row.binding = std::string(to_string(plan.binding));
  row.skeleton = plan.skeleton;
  row.gpu_a = plan.gpu_a.name;
  row.gpu_e = plan.gpu_e.name;
  row.global_batch = plan.global_batch;
  row.times = plan.times;
  row.latency = sim.total_latency;
  row.throughput = static_cast<double>(plan.global_batch) / sim.total_latency;
  row.per_gpu_throughput = row.throughput / plan.total_gpus();
  row.tpuc = row.throughput / plan.cost;
  row.attention_idle = sim.attention_idle_fraction;
  row.expert_idle = sim.expert_idle_fraction;
}

}  // namespace

std::vector<std::string> parse_sweep_values(std::string_view text) {
  std::vector<std::string> out;
  const std::string t = trim(text);
  if (t.empty()) return out;
  if (const auto dots = t.find(".."); dots != std::string::npos) {
    const std::int64_t lo = parse_integer(trim(std::string_view(t).substr(0, dots)));
    const std::int64_t hi = parse_integer(trim(std::string_view(t).substr(dots + 2)));
    if (hi < lo) throw ConfigError(fmt::format("range '{}' is empty", t));
    if (hi - lo > 100'000) throw ConfigError(fmt::format("range '{}' is too long", t));
    for (std::int64_t v = lo; v <= hi; ++v) out.push_back(std::to_string(v));
    return out;
  }
  std::size_t start = 0;
  while (start <= t.size()) {
    const auto comma = t.find(',', start);
    const std::string item = trim(std::string_view(t).substr(start, comma - start));
    if (item.empty()) throw ConfigError(fmt::format("empty item in value list '{}'", t));
    out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, const SweepContext& ctx) {
  spec.validate();
  std::vector<SweepRow> rows;
  for (const std::string& value : spec.values) {
    SweepRow row;
    row.value = value;
    row.skeleton = spec.fixed;
    try {
      PlanSkeleton sk = spec.fixed;
      std::int64_t b_a = spec.attn_batch;
      PlanContext pc{ctx.model, ctx.workload, ctx.limits, ctx.gpu_a, ctx.gpu_e};
      switch (spec.variable) {
        case SweepVariable::microbatches: sk.m = positive_int(value, "micro-batch count"); break;
        case SweepVariable::dp_degree: sk.n_a = positive_int(value, "attention node count"); break;
        case SweepVariable::batch_size: b_a = positive(value, "batch size"); break;
        case SweepVariable::gpu_pair: {
          const auto slash = value.find('/');
          if (slash == std::string::npos) throw ConfigError(fmt::format("'{}' is not ATTN/EXPERT", value));
          pc.gpu_a = ctx.catalog.at(trim(std::string_view(value).substr(0, slash)));
          pc.gpu_e = ctx.catalog.at(trim(std::string_view(value).substr(slash + 1)));
          const SearchResult r = search(pc, ctx.costs);
          if (!r.best) {
            row.gpu_a = pc.gpu_a.name;
            row.gpu_e = pc.gpu_e.name;
            row.binding = std::string(to_string(r.binding()));
            row.error = "no feasible plan";
            rows.push_back(std::move(row));
            continue;
          }
          fill(row, *r.best, ctx.model.layers);
          rows.push_back(std::move(row));
          continue;
        }
      }
      if (sk.tp_a > pc.gpu_a.max_gpus_per_node || sk.tp_e > pc.gpu_e.max_gpus_per_node) {
        throw ConfigError("tensor-parallel size exceeds GPUs per node");
      }
      const auto cm = ctx.costs(pc.gpu_a, sk.tp_a, pc.gpu_e, sk.tp_e);
      if (!cm) throw ConfigError("no cost model for this configuration");
      if (b_a > (std::int64_t{1} << 40) / (static_cast<std::int64_t>(sk.m) * sk.n_a)) {
        throw ConfigError("global batch out of range");
      }
      fill(row, evaluate_plan(sk, b_a * sk.m * sk.n_a, pc, *cm), ctx.model.layers);
    } catch (const std::exception& e) {
      row.feasible = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }

  double base = 0.0;
  for (const auto& r : rows) {
    if (r.feasible) {
      base = r.throughput;
      break;
    }
  }
  for (auto& r : rows) {
    if (r.feasible && base > 0.0) r.normalized_throughput = r.throughput / base;
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "value,feasible,binding,error,gpu_a,gpu_e,tp_a,tp_e,n_a,m,B,T_a,T_e,T_c,latency_s,throughput,"
         "normalized_throughput,per_gpu_throughput,tpuc,attention_idle,expert_idle\n";
  for (const auto& r : rows) {
    std::string error = r.error;
    for (char& c : error) {
      if (c == ',' || c == '\n') c = ';';
    }
    const auto& s = r.skeleton;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.6f},{:.6f}\n",
                       r.value, r.feasible ? 1 : 0, r.binding, error, r.gpu_a, r.gpu_e, s.tp_a, s.tp_e, s.n_a, s.m,
                       r.global_batch, r.times.attention, r.times.expert, r.times.comm, r.latency, r.throughput,
                       r.normalized_throughput, r.per_gpu_throughput, r.tpuc, r.attention_idle, r.expert_idle);
  }
}

}  // namespace moeplan::cli
