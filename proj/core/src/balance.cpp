#include "moeplan/balance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "moeplan/catalog.hpp"
#include "moeplan/csv.hpp"
#include "moeplan/error.hpp"

namespace moeplan {

std::string_view to_string(PlacementMode mode) {
  switch (mode) {
    case PlacementMode::integral: return "integral";
    case PlacementMode::replicated: return "replicated";
    case PlacementMode::fractional: return "fractional";
  }
  return "?";
}

PlacementMode parse_placement_mode(std::string_view text) {
  const std::string key = normalize_name(text);
  if (key == "integral") return PlacementMode::integral;
  if (key == "replicated") return PlacementMode::replicated;
  if (key == "fractional") return PlacementMode::fractional;
  throw ConfigError(fmt::format("unknown placement mode '{}' (expected integral, replicated or fractional)", text));
}

int Placement::replicas(int expert) const {
  int n = 0;
  for (int j = 0; j < nodes; ++j) n += at(expert, j) > 0.0 ? 1 : 0;
  return n;
}

void Placement::validate() const {
  if (nodes < 1) throw std::invalid_argument("placement: nodes must be >= 1");
  if (x.size() != expert_ids.size() * static_cast<std::size_t>(nodes)) {
    throw std::invalid_argument("placement: matrix shape does not match experts x nodes");
  }
  const int limit = mode == PlacementMode::integral     ? 1
                    : mode == PlacementMode::replicated ? max_replicas
                                                        : nodes;
  for (int i = 0; i < experts(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < nodes; ++j) {
      const double v = at(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(fmt::format("placement: x({}, {}) = {} outside [0, 1]", i, j, v));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument(fmt::format("placement: row of expert {} sums to {}", expert_ids[i], sum));
    }
    if (replicas(i) > limit) {
      throw std::invalid_argument(fmt::format("placement: expert {} on {} nodes, {} mode allows {}",
                                              expert_ids[i], replicas(i), to_string(mode), limit));
    }
  }
}

std::vector<double> node_cost(const Placement& placement, const std::vector<ExpertLoad>& loads, double k_cold) {
  if (loads.size() != placement.expert_ids.size()) {
    throw std::invalid_argument(fmt::format("node_cost: {} loads for a placement of {} experts", loads.size(),
                                            placement.expert_ids.size()));
  }
  std::vector<double> c(placement.nodes, 0.0);
  for (int i = 0; i < placement.experts(); ++i) {
    const double eff = std::max(loads[i].active_cost, k_cold);
    for (int j = 0; j < placement.nodes; ++j) c[j] += placement.at(i, j) * eff;
  }
  return c;
}

namespace {

// Rows in decreasing effective cost, ties by input position.
std::vector<int> by_cost_desc(const std::vector<double>& eff) {
  std::vector<int> order(eff.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return eff[a] > eff[b]; });
  return order;
}

struct Piece {
  int row;
  double cost;
  double fraction;
};

// LPT over pieces; replicas of one expert land on distinct nodes.
void assign_lpt(std::vector<Piece> pieces, Placement& p, const std::optional<int>& cap) {
  std::stable_sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) { return a.cost > b.cost; });
  std::vector<double> load(p.nodes, 0.0);
  std::vector<int> count(p.nodes, 0);
  for (const Piece& piece : pieces) {
    int best = -1;
    for (int j = 0; j < p.nodes; ++j) {
      if (p.at(piece.row, j) > 0.0) continue;
      if (cap && count[j] >= *cap) continue;
      if (best < 0 || load[j] < load[best]) best = j;
    }
    if (best < 0) {
      throw ConstraintError(fmt::format("no node can take expert {} within the per-node cap of {}",
                                        p.expert_ids[piece.row], cap ? *cap : 0));
    }
    p.at(piece.row, best) = piece.fraction;
    load[best] += piece.cost;
    ++count[best];
  }
}

void fill_wraparound(const std::vector<double>& eff, Placement& p) {
  const double total = std::accumulate(eff.begin(), eff.end(), 0.0);
  const double level = total / p.nodes;
  int j = 0;
  double fill = 0.0;
  for (int i : by_cost_desc(eff)) {
    if (!(eff[i] > 0.0)) {
      p.at(i, j) = 1.0;
      continue;
    }
    double remaining = eff[i];
    double placed_fraction = 0.0;
    while (true) {
      const double room = level - fill;
      if (j == p.nodes - 1 || remaining <= room) {
        p.at(i, j) += 1.0 - placed_fraction;
        fill += remaining;
        if (fill >= level && j < p.nodes - 1) {
          ++j;
          fill = 0.0;
        }
        break;
      }
      const double frac = room / eff[i];
      p.at(i, j) += frac;
      placed_fraction += frac;
      remaining -= room;
      ++j;
      fill = 0.0;
    }
  }
}

}  // namespace

Placement balance_experts(const std::vector<ExpertLoad>& loads, int nodes, double k_cold,
                          const BalanceOptions& options) {
  if (nodes < 1) throw std::invalid_argument(fmt::format("balance_experts: nodes must be >= 1 (got {})", nodes));
  if (loads.empty()) throw std::invalid_argument("balance_experts: no expert loads");
  if (!(k_cold >= 0.0) || !std::isfinite(k_cold)) {
    throw std::invalid_argument("balance_experts: K_cold must be finite and >= 0");
  }
  if (options.mode == PlacementMode::replicated && options.max_replicas < 1) {
    throw std::invalid_argument("balance_experts: max_replicas must be >= 1");
  }
  if (options.max_experts_per_node && *options.max_experts_per_node < 1) {
    throw std::invalid_argument("balance_experts: max_experts_per_node must be >= 1");
  }

  Placement p;
  p.mode = options.mode;
  p.max_replicas = options.mode == PlacementMode::replicated   ? options.max_replicas
                   : options.mode == PlacementMode::fractional ? nodes
                                                               : 1;
  p.nodes = nodes;
  std::vector<double> eff;
  for (const auto& l : loads) {
    if (!(l.active_cost >= 0.0) || !std::isfinite(l.active_cost)) {
      throw std::invalid_argument(fmt::format("expert {}: active cost must be finite and >= 0", l.expert_id));
    }
    p.expert_ids.push_back(l.expert_id);
    eff.push_back(std::max(l.active_cost, k_cold));
  }
  p.x.assign(loads.size() * static_cast<std::size_t>(nodes), 0.0);

  const auto& cap = options.max_experts_per_node;
  if (cap && static_cast<std::int64_t>(*cap) * nodes < static_cast<std::int64_t>(loads.size())) {
    throw ConstraintError(fmt::format("{} experts do not fit on {} nodes with at most {} per node", loads.size(),
                                      nodes, *cap));
  }

  switch (options.mode) {
    case PlacementMode::integral: {
      std::vector<Piece> pieces;
      for (std::size_t i = 0; i < eff.size(); ++i) pieces.push_back({static_cast<int>(i), eff[i], 1.0});
      assign_lpt(std::move(pieces), p, cap);
      break;
    }
    case PlacementMode::replicated: {
      const double avg = std::accumulate(eff.begin(), eff.end(), 0.0) / nodes;
      const int max_r = std::min(options.max_replicas, nodes);
      std::vector<Piece> pieces;
      for (std::size_t i = 0; i < eff.size(); ++i) {
        int r = 1;
        if (eff[i] > avg && avg > 0.0) r = std::min(max_r, static_cast<int>(std::ceil(eff[i] / avg)));
        for (int k = 0; k < r; ++k) pieces.push_back({static_cast<int>(i), eff[i] / r, 1.0 / r});
      }
      assign_lpt(std::move(pieces), p, cap);
      break;
    }
    case PlacementMode::fractional:
      fill_wraparound(eff, p);
      if (cap) {
        for (int j = 0; j < nodes; ++j) {
          int n = 0;
          for (int i = 0; i < p.experts(); ++i) n += p.at(i, j) > 0.0 ? 1 : 0;
          if (n > *cap) {
            throw ConstraintError(fmt::format("fractional placement puts {} experts on node {}, cap is {}", n, j,
                                              *cap));
          }
        }
      }
      break;
  }
  return p;
}

double AttnBatchPlan::max_time() const {
  return node_time.empty() ? 0.0 : *std::max_element(node_time.begin(), node_time.end());
}

double AttnBatchPlan::min_time() const {
  return node_time.empty() ? 0.0 : *std::min_element(node_time.begin(), node_time.end());
}

AttnBatchPlan compose_attention_batches(const std::vector<Request>& requests, int n_a, const CostModel& cm,
                                        double target_time) {
  if (n_a < 1) throw std::invalid_argument("compose_attention_batches: n_a must be >= 1");
  if (!(target_time > 0.0)) throw std::invalid_argument("compose_attention_batches: target_time must be > 0");

  std::vector<double> cost;
  cost.reserve(requests.size());
  for (const auto& r : requests) {
    if (r.seq_len < 0) throw std::invalid_argument(fmt::format("request {}: negative sequence length", r.id));
    cost.push_back(cm.attention.per_seq_token * static_cast<double>(r.seq_len) + cm.attention.per_token);
  }

  std::vector<std::vector<int>> members(static_cast<std::size_t>(n_a));
  std::vector<double> time(static_cast<std::size_t>(n_a), cm.k2());
  const auto argmin = [&] { return static_cast<int>(std::min_element(time.begin(), time.end()) - time.begin()); };
  const auto argmax = [&] { return static_cast<int>(std::max_element(time.begin(), time.end()) - time.begin()); };
  for (int i : by_cost_desc(cost)) {
    const int node = argmin();
    members[node].push_back(i);
    time[node] += cost[i];
  }

  // Move one request from the slowest to the fastest node, or swap a pair
  // between them, while that lowers max / min.
  const auto ratio = [&](double hi_time, double lo_time, int hi, int lo) {
    double mx = std::max(hi_time, lo_time), mn = std::min(hi_time, lo_time);
    for (int j = 0; j < n_a; ++j) {
      if (j == hi || j == lo) continue;
      mx = std::max(mx, time[j]);
      mn = std::min(mn, time[j]);
    }
    return mx / mn;
  };
  const std::size_t max_steps = 4 * requests.size() * static_cast<std::size_t>(n_a);
  for (std::size_t step = 0; step < max_steps; ++step) {
    const int hi = argmax(), lo = argmin();
    if (hi == lo) break;
    double best = ratio(time[hi], time[lo], hi, lo);
    int take = -1, give = -1;
    for (std::size_t a = 0; a < members[hi].size(); ++a) {
      const double c = cost[members[hi][a]];
      if (const double r = ratio(time[hi] - c, time[lo] + c, hi, lo); r < best) {
        best = r;
        take = static_cast<int>(a);
        give = -1;
      }
      for (std::size_t b = 0; b < members[lo].size(); ++b) {
        const double d = cost[members[lo][b]] - c;
        if (const double r = ratio(time[hi] + d, time[lo] - d, hi, lo); r < best) {
          best = r;
          take = static_cast<int>(a);
          give = static_cast<int>(b);
        }
      }
    }
    if (take < 0) break;
    const int moved = members[hi][take];
    members[hi].erase(members[hi].begin() + take);
    time[hi] -= cost[moved];
    if (give >= 0) {
      const int back = members[lo][give];
      members[lo].erase(members[lo].begin() + give);
      time[lo] -= cost[back];
      members[hi].push_back(back);
      time[hi] += cost[back];
    }
    members[lo].push_back(moved);
    time[lo] += cost[moved];
  }

  AttnBatchPlan plan;
  plan.target_time = target_time;
  plan.node_time = time;
  for (int j = 0; j < n_a; ++j) {
    std::vector<std::int64_t> ids;
    for (int i : members[j]) ids.push_back(requests[i].id);
    plan.node_requests.push_back(std::move(ids));
    if (time[j] > target_time) ++plan.over_target;
  }
  return plan;
}

std::vector<Request> read_requests(std::istream& in, std::string_view origin) {
  std::vector<Request> out;
  csv::for_each_row(in, "id", [&](const std::vector<std::string>& f, int line) {
    if (f.size() != 2) {
      throw ConfigError(fmt::format("{}:{}: expected id,seq_len, got {} fields", origin, line, f.size()));
    }
    Request r{csv::parse_int(f[0], origin, line, "id"), csv::parse_int(f[1], origin, line, "seq_len")};
    if (r.seq_len < 0) throw ConfigError(fmt::format("{}:{}: seq_len must be non-negative", origin, line));
    out.push_back(r);
  });
  if (out.empty()) throw ConfigError(fmt::format("{}: no requests", origin));
  return out;
}

std::vector<LoadTraceRow> read_load_trace(std::istream& in, std::string_view origin) {
  std::vector<LoadTraceRow> rows;
  csv::for_each_row(in, "layer", [&](const std::vector<std::string>& f, int line) {
    if (f.size() != 3) {
      throw ConfigError(
          fmt::format("{}:{}: expected layer,expert_id,token_count, got {} fields", origin, line, f.size()));
    }
    LoadTraceRow r;
    r.layer = static_cast<int>(csv::parse_int(f[0], origin, line, "layer"));
    r.expert_id = static_cast<int>(csv::parse_int(f[1], origin, line, "expert_id"));
    r.token_count = csv::parse_double(f[2], origin, line, "token_count");
    if (r.layer < 0 || r.expert_id < 0 || r.token_count < 0) {
      throw ConfigError(fmt::format("{}:{}: values must be non-negative", origin, line));
    }
    rows.push_back(r);
  });
  if (rows.empty()) throw ConfigError(fmt::format("{}: load trace has no rows", origin));
  return rows;
}

std::vector<ExpertLoad> loads_from_trace(const std::vector<LoadTraceRow>& rows, std::optional<int> layer) {
  std::map<int, double> totals;
  for (const auto& r : rows) {
    if (!layer || r.layer == *layer) totals[r.expert_id] += r.token_count;
  }
  if (totals.empty()) throw ConfigError(fmt::format("load trace has no rows for layer {}", layer.value_or(-1)));
  std::vector<ExpertLoad> out;
  for (const auto& [id, tokens] : totals) out.push_back({id, tokens});
  return out;
}

}  // namespace moeplan
