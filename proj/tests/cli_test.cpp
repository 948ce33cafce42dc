#include <doctest.h>

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "moeplan/cli/commands.hpp"
#include "moeplan/cli/sweep.hpp"
#include "moeplan/error.hpp"
#include "moeplan/json_io.hpp"

using namespace moeplan;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "moeplan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string data(const char* name) { return std::string(MOEPLAN_TEST_DATA) + "/" + name; }

bool contains(const std::string& text, const std::string& part) { return text.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("plan") {
  const Run r = run({"plan", "--model", "dbrx", "--gpu", "A800"});
  CHECK(r.code == cli::kExitOk);
  CHECK(contains(r.out, "tpuc"));
  CHECK(contains(r.out, "constraint slack"));

  const Run j = run({"--json", "plan", "--model", "dbrx", "--gpu", "A800"});
  REQUIRE(j.code == cli::kExitOk);
  const json doc = json::parse(j.out);
  const DeploymentPlan p = doc.at("best").get<DeploymentPlan>();
  CHECK(p.binding == Binding::none);
  CHECK(json(p) == doc.at("best"));
  CHECK(doc.at("feasible") == true);

  const Run explain = run({"--explain", "plan", "--model", "dbrx", "--gpu", "A800"});
  CHECK(contains(explain.out, "tp_a,tp_e,n_a,m,B"));
}

TEST_CASE("plan exit codes") {
  const Run infeasible = run({"plan", "--model", "dbrx", "--gpu", "A800", "--slo", "0.0001"});
  CHECK(infeasible.code == cli::kExitInfeasible);
  CHECK(contains(infeasible.out, "binding constraint: slo"));

  CHECK(run({"plan", "--model", "nope", "--gpu", "A800"}).code == cli::kExitInputError);
  CHECK(run({"plan", "--model", "dbrx", "--gpu", "B200"}).code == cli::kExitInputError);
  CHECK(run({"plan", "--model", "dbrx", "--gpu", "A800", "--metric", "joules"}).code == cli::kExitInputError);
  CHECK(run({"frobnicate"}).code == cli::kExitInputError);
  CHECK(run({}).code == cli::kExitInputError);
  CHECK(run({"--help"}).code == cli::kExitOk);
  CHECK(run({"--config", "/nonexistent.json", "plan"}).code == cli::kExitInputError);
}

TEST_CASE("hetero plan with a config file") {
  const Run r = run({"--config", data("config.json"), "plan", "--hetero", "--metric", "power"});
  CHECK(r.code == cli::kExitOk);
  CHECK(contains(r.out, "ranked by throughput per power"));
  CHECK(contains(r.out, "H20      L40S"));

  const Run csv = run({"--config", data("config.json"), "--csv", "plan", "--hetero"});
  CHECK(csv.code == cli::kExitOk);
  CHECK(csv.out.rfind("gpu_a,gpu_e,", 0) == 0);
}

TEST_CASE("config from the environment") {
  ::setenv(cli::kConfigEnv, data("config.json").c_str(), 1);
  const Run r = run({"--json", "plan", "--gpu", "H20"});
  ::unsetenv(cli::kConfigEnv);
  REQUIRE(r.code == cli::kExitOk);
  CHECK(json::parse(r.out).at("best").at("experts") == 8);
}

TEST_CASE("simulate") {
  const Run r = run({"simulate", "--ta", "1", "--te", "1", "--tc", "0.4", "--m", "3", "--layers", "2"});
  CHECK(r.code == cli::kExitOk);
  CHECK(contains(r.out, "7.8"));

  const Run j = run({"--json", "simulate", "--ta", "1", "--te", "1", "--tc", "0.4", "--m", "3", "--layers", "2",
                     "--timeline"});
  REQUIRE(j.code == cli::kExitOk);
  const json doc = json::parse(j.out);
  CHECK(doc.at("closed_form_total").get<double>() == doctest::Approx(7.8));
  const SimReport rep = doc.at("simulation").get<SimReport>();
  CHECK(rep.timeline.size() == 24);

  const Run csv = run({"--csv", "simulate", "--ta", "1", "--te", "1", "--m", "1", "--layers", "1"});
  CHECK(csv.out.rfind("resource,microbatch,layer,phase,start_s,end_s", 0) == 0);

  const Run slow = run({"simulate", "--ta", "1", "--te", "1", "--tc", "2", "--m", "3", "--layers", "2"});
  CHECK(slow.code == cli::kExitOk);
  CHECK(contains(slow.out, "cannot be hidden"));
  CHECK(run({"simulate", "--ta", "1", "--te", "1", "--m", "0", "--layers", "2"}).code == cli::kExitInputError);
}

TEST_CASE("simulate with jitter is deterministic under a seed") {
  const std::vector<std::string> args{"--seed", "9",   "--json", "simulate", "--ta",    "1e-3", "--te",
                                      "1e-3",   "--tc", "3e-4",  "--m",      "3",       "--layers", "8",
                                      "--jitter", "--backend", "nccl"};
  const Run a = run(args);
  const Run b = run(args);
  REQUIRE(a.code == cli::kExitOk);
  CHECK(a.out == b.out);
  CHECK(json::parse(a.out).contains("jitter"));
}

TEST_CASE("sweep") {
  const Run r = run({"--csv", "sweep", "--model", "mixtral", "--gpu", "H20", "--var", "microbatches", "--values",
                     "1..4"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 5);
  CHECK(r.out.rfind("value,feasible,binding", 0) == 0);

  const Run pairs = run({"sweep", "--model", "mixtral", "--var", "gpu_pair", "--values", "H20/L40S,L40S/H20,X/Y"});
  CHECK(pairs.code == cli::kExitOk);
  CHECK(contains(pairs.out, "L40S"));

  CHECK(run({"sweep", "--model", "mixtral", "--gpu", "H20", "--var", "dp_degree", "--values", "4..1"}).code ==
        cli::kExitInputError);
  CHECK(run({"sweep", "--model", "mixtral", "--gpu", "H20", "--var", "colour", "--values", "1"}).code ==
        cli::kExitInputError);
}

TEST_CASE("sweep value parsing") {
  CHECK(cli::parse_sweep_values("1..4") == std::vector<std::string>{"1", "2", "3", "4"});
  CHECK(cli::parse_sweep_values("1, 2,8") == std::vector<std::string>{"1", "2", "8"});
  CHECK(cli::parse_sweep_values("H20/L40S") == std::vector<std::string>{"H20/L40S"});
  CHECK_THROWS_AS(cli::parse_sweep_values("3..1"), ConfigError);
  CHECK(cli::parse_sweep_variable("dp_degree") == cli::SweepVariable::dp_degree);
  CHECK_THROWS_AS(cli::parse_sweep_variable("tp"), ConfigError);
  cli::SweepSpec s;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("calibrate") {
  const Run r = run({"calibrate", "--profile", data("profile.csv")});
  CHECK(r.code == cli::kExitOk);
  CHECK(contains(r.out, "alpha 1.2e-09"));
  CHECK(contains(r.out, "k3 3e-07"));
  CHECK(contains(r.out, "rms residual"));

  const Run j = run({"--json", "calibrate", "--profile", data("profile.csv"), "--seq-len", "1000"});
  REQUIRE(j.code == cli::kExitOk);
  const CostModel cm = json::parse(j.out).at("cost_model").get<CostModel>();
  CHECK(cm.k1() == doctest::Approx(1.2e-9 * 1000 + 2e-7));
  CHECK(cm.util.is_table());

  CHECK(run({"calibrate", "--profile", data("missing.csv")}).code == cli::kExitInputError);
}

TEST_CASE("plan from a measured profile") {
  const Run r = run({"plan", "--model", "mixtral", "--gpu", "H20", "--profile", data("profile.csv")});
  CHECK((r.code == cli::kExitOk || r.code == cli::kExitInfeasible));
  CHECK(r.err.empty());
}

TEST_CASE("balance") {
  const Run frac = run({"--json", "balance", "--trace", data("loads.csv"), "--nodes", "4", "--mode", "fractional"});
  REQUIRE(frac.code == cli::kExitOk);
  const json doc = json::parse(frac.out);
  const Placement p = doc.at("placement").get<Placement>();
  CHECK(p.nodes == 4);
  const auto costs = doc.at("node_cost").get<std::vector<double>>();
  double sum = 0, mx = 0;
  for (double c : costs) {
    sum += c;
    mx = std::max(mx, c);
  }
  CHECK(mx == doctest::Approx(sum / 4).epsilon(1e-12));

  const Run integral = run({"balance", "--trace", data("loads.csv"), "--nodes", "3", "--layer", "1"});
  CHECK(integral.code == cli::kExitOk);
  CHECK(contains(integral.out, "integral placement"));

  const Run req = run({"balance", "--requests", data("requests.csv"), "--nodes", "4", "--profile", data("profile.csv")});
  CHECK(req.code == cli::kExitOk);
  CHECK(contains(req.out, "12 requests on 4 attention nodes"));

  CHECK(run({"balance", "--nodes", "4"}).code == cli::kExitInputError);
  CHECK(run({"balance", "--trace", data("loads.csv"), "--nodes", "4", "--mode", "lp"}).code == cli::kExitInputError);
  CHECK(run({"balance", "--requests", data("requests.csv"), "--nodes", "4"}).code == cli::kExitInputError);
}
