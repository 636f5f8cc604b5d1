#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mlda/cli/commands.hpp"
#include "mlda/errors.hpp"

using namespace mlda;
using namespace mlda::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  std::random_device rd;
  const fs::path dir = fs::temp_directory_path() / ("mlda_test_" + name + "_" + std::to_string(rd()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mlda");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small two-level problem so sampling runs in well under a second.
fs::path small_config(const fs::path& dir) {
  const fs::path path = dir / "config.json";
  std::ofstream(path) << R"({"problem": {"n_levels": 2, "kl_modes": 6},
                            "sampler": {"subchain_lengths": [3]}})";
  return path;
}

void set_threads(const char* value) {
  if (value) {
    ::setenv("MLDA_THREADS", value, 1);
  } else {
    ::unsetenv("MLDA_THREADS");
  }
}

}  // namespace

TEST_CASE("config JSON round trip and validation") {
  RunConfig c;
  c.seed = 7;
  c.aem = false;
  c.subchain_lengths = {2, 4};
  c.proposal.mode = ProposalMode::kNonBlocked;
  const nlohmann::json j = config_to_json(c);
  CHECK(config_to_json(config_from_json(j)) == j);

  CHECK(config_from_json(nlohmann::json::object()).n_samples == 5000);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"sede", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"seed", "x"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"sampler", {{"subchain_lengths", {1}}}}}),
                  ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("generate-data is deterministic") {
  const auto a = scratch_dir("gen_a"), b = scratch_dir("gen_b");
  REQUIRE(invoke({"generate-data", "--output", a.string(), "--seed", "5"}).code == 0);
  REQUIRE(invoke({"generate-data", "--output", b.string(), "--seed", "5"}).code == 0);
  CHECK(slurp(a / "data.csv") == slurp(b / "data.csv"));
  CHECK(read_data_csv(a / "data.csv").size() == 25);
  CHECK(fs::exists(a / "truth.json"));
  CHECK(fs::exists(a / "true_log_field_level2.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("sample, diagnose and plot-data") {
  const auto dir = scratch_dir("pipeline");
  const auto config = small_config(dir).string();
  const auto out = dir.string();
  REQUIRE(invoke({"generate-data", "--config", config, "--output", out}).code == 0);
  const auto sampled = invoke({"sample", "--config", config, "--output", out, "--chains", "2",
                            "--samples", "10", "--burnin", "5"});
  REQUIRE_MESSAGE(sampled.code == 0, sampled.err);

  const auto traces = find_traces(dir);
  REQUIRE(traces.size() == 2);
  for (const auto& t : traces) {
    const auto file = read_trace_csv(t);
    CHECK(file.trace.size() == 10);
    CHECK(file.parameter_names.size() == 6);
    CHECK(file.parameter_names.front() == "theta_1");
  }
  CHECK(fs::exists(dir / "manifest.json"));

  const auto diag = invoke({"diagnose", "--output", out});
  REQUIRE_MESSAGE(diag.code == 0, diag.err);
  CHECK(fs::exists(dir / "diagnostics.csv"));
  CHECK(fs::exists(dir / "summary.json"));

  REQUIRE(invoke({"plot-data", "--output", out, "--parameters", "theta_1,theta_3"}).code == 0);
  std::ifstream plot(dir / "plot_data.csv");
  std::string line;
  std::getline(plot, line);
  CHECK(line == "chain,iteration,parameter,value,running_mean");
  int rows = 0;
  while (std::getline(plot, line)) ++rows;
  CHECK(rows == 2 * 10 * 2);
  CHECK(invoke({"plot-data", "--output", out, "--parameters", "theta_99"}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("traces do not depend on the thread count") {
  const auto dir = scratch_dir("threads");
  const auto config = small_config(dir).string();
  const auto one = (dir / "one").string(), three = (dir / "three").string();
  REQUIRE(invoke({"generate-data", "--config", config, "--output", one}).code == 0);
  const auto data = (fs::path(one) / "data.csv").string();
  const std::vector<std::string> common{"--config", config, "--chains", "3", "--samples", "20",
                                        "--burnin", "10"};

  set_threads("1");
  auto args = common;
  args.insert(args.begin(), {"sample", "--output", one});
  REQUIRE(invoke(args).code == 0);
  set_threads("3");
  args = common;
  args.insert(args.begin(), {"sample", "--output", three, "--data", data});
  REQUIRE(invoke(args).code == 0);
  set_threads(nullptr);

  for (int c = 0; c < 3; ++c) {
    const std::string name = "chain_" + std::to_string(c) + ".csv";
    CHECK(slurp(fs::path(one) / name) == slurp(fs::path(three) / name));
  }
  set_threads("zero");
  CHECK_THROWS_AS(chain_parallelism(4), ConfigError);
  set_threads(nullptr);
  fs::remove_all(dir);
}

TEST_CASE("diagnose input validation") {
  const auto dir = scratch_dir("diag");
  std::ofstream(dir / "a.csv") << "theta_1,theta_2,accepted,log_likelihood\n"
                                  "1,2,1,-3\n1.5,2,0,-3\n1.2,2,1,-3\n0.9,2,1,-3\n";
  std::ofstream(dir / "b.csv") << "theta_1,accepted,log_likelihood\n1,1,-3\n";
  std::ofstream(dir / "c.csv") << "theta_1,theta_2,accepted,log_likelihood\n"
                                  "0.7,2,1,-3\n1.1,2,1,-3\n1.3,2,0,-3\n0.8,2,1,-3\n";

  CHECK_THROWS_AS(cmd_diagnose({dir / "a.csv", dir / "b.csv"}, dir), ConfigError);
  const auto report = cmd_diagnose({dir / "a.csv", dir / "c.csv"}, dir);
  CHECK(std::isnan(report.ess[1]));
  CHECK(report.summary["undefined"].contains("theta_2"));
  CHECK_THROWS_AS(read_trace_csv(dir / "missing.csv"), ConfigError);

  std::ofstream(dir / "bad.csv") << "theta_1,accepted,log_likelihood\nabc,1,-3\n";
  CHECK_THROWS_AS(read_trace_csv(dir / "bad.csv"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("trace CSV round trip") {
  Trace t;
  t.samples = {ParameterVector{{0.1, -2.0 / 3.0}}, ParameterVector{{1e-300, 5.0}}};
  t.accepted = {true, false};
  t.log_likelihood = {-1.25, -std::numeric_limits<double>::infinity()};
  const auto dir = scratch_dir("roundtrip");
  {
    std::ofstream out(dir / "chain_0.csv");
    write_trace_csv(out, t);
  }
  const auto back = read_trace_csv(dir / "chain_0.csv");
  CHECK(back.trace.samples == t.samples);
  CHECK(back.trace.accepted == t.accepted);
  CHECK(back.trace.log_likelihood == t.log_likelihood);
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"sample", "--aem", "maybe"}).code == 2);
  CHECK(invoke({"sample", "--chains", "0"}).code == 2);
  CHECK(invoke({"sample", "--config", "/nonexistent.json"}).code == 2);
  const auto dir = scratch_dir("exit");
  CHECK(invoke({"sample", "--output", dir.string()}).code == 2);  // no data file
  fs::remove_all(dir);
}
