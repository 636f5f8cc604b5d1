#include "mlda/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <locale>
#include <mutex>
#include <random>
#include <regex>
#include <thread>

#include "mlda/darcy.hpp"
#include "mlda/diagnostics.hpp"
#include "mlda/errors.hpp"

namespace mlda::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream for the synthetic truth and its noise, kept apart from the chain
// streams seed + i so no chain starts at the truth.
Rng data_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x64617461u};
  return Rng(seq);
}

ParameterVector prior_draw(Eigen::Index dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ParameterVector theta(dim);
  for (Eigen::Index i = 0; i < dim; ++i) theta[i] = normal(rng);
  return theta;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("cannot create output directory " + dir.string());
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_std(m.row(i).transpose()));
  return rows;
}

double rate_or_nan(double (*rate)(const LevelStats&), const LevelStats& s) {
  try {
    return rate(s);
  } catch (const ConfigError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

json stats_json(const MldaStats& stats) {
  json levels = json::array();
  for (std::size_t l = 0; l < stats.levels.size(); ++l) {
    const auto& s = stats.levels[l];
    levels.push_back({{"level", l},
                      {"proposals", s.proposals},
                      {"accepted", s.accepted},
                      {"trivial", s.trivial},
                      {"evaluations", s.evaluations},
                      {"acceptance_rate", rate_or_nan(diagnostics::acceptance_rate, s)},
                      {"delayed_acceptance_rate",
                       rate_or_nan(diagnostics::delayed_acceptance_rate, s)}});
  }
  return levels;
}

MldaStats stats_from_json(const json& levels) {
  MldaStats stats(static_cast<int>(levels.size()));
  for (std::size_t l = 0; l < levels.size(); ++l) {
    auto& s = stats.levels[l];
    s.proposals = levels[l].at("proposals").get<long>();
    s.accepted = levels[l].at("accepted").get<long>();
    s.trivial = levels[l].at("trivial").get<long>();
    s.evaluations = levels[l].at("evaluations").get<long>();
  }
  return stats;
}

json bias_json(const BiasModel& bias) {
  json terms = json::array();
  for (int k = 0; k < bias.n_terms(); ++k) {
    const auto& t = bias.term(k);
    terms.push_back({{"term", k},
                     {"count", t.count},
                     {"mean", to_std(t.mean)},
                     {"covariance", matrix_json(t.covariance)}});
  }
  return terms;
}

std::vector<int> hierarchy_subchains(const RunConfig& config) {
  if (static_cast<int>(config.subchain_lengths.size()) == config.n_levels - 1) {
    return config.subchain_lengths;
  }
  return std::vector<int>(static_cast<std::size_t>(std::max(config.n_levels - 1, 0)), 1);
}

fs::path trace_path(const fs::path& dir, int chain) {
  return dir / ("chain_" + std::to_string(chain) + ".csv");
}

}  // namespace

int chain_parallelism(int n_chains) {
  int cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("MLDA_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (*end != '\0' || value < 1) {
      throw ConfigError("MLDA_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    cap = static_cast<int>(std::min<long>(value, 1 << 16));
  }
  return std::max(1, std::min(cap, n_chains));
}

GenerateResult cmd_generate_data(const RunConfig& config) {
  config.validate();
  ensure_dir(config.output_dir);
  const darcy::DarcyProblem problem(config.darcy());
  const GaussianNoiseModel noise = config.noise();

  Rng rng = data_rng(config.seed);
  const ParameterVector theta = prior_draw(config.kl_modes, rng);
  const darcy::SyntheticData data = darcy::generate_synthetic_data(theta, problem, noise, rng);

  {
    auto out = open_out(config.output_dir / "data.csv");
    out << "index,x1,x2,value\n" << std::setprecision(17);
    const auto& loc = problem.observations().locations();
    for (Eigen::Index j = 0; j < data.observed.size(); ++j) {
      out << j << ',' << loc(j, 0) << ',' << loc(j, 1) << ',' << data.observed[j] << '\n';
    }
  }
  write_json(config.output_dir / "truth.json",
             {{"theta_true", to_std(theta)},
              {"clean_observations", to_std(data.clean)},
              {"seed", config.seed},
              {"config", config_to_json(config)}});
  for (int l = 0; l < problem.n_levels(); ++l) {
    auto out = open_out(config.output_dir / ("true_log_field_level" + std::to_string(l) + ".csv"));
    darcy::write_nodal_csv(out, problem.log_permeability(theta, l), problem.grid(l),
                           "log_permeability");
  }
  return {theta, data.observed};
}

std::vector<ChainResult> cmd_sample(const RunConfig& config) {
  config.validate();
  ensure_dir(config.output_dir);
  const Vector data = read_data_csv(config.resolved_data_path());
  if (data.size() != config.n_observations()) {
    throw ConfigError("data file has " + std::to_string(data.size()) + " values, config expects " +
                      std::to_string(config.n_observations()));
  }
  const darcy::DarcyProblem problem(config.darcy());
  const ModelHierarchy hierarchy =
      problem.hierarchy(hierarchy_subchains(config), config.noise(), data);
  const SamplerOptions options = config.sampler_options();
  const json config_echo = config_to_json(config);

  const int n_chains = config.n_chains;
  std::vector<ChainResult> results(static_cast<std::size_t>(n_chains));
  std::vector<std::string> status(static_cast<std::size_t>(n_chains), "not_run");
  std::vector<std::string> errors(static_cast<std::size_t>(n_chains));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<int> next{0};
  std::atomic<bool> abort{false};

  auto run_chain = [&](int c) {
    auto& r = results[static_cast<std::size_t>(c)];
    r.index = c;
    r.seed = config.seed + static_cast<std::uint64_t>(c);
    Rng rng(r.seed);
    const ParameterVector initial = prior_draw(config.kl_modes, rng);
    const auto t0 = std::chrono::steady_clock::now();
    r.run = config.sampler == SamplerKind::kMlda
                ? run_mlda(hierarchy, options, config.n_samples, config.n_burnin, initial, rng)
                : run_single_level(hierarchy, config.proposal, config.n_samples, config.n_burnin,
                                   initial, rng);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    {
      auto out = open_out(trace_path(config.output_dir, c));
      write_trace_csv(out, r.run.trace);
    }
    write_json(config.output_dir / ("chain_" + std::to_string(c) + ".json"),
               {{"chain", c},
                {"seed", r.seed},
                {"initial_state", to_std(initial)},
                {"config", config_echo},
                {"burnin_stats", stats_json(r.run.burnin_stats)},
                {"sampling_stats", stats_json(r.run.sampling_stats)},
                {"final_step_sizes", to_std(r.run.final_step_sizes)},
                {"aem_terms", bias_json(r.run.bias)},
                {"wall_seconds", r.wall_seconds}});
  };

  auto worker = [&] {
    for (int c = next++; c < n_chains && !abort; c = next++) {
      try {
        run_chain(c);
        status[static_cast<std::size_t>(c)] = "ok";
      } catch (const std::exception& e) {
        status[static_cast<std::size_t>(c)] = "failed";
        errors[static_cast<std::size_t>(c)] = e.what();
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        abort = true;
      }
    }
  };

  const int n_threads = chain_parallelism(n_chains);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  json chains = json::array();
  for (int c = 0; c < n_chains; ++c) {
    const auto i = static_cast<std::size_t>(c);
    json entry = {{"chain", c},
                  {"seed", config.seed + static_cast<std::uint64_t>(c)},
                  {"status", status[i]}};
    if (status[i] == "ok") {
      entry["trace"] = trace_path(config.output_dir, c).filename().string();
      entry["metadata"] = "chain_" + std::to_string(c) + ".json";
    }
    if (!errors[i].empty()) entry["error"] = errors[i];
    chains.push_back(entry);
  }
  write_json(config.output_dir / "manifest.json",
             {{"status", first_error ? "failed" : "complete"},
              {"config", config_echo},
              {"data", config.resolved_data_path().string()},
              {"chains", chains}});
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

std::vector<fs::path> find_traces(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("no such directory " + dir.string());
  const std::regex pattern(R"(chain_(\d+)\.csv)");
  std::vector<std::pair<long, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stol(m[1]), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> paths;
  for (auto& [index, path] : found) paths.push_back(std::move(path));
  if (paths.empty()) throw ConfigError("no chain_<i>.csv traces in " + dir.string());
  return paths;
}

namespace {

std::vector<TraceFile> load_traces(const std::vector<fs::path>& paths) {
  if (paths.empty()) throw ConfigError("no trace files given");
  std::vector<TraceFile> files;
  for (const auto& p : paths) {
    files.push_back(read_trace_csv(p));
    if (files.back().parameter_names != files.front().parameter_names) {
      throw ConfigError("trace header mismatch: " + p.string() + " vs " + paths.front().string());
    }
    if (files.back().trace.size() != files.front().trace.size()) {
      throw ConfigError("trace length mismatch: " + p.string() + " vs " + paths.front().string());
    }
  }
  if (files.front().trace.size() == 0) throw ConfigError("traces contain no samples");
  return files;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

DiagnosticsReport cmd_diagnose(const std::vector<fs::path>& traces, const fs::path& output_dir) {
  const auto files = load_traces(traces);
  ensure_dir(output_dir);

  std::vector<std::vector<ParameterVector>> chains;
  for (const auto& f : files) chains.push_back(f.trace.samples);
  const diagnostics::MultiChainTrace multi(std::move(chains));

  DiagnosticsReport report;
  report.parameter_names = files.front().parameter_names;
  report.chain_rhat.assign(files.size(), {});
  json notes = json::object();
  for (int p = 0; p < multi.n_parameters(); ++p) {
    const auto& name = report.parameter_names[static_cast<std::size_t>(p)];
    const auto draws = multi.parameter(p);
    const auto ess = diagnostics::effective_sample_size(draws);
    const auto rhat = diagnostics::split_rhat(draws);
    report.ess.push_back(ess.value);
    report.rhat.push_back(rhat.value);
    if (!ess.defined()) notes[name] = ess.note;
    for (std::size_t c = 0; c < draws.size(); ++c) {
      report.chain_rhat[c].push_back(diagnostics::split_rhat(diagnostics::ChainSet{draws[c]}).value);
    }
  }

  {
    auto out = open_out(output_dir / "diagnostics.csv");
    out << "parameter,ess,rhat\n" << std::setprecision(17);
    for (std::size_t p = 0; p < report.parameter_names.size(); ++p) {
      out << report.parameter_names[p] << ',' << report.ess[p] << ',' << report.rhat[p] << '\n';
    }
  }

  json per_chain = json::array();
  MldaStats pooled;
  bool have_stats = true;
  double wall = 0.0;
  for (std::size_t c = 0; c < files.size(); ++c) {
    const auto& trace = files[c].trace;
    const auto moved = std::count(trace.accepted.begin(), trace.accepted.end(), true);
    json entry = {{"trace", traces[c].string()},
                  {"samples", trace.size()},
                  {"finest_acceptance_from_trace",
                   static_cast<double>(moved) / static_cast<double>(trace.size())},
                  {"split_rhat", json::array()}};
    for (double r : report.chain_rhat[c]) entry["split_rhat"].push_back(number_or_null(r));

    fs::path sidecar = traces[c];
    sidecar.replace_extension(".json");
    std::ifstream in(sidecar);
    if (in) {
      try {
        const json meta = json::parse(in);
        const MldaStats stats = stats_from_json(meta.at("sampling_stats"));
        entry["sampling_stats"] = stats_json(stats);
        entry["wall_seconds"] = meta.at("wall_seconds");
        wall += meta.at("wall_seconds").get<double>();
        if (pooled.levels.empty()) {
          pooled = stats;
        } else if (pooled.levels.size() == stats.levels.size()) {
          pooled += stats;
        } else {
          have_stats = false;
        }
      } catch (const json::exception& e) {
        throw ConfigError("malformed sidecar " + sidecar.string() + ": " + e.what());
      }
    } else {
      have_stats = false;
    }
    per_chain.push_back(entry);
  }

  json params = json::array();
  for (std::size_t p = 0; p < report.parameter_names.size(); ++p) {
    params.push_back({{"parameter", report.parameter_names[p]},
                      {"ess", number_or_null(report.ess[p])},
                      {"rhat", number_or_null(report.rhat[p])}});
  }
  report.summary = {{"n_chains", files.size()},
                    {"n_samples", files.front().trace.size()},
                    {"parameters", params},
                    {"undefined", notes},
                    {"chains", per_chain}};
  if (have_stats && !pooled.levels.empty()) {
    report.summary["pooled_stats"] = stats_json(pooled);
    report.summary["finest_acceptance_rate"] =
        number_or_null(rate_or_nan(diagnostics::acceptance_rate, pooled.levels.back()));
    report.summary["wall_seconds_total"] = wall;
  }
  write_json(output_dir / "summary.json", report.summary);
  return report;
}

void cmd_plot_data(const std::vector<fs::path>& traces, const std::vector<std::string>& parameters,
                   const fs::path& output_dir) {
  const auto files = load_traces(traces);
  const auto& names = files.front().parameter_names;
  std::vector<std::size_t> columns;
  for (const auto& p : parameters) {
    const auto it = std::find(names.begin(), names.end(), p);
    if (it == names.end()) throw ConfigError("unknown parameter '" + p + "'");
    columns.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  ensure_dir(output_dir);
  auto out = open_out(output_dir / "plot_data.csv");
  out << "chain,iteration,parameter,value,running_mean\n" << std::setprecision(17);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(columns[k]);
    for (std::size_t c = 0; c < files.size(); ++c) {
      double sum = 0.0;
      const auto& samples = files[c].trace.samples;
      for (std::size_t n = 0; n < samples.size(); ++n) {
        const double v = samples[n][col];
        sum += v;
        out << c << ',' << n << ',' << parameters[k] << ',' << v << ','
            << sum / static_cast<double>(n + 1) << '\n';
      }
    }
  }
}

}  // namespace mlda::cli
