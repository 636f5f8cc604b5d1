#pragma once

// The four driver subcommands as library calls, plus trace-file I/O.
// Output files (all under RunConfig::output_dir unless noted):
//   generate-data  data.csv, truth.json, true_log_field_level<l>.csv
//   sample         chain_<i>.csv, chain_<i>.json, manifest.json
//   diagnose       diagnostics.csv, summary.json
//   plot-data      plot_data.csv

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlda/cli/config.hpp"
#include "mlda/hierarchy.hpp"

namespace mlda::cli {

/// Columns theta_1..theta_R, accepted, log_likelihood; 17 significant digits.
void write_trace_csv(std::ostream& out, const Trace& trace);

struct TraceFile {
  std::vector<std::string> parameter_names;
  Trace trace;
};

/// Throws ConfigError on a missing file, bad header or malformed row.
TraceFile read_trace_csv(const std::filesystem::path& path);

/// Observation vector from data.csv (columns index, x1, x2, value).
Vector read_data_csv(const std::filesystem::path& path);

/// Number of chains to run at once: min(chains, MLDA_THREADS or hardware).
int chain_parallelism(int n_chains);

struct GenerateResult {
  ParameterVector theta_true;
  Vector observed;
};

GenerateResult cmd_generate_data(const RunConfig& config);

struct ChainResult {
  int index = 0;
  std::uint64_t seed = 0;
  RunResult run;
  double wall_seconds = 0.0;
};

/// Runs config.n_chains chains, chain i seeded config.seed + i and started
/// from a prior draw of its own stream. On failure the manifest records what
/// finished and the first error is rethrown.
std::vector<ChainResult> cmd_sample(const RunConfig& config);

struct DiagnosticsReport {
  std::vector<std::string> parameter_names;
  std::vector<double> ess;
  std::vector<double> rhat;
  /// Single-chain split R-hat of each parameter, per chain: [chain][param].
  std::vector<std::vector<double>> chain_rhat;
  nlohmann::json summary;
};

/// Diagnostics over the given trace files. Sidecar chain_<i>.json files next
/// to the traces, when present, contribute per-level counters to the summary.
DiagnosticsReport cmd_diagnose(const std::vector<std::filesystem::path>& traces,
                               const std::filesystem::path& output_dir);

/// Long-format rows chain, iteration, parameter, value, running_mean.
void cmd_plot_data(const std::vector<std::filesystem::path>& traces,
                   const std::vector<std::string>& parameters,
                   const std::filesystem::path& output_dir);

/// chain_<i>.csv files in `dir`, ordered by i.
std::vector<std::filesystem::path> find_traces(const std::filesystem::path& dir);

/// Full command line: parse, dispatch and map errors to exit codes
/// (0 ok, 2 usage or configuration, 3 numerical failure, 1 anything else).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlda::cli
