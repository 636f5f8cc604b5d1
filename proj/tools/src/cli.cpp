#include <iomanip>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "mlda/cli/commands.hpp"
#include "mlda/errors.hpp"

namespace mlda::cli {

namespace {

struct Overrides {
  std::string config;
  std::string output;
  std::string data;
  std::optional<std::int64_t> seed;
  std::optional<std::string> aem;
  std::optional<int> chains;
  std::optional<int> samples;
  std::optional<int> burnin;
  std::vector<std::string> traces;
  std::vector<std::string> parameters{"theta_1"};
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--output", o.output, "output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "base seed (overrides config)");
  cmd->add_option("--aem", o.aem, "adaptive error model")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--chains", o.chains, "number of chains");
  cmd->add_option("--samples", o.samples, "post burn-in samples per chain");
  cmd->add_option("--burnin", o.burnin, "burn-in steps per chain");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (!o.output.empty()) c.output_dir = o.output;
  if (!o.data.empty()) c.data_path = o.data;
  if (o.seed) {
    if (*o.seed < 0) throw ConfigError("--seed must be nonnegative");
    c.seed = static_cast<std::uint64_t>(*o.seed);
  }
  if (o.aem) c.aem = *o.aem == "on";
  if (o.chains) c.n_chains = *o.chains;
  if (o.samples) c.n_samples = *o.samples;
  if (o.burnin) c.n_burnin = *o.burnin;
  c.validate();
  return c;
}

std::vector<std::filesystem::path> trace_list(const Overrides& o, const RunConfig& c) {
  if (o.traces.empty()) return find_traces(c.output_dir);
  return {o.traces.begin(), o.traces.end()};
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilevel delayed acceptance MCMC on the Darcy benchmark", "mlda"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("generate-data", "draw a true field and noisy observations");
  add_common(gen, o);
  auto* sample = app.add_subcommand("sample", "run independent chains on the observations");
  add_common(sample, o);
  sample->add_option("--data", o.data, "observation file (default <output>/data.csv)");
  auto* diagnose = app.add_subcommand("diagnose", "ESS and split R-hat per parameter");
  add_common(diagnose, o);
  diagnose->add_option("traces", o.traces, "trace files (default <output>/chain_*.csv)");
  auto* plot = app.add_subcommand("plot-data", "long-format trace series for plotting");
  add_common(plot, o);
  plot->add_option("traces", o.traces, "trace files (default <output>/chain_*.csv)");
  plot->add_option("--parameters", o.parameters, "parameter names")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig config = resolve(o);
    if (gen->parsed()) {
      const auto result = cmd_generate_data(config);
      out << "wrote " << result.observed.size() << " observations to "
          << (config.output_dir / "data.csv").string() << '\n';
    } else if (sample->parsed()) {
      const auto results = cmd_sample(config);
      for (const auto& r : results) {
        const auto& s = r.run.sampling_stats.levels.back();
        out << "chain " << r.index << ": finest acceptance " << std::setprecision(4)
            << (s.proposals > 0 ? static_cast<double>(s.accepted) / static_cast<double>(s.proposals)
                                : 0.0)
            << ", " << r.wall_seconds << " s\n";
      }
    } else if (diagnose->parsed()) {
      const auto report = cmd_diagnose(trace_list(o, config), config.output_dir);
      out << std::setprecision(6);
      for (std::size_t p = 0; p < report.parameter_names.size(); ++p) {
        out << report.parameter_names[p] << " ess " << report.ess[p] << " rhat " << report.rhat[p]
            << '\n';
      }
    } else if (plot->parsed()) {
      cmd_plot_data(trace_list(o, config), o.parameters, config.output_dir);
      out << "wrote " << (config.output_dir / "plot_data.csv").string() << '\n';
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const EvaluationError& e) {
    err << "numerical failure on level " << e.level() << ": " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace mlda::cli
