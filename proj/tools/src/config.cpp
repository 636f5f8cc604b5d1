#include "mlda/cli/config.hpp"

#include <fstream>
#include <set>

#include "mlda/errors.hpp"

namespace mlda::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& into, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    into = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::string to_string(SamplerKind kind) { return kind == SamplerKind::kMlda ? "mlda" : "rwmh"; }

std::string to_string(BiasUpdate update) {
  return update == BiasUpdate::kEveryEvaluation ? "every_evaluation" : "chain_state";
}

std::string to_string(ProposalMode mode) {
  return mode == ProposalMode::kBlocked ? "blocked" : "non_blocked";
}

}  // namespace

void RunConfig::validate() const {
  if (m0 < 3) throw ConfigError("problem.m0 must be at least 3");
  if (n_levels < 1) throw ConfigError("problem.n_levels must be positive");
  if (kl_modes < 1) throw ConfigError("problem.kl_modes must be positive");
  if (!(sigma > 0.0) || !(lambda > 0.0)) throw ConfigError("problem.sigma and lambda must be positive");
  if (observations_per_side < 1) throw ConfigError("problem.observations_per_side must be positive");
  if (!(noise_std > 0.0)) throw ConfigError("problem.noise_std must be positive");
  if (sampler == SamplerKind::kMlda) {
    if (n_levels < 2) throw ConfigError("mlda needs at least two levels");
    if (static_cast<int>(subchain_lengths.size()) != n_levels - 1) {
      throw ConfigError("sampler.subchain_lengths must have n_levels - 1 entries");
    }
    for (int j : subchain_lengths) {
      if (j < 1) throw ConfigError("subchain lengths must be positive");
    }
  }
  proposal.validate();
  if (n_chains < 1) throw ConfigError("sampler.chains must be positive");
  if (n_samples < 1) throw ConfigError("sampler.samples must be positive");
  if (n_burnin < 0) throw ConfigError("sampler.burnin must be nonnegative");
  if (output_dir.empty()) throw ConfigError("output directory must not be empty");
}

darcy::DarcyConfig RunConfig::darcy() const {
  darcy::DarcyConfig c;
  c.m0 = m0;
  c.n_levels = n_levels;
  c.kl_modes = kl_modes;
  c.sigma = sigma;
  c.lambda = lambda;
  c.observations_per_side = observations_per_side;
  return c;
}

SamplerOptions RunConfig::sampler_options() const {
  SamplerOptions o;
  o.proposal = proposal;
  o.aem = aem;
  o.bias_update = bias_update;
  o.freeze_aem_after_burnin = freeze_aem_after_burnin;
  return o;
}

GaussianNoiseModel RunConfig::noise() const {
  return GaussianNoiseModel::isotropic(n_observations(), noise_std);
}

std::filesystem::path RunConfig::resolved_data_path() const {
  return data_path.empty() ? output_dir / "data.csv" : data_path;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, {"problem", "sampler", "seed", "output", "data"}, "config");

  if (const auto p = j.find("problem"); p != j.end()) {
    reject_unknown(*p,
                   {"m0", "n_levels", "kl_modes", "sigma", "lambda", "observations_per_side",
                    "noise_std"},
                   "problem");
    read(*p, "m0", c.m0, "problem");
    read(*p, "n_levels", c.n_levels, "problem");
    read(*p, "kl_modes", c.kl_modes, "problem");
    read(*p, "sigma", c.sigma, "problem");
    read(*p, "lambda", c.lambda, "problem");
    read(*p, "observations_per_side", c.observations_per_side, "problem");
    read(*p, "noise_std", c.noise_std, "problem");
  }

  if (const auto s = j.find("sampler"); s != j.end()) {
    reject_unknown(*s,
                   {"type", "subchain_lengths", "aem", "bias_update", "freeze_aem_after_burnin",
                    "proposal", "chains", "samples", "burnin"},
                   "sampler");
    std::string type = to_string(c.sampler);
    read(*s, "type", type, "sampler");
    if (type == "mlda") {
      c.sampler = SamplerKind::kMlda;
    } else if (type == "rwmh") {
      c.sampler = SamplerKind::kRwmh;
    } else {
      throw ConfigError("sampler.type must be 'mlda' or 'rwmh'");
    }
    read(*s, "subchain_lengths", c.subchain_lengths, "sampler");
    read(*s, "aem", c.aem, "sampler");
    std::string update = to_string(c.bias_update);
    read(*s, "bias_update", update, "sampler");
    if (update == "every_evaluation") {
      c.bias_update = BiasUpdate::kEveryEvaluation;
    } else if (update == "chain_state") {
      c.bias_update = BiasUpdate::kChainState;
    } else {
      throw ConfigError("sampler.bias_update must be 'every_evaluation' or 'chain_state'");
    }
    read(*s, "freeze_aem_after_burnin", c.freeze_aem_after_burnin, "sampler");
    read(*s, "chains", c.n_chains, "sampler");
    read(*s, "samples", c.n_samples, "sampler");
    read(*s, "burnin", c.n_burnin, "sampler");

    if (const auto q = s->find("proposal"); q != s->end()) {
      reject_unknown(*q, {"mode", "step_size", "tune_interval", "acceptance_band", "tune_factor"},
                     "sampler.proposal");
      std::string mode = to_string(c.proposal.mode);
      read(*q, "mode", mode, "sampler.proposal");
      if (mode == "blocked") {
        c.proposal.mode = ProposalMode::kBlocked;
      } else if (mode == "non_blocked") {
        c.proposal.mode = ProposalMode::kNonBlocked;
      } else {
        throw ConfigError("sampler.proposal.mode must be 'blocked' or 'non_blocked'");
      }
      read(*q, "step_size", c.proposal.step_size, "sampler.proposal");
      read(*q, "tune_interval", c.proposal.tune_interval, "sampler.proposal");
      read(*q, "tune_factor", c.proposal.tune_factor, "sampler.proposal");
      std::vector<double> band{c.proposal.band_low, c.proposal.band_high};
      read(*q, "acceptance_band", band, "sampler.proposal");
      if (band.size() != 2) throw ConfigError("sampler.proposal.acceptance_band needs two values");
      c.proposal.band_low = band[0];
      c.proposal.band_high = band[1];
    }
  }

  std::int64_t seed = static_cast<std::int64_t>(c.seed);
  read(j, "seed", seed, "config");
  if (seed < 0) throw ConfigError("seed must be nonnegative");
  c.seed = static_cast<std::uint64_t>(seed);
  std::string output = c.output_dir.string();
  read(j, "output", output, "config");
  c.output_dir = output;
  std::string data;
  read(j, "data", data, "config");
  c.data_path = data;

  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  return json{
      {"problem",
       {{"m0", c.m0},
        {"n_levels", c.n_levels},
        {"kl_modes", c.kl_modes},
        {"sigma", c.sigma},
        {"lambda", c.lambda},
        {"observations_per_side", c.observations_per_side},
        {"noise_std", c.noise_std}}},
      {"sampler",
       {{"type", to_string(c.sampler)},
        {"subchain_lengths", c.subchain_lengths},
        {"aem", c.aem},
        {"bias_update", to_string(c.bias_update)},
        {"freeze_aem_after_burnin", c.freeze_aem_after_burnin},
        {"proposal",
         {{"mode", to_string(c.proposal.mode)},
          {"step_size", c.proposal.step_size},
          {"tune_interval", c.proposal.tune_interval},
          {"acceptance_band", {c.proposal.band_low, c.proposal.band_high}},
          {"tune_factor", c.proposal.tune_factor}}},
        {"chains", c.n_chains},
        {"samples", c.n_samples},
        {"burnin", c.n_burnin}}},
      {"seed", c.seed},
      {"output", c.output_dir.string()},
      {"data", c.data_path.string()},
  };
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace mlda::cli
