#pragma once

// Run configuration for the experiment driver. Every field has the value of
// the reference Darcy experiment as its default, so an empty JSON object is a
// complete config.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlda/darcy.hpp"
#include "mlda/hierarchy.hpp"
#include "mlda/kernel.hpp"

namespace mlda::cli {

enum class SamplerKind { kMlda, kRwmh };

struct RunConfig {
  // problem
  int m0 = 5;
  int n_levels = 3;
  int kl_modes = 24;
  double sigma = 2.0;
  double lambda = 0.3;
  int observations_per_side = 5;
  double noise_std = 0.01;

  // sampler
  SamplerKind sampler = SamplerKind::kMlda;
  std::vector<int> subchain_lengths{5, 5};
  bool aem = true;
  BiasUpdate bias_update = BiasUpdate::kEveryEvaluation;
  bool freeze_aem_after_burnin = false;
  ProposalConfig proposal;
  int n_chains = 4;
  int n_samples = 5000;
  int n_burnin = 2000;

  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "mlda_out";
  /// Observation file for `sample`; empty means <output_dir>/data.csv.
  std::filesystem::path data_path;

  /// Throws ConfigError on any inconsistent or out-of-range field.
  void validate() const;

  darcy::DarcyConfig darcy() const;
  SamplerOptions sampler_options() const;
  GaussianNoiseModel noise() const;
  int n_observations() const { return observations_per_side * observations_per_side; }
  std::filesystem::path resolved_data_path() const;
};

/// Unknown keys and wrong types are configuration errors.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);

/// Reads a JSON file; throws ConfigError when missing or malformed.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace mlda::cli
