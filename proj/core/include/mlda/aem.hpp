#pragma once

// Adaptive error model: on-line Gaussian estimates of the differences
// B_k = F_{k+1} - F_k between adjacent levels, telescoped into a
// bias-corrected likelihood for every coarse level.

#include <cstdint>
#include <utility>
#include <vector>

#include "mlda/kernel.hpp"

namespace mlda {

class ModelHierarchy;

/// Running mean and unbiased covariance of one bias term.
struct BiasTermEstimate {
  long count = 0;
  Vector mean;
  Matrix covariance;

  BiasTermEstimate() = default;
  explicit BiasTermEstimate(Eigen::Index m)
      : mean(Vector::Zero(m)), covariance(Matrix::Zero(m, m)) {}
};

/// Recursive moment update. After one sample the covariance is zero, after two
/// it is the two-sample unbiased covariance, afterwards
///   mu_{i+1}    = (i mu_i + b) / (i + 1)
///   Sigma_{i+1} = (i-1)/i Sigma_i + (i mu_i mu_i^T - (i+1) mu_{i+1} mu_{i+1}^T + b b^T) / i
/// followed by re-symmetrization.
BiasTermEstimate update_moments(BiasTermEstimate estimate, const Vector& sample);

class BiasModel {
 public:
  BiasModel() = default;
  /// One term per adjacent level pair: `n_terms` = L for an (L+1)-level hierarchy.
  BiasModel(int n_terms, Eigen::Index output_size, bool adaptation_enabled = true);

  int n_terms() const noexcept { return static_cast<int>(terms_.size()); }
  Eigen::Index output_size() const noexcept { return output_size_; }
  const BiasTermEstimate& term(int k) const { return terms_.at(static_cast<std::size_t>(k)); }
  const std::vector<BiasTermEstimate>& terms() const noexcept { return terms_; }

  bool adaptation_enabled() const noexcept { return adaptation_enabled_; }
  void set_adaptation(bool enabled) noexcept { adaptation_enabled_ = enabled; }

  /// Incremented on every moment update; lets callers cache factorizations.
  std::uint64_t version() const noexcept { return version_; }

  /// Sum of term moments for k = level .. L-1. Requires level < L.
  std::pair<Vector, Matrix> total_bias(int level) const;

  /// Feed B_k = fine_output - coarse_output into term k. No-op when
  /// adaptation is disabled.
  void record(int k, const Vector& fine_output, const Vector& coarse_output);

  /// Replace term k wholesale (restoring saved state, tests).
  void set_term(int k, BiasTermEstimate estimate);

 private:
  std::vector<BiasTermEstimate> terms_;
  Eigen::Index output_size_ = 0;
  bool adaptation_enabled_ = true;
  std::uint64_t version_ = 0;
};

/// F_{k+1}(theta) - F_k(theta), using `state`'s cached outputs when present.
Vector bias_sample(int k, ChainState& state, const ModelHierarchy& hierarchy);
Vector bias_sample(int k, const ParameterVector& theta, const ModelHierarchy& hierarchy);

/// Gaussian log-likelihood at level `level` < L with residual
/// d - F_l - mu_eps - mu_B,l and covariance Sigma_eps + Sigma_B,l.
double corrected_log_likelihood(int level, const Vector& model_output,
                                const GaussianNoiseModel& noise, const BiasModel& bias,
                                const Vector& data);

/// Delayed-acceptance hook: F_k and F_{k+1} were both evaluated at `state`.
void on_delayed_acceptance_evaluation(int k, ChainState& state,
                                      const ModelHierarchy& hierarchy, BiasModel& bias);

/// Caches the corrected likelihood factorization per level, refreshed
/// whenever the bias model's version changes.
class CorrectedLikelihood {
 public:
  CorrectedLikelihood(const GaussianNoiseModel& noise, const BiasModel& bias, int n_terms);

  double operator()(int level, const Vector& model_output, const Vector& data);

 private:
  struct Slot {
    std::uint64_t version = 0;
    bool valid = false;
    Vector shift;
    std::optional<GaussianLogDensity> density;
  };
  const GaussianNoiseModel* noise_;
  const BiasModel* bias_;
  std::vector<Slot> slots_;
};

}  // namespace mlda
