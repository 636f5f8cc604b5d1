#pragma once

// Single-level Metropolis-Hastings building blocks: standard-normal prior,
// Gaussian likelihood, random-walk proposals and burn-in step tuning.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace mlda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// A point in KL-coefficient space; the chain state.
using ParameterVector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// log N(theta; 0, I_R), normalizer included.
double log_prior(const ParameterVector& theta);

/// Log-density of a zero-mean Gaussian with a fixed covariance, evaluated at a
/// residual. The covariance is factorized once at construction.
class GaussianLogDensity {
 public:
  /// Throws NumericalError if `covariance` is not symmetric positive-definite.
  explicit GaussianLogDensity(const Matrix& covariance);

  double operator()(const Vector& residual) const;

  /// -1/2 log det(2 pi Sigma).
  double log_normalizer() const noexcept { return log_normalizer_; }
  Eigen::Index size() const noexcept { return llt_.rows(); }

 private:
  Eigen::LLT<Matrix> llt_;
  double log_normalizer_ = 0.0;
};

/// Additive Gaussian observation noise, eps ~ N(mean_shift, covariance).
class GaussianNoiseModel {
 public:
  /// Throws ConfigError on size mismatch or a covariance that is not SPD.
  GaussianNoiseModel(Vector mean_shift, Matrix covariance);

  /// std_dev^2 * I_m with zero mean shift.
  static GaussianNoiseModel isotropic(Eigen::Index m, double std_dev);

  const Vector& mean_shift() const noexcept { return mean_shift_; }
  const Matrix& covariance() const noexcept { return covariance_; }
  Eigen::Index size() const noexcept { return mean_shift_.size(); }
  const GaussianLogDensity& density() const noexcept { return density_; }

  /// log L(data | model_output) with residual data - model_output - mean_shift.
  double log_likelihood(const Vector& model_output, const Vector& data) const;

 private:
  Vector mean_shift_;
  Matrix covariance_;
  GaussianLogDensity density_;
};

double gaussian_log_likelihood(const Vector& model_output,
                               const GaussianNoiseModel& noise,
                               const Vector& data);

enum class ProposalMode {
  kBlocked,     // isotropic Gaussian move of the whole vector
  kNonBlocked,  // one coordinate at a time, each with its own accept/reject
};

struct ProposalConfig {
  double step_size = 1.0;
  int tune_interval = 100;
  double band_low = 0.2;
  double band_high = 0.5;
  double tune_factor = 0.7;
  ProposalMode mode = ProposalMode::kBlocked;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// theta + step_size * xi, xi ~ N(0, I).
ParameterVector rw_propose(const ParameterVector& theta, double step_size, Rng& rng);

/// Moves only coordinate `index`.
ParameterVector rw_propose_component(const ParameterVector& theta, Eigen::Index index,
                                     double step_size, Rng& rng);

/// min{1, exp(lp' - lp + log q(theta|theta') - log q(theta'|theta))}; 0 when lp' = -inf.
double mh_accept_prob(double log_post_proposed, double log_post_current,
                      double log_q_forward = 0.0, double log_q_reverse = 0.0);

/// Multiplicative band rule: shrink below the band, grow above it.
double tune_step_size(double current_step, double recent_acceptance, double band_low,
                      double band_high, double factor = 0.7);

/// Tracks acceptance over windows of `tune_interval` steps and rescales the
/// step sizes until frozen. Blocked mode keeps one step size; non-blocked
/// mode keeps one per coordinate, each tuned on its own acceptance.
class StepTuner {
 public:
  StepTuner(const ProposalConfig& config, Eigen::Index dimension);

  /// One entry in blocked mode, `dimension` entries otherwise.
  const Vector& step_sizes() const noexcept { return steps_; }
  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }

  /// Record one kernel step. `decisions[i]` is the outcome for step size i.
  void record(const std::vector<bool>& decisions);

 private:
  ProposalConfig config_;
  Vector steps_;
  bool frozen_ = false;
  int steps_in_window_ = 0;
  std::vector<long> window_proposals_;
  std::vector<long> window_accepted_;
};

/// Chain state with per-level forward-output cache. Cached outputs always
/// belong to `theta`; a state with a new theta starts with an empty cache.
struct ChainState {
  ParameterVector theta;
  std::vector<std::optional<Vector>> outputs;

  ChainState() = default;
  explicit ChainState(ParameterVector t, std::size_t n_levels = 0)
      : theta(std::move(t)), outputs(n_levels) {}

  bool has_output(std::size_t level) const {
    return level < outputs.size() && outputs[level].has_value();
  }
};

/// Log target density. May fill the state's output cache as a side effect.
using LogTarget = std::function<double(ChainState&)>;

/// Symmetric proposal generator q(.|theta).
using ProposalFn = std::function<ParameterVector(const ParameterVector&, Rng&)>;

struct MhStepResult {
  ChainState state;
  double log_density = 0.0;
  long proposals = 0;
  long accepted = 0;
  /// Outcome of each accept/reject decision, in proposal order.
  std::vector<bool> decisions;
};

/// One Metropolis-Hastings cycle with a Gaussian random walk. In non-blocked
/// mode a cycle is a sweep over all coordinates and `step_sizes` holds one
/// entry per coordinate; blocked mode uses `step_sizes[0]`. Target failures
/// are rethrown as EvaluationError carrying the offending theta.
MhStepResult mh_step(ChainState current, double current_log_density, const LogTarget& target,
                     const Vector& step_sizes, ProposalMode mode, Rng& rng);

/// As above with a caller-supplied symmetric proposal (one decision per call).
MhStepResult mh_step(ChainState current, double current_log_density, const LogTarget& target,
                     const ProposalFn& proposal, Rng& rng);

}  // namespace mlda
