#include "mlda/kernel.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mlda/errors.hpp"

namespace mlda {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)

bool accept(double probability, Rng& rng) {
  if (probability >= 1.0) return true;
  if (probability <= 0.0) return false;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  return uniform(rng) < probability;
}

double evaluate(const LogTarget& target, ChainState& state) {
  try {
    return target(state);
  } catch (const EvaluationError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluationError(std::string("target evaluation failed: ") + e.what(), -1,
                          state.theta);
  }
}

}  // namespace

double log_prior(const ParameterVector& theta) {
  return -0.5 * theta.squaredNorm() - 0.5 * static_cast<double>(theta.size()) * kLog2Pi;
}

GaussianLogDensity::GaussianLogDensity(const Matrix& covariance) {
  if (covariance.rows() != covariance.cols() || covariance.rows() == 0) {
    throw ConfigError("covariance must be a non-empty square matrix");
  }
  if (!covariance.isApprox(covariance.transpose(), 1e-12)) {
    throw ConfigError("covariance is not symmetric");
  }
  llt_.compute(covariance);
  if (llt_.info() != Eigen::Success) {
    throw NumericalError("covariance is not positive-definite (Cholesky failed)");
  }
  const auto diag = llt_.matrixLLT().diagonal();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag[i] > 0.0)) throw NumericalError("covariance is not positive-definite");
    log_det += 2.0 * std::log(diag[i]);
  }
  log_normalizer_ = -0.5 * (static_cast<double>(covariance.rows()) * kLog2Pi + log_det);
}

double GaussianLogDensity::operator()(const Vector& residual) const {
  const Vector whitened = llt_.matrixL().solve(residual);
  return log_normalizer_ - 0.5 * whitened.squaredNorm();
}

namespace {

GaussianLogDensity make_noise_density(const Vector& mean, const Matrix& covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw ConfigError("noise covariance must be M x M with M = len(mean_shift)");
  }
  try {
    return GaussianLogDensity(covariance);
  } catch (const NumericalError& e) {
    throw ConfigError(std::string("noise covariance: ") + e.what());
  }
}

}  // namespace

GaussianNoiseModel::GaussianNoiseModel(Vector mean_shift, Matrix covariance)
    : mean_shift_(std::move(mean_shift)),
      covariance_(std::move(covariance)),
      density_(make_noise_density(mean_shift_, covariance_)) {}

GaussianNoiseModel GaussianNoiseModel::isotropic(Eigen::Index m, double std_dev) {
  if (!(std_dev > 0.0)) throw ConfigError("noise standard deviation must be positive");
  return GaussianNoiseModel(Vector::Zero(m), Matrix::Identity(m, m) * (std_dev * std_dev));
}

double GaussianNoiseModel::log_likelihood(const Vector& model_output, const Vector& data) const {
  if (model_output.size() != size() || data.size() != size()) {
    throw ConfigError("model output and data must have length M = " + std::to_string(size()));
  }
  return density_(data - model_output - mean_shift_);
}

double gaussian_log_likelihood(const Vector& model_output, const GaussianNoiseModel& noise,
                               const Vector& data) {
  return noise.log_likelihood(model_output, data);
}

void ProposalConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ConfigError("step_size must be positive and finite");
  }
  if (tune_interval <= 0) throw ConfigError("tune_interval must be positive");
  if (!(0.0 < band_low && band_low < band_high && band_high < 1.0)) {
    throw ConfigError("acceptance band must satisfy 0 < low < high < 1");
  }
  if (!(0.0 < tune_factor && tune_factor < 1.0)) {
    throw ConfigError("tune_factor must lie in (0, 1)");
  }
}

ParameterVector rw_propose(const ParameterVector& theta, double step_size, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ParameterVector proposed(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    proposed[i] = theta[i] + step_size * normal(rng);
  }
  return proposed;
}

ParameterVector rw_propose_component(const ParameterVector& theta, Eigen::Index index,
                                     double step_size, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ParameterVector proposed = theta;
  proposed[index] += step_size * normal(rng);
  return proposed;
}

double mh_accept_prob(double log_post_proposed, double log_post_current, double log_q_forward,
                      double log_q_reverse) {
  if (log_post_proposed == -std::numeric_limits<double>::infinity()) return 0.0;
  const double log_ratio =
      log_post_proposed - log_post_current + log_q_reverse - log_q_forward;
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

double tune_step_size(double current_step, double recent_acceptance, double band_low,
                      double band_high, double factor) {
  if (recent_acceptance < band_low) return current_step * factor;
  if (recent_acceptance > band_high) return current_step / factor;
  return current_step;
}

StepTuner::StepTuner(const ProposalConfig& config, Eigen::Index dimension) : config_(config) {
  config_.validate();
  if (dimension < 1) throw ConfigError("parameter dimension must be positive");
  const Eigen::Index n = config_.mode == ProposalMode::kBlocked ? 1 : dimension;
  steps_ = Vector::Constant(n, config_.step_size);
  window_proposals_.assign(static_cast<std::size_t>(n), 0);
  window_accepted_.assign(static_cast<std::size_t>(n), 0);
}

void StepTuner::record(const std::vector<bool>& decisions) {
  if (frozen_) return;
  const std::size_t n = window_proposals_.size();
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    ++window_proposals_[i % n];
    if (decisions[i]) ++window_accepted_[i % n];
  }
  if (++steps_in_window_ < config_.tune_interval) return;
  for (std::size_t i = 0; i < n; ++i) {
    if (window_proposals_[i] > 0) {
      const double rate =
          static_cast<double>(window_accepted_[i]) / static_cast<double>(window_proposals_[i]);
      const auto k = static_cast<Eigen::Index>(i);
      steps_[k] = tune_step_size(steps_[k], rate, config_.band_low, config_.band_high,
                                 config_.tune_factor);
    }
    window_proposals_[i] = 0;
    window_accepted_[i] = 0;
  }
  steps_in_window_ = 0;
}

namespace {

// Accept/reject `candidate` against `result`, updating it in place.
void decide(MhStepResult& result, ChainState candidate, const LogTarget& target, Rng& rng) {
  const double log_density = evaluate(target, candidate);
  ++result.proposals;
  const bool accepted = accept(mh_accept_prob(log_density, result.log_density), rng);
  result.decisions.push_back(accepted);
  if (accepted) {
    result.state = std::move(candidate);
    result.log_density = log_density;
    ++result.accepted;
  }
}

}  // namespace

MhStepResult mh_step(ChainState current, double current_log_density, const LogTarget& target,
                     const Vector& step_sizes, ProposalMode mode, Rng& rng) {
  const std::size_t n_levels = current.outputs.size();
  const Eigen::Index dim = current.theta.size();
  const Eigen::Index needed = mode == ProposalMode::kBlocked ? 1 : dim;
  if (step_sizes.size() != needed) throw ConfigError("step size vector has the wrong length");
  MhStepResult result{std::move(current), current_log_density, 0, 0, {}};
  if (mode == ProposalMode::kBlocked) {
    decide(result, ChainState(rw_propose(result.state.theta, step_sizes[0], rng), n_levels),
           target, rng);
  } else {
    for (Eigen::Index i = 0; i < dim; ++i) {
      decide(result,
             ChainState(rw_propose_component(result.state.theta, i, step_sizes[i], rng),
                        n_levels),
             target, rng);
    }
  }
  return result;
}

MhStepResult mh_step(ChainState current, double current_log_density, const LogTarget& target,
                     const ProposalFn& proposal, Rng& rng) {
  const std::size_t n_levels = current.outputs.size();
  MhStepResult result{std::move(current), current_log_density, 0, 0, {}};
  decide(result, ChainState(proposal(result.state.theta, rng), n_levels), target, rng);
  return result;
}

}  // namespace mlda
