#include "mlda/aem.hpp"

#include <string>

#include "mlda/errors.hpp"
#include "mlda/hierarchy.hpp"

namespace mlda {

BiasTermEstimate update_moments(BiasTermEstimate estimate, const Vector& sample) {
  const Eigen::Index m = sample.size();
  if (estimate.count == 0 || estimate.mean.size() != m) {
    if (estimate.count != 0) throw ConfigError("bias sample length changed mid-stream");
    estimate.mean = sample;
    estimate.covariance = Matrix::Zero(m, m);
    estimate.count = 1;
    return estimate;
  }
  const double i = static_cast<double>(estimate.count);
  const Vector previous_mean = estimate.mean;
  estimate.mean = (i * previous_mean + sample) / (i + 1.0);
  if (estimate.count == 1) {
    const Vector diff = previous_mean - sample;
    estimate.covariance = 0.5 * diff * diff.transpose();
  } else {
    estimate.covariance = ((i - 1.0) / i) * estimate.covariance +
                          (i * previous_mean * previous_mean.transpose() -
                           (i + 1.0) * estimate.mean * estimate.mean.transpose() +
                           sample * sample.transpose()) /
                              i;
  }
  estimate.covariance = 0.5 * (estimate.covariance + estimate.covariance.transpose()).eval();
  ++estimate.count;
  return estimate;
}

BiasModel::BiasModel(int n_terms, Eigen::Index output_size, bool adaptation_enabled)
    : terms_(static_cast<std::size_t>(n_terms), BiasTermEstimate(output_size)),
      output_size_(output_size),
      adaptation_enabled_(adaptation_enabled) {
  if (n_terms < 1) throw ConfigError("bias model needs at least one term");
}

std::pair<Vector, Matrix> BiasModel::total_bias(int level) const {
  if (level < 0 || level >= n_terms()) {
    throw ConfigError("total_bias: level must satisfy 0 <= level < L");
  }
  Vector mean = Vector::Zero(output_size_);
  Matrix covariance = Matrix::Zero(output_size_, output_size_);
  for (int k = level; k < n_terms(); ++k) {
    const auto& t = terms_[static_cast<std::size_t>(k)];
    if (t.count == 0) continue;
    mean += t.mean;
    covariance += t.covariance;
  }
  return {std::move(mean), std::move(covariance)};
}

void BiasModel::record(int k, const Vector& fine_output, const Vector& coarse_output) {
  if (!adaptation_enabled_) return;
  auto& term = terms_.at(static_cast<std::size_t>(k));
  term = update_moments(std::move(term), fine_output - coarse_output);
  ++version_;
}

void BiasModel::set_term(int k, BiasTermEstimate estimate) {
  terms_.at(static_cast<std::size_t>(k)) = std::move(estimate);
  ++version_;
}

Vector bias_sample(int k, ChainState& state, const ModelHierarchy& hierarchy) {
  if (k < 0 || k >= hierarchy.finest()) throw ConfigError("bias_sample: k out of range");
  const Vector& fine = hierarchy.output(k + 1, state);
  const Vector& coarse = hierarchy.output(k, state);
  return fine - coarse;
}

Vector bias_sample(int k, const ParameterVector& theta, const ModelHierarchy& hierarchy) {
  ChainState state(theta, static_cast<std::size_t>(hierarchy.n_levels()));
  return bias_sample(k, state, hierarchy);
}

double corrected_log_likelihood(int level, const Vector& model_output,
                                const GaussianNoiseModel& noise, const BiasModel& bias,
                                const Vector& data) {
  auto [mu_b, sigma_b] = bias.total_bias(level);
  GaussianLogDensity density(noise.covariance() + sigma_b);
  return density(data - model_output - noise.mean_shift() - mu_b);
}

void on_delayed_acceptance_evaluation(int k, ChainState& state,
                                      const ModelHierarchy& hierarchy, BiasModel& bias) {
  if (!bias.adaptation_enabled()) return;
  bias.record(k, hierarchy.output(k + 1, state), hierarchy.output(k, state));
}

CorrectedLikelihood::CorrectedLikelihood(const GaussianNoiseModel& noise, const BiasModel& bias,
                                         int n_terms)
    : noise_(&noise), bias_(&bias), slots_(static_cast<std::size_t>(n_terms)) {}

double CorrectedLikelihood::operator()(int level, const Vector& model_output,
                                       const Vector& data) {
  auto& slot = slots_.at(static_cast<std::size_t>(level));
  if (!slot.valid || slot.version != bias_->version()) {
    auto [mu_b, sigma_b] = bias_->total_bias(level);
    slot.shift = noise_->mean_shift() + mu_b;
    slot.density.emplace(noise_->covariance() + sigma_b);
    slot.version = bias_->version();
    slot.valid = true;
  }
  return (*slot.density)(data - model_output - slot.shift);
}

}  // namespace mlda
