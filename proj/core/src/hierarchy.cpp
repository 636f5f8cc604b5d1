#include "mlda/hierarchy.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "mlda/errors.hpp"

namespace mlda {

ModelHierarchy::ModelHierarchy(std::vector<LevelSpec> levels, GaussianNoiseModel noise,
                               Vector data, LogPriorFn prior)
    : levels_(std::move(levels)),
      noise_(std::move(noise)),
      data_(std::move(data)),
      prior_(std::move(prior)) {
  if (levels_.size() < 2) throw ConfigError("a model hierarchy needs at least two levels");
  for (std::size_t l = 0; l + 1 < levels_.size(); ++l) {
    if (levels_[l].subchain_length < 1) {
      throw ConfigError("subchain length on level " + std::to_string(l) + " must be >= 1");
    }
  }
  for (const auto& level : levels_) {
    if (!level.forward) throw ConfigError("every level needs a forward map");
  }
  if (data_.size() != noise_.size()) {
    throw ConfigError("data length does not match the noise model dimension");
  }
  if (!prior_) throw ConfigError("prior must be callable");
}

Vector ModelHierarchy::evaluate(int l, const ParameterVector& theta) const {
  Vector out;
  try {
    out = level(l).forward(theta);
  } catch (const EvaluationError&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluationError("forward map on level " + std::to_string(l) + " failed: " + e.what(),
                          l, theta);
  }
  if (out.size() != data_.size()) {
    throw EvaluationError("forward map on level " + std::to_string(l) +
                              " returned the wrong output length",
                          l, theta);
  }
  return out;
}

const Vector& ModelHierarchy::output(int l, ChainState& state) const {
  const auto idx = static_cast<std::size_t>(l);
  if (state.outputs.size() < levels_.size()) state.outputs.resize(levels_.size());
  if (!state.outputs[idx]) state.outputs[idx] = evaluate(l, state.theta);
  return *state.outputs[idx];
}

LevelStats& LevelStats::operator+=(const LevelStats& other) {
  proposals += other.proposals;
  accepted += other.accepted;
  trivial += other.trivial;
  evaluations += other.evaluations;
  return *this;
}

MldaStats& MldaStats::operator+=(const MldaStats& other) {
  if (levels.size() < other.levels.size()) levels.resize(other.levels.size());
  for (std::size_t l = 0; l < other.levels.size(); ++l) levels[l] += other.levels[l];
  return *this;
}

double delayed_accept_prob(double log_like_fine_proposed, double log_like_fine_current,
                           double log_like_coarse_proposed, double log_like_coarse_current) {
  return mh_accept_prob(log_like_fine_proposed - log_like_coarse_proposed,
                        log_like_fine_current - log_like_coarse_current);
}

namespace {

bool draw_accept(double probability, Rng& rng) {
  if (probability >= 1.0) return true;
  if (probability <= 0.0) return false;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  return uniform(rng) < probability;
}

bool same_point(const ParameterVector& a, const ParameterVector& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

}  // namespace

MldaSampler::MldaSampler(const ModelHierarchy& hierarchy, SamplerOptions options)
    : hierarchy_(&hierarchy),
      options_(std::move(options)),
      bias_(hierarchy.finest(), hierarchy.data().size(), options_.aem),
      corrected_(hierarchy.noise(), bias_, hierarchy.finest()),
      stats_(hierarchy.n_levels()) {}

ChainState MldaSampler::initialize(ParameterVector theta) {
  if (!theta.allFinite()) throw ConfigError("initial state must be finite");
  tuner_.emplace(options_.proposal, theta.size());
  ChainState state(std::move(theta), static_cast<std::size_t>(hierarchy_->n_levels()));
  for (int l = 0; l < hierarchy_->n_levels(); ++l) {
    hierarchy_->output(l, state);
    ++stats_.levels[static_cast<std::size_t>(l)].evaluations;
  }
  if (options_.observer) options_.observer->on_subchain_start(hierarchy_->finest(), state.theta);
  return state;
}

double MldaSampler::log_likelihood(int level, ChainState& state) {
  const auto idx = static_cast<std::size_t>(level);
  if (!state.has_output(idx)) ++stats_.levels[idx].evaluations;
  const Vector& out = hierarchy_->output(level, state);
  if (!options_.aem || level == hierarchy_->finest()) {
    return hierarchy_->noise().log_likelihood(out, hierarchy_->data());
  }
  return corrected_(level, out, hierarchy_->data());
}

void MldaSampler::coarse_step(ChainState& state, Rng& rng) {
  if (!tuner_) throw ConfigError("sampler used before initialize()");
  const LogTarget target = [this](ChainState& s) {
    return hierarchy_->log_prior(s.theta) + log_likelihood(0, s);
  };
  const double current = target(state);
  MhStepResult result =
      options_.custom_proposal
          ? mh_step(std::move(state), current, target, options_.custom_proposal, rng)
          : mh_step(std::move(state), current, target, tuner_->step_sizes(),
                    options_.proposal.mode, rng);
  tuner_->record(result.decisions);
  auto& s0 = stats_.levels[0];
  s0.proposals += result.proposals;
  s0.accepted += result.accepted;
  state = std::move(result.state);
  if (options_.observer) options_.observer->on_decision(0, state.theta, result.accepted > 0);
}

bool MldaSampler::step(int level, ChainState& state, Rng& rng) {
  if (level < 1 || level > hierarchy_->finest()) {
    throw ConfigError("mlda step level must satisfy 1 <= level <= L");
  }
  const int coarse = level - 1;

  // Subchain on the coarse level, always started from the incumbent.
  ChainState proposal = state;
  if (options_.observer) options_.observer->on_subchain_start(coarse, proposal.theta);
  for (int j = 0; j < hierarchy_->subchain_length(coarse); ++j) {
    if (coarse == 0) {
      coarse_step(proposal, rng);
    } else {
      step(coarse, proposal, rng);
    }
  }

  auto& stats = stats_.levels[static_cast<std::size_t>(level)];
  ++stats.proposals;
  bool accepted = false;
  if (same_point(proposal.theta, state.theta)) {
    ++stats.trivial;
  } else {
    // Ratios use the coarse density the subchain targeted, so they are
    // computed before this evaluation feeds the bias model.
    const double fine_proposed = log_likelihood(level, proposal);
    const double fine_current = log_likelihood(level, state);
    const double coarse_proposed = log_likelihood(coarse, proposal);
    const double coarse_current = log_likelihood(coarse, state);
    const double alpha =
        delayed_accept_prob(fine_proposed, fine_current, coarse_proposed, coarse_current);
    if (options_.bias_update == BiasUpdate::kEveryEvaluation) {
      on_delayed_acceptance_evaluation(coarse, proposal, *hierarchy_, bias_);
    }
    accepted = draw_accept(alpha, rng);
    if (accepted) {
      ++stats.accepted;
      state = std::move(proposal);
    }
  }
  if (options_.bias_update == BiasUpdate::kChainState) {
    on_delayed_acceptance_evaluation(coarse, state, *hierarchy_, bias_);
  }
  if (options_.observer) options_.observer->on_decision(level, state.theta, accepted);
  return accepted;
}

void MldaSampler::end_burnin() {
  if (tuner_) tuner_->freeze();
  if (options_.freeze_aem_after_burnin) bias_.set_adaptation(false);
}

RunResult run_mlda(const ModelHierarchy& hierarchy, const SamplerOptions& options,
                   int n_samples, int n_burnin, const ParameterVector& initial, Rng& rng) {
  if (n_samples < 0 || n_burnin < 0) throw ConfigError("sample counts must be nonnegative");
  MldaSampler sampler(hierarchy, options);
  ChainState state = sampler.initialize(initial);
  const int finest = hierarchy.finest();

  for (int i = 0; i < n_burnin; ++i) sampler.step(state, rng);
  RunResult result;
  result.burnin_stats = sampler.stats();
  sampler.reset_stats();
  sampler.end_burnin();

  auto& trace = result.trace;
  trace.samples.reserve(static_cast<std::size_t>(n_samples));
  trace.accepted.reserve(static_cast<std::size_t>(n_samples));
  trace.log_likelihood.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    const bool accepted = sampler.step(state, rng);
    trace.samples.push_back(state.theta);
    trace.accepted.push_back(accepted);
    trace.log_likelihood.push_back(sampler.log_likelihood(finest, state));
  }
  result.sampling_stats = sampler.stats();
  result.bias = sampler.bias();
  result.final_step_sizes = sampler.step_sizes();
  return result;
}

RunResult run_single_level(const ModelHierarchy& hierarchy, const ProposalConfig& proposal,
                           int n_samples, int n_burnin, const ParameterVector& initial,
                           Rng& rng) {
  if (n_samples < 0 || n_burnin < 0) throw ConfigError("sample counts must be nonnegative");
  const int finest = hierarchy.finest();
  StepTuner tuner(proposal, initial.size());
  MldaStats stats(1);

  const LogTarget target = [&](ChainState& s) {
    if (!s.has_output(static_cast<std::size_t>(finest))) ++stats.levels[0].evaluations;
    return hierarchy.log_prior(s.theta) +
           hierarchy.noise().log_likelihood(hierarchy.output(finest, s), hierarchy.data());
  };
  ChainState state(initial, static_cast<std::size_t>(hierarchy.n_levels()));
  double log_density = target(state);

  RunResult result;
  auto& trace = result.trace;
  for (int i = 0; i < n_burnin + n_samples; ++i) {
    if (i == n_burnin) {
      result.burnin_stats = stats;
      stats = MldaStats(1);
      tuner.freeze();
    }
    MhStepResult r = mh_step(std::move(state), log_density, target, tuner.step_sizes(),
                             proposal.mode, rng);
    tuner.record(r.decisions);
    stats.levels[0].proposals += r.proposals;
    stats.levels[0].accepted += r.accepted;
    state = std::move(r.state);
    log_density = r.log_density;
    if (i >= n_burnin) {
      trace.samples.push_back(state.theta);
      trace.accepted.push_back(r.accepted > 0);
      trace.log_likelihood.push_back(
          hierarchy.noise().log_likelihood(hierarchy.output(finest, state), hierarchy.data()));
    }
  }
  if (n_samples == 0) {
    result.burnin_stats = stats;
    stats = MldaStats(1);
  }
  result.sampling_stats = stats;
  result.final_step_sizes = tuner.step_sizes();
  return result;
}

RevertOnRejectChecker::RevertOnRejectChecker(int n_levels)
    : current_(static_cast<std::size_t>(n_levels)),
      known_(static_cast<std::size_t>(n_levels), false),
      after_rejection_(static_cast<std::size_t>(n_levels), false) {}

void RevertOnRejectChecker::on_subchain_start(int level, const ParameterVector& theta) {
  ++events_;
  const auto idx = static_cast<std::size_t>(level);
  if (idx + 1 < current_.size()) {
    const auto parent = idx + 1;
    if (known_[parent] && !same_point(theta, current_[parent])) {
      std::ostringstream msg;
      msg << "level-" << level << " subchain started away from the level-" << parent
          << " state" << (after_rejection_[parent] ? " after a rejection" : "");
      violations_.push_back({events_, level, msg.str()});
    }
    if (after_rejection_[parent]) ++rejections_checked_;
    after_rejection_[parent] = false;
  }
  current_[idx] = theta;
  known_[idx] = true;
}

void RevertOnRejectChecker::on_decision(int level, const ParameterVector& retained,
                                        bool accepted) {
  ++events_;
  const auto idx = static_cast<std::size_t>(level);
  current_[idx] = retained;
  known_[idx] = true;
  after_rejection_[idx] = !accepted;
}

SubchainCheckReport effective_subchain_proposal_check(const ModelHierarchy& hierarchy,
                                                      SamplerOptions options, long n_steps,
                                                      const ParameterVector& initial, Rng& rng) {
  RevertOnRejectChecker checker(hierarchy.n_levels());
  options.observer = &checker;
  MldaSampler sampler(hierarchy, options);
  ChainState state = sampler.initialize(initial);
  for (long i = 0; i < n_steps; ++i) sampler.step(state, rng);
  SubchainCheckReport report;
  report.steps = n_steps;
  report.events = checker.events();
  report.rejections_checked = checker.rejections_checked();
  report.violations = checker.violations();
  return report;
}

}  // namespace mlda
