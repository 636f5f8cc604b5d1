#pragma once

// Multilevel delayed acceptance. Coarse-level subchains generate proposals for
// the next finer level; a rejected proposal restarts the coarse subchain from
// the retained fine state.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlda/aem.hpp"
#include "mlda/kernel.hpp"

namespace mlda {

/// Parameters-to-observables map of one level.
using ForwardMap = std::function<Vector(const ParameterVector&)>;
using LogPriorFn = std::function<double(const ParameterVector&)>;

struct LevelSpec {
  ForwardMap forward;
  /// Steps of this level's chain per proposal handed to the next finer level.
  /// Ignored on the finest level.
  int subchain_length = 1;
};

/// Levels ordered coarsest (0) to finest (L) with a shared prior, noise model
/// and data vector. Immutable after construction.
class ModelHierarchy {
 public:
  ModelHierarchy(std::vector<LevelSpec> levels, GaussianNoiseModel noise, Vector data,
                 LogPriorFn prior = mlda::log_prior);

  int finest() const noexcept { return static_cast<int>(levels_.size()) - 1; }
  int n_levels() const noexcept { return static_cast<int>(levels_.size()); }
  const LevelSpec& level(int l) const { return levels_.at(static_cast<std::size_t>(l)); }
  int subchain_length(int l) const { return level(l).subchain_length; }
  const GaussianNoiseModel& noise() const noexcept { return noise_; }
  const Vector& data() const noexcept { return data_; }
  double log_prior(const ParameterVector& theta) const { return prior_(theta); }

  /// F_l(theta); failures surface as EvaluationError tagged with the level.
  Vector evaluate(int l, const ParameterVector& theta) const;

  /// Cached F_l(state.theta), evaluating and storing it on a miss.
  const Vector& output(int l, ChainState& state) const;

 private:
  std::vector<LevelSpec> levels_;
  GaussianNoiseModel noise_;
  Vector data_;
  LogPriorFn prior_;
};

struct LevelStats {
  /// Delayed-acceptance (or, on level 0, Metropolis) decisions.
  long proposals = 0;
  /// Decisions that moved the chain to a new point.
  long accepted = 0;
  /// Proposals equal to the incumbent because the coarse subchain never
  /// moved. They cost no forward solve, feed no bias update and are not
  /// counted in `accepted`.
  long trivial = 0;
  long evaluations = 0;

  long evaluated_proposals() const noexcept { return proposals - trivial; }
  LevelStats& operator+=(const LevelStats& other);
};

struct MldaStats {
  std::vector<LevelStats> levels;

  MldaStats() = default;
  explicit MldaStats(int n_levels) : levels(static_cast<std::size_t>(n_levels)) {}
  MldaStats& operator+=(const MldaStats& other);
};

/// Hooks for instrumentation. `on_subchain_start(k, theta)` fires whenever the
/// level-k chain (re)starts at theta to build a proposal for level k + 1;
/// `on_decision(l, retained, accepted)` fires after every level-l decision.
class MldaObserver {
 public:
  virtual ~MldaObserver() = default;
  virtual void on_subchain_start(int /*level*/, const ParameterVector& /*theta*/) {}
  virtual void on_decision(int /*level*/, const ParameterVector& /*retained*/,
                           bool /*accepted*/) {}
};

/// Which parameter values feed the bias model of term k.
enum class BiasUpdate {
  /// Every delayed-acceptance evaluation on level k + 1, accepted or not.
  kEveryEvaluation,
  /// The level-(k + 1) chain state after every level-(k + 1) decision, so
  /// rejections repeat the retained state.
  kChainState,
};

struct SamplerOptions {
  ProposalConfig proposal;
  bool aem = false;
  BiasUpdate bias_update = BiasUpdate::kEveryEvaluation;
  bool freeze_aem_after_burnin = false;
  /// Replaces the Gaussian random walk on level 0 (must be symmetric).
  ProposalFn custom_proposal;
  MldaObserver* observer = nullptr;
};

/// min{1, exp((fine' - fine) - (coarse' - coarse))}; 0 for a -inf fine proposal.
double delayed_accept_prob(double log_like_fine_proposed, double log_like_fine_current,
                           double log_like_coarse_proposed, double log_like_coarse_current);

/// One MLDA chain over a shared hierarchy. Owns the chain's bias model,
/// step tuner and counters; not thread-safe, one instance per chain.
class MldaSampler {
 public:
  MldaSampler(const ModelHierarchy& hierarchy, SamplerOptions options);

  /// Evaluate theta on every level so all ratios have finite denominators.
  ChainState initialize(ParameterVector theta);

  /// One level-`level` iteration (level >= 1): run the coarse subchain from
  /// `state`, then accept or reject its end point. Returns true when the
  /// chain moved; a trivial proposal returns false.
  bool step(int level, ChainState& state, Rng& rng);

  /// One step of the finest chain.
  bool step(ChainState& state, Rng& rng) { return step(hierarchy_->finest(), state, rng); }

  /// Level-l log-likelihood of `state` under the current bias model.
  double log_likelihood(int level, ChainState& state);

  /// Freeze tuning (and optionally the AEM) at the end of burn-in.
  void end_burnin();

  const MldaStats& stats() const noexcept { return stats_; }
  void reset_stats() { stats_ = MldaStats(hierarchy_->n_levels()); }
  const BiasModel& bias() const noexcept { return bias_; }
  BiasModel& bias() noexcept { return bias_; }
  /// Current level-0 step sizes; empty before initialize().
  Vector step_sizes() const { return tuner_ ? tuner_->step_sizes() : Vector(); }
  const ModelHierarchy& hierarchy() const noexcept { return *hierarchy_; }

 private:
  void coarse_step(ChainState& state, Rng& rng);

  const ModelHierarchy* hierarchy_;
  SamplerOptions options_;
  BiasModel bias_;
  CorrectedLikelihood corrected_;
  std::optional<StepTuner> tuner_;
  MldaStats stats_;
};

/// Post-burn-in finest-level samples in order.
struct Trace {
  std::vector<ParameterVector> samples;
  std::vector<bool> accepted;
  std::vector<double> log_likelihood;

  std::size_t size() const noexcept { return samples.size(); }
};

struct RunResult {
  Trace trace;
  MldaStats burnin_stats;
  MldaStats sampling_stats;
  BiasModel bias;
  Vector final_step_sizes;
};

RunResult run_mlda(const ModelHierarchy& hierarchy, const SamplerOptions& options,
                   int n_samples, int n_burnin, const ParameterVector& initial, Rng& rng);

/// Plain random-walk Metropolis on the finest level only (baseline). Stats
/// have a single entry.
RunResult run_single_level(const ModelHierarchy& hierarchy, const ProposalConfig& proposal,
                           int n_samples, int n_burnin, const ParameterVector& initial,
                           Rng& rng);

/// Verifies revert-on-reject from an event stream: every level-k subchain
/// must start at the current state of the level-(k+1) chain.
class RevertOnRejectChecker : public MldaObserver {
 public:
  explicit RevertOnRejectChecker(int n_levels);

  void on_subchain_start(int level, const ParameterVector& theta) override;
  void on_decision(int level, const ParameterVector& retained, bool accepted) override;

  struct Violation {
    long event_index;
    int level;
    std::string message;
  };
  const std::vector<Violation>& violations() const noexcept { return violations_; }
  long events() const noexcept { return events_; }
  long rejections_checked() const noexcept { return rejections_checked_; }

 private:
  std::vector<ParameterVector> current_;
  std::vector<bool> known_;
  std::vector<bool> after_rejection_;
  std::vector<Violation> violations_;
  long events_ = 0;
  long rejections_checked_ = 0;
};

struct SubchainCheckReport {
  long steps = 0;
  long events = 0;
  long rejections_checked = 0;
  std::vector<RevertOnRejectChecker::Violation> violations;

  bool ok() const noexcept { return violations.empty(); }
};

/// Instrumented run of `n_steps` finest-level steps checking revert-on-reject.
SubchainCheckReport effective_subchain_proposal_check(const ModelHierarchy& hierarchy,
                                                      SamplerOptions options, long n_steps,
                                                      const ParameterVector& initial, Rng& rng);

}  // namespace mlda
