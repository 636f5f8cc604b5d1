#pragma once

// Rank-normalized bulk effective sample size and split R-hat over several
// chains, and acceptance rates from sampler counters.

#include <string>
#include <vector>

#include "mlda/hierarchy.hpp"
#include "mlda/kernel.hpp"

namespace mlda::diagnostics {

/// Draws of one scalar quantity: chains[c][n].
using ChainSet = std::vector<std::vector<double>>;

/// A diagnostic value, or NaN with a reason when it is undefined
/// (e.g. constant chains).
struct Estimate {
  double value = 0.0;
  std::string note;

  bool defined() const noexcept;
};

/// C chains x N samples x R parameters.
class MultiChainTrace {
 public:
  MultiChainTrace() = default;
  /// Throws ConfigError unless all chains have the same length and width.
  explicit MultiChainTrace(std::vector<std::vector<ParameterVector>> chains);

  int n_chains() const noexcept { return static_cast<int>(chains_.size()); }
  int n_samples() const noexcept;
  int n_parameters() const noexcept;

  /// chains[c][n] of parameter `index`.
  ChainSet parameter(int index) const;

 private:
  std::vector<std::vector<ParameterVector>> chains_;
};

/// z-scores of pooled draws: average ranks r, then Phi^{-1}((r - 3/8) / (S + 1/4)).
ChainSet rank_normalize(const ChainSet& chains);

/// Each chain cut into two halves (an odd middle draw is dropped).
ChainSet split_chains(const ChainSet& chains);

/// Multi-chain ESS of already-prepared chains (no splitting or ranking), with
/// Geyer's initial monotone positive-pair truncation.
Estimate ess_raw(const ChainSet& chains);

/// Bulk ESS: rank-normalize, split, ess_raw, clipped to S log10(S).
Estimate effective_sample_size(const ChainSet& chains);
Estimate effective_sample_size(const MultiChainTrace& traces, int parameter);

/// Rank-normalized split R-hat, sqrt(var+ / W_n) with var+ = W_n + B / n and
/// W_n the mean within-chain variance with divisor n. Identical split chains
/// give exactly 1.
Estimate split_rhat(const ChainSet& chains);
Estimate split_rhat(const MultiChainTrace& traces, int parameter);

/// Fraction of proposals that moved the chain: accepted / proposals.
/// Throws ConfigError if there were no proposals.
double acceptance_rate(const LevelStats& stats);
double acceptance_rate(const MldaStats& stats, int level);

/// Delayed-acceptance pass rate over proposals that differ from the
/// incumbent: accepted / (proposals - trivial). Throws ConfigError if every
/// proposal was trivial.
double delayed_acceptance_rate(const LevelStats& stats);
double delayed_acceptance_rate(const MldaStats& stats, int level);

}  // namespace mlda::diagnostics
