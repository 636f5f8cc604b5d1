#include "mlda/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/erf.hpp>

#include "mlda/errors.hpp"

namespace mlda::diagnostics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Estimate undefined(std::string why) { return {kNaN, std::move(why)}; }

// Returns a non-empty reason when the chains cannot be summarized.
std::string check_chains(const ChainSet& chains, std::size_t min_length) {
  if (chains.empty()) return "no chains";
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) return "chains have different lengths";
  }
  if (n < min_length) return "too few draws per chain";
  const double first = chains.front().front();
  bool constant = true;
  for (const auto& c : chains) {
    for (double v : c) {
      if (!std::isfinite(v)) return "non-finite draw";
      if (v != first) constant = false;
    }
  }
  if (constant) return "all draws are identical; diagnostic undefined";
  return {};
}

double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double inverse_normal_cdf(double p) {
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

}  // namespace

bool Estimate::defined() const noexcept { return std::isfinite(value); }

MultiChainTrace::MultiChainTrace(std::vector<std::vector<ParameterVector>> chains)
    : chains_(std::move(chains)) {
  if (chains_.empty()) return;
  const std::size_t n = chains_.front().size();
  const Eigen::Index r = n ? chains_.front().front().size() : 0;
  for (const auto& c : chains_) {
    if (c.size() != n) throw ConfigError("all chains must have the same number of samples");
    for (const auto& s : c) {
      if (s.size() != r) throw ConfigError("all samples must have the same dimension");
    }
  }
}

int MultiChainTrace::n_samples() const noexcept {
  return chains_.empty() ? 0 : static_cast<int>(chains_.front().size());
}

int MultiChainTrace::n_parameters() const noexcept {
  return n_samples() == 0 ? 0 : static_cast<int>(chains_.front().front().size());
}

ChainSet MultiChainTrace::parameter(int index) const {
  if (index < 0 || index >= n_parameters()) throw ConfigError("parameter index out of range");
  ChainSet out;
  out.reserve(chains_.size());
  for (const auto& c : chains_) {
    std::vector<double> v;
    v.reserve(c.size());
    for (const auto& s : c) v.push_back(s[index]);
    out.push_back(std::move(v));
  }
  return out;
}

ChainSet rank_normalize(const ChainSet& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (double v : chains[c]) pooled.emplace_back(v, pooled.size());
  }
  const std::size_t s = pooled.size();
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> rank(s);
  for (std::size_t i = 0; i < s;) {
    std::size_t j = i;
    while (j + 1 < s && pooled[j + 1].first == pooled[i].first) ++j;
    const double average = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t t = i; t <= j; ++t) rank[pooled[t].second] = average;
    i = j + 1;
  }
  ChainSet out;
  out.reserve(chains.size());
  std::size_t k = 0;
  const double denom = static_cast<double>(s) + 0.25;
  for (const auto& c : chains) {
    std::vector<double> z;
    z.reserve(c.size());
    for (std::size_t n = 0; n < c.size(); ++n, ++k) {
      z.push_back(inverse_normal_cdf((rank[k] - 0.375) / denom));
    }
    out.push_back(std::move(z));
  }
  return out;
}

ChainSet split_chains(const ChainSet& chains) {
  ChainSet out;
  out.reserve(2 * chains.size());
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

Estimate ess_raw(const ChainSet& chains) {
  if (auto why = check_chains(chains, 4); !why.empty()) return undefined(why);
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double nd = static_cast<double>(n);

  std::vector<std::vector<double>> centered(m);
  std::vector<double> chain_mean(m);
  for (std::size_t c = 0; c < m; ++c) {
    chain_mean[c] = mean_of(chains[c]);
    centered[c].resize(n);
    for (std::size_t i = 0; i < n; ++i) centered[c][i] = chains[c][i] - chain_mean[c];
  }
  // Mean over chains of the biased (divisor n) autocovariance at lag t.
  auto acov = [&](std::size_t t) {
    double total = 0.0;
    for (const auto& x : centered) {
      double sum = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) sum += x[i] * x[i + t];
      total += sum / nd;
    }
    return total / static_cast<double>(m);
  };

  const double mean_var = acov(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) {
    const double grand = mean_of(chain_mean);
    double between = 0.0;
    for (double mu : chain_mean) between += (mu - grand) * (mu - grand);
    var_plus += between / static_cast<double>(m - 1);
  }
  if (!(var_plus > 0.0)) return undefined("zero variance; diagnostic undefined");

  auto rho = [&](std::size_t t) { return 1.0 - (mean_var - acov(t)) / var_plus; };
  std::vector<double> rho_hat(n, 0.0);
  rho_hat[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho(1);
  rho_hat[1] = rho_odd;

  // Initial positive sequence over pairs (even, odd) of lags.
  std::size_t t = 1;
  while (t + 4 < n && rho_even + rho_odd > 0.0) {
    rho_even = rho(t + 1);
    rho_odd = rho(t + 2);
    if (rho_even + rho_odd >= 0.0) {
      rho_hat[t + 1] = rho_even;
      rho_hat[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0 && max_t + 1 < n) rho_hat[max_t + 1] = rho_even;

  // Initial monotone sequence.
  for (t = 1; t + 2 <= max_t; t += 2) {
    if (rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t]) {
      rho_hat[t + 1] = 0.5 * (rho_hat[t - 1] + rho_hat[t]);
      rho_hat[t + 2] = rho_hat[t + 1];
    }
  }

  const double total = static_cast<double>(m) * nd;
  double tau = -1.0;
  for (std::size_t i = 0; i < max_t; ++i) tau += 2.0 * rho_hat[i];
  if (max_t + 1 < n) tau += rho_hat[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return {total / tau, {}};
}

Estimate effective_sample_size(const ChainSet& chains) {
  if (auto why = check_chains(chains, 4); !why.empty()) return undefined(why);
  return ess_raw(rank_normalize(split_chains(chains)));
}

Estimate effective_sample_size(const MultiChainTrace& traces, int parameter) {
  return effective_sample_size(traces.parameter(parameter));
}

Estimate split_rhat(const ChainSet& chains) {
  if (auto why = check_chains(chains, 4); !why.empty()) return undefined(why);
  const ChainSet z = rank_normalize(split_chains(chains));
  const std::size_t m = z.size();
  const double n = static_cast<double>(z.front().size());

  std::vector<double> means(m);
  double within = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(z[c]);
    double ss = 0.0;
    for (double v : z[c]) ss += (v - means[c]) * (v - means[c]);
    within += ss / n;
  }
  within /= static_cast<double>(m);
  const double grand = mean_of(means);
  double between_over_n = 0.0;
  for (double mu : means) between_over_n += (mu - grand) * (mu - grand);
  between_over_n /= static_cast<double>(m - 1);
  if (!(within > 0.0)) return undefined("zero within-chain variance; R-hat undefined");
  return {std::sqrt((within + between_over_n) / within), {}};
}

Estimate split_rhat(const MultiChainTrace& traces, int parameter) {
  return split_rhat(traces.parameter(parameter));
}

namespace {

const LevelStats& level_stats(const MldaStats& stats, int level) {
  if (level < 0 || level >= static_cast<int>(stats.levels.size())) {
    throw ConfigError("acceptance rate: level out of range");
  }
  return stats.levels[static_cast<std::size_t>(level)];
}

}  // namespace

double acceptance_rate(const LevelStats& stats) {
  if (stats.proposals <= 0) throw ConfigError("acceptance rate undefined: no proposals");
  return static_cast<double>(stats.accepted) / static_cast<double>(stats.proposals);
}

double acceptance_rate(const MldaStats& stats, int level) {
  return acceptance_rate(level_stats(stats, level));
}

double delayed_acceptance_rate(const LevelStats& stats) {
  const long evaluated = stats.evaluated_proposals();
  if (evaluated <= 0) {
    throw ConfigError("delayed acceptance rate undefined: no non-trivial proposals");
  }
  return static_cast<double>(stats.accepted) / static_cast<double>(evaluated);
}

double delayed_acceptance_rate(const MldaStats& stats, int level) {
  return delayed_acceptance_rate(level_stats(stats, level));
}

}  // namespace mlda::diagnostics
