#include <cmath>
#include <random>

#include "doctest.h"
#include "mlda/diagnostics.hpp"
#include "mlda/errors.hpp"
#include "oracles.hpp"

using namespace mlda;
using namespace mlda::diagnostics;

namespace {

ChainSet iid_chains(int c, int n, Rng& rng, double shift_per_chain = 0.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ChainSet chains(static_cast<std::size_t>(c));
  for (int k = 0; k < c; ++k) {
    for (int i = 0; i < n; ++i) chains[k].push_back(normal(rng) + k * shift_per_chain);
  }
  return chains;
}

}  // namespace

TEST_CASE("bulk ESS of independent draws") {
  Rng rng(401);
  const auto ess = effective_sample_size(iid_chains(4, 2500, rng));
  REQUIRE(ess.defined());
  CHECK(ess.value >= 8500.0);
  CHECK(ess.value <= 11500.0);
}

TEST_CASE("bulk ESS of an AR(1) series") {
  Rng rng(402);
  ChainSet chains;
  for (int c = 0; c < 4; ++c) chains.push_back(testing::ar1_series(0.9, 20000, rng));
  const auto ess = effective_sample_size(chains);
  REQUIRE(ess.defined());
  const double expected = (1.0 - 0.9) / (1.0 + 0.9);
  CHECK(std::abs(ess.value / 80000.0 - expected) <= 0.25 * expected);
}

TEST_CASE("ESS clip and monotone invariance") {
  Rng rng(403);
  // Strong negative autocorrelation would push the raw estimate above S log10 S.
  ChainSet alternating(2);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 400; ++i) alternating[c].push_back((i % 2 ? 1.0 : -1.0) + normal(rng));
  }
  const auto clipped = effective_sample_size(alternating);
  CHECK(clipped.value <= 800.0 * std::log10(800.0) + 1e-9);

  const auto chains = iid_chains(3, 500, rng);
  ChainSet transformed = chains;
  for (auto& c : transformed) {
    for (auto& x : c) x = std::exp(x);
  }
  CHECK(effective_sample_size(chains).value == effective_sample_size(transformed).value);
  CHECK(split_rhat(chains).value == split_rhat(transformed).value);
}

TEST_CASE("constant chains are undefined") {
  const ChainSet constant(4, std::vector<double>(100, 1.5));
  const auto ess = effective_sample_size(constant);
  CHECK_FALSE(ess.defined());
  CHECK(std::isnan(ess.value));
  CHECK_FALSE(ess.note.empty());
  const auto rhat = split_rhat(constant);
  CHECK_FALSE(rhat.defined());
  CHECK_FALSE(rhat.note.empty());
}

TEST_CASE("split R-hat") {
  Rng rng(404);
  const auto mixed = split_rhat(iid_chains(4, 2500, rng));
  CHECK(mixed.value < 1.01);
  const auto offset = split_rhat(iid_chains(4, 1000, rng, 10.0));
  CHECK(offset.value > 1.5);

  std::vector<double> half(50);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& x : half) x = normal(rng);
  std::vector<double> doubled = half;
  doubled.insert(doubled.end(), half.begin(), half.end());
  CHECK(split_rhat(ChainSet{doubled, doubled}).value == 1.0);
}

TEST_CASE("split and rank normalization") {
  const ChainSet odd{{1, 2, 3, 4, 5}};
  const auto halves = split_chains(odd);
  REQUIRE(halves.size() == 2);
  CHECK(halves[0] == std::vector<double>{1, 2});
  CHECK(halves[1] == std::vector<double>{4, 5});

  const auto z = rank_normalize(ChainSet{{3.0, 1.0}, {2.0, 2.0}});
  // Ranks 4, 1 and the tie 2.5, 2.5 with S = 4.
  CHECK(z[0][1] < z[1][0]);
  CHECK(z[1][0] == z[1][1]);
  CHECK(z[0][0] == doctest::Approx(-z[0][1]).epsilon(1e-12));
}

TEST_CASE("multi-chain trace container") {
  std::vector<std::vector<ParameterVector>> chains(2, std::vector<ParameterVector>(3, ParameterVector::Zero(2)));
  chains[1][2] = ParameterVector{{7.0, 8.0}};
  const MultiChainTrace trace(chains);
  CHECK(trace.n_chains() == 2);
  CHECK(trace.n_samples() == 3);
  CHECK(trace.n_parameters() == 2);
  CHECK(trace.parameter(1)[1][2] == 8.0);
  chains[0].pop_back();
  CHECK_THROWS_AS(MultiChainTrace{chains}, ConfigError);
}

TEST_CASE("acceptance rates") {
  LevelStats all;
  all.proposals = 100;
  all.accepted = 100;
  all.evaluations = 100;
  CHECK(acceptance_rate(all) == 1.0);

  LevelStats some;
  some.proposals = 100;
  some.accepted = 66;
  CHECK(acceptance_rate(some) == doctest::Approx(0.66).epsilon(1e-15));

  LevelStats with_trivial;
  with_trivial.proposals = 100;
  with_trivial.trivial = 20;
  with_trivial.accepted = 40;
  CHECK(acceptance_rate(with_trivial) == 0.4);
  CHECK(delayed_acceptance_rate(with_trivial) == 0.5);

  MldaStats stats(2);
  stats.levels[1] = with_trivial;
  CHECK(delayed_acceptance_rate(stats, 1) == 0.5);
  CHECK_THROWS_AS(acceptance_rate(stats, 0), ConfigError);
  CHECK_THROWS_AS(acceptance_rate(stats, 2), ConfigError);
  CHECK_THROWS_AS(acceptance_rate(LevelStats{}), ConfigError);
}
