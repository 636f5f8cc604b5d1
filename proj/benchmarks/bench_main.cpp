#include <random>

#include <benchmark/benchmark.h>

#include "mlda/darcy.hpp"
#include "mlda/diagnostics.hpp"
#include "mlda/hierarchy.hpp"

namespace {

using namespace mlda;

ParameterVector draw(int r, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ParameterVector t(r);
  for (auto& x : t) x = n(rng);
  return t;
}

const darcy::DarcyProblem& problem() {
  static const darcy::DarcyProblem p{darcy::DarcyConfig{}};
  return p;
}

void BM_Forward(benchmark::State& state) {
  const int level = static_cast<int>(state.range(0));
  Rng rng(1);
  const auto theta = draw(24, rng);
  for (auto _ : state) benchmark::DoNotOptimize(problem().forward(theta, level));
  state.SetLabel("m=" + std::to_string(problem().grid(level).m));
}
BENCHMARK(BM_Forward)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

void BM_MldaStep(benchmark::State& state) {
  Rng rng(2);
  const auto truth = draw(24, rng);
  const auto h = problem().hierarchy({5, 5}, GaussianNoiseModel::isotropic(25, 0.01),
                                     problem().forward(truth, 2));
  SamplerOptions options;
  options.aem = state.range(0) != 0;
  MldaSampler sampler(h, options);
  ChainState s = sampler.initialize(draw(24, rng));
  for (auto _ : state) benchmark::DoNotOptimize(sampler.step(s, rng));
  state.SetLabel(options.aem ? "aem" : "vanilla");
}
BENCHMARK(BM_MldaStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BulkEss(benchmark::State& state) {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  diagnostics::ChainSet chains(4);
  for (auto& c : chains) {
    for (int i = 0; i < state.range(0); ++i) c.push_back(n(rng));
  }
  for (auto _ : state) benchmark::DoNotOptimize(diagnostics::effective_sample_size(chains));
}
BENCHMARK(BM_BulkEss)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
