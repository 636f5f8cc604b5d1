// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Run artifacts are kept under
// ./acceptance_runs (or the directory given as the first argument).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mlda/aem.hpp"
#include "mlda/cli/commands.hpp"
#include "mlda/darcy.hpp"
#include "mlda/diagnostics.hpp"
#include "oracles.hpp"

using namespace mlda;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, format, args...);
  return buffer;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome exactness() {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int draw = 0; draw < 50; ++draw) {
    testing::ThreeStateProblem toy;
    if (draw > 0) {
      for (int s = 0; s < 3; ++s) {
        toy.f0[s] = u(rng);
        toy.f1[s] = u(rng);
      }
    }
    for (const int j : {1, 2}) {
      const Vector pi = testing::stationary_distribution(toy.mlda_kernel(j));
      worst = std::max(worst, (pi - toy.target(1)).cwiseAbs().maxCoeff());
    }
  }
  return {worst <= 1e-12, fmt("max |pi - target| = %.3e over 50 problems, J0 in {1,2}", worst)};
}

Outcome moments() {
  Rng rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix samples(25, 500);
  for (Eigen::Index i = 0; i < samples.size(); ++i) samples.data()[i] = 2.0 + n(rng);
  BiasTermEstimate e(25);
  for (Eigen::Index i = 0; i < samples.cols(); ++i) e = update_moments(e, samples.col(i));
  const auto [mean, cov] = testing::batch_moments(samples);
  const double rm = (e.mean - mean).cwiseAbs().maxCoeff() / mean.cwiseAbs().maxCoeff();
  const double rc = (e.covariance - cov).cwiseAbs().maxCoeff() / cov.cwiseAbs().maxCoeff();
  return {rm <= 1e-10 && rc <= 1e-10,
          fmt("relative error mean %.3e, covariance %.3e", rm, rc)};
}

Outcome solver() {
  double flat = 0.0, layered = 0.0;
  for (const auto& g : darcy::build_grid_hierarchy(5, 3)) {
    const Vector p = darcy::solve_darcy(Vector::Zero(g.n_nodes()), g);
    for (int j = 0; j < g.m; ++j) {
      for (int i = 0; i < g.m; ++i) {
        flat = std::max(flat, std::abs(p[g.node(i, j)] - g.coordinate(i)));
      }
    }
    // k = 1 for x1 < 1/2 and 4 beyond, evaluated at edge midpoints.
    auto k = [](double x) { return x < 0.5 ? 1.0 : 4.0; };
    darcy::EdgeConductivity e{Vector(static_cast<Eigen::Index>(g.m - 1) * g.m),
                              Vector(static_cast<Eigen::Index>(g.m) * (g.m - 1))};
    for (int j = 0; j < g.m; ++j) {
      for (int i = 0; i + 1 < g.m; ++i) e.horizontal[j * (g.m - 1) + i] = k((i + 0.5) * g.h);
    }
    for (int j = 0; j + 1 < g.m; ++j) {
      for (int i = 0; i < g.m; ++i) e.vertical[j * g.m + i] = k(i * g.h);
    }
    const Vector q = darcy::solve_darcy(e, g);
    for (int j = 0; j < g.m; ++j) {
      layered = std::max(layered, std::abs(q[g.node((g.m - 1) / 2, j)] - 0.8));
    }
  }
  return {flat <= 1e-12 && layered <= 1e-10,
          fmt("k=1 max error %.3e; two-layer interface max error %.3e", flat, layered)};
}

Outcome kl() {
  const auto grids = darcy::build_grid_hierarchy(5, 3);
  const auto& g = grids[2];
  const darcy::KLBasis basis(grids, 2.0, 0.3, 24);
  const darcy::KLModes ours{basis.eigenvalues(), basis.eigenfunctions(2)};
  const auto oracle = testing::dense_kl_oracle(g, 2.0, 0.3, 24);
  const Vector w = g.quadrature_weights();
  const double ev = ((ours.eigenvalues - oracle.eigenvalues).array().abs() /
                     oracle.eigenvalues.array()).maxCoeff();
  const double vec = std::max(testing::max_projector_difference(ours, oracle, w),
                              testing::max_projector_difference(oracle, ours, w));
  // Eigenvalues must strictly decrease between distinct values. The square
  // domain makes some pairs exactly degenerate (x1/x2 symmetric modes); those
  // are reported as ties, and the oracle must see the same tie.
  bool ordered = ours.eigenvalues.minCoeff() > 0.0;
  int ties = 0;
  for (Eigen::Index i = 0; i + 1 < 24; ++i) {
    const double a = ours.eigenvalues[i], b = ours.eigenvalues[i + 1];
    const bool tie = std::abs(a - b) <= 1e-10 * a;
    if (tie) {
      ++ties;
      ordered = ordered && std::abs(oracle.eigenvalues[i] - oracle.eigenvalues[i + 1]) <=
                               1e-8 * oracle.eigenvalues[i];
    } else {
      ordered = ordered && b < a;
    }
  }
  return {ev <= 1e-8 && vec <= 1e-8 && ordered,
          fmt("65x65: eigenvalue rel error %.3e, eigenspace error %.3e, decreasing %s with %d "
              "exact symmetry ties",
              ev, vec, ordered ? "yes" : "no", ties)};
}

struct RunSummary {
  double move_rate = 0.0;
  double da_rate = 0.0;
  double ess = 0.0;
  std::vector<double> chain_rhat;
  double seconds = 0.0;
};

RunSummary sample_and_diagnose(cli::RunConfig config) {
  const auto start = std::chrono::steady_clock::now();
  const auto chains = cli::cmd_sample(config);
  MldaStats pooled;
  for (const auto& c : chains) {
    if (pooled.levels.empty()) pooled = MldaStats(static_cast<int>(c.run.sampling_stats.levels.size()));
    pooled += c.run.sampling_stats;
  }
  const int top = static_cast<int>(pooled.levels.size()) - 1;
  const auto report = cli::cmd_diagnose(cli::find_traces(config.output_dir), config.output_dir);
  RunSummary s;
  s.move_rate = diagnostics::acceptance_rate(pooled, top);
  s.da_rate = diagnostics::delayed_acceptance_rate(pooled, top);
  s.ess = report.ess[0];
  for (const auto& r : report.chain_rhat) s.chain_rhat.push_back(r[0]);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

std::string rhats(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + fmt("%.3g", x);
  return s;
}

bool all_below(const std::vector<double>& v, double bound) {
  for (double x : v) {
    if (!(x < bound)) return false;
  }
  return true;
}

struct ReferenceRuns {
  RunSummary vanilla;
  RunSummary aem;
  RunSummary rwmh;
};

ReferenceRuns reference_runs(const fs::path& root) {
  cli::RunConfig base;
  base.n_chains = 4;
  base.n_samples = 2000;
  base.n_burnin = 1000;
  base.seed = 42;
  base.output_dir = root / "data";
  cli::cmd_generate_data(base);
  base.data_path = root / "data" / "data.csv";

  ReferenceRuns runs;
  cli::RunConfig c = base;
  c.aem = false;
  c.output_dir = root / "vanilla";
  runs.vanilla = sample_and_diagnose(c);
  c.aem = true;
  c.output_dir = root / "aem";
  runs.aem = sample_and_diagnose(c);
  c.sampler = cli::SamplerKind::kRwmh;
  c.output_dir = root / "rwmh";
  runs.rwmh = sample_and_diagnose(c);
  return runs;
}

Outcome reference_experiment(const ReferenceRuns& r) {
  const bool rate_v = r.vanilla.move_rate <= 0.10;
  const bool rate_a = r.aem.move_rate >= 0.35;
  const bool ess = r.aem.ess >= 20.0 * r.vanilla.ess;
  const bool rhat = all_below(r.aem.chain_rhat, 1.1) && !all_below(r.vanilla.chain_rhat, 1.1);
  return {rate_v && rate_a && ess && rhat,
          fmt("vanilla L2 acceptance %.3f (DA %.3f) [%s]; AEM L2 acceptance %.3f (DA %.3f) [%s]; "
              "ESS(theta_1) AEM %.1f vs vanilla %.1f [%s]; chain R-hat AEM {%s} vanilla {%s} [%s]; "
              "%.0f s + %.0f s",
              r.vanilla.move_rate, r.vanilla.da_rate, rate_v ? "ok" : "out of band",
              r.aem.move_rate, r.aem.da_rate, rate_a ? "ok" : "out of band", r.aem.ess,
              r.vanilla.ess, ess ? "ok" : "out of band", rhats(r.aem.chain_rhat).c_str(),
              rhats(r.vanilla.chain_rhat).c_str(), rhat ? "ok" : "out of band",
              r.vanilla.seconds, r.aem.seconds)};
}

Outcome baseline(const ReferenceRuns& r) {
  // Both runs hold 4 x 2000 post burn-in samples, so per-sample ESS compares
  // pooled ESS directly.
  const bool rate = r.rwmh.move_rate >= 0.1 && r.rwmh.move_rate <= 0.5;
  const bool ess = r.rwmh.ess <= 0.1 * r.aem.ess;
  return {rate && ess,
          fmt("RWMH acceptance %.3f [%s]; ESS(theta_1) RWMH %.1f vs AEM %.1f per 8000 [%s]; %.0f s",
              r.rwmh.move_rate, rate ? "ok" : "out of band", r.rwmh.ess, r.aem.ess,
              ess ? "ok" : "out of band", r.rwmh.seconds)};
}

Outcome perfect_surrogate() {
  double worst = 1.0;
  long evaluated = 0;
  const auto check = [&](const ModelHierarchy& h, SamplerOptions options, const ParameterVector& x0,
                         int n, std::uint64_t seed) {
    Rng rng(seed);
    const auto result = run_mlda(h, options, n, n / 4, x0, rng);
    auto stats = result.burnin_stats;
    stats += result.sampling_stats;
    worst = std::min(worst, diagnostics::delayed_acceptance_rate(stats, 1));
    evaluated += stats.levels[1].evaluated_proposals();
  };

  const testing::ThreeStateProblem toy;
  SamplerOptions discrete;
  discrete.custom_proposal = testing::ThreeStateProblem::proposal();
  for (const int j : {1, 3}) check(toy.duplicate_hierarchy(j), discrete, ParameterVector{{0.0}}, 20000, 7);

  const darcy::DarcyProblem problem(darcy::DarcyConfig{.n_levels = 2});
  Rng rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParameterVector truth(24);
  for (auto& x : truth) x = normal(rng);
  const Vector data = problem.forward(truth, 1);
  const ModelHierarchy dup({{problem.forward_map(1), 3}, {problem.forward_map(1), 1}},
                           GaussianNoiseModel::isotropic(25, 0.01), data);
  for (const bool aem : {false, true}) {
    SamplerOptions options;
    options.aem = aem;
    check(dup, options, ParameterVector::Zero(24), 400, 9);
  }
  return {worst == 1.0,
          fmt("min level-1 delayed-acceptance rate %.17g over %ld evaluated proposals", worst,
              evaluated)};
}

Outcome ess_validation() {
  Rng rng(10);
  std::normal_distribution<double> normal(0.0, 1.0);
  diagnostics::ChainSet iid(4);
  for (auto& c : iid) {
    for (int i = 0; i < 2500; ++i) c.push_back(normal(rng));
  }
  diagnostics::ChainSet ar;
  for (int c = 0; c < 4; ++c) ar.push_back(testing::ar1_series(0.9, 2500, rng));
  const double e_iid = diagnostics::effective_sample_size(iid).value;
  const double ratio = diagnostics::effective_sample_size(ar).value / 10000.0;
  const double expected = 0.1 / 1.9;
  const bool ok = e_iid >= 8500.0 && e_iid <= 11500.0 && std::abs(ratio - expected) <= 0.25 * expected;
  return {ok, fmt("iid ESS %.0f of 10000; AR(1) ESS/N %.4f vs %.4f", e_iid, ratio, expected)};
}

Outcome reproducibility(const fs::path& root) {
  cli::RunConfig c;
  c.n_chains = 4;
  c.n_samples = 100;
  c.n_burnin = 50;
  c.seed = 2024;
  bool same = true;
  std::vector<std::string> threads{"1", "4"};
  for (std::size_t run = 0; run < threads.size(); ++run) {
    ::setenv("MLDA_THREADS", threads[run].c_str(), 1);
    c.output_dir = root / ("run" + std::to_string(run));
    c.data_path.clear();
    cli::cmd_generate_data(c);
    cli::cmd_sample(c);
  }
  ::unsetenv("MLDA_THREADS");
  int files = 0;
  for (const auto& name : {"data.csv", "chain_0.csv", "chain_1.csv", "chain_2.csv", "chain_3.csv"}) {
    const auto a = slurp(root / "run0" / name), b = slurp(root / "run1" / name);
    same = same && !a.empty() && a == b;
    ++files;
  }
  return {same, fmt("%d files compared across MLDA_THREADS=1 and 4: %s", files,
                    same ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_runs";
  fs::remove_all(root);
  fs::create_directories(root);

  int failures = 0;
  const auto report = [&](int id, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
  };

  report(1, exactness);
  report(2, moments);
  report(3, solver);
  report(4, kl);
  ReferenceRuns runs;
  bool runs_ok = true;
  std::string runs_error;
  try {
    runs = reference_runs(root / "reference");
  } catch (const std::exception& e) {
    runs_ok = false;
    runs_error = e.what();
  }
  const auto need_runs = [&](Outcome (*f)(const ReferenceRuns&)) {
    return [&, f]() -> Outcome {
      if (!runs_ok) return {false, "sampling failed: " + runs_error};
      return f(runs);
    };
  };
  report(5, need_runs(reference_experiment));
  report(6, need_runs(baseline));
  report(7, perfect_surrogate);
  report(8, ess_validation);
  report(9, [&] { return reproducibility(root / "repro"); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
