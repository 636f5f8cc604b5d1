#include "mlda/darcy.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "mlda/errors.hpp"

namespace mlda::darcy {

namespace {

std::string fmt_sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(3) << v;
  return s.str();
}

using SparseMatrix = Eigen::SparseMatrix<double>;

void fix_sign(Eigen::Ref<Vector> v) {
  const double scale = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-10 * scale) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

Vector trapezoid_1d(int m) {
  Vector w = Vector::Constant(m, 1.0 / (m - 1));
  w[0] *= 0.5;
  w[m - 1] *= 0.5;
  return w;
}

}  // namespace

GridLevel::GridLevel(int level_index, int points_per_side)
    : level(level_index), m(points_per_side), h(1.0 / (points_per_side - 1)) {
  if (points_per_side < 2) throw ConfigError("a grid needs at least two points per side");
}

Eigen::MatrixX2d GridLevel::coordinates() const {
  Eigen::MatrixX2d xy(n_nodes(), 2);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) {
      xy(node(i, j), 0) = coordinate(i);
      xy(node(i, j), 1) = coordinate(j);
    }
  }
  return xy;
}

Vector GridLevel::quadrature_weights() const {
  const Vector w1 = trapezoid_1d(m);
  Vector w(n_nodes());
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < m; ++i) w[node(i, j)] = w1[i] * w1[j];
  }
  return w;
}

std::vector<GridLevel> build_grid_hierarchy(int m0, int n_levels) {
  if (m0 < 3) throw ConfigError("m0 must be at least 3");
  if (n_levels < 1) throw ConfigError("n_levels must be positive");
  std::vector<GridLevel> grids;
  int refinement = 1;
  for (int l = 0; l < n_levels; ++l) {
    grids.emplace_back(l, refinement * (m0 - 1) + 1);
    refinement *= 4;
  }
  return grids;
}

Matrix build_covariance_matrix(const Eigen::MatrixX2d& points, double sigma, double lambda) {
  if (!(sigma > 0.0) || !(lambda > 0.0)) throw ConfigError("sigma and lambda must be positive");
  const Eigen::Index n = points.rows();
  const double variance = sigma * sigma;
  const double inv_two_l2 = 1.0 / (2.0 * lambda * lambda);
  Matrix c(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    c(a, a) = variance;
    for (Eigen::Index b = 0; b < a; ++b) {
      const double d2 = (points.row(a) - points.row(b)).squaredNorm();
      c(a, b) = c(b, a) = variance * std::exp(-d2 * inv_two_l2);
    }
  }
  return c;
}

KLModes kl_decompose(const Matrix& covariance, const Vector& weights, int R) {
  const Eigen::Index n = covariance.rows();
  if (covariance.cols() != n || weights.size() != n) {
    throw ConfigError("covariance and weights must agree in size");
  }
  if (R < 1 || R > n) throw ConfigError("KL truncation must satisfy 1 <= R <= number of points");
  if ((weights.array() <= 0.0).any()) throw ConfigError("quadrature weights must be positive");

  // C W phi = mu phi  <=>  (W C W) phi = mu W phi, a symmetric-definite pencil.
  const Matrix a = weights.asDiagonal() * covariance * weights.asDiagonal();
  const Matrix b = weights.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(a, b);
  if (solver.info() != Eigen::Success) throw NumericalError("KL eigensolver failed");

  KLModes modes{Vector(R), Matrix(n, R)};
  for (int r = 0; r < R; ++r) {
    const Eigen::Index src = n - 1 - r;  // ascending order from the solver
    const double mu = solver.eigenvalues()[src];
    if (!(mu > 1e-12)) {
      throw NumericalError("KL eigenvalue " + std::to_string(r + 1) +
                           " is below 1e-12; use a smaller truncation R");
    }
    modes.eigenvalues[r] = mu;
    Vector phi = solver.eigenvectors().col(src);
    phi /= std::sqrt(phi.dot(weights.asDiagonal() * phi));
    fix_sign(phi);
    modes.eigenfunctions.col(r) = phi;
  }
  return modes;
}

KLModes kl_decompose_separable(const GridLevel& grid, double sigma, double lambda, int R) {
  const int m = grid.m;
  if (R < 1 || R > m * m) throw ConfigError("KL truncation must satisfy 1 <= R <= m^2");

  Eigen::MatrixX2d line(m, 2);
  for (int i = 0; i < m; ++i) line.row(i) << grid.coordinate(i), 0.0;
  const Matrix c1 = build_covariance_matrix(line, 1.0, lambda);
  const Vector w1 = trapezoid_1d(m);

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(
      Matrix(w1.asDiagonal() * c1 * w1.asDiagonal()), Matrix(w1.asDiagonal()));
  if (solver.info() != Eigen::Success) throw NumericalError("1-D KL eigensolver failed");
  Vector values = solver.eigenvalues().reverse();
  Matrix vectors = solver.eigenvectors().rowwise().reverse();
  for (int p = 0; p < m; ++p) {
    vectors.col(p) /= std::sqrt(vectors.col(p).dot(w1.asDiagonal() * vectors.col(p)));
    fix_sign(vectors.col(p));
  }

  struct Pair {
    double value;
    int p, q;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(m) * m);
  const double variance = sigma * sigma;
  for (int p = 0; p < m; ++p) {
    for (int q = 0; q < m; ++q) pairs.push_back({variance * values[p] * values[q], p, q});
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const Pair& a, const Pair& b) { return a.value > b.value; });

  KLModes modes{Vector(R), Matrix(grid.n_nodes(), R)};
  for (int r = 0; r < R; ++r) {
    const Pair& pr = pairs[static_cast<std::size_t>(r)];
    if (!(pr.value > 1e-12) || !(values[pr.p] > 0.0) || !(values[pr.q] > 0.0)) {
      throw NumericalError("KL eigenvalue " + std::to_string(r + 1) +
                           " is below 1e-12; use a smaller truncation R");
    }
    modes.eigenvalues[r] = pr.value;
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < m; ++i) {
        modes.eigenfunctions(grid.node(i, j), r) = vectors(i, pr.p) * vectors(j, pr.q);
      }
    }
    fix_sign(modes.eigenfunctions.col(r));
  }
  return modes;
}

Matrix restrict_basis(const Matrix& fine_values, const GridLevel& fine, const GridLevel& coarse) {
  if (fine_values.rows() != fine.n_nodes()) {
    throw ConfigError("restrict_basis: values do not match the fine grid");
  }
  if (coarse.m > fine.m || (fine.m - 1) % (coarse.m - 1) != 0) {
    throw ConfigError("restrict_basis: coarse grid is not nested in the fine grid");
  }
  const int stride = (fine.m - 1) / (coarse.m - 1);
  Matrix out(coarse.n_nodes(), fine_values.cols());
  for (int j = 0; j < coarse.m; ++j) {
    for (int i = 0; i < coarse.m; ++i) {
      out.row(coarse.node(i, j)) = fine_values.row(fine.node(i * stride, j * stride));
    }
  }
  return out;
}

Vector log_permeability_field(const ParameterVector& theta, const Vector& eigenvalues,
                              const Matrix& eigenfunctions) {
  if (theta.size() != eigenvalues.size() || eigenfunctions.cols() != eigenvalues.size()) {
    throw ConfigError("theta length must equal the KL truncation R");
  }
  return eigenfunctions * (eigenvalues.array().sqrt() * theta.array()).matrix();
}

KLBasis::KLBasis(const std::vector<GridLevel>& grids, double sigma, double lambda, int R)
    : sigma_(sigma), lambda_(lambda) {
  if (grids.empty()) throw ConfigError("KLBasis needs at least one grid");
  const GridLevel& finest = grids.back();
  KLModes modes = kl_decompose_separable(finest, sigma, lambda, R);
  eigenvalues_ = std::move(modes.eigenvalues);
  eigenfunctions_.reserve(grids.size());
  for (std::size_t l = 0; l + 1 < grids.size(); ++l) {
    eigenfunctions_.push_back(restrict_basis(modes.eigenfunctions, finest, grids[l]));
  }
  eigenfunctions_.push_back(std::move(modes.eigenfunctions));
}

Vector KLBasis::log_permeability(const ParameterVector& theta, int level) const {
  return log_permeability_field(theta, eigenvalues_, eigenfunctions(level));
}

EdgeConductivity harmonic_edge_conductivity(const Vector& log_k, const GridLevel& grid) {
  if (log_k.size() != grid.n_nodes()) throw ConfigError("log_k does not match the grid");
  if (!log_k.allFinite()) throw NumericalError("log-permeability field is not finite");
  const int m = grid.m;
  const Vector k = log_k.array().exp();
  auto harmonic = [](double a, double b) { return 2.0 * a * b / (a + b); };
  EdgeConductivity e{Vector(static_cast<Eigen::Index>(m - 1) * m),
                     Vector(static_cast<Eigen::Index>(m) * (m - 1))};
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i + 1 < m; ++i) {
      e.horizontal[j * (m - 1) + i] = harmonic(k[grid.node(i, j)], k[grid.node(i + 1, j)]);
    }
  }
  for (int j = 0; j + 1 < m; ++j) {
    for (int i = 0; i < m; ++i) {
      e.vertical[j * m + i] = harmonic(k[grid.node(i, j)], k[grid.node(i, j + 1)]);
    }
  }
  return e;
}

namespace {

// Unknowns are the nodes with 0 < i < m - 1.
int unknown_index(int i, int j, int m) { return j * (m - 2) + (i - 1); }

template <typename Emit>
void for_each_coupling(const GridLevel& grid, const EdgeConductivity& k, Emit&& emit) {
  const int m = grid.m;
  // Dual-cell faces on the no-flow rows/columns are half length.
  auto row_scale = [m](int j) { return (j == 0 || j == m - 1) ? 0.5 : 1.0; };
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i + 1 < m; ++i) {
      emit(i, j, i + 1, j, k.horizontal[j * (m - 1) + i] * row_scale(j));
    }
  }
  for (int j = 0; j + 1 < m; ++j) {
    for (int i = 1; i + 1 < m; ++i) {
      emit(i, j, i, j + 1, k.vertical[j * m + i]);
    }
  }
}

}  // namespace

DarcySolver::DarcySolver(const GridLevel& grid) : grid_(grid) {
  const int m = grid.m;
  if (m < 3) throw ConfigError("the Darcy solver needs at least 3 points per side");
  const int n = (m - 2) * m;
  EdgeConductivity ones{Vector::Ones(static_cast<Eigen::Index>(m - 1) * m),
                        Vector::Ones(static_cast<Eigen::Index>(m) * (m - 1))};
  std::vector<Eigen::Triplet<double>> triplets;
  for_each_coupling(grid, ones, [&](int i0, int j0, int i1, int j1, double) {
    const bool u0 = i0 > 0 && i0 < m - 1;
    const bool u1 = i1 > 0 && i1 < m - 1;
    if (u0 && u1) {
      const int a = unknown_index(i0, j0, m);
      const int b = unknown_index(i1, j1, m);
      triplets.emplace_back(a, b, 1.0);
      triplets.emplace_back(b, a, 1.0);
    }
  });
  for (int a = 0; a < n; ++a) triplets.emplace_back(a, a, 1.0);
  SparseMatrix pattern(n, n);
  pattern.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> inverse_perm;
  Eigen::AMDOrdering<int> amd;
  amd(pattern, inverse_perm);
  const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm = inverse_perm.inverse();
  permuted_.assign(perm.indices().data(), perm.indices().data() + n);
}

Vector DarcySolver::solve(const EdgeConductivity& k) const {
  const int m = grid_.m;
  const int n = (m - 2) * m;
  if (k.horizontal.size() != static_cast<Eigen::Index>(m - 1) * m ||
      k.vertical.size() != static_cast<Eigen::Index>(m) * (m - 1)) {
    throw ConfigError("edge conductivity does not match the grid");
  }
  if (!k.horizontal.allFinite() || !k.vertical.allFinite() || (k.horizontal.array() <= 0).any() ||
      (k.vertical.array() <= 0).any()) {
    throw NumericalError("edge conductivities must be positive and finite");
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(5 * n));
  Vector rhs = Vector::Zero(n);
  Vector diagonal = Vector::Zero(n);
  auto dirichlet_value = [m](int i) { return i == 0 ? 0.0 : (i == m - 1 ? 1.0 : -1.0); };
  for_each_coupling(grid_, k, [&](int i0, int j0, int i1, int j1, double t) {
    const bool u0 = i0 > 0 && i0 < m - 1;
    const bool u1 = i1 > 0 && i1 < m - 1;
    const int a = u0 ? permuted_[unknown_index(i0, j0, m)] : -1;
    const int b = u1 ? permuted_[unknown_index(i1, j1, m)] : -1;
    if (u0) diagonal[a] += t;
    if (u1) diagonal[b] += t;
    if (u0 && u1) {
      triplets.emplace_back(std::max(a, b), std::min(a, b), -t);
    } else if (u0) {
      rhs[a] += t * dirichlet_value(i1);
    } else if (u1) {
      rhs[b] += t * dirichlet_value(i0);
    }
  });
  for (int a = 0; a < n; ++a) triplets.emplace_back(a, a, diagonal[a]);
  SparseMatrix lower(n, n);
  lower.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> llt;
  llt.compute(lower);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("Darcy system factorization failed (m = " + std::to_string(m) +
                         ", min/max edge k = " +
                         std::to_string(std::min(k.horizontal.minCoeff(), k.vertical.minCoeff())) +
                         "/" +
                         std::to_string(std::max(k.horizontal.maxCoeff(), k.vertical.maxCoeff())) +
                         ")");
  }
  Vector x = llt.solve(rhs);
  const double rhs_norm = std::max(rhs.norm(), std::numeric_limits<double>::min());
  Vector residual = rhs - lower.selfadjointView<Eigen::Lower>() * x;
  double rel = residual.norm() / rhs_norm;
  // High-contrast fields can leave the direct solve just short of the
  // tolerance; a few refinement sweeps reuse the factorization.
  for (int sweep = 0; sweep < 3 && !(rel <= 1e-10); ++sweep) {
    x += llt.solve(residual);
    residual = rhs - lower.selfadjointView<Eigen::Lower>() * x;
    rel = residual.norm() / rhs_norm;
  }
  if (!(rel <= 1e-10)) {
    throw NumericalError("Darcy solve relative residual " + fmt_sci(rel) +
                         " exceeds 1e-10 (m = " + std::to_string(m) + ")");
  }

  Vector p(grid_.n_nodes());
  for (int j = 0; j < m; ++j) {
    p[grid_.node(0, j)] = 0.0;
    p[grid_.node(m - 1, j)] = 1.0;
    for (int i = 1; i + 1 < m; ++i) p[grid_.node(i, j)] = x[permuted_[unknown_index(i, j, m)]];
  }
  return p;
}

Vector solve_darcy(const Vector& log_k, const GridLevel& grid) {
  return DarcySolver(grid).solve(log_k);
}

Vector solve_darcy(const EdgeConductivity& k, const GridLevel& grid) {
  return DarcySolver(grid).solve(k);
}

ObservationOperator::ObservationOperator(Eigen::MatrixX2d locations)
    : locations_(std::move(locations)) {
  if (locations_.rows() == 0) throw ConfigError("at least one observation location is required");
  for (Eigen::Index r = 0; r < locations_.rows(); ++r) {
    for (int c = 0; c < 2; ++c) {
      const double v = locations_(r, c);
      if (!(v > 0.0 && v < 1.0)) {
        throw ConfigError("observation location " + std::to_string(r) +
                          " is not strictly inside the unit square");
      }
    }
  }
}

ObservationOperator ObservationOperator::lattice(int per_side) {
  if (per_side < 1) throw ConfigError("observation lattice needs at least one point per side");
  Eigen::MatrixX2d xy(per_side * per_side, 2);
  for (int j = 0; j < per_side; ++j) {
    for (int i = 0; i < per_side; ++i) {
      xy(j * per_side + i, 0) = static_cast<double>(i + 1) / (per_side + 1);
      xy(j * per_side + i, 1) = static_cast<double>(j + 1) / (per_side + 1);
    }
  }
  return ObservationOperator(std::move(xy));
}

double interpolate(const Vector& nodal, const GridLevel& grid, double x1, double x2) {
  if (!(x1 >= 0.0 && x1 <= 1.0 && x2 >= 0.0 && x2 <= 1.0)) {
    throw ConfigError("interpolation point outside the unit square");
  }
  const int cells = grid.m - 1;
  auto locate = [cells](double x, int& cell, double& t) {
    const double s = x * cells;
    cell = std::min(static_cast<int>(std::floor(s)), cells - 1);
    t = s - cell;
  };
  int ci, cj;
  double tx, ty;
  locate(x1, ci, tx);
  locate(x2, cj, ty);
  const double v00 = nodal[grid.node(ci, cj)];
  const double v10 = nodal[grid.node(ci + 1, cj)];
  const double v01 = nodal[grid.node(ci, cj + 1)];
  const double v11 = nodal[grid.node(ci + 1, cj + 1)];
  if (tx == 0.0 && ty == 0.0) return v00;
  return (1.0 - tx) * (1.0 - ty) * v00 + tx * (1.0 - ty) * v10 + (1.0 - tx) * ty * v01 +
         tx * ty * v11;
}

Vector ObservationOperator::observe(const Vector& pressure, const GridLevel& grid) const {
  if (pressure.size() != grid.n_nodes()) throw ConfigError("pressure does not match the grid");
  Vector out(size());
  for (Eigen::Index r = 0; r < size(); ++r) {
    out[r] = interpolate(pressure, grid, locations_(r, 0), locations_(r, 1));
  }
  return out;
}

DarcyProblem::DarcyProblem(const DarcyConfig& config) {
  if (config.kl_modes < 1) throw ConfigError("kl_modes must be positive");
  auto grids = build_grid_hierarchy(config.m0, config.n_levels);
  KLBasis basis(grids, config.sigma, config.lambda, config.kl_modes);
  auto observations = ObservationOperator::lattice(config.observations_per_side);
  std::vector<DarcySolver> solvers;
  solvers.reserve(grids.size());
  for (const auto& g : grids) solvers.emplace_back(g);
  state_ = std::make_shared<const State>(
      State{config, std::move(grids), std::move(basis), std::move(observations),
            std::move(solvers)});
}

Vector DarcyProblem::log_permeability(const ParameterVector& theta, int level) const {
  return state_->basis.log_permeability(theta, level);
}

Vector DarcyProblem::pressure(const ParameterVector& theta, int level) const {
  return state_->solvers.at(static_cast<std::size_t>(level)).solve(log_permeability(theta, level));
}

Vector DarcyProblem::forward(const ParameterVector& theta, int level) const {
  return state_->observations.observe(pressure(theta, level), grid(level));
}

ForwardMap DarcyProblem::forward_map(int level) const {
  if (level < 0 || level >= n_levels()) throw ConfigError("forward_map: level out of range");
  return [problem = *this, level](const ParameterVector& theta) {
    return problem.forward(theta, level);
  };
}

ModelHierarchy DarcyProblem::hierarchy(const std::vector<int>& subchain_lengths,
                                       GaussianNoiseModel noise, Vector data) const {
  if (static_cast<int>(subchain_lengths.size()) != n_levels() - 1) {
    throw ConfigError("expected " + std::to_string(n_levels() - 1) + " subchain lengths");
  }
  std::vector<LevelSpec> levels;
  for (int l = 0; l < n_levels(); ++l) {
    levels.push_back({forward_map(l), l + 1 < n_levels() ? subchain_lengths[l] : 1});
  }
  return ModelHierarchy(std::move(levels), std::move(noise), std::move(data));
}

SyntheticData generate_synthetic_data(const ParameterVector& theta_true,
                                      const DarcyProblem& problem,
                                      const GaussianNoiseModel& noise, Rng& rng) {
  SyntheticData out;
  out.theta_true = theta_true;
  out.clean = problem.forward(theta_true, problem.n_levels() - 1);
  if (noise.size() != out.clean.size()) {
    throw ConfigError("noise dimension does not match the number of observations");
  }
  const Eigen::LLT<Matrix> llt(noise.covariance());
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(noise.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  out.observed = out.clean + noise.mean_shift() + llt.matrixL() * z;
  return out;
}

void write_nodal_csv(std::ostream& out, const Vector& field, const GridLevel& grid,
                     const std::string& quantity) {
  if (field.size() != grid.n_nodes()) throw ConfigError("field does not match the grid");
  out << "level=" << grid.level << ",m=" << grid.m << ",quantity=" << quantity << '\n';
  out << std::setprecision(17);
  for (int j = 0; j < grid.m; ++j) {
    for (int i = 0; i < grid.m; ++i) {
      if (i) out << ',';
      out << field[grid.node(i, j)];
    }
    out << '\n';
  }
}

}  // namespace mlda::darcy
