#pragma once

// Nested structured-grid hierarchy for steady Darcy flow on the unit square
// with a log-Gaussian permeability parametrized by a truncated KL expansion.
//
// Nodes are numbered row-major: node (i, j) sits at (i h, j h) with index
// j * m + i, i running along x1. Pressure is fixed to 0 at x1 = 0 and 1 at
// x1 = 1; the top and bottom edges are no-flow.

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlda/hierarchy.hpp"
#include "mlda/kernel.hpp"

namespace mlda::darcy {

struct GridLevel {
  int level = 0;
  int m = 0;  // points per side
  double h = 0.0;

  GridLevel() = default;
  GridLevel(int level_index, int points_per_side);

  Eigen::Index n_nodes() const noexcept { return static_cast<Eigen::Index>(m) * m; }
  Eigen::Index node(int i, int j) const noexcept {
    return static_cast<Eigen::Index>(j) * m + i;
  }
  /// i / (m - 1); exact division keeps shared nodes bitwise identical across levels.
  double coordinate(int i) const noexcept { return static_cast<double>(i) / (m - 1); }
  /// n_nodes x 2 matrix of (x1, x2).
  Eigen::MatrixX2d coordinates() const;
  /// Tensor-product trapezoidal weights; they sum to 1.
  Vector quadrature_weights() const;
};

/// m_l = 4^l (m0 - 1) + 1 points per side for l = 0 .. n_levels - 1.
std::vector<GridLevel> build_grid_hierarchy(int m0, int n_levels);

/// C(x, y) = sigma^2 exp(-|x - y|^2 / (2 lambda^2)).
Matrix build_covariance_matrix(const Eigen::MatrixX2d& points, double sigma, double lambda);

/// Leading eigenpairs of the covariance operator: C W phi = mu phi with
/// phi^T W phi = 1, eigenvalues descending, each phi signed so its first
/// non-negligible entry is positive.
struct KLModes {
  Vector eigenvalues;
  Matrix eigenfunctions;  // one column per mode
};

/// Dense generalized symmetric eigenproblem. Throws NumericalError if an
/// eigenvalue at or below 1e-12 is reached before R modes.
KLModes kl_decompose(const Matrix& covariance, const Vector& weights, int R);

/// Same eigenproblem on a full tensor grid, using that the squared-exponential
/// kernel and the trapezoidal weights both factor over x1 and x2: modes are
/// products of 1-D modes. Ties are ordered by (x1 mode, x2 mode) index.
KLModes kl_decompose_separable(const GridLevel& grid, double sigma, double lambda, int R);

/// Subsample nodal values of a nested finer grid onto `coarse`. Works
/// column-wise on a matrix of nodal vectors. Throws ConfigError if not nested.
Matrix restrict_basis(const Matrix& fine_values, const GridLevel& fine, const GridLevel& coarse);

/// sum_i sqrt(mu_i) phi_i theta_i at the nodes.
Vector log_permeability_field(const ParameterVector& theta, const Vector& eigenvalues,
                              const Matrix& eigenfunctions);

/// KL basis defined on the finest grid and restricted to every coarser one.
class KLBasis {
 public:
  KLBasis(const std::vector<GridLevel>& grids, double sigma, double lambda, int R);

  int truncation() const noexcept { return static_cast<int>(eigenvalues_.size()); }
  double sigma() const noexcept { return sigma_; }
  double lambda() const noexcept { return lambda_; }
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }
  const Matrix& eigenfunctions(int level) const {
    return eigenfunctions_.at(static_cast<std::size_t>(level));
  }
  Vector log_permeability(const ParameterVector& theta, int level) const;

 private:
  double sigma_;
  double lambda_;
  Vector eigenvalues_;
  std::vector<Matrix> eigenfunctions_;
};

/// Permeability on grid edges. horizontal: (m-1) * m entries, index
/// j * (m-1) + i for edge (i,j)-(i+1,j). vertical: m * (m-1) entries, index
/// j * m + i for edge (i,j)-(i,j+1).
struct EdgeConductivity {
  Vector horizontal;
  Vector vertical;
};

/// Harmonic mean of k = exp(log k) at the two end nodes of each edge.
EdgeConductivity harmonic_edge_conductivity(const Vector& log_k, const GridLevel& grid);

/// Vertex-centred five-point finite-volume solver for -div(k grad p) = 0. The
/// fill-reducing ordering is computed once; solve() is const and reentrant.
class DarcySolver {
 public:
  explicit DarcySolver(const GridLevel& grid);

  const GridLevel& grid() const noexcept { return grid_; }

  /// Nodal pressure. Throws NumericalError if the factorization fails or the
  /// relative residual exceeds 1e-10.
  Vector solve(const EdgeConductivity& k) const;
  Vector solve(const Vector& log_k) const { return solve(harmonic_edge_conductivity(log_k, grid_)); }

 private:
  GridLevel grid_;
  std::vector<int> permuted_;  // unknown -> position in the factorized system
};

Vector solve_darcy(const Vector& log_k, const GridLevel& grid);
Vector solve_darcy(const EdgeConductivity& k, const GridLevel& grid);

/// Point observations of the pressure by bilinear interpolation.
class ObservationOperator {
 public:
  /// Throws ConfigError unless every location lies in the open unit square.
  explicit ObservationOperator(Eigen::MatrixX2d locations);

  /// per_side^2 locations at {1, ..., per_side} / (per_side + 1) in each direction.
  static ObservationOperator lattice(int per_side);

  Eigen::Index size() const noexcept { return locations_.rows(); }
  const Eigen::MatrixX2d& locations() const noexcept { return locations_; }

  Vector observe(const Vector& pressure, const GridLevel& grid) const;

 private:
  Eigen::MatrixX2d locations_;
};

/// Bilinear interpolation of nodal values at one point of [0,1]^2.
double interpolate(const Vector& nodal, const GridLevel& grid, double x1, double x2);

struct DarcyConfig {
  int m0 = 5;
  int n_levels = 3;
  int kl_modes = 24;
  double sigma = 2.0;
  double lambda = 0.3;
  int observations_per_side = 5;
};

/// The assembled benchmark: grids, KL basis, per-level solvers and the
/// observation operator. Cheap to copy; forward maps share the state.
class DarcyProblem {
 public:
  explicit DarcyProblem(const DarcyConfig& config);

  const DarcyConfig& config() const noexcept { return state_->config; }
  int n_levels() const noexcept { return static_cast<int>(state_->grids.size()); }
  const GridLevel& grid(int level) const {
    return state_->grids.at(static_cast<std::size_t>(level));
  }
  const std::vector<GridLevel>& grids() const noexcept { return state_->grids; }
  const KLBasis& basis() const noexcept { return state_->basis; }
  const ObservationOperator& observations() const noexcept { return state_->observations; }

  Vector log_permeability(const ParameterVector& theta, int level) const;
  Vector pressure(const ParameterVector& theta, int level) const;
  /// F_level(theta): observed pressure.
  Vector forward(const ParameterVector& theta, int level) const;
  ForwardMap forward_map(int level) const;

  /// Levels 0..L with the given subchain lengths (size n_levels - 1).
  ModelHierarchy hierarchy(const std::vector<int>& subchain_lengths, GaussianNoiseModel noise,
                           Vector data) const;

 private:
  struct State {
    DarcyConfig config;
    std::vector<GridLevel> grids;
    KLBasis basis;
    ObservationOperator observations;
    std::vector<DarcySolver> solvers;
  };
  std::shared_ptr<const State> state_;
};

struct SyntheticData {
  ParameterVector theta_true;
  Vector clean;  // F_L(theta_true)
  Vector observed;
};

/// d_obs = F_L(theta_true) + eps, eps ~ N(mu_eps, Sigma_eps).
SyntheticData generate_synthetic_data(const ParameterVector& theta_true,
                                      const DarcyProblem& problem,
                                      const GaussianNoiseModel& noise, Rng& rng);

/// One header line `level=<l>,m=<m>,quantity=<name>` followed by m rows of m
/// values (row j holds x2 = j h), 17 significant digits.
void write_nodal_csv(std::ostream& out, const Vector& field, const GridLevel& grid,
                     const std::string& quantity);

}  // namespace mlda::darcy
