#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mlda {

/// Invalid user or programmatic configuration (bad sizes, non-SPD noise, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (factorization, solver residual, truncation).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A forward-map or density evaluation failed at a specific parameter value.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, int level, Eigen::VectorXd theta)
      : std::runtime_error(what), level_(level), theta_(std::move(theta)) {}

  int level() const noexcept { return level_; }
  const Eigen::VectorXd& theta() const noexcept { return theta_; }

 private:
  int level_;
  Eigen::VectorXd theta_;
};

}  // namespace mlda
