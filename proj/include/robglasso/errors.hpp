#pragma once

#include <stdexcept>
#include <string>

namespace robglasso {

// Numerical failure: a computation could not reach its accuracy contract
// (ill-conditioned restricted system, unstable difference quotient, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative solver hit its iteration cap before meeting tolerance.
class IterationLimitError : public NumericalError {
 public:
  IterationLimitError(const std::string& what, double residual)
      : NumericalError(what), last_residual(residual) {}
  double last_residual;
};

// A quadrature or Monte Carlo evaluation exhausted its configured budget.
class BudgetError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Invalid user-facing configuration (CLI / config file); names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace robglasso
