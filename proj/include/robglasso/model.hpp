#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>

namespace robglasso {

// ---------------------------------------------------------------------------
// Scalar normal kernels.
// ---------------------------------------------------------------------------

double std_normal_pdf(double x);
double std_normal_cdf(double x);

// Inverse of std_normal_cdf on (0, 1); throws std::domain_error outside.
double std_normal_quantile(double p);

// P(X <= x, Y <= y) for a standard bivariate normal pair with correlation
// rho. Absolute error <= 1e-10. x and y may be +/-infinity sentinels;
// rho outside [-1, 1] or NaN input is a domain error. Arguments are
// canonicalised before integrating, so the function is exactly symmetric
// in (x, y).
double std_bivariate_cdf(double x, double y, double rho);

// ---------------------------------------------------------------------------
// Quadrature rules.
// ---------------------------------------------------------------------------

struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

// Gauss-Hermite rule normalised for N(0,1): sum(w) = 1, sum(w x^2) = 1.
// Exact for polynomials up to degree 2*order - 1. order >= 1.
QuadratureRule gauss_hermite(int order);

// Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre(int order);

// Adaptive panel integration of f on [a, b] to absolute tolerance abs_tol.
// Error estimate per panel from a nested Gauss-Legendre pair.
double integrate_adaptive(const std::function<double(double)>& f, double a,
                          double b, double abs_tol);

// ---------------------------------------------------------------------------
// Model and contamination descriptors.
// ---------------------------------------------------------------------------

// Centered p-variate Gaussian reference model N(0, Sigma).
// The mean is fixed at zero throughout; no location functional is estimated.
class GaussianModel {
 public:
  // Validates symmetry and positive definiteness (min eigenvalue > 1e-10).
  explicit GaussianModel(Eigen::MatrixXd sigma);

  // The 3x3 Toeplitz example model with Sigma_ij = 2^-|i-j|; its precision
  // matrix has exact zeros at (1,3)/(3,1). Used by the "paper-toeplitz"
  // CLI preset and throughout the test suite.
  static GaussianModel toeplitz3();

  int dim() const { return static_cast<int>(sigma_.rows()); }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  const Eigen::MatrixXd& precision() const { return omega_; }
  const Eigen::MatrixXd& cholesky_factor() const { return chol_; }

  double marginal_sigma(int j) const;      // sqrt(Sigma_jj)
  double pair_rho(int j, int k) const;     // Sigma_jk / (sigma_j sigma_k)

  // n x p matrix of draws from N(0, Sigma). Fully deterministic in seed:
  // mt19937_64 bits mapped to (0,1) uniforms, then the normal quantile,
  // then the Cholesky factor. Identical output for identical seeds on any
  // conforming platform.
  Eigen::MatrixXd sample(int n, std::uint64_t seed) const;

 private:
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd omega_;
  Eigen::MatrixXd chol_;  // lower triangular, sigma = chol chol^T
};

// Point-mass contamination location, optionally with a fixed mass.
struct ContaminationPoint {
  Eigen::VectorXd z;
  std::optional<double> eps;  // in (0, 1) when present

  void validate(int dim) const;  // throws std::domain_error on violation
};

// How an integral over the model distribution is to be evaluated.
struct QuadratureSpec {
  enum class Rule { TensorGaussHermite, MonteCarlo };

  Rule rule = Rule::TensorGaussHermite;
  int order = 24;            // per-axis order, tensor GH (>= 8)
  long samples = 200000;     // Monte Carlo draws (>= 10^4)
  std::uint64_t seed = 1;
  double abs_tol = 1e-9;

  static QuadratureSpec tensor_gh(int order);
  static QuadratureSpec monte_carlo(long samples, std::uint64_t seed);
  void validate() const;
};

// Deterministic per-stream seed derivation (splitmix64 mix of base and
// stream index). Disjoint streams for parallel replications.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace robglasso
