#pragma once

#include <Eigen/Dense>
#include <vector>

namespace robglasso {

struct PenaltySpec {
  double lambda = 0.0;
  double tolerance = 1e-10;         // KKT residual stopping threshold
  int max_iterations = 20000;       // cap on outer column sweeps
  double support_tolerance = 1e-7;  // |omega_ij| above this counts as support

  void validate() const;
};

struct PrecisionEstimate {
  Eigen::MatrixXd omega;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support;
  double kkt_residual = 0.0;
  double objective = 0.0;
};

// Permutation of vec(omega) indices that lists the support entries first.
// Slots 0..s-1 hold the vec indices of nonzero entries in ascending
// column-major order, slots s.. hold the zero entries; permute followed by
// unpermute is the identity.
struct SupportPermutation {
  std::vector<int> perm;  // perm[slot] = vec index
  int nonzero_count = 0;

  int dim2() const { return static_cast<int>(perm.size()); }
  Eigen::VectorXd permute(const Eigen::VectorXd& v) const;
  Eigen::VectorXd unpermute(const Eigen::VectorXd& v) const;
  // Conjugation of a p^2 x p^2 matrix: out(a, b) = m(perm[a], perm[b]).
  Eigen::MatrixXd conjugate(const Eigen::MatrixXd& m) const;
};

// Penalised negative Gaussian log-likelihood
//   -logdet(omega) + tr(s omega) + lambda * sum_{i != j} |omega_ij|
// minimised over symmetric positive definite omega; the diagonal is not
// penalised. Primal block coordinate descent over rows/columns with an
// inner l1 coordinate descent subproblem; stops when the stationarity
// residual drops below penalty.tolerance.
//
// For lambda = 0 the input must be positive definite. Indefinite inputs are
// accepted for lambda > 0 as long as the diagonal is positive; the logdet
// barrier keeps iterates positive definite.
PrecisionEstimate glasso_solve(const Eigen::MatrixXd& s,
                               const PenaltySpec& penalty);

// Max-norm violation of the stationarity conditions at omega:
//   (omega^-1)_ii = s_ii,
//   (omega^-1 - s)_ij = lambda * sign(omega_ij)   for omega_ij != 0,
//   |(omega^-1 - s)_ij| <= lambda                 for omega_ij == 0.
double kkt_residual(const Eigen::MatrixXd& s, double lambda,
                    const Eigen::MatrixXd& omega);

double glasso_objective(const Eigen::MatrixXd& s, double lambda,
                        const Eigen::MatrixXd& omega);

SupportPermutation support_permutation(const PrecisionEstimate& estimate,
                                       double tol = 1e-7);

// Identity permutation treating every entry as support. This is the right
// restriction for the unpenalised problem, where zero estimate entries are
// not protected by any penalty slack and perturbations move them freely.
SupportPermutation full_support_permutation(int p);

}  // namespace robglasso
