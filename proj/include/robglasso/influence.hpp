#pragma once

#include <Eigen/Dense>

#include "robglasso/contamination.hpp"
#include "robglasso/cov_plugins.hpp"
#include "robglasso/glasso.hpp"
#include "robglasso/model.hpp"

namespace robglasso {

// Influence function of the penalised precision functional at one
// contamination location. The active entries solve the restricted linearised
// stationarity system; entries off the support are exactly zero because the
// penalty keeps them pinned under infinitesimal contamination.
struct InfluenceEvaluation {
  Eigen::VectorXd z;
  Eigen::MatrixXd matrix;          // p x p, symmetric, zero off the support
  double frobenius_norm = 0.0;
  PluginIF plugin;                 // plug-in influence that was propagated
  SupportPermutation permutation;  // support ordering of the restricted system
  double condition = 0.0;          // spectral condition of the restricted block
};

// Support-restricted block of W (x) W with W the inverse of estimate.omega,
// in the ordering of d: the linear response operator of the penalised fixed
// point on its support. Throws NumericalError when the estimate is not
// positive definite.
Eigen::MatrixXd restricted_kron(const PrecisionEstimate& estimate,
                                const SupportPermutation& d);

// Propagates a plug-in covariance influence through the penalised solve:
// with W the inverse of estimate.omega and K the support-restricted block of
// W (x) W, the active influence entries are -K^-1 times the restricted
// vectorised plug-in influence. d must order the support of estimate (use
// full_support_permutation for the unpenalised problem, where no entry is
// pinned). Throws NumericalError, reporting the condition estimate, when the
// restricted block is numerically singular.
InfluenceEvaluation glasso_if(const PrecisionEstimate& estimate,
                              const SupportPermutation& d,
                              const PluginIF& plugin);

// Definitional oracle: Richardson-extrapolated difference quotient of the
// penalised solve along the contamination path, using the same step pair as
// plugin_if so step bias common to both cancels in comparisons. Solver and
// functional failures propagate.
Eigen::MatrixXd glasso_if_fd(const GaussianModel& model, PluginKind kind,
                             const PenaltySpec& penalty,
                             const Eigen::VectorXd& z,
                             double coarse_step = kIFCoarseStep,
                             double fine_step = kIFFineStep);

// Upper bound on the Frobenius norm of the propagated influence over any
// contamination set on which the plug-in influence norm stays within
// plugin_ges: the operator norm of the restricted inverse times plugin_ges.
double ges_bound(const PrecisionEstimate& estimate,
                 const SupportPermutation& d, double plugin_ges);

// Worst contamination direction for the unpenalised classical estimator.
struct MaxDirection {
  Eigen::VectorXd direction;      // unit eigenvector attaining the maximum
  double max_value = 0.0;         // sup over unit z of the squared norm
  double lambda_max = 0.0;        // extreme eigenvalues of omega
  double lambda_min = 0.0;
};

// For the unpenalised classical functional at precision omega, the squared
// influence norm at a unit contamination location z is
//   (z^T omega^2 z)^2 - 2 z^T omega^3 z + sum_i lambda_i^2,
// which on an eigendirection reduces to sum_i lambda_i^2 + g(lambda) with
// g(x) = x^4 - 2 x^3. The supremum over the sphere is attained at the
// eigenvector of an extreme eigenvalue: the largest when
// g(lambda_max) >= g(lambda_min) (ties go to the largest), the smallest
// otherwise. The returned direction has a deterministic sign: its
// largest-magnitude component is positive.
MaxDirection max_direction_unpenalized(const Eigen::MatrixXd& omega);

}  // namespace robglasso
