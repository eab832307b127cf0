#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "robglasso/model.hpp"

namespace robglasso {

// Scatter functionals that can be plugged into the penalised likelihood:
// the classical covariance, four pairwise robust correlation estimators
// assembled with Qn scales, and FastMCD. FastMCD has a finite-sample path
// only; everything else also has a population (functional) path.
enum class PluginKind {
  Classical,
  GaussRank,
  Spearman,
  Kendall,
  Quadrant,
  FastMCD,
};

// Canonical lower-case name, e.g. "gauss-rank".
const char* plugin_name(PluginKind kind);

// Inverse of plugin_name; also accepts the undashed spelling. Unknown names
// are a ConfigError.
PluginKind plugin_kind_from_name(const std::string& name);

// One-dimensional law (1 - eps) N(0, sigma^2) + eps Delta(z).
// eps = 0 describes the clean marginal.
struct UnivariateMixture {
  double sigma = 1.0;
  double eps = 0.0;
  double z = 0.0;

  void validate() const;
  double cdf(double t) const;
  // Smallest m with cdf(m) >= 1/2; equals z when 1/2 falls in the atom's
  // jump, otherwise found by bisection on the continuous part.
  double median() const;
};

// Two-dimensional law (1 - eps) N2(0, C) + eps Delta((z_j, z_k)) where C has
// unit-free scales sigma_j, sigma_k and correlation rho.
struct BivariateMixture {
  double rho = 0.0;
  double sigma_j = 1.0;
  double sigma_k = 1.0;
  double eps = 0.0;
  double z_j = 0.0;
  double z_k = 0.0;

  void validate() const;
  UnivariateMixture margin_j() const { return {sigma_j, eps, z_j}; }
  UnivariateMixture margin_k() const { return {sigma_k, eps, z_k}; }
};

struct CorrelationValue {
  double raw = 0.0;          // functional value, in [-1, 1]
  double transformed = 0.0;  // after the Fisher-consistency transform
  PluginKind kind = PluginKind::GaussRank;
};

// Qn scale functional c H^-1(1/4), where H is the CDF of |X1 - X2| for
// independent copies X1, X2 from the marginal and c = 1/(sqrt(2) qnorm(5/8))
// makes the value equal sigma at N(0, sigma^2).
double qn_scale_functional(const UnivariateMixture& marginal);

// Population value of the pairwise correlation functional of the given kind
// under the (possibly contaminated) bivariate law. kind must be one of
// GaussRank, Spearman, Kendall, Quadrant.
CorrelationValue correlation_functional(PluginKind kind,
                                        const BivariateMixture& pair);

// Fisher-consistency transform at the normal model: 2 sin(pi r / 6) for
// Spearman, sin(pi r / 2) for Kendall and Quadrant, identity for GaussRank.
double fisher_transform(PluginKind kind, double r);

// Pairwise covariance functional: diagonal entries are squared Qn scales,
// off-diagonal entries sigma_j sigma_k times the transformed correlation.
// A null contamination evaluates the clean model; a contamination point must
// carry its mass. Classical delegates to classical_cov.
Eigen::MatrixXd pairwise_cov(PluginKind kind, const GaussianModel& model,
                             const ContaminationPoint* contamination = nullptr);

// Covariance functional of the contaminated law: (1-e) Sigma + e(1-e) z z^T,
// the mean-adjusted second moment of the mixture.
Eigen::MatrixXd classical_cov(const GaussianModel& model,
                              const ContaminationPoint* contamination = nullptr);

// Frobenius projection onto matrices with eigenvalues >= 1e-8, applied only
// when the input has a negative eigenvalue; PSD inputs pass through
// unchanged.
Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& m);

struct FastMCDOptions {
  double subset_fraction = 0.75;  // h = ceil(fraction * n), in (0.5, 1)
  bool reweight = false;          // append the 97.5% chi-square reweight step
  double reweight_cutoff = 0.975;
  int starts = 500;               // elemental subsets, >= 1
  std::uint64_t seed = 1;

  void validate() const;
};

struct FastMCDDiagnostics {
  double best_determinant = 0.0;  // determinant of the raw subset covariance
  int c_steps = 0;                // total concentration steps across starts
};

// Raw (optionally reweighted) FastMCD scatter estimate, consistency-scaled
// for the normal model. Deterministic in options.seed.
Eigen::MatrixXd fast_mcd(const Eigen::MatrixXd& data,
                         const FastMCDOptions& options = {},
                         FastMCDDiagnostics* diagnostics = nullptr);

// Finite-sample estimate of the plug-in covariance on an n x p data matrix.
// Pairwise kinds use rank/sign statistics per pair and finite-sample Qn
// scales, then the Fisher transform, then psd_repair. Classical is the
// maximum-likelihood sample covariance. FastMCD delegates to fast_mcd.
Eigen::MatrixXd finite_sample_estimate(PluginKind kind,
                                       const Eigen::MatrixXd& data,
                                       const FastMCDOptions& options = {});

// Finite-sample Qn scale of one column: the k-th order statistic of the
// pairwise absolute differences, k = C(h, 2) with h = floor(n/2) + 1,
// scaled for consistency (small-sample correction below n = 100).
double qn_scale_estimate(const Eigen::VectorXd& x);

// Regularised chi-square CDF and quantile (used by the FastMCD consistency
// and reweighting factors; exposed for tests).
double chi_squared_cdf(double x, double dof);
double chi_squared_quantile(double p, double dof);

}  // namespace robglasso
