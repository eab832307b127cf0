#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "robglasso/cov_plugins.hpp"
#include "robglasso/glasso.hpp"
#include "robglasso/model.hpp"

namespace robglasso {

// Asymptotic variance of a plug-in covariance functional under the clean
// model: the p^2 x p^2 second-moment matrix of the vectorised influence
// function, integrated over the model distribution.
struct ASVMatrix {
  Eigen::MatrixXd value;      // p^2 x p^2, symmetric PSD within round-off
  Eigen::MatrixXd mc_stderr;  // entrywise standard errors; empty for quadrature
  QuadratureSpec quadrature;  // spec the integral was evaluated with
  std::string method;         // "tensor-gauss-hermite" or "monte-carlo"
  long samples_dropped = 0;   // Monte Carlo draws rejected by plugin_if
};

// Integrates vec(IF(z)) vec(IF(z))^T over the clean model. Smooth kinds use
// the tensor Gauss-Hermite rule; Quadrant has a discontinuous influence at
// the coordinate axes and must use the Monte Carlo rule (anything else is a
// ConfigError). FastMCD has no functional influence path (domain error).
// The influence function is even in z (reflecting the contamination point
// reflects the sample space), so even-order tensor grids evaluate only one
// node of each antipodal pair.
//
// Monte Carlo draws landing so close to a coordinate axis that the
// difference quotients of plugin_if straddle a median kink are dropped and
// counted in samples_dropped; the influence is bounded there, so the bias is
// below the reported standard errors as long as drops stay rare. More than
// 0.5% dropped is a NumericalError. Quadrature node failures are always
// errors.
ASVMatrix plugin_asv(PluginKind kind, const GaussianModel& model,
                     const QuadratureSpec& quad = {});

// Propagates the plug-in ASV through the penalised estimating equations:
// with A the inverse of the support-restricted Kronecker system of
// restricted_kron, returns A * (restricted plug-in ASV) * A^T, the s x s
// asymptotic covariance of the on-support precision entries ordered like d.
// Conditioning failures raise NumericalError exactly as in glasso_if.
Eigen::MatrixXd glasso_asv(const PrecisionEstimate& estimate,
                           const SupportPermutation& d,
                           const Eigen::MatrixXd& plugin_asv_matrix);

struct EfficiencyOptions {
  int smooth_order = 24;      // per-axis tensor Gauss-Hermite order
  long mc_samples = 200000;   // total Monte Carlo draws for Quadrant
  int mc_batches = 20;        // batch means behind the ratio standard error
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError on violation
};

struct EfficiencyEntry {
  int row = 0;  // precision-matrix component, 0-based
  int col = 0;
  PluginKind kind = PluginKind::Classical;
  double asv = 0.0;        // propagated ASV of this component
  double efficiency = 0.0; // classical ASV over this kind's ASV
  double mc_stderr = 0.0;  // standard error of the ratio; 0 when deterministic
  std::string method;
};

// Relative efficiencies of penalised precision estimates built on the given
// plug-ins, one entry per (kind, component), kinds outer, components in the
// order given. Asymptotic normality of the underlying functionals is assumed
// rather than proven, as the bahadur_assumed flag records.
struct EfficiencyTable {
  std::vector<EfficiencyEntry> entries;
  double lambda = 0.0;
  bool bahadur_assumed = true;

  // CSV with header component,kind,asv,efficiency,mc_stderr,method, one row
  // per entry, components rendered 1-based as "row:col", numbers at 17
  // significant digits with '.' decimal point.
  std::string csv() const;
};

// Components must lie on the support of the penalised solution at this
// penalty; kinds must have a functional influence path (FastMCD does not).
// Violations are ConfigErrors. Classical rows have efficiency exactly 1.
EfficiencyTable efficiency_table(
    const GaussianModel& model, const PenaltySpec& penalty,
    const std::vector<PluginKind>& kinds,
    const std::vector<std::pair<int, int>>& components,
    const EfficiencyOptions& options = {});

}  // namespace robglasso
