#pragma once

#include <Eigen/Dense>
#include <vector>

#include "robglasso/cov_plugins.hpp"
#include "robglasso/model.hpp"

namespace robglasso {

// How an influence matrix was obtained.
enum class IFMethod {
  ClosedForm,         // analytic expression, no differentiation step
  CentralDifference,  // Richardson-extrapolated contamination derivative
};

// Influence function of a plug-in covariance functional at one contamination
// location: the epsilon-derivative of the functional along the point-mass
// mixture path. The matrix is symmetric with finite entries.
struct PluginIF {
  Eigen::VectorXd z;
  Eigen::MatrixXd matrix;
  IFMethod method = IFMethod::CentralDifference;
  double step = 0.0;           // coarse step of the Richardson pair, 0 if closed form
  double step_rel_diff = 0.0;  // relative gap between the two difference quotients
  bool step_stable = true;     // gap within kIFStepFlagTol
};

// Richardson pair for the numerical contamination derivative and the two
// thresholds on the relative gap between its difference quotients: past the
// first the result is flagged, past the second it is rejected.
inline constexpr double kIFCoarseStep = 1e-4;
inline constexpr double kIFFineStep = 5e-5;
inline constexpr double kIFStepFlagTol = 1e-3;
inline constexpr double kIFStepErrorTol = 1e-2;

// Growth-ratio ceiling under which a gross-error scan reports the kind as
// bounded over the scanned radii.
inline constexpr double kGESBoundedRatio = 1.2;

// Plug-in covariance functional evaluated at the contaminated law
// (1 - eps) N(0, Sigma) + eps Delta(z). eps must lie in (0, 0.2]; FastMCD
// has no population form. Both violations are domain errors.
Eigen::MatrixXd contaminated_plugin_cov(PluginKind kind,
                                        const GaussianModel& model,
                                        const Eigen::VectorXd& z, double eps);

// Influence function of the plug-in functional at z. Classical uses the
// closed form z z^T - Sigma; every other kind differentiates the assembled
// functional numerically with the Richardson pair above. Throws
// NumericalError when the difference quotients disagree beyond
// kIFStepErrorTol relative, except for GaussRank: its influence diverges
// logarithmically for atoms far in the score tail, so the value returned
// there is the step-regularised quotient with step_stable cleared.
PluginIF plugin_if(PluginKind kind, const GaussianModel& model,
                   const Eigen::VectorXd& z);

// Frobenius norms of the plug-in influence function over the grid
// z = radius * direction, with a growth summary across radii.
struct GESScan {
  std::vector<double> radii;
  std::vector<Eigen::VectorXd> directions;
  Eigen::MatrixXd norms;          // radii.size() x directions.size()
  double max_norm = 0.0;          // gross-error-sensitivity estimate on the grid
  double max_growth_ratio = 1.0;  // worst norm(r_max) / norm(r_min) over directions
  bool bounded = false;           // max_growth_ratio <= kGESBoundedRatio
};

// Scans plugin_if over every (radius, direction) combination. Directions are
// used as given (callers pass unit vectors); radii must be positive and
// finite and both grids non-empty. A single-radius scan reports a growth
// ratio of one.
GESScan ges_scan(PluginKind kind, const GaussianModel& model,
                 const std::vector<double>& radii,
                 const std::vector<Eigen::VectorXd>& directions);

}  // namespace robglasso
