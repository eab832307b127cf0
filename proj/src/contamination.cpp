#include "robglasso/contamination.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "robglasso/errors.hpp"
#include "robglasso/parallel.hpp"

namespace robglasso {

namespace {

void check_location(const GaussianModel& model, const Eigen::VectorXd& z,
                    const char* where) {
  if (z.size() != model.dim())
    throw std::domain_error(std::string(where) +
                            ": contamination point dimension mismatch");
  if (!z.allFinite())
    throw std::domain_error(std::string(where) +
                            ": contamination point must be finite");
}

// Shared body of plugin_if with the clean evaluation hoisted, so scans can
// reuse one clean matrix across the whole grid.
PluginIF numeric_if(PluginKind kind, const GaussianModel& model,
                    const Eigen::VectorXd& z, const Eigen::MatrixXd& clean) {
  PluginIF out;
  out.z = z;
  out.method = IFMethod::CentralDifference;
  out.step = kIFCoarseStep;

  const Eigen::MatrixXd coarse =
      (contaminated_plugin_cov(kind, model, z, kIFCoarseStep) - clean) /
      kIFCoarseStep;
  const Eigen::MatrixXd fine =
      (contaminated_plugin_cov(kind, model, z, kIFFineStep) - clean) /
      kIFFineStep;

  // The floor keeps a vanishing influence matrix from turning quadrature
  // noise in the numerator into a spurious instability report.
  const double rel = (coarse - fine).norm() / std::max(fine.norm(), 1e-3);
  // The gaussian-rank correlation influence grows without bound when the
  // atom sits in the tail of the score transform, so its quotient pair can
  // never agree there; the gap is recorded instead of treated as a failure.
  if (rel > kIFStepErrorTol && kind != PluginKind::GaussRank) {
    std::ostringstream msg;
    msg << "plugin_if: difference quotients disagree (relative gap " << rel
        << ") for kind " << plugin_name(kind);
    throw NumericalError(msg.str());
  }
  out.matrix = 2.0 * fine - coarse;
  out.step_rel_diff = rel;
  out.step_stable = rel <= kIFStepFlagTol;
  return out;
}

}  // namespace

Eigen::MatrixXd contaminated_plugin_cov(PluginKind kind,
                                        const GaussianModel& model,
                                        const Eigen::VectorXd& z, double eps) {
  if (!(eps > 0.0) || !(eps <= 0.2))
    throw std::domain_error(
        "contaminated_plugin_cov: eps must lie in (0, 0.2]");
  if (kind == PluginKind::FastMCD)
    throw std::domain_error(
        "contaminated_plugin_cov: fast-mcd has no population form");
  check_location(model, z, "contaminated_plugin_cov");
  const ContaminationPoint point{z, eps};
  return pairwise_cov(kind, model, &point);
}

PluginIF plugin_if(PluginKind kind, const GaussianModel& model,
                   const Eigen::VectorXd& z) {
  if (kind == PluginKind::FastMCD)
    throw std::domain_error("plugin_if: fast-mcd has no population form");
  check_location(model, z, "plugin_if");

  if (kind == PluginKind::Classical) {
    PluginIF out;
    out.z = z;
    out.matrix = z * z.transpose() - model.sigma();
    out.method = IFMethod::ClosedForm;
    return out;
  }
  return numeric_if(kind, model, z, pairwise_cov(kind, model));
}

GESScan ges_scan(PluginKind kind, const GaussianModel& model,
                 const std::vector<double>& radii,
                 const std::vector<Eigen::VectorXd>& directions) {
  if (radii.empty() || directions.empty())
    throw std::domain_error("ges_scan: radius and direction grids must be non-empty");
  for (double r : radii)
    if (!(r > 0.0) || !std::isfinite(r))
      throw std::domain_error("ges_scan: radii must be positive and finite");
  for (const Eigen::VectorXd& d : directions) {
    check_location(model, d, "ges_scan");
    if (d.norm() == 0.0)
      throw std::domain_error("ges_scan: zero direction");
  }

  GESScan scan;
  scan.radii = radii;
  scan.directions = directions;
  const int nr = static_cast<int>(radii.size());
  const int nd = static_cast<int>(directions.size());
  scan.norms.resize(nr, nd);

  const bool closed_form = kind == PluginKind::Classical;
  const Eigen::MatrixXd clean =
      closed_form ? Eigen::MatrixXd() : pairwise_cov(kind, model);
  parallel::parallel_for(nr * nd, [&](int idx) {
    const int ri = idx / nd;
    const int di = idx % nd;
    const Eigen::VectorXd z = radii[ri] * directions[di];
    const Eigen::MatrixXd m =
        closed_form ? Eigen::MatrixXd(z * z.transpose() - model.sigma())
                    : numeric_if(kind, model, z, clean).matrix;
    scan.norms(ri, di) = m.norm();
  });

  scan.max_norm = scan.norms.maxCoeff();
  const auto lo = std::min_element(radii.begin(), radii.end()) - radii.begin();
  const auto hi = std::max_element(radii.begin(), radii.end()) - radii.begin();
  double worst = 1.0;
  for (int di = 0; di < nd; ++di) {
    const double denom = std::max(scan.norms(lo, di), 1e-12);
    worst = std::max(worst, scan.norms(hi, di) / denom);
  }
  scan.max_growth_ratio = worst;
  scan.bounded = worst <= kGESBoundedRatio;
  return scan;
}

}  // namespace robglasso
