#include "robglasso/sensitivity.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "robglasso/errors.hpp"
#include "robglasso/parallel.hpp"

namespace robglasso {

void SCExperiment::validate(int dim) const {
  penalty.validate();
  // The clean baseline keeps n - 1 points and the finite-sample estimators
  // need at least 4 of them.
  if (n < 5) throw ConfigError("SCExperiment: n must be >= 5");
  if (kind == PluginKind::FastMCD) {
    mcd.validate();
    if (n <= 2 * dim)
      throw ConfigError("SCExperiment: FastMCD needs n > 2 * dimension");
  }
  if (replications < 1)
    throw ConfigError("SCExperiment: replications must be >= 1");
  if (grid.empty()) throw ConfigError("SCExperiment: grid must not be empty");
  for (const Eigen::VectorXd& z : grid) {
    if (static_cast<int>(z.size()) != dim)
      throw ConfigError("SCExperiment: grid point dimension mismatch");
    if (!z.allFinite())
      throw ConfigError("SCExperiment: grid points must be finite");
  }
}

namespace {

struct Replication {
  bool kept = false;
  std::vector<Eigen::MatrixXd> sc;  // grid order
};

}  // namespace

SCSurface sc_surface(const GaussianModel& model, const SCExperiment& exp) {
  const int p = model.dim();
  exp.validate(p);
  const int nz = static_cast<int>(exp.grid.size());

  std::vector<Replication> reps(static_cast<std::size_t>(exp.replications));
  parallel::parallel_for(exp.replications, [&](int r) {
    Replication& out = reps[static_cast<std::size_t>(r)];
    try {
      const Eigen::MatrixXd clean =
          model.sample(exp.n - 1, derive_seed(exp.seed, static_cast<std::uint64_t>(r)));
      const Eigen::MatrixXd base_cov =
          finite_sample_estimate(exp.kind, clean, exp.mcd);
      const Eigen::MatrixXd base = glasso_solve(base_cov, exp.penalty).omega;

      Eigen::MatrixXd with_z(exp.n, p);
      with_z.topRows(exp.n - 1) = clean;
      out.sc.reserve(static_cast<std::size_t>(nz));
      for (const Eigen::VectorXd& z : exp.grid) {
        with_z.row(exp.n - 1) = z.transpose();
        const Eigen::MatrixXd cov =
            finite_sample_estimate(exp.kind, with_z, exp.mcd);
        out.sc.push_back(
            (exp.n * (glasso_solve(cov, exp.penalty).omega - base)).eval());
      }
      out.kept = true;
    } catch (const NumericalError&) {
      out.kept = false;
      out.sc.clear();
    }
  });

  SCSurface surface;
  for (const Replication& rep : reps)
    (rep.kept ? surface.replications_kept : surface.replications_dropped)++;
  if (surface.replications_dropped * 10 > exp.replications) {
    std::ostringstream msg;
    msg << "sc_surface: " << surface.replications_dropped << " of "
        << exp.replications << " replications failed";
    throw NumericalError(msg.str());
  }

  surface.points.resize(static_cast<std::size_t>(nz));
  for (int j = 0; j < nz; ++j) {
    SCPoint& pt = surface.points[static_cast<std::size_t>(j)];
    pt.z = exp.grid[static_cast<std::size_t>(j)];
    pt.mean_sc = Eigen::MatrixXd::Zero(p, p);
    for (const Replication& rep : reps)
      if (rep.kept) pt.mean_sc += rep.sc[static_cast<std::size_t>(j)];
    pt.mean_sc /= surface.replications_kept;
    pt.frobenius_norm = pt.mean_sc.norm();

    double spread = 0.0;
    for (const Replication& rep : reps)
      if (rep.kept)
        spread += (rep.sc[static_cast<std::size_t>(j)] - pt.mean_sc).squaredNorm();
    const int kept = surface.replications_kept;
    pt.norm_stderr =
        kept > 1 ? std::sqrt(spread / (static_cast<double>(kept) * (kept - 1)))
                 : 0.0;
  }
  return surface;
}

}  // namespace robglasso
