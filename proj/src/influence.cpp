#include "robglasso/influence.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "robglasso/errors.hpp"

namespace robglasso {

namespace {

Eigen::VectorXd vec_of(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

}  // namespace

// Column-major vectorisation puts entry (i, j) at index j*p + i, so the
// Kronecker product has
//   (W (x) W)[j*p + i, l*p + k] = W(j, l) * W(i, k).
Eigen::MatrixXd restricted_kron(const PrecisionEstimate& estimate,
                                const SupportPermutation& d) {
  const int p = static_cast<int>(estimate.omega.rows());
  if (d.dim2() != p * p)
    throw std::domain_error("support permutation does not match the estimate");
  Eigen::LLT<Eigen::MatrixXd> llt(estimate.omega);
  if (llt.info() != Eigen::Success)
    throw NumericalError("precision estimate is not positive definite");
  const Eigen::MatrixXd w =
      llt.solve(Eigen::MatrixXd::Identity(p, p));

  const int s = d.nonzero_count;
  Eigen::MatrixXd k(s, s);
  for (int b = 0; b < s; ++b) {
    const int vb = d.perm[static_cast<std::size_t>(b)];
    const int kk = vb % p, ll = vb / p;
    for (int a = 0; a < s; ++a) {
      const int va = d.perm[static_cast<std::size_t>(a)];
      const int ii = va % p, jj = va / p;
      k(a, b) = w(jj, ll) * w(ii, kk);
    }
  }
  return k;
}

InfluenceEvaluation glasso_if(const PrecisionEstimate& estimate,
                              const SupportPermutation& d,
                              const PluginIF& plugin) {
  const int p = static_cast<int>(estimate.omega.rows());
  if (plugin.matrix.rows() != p || plugin.matrix.cols() != p)
    throw std::domain_error("plug-in influence does not match the estimate");
  if (!plugin.matrix.allFinite())
    throw std::domain_error("plug-in influence has non-finite entries");

  const Eigen::MatrixXd k = restricted_kron(estimate, d);
  const int s = d.nonzero_count;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  if (eig.info() != Eigen::Success)
    throw NumericalError("restricted system eigendecomposition failed");
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const double condition = lo > 0.0 ? hi / lo
                                    : std::numeric_limits<double>::infinity();
  if (!(lo > hi * 1e-14)) {
    std::ostringstream msg;
    msg << "restricted influence system is numerically singular"
        << " (condition " << condition << ")";
    throw NumericalError(msg.str());
  }

  const Eigen::VectorXd rhs = d.permute(vec_of(plugin.matrix)).head(s);
  Eigen::VectorXd active = Eigen::LLT<Eigen::MatrixXd>(k).solve(rhs);

  Eigen::VectorXd full = Eigen::VectorXd::Zero(p * p);
  full.head(s) = -active;
  const Eigen::VectorXd unpermuted = d.unpermute(full);

  InfluenceEvaluation out;
  out.z = plugin.z;
  out.matrix = Eigen::Map<const Eigen::MatrixXd>(unpermuted.data(), p, p);
  out.matrix = ((out.matrix + out.matrix.transpose()) / 2.0).eval();
  out.frobenius_norm = out.matrix.norm();
  out.plugin = plugin;
  out.permutation = d;
  out.condition = condition;
  return out;
}

Eigen::MatrixXd glasso_if_fd(const GaussianModel& model, PluginKind kind,
                             const PenaltySpec& penalty,
                             const Eigen::VectorXd& z, double coarse_step,
                             double fine_step) {
  if (!(coarse_step > fine_step && fine_step > 0.0))
    throw std::domain_error("steps must satisfy coarse > fine > 0");

  const Eigen::MatrixXd base =
      glasso_solve(pairwise_cov(kind, model), penalty).omega;
  const auto quotient = [&](double eps) {
    const Eigen::MatrixXd q = contaminated_plugin_cov(kind, model, z, eps);
    return ((glasso_solve(q, penalty).omega - base) / eps).eval();
  };
  const Eigen::MatrixXd coarse = quotient(coarse_step);
  const Eigen::MatrixXd fine = quotient(fine_step);
  return 2.0 * fine - coarse;
}

double ges_bound(const PrecisionEstimate& estimate,
                 const SupportPermutation& d, double plugin_ges) {
  if (!(plugin_ges >= 0.0) || !std::isfinite(plugin_ges))
    throw std::domain_error("plug-in sensitivity must be finite and >= 0");
  const Eigen::MatrixXd k = restricted_kron(estimate, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  if (eig.info() != Eigen::Success)
    throw NumericalError("restricted system eigendecomposition failed");
  const double lo = eig.eigenvalues().minCoeff();
  if (!(lo > 0.0))
    throw NumericalError("restricted influence system is numerically singular");
  return plugin_ges / lo;
}

MaxDirection max_direction_unpenalized(const Eigen::MatrixXd& omega) {
  const int p = static_cast<int>(omega.rows());
  if (omega.cols() != p || p < 1)
    throw std::domain_error("omega must be square");
  if (!omega.allFinite() ||
      (omega - omega.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + omega.cwiseAbs().maxCoeff()))
    throw std::domain_error("omega must be finite and symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega);
  if (eig.info() != Eigen::Success)
    throw NumericalError("eigendecomposition failed");
  const Eigen::VectorXd lambda = eig.eigenvalues();  // ascending
  if (!(lambda(0) > 0.0))
    throw std::domain_error("omega must be positive definite");

  const auto g = [](double x) { return x * x * x * (x - 2.0); };
  const double g_max = g(lambda(p - 1));
  const double g_min = g(lambda(0));
  const int pick = g_max >= g_min ? p - 1 : 0;

  MaxDirection out;
  out.lambda_max = lambda(p - 1);
  out.lambda_min = lambda(0);
  out.max_value = lambda.squaredNorm() + std::max(g_max, g_min);
  out.direction = eig.eigenvectors().col(pick);
  int anchor = 0;
  out.direction.cwiseAbs().maxCoeff(&anchor);
  if (out.direction(anchor) < 0.0) out.direction = -out.direction;
  return out;
}

}  // namespace robglasso
