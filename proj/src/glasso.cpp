#include "robglasso/glasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "robglasso/errors.hpp"

namespace robglasso {

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

Eigen::MatrixXd symmetrized_input(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols() || s.rows() < 1)
    throw std::domain_error("glasso: input matrix must be square");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::domain_error("glasso: input matrix must be symmetric");
  return 0.5 * (s + s.transpose());
}

// min over alpha of alpha'A alpha + 2 b'alpha + 2 lambda |alpha|_1,
// cyclic coordinate descent with warm start. A is positive definite.
void lasso_cd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
              double lambda, double tol, Eigen::VectorXd& alpha) {
  const int m = static_cast<int>(b.size());
  if (m == 0) return;
  for (int pass = 0; pass < 10000; ++pass) {
    double max_delta = 0.0;
    for (int k = 0; k < m; ++k) {
      double g = b[k];
      for (int l = 0; l < m; ++l)
        if (l != k) g += a(k, l) * alpha[l];
      const double next = soft_threshold(-g, lambda) / a(k, k);
      max_delta = std::max(max_delta, std::fabs(next - alpha[k]));
      alpha[k] = next;
    }
    if (max_delta <= tol * std::max(1.0, alpha.cwiseAbs().maxCoeff())) return;
  }
}

}  // namespace

void PenaltySpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ConfigError("PenaltySpec: lambda must be >= 0");
  if (!(tolerance > 0.0))
    throw ConfigError("PenaltySpec: tolerance must be > 0");
  if (max_iterations < 1)
    throw ConfigError("PenaltySpec: max_iterations must be >= 1");
  if (!(support_tolerance > 0.0))
    throw ConfigError("PenaltySpec: support_tolerance must be > 0");
}

double kkt_residual(const Eigen::MatrixXd& s_in, double lambda,
                    const Eigen::MatrixXd& omega) {
  const Eigen::MatrixXd s = symmetrized_input(s_in);
  if (omega.rows() != s.rows() || omega.cols() != s.cols())
    throw std::domain_error("kkt_residual: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("kkt_residual: omega is not positive definite");
  const int p = static_cast<int>(s.rows());
  const Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(p, p));

  double r = 0.0;
  for (int j = 0; j < p; ++j)
    for (int i = 0; i <= j; ++i) {
      const double d = w(i, j) - s(i, j);
      if (i == j) {
        r = std::max(r, std::fabs(d));
      } else if (omega(i, j) != 0.0) {
        r = std::max(r, std::fabs(d - lambda * (omega(i, j) > 0 ? 1.0 : -1.0)));
      } else {
        r = std::max(r, std::max(0.0, std::fabs(d) - lambda));
      }
    }
  return r;
}

double glasso_objective(const Eigen::MatrixXd& s_in, double lambda,
                        const Eigen::MatrixXd& omega) {
  const Eigen::MatrixXd s = symmetrized_input(s_in);
  Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("glasso_objective: omega is not positive definite");
  double logdet = 0.0;
  const Eigen::MatrixXd l = llt.matrixL();
  for (int i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l(i, i));
  double l1 = 0.0;
  for (int j = 0; j < omega.cols(); ++j)
    for (int i = 0; i < omega.rows(); ++i)
      if (i != j) l1 += std::fabs(omega(i, j));
  return -logdet + (s * omega).trace() + lambda * l1;
}

PrecisionEstimate glasso_solve(const Eigen::MatrixXd& s_in,
                               const PenaltySpec& penalty) {
  penalty.validate();
  const Eigen::MatrixXd s = symmetrized_input(s_in);
  const int p = static_cast<int>(s.rows());
  for (int j = 0; j < p; ++j)
    if (!(s(j, j) > 0.0))
      throw std::domain_error("glasso: diagonal of the input must be positive");
  if (penalty.lambda == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() <= 1e-12 * scale)
      throw NumericalError(
          "glasso: lambda = 0 requires a positive definite input");
  }

  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(p, p);
  for (int j = 0; j < p; ++j) omega(j, j) = 1.0 / s(j, j);

  const double inner_tol = std::max(1e-14, 0.01 * penalty.tolerance);
  double residual = kkt_residual(s, penalty.lambda, omega);
  int iter = 0;
  std::vector<int> rest(p - 1);
  while (residual > penalty.tolerance && iter < penalty.max_iterations) {
    for (int j = 0; j < p; ++j) {
      int t = 0;
      for (int k = 0; k < p; ++k)
        if (k != j) rest[t++] = k;
      const Eigen::MatrixXd omega11 = omega(rest, rest);
      Eigen::LLT<Eigen::MatrixXd> llt(omega11);
      if (llt.info() != Eigen::Success)
        throw NumericalError("glasso: iterate lost positive definiteness");
      const Eigen::MatrixXd b_inv =
          llt.solve(Eigen::MatrixXd::Identity(p - 1, p - 1));
      const Eigen::VectorXd s12 = s(rest, std::vector<int>{j});
      Eigen::VectorXd alpha = omega(rest, std::vector<int>{j});
      if (penalty.lambda == 0.0) {
        alpha = -(s(j, j) * b_inv).llt().solve(s12);
      } else {
        lasso_cd(s(j, j) * b_inv, s12, penalty.lambda, inner_tol, alpha);
      }
      for (int k = 0; k < p - 1; ++k) {
        omega(rest[k], j) = alpha[k];
        omega(j, rest[k]) = alpha[k];
      }
      omega(j, j) = 1.0 / s(j, j) + alpha.dot(b_inv * alpha);
    }
    residual = kkt_residual(s, penalty.lambda, omega);
    ++iter;
  }
  if (residual > penalty.tolerance)
    throw IterationLimitError("glasso: no convergence within max_iterations",
                              residual);

  PrecisionEstimate est;
  est.omega = omega;
  est.kkt_residual = residual;
  est.objective = glasso_objective(s, penalty.lambda, omega);
  est.support.resize(p, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < p; ++i)
      est.support(i, j) =
          i == j || std::fabs(omega(i, j)) > penalty.support_tolerance;
  return est;
}

Eigen::VectorXd SupportPermutation::permute(const Eigen::VectorXd& v) const {
  if (v.size() != dim2())
    throw std::domain_error("SupportPermutation: vector length mismatch");
  Eigen::VectorXd out(v.size());
  for (int a = 0; a < dim2(); ++a) out[a] = v[perm[a]];
  return out;
}

Eigen::VectorXd SupportPermutation::unpermute(const Eigen::VectorXd& v) const {
  if (v.size() != dim2())
    throw std::domain_error("SupportPermutation: vector length mismatch");
  Eigen::VectorXd out(v.size());
  for (int a = 0; a < dim2(); ++a) out[perm[a]] = v[a];
  return out;
}

Eigen::MatrixXd SupportPermutation::conjugate(const Eigen::MatrixXd& m) const {
  if (m.rows() != dim2() || m.cols() != dim2())
    throw std::domain_error("SupportPermutation: matrix size mismatch");
  Eigen::MatrixXd out(dim2(), dim2());
  for (int a = 0; a < dim2(); ++a)
    for (int b = 0; b < dim2(); ++b) out(a, b) = m(perm[a], perm[b]);
  return out;
}

SupportPermutation support_permutation(const PrecisionEstimate& estimate,
                                       double tol) {
  const int p = static_cast<int>(estimate.omega.rows());
  SupportPermutation sp;
  sp.perm.reserve(p * p);
  // Column-major vec index a = j*p + i for entry (i, j).
  for (int a = 0; a < p * p; ++a)
    if (std::fabs(estimate.omega(a % p, a / p)) > tol) sp.perm.push_back(a);
  sp.nonzero_count = static_cast<int>(sp.perm.size());
  for (int a = 0; a < p * p; ++a)
    if (!(std::fabs(estimate.omega(a % p, a / p)) > tol)) sp.perm.push_back(a);
  return sp;
}

SupportPermutation full_support_permutation(int p) {
  if (p < 1) throw std::domain_error("dimension must be positive");
  SupportPermutation sp;
  sp.perm.resize(static_cast<std::size_t>(p) * p);
  std::iota(sp.perm.begin(), sp.perm.end(), 0);
  sp.nonzero_count = p * p;
  return sp;
}

}  // namespace robglasso
