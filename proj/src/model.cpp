#include "robglasso/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "robglasso/errors.hpp"

namespace robglasso {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488;
// phi(t) is below 5e-18 outside [-8.6, 8.6]; integrals truncated there stay
// comfortably inside the 1e-10 bivariate CDF contract.
constexpr double kGaussTail = 8.6;
}  // namespace

double std_normal_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Wichura's rational approximation of the normal quantile, followed by one
// Newton step against the erfc-based CDF to pin the result near machine
// precision.
double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("std_normal_quantile: p must lie in (0, 1)");

  static const double a[8] = {
      3.3871328727963666080e0,  1.3314166789178437745e2,
      1.9715909503065514427e3,  1.3731693765509461125e4,
      4.5921953931549871457e4,  6.7265770927008700853e4,
      3.3430575583588128105e4,  2.5090809287301226727e3};
  static const double b[8] = {
      1.0,                      4.2313330701600911252e1,
      6.8718700749205790830e2,  5.3941960214247511077e3,
      2.1213794301586595867e4,  3.9307895800092710610e4,
      2.8729085735721942674e4,  5.2264952788528545610e3};
  static const double c[8] = {
      1.42343711074968357734e0, 4.63033784615654529590e0,
      5.76949722146069140550e0, 3.64784832476320460504e0,
      1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4};
  static const double d[8] = {
      1.0,                      2.05319162663775882187e0,
      1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2,
      5.47593808499534494600e-4, 1.05075007164441684324e-9};
  static const double e[8] = {
      6.65790464350110377720e0, 5.46378491116411436990e0,
      1.78482653991729133580e0, 2.96560571828504891230e-1,
      2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static const double f[8] = {
      1.0,                      5.99832206555887937690e-1,
      1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5,
      1.42151175831644588870e-7, 2.04426310338993978564e-15};

  auto poly = [](const double* k, double x) {
    return ((((((k[7] * x + k[6]) * x + k[5]) * x + k[4]) * x + k[3]) * x +
             k[2]) * x + k[1]) * x + k[0];
  };

  const double q = p - 0.5;
  double x;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    x = q * poly(a, r) / poly(b, r);
  } else {
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    if (r <= 5.0) {
      r -= 1.6;
      x = poly(c, r) / poly(d, r);
    } else {
      r -= 5.0;
      x = poly(e, r) / poly(f, r);
    }
    if (q < 0.0) x = -x;
  }

  if (std::fabs(x) < 37.0) {
    // Polish against whichever tail keeps full relative precision. For
    // p >= 0.5 the subtraction 1 - p is exact, so the upper-tail residual
    // avoids the cancellation that Phi(x) - p suffers near 1.
    if (q >= 0.0) {
      const double tail = 0.5 * std::erfc(x / kSqrt2);  // P(X > x)
      x += (tail - (1.0 - p)) / std_normal_pdf(x);
    } else {
      x -= (std_normal_cdf(x) - p) / std_normal_pdf(x);
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Quadrature rules via Golub-Welsch on the Jacobi recurrence matrix.
// ---------------------------------------------------------------------------

namespace {

QuadratureRule golub_welsch(const Eigen::VectorXd& offdiag, double total_mass) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success)
    throw NumericalError("golub_welsch: tridiagonal eigensolve failed");
  QuadratureRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.weights[i] = total_mass * v0 * v0;
  }
  return rule;
}

}  // namespace

QuadratureRule gauss_hermite(int order) {
  if (order < 1) throw std::domain_error("gauss_hermite: order must be >= 1");
  Eigen::VectorXd off(order - 1);
  for (int k = 1; k < order; ++k) off[k - 1] = std::sqrt(static_cast<double>(k));
  QuadratureRule rule = golub_welsch(off, 1.0);
  // The recurrence is symmetric; enforce the node/weight symmetry exactly so
  // odd moments vanish to the last bit.
  const int n = order;
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = w;
    rule.weights[j] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

QuadratureRule gauss_legendre(int order) {
  if (order < 1) throw std::domain_error("gauss_legendre: order must be >= 1");
  Eigen::VectorXd off(order - 1);
  for (int k = 1; k < order; ++k)
    off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  return golub_welsch(off, 2.0);
}

namespace {

struct PanelEstimate {
  double value;
  double mass;  // integral of |f|, the scale of rounding noise in value
};

PanelEstimate panel_gl(const QuadratureRule& rule,
                       const std::function<double(double)>& f, double a,
                       double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double acc = 0.0;
  double mass = 0.0;
  for (int i = 0; i < rule.nodes.size(); ++i) {
    const double v = rule.weights[i] * f(mid + half * rule.nodes[i]);
    acc += v;
    mass += std::fabs(v);
  }
  return {half * acc, half * mass};
}

struct AdaptiveState {
  const std::function<double(double)>& f;
  const QuadratureRule& lo_rule;
  const QuadratureRule& hi_rule;
  long panels_left;
};

double integrate_panel(AdaptiveState& st, double a, double b, double tol,
                       int depth) {
  if (--st.panels_left < 0)
    throw BudgetError("integrate_adaptive: refinement budget exhausted");
  const PanelEstimate coarse = panel_gl(st.lo_rule, st.f, a, b);
  const PanelEstimate fine = panel_gl(st.hi_rule, st.f, a, b);
  const double err = std::fabs(fine.value - coarse.value);
  // Quadrature rules built from an eigensolver carry a relative inaccuracy of
  // a few ulps, so two rules applied to a fully resolved panel still disagree
  // by roughly 1e-14 of the panel's absolute mass. Refinement past that point
  // only splits noise, hence the mass-scaled floor on the error estimate.
  const double noise = 1e-14 * fine.mass;
  if (err <= std::max(tol, noise) || depth >= 48) return fine.value;
  const double mid = 0.5 * (a + b);
  return integrate_panel(st, a, mid, 0.5 * tol, depth + 1) +
         integrate_panel(st, mid, b, 0.5 * tol, depth + 1);
}

}  // namespace

double integrate_adaptive(const std::function<double(double)>& f, double a,
                          double b, double abs_tol) {
  if (!(b > a)) return 0.0;
  static const QuadratureRule lo_rule = gauss_legendre(12);
  static const QuadratureRule hi_rule = gauss_legendre(25);
  AdaptiveState st{f, lo_rule, hi_rule, 200000};
  return integrate_panel(st, a, b, abs_tol, 0);
}

// ---------------------------------------------------------------------------
// Bivariate normal CDF: quadrature of the conditional CDF,
//   P(X <= x, Y <= y) = int_{-inf}^{x} phi(t) Phi((y - rho t)/sqrt(1-rho^2)) dt
// ---------------------------------------------------------------------------

double std_bivariate_cdf(double x, double y, double rho) {
  if (std::isnan(x) || std::isnan(y) || std::isnan(rho))
    throw std::domain_error("std_bivariate_cdf: NaN argument");
  if (rho < -1.0 - 1e-12 || rho > 1.0 + 1e-12)
    throw std::domain_error("std_bivariate_cdf: rho outside [-1, 1]");
  rho = std::clamp(rho, -1.0, 1.0);
  if (x > y) std::swap(x, y);  // exact (x, y) symmetry

  if (std::isinf(x) && x < 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;  // x = +inf implies y = +inf after the swap
  if (std::isinf(y)) return y < 0.0 ? 0.0 : std_normal_cdf(x);

  if (rho >= 1.0 - 1e-12) return std_normal_cdf(x);
  if (rho <= -1.0 + 1e-12)
    return std::max(0.0, std_normal_cdf(x) + std_normal_cdf(y) - 1.0);

  if (x > kGaussTail)  // both arguments far in the upper tail
    return std::max(0.0, std_normal_cdf(x) + std_normal_cdf(y) - 1.0);
  const double hi = std::min(x, kGaussTail);
  if (hi <= -kGaussTail) return 0.0;

  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  auto integrand = [y, rho, s](double t) {
    return std_normal_pdf(t) * std_normal_cdf((y - rho * t) / s);
  };

  // For |rho| near 1 the conditional CDF jumps from 0 to 1 inside a layer of
  // width ~s around t = y/rho, which can fall entirely between the nodes of
  // the first few panels; the integrator would then accept a near-zero
  // estimate without ever seeing the layer. Cutting the range at the layer's
  // centre and edges makes the transition span whole panels.
  const double lo = -kGaussTail;
  std::vector<double> ends;
  if (std::fabs(rho) >= 0.5) {
    const double centre = y / rho;
    const double width = kGaussTail * s / std::fabs(rho);
    for (double c : {centre - width, centre, centre + width})
      if (c > lo && c < hi) ends.push_back(c);
  }
  ends.push_back(hi);

  double v = 0.0;
  double piece_lo = lo;
  for (double piece_hi : ends) {
    v += integrate_adaptive(integrand, piece_lo, piece_hi, 2.5e-15);
    piece_lo = piece_hi;
  }
  return std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// GaussianModel
// ---------------------------------------------------------------------------

GaussianModel::GaussianModel(Eigen::MatrixXd sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() < 1)
    throw std::domain_error("GaussianModel: covariance must be square");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::domain_error("GaussianModel: covariance must be symmetric");
  sigma_ = 0.5 * (sigma + sigma.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 1e-10)
    throw std::domain_error(
        "GaussianModel: covariance must be positive definite "
        "(min eigenvalue > 1e-10)");

  Eigen::LLT<Eigen::MatrixXd> llt(sigma_);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("GaussianModel: Cholesky factorization failed");
  chol_ = llt.matrixL();
  omega_ = llt.solve(Eigen::MatrixXd::Identity(dim(), dim()));
  omega_ = 0.5 * (omega_ + omega_.transpose());
}

GaussianModel GaussianModel::toeplitz3() {
  Eigen::MatrixXd s(3, 3);
  s << 1.0, 0.5, 0.25,
       0.5, 1.0, 0.5,
       0.25, 0.5, 1.0;
  return GaussianModel(s);
}

double GaussianModel::marginal_sigma(int j) const {
  return std::sqrt(sigma_(j, j));
}

double GaussianModel::pair_rho(int j, int k) const {
  return sigma_(j, k) / (marginal_sigma(j) * marginal_sigma(k));
}

Eigen::MatrixXd GaussianModel::sample(int n, std::uint64_t seed) const {
  if (n < 1) throw std::domain_error("GaussianModel::sample: n must be >= 1");
  const int p = dim();
  std::mt19937_64 gen(seed);
  Eigen::MatrixXd z(n, p);
  // Map raw 64-bit words to (0,1) uniforms directly; std distributions are
  // implementation defined and would break byte-level reproducibility.
  constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) {
      const double u = (static_cast<double>(gen() >> 11) + 0.5) * kInv53;
      z(i, j) = std_normal_quantile(u);
    }
  return z * chol_.transpose();
}

// ---------------------------------------------------------------------------

void ContaminationPoint::validate(int dim) const {
  if (z.size() != dim)
    throw std::domain_error("ContaminationPoint: dimension mismatch");
  if (!z.allFinite())
    throw std::domain_error("ContaminationPoint: z must be finite");
  if (eps && !(*eps > 0.0 && *eps < 1.0))
    throw std::domain_error("ContaminationPoint: eps must lie in (0, 1)");
}

QuadratureSpec QuadratureSpec::tensor_gh(int order) {
  QuadratureSpec q;
  q.rule = Rule::TensorGaussHermite;
  q.order = order;
  q.validate();
  return q;
}

QuadratureSpec QuadratureSpec::monte_carlo(long samples, std::uint64_t seed) {
  QuadratureSpec q;
  q.rule = Rule::MonteCarlo;
  q.samples = samples;
  q.seed = seed;
  q.validate();
  return q;
}

void QuadratureSpec::validate() const {
  if (rule == Rule::TensorGaussHermite && order < 8)
    throw std::domain_error("QuadratureSpec: tensor Gauss-Hermite order must be >= 8");
  if (rule == Rule::MonteCarlo && samples < 10000)
    throw std::domain_error("QuadratureSpec: Monte Carlo sample count must be >= 10000");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + (stream + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace robglasso
