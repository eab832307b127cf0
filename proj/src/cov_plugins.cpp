#include "robglasso/cov_plugins.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "robglasso/errors.hpp"
#include "robglasso/parallel.hpp"

namespace robglasso {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTail = 8.6;        // integration cut for normal densities
constexpr double kGradeFloor = 1e-12;  // grade truncation for quantile scores

double sign_of(double v) {
  if (v > 0.0) return 1.0;
  if (v < 0.0) return -1.0;
  return 0.0;
}

// 1/(sqrt(2) Phi^-1(5/8)), the factor making Qn equal sigma at the normal.
double qn_consistency_factor() {
  static const double c = 1.0 / (std::sqrt(2.0) * std_normal_quantile(0.625));
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Plugin names
// ---------------------------------------------------------------------------

const char* plugin_name(PluginKind kind) {
  switch (kind) {
    case PluginKind::Classical: return "classical";
    case PluginKind::GaussRank: return "gauss-rank";
    case PluginKind::Spearman: return "spearman";
    case PluginKind::Kendall: return "kendall";
    case PluginKind::Quadrant: return "quadrant";
    case PluginKind::FastMCD: return "fast-mcd";
  }
  throw std::logic_error("plugin_name: unreachable");
}

PluginKind plugin_kind_from_name(const std::string& name) {
  if (name == "classical") return PluginKind::Classical;
  if (name == "gauss-rank" || name == "gaussrank") return PluginKind::GaussRank;
  if (name == "spearman") return PluginKind::Spearman;
  if (name == "kendall") return PluginKind::Kendall;
  if (name == "quadrant") return PluginKind::Quadrant;
  if (name == "fast-mcd" || name == "fastmcd") return PluginKind::FastMCD;
  throw ConfigError("unknown plugin kind: \"" + name + "\"");
}

// ---------------------------------------------------------------------------
// Mixture handles
// ---------------------------------------------------------------------------

void UnivariateMixture::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::domain_error("UnivariateMixture: sigma must be positive");
  if (!(eps >= 0.0) || !(eps < 1.0))
    throw std::domain_error("UnivariateMixture: eps must lie in [0, 1)");
  if (!std::isfinite(z))
    throw std::domain_error("UnivariateMixture: z must be finite");
}

double UnivariateMixture::cdf(double t) const {
  double v = (1.0 - eps) * std_normal_cdf(t / sigma);
  if (eps > 0.0 && t >= z) v += eps;
  return v;
}

double UnivariateMixture::median() const {
  validate();
  if (eps > 0.0) {
    const double below = (1.0 - eps) * std_normal_cdf(z / sigma);
    if (below <= 0.5 && 0.5 <= below + eps) return z;
  }
  // 1/2 is attained on the continuous part; bisect the monotone CDF.
  double lo = -(40.0 * sigma + std::fabs(z) + 1.0);
  double hi = -lo;
  for (int i = 0; i < 200 && hi - lo > 1e-13; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < 0.5 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void BivariateMixture::validate() const {
  margin_j().validate();
  margin_k().validate();
  if (!(std::fabs(rho) < 1.0))
    throw std::domain_error("BivariateMixture: |rho| must be < 1");
}

// ---------------------------------------------------------------------------
// Qn functional
// ---------------------------------------------------------------------------

namespace {

// CDF of |X1 - X2| for X1, X2 independent copies of the mixture. The three
// mixture pairings give a normal difference, a shifted normal and the
// zero-difference atom pair.
double abs_diff_cdf(const UnivariateMixture& m, double t) {
  if (t < 0.0) return 0.0;
  const double clean2 = (1.0 - m.eps) * (1.0 - m.eps);
  double v = clean2 * (2.0 * std_normal_cdf(t / (m.sigma * std::sqrt(2.0))) - 1.0);
  if (m.eps > 0.0) {
    const double cross = 2.0 * m.eps * (1.0 - m.eps);
    v += cross * (std_normal_cdf((m.z + t) / m.sigma) -
                  std_normal_cdf((m.z - t) / m.sigma));
    v += m.eps * m.eps;
  }
  return v;
}

}  // namespace

double qn_scale_functional(const UnivariateMixture& marginal) {
  marginal.validate();
  if (marginal.eps * marginal.eps >= 0.25)
    throw NumericalError("qn_scale_functional: atom mass saturates the quartile");
  // H(0) = eps^2 < 1/4 and H is nondecreasing to 1; bracket then bisect.
  double lo = 0.0;
  double hi = 2.0 * marginal.sigma;
  for (int i = 0; i < 200 && abs_diff_cdf(marginal, hi) < 0.25; ++i) hi *= 2.0;
  if (abs_diff_cdf(marginal, hi) < 0.25)
    throw NumericalError("qn_scale_functional: quartile bracket failed");
  for (int i = 0; i < 200 && hi - lo > 1e-11 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (abs_diff_cdf(marginal, mid) < 0.25 ? lo : hi) = mid;
  }
  return qn_consistency_factor() * 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Fisher-consistency transforms
// ---------------------------------------------------------------------------

double fisher_transform(PluginKind kind, double r) {
  if (!(std::fabs(r) <= 1.0))
    throw std::domain_error("fisher_transform: |r| must be <= 1");
  switch (kind) {
    case PluginKind::Spearman: return 2.0 * std::sin(kPi * r / 6.0);
    case PluginKind::Kendall:
    case PluginKind::Quadrant: return std::sin(kPi * r / 2.0);
    case PluginKind::GaussRank: return r;
    case PluginKind::Classical:
    case PluginKind::FastMCD:
      throw std::domain_error("fisher_transform: kind has no pairwise form");
  }
  throw std::logic_error("fisher_transform: unreachable");
}

// ---------------------------------------------------------------------------
// Correlation functionals
// ---------------------------------------------------------------------------

namespace {

// P(X > u, Y > v) for a standard bivariate normal pair.
double survival2(double u, double v, double rho) {
  return 1.0 - std_normal_cdf(u) - std_normal_cdf(v) +
         std_bivariate_cdf(u, v, rho);
}

// E[sign(U - a) sign(V - b)] for a standard bivariate normal pair: the four
// orthant masses with alternating signs.
double orthant_sign_expectation(double a, double b, double rho) {
  return 4.0 * std_bivariate_cdf(a, b, rho) - 2.0 * std_normal_cdf(a) -
         2.0 * std_normal_cdf(b) + 1.0;
}

// The functionals are invariant to positive rescaling of each margin, so all
// evaluations run on the standardised pair with correlation rho and atom
// coordinates u0 = z_j/sigma_j, v0 = z_k/sigma_k.

double spearman_raw(const BivariateMixture& m) {
  const double e = m.eps;
  const double u0 = m.z_j / m.sigma_j;
  const double v0 = m.z_k / m.sigma_k;
  // E[F_j(X) F_k(Y)] over the clean component: expand both grades into their
  // normal part Phi and atom indicator. E[Phi(U) Phi(V)] is the probability
  // that two fresh independent normals fall below (U, V), a difference of
  // correlated normals, hence the rho/2 and -rho/sqrt(2) correlations.
  double clean = (1.0 - e) * (1.0 - e) * std_bivariate_cdf(0.0, 0.0, 0.5 * m.rho);
  if (e > 0.0) {
    const double r = -m.rho / std::sqrt(2.0);
    clean += e * (1.0 - e) * ((0.5 - std_bivariate_cdf(0.0, v0, r)) +
                              (0.5 - std_bivariate_cdf(0.0, u0, r)));
    clean += e * e * survival2(u0, v0, m.rho);
  }
  const double grade_j = (1.0 - e) * std_normal_cdf(u0) + e;
  const double grade_k = (1.0 - e) * std_normal_cdf(v0) + e;
  const double mean = (1.0 - e) * clean + e * grade_j * grade_k;
  return 12.0 * mean - 3.0;
}

double kendall_raw(const BivariateMixture& m) {
  const double e = m.eps;
  // Two independent pairs: clean/clean concordance is the known orthant
  // expression, clean/atom compares a clean draw with the fixed point, and
  // atom/atom ties to sign(0) = 0.
  double v = (1.0 - e) * (1.0 - e) * orthant_sign_expectation(0.0, 0.0, m.rho);
  if (e > 0.0) {
    const double u0 = m.z_j / m.sigma_j;
    const double v0 = m.z_k / m.sigma_k;
    v += 2.0 * e * (1.0 - e) * orthant_sign_expectation(u0, v0, m.rho);
  }
  return v;
}

double quadrant_raw(const BivariateMixture& m) {
  const double mj = m.margin_j().median();
  const double mk = m.margin_k().median();
  const double a = mj / m.sigma_j;
  const double b = mk / m.sigma_k;
  double v = (1.0 - m.eps) * orthant_sign_expectation(a, b, m.rho);
  if (m.eps > 0.0)
    v += m.eps * sign_of(m.z_j - mj) * sign_of(m.z_k - mk);
  return v;
}

// Gaussian-rank pieces. The contaminated grade of the standardised margin is
// (1 - e) Phi(u) + e 1{u >= u0}; its normal score is q(u) and the deviation
// from the clean score is delta(u) = q(u) - u, a smooth O(e) function on
// either side of the jump at u0.
struct GradeScore {
  double eps;
  double u0;

  double q(double u) const {
    double g = (1.0 - eps) * std_normal_cdf(u);
    if (eps > 0.0 && u >= u0) g += eps;
    return std_normal_quantile(std::clamp(g, kGradeFloor, 1.0 - kGradeFloor));
  }
  double delta(double u) const { return q(u) - u; }
};

// E[U delta(U)] for U standard normal: adaptive integrals split at the jump.
double score_shift_moment(const GradeScore& s) {
  auto f = [&s](double u) { return u * s.delta(u) * std_normal_pdf(u); };
  const double cut = std::clamp(s.u0, -kTail, kTail);
  return integrate_adaptive(f, -kTail, cut, 1e-13) +
         integrate_adaptive(f, cut, kTail, 1e-13);
}

// E[delta_j(U) delta_k(V)] over the clean bivariate pair: tensor
// Gauss-Legendre on the four smooth cells delimited by the grade jumps.
double score_shift_product(const GradeScore& sj, const GradeScore& sk,
                           double rho) {
  static const QuadratureRule gl = gauss_legendre(32);
  const double s2 = (1.0 - rho) * (1.0 + rho);
  const double norm = 1.0 / (2.0 * kPi * std::sqrt(s2));

  const double cut_u = std::clamp(sj.u0, -kTail, kTail);
  const double cut_v = std::clamp(sk.u0, -kTail, kTail);
  const double edges_u[3] = {-kTail, cut_u, kTail};
  const double edges_v[3] = {-kTail, cut_v, kTail};

  double total = 0.0;
  for (int cu = 0; cu < 2; ++cu) {
    for (int cv = 0; cv < 2; ++cv) {
      const double au = edges_u[cu], bu = edges_u[cu + 1];
      const double av = edges_v[cv], bv = edges_v[cv + 1];
      if (!(bu > au) || !(bv > av)) continue;
      const double mu = 0.5 * (au + bu), hu = 0.5 * (bu - au);
      const double mv = 0.5 * (av + bv), hv = 0.5 * (bv - av);
      double cell = 0.0;
      for (int a = 0; a < gl.nodes.size(); ++a) {
        const double u = mu + hu * gl.nodes[a];
        const double dj = sj.delta(u);
        double row = 0.0;
        for (int b = 0; b < gl.nodes.size(); ++b) {
          const double v = mv + hv * gl.nodes[b];
          const double quad = u * u - 2.0 * rho * u * v + v * v;
          row += gl.weights[b] * sk.delta(v) *
                 std::exp(-0.5 * quad / s2);
        }
        cell += gl.weights[a] * dj * row;
      }
      total += norm * hu * hv * cell;
    }
  }
  return total;
}

double gauss_rank_raw(const BivariateMixture& m) {
  const double e = m.eps;
  const GradeScore sj{e, m.z_j / m.sigma_j};
  const GradeScore sk{e, m.z_k / m.sigma_k};
  // Write q(u) = u + delta(u). Joint normality of the clean pair turns the
  // cross moments E[U delta_k(V)] into rho E[V delta_k(V)], leaving two
  // univariate integrals and one O(e^2) product term.
  const double clean = m.rho * (1.0 + score_shift_moment(sj) +
                                score_shift_moment(sk)) +
                       score_shift_product(sj, sk, m.rho);
  double v = (1.0 - e) * clean;
  if (e > 0.0) v += e * sj.q(sj.u0) * sk.q(sk.u0);
  return v;
}

}  // namespace

CorrelationValue correlation_functional(PluginKind kind,
                                        const BivariateMixture& pair) {
  pair.validate();
  double raw = 0.0;
  switch (kind) {
    case PluginKind::Spearman: raw = spearman_raw(pair); break;
    case PluginKind::Kendall: raw = kendall_raw(pair); break;
    case PluginKind::Quadrant: raw = quadrant_raw(pair); break;
    case PluginKind::GaussRank: raw = gauss_rank_raw(pair); break;
    case PluginKind::Classical:
    case PluginKind::FastMCD:
      throw std::domain_error(
          "correlation_functional: kind has no pairwise correlation");
  }
  // The Gaussian-rank expectation can exceed 1 by O(eps^2) because grades
  // are not exactly uniform under the contaminated law; the clamp keeps the
  // documented [-1, 1] range without affecting small-eps derivatives.
  raw = std::clamp(raw, -1.0, 1.0);
  return {raw, fisher_transform(kind, raw), kind};
}

// ---------------------------------------------------------------------------
// Covariance assembly
// ---------------------------------------------------------------------------

namespace {

// Resolves the contamination argument shared by the assembly entry points:
// null means the clean model, otherwise the point must be valid and carry a
// mass.
double contamination_mass(const GaussianModel& model,
                          const ContaminationPoint* contamination) {
  if (contamination == nullptr) return 0.0;
  contamination->validate(model.dim());
  if (!contamination->eps.has_value())
    throw std::domain_error("pairwise_cov: contamination mass required");
  return *contamination->eps;
}

}  // namespace

Eigen::MatrixXd classical_cov(const GaussianModel& model,
                              const ContaminationPoint* contamination) {
  const double e = contamination_mass(model, contamination);
  Eigen::MatrixXd out = (1.0 - e) * model.sigma();
  if (e > 0.0)
    out += e * (1.0 - e) * contamination->z * contamination->z.transpose();
  return out;
}

Eigen::MatrixXd pairwise_cov(PluginKind kind, const GaussianModel& model,
                             const ContaminationPoint* contamination) {
  if (kind == PluginKind::Classical)
    return classical_cov(model, contamination);
  if (kind == PluginKind::FastMCD)
    throw std::domain_error("pairwise_cov: fast-mcd is finite-sample only");

  const double e = contamination_mass(model, contamination);
  const int p = model.dim();
  auto z_at = [&](int j) {
    return contamination == nullptr ? 0.0 : contamination->z[j];
  };

  std::vector<double> scales(p);
  parallel::parallel_for(p, [&](int j) {
    scales[j] = qn_scale_functional({model.marginal_sigma(j), e, z_at(j)});
  });

  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < p; ++j)
    for (int k = j + 1; k < p; ++k) pairs.emplace_back(j, k);
  std::vector<double> corr(pairs.size());
  parallel::parallel_for(static_cast<int>(pairs.size()), [&](int i) {
    const auto [j, k] = pairs[i];
    const BivariateMixture pair{model.pair_rho(j, k), model.marginal_sigma(j),
                                model.marginal_sigma(k), e, z_at(j), z_at(k)};
    corr[i] = correlation_functional(kind, pair).transformed;
  });

  Eigen::MatrixXd out(p, p);
  for (int j = 0; j < p; ++j) out(j, j) = scales[j] * scales[j];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [j, k] = pairs[i];
    out(j, k) = scales[j] * scales[k] * corr[i];
    out(k, j) = out(j, k);
  }
  return out;
}

Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols())
    throw std::domain_error("psd_repair: matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::domain_error("psd_repair: matrix must be symmetric");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success)
    throw NumericalError("psd_repair: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() >= 0.0) return m;

  Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(1e-8);
  Eigen::MatrixXd out = es.eigenvectors() * clipped.asDiagonal() *
                        es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// Finite-sample estimators
// ---------------------------------------------------------------------------

namespace {

// Average ranks (1-based) with midrank ties.
std::vector<double> average_ranks(const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&x](int a, int b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const int n = static_cast<int>(a.size());
  double ma = 0.0, mb = 0.0;
  for (int i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (int i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0)
    throw NumericalError("rank correlation: degenerate column");
  return sab / std::sqrt(saa * sbb);
}

double kendall_sample(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(x.size());
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int l = i + 1; l < n; ++l)
      s += sign_of(x[i] - x[l]) * sign_of(y[i] - y[l]);
  return 2.0 * s / (static_cast<double>(n) * (n - 1));
}

double sample_median(const Eigen::VectorXd& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  const int n = static_cast<int>(v.size());
  std::nth_element(v.begin(), v.begin() + (n - 1) / 2, v.end());
  double med = v[(n - 1) / 2];
  if (n % 2 == 0) {
    const double upper =
        *std::min_element(v.begin() + (n - 1) / 2 + 1, v.end());
    med = 0.5 * (med + upper);
  }
  return med;
}

double quadrant_sample(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(x.size());
  const double mx = sample_median(x);
  const double my = sample_median(y);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += sign_of(x[i] - mx) * sign_of(y[i] - my);
  return s / n;
}

// Van der Waerden score correlation: normal scores of the ranks, normalised
// by the deterministic score sum of squares.
double gauss_rank_sample(const std::vector<double>& ranks_x,
                         const std::vector<double>& ranks_y) {
  const int n = static_cast<int>(ranks_x.size());
  double num = 0.0;
  for (int i = 0; i < n; ++i)
    num += std_normal_quantile(ranks_x[i] / (n + 1.0)) *
           std_normal_quantile(ranks_y[i] / (n + 1.0));
  double den = 0.0;
  for (int i = 1; i <= n; ++i) {
    const double q = std_normal_quantile(i / (n + 1.0));
    den += q * q;
  }
  return num / den;
}

// Small-sample consistency factors for Qn below n = 100.
double qn_small_sample_factor(int n) {
  static const double table[] = {0.399, 0.994, 0.512, 0.844,
                                 0.611, 0.857, 0.669, 0.872};
  if (n < 2) throw std::domain_error("qn_scale_estimate: n must be >= 2");
  if (n <= 9) return table[n - 2];
  if (n >= 100) return 1.0;
  return n % 2 == 1 ? n / (n + 1.4) : n / (n + 3.8);
}

}  // namespace

double qn_scale_estimate(const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw std::domain_error("qn_scale_estimate: n must be >= 2");
  std::vector<double> diffs;
  diffs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int l = i + 1; l < n; ++l) diffs.push_back(std::fabs(x[i] - x[l]));
  const long h = n / 2 + 1;
  const long k = h * (h - 1) / 2;  // 1-based order statistic
  std::nth_element(diffs.begin(), diffs.begin() + (k - 1), diffs.end());
  return qn_small_sample_factor(n) * qn_consistency_factor() * diffs[k - 1];
}

// ---------------------------------------------------------------------------
// Chi-square helpers
// ---------------------------------------------------------------------------

namespace {

// Regularised lower incomplete gamma P(a, x): series for x < a + 1,
// continued fraction (modified Lentz) for the complement otherwise.
double reg_lower_gamma(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0))
    throw std::domain_error("reg_lower_gamma: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int k = 1; k < 1000; ++k) {
      term *= x / (a + k);
      sum += term;
      if (term < sum * 1e-16) break;
    }
    return std::min(1.0, std::exp(log_prefix) * sum);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double cf = d;
  for (int k = 1; k < 1000; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    cf *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return std::max(0.0, 1.0 - std::exp(log_prefix) * cf);
}

}  // namespace

double chi_squared_cdf(double x, double dof) {
  if (!(dof > 0.0))
    throw std::domain_error("chi_squared_cdf: dof must be positive");
  if (x <= 0.0) return 0.0;
  return reg_lower_gamma(0.5 * dof, 0.5 * x);
}

double chi_squared_quantile(double p, double dof) {
  if (!(p > 0.0) || !(p < 1.0))
    throw std::domain_error("chi_squared_quantile: p must be in (0, 1)");
  double lo = 0.0;
  double hi = dof + 10.0;
  for (int i = 0; i < 200 && chi_squared_cdf(hi, dof) < p; ++i) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (chi_squared_cdf(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// FastMCD
// ---------------------------------------------------------------------------

void FastMCDOptions::validate() const {
  if (!(subset_fraction > 0.5) || !(subset_fraction < 1.0))
    throw ConfigError("FastMCDOptions: subset_fraction must be in (0.5, 1)");
  if (!(reweight_cutoff > 0.0) || !(reweight_cutoff < 1.0))
    throw ConfigError("FastMCDOptions: reweight_cutoff must be in (0, 1)");
  if (starts < 1) throw ConfigError("FastMCDOptions: starts must be >= 1");
}

namespace {

// Platform-stable bounded integer from raw generator bits.
int bounded_index(std::mt19937_64& gen, int n) {
  return static_cast<int>(
      (static_cast<unsigned __int128>(gen()) * static_cast<unsigned>(n)) >> 64);
}

struct LocationScatter {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // maximum-likelihood form (1/h)
};

LocationScatter subset_moments(const Eigen::MatrixXd& data,
                               const std::vector<int>& subset) {
  const int p = static_cast<int>(data.cols());
  const int h = static_cast<int>(subset.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (int i : subset) mean += data.row(i).transpose();
  mean /= h;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
  for (int i : subset) {
    const Eigen::VectorXd d = data.row(i).transpose() - mean;
    cov += d * d.transpose();
  }
  cov /= h;
  return {std::move(mean), std::move(cov)};
}

// Sorts all points by squared Mahalanobis distance; the (distance, index)
// key keeps the order reproducible under ties.
std::vector<int> closest_h(const Eigen::MatrixXd& data,
                           const LocationScatter& ls, int h) {
  const int n = static_cast<int>(data.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(ls.cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("fast_mcd: singular scatter in concentration step");
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd d = data.row(i).transpose() - ls.mean;
    dist[i] = {d.dot(llt.solve(d)), i};
  }
  std::sort(dist.begin(), dist.end());
  std::vector<int> subset(h);
  for (int i = 0; i < h; ++i) subset[i] = dist[i].second;
  return subset;
}

double log_det(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    return -std::numeric_limits<double>::infinity();
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

// alpha / F_{chi2(p+2)}(chi2_p-quantile(alpha)): rescales a truncated-subset
// covariance to consistency at the normal model.
double mcd_consistency(double alpha, int p) {
  const double q = chi_squared_quantile(alpha, p);
  return alpha / chi_squared_cdf(q, p + 2.0);
}

}  // namespace

Eigen::MatrixXd fast_mcd(const Eigen::MatrixXd& data,
                         const FastMCDOptions& options,
                         FastMCDDiagnostics* diagnostics) {
  options.validate();
  const int n = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  if (p < 1) throw std::domain_error("fast_mcd: empty data");
  if (n <= 2 * p)
    throw std::domain_error("fast_mcd: need n > 2p observations");
  const int h = static_cast<int>(std::ceil(options.subset_fraction * n));

  std::mt19937_64 gen(options.seed);
  std::vector<int> pool(n);
  double best_logdet = std::numeric_limits<double>::infinity();
  LocationScatter best;
  int total_steps = 0;

  for (int start = 0; start < options.starts; ++start) {
    // Elemental (p+1)-subset, grown until its scatter is invertible.
    std::iota(pool.begin(), pool.end(), 0);
    int m = 0;
    std::vector<int> subset;
    auto draw_into_subset = [&]() {
      const int r = m + bounded_index(gen, n - m);
      std::swap(pool[m], pool[r]);
      subset.push_back(pool[m]);
      ++m;
    };
    for (int i = 0; i <= p; ++i) draw_into_subset();
    LocationScatter ls = subset_moments(data, subset);
    while (Eigen::LLT<Eigen::MatrixXd>(ls.cov).info() != Eigen::Success &&
           m < n) {
      draw_into_subset();
      ls = subset_moments(data, subset);
    }
    if (Eigen::LLT<Eigen::MatrixXd>(ls.cov).info() != Eigen::Success)
      continue;  // all points lie in a lower-dimensional flat

    // Concentration steps until the determinant stops decreasing.
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 200; ++step) {
      const std::vector<int> hs = closest_h(data, ls, h);
      ls = subset_moments(data, hs);
      ++total_steps;
      const double ld = log_det(ls.cov);
      if (ld >= prev - 1e-12) break;
      prev = ld;
    }
    const double ld = log_det(ls.cov);
    if (ld < best_logdet) {
      best_logdet = ld;
      best = ls;
    }
  }

  if (!std::isfinite(best_logdet))
    throw NumericalError("fast_mcd: no start produced a nonsingular scatter");
  if (diagnostics != nullptr) {
    diagnostics->best_determinant = std::exp(best_logdet);
    diagnostics->c_steps = total_steps;
  }

  const double alpha = static_cast<double>(h) / n;
  Eigen::MatrixXd scatter = mcd_consistency(alpha, p) * best.cov;

  if (options.reweight) {
    const double cutoff = chi_squared_quantile(options.reweight_cutoff, p);
    Eigen::LLT<Eigen::MatrixXd> llt(scatter);
    if (llt.info() != Eigen::Success)
      throw NumericalError("fast_mcd: singular scatter before reweighting");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    int kept = 0;
    std::vector<int> keep;
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd d = data.row(i).transpose() - best.mean;
      if (d.dot(llt.solve(d)) <= cutoff) {
        keep.push_back(i);
        mean += data.row(i).transpose();
        ++kept;
      }
    }
    if (kept <= p)
      throw NumericalError("fast_mcd: reweighting kept too few points");
    mean /= kept;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
    for (int i : keep) {
      const Eigen::VectorXd d = data.row(i).transpose() - mean;
      cov += d * d.transpose();
    }
    cov /= kept;
    scatter = mcd_consistency(options.reweight_cutoff, p) * cov;
  }
  return scatter;
}

// ---------------------------------------------------------------------------
// Finite-sample dispatch
// ---------------------------------------------------------------------------

Eigen::MatrixXd finite_sample_estimate(PluginKind kind,
                                       const Eigen::MatrixXd& data,
                                       const FastMCDOptions& options) {
  const int n = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  if (p < 1) throw std::domain_error("finite_sample_estimate: empty data");
  if (n < 4) throw std::domain_error("finite_sample_estimate: need n >= 4");

  if (kind == PluginKind::Classical) {
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Eigen::MatrixXd centered = data.rowwise() - mean;
    return (centered.transpose() * centered) / n;
  }
  if (kind == PluginKind::FastMCD) return fast_mcd(data, options);

  std::vector<std::vector<double>> ranks(p);
  if (kind == PluginKind::Spearman || kind == PluginKind::GaussRank)
    for (int j = 0; j < p; ++j) ranks[j] = average_ranks(data.col(j));

  std::vector<double> scales(p);
  parallel::parallel_for(p, [&](int j) {
    scales[j] = qn_scale_estimate(data.col(j));
  });

  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < p; ++j)
    for (int k = j + 1; k < p; ++k) pairs.emplace_back(j, k);
  std::vector<double> corr(pairs.size());
  parallel::parallel_for(static_cast<int>(pairs.size()), [&](int i) {
    const auto [j, k] = pairs[i];
    double raw = 0.0;
    switch (kind) {
      case PluginKind::Spearman: raw = pearson(ranks[j], ranks[k]); break;
      case PluginKind::GaussRank:
        raw = gauss_rank_sample(ranks[j], ranks[k]);
        break;
      case PluginKind::Kendall:
        raw = kendall_sample(data.col(j), data.col(k));
        break;
      case PluginKind::Quadrant:
        raw = quadrant_sample(data.col(j), data.col(k));
        break;
      default: throw std::logic_error("finite_sample_estimate: unreachable");
    }
    corr[i] = fisher_transform(kind, std::clamp(raw, -1.0, 1.0));
  });

  Eigen::MatrixXd out(p, p);
  for (int j = 0; j < p; ++j) out(j, j) = scales[j] * scales[j];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [j, k] = pairs[i];
    out(j, k) = scales[j] * scales[k] * corr[i];
    out(k, j) = out(j, k);
  }
  return psd_repair(out);
}

}  // namespace robglasso
