#include "robglasso/asv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "robglasso/contamination.hpp"
#include "robglasso/errors.hpp"
#include "robglasso/influence.hpp"
#include "robglasso/parallel.hpp"

namespace robglasso {

namespace {

constexpr long kMCBlock = 4096;
constexpr double kMCDropCeiling = 0.005;

Eigen::VectorXd vec_of(const Eigen::MatrixXd& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

// One work unit of the integration: accumulated outer products plus, for
// Monte Carlo, entrywise squares backing the standard errors. Workers fill
// disjoint slots; the reduction walks them in fixed order.
struct Accumulator {
  Eigen::MatrixXd outer;
  Eigen::MatrixXd outer_sq;
  long kept = 0;
  long dropped = 0;
  std::string error;
};

ASVMatrix gauss_hermite_asv(PluginKind kind, const GaussianModel& model,
                            const QuadratureSpec& quad) {
  const int p = model.dim();
  const QuadratureRule rule = gauss_hermite(quad.order);
  const Eigen::MatrixXd& chol = model.cholesky_factor();

  // The integrand is even in z, so for even orders (whose node sets contain
  // no zero) each antipodal node pair is evaluated once at doubled weight,
  // restricting the first axis to its lower half.
  const bool halved = quad.order % 2 == 0;
  const int slabs = halved ? quad.order / 2 : quad.order;
  const double reflection = halved ? 2.0 : 1.0;
  long inner = 1;
  for (int k = 1; k < p; ++k) inner *= quad.order;

  std::vector<Accumulator> acc(static_cast<std::size_t>(slabs));
  parallel::parallel_for(slabs, [&](int i0) {
    Accumulator& slot = acc[static_cast<std::size_t>(i0)];
    slot.outer = Eigen::MatrixXd::Zero(p * p, p * p);
    try {
      Eigen::VectorXd y(p);
      std::vector<int> idx(static_cast<std::size_t>(p), 0);
      idx[0] = i0;
      for (long step = 0; step < inner; ++step) {
        double weight = reflection * rule.weights(i0);
        y(0) = rule.nodes(i0);
        for (int k = 1; k < p; ++k) {
          weight *= rule.weights(idx[static_cast<std::size_t>(k)]);
          y(k) = rule.nodes(idx[static_cast<std::size_t>(k)]);
        }
        const Eigen::VectorXd u =
            vec_of(plugin_if(kind, model, chol * y).matrix);
        slot.outer.noalias() += weight * u * u.transpose();
        for (int k = p - 1; k >= 1; --k) {
          if (++idx[static_cast<std::size_t>(k)] < quad.order) break;
          idx[static_cast<std::size_t>(k)] = 0;
        }
      }
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
  });

  ASVMatrix out;
  out.value = Eigen::MatrixXd::Zero(p * p, p * p);
  for (const Accumulator& slot : acc) {
    if (!slot.error.empty())
      throw NumericalError("plugin_asv: node evaluation failed: " +
                           slot.error);
    out.value += slot.outer;
  }
  out.value = ((out.value + out.value.transpose()) / 2.0).eval();
  out.quadrature = quad;
  out.method = "tensor-gauss-hermite";
  return out;
}

ASVMatrix monte_carlo_asv(PluginKind kind, const GaussianModel& model,
                          const QuadratureSpec& quad) {
  const int p = model.dim();
  const Eigen::MatrixXd draws =
      model.sample(static_cast<int>(quad.samples), quad.seed);
  const long blocks = (quad.samples + kMCBlock - 1) / kMCBlock;

  std::vector<Accumulator> acc(static_cast<std::size_t>(blocks));
  parallel::parallel_for(static_cast<int>(blocks), [&](int b) {
    Accumulator& slot = acc[static_cast<std::size_t>(b)];
    slot.outer = Eigen::MatrixXd::Zero(p * p, p * p);
    slot.outer_sq = Eigen::MatrixXd::Zero(p * p, p * p);
    const long lo = b * kMCBlock;
    const long hi = std::min(quad.samples, lo + kMCBlock);
    for (long i = lo; i < hi; ++i) {
      try {
        const Eigen::VectorXd u =
            vec_of(plugin_if(kind, model, draws.row(i).transpose()).matrix);
        const Eigen::MatrixXd outer = u * u.transpose();
        slot.outer += outer;
        slot.outer_sq += outer.cwiseAbs2();
        ++slot.kept;
      } catch (const NumericalError&) {
        // Draw close enough to a coordinate axis that the difference
        // quotients straddle a median kink. The influence is bounded
        // there, so skipping rare draws biases the integral less than
        // the Monte Carlo noise. Accounted for and capped below.
        ++slot.dropped;
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  });

  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(p * p, p * p);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(p * p, p * p);
  long kept = 0;
  long dropped = 0;
  for (const Accumulator& slot : acc) {
    if (!slot.error.empty())
      throw NumericalError("plugin_asv: sample evaluation failed: " +
                           slot.error);
    m1 += slot.outer;
    m2 += slot.outer_sq;
    kept += slot.kept;
    dropped += slot.dropped;
  }
  if (dropped > kMCDropCeiling * static_cast<double>(quad.samples)) {
    std::ostringstream msg;
    msg << "plugin_asv: " << dropped << " of " << quad.samples
        << " Monte Carlo draws were rejected";
    throw NumericalError(msg.str());
  }
  const double n = static_cast<double>(kept);
  ASVMatrix out;
  out.value = ((m1 + m1.transpose()) / (2.0 * n)).eval();
  out.mc_stderr = ((m2.array() / n - out.value.array().square())
                       .max(0.0) / (n - 1.0))
                      .sqrt()
                      .matrix();
  out.quadrature = quad;
  out.method = "monte-carlo";
  out.samples_dropped = dropped;
  return out;
}

}  // namespace

ASVMatrix plugin_asv(PluginKind kind, const GaussianModel& model,
                     const QuadratureSpec& quad) {
  quad.validate();
  if (kind == PluginKind::FastMCD)
    throw std::domain_error("plugin_asv: FastMCD has no functional influence");
  if (kind == PluginKind::Quadrant &&
      quad.rule != QuadratureSpec::Rule::MonteCarlo)
    throw ConfigError(
        "plugin_asv: the quadrant influence is discontinuous on the "
        "coordinate axes; use the monte-carlo rule");
  return quad.rule == QuadratureSpec::Rule::MonteCarlo
             ? monte_carlo_asv(kind, model, quad)
             : gauss_hermite_asv(kind, model, quad);
}

Eigen::MatrixXd glasso_asv(const PrecisionEstimate& estimate,
                           const SupportPermutation& d,
                           const Eigen::MatrixXd& plugin_asv_matrix) {
  const int p = static_cast<int>(estimate.omega.rows());
  if (plugin_asv_matrix.rows() != p * p || plugin_asv_matrix.cols() != p * p)
    throw std::domain_error("plug-in ASV does not match the estimate");
  if (!plugin_asv_matrix.allFinite())
    throw std::domain_error("plug-in ASV has non-finite entries");

  const Eigen::MatrixXd k = restricted_kron(estimate, d);
  const int s = d.nonzero_count;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  if (eig.info() != Eigen::Success)
    throw NumericalError("restricted system eigendecomposition failed");
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > hi * 1e-14)) {
    std::ostringstream msg;
    msg << "restricted influence system is numerically singular"
        << " (condition "
        << (lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity())
        << ")";
    throw NumericalError(msg.str());
  }

  Eigen::MatrixXd restricted(s, s);
  for (int b = 0; b < s; ++b)
    for (int a = 0; a < s; ++a)
      restricted(a, b) = plugin_asv_matrix(d.perm[static_cast<std::size_t>(a)],
                                           d.perm[static_cast<std::size_t>(b)]);

  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  const Eigen::MatrixXd half = llt.solve(restricted);
  Eigen::MatrixXd out = llt.solve(half.transpose()).transpose();
  return ((out + out.transpose()) / 2.0).eval();
}

void EfficiencyOptions::validate() const {
  if (smooth_order < 8)
    throw ConfigError("EfficiencyOptions: smooth_order must be >= 8");
  if (mc_batches < 2)
    throw ConfigError("EfficiencyOptions: mc_batches must be >= 2");
  if (mc_samples % mc_batches != 0)
    throw ConfigError(
        "EfficiencyOptions: mc_samples must be a multiple of mc_batches");
  if (mc_samples / mc_batches < 10000)
    throw ConfigError(
        "EfficiencyOptions: each Monte Carlo batch needs >= 10000 samples");
}

namespace {

// Per-kind propagated ASV values at the requested component slots, plus
// batch-mean standard errors when the integration is stochastic.
struct KindColumn {
  std::vector<double> value;
  std::vector<double> stderr_;
  std::string method;
};

KindColumn kind_column(PluginKind kind, const GaussianModel& model,
                       const PenaltySpec& penalty,
                       const std::vector<std::pair<int, int>>& components,
                       const EfficiencyOptions& options) {
  const int p = model.dim();
  const PrecisionEstimate est =
      glasso_solve(pairwise_cov(kind, model), penalty);
  const SupportPermutation d = support_permutation(est);

  std::vector<int> slots;
  for (const auto& [i, j] : components) {
    const int vi = j * p + i;
    const auto it = std::find(d.perm.begin(), d.perm.begin() + d.nonzero_count,
                              vi);
    if (it == d.perm.begin() + d.nonzero_count) {
      std::ostringstream msg;
      msg << "efficiency_table: component " << i + 1 << ":" << j + 1
          << " is off the support at this penalty";
      throw ConfigError(msg.str());
    }
    slots.push_back(static_cast<int>(it - d.perm.begin()));
  }

  KindColumn col;
  col.value.assign(components.size(), 0.0);
  col.stderr_.assign(components.size(), 0.0);
  if (kind == PluginKind::Quadrant) {
    const int nb = options.mc_batches;
    const long per = options.mc_samples / nb;
    std::vector<std::vector<double>> batch(
        components.size(), std::vector<double>(static_cast<std::size_t>(nb)));
    for (int b = 0; b < nb; ++b) {
      const ASVMatrix pasv = plugin_asv(
          kind, model,
          QuadratureSpec::monte_carlo(
              per, derive_seed(options.seed, static_cast<std::uint64_t>(b))));
      const Eigen::MatrixXd g = glasso_asv(est, d, pasv.value);
      for (std::size_t c = 0; c < slots.size(); ++c)
        batch[c][static_cast<std::size_t>(b)] =
            g(slots[c], slots[c]);
    }
    for (std::size_t c = 0; c < slots.size(); ++c) {
      double mean = 0.0, sq = 0.0;
      for (double v : batch[c]) {
        mean += v;
        sq += v * v;
      }
      mean /= nb;
      col.value[c] = mean;
      col.stderr_[c] = std::sqrt((sq / nb - mean * mean) / (nb - 1));
    }
    col.method = "monte-carlo";
  } else {
    const ASVMatrix pasv = plugin_asv(
        kind, model, QuadratureSpec::tensor_gh(options.smooth_order));
    const Eigen::MatrixXd g = glasso_asv(est, d, pasv.value);
    for (std::size_t c = 0; c < slots.size(); ++c)
      col.value[c] = g(slots[c], slots[c]);
    col.method = pasv.method;
  }
  return col;
}

}  // namespace

EfficiencyTable efficiency_table(
    const GaussianModel& model, const PenaltySpec& penalty,
    const std::vector<PluginKind>& kinds,
    const std::vector<std::pair<int, int>>& components,
    const EfficiencyOptions& options) {
  options.validate();
  penalty.validate();
  if (kinds.empty())
    throw ConfigError("efficiency_table: no plug-in kinds requested");
  if (components.empty())
    throw ConfigError("efficiency_table: no components requested");
  const int p = model.dim();
  for (const auto& [i, j] : components)
    if (i < 0 || i >= p || j < 0 || j >= p)
      throw ConfigError("efficiency_table: component index out of range");
  for (PluginKind kind : kinds)
    if (kind == PluginKind::FastMCD)
      throw ConfigError(
          "efficiency_table: FastMCD has no functional influence path; its "
          "columns are omitted from the table");

  const KindColumn classical =
      kind_column(PluginKind::Classical, model, penalty, components, options);

  EfficiencyTable table;
  table.lambda = penalty.lambda;
  for (PluginKind kind : kinds) {
    const KindColumn col =
        kind == PluginKind::Classical
            ? classical
            : kind_column(kind, model, penalty, components, options);
    for (std::size_t c = 0; c < components.size(); ++c) {
      EfficiencyEntry e;
      e.row = components[c].first;
      e.col = components[c].second;
      e.kind = kind;
      e.asv = col.value[c];
      e.efficiency = classical.value[c] / col.value[c];
      e.mc_stderr = e.efficiency * col.stderr_[c] / col.value[c];
      e.method = col.method;
      table.entries.push_back(e);
    }
  }
  return table;
}

std::string EfficiencyTable::csv() const {
  std::ostringstream out;
  out << "component,kind,asv,efficiency,mc_stderr,method\n";
  char buf[160];
  for (const EfficiencyEntry& e : entries) {
    std::snprintf(buf, sizeof buf, "%d:%d,%s,%.17g,%.17g,%.17g,%s\n",
                  e.row + 1, e.col + 1, plugin_name(e.kind), e.asv,
                  e.efficiency, e.mc_stderr, e.method.c_str());
    out << buf;
  }
  return out.str();
}

}  // namespace robglasso
