// Acceptance gate for the library and the command-line runner. Every
// criterion prints exactly one PASS or FAIL line with the measured margin;
// the process exits nonzero when any criterion fails. Tolerances are pinned
// here, next to the checks they gate.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robglasso/asv.hpp"
#include "robglasso/contamination.hpp"
#include "robglasso/cov_plugins.hpp"
#include "robglasso/errors.hpp"
#include "robglasso/glasso.hpp"
#include "robglasso/influence.hpp"
#include "robglasso/model.hpp"
#include "robglasso/sensitivity.hpp"

namespace {

using namespace robglasso;
namespace fs = std::filesystem;

constexpr double kInverseTol = 1e-8;         // exact-inverse recovery, entrywise
constexpr double kSolveBudgetSec = 1.0;      // exact-inverse runtime cap
constexpr double kOracleRelTol = 1e-3;       // closed form vs quotient, Frobenius
constexpr double kOracleBudgetSec = 600.0;   // oracle-grid runtime cap
constexpr double kSandwichTol = 1e-10;       // full-support reduction, entrywise
constexpr double kSphereSlack = 1e-6;        // worst-direction scan exceedance
constexpr double kConsistencyTol = 1e-6;     // pairwise functionals vs the model
constexpr double kQnTol = 1e-8;              // Qn functional at the standard normal
constexpr double kTableBand = 0.05;          // efficiency bands, smooth kinds
constexpr double kTableBandQuadrant = 0.07;  // efficiency band, quadrant
constexpr double kTableBudgetSec = 2700.0;   // efficiency-table runtime cap
constexpr double kSCGrowthMin = 2.0;         // classical curve growth factor
constexpr double kSCFlatMax = 1.5;           // rank-based curve growth cap
constexpr double kSCPairwiseRel = 0.15;      // kendall vs spearman, pointwise

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

Eigen::MatrixXd paper_sigma() {
  Eigen::MatrixXd s(3, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) s(i, j) = std::pow(0.5, std::abs(i - j));
  }
  return s;
}

Eigen::MatrixXd paper_omega() {
  Eigen::MatrixXd w(3, 3);
  w << 4.0 / 3.0, -2.0 / 3.0, 0.0,  //
      -2.0 / 3.0, 5.0 / 3.0, -2.0 / 3.0,  //
      0.0, -2.0 / 3.0, 4.0 / 3.0;
  return w;
}

Eigen::VectorXd vec3(double a, double b, double c) {
  Eigen::VectorXd z(3);
  z << a, b, c;
  return z;
}

const std::vector<PluginKind> kFunctionalKinds = {
    PluginKind::Classical, PluginKind::GaussRank, PluginKind::Spearman,
    PluginKind::Kendall, PluginKind::Quadrant};

// Plug-in influence from the same Richardson pair as the solver-path
// quotient, so closed-form vs quotient comparisons isolate the propagation.
PluginIF matched_plugin_if(PluginKind kind, const GaussianModel& model,
                           const Eigen::VectorXd& z, double coarse,
                           double fine) {
  const Eigen::MatrixXd clean = pairwise_cov(kind, model);
  const Eigen::MatrixXd qc = contaminated_plugin_cov(kind, model, z, coarse);
  const Eigen::MatrixXd qf = contaminated_plugin_cov(kind, model, z, fine);
  PluginIF out;
  out.z = z;
  out.matrix = 2.0 * ((qf - clean) / fine) - (qc - clean) / coarse;
  out.step = coarse;
  return out;
}

// 1. The unpenalised solve at the model covariance returns its inverse.
std::string exact_inverse_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  PenaltySpec penalty;
  penalty.lambda = 0.0;
  const PrecisionEstimate est = glasso_solve(paper_sigma(), penalty);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  const double err = (est.omega - paper_omega()).cwiseAbs().maxCoeff();
  require(err <= kInverseTol, "max entry error " + num(err));
  require(seconds < kSolveBudgetSec, "runtime " + num(seconds) + " s");
  return "max entry error " + num(err) + ", " + num(seconds) + " s";
}

// 2. The documented penalty recovers the sparsity pattern exactly.
std::string sparsity_pattern_recovery() {
  PenaltySpec penalty;
  penalty.lambda = 8e-4;
  const PrecisionEstimate est = glasso_solve(paper_sigma(), penalty);
  require(est.omega(0, 2) == 0.0 && est.omega(2, 0) == 0.0,
          "corner entries not exactly zero");
  const Eigen::MatrixXd truth = paper_omega();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const bool expected = truth(i, j) != 0.0;
      require(est.support(i, j) == expected,
              "support mismatch at (" + std::to_string(i + 1) + "," +
                  std::to_string(j + 1) + ")");
    }
  }
  return "support equals the inverse pattern, corner zeros exact";
}

// 3. Closed-form influence agrees with the definitional difference quotient
// over the z-grid, in the unpenalised regime at the default steps and in
// the penalised regime at steps short enough to stay inside the protected
// zero's stability window.
std::string influence_oracle_agreement() {
  const auto t0 = std::chrono::steady_clock::now();
  const GaussianModel model = GaussianModel::toeplitz3();
  std::vector<Eigen::VectorXd> grid;
  for (double a : {-6.0, -3.0, 0.0, 3.0, 6.0}) {
    for (double b : {-6.0, -3.0, 0.0, 3.0, 6.0}) grid.push_back(vec3(a, b, 0));
  }

  double worst = 0.0;
  PenaltySpec unpenalised;
  unpenalised.lambda = 0.0;
  for (PluginKind kind : kFunctionalKinds) {
    const PrecisionEstimate est =
        glasso_solve(pairwise_cov(kind, model), unpenalised);
    const SupportPermutation d = full_support_permutation(3);
    for (const auto& z : grid) {
      const InfluenceEvaluation closed =
          glasso_if(est, d, plugin_if(kind, model, z));
      const Eigen::MatrixXd fd = glasso_if_fd(model, kind, unpenalised, z);
      worst = std::max(worst, (closed.matrix - fd).norm() / fd.norm());
    }
  }
  require(worst <= kOracleRelTol,
          "unpenalised relative gap " + num(worst));

  PenaltySpec penalised;
  penalised.lambda = 8e-4;
  penalised.tolerance = 1e-12;
  const double coarse = 1e-8;
  const double fine = 5e-9;
  double worst_pen = 0.0;
  for (PluginKind kind : kFunctionalKinds) {
    const PrecisionEstimate est =
        glasso_solve(pairwise_cov(kind, model), penalised);
    const SupportPermutation d = support_permutation(est);
    for (const auto& z : grid) {
      const PluginIF plugin = matched_plugin_if(kind, model, z, coarse, fine);
      const InfluenceEvaluation closed = glasso_if(est, d, plugin);
      require(closed.matrix(0, 2) == 0.0 && closed.matrix(2, 0) == 0.0,
              "protected zero not exact in the closed form");
      const Eigen::MatrixXd fd =
          glasso_if_fd(model, kind, penalised, z, coarse, fine);
      worst_pen = std::max(worst_pen, (closed.matrix - fd).norm() / fd.norm());
    }
  }
  require(worst_pen <= kOracleRelTol,
          "penalised relative gap " + num(worst_pen));

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  require(seconds < kOracleBudgetSec, "runtime " + num(seconds) + " s");
  return "relative gaps " + num(worst) + " (lambda 0) / " + num(worst_pen) +
         " (lambda 8e-4), " + num(seconds) + " s";
}

// 4. On a full support the propagation reduces to the dense sandwich.
std::string full_support_reduction() {
  const GaussianModel model = GaussianModel::toeplitz3();
  PenaltySpec penalty;
  penalty.lambda = 0.0;
  double worst = 0.0;
  for (PluginKind kind : {PluginKind::Classical, PluginKind::Kendall}) {
    const PrecisionEstimate est =
        glasso_solve(pairwise_cov(kind, model), penalty);
    const SupportPermutation d = full_support_permutation(3);
    for (const auto& z : {vec3(3, -3, 0), vec3(1, 2, -1), vec3(-6, 0, 6)}) {
      const PluginIF plugin = plugin_if(kind, model, z);
      const Eigen::MatrixXd propagated = glasso_if(est, d, plugin).matrix;
      const Eigen::MatrixXd sandwich =
          -est.omega * plugin.matrix * est.omega;
      worst = std::max(worst,
                       (propagated - sandwich).cwiseAbs().maxCoeff());
    }
  }
  require(worst <= kSandwichTol, "max entry gap " + num(worst));
  return "max entry gap " + num(worst);
}

// 5. The reported worst direction is the extreme eigenvector and no unit
// contamination location beats its squared influence norm.
std::string worst_direction_check() {
  PenaltySpec penalty;
  penalty.lambda = 0.0;
  const Eigen::MatrixXd sigma = paper_sigma();
  const PrecisionEstimate est = glasso_solve(sigma, penalty);
  const MaxDirection md = max_direction_unpenalized(est.omega);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(est.omega);
  const Eigen::VectorXd lambdas = es.eigenvalues();
  auto g = [](double x) { return x * x * x * x - 2.0 * x * x * x; };
  require(g(lambdas(2)) > g(lambdas(0)),
          "largest eigenvalue does not dominate the growth term");
  const double align = std::abs(md.direction.dot(es.eigenvectors().col(2)));
  require(1.0 - align <= 1e-8, "direction misaligned by " + num(1.0 - align));

  std::mt19937_64 gen(2026);
  std::normal_distribution<double> normal(0.0, 1.0);
  double scan_max = 0.0;
  for (int k = 0; k < 10000; ++k) {
    Eigen::VectorXd z(3);
    do {
      for (int i = 0; i < 3; ++i) z(i) = normal(gen);
    } while (z.norm() < 1e-8);
    z /= z.norm();
    const Eigen::MatrixXd influence =
        -est.omega * (z * z.transpose() - sigma) * est.omega;
    scan_max = std::max(scan_max, influence.squaredNorm());
  }
  require(scan_max <= md.max_value + kSphereSlack,
          "scan exceeds the maximum by " + num(scan_max - md.max_value));
  return "alignment 1-" + num(1.0 - align) + ", scan margin " +
         num(md.max_value - scan_max);
}

// 6. Pairwise functionals are Fisher consistent at the clean model and the
// Qn functional is unit at the standard normal.
std::string fisher_consistency() {
  const GaussianModel model = GaussianModel::toeplitz3();
  const Eigen::MatrixXd sigma = paper_sigma();
  double worst = 0.0;
  for (PluginKind kind : {PluginKind::GaussRank, PluginKind::Spearman,
                          PluginKind::Kendall, PluginKind::Quadrant}) {
    worst = std::max(
        worst, (pairwise_cov(kind, model) - sigma).cwiseAbs().maxCoeff());
  }
  require(worst <= kConsistencyTol, "max entry error " + num(worst));

  const GaussianModel standard(Eigen::MatrixXd::Identity(2, 2));
  const double qn =
      std::sqrt(pairwise_cov(PluginKind::Kendall, standard)(0, 0));
  require(std::abs(qn - 1.0) <= kQnTol,
          "Qn at the standard normal is " + num(qn));
  return "max entry error " + num(worst) + ", Qn error " +
         num(std::abs(qn - 1.0));
}

// 7. The efficiency table reproduces the published pairwise columns.
std::string efficiency_reproduction() {
  const auto t0 = std::chrono::steady_clock::now();
  const GaussianModel model = GaussianModel::toeplitz3();
  PenaltySpec penalty;
  penalty.lambda = 8e-4;
  EfficiencyOptions options;
  options.smooth_order = 24;
  options.mc_samples = 200000;
  options.mc_batches = 20;
  options.seed = 1;
  const std::vector<PluginKind> kinds = {
      PluginKind::GaussRank, PluginKind::Kendall, PluginKind::Spearman,
      PluginKind::Quadrant};
  const std::vector<std::pair<int, int>> components = {{0, 0}, {1, 1}, {1, 0}};
  const EfficiencyTable table =
      efficiency_table(model, penalty, kinds, components, options);

  struct Expected {
    PluginKind kind;
    double values[3];
    double band;
  };
  const Expected expected[] = {
      {PluginKind::GaussRank, {0.8210, 0.8085, 0.9563}, kTableBand},
      {PluginKind::Kendall, {0.8150, 0.8091, 0.8725}, kTableBand},
      {PluginKind::Spearman, {0.8097, 0.8027, 0.8491}, kTableBand},
      {PluginKind::Quadrant, {0.4866, 0.4187, 0.3004}, kTableBandQuadrant},
  };
  double worst = 0.0;
  for (const auto& exp : expected) {
    for (int c = 0; c < 3; ++c) {
      double got = -1.0;
      for (const auto& e : table.entries) {
        if (e.kind == exp.kind && e.row == components[c].first &&
            e.col == components[c].second) {
          got = e.efficiency;
        }
      }
      require(got >= 0.0, "missing table entry");
      const double gap = std::abs(got - exp.values[c]);
      worst = std::max(worst, gap);
      require(gap <= exp.band,
              std::string(plugin_name(exp.kind)) + " component " +
                  std::to_string(components[c].first + 1) + ":" +
                  std::to_string(components[c].second + 1) + " off by " +
                  num(gap));
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  require(seconds < kTableBudgetSec, "runtime " + num(seconds) + " s");
  return "max deviation " + num(worst) + ", " + num(seconds) + " s";
}

// 8. Sensitivity curves: the classical surface keeps growing with the
// contamination radius while the rank-based surfaces flatten, and kendall
// tracks spearman pointwise.
std::string sensitivity_curve_gates() {
  const GaussianModel model = GaussianModel::toeplitz3();
  SCExperiment exp;
  exp.penalty.lambda = 8e-4;
  exp.n = 1000;
  exp.replications = 50;
  exp.seed = 42;
  exp.grid = {vec3(3, -3, 0), vec3(6, -6, 0), vec3(6, 6, 0), vec3(-3, 0, 0)};

  auto norms = [&](PluginKind kind) {
    exp.kind = kind;
    const SCSurface surface = sc_surface(model, exp);
    std::vector<double> out;
    for (const auto& point : surface.points) {
      out.push_back(point.frobenius_norm);
    }
    return out;
  };

  const auto classical = norms(PluginKind::Classical);
  const auto kendall = norms(PluginKind::Kendall);
  const auto spearman = norms(PluginKind::Spearman);

  const double classical_growth = classical[1] / classical[0];
  const double kendall_growth = kendall[1] / kendall[0];
  const double spearman_growth = spearman[1] / spearman[0];
  require(classical_growth > kSCGrowthMin,
          "classical growth " + num(classical_growth));
  require(kendall_growth < kSCFlatMax, "kendall growth " + num(kendall_growth));
  require(spearman_growth < kSCFlatMax,
          "spearman growth " + num(spearman_growth));

  double worst_rel = 0.0;
  for (std::size_t i = 0; i < kendall.size(); ++i) {
    worst_rel =
        std::max(worst_rel, std::abs(kendall[i] - spearman[i]) / spearman[i]);
  }
  require(worst_rel < kSCPairwiseRel,
          "kendall vs spearman differ by " + num(worst_rel));
  return "growth " + num(classical_growth) + " vs " + num(kendall_growth) +
         "/" + num(spearman_growth) + ", pointwise gap " + num(worst_rel);
}

// 9. Any runner artifact re-executed from its manifest is byte-identical.
std::string manifest_reproducibility() {
  struct TempDir {
    fs::path path;
    TempDir() {
      path = fs::temp_directory_path() /
             ("robglasso_acceptance_" + std::to_string(::getpid()));
      fs::remove_all(path);
      fs::create_directories(path);
    }
    ~TempDir() {
      std::error_code ec;
      fs::remove_all(path, ec);
    }
  } dir;

  auto write_file = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
  };
  auto read_file = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  auto run = [&dir](const std::string& args) {
    const std::string cmd = std::string(ROBGLASSO_CLI_PATH) + " " + args +
                            " >" + (dir.path / "out.txt").string() + " 2>" +
                            (dir.path / "err.txt").string();
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };

  write_file(dir.path / "ifs.ini",
             "[model]\npreset = paper-toeplitz\n\n[penalty]\nlambda = 8e-4\n\n"
             "[plugin]\nkind = gauss-rank\n\n[task]\ntype = if-surface\n\n"
             "[grid]\nz1 = -2:0.5:2\nz2 = 1\nz3 = 0\n");
  write_file(dir.path / "sc.ini",
             "[model]\npreset = paper-toeplitz\n\n[penalty]\nlambda = 8e-4\n\n"
             "[plugin]\nkind = kendall\n\n[task]\ntype = sc-surface\n\n"
             "[grid]\nz1 = 0:3:3\nz2 = 0\nz3 = 0\n\n[sc]\nn = 60\n"
             "replications = 3\n");

  int checked = 0;
  for (const std::string task : {"if-surface", "sc-surface"}) {
    const std::string ini = task == "if-surface" ? "ifs.ini" : "sc.ini";
    const fs::path a = dir.path / (task + "_a");
    const fs::path b = dir.path / (task + "_b");
    require(run(task + " --config " + (dir.path / ini).string() + " --out " +
                a.string() + " --seed 7") == 0,
            task + ": first run failed");
    require(run(task + " --config " +
                (a / (task + "-manifest.json")).string() + " --out " +
                b.string()) == 0,
            task + ": manifest rerun failed");
    const std::string csv_a = read_file(a / (task + ".csv"));
    const std::string csv_b = read_file(b / (task + ".csv"));
    require(!csv_a.empty(), task + ": empty artifact");
    require(csv_a == csv_b, task + ": rerun differs");
    ++checked;
  }
  return std::to_string(checked) + " tasks byte-identical";
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria = {
      {"exact inverse recovery", exact_inverse_recovery},
      {"sparsity pattern recovery", sparsity_pattern_recovery},
      {"influence oracle agreement", influence_oracle_agreement},
      {"full support reduction", full_support_reduction},
      {"worst direction check", worst_direction_check},
      {"fisher consistency", fisher_consistency},
      {"efficiency reproduction", efficiency_reproduction},
      {"sensitivity curve gates", sensitivity_curve_gates},
      {"manifest reproducibility", manifest_reproducibility},
  };

  int passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string status;
    std::string detail;
    try {
      detail = criteria[i].run();
      status = "PASS";
      ++passed;
    } catch (const std::exception& e) {
      status = "FAIL";
      detail = e.what();
    }
    std::printf("criterion %zu (%s): %s [%s]\n", i + 1, criteria[i].name,
                status.c_str(), detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%zu criteria passed\n", passed, criteria.size());
  return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
