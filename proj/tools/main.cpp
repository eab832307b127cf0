#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "robglasso/asv.hpp"
#include "robglasso/contamination.hpp"
#include "robglasso/cov_plugins.hpp"
#include "robglasso/errors.hpp"
#include "robglasso/glasso.hpp"
#include "robglasso/influence.hpp"
#include "robglasso/model.hpp"
#include "robglasso/parallel.hpp"
#include "robglasso/sensitivity.hpp"
#include "robglasso/version.hpp"

namespace {

namespace cli = robglasso::cli;
namespace fs = std::filesystem;
using nlohmann::ordered_json;
using robglasso::PluginKind;
using cli::ExperimentConfig;
using cli::format_g17;
using cli::Task;

struct Invocation {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  bool dry_run = false;
};

// One computed run: the CSV payload plus the numbers the manifest reports.
struct Artifact {
  std::string schema;
  std::vector<std::string> columns;
  std::string body;  // data rows only; the header comes from columns
  long long rows = 0;
  ordered_json summary;
};

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Precision component label for a vectorised index: 1-based "row:col".
std::string component_label(int vec_index, int p) {
  return std::to_string(vec_index % p + 1) + ":" +
         std::to_string(vec_index / p + 1);
}

robglasso::SupportPermutation support_of(
    const robglasso::PrecisionEstimate& est, const ExperimentConfig& cfg) {
  if (cfg.penalty.lambda > 0.0) {
    return robglasso::support_permutation(est, cfg.penalty.support_tolerance);
  }
  return robglasso::full_support_permutation(
      static_cast<int>(est.omega.rows()));
}

Artifact run_solve(const ExperimentConfig& cfg) {
  const auto model = cfg.build_model();
  const auto est = robglasso::glasso_solve(
      robglasso::pairwise_cov(cfg.kind, model), cfg.penalty);
  const int p = cfg.dim();

  Artifact a;
  a.schema = "solve.v1";
  a.columns = {"row", "col", "omega", "support"};
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      a.body += std::to_string(i + 1) + ',' + std::to_string(j + 1) + ',' +
                format_g17(est.omega(i, j)) + ',' +
                (est.support(i, j) ? "1" : "0") + '\n';
    }
  }
  a.rows = static_cast<long long>(p) * p;
  a.summary["kkt_residual"] = est.kkt_residual;
  a.summary["objective"] = est.objective;
  a.summary["support_nonzeros"] = static_cast<long long>(est.support.count());
  return a;
}

Artifact run_if_surface(const ExperimentConfig& cfg) {
  const auto model = cfg.build_model();
  const auto est = robglasso::glasso_solve(
      robglasso::pairwise_cov(cfg.kind, model), cfg.penalty);
  const auto d = support_of(est, cfg);
  const auto points = cfg.grid_points();

  const int n = static_cast<int>(points.size());
  std::vector<double> norms(points.size(), 0.0);
  std::vector<std::string> errors(points.size());
  robglasso::parallel::parallel_for(n, [&](int i) {
    try {
      const auto plugin = robglasso::plugin_if(cfg.kind, model, points[i]);
      norms[i] = robglasso::glasso_if(est, d, plugin).frobenius_norm;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (int i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      throw robglasso::NumericalError("if-surface at grid point " +
                                      std::to_string(i + 1) + ": " +
                                      errors[i]);
    }
  }

  Artifact a;
  a.schema = "if-surface.v1";
  for (int j = 0; j < cfg.dim(); ++j) {
    a.columns.push_back("z" + std::to_string(j + 1));
  }
  a.columns.push_back("frobenius_norm");
  double max_norm = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < points[i].size(); ++j) {
      a.body += format_g17(points[i](j)) + ',';
    }
    a.body += format_g17(norms[i]) + '\n';
    max_norm = std::max(max_norm, norms[i]);
  }
  a.rows = n;
  a.summary["max_frobenius_norm"] = max_norm;
  a.summary["support_size"] = d.nonzero_count;
  return a;
}

Artifact run_sc_surface(const ExperimentConfig& cfg) {
  const auto model = cfg.build_model();
  robglasso::SCExperiment exp;
  exp.kind = cfg.kind;
  exp.penalty = cfg.penalty;
  exp.n = cfg.sc_n;
  exp.replications = cfg.sc_replications;
  exp.grid = cfg.grid_points();
  exp.seed = cfg.seed;
  exp.mcd = cfg.mcd;
  const auto surface = robglasso::sc_surface(model, exp);

  Artifact a;
  a.schema = "sc-surface.v1";
  for (int j = 0; j < cfg.dim(); ++j) {
    a.columns.push_back("z" + std::to_string(j + 1));
  }
  a.columns.push_back("frobenius_norm");
  a.columns.push_back("norm_stderr");
  for (const auto& point : surface.points) {
    for (int j = 0; j < point.z.size(); ++j) {
      a.body += format_g17(point.z(j)) + ',';
    }
    a.body += format_g17(point.frobenius_norm) + ',' +
              format_g17(point.norm_stderr) + '\n';
  }
  a.rows = static_cast<long long>(surface.points.size());
  a.summary["replications_kept"] = surface.replications_kept;
  a.summary["replications_dropped"] = surface.replications_dropped;
  return a;
}

Artifact run_ges_scan(const ExperimentConfig& cfg) {
  const auto model = cfg.build_model();
  const auto scan =
      robglasso::ges_scan(cfg.kind, model, cfg.radii, cfg.directions);
  const auto est = robglasso::glasso_solve(
      robglasso::pairwise_cov(cfg.kind, model), cfg.penalty);
  const auto d = support_of(est, cfg);
  const double bound = robglasso::ges_bound(est, d, scan.max_norm);
  const int p = cfg.dim();

  Artifact a;
  a.schema = "ges-scan.v1";
  a.columns = {"radius", "direction"};
  for (int j = 0; j < p; ++j) {
    a.columns.push_back("d" + std::to_string(j + 1));
  }
  a.columns.push_back("frobenius_norm");
  for (std::size_t r = 0; r < scan.radii.size(); ++r) {
    for (std::size_t c = 0; c < scan.directions.size(); ++c) {
      a.body += format_g17(scan.radii[r]) + ',' + std::to_string(c + 1);
      for (int j = 0; j < p; ++j) {
        a.body += ',' + format_g17(scan.directions[c](j));
      }
      a.body += ',' + format_g17(scan.norms(static_cast<int>(r),
                                            static_cast<int>(c))) +
                '\n';
    }
  }
  a.rows = static_cast<long long>(scan.radii.size() * scan.directions.size());
  a.summary["max_norm"] = scan.max_norm;
  a.summary["max_growth_ratio"] = scan.max_growth_ratio;
  a.summary["bounded"] = scan.bounded;
  a.summary["glasso_ges_bound"] = bound;
  return a;
}

Artifact run_max_direction(const ExperimentConfig& cfg) {
  const auto model = cfg.build_model();
  const auto est = robglasso::glasso_solve(
      robglasso::pairwise_cov(cfg.kind, model), cfg.penalty);
  const auto md = robglasso::max_direction_unpenalized(est.omega);
  const int p = cfg.dim();

  Artifact a;
  a.schema = "max-direction.v1";
  for (int j = 0; j < p; ++j) {
    a.columns.push_back("d" + std::to_string(j + 1));
  }
  a.columns.insert(a.columns.end(),
                   {"max_value", "lambda_max", "lambda_min"});
  for (int j = 0; j < p; ++j) {
    a.body += format_g17(md.direction(j)) + ',';
  }
  a.body += format_g17(md.max_value) + ',' + format_g17(md.lambda_max) + ',' +
            format_g17(md.lambda_min) + '\n';
  a.rows = 1;
  a.summary["max_value"] = md.max_value;
  a.summary["lambda_max"] = md.lambda_max;
  a.summary["lambda_min"] = md.lambda_min;
  return a;
}

Artifact run_asv(const ExperimentConfig& cfg) {
  const auto model = cfg.build_model();
  const auto spec =
      cfg.kind == PluginKind::Quadrant
          ? robglasso::QuadratureSpec::monte_carlo(cfg.asv.mc_samples,
                                                   cfg.seed)
          : robglasso::QuadratureSpec::tensor_gh(cfg.asv.smooth_order);
  const auto plugin = robglasso::plugin_asv(cfg.kind, model, spec);
  const auto est = robglasso::glasso_solve(
      robglasso::pairwise_cov(cfg.kind, model), cfg.penalty);
  const auto d = support_of(est, cfg);
  const auto glasso = robglasso::glasso_asv(est, d, plugin.value);
  const int p = cfg.dim();
  const bool has_se = plugin.mc_stderr.size() > 0;

  Artifact a;
  a.schema = "asv.v1";
  a.columns = {"matrix", "row", "col", "value", "mc_stderr"};
  for (int i = 0; i < plugin.value.rows(); ++i) {
    for (int j = 0; j < plugin.value.cols(); ++j) {
      a.body += "plugin," + component_label(i, p) + ',' +
                component_label(j, p) + ',' + format_g17(plugin.value(i, j)) +
                ',' + (has_se ? format_g17(plugin.mc_stderr(i, j)) : "") +
                '\n';
    }
  }
  for (int i = 0; i < glasso.rows(); ++i) {
    for (int j = 0; j < glasso.cols(); ++j) {
      a.body += "glasso," + component_label(d.perm[i], p) + ',' +
                component_label(d.perm[j], p) + ',' +
                format_g17(glasso(i, j)) + ",\n";
    }
  }
  a.rows = plugin.value.size() + glasso.size();
  a.summary["method"] = plugin.method;
  a.summary["samples_dropped"] = plugin.samples_dropped;
  a.summary["support_size"] = d.nonzero_count;
  return a;
}

Artifact run_efficiency_table(const ExperimentConfig& cfg) {
  const auto model = cfg.build_model();
  robglasso::EfficiencyOptions options = cfg.asv;
  options.seed = cfg.seed;
  const auto table = robglasso::efficiency_table(
      model, cfg.penalty, cfg.table_kinds, cfg.components, options);

  const std::string csv = table.csv();
  const auto eol = csv.find('\n');

  Artifact a;
  a.schema = "efficiency-table.v1";
  a.columns = {"component", "kind", "asv", "efficiency", "mc_stderr",
               "method"};
  a.body = csv.substr(eol + 1);
  a.rows = static_cast<long long>(table.entries.size());
  a.summary["lambda"] = table.lambda;
  a.summary["bahadur_assumed"] = table.bahadur_assumed;
  return a;
}

Artifact dispatch(const ExperimentConfig& cfg) {
  switch (cfg.task) {
    case Task::Solve:
      return run_solve(cfg);
    case Task::IFSurface:
      return run_if_surface(cfg);
    case Task::SCSurface:
      return run_sc_surface(cfg);
    case Task::GESScan:
      return run_ges_scan(cfg);
    case Task::MaxDirection:
      return run_max_direction(cfg);
    case Task::ASV:
      return run_asv(cfg);
    case Task::EfficiencyTable:
      return run_efficiency_table(cfg);
  }
  throw std::logic_error("unreachable task");
}

std::string planned_rows(const ExperimentConfig& cfg) {
  const long long p = cfg.dim();
  switch (cfg.task) {
    case Task::Solve:
      return std::to_string(p * p);
    case Task::IFSurface:
    case Task::SCSurface:
      return std::to_string(cfg.grid_rows());
    case Task::GESScan:
      return std::to_string(cfg.radii.size() * cfg.directions.size());
    case Task::MaxDirection:
      return "1";
    case Task::ASV:
      return std::to_string(p * p * p * p) +
             " plugin rows plus one per active support pair squared";
    case Task::EfficiencyTable:
      return std::to_string(cfg.table_kinds.size() * cfg.components.size());
  }
  return "?";
}

void print_plan(const ExperimentConfig& cfg, const Invocation& inv,
                const fs::path& csv_path, const fs::path& manifest_path) {
  std::cout << "dry run: " << cli::task_name(cfg.task) << '\n';
  std::cout << "model: p = " << cfg.dim()
            << (cfg.preset.empty() ? " (explicit sigma)"
                                   : " (preset " + cfg.preset + ")")
            << '\n';
  std::cout << "plugin: " << robglasso::plugin_name(cfg.kind) << '\n';
  std::cout << "lambda: " << format_g17(cfg.penalty.lambda) << '\n';
  std::cout << "seed: " << cfg.seed << '\n';
  std::cout << "threads: "
            << (inv.threads > 0 ? std::to_string(inv.threads)
                                : std::string("hardware default"))
            << '\n';
  std::cout << "planned rows: " << planned_rows(cfg) << '\n';
  std::cout << "csv: " << csv_path.string() << '\n';
  std::cout << "manifest: " << manifest_path.string() << '\n';
  std::cout << "resolved config:\n" << cli::render_config(cfg);
}

int run(Task task, const Invocation& inv) {
  ExperimentConfig cfg = cli::load_config_file(inv.config_path);
  if (cfg.task != task) {
    throw robglasso::ConfigError(
        std::string("task.type: config declares '") + cli::task_name(cfg.task) +
        "' but the subcommand is '" + cli::task_name(task) + "'");
  }
  if (inv.seed_set) cfg.seed = inv.seed;
  if (inv.threads < 0) {
    throw robglasso::ConfigError("--threads: must be >= 0");
  }
  robglasso::parallel::set_max_threads(inv.threads);

  const fs::path out_dir(inv.out_dir);
  const fs::path csv_path = out_dir / cfg.csv_file();
  const fs::path manifest_path = out_dir / cfg.manifest_file();

  if (inv.dry_run) {
    print_plan(cfg, inv, csv_path, manifest_path);
    return 0;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const Artifact artifact = dispatch(cfg);
  const auto t1 = std::chrono::steady_clock::now();

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw robglasso::ConfigError("output: cannot create directory '" +
                                 out_dir.string() + "': " + ec.message());
  }
  {
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    csv << join(artifact.columns, ',') << '\n' << artifact.body;
    if (!csv) {
      throw robglasso::ConfigError("output: cannot write " +
                                   csv_path.string());
    }
  }
  const auto t2 = std::chrono::steady_clock::now();

  const auto ms = [](auto a, auto b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  ordered_json manifest;
  manifest["robglasso_version"] = robglasso::kVersion;
  manifest["task"] = cli::task_name(cfg.task);
  manifest["csv"] = {{"file", cfg.csv_file()},
                     {"schema", artifact.schema},
                     {"columns", artifact.columns},
                     {"rows", artifact.rows}};
  manifest["seed"] = cfg.seed;
  manifest["threads"] = inv.threads;
  manifest["config_text"] = cli::render_config(cfg);
  manifest["timings_ms"] = {{"compute", ms(t0, t1)}, {"write", ms(t1, t2)}};
  manifest["summary"] = artifact.summary;
  {
    std::ofstream mf(manifest_path, std::ios::binary | std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    if (!mf) {
      throw robglasso::ConfigError("output: cannot write " +
                                   manifest_path.string());
    }
  }

  std::cout << "wrote " << csv_path.string() << " (" << artifact.rows
            << " rows) and " << manifest_path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse precision estimation with robust covariance plug-ins"};
  app.set_version_flag("--version", robglasso::kVersion);
  app.require_subcommand(1);

  static const struct {
    const char* name;
    const char* desc;
  } kSubs[] = {
      {"solve", "penalised precision estimate of the configured model"},
      {"if-surface", "influence-function norms over a contamination grid"},
      {"sc-surface", "finite-sample sensitivity curves over a grid"},
      {"ges-scan", "influence norms over radius and direction grids"},
      {"max-direction", "worst contamination direction of the estimate"},
      {"asv", "asymptotic variance matrices of one plug-in"},
      {"efficiency-table", "relative efficiencies of several plug-ins"},
  };

  Invocation inv;
  std::vector<CLI::App*> subs;
  for (const auto& s : kSubs) {
    CLI::App* sub = app.add_subcommand(s.name, s.desc);
    sub->add_option("--config", inv.config_path,
                    "configuration file (sectioned text or run manifest)")
        ->required();
    sub->add_option("--out", inv.out_dir, "output directory (default .)");
    sub->add_option("--seed", inv.seed, "seed override");
    sub->add_option("--threads", inv.threads,
                    "worker thread cap (0 = hardware default)");
    sub->add_flag("--dry-run", inv.dry_run,
                  "validate and print the resolved plan without computing");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Task task = Task::Solve;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) {
      task = static_cast<Task>(i);
      inv.seed_set = subs[i]->count("--seed") > 0;
      break;
    }
  }

  try {
    return run(task, inv);
  } catch (const robglasso::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const robglasso::BudgetError& e) {
    std::cerr << "budget exceeded: " << e.what() << '\n';
    return 4;
  } catch (const robglasso::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
