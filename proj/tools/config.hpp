#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "robglasso/asv.hpp"
#include "robglasso/cov_plugins.hpp"
#include "robglasso/glasso.hpp"
#include "robglasso/model.hpp"

namespace robglasso::cli {

enum class Task {
  Solve,
  IFSurface,
  SCSurface,
  GESScan,
  MaxDirection,
  ASV,
  EfficiencyTable,
};

const char* task_name(Task task);
Task task_from_name(const std::string& name);  // ConfigError on unknown names

// One grid axis: either a fixed coordinate or an inclusive arithmetic range
// "lo:step:hi". The endpoint must be reachable from lo in whole steps.
struct AxisSpec {
  bool fixed = true;
  double value = 0.0;
  double lo = 0.0;
  double step = 0.0;
  double hi = 0.0;

  int count() const;
  double at(int k) const;
  std::string render() const;
};

// A fully resolved experiment description. Parsing fills it from the
// sectioned key = value text; render_config writes it back out in canonical
// form so a run manifest can reproduce the artifact byte for byte.
struct ExperimentConfig {
  // [model]: exactly one of preset or (p, sigma)
  std::string preset;
  int p = 0;
  std::vector<double> sigma_rowmajor;

  // [penalty]
  PenaltySpec penalty;

  // [plugin]
  PluginKind kind = PluginKind::Classical;
  FastMCDOptions mcd;

  // [task]
  Task task = Task::Solve;

  // [grid]: axes for the surface tasks, radii and directions for ges-scan
  std::vector<AxisSpec> axes;
  std::vector<double> radii;
  std::vector<Eigen::VectorXd> directions;  // stored normalised to unit length

  // [sc]
  int sc_n = 1000;
  int sc_replications = 50;

  // [asv]: quadrature controls plus the efficiency-table layout
  EfficiencyOptions asv;
  std::vector<PluginKind> table_kinds;
  std::vector<std::pair<int, int>> components;  // 0-based (row, col)

  // [seeds]
  std::uint64_t seed = 1;

  // [output]: file names inside the output directory; defaults derive from
  // the task name when the keys are absent
  std::string csv_name;
  std::string manifest_name;

  int dim() const;  // model dimension (3 for the preset)
  GaussianModel build_model() const;
  long long grid_rows() const;
  std::vector<Eigen::VectorXd> grid_points() const;
  std::string csv_file() const;
  std::string manifest_file() const;
};

// Parses sectioned key = value text. Full-line comments start with '#' or
// ';'. Unknown sections, unknown keys, duplicate keys, and malformed values
// raise ConfigError naming the line and field; missing required fields are
// reported as "missing required field: section.key".
ExperimentConfig parse_config_text(const std::string& text);

// Reads a configuration file. A file whose first non-space character is '{'
// is treated as a run manifest: its config_text field is extracted and
// parsed, which reproduces the recorded run exactly.
ExperimentConfig load_config_file(const std::string& path);

// Canonical echo of the resolved configuration. Sections the task does not
// consume are omitted; parsing the echo yields the same experiment.
std::string render_config(const ExperimentConfig& config);

// Shortest decimal form that round-trips a double, C-locale '.' separator.
std::string format_g17(double x);

}  // namespace robglasso::cli
