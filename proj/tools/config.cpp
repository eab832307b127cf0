#include "config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "robglasso/errors.hpp"

namespace robglasso::cli {

namespace {

const char* const kTaskNames[] = {
    "solve",         "if-surface", "sc-surface",       "ges-scan",
    "max-direction", "asv",        "efficiency-table",
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(trim(s.substr(start)));
      return parts;
    }
    parts.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
}

// One key = value occurrence, tagged with its source line so later
// consumers can point at it.
struct Entry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
  bool used = false;
};

[[noreturn]] void bad_value(const Entry& e, const std::string& expected) {
  throw ConfigError("[" + e.section + "] " + e.key + " (line " +
                    std::to_string(e.line) + "): expected " + expected +
                    ", got '" + e.value + "'");
}

double parse_double(const Entry& e) {
  const std::string v = trim(e.value);
  double out = 0.0;
  const char* begin = v.data();
  const char* end = begin + v.size();
  const auto r = std::from_chars(begin, end, out);
  if (r.ec != std::errc{} || r.ptr != end || v.empty()) {
    bad_value(e, "a number");
  }
  return out;
}

long long parse_integer(const Entry& e) {
  const std::string v = trim(e.value);
  long long out = 0;
  const char* begin = v.data();
  const char* end = begin + v.size();
  const auto r = std::from_chars(begin, end, out);
  if (r.ec != std::errc{} || r.ptr != end || v.empty()) {
    bad_value(e, "an integer");
  }
  return out;
}

std::uint64_t parse_seed(const Entry& e) {
  const std::string v = trim(e.value);
  std::uint64_t out = 0;
  const char* begin = v.data();
  const char* end = begin + v.size();
  const auto r = std::from_chars(begin, end, out);
  if (r.ec != std::errc{} || r.ptr != end || v.empty()) {
    bad_value(e, "a non-negative integer");
  }
  return out;
}

bool parse_bool(const Entry& e) {
  const std::string v = trim(e.value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(e, "true or false");
}

// Lexed config text with typed, line-aware accessors. Every accessor marks
// the entry used; finish() rejects whatever nothing consumed.
class Lookup {
 public:
  explicit Lookup(std::vector<Entry> entries) : entries_(std::move(entries)) {}

  Entry* find(const std::string& section, const std::string& key) {
    for (auto& e : entries_) {
      if (e.section == section && e.key == key) {
        e.used = true;
        return &e;
      }
    }
    return nullptr;
  }

  bool get_double(const std::string& s, const std::string& k, double* out) {
    Entry* e = find(s, k);
    if (!e) return false;
    *out = parse_double(*e);
    return true;
  }

  bool get_int(const std::string& s, const std::string& k, int* out) {
    Entry* e = find(s, k);
    if (!e) return false;
    const long long v = parse_integer(*e);
    if (v < -2147483647LL || v > 2147483647LL) bad_value(*e, "an integer");
    *out = static_cast<int>(v);
    return true;
  }

  bool get_long(const std::string& s, const std::string& k, long* out) {
    Entry* e = find(s, k);
    if (!e) return false;
    *out = static_cast<long>(parse_integer(*e));
    return true;
  }

  bool get_bool(const std::string& s, const std::string& k, bool* out) {
    Entry* e = find(s, k);
    if (!e) return false;
    *out = parse_bool(*e);
    return true;
  }

  bool get_string(const std::string& s, const std::string& k,
                  std::string* out) {
    Entry* e = find(s, k);
    if (!e) return false;
    *out = trim(e->value);
    return true;
  }

  void finish(const std::string& task) const {
    for (const auto& e : entries_) {
      if (!e.used) {
        throw ConfigError("line " + std::to_string(e.line) + ": key '" +
                          e.key + "' in [" + e.section +
                          "] is not recognised for task '" + task + "'");
      }
    }
  }

 private:
  std::vector<Entry> entries_;
};

bool known_section(const std::string& name) {
  static const char* const kSections[] = {"model", "penalty", "plugin",
                                          "task",  "grid",    "sc",
                                          "asv",   "seeds",   "output"};
  for (const char* s : kSections) {
    if (name == s) return true;
  }
  return false;
}

std::vector<Entry> lex(const std::string& text) {
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) {
        throw ConfigError("line " + std::to_string(line) +
                          ": malformed section header '" + s + "'");
      }
      section = trim(s.substr(1, s.size() - 2));
      if (!known_section(section)) {
        throw ConfigError("line " + std::to_string(line) +
                          ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) +
                        ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line) +
                        ": key outside any section");
    }
    Entry e;
    e.section = section;
    e.key = trim(s.substr(0, eq));
    e.value = trim(s.substr(eq + 1));
    e.line = line;
    if (e.key.empty()) {
      throw ConfigError("line " + std::to_string(line) + ": empty key");
    }
    for (const auto& prev : entries) {
      if (prev.section == e.section && prev.key == e.key) {
        throw ConfigError("line " + std::to_string(line) +
                          ": duplicate key '" + e.key + "' in [" + e.section +
                          "]");
      }
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

[[noreturn]] void missing(const std::string& section, const std::string& key) {
  throw ConfigError("missing required field: " + section + "." + key);
}

AxisSpec parse_axis(const Entry& e) {
  AxisSpec axis;
  const auto parts = split(e.value, ':');
  auto to_double = [&](const std::string& part) {
    Entry scratch = e;
    scratch.value = part;
    return parse_double(scratch);
  };
  if (parts.size() == 1) {
    axis.fixed = true;
    axis.value = to_double(parts[0]);
    if (!std::isfinite(axis.value)) bad_value(e, "a finite coordinate");
    return axis;
  }
  if (parts.size() != 3) bad_value(e, "a coordinate or lo:step:hi");
  axis.fixed = false;
  axis.lo = to_double(parts[0]);
  axis.step = to_double(parts[1]);
  axis.hi = to_double(parts[2]);
  if (!std::isfinite(axis.lo) || !std::isfinite(axis.step) ||
      !std::isfinite(axis.hi)) {
    bad_value(e, "finite range bounds");
  }
  if (axis.step <= 0.0) bad_value(e, "a positive step");
  if (axis.hi < axis.lo) bad_value(e, "hi >= lo");
  const double steps = (axis.hi - axis.lo) / axis.step;
  const long long n = std::llround(steps);
  const double reached = axis.lo + static_cast<double>(n) * axis.step;
  const double scale = std::max({1.0, std::abs(axis.lo), std::abs(axis.hi)});
  if (std::abs(reached - axis.hi) > 1e-9 * scale || n > 1000000) {
    bad_value(e, "hi reachable from lo in whole steps");
  }
  return axis;
}

PluginKind parse_kind_field(const std::string& section, const std::string& key,
                            int line, const std::string& name) {
  try {
    return plugin_kind_from_name(name);
  } catch (const std::exception& ex) {
    throw ConfigError("[" + section + "] " + key + " (line " +
                      std::to_string(line) + "): " + ex.what());
  }
}

void read_model(Lookup& in, ExperimentConfig* cfg) {
  const bool has_preset = in.get_string("model", "preset", &cfg->preset);
  const bool has_p = in.get_int("model", "p", &cfg->p);
  Entry* sig = in.find("model", "sigma");
  if (has_preset && (has_p || sig)) {
    throw ConfigError(
        "model: give either preset or p and sigma, not both");
  }
  if (has_preset) {
    if (cfg->preset != "paper-toeplitz") {
      throw ConfigError("model.preset: unknown preset '" + cfg->preset +
                        "' (available: paper-toeplitz)");
    }
    return;
  }
  if (!has_p) missing("model", "p");
  if (!sig) missing("model", "sigma");
  if (cfg->p < 2) {
    throw ConfigError("model.p: dimension must be at least 2");
  }
  const auto parts = split(sig->value, ',');
  if (static_cast<int>(parts.size()) != cfg->p * cfg->p) {
    throw ConfigError("model.sigma (line " + std::to_string(sig->line) +
                      "): expected " + std::to_string(cfg->p * cfg->p) +
                      " row-major entries, got " +
                      std::to_string(parts.size()));
  }
  cfg->sigma_rowmajor.reserve(parts.size());
  for (const auto& part : parts) {
    Entry scratch = *sig;
    scratch.value = part;
    cfg->sigma_rowmajor.push_back(parse_double(scratch));
  }
}

void read_penalty(Lookup& in, ExperimentConfig* cfg) {
  if (!in.get_double("penalty", "lambda", &cfg->penalty.lambda)) {
    missing("penalty", "lambda");
  }
  in.get_double("penalty", "tolerance", &cfg->penalty.tolerance);
  in.get_int("penalty", "max_iterations", &cfg->penalty.max_iterations);
  in.get_double("penalty", "support_tolerance",
                &cfg->penalty.support_tolerance);
  cfg->penalty.validate();
}

void read_plugin(Lookup& in, ExperimentConfig* cfg) {
  if (Entry* e = in.find("plugin", "kind")) {
    cfg->kind = parse_kind_field("plugin", "kind", e->line, trim(e->value));
  }
  in.get_double("plugin", "subset_fraction", &cfg->mcd.subset_fraction);
  in.get_bool("plugin", "reweight", &cfg->mcd.reweight);
  in.get_double("plugin", "reweight_cutoff", &cfg->mcd.reweight_cutoff);
  in.get_int("plugin", "starts", &cfg->mcd.starts);
}

void read_grid(Lookup& in, ExperimentConfig* cfg) {
  const int p = cfg->dim();
  if (cfg->task == Task::IFSurface || cfg->task == Task::SCSurface) {
    cfg->axes.resize(p);
    for (int i = 0; i < p; ++i) {
      const std::string key = "z" + std::to_string(i + 1);
      Entry* e = in.find("grid", key);
      if (!e) missing("grid", key);
      cfg->axes[i] = parse_axis(*e);
    }
    return;
  }
  if (cfg->task != Task::GESScan) return;
  Entry* rad = in.find("grid", "radii");
  if (!rad) missing("grid", "radii");
  for (const auto& part : split(rad->value, ',')) {
    Entry scratch = *rad;
    scratch.value = part;
    const double r = parse_double(scratch);
    if (!(r > 0.0) || !std::isfinite(r)) bad_value(*rad, "positive radii");
    cfg->radii.push_back(r);
  }
  Entry* dirs = in.find("grid", "directions");
  if (!dirs) missing("grid", "directions");
  for (const auto& one : split(dirs->value, ';')) {
    const auto comps = split(one, ',');
    if (static_cast<int>(comps.size()) != p) {
      throw ConfigError("grid.directions (line " + std::to_string(dirs->line) +
                        "): each direction needs " + std::to_string(p) +
                        " components");
    }
    Eigen::VectorXd v(p);
    for (int i = 0; i < p; ++i) {
      Entry scratch = *dirs;
      scratch.value = comps[i];
      v(i) = parse_double(scratch);
    }
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      bad_value(*dirs, "nonzero finite directions");
    }
    cfg->directions.push_back(v / norm);
  }
}

void read_sc(Lookup& in, ExperimentConfig* cfg) {
  if (cfg->task != Task::SCSurface) return;
  in.get_int("sc", "n", &cfg->sc_n);
  in.get_int("sc", "replications", &cfg->sc_replications);
}

void read_asv(Lookup& in, ExperimentConfig* cfg) {
  if (cfg->task != Task::ASV && cfg->task != Task::EfficiencyTable) return;
  in.get_int("asv", "order", &cfg->asv.smooth_order);
  in.get_long("asv", "mc_samples", &cfg->asv.mc_samples);
  in.get_int("asv", "mc_batches", &cfg->asv.mc_batches);
  if (cfg->asv.smooth_order < 8) {
    throw ConfigError("asv.order: tensor quadrature needs order >= 8");
  }
  if (cfg->asv.mc_samples < 10000) {
    throw ConfigError("asv.mc_samples: Monte Carlo needs at least 10000");
  }
  if (cfg->task != Task::EfficiencyTable) return;

  if (Entry* e = in.find("asv", "kinds")) {
    for (const auto& part : split(e->value, ',')) {
      cfg->table_kinds.push_back(
          parse_kind_field("asv", "kinds", e->line, part));
    }
  } else {
    cfg->table_kinds = {PluginKind::Classical, PluginKind::GaussRank,
                        PluginKind::Spearman, PluginKind::Kendall,
                        PluginKind::Quadrant};
  }

  if (Entry* e = in.find("asv", "components")) {
    for (const auto& part : split(e->value, ',')) {
      const auto rc = split(part, ':');
      bool ok = rc.size() == 2;
      int row = 0;
      int col = 0;
      if (ok) {
        try {
          Entry scratch = *e;
          scratch.value = rc[0];
          row = static_cast<int>(parse_integer(scratch));
          scratch.value = rc[1];
          col = static_cast<int>(parse_integer(scratch));
        } catch (const ConfigError&) {
          ok = false;
        }
      }
      const int p = cfg->dim();
      if (!ok || row < 1 || col < 1 || row > p || col > p) {
        throw ConfigError("asv.components (line " + std::to_string(e->line) +
                          "): entries are row:col with 1-based indices up to " +
                          std::to_string(p));
      }
      cfg->components.emplace_back(row - 1, col - 1);
    }
  } else {
    cfg->components = {{0, 0}, {1, 1}, {1, 0}};
  }
}

void validate_task_fit(const ExperimentConfig& cfg) {
  if (cfg.kind == PluginKind::FastMCD && cfg.task != Task::SCSurface) {
    throw ConfigError(
        "plugin.kind: fast-mcd estimates only finite samples; sc-surface is "
        "the only task that can use it");
  }
  if (cfg.kind == PluginKind::FastMCD) cfg.mcd.validate();
  const int p = cfg.dim();
  for (const auto& rc : cfg.components) {
    if (rc.first < 0 || rc.first >= p || rc.second < 0 || rc.second >= p) {
      throw ConfigError("asv.components: index outside the model dimension");
    }
  }
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_g17(values[i]);
  }
  return out;
}

}  // namespace

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

const char* task_name(Task task) { return kTaskNames[static_cast<int>(task)]; }

Task task_from_name(const std::string& name) {
  for (int i = 0; i < 7; ++i) {
    if (name == kTaskNames[i]) return static_cast<Task>(i);
  }
  throw ConfigError("task.type: unknown task '" + name +
                    "' (available: solve, if-surface, sc-surface, ges-scan, "
                    "max-direction, asv, efficiency-table)");
}

int AxisSpec::count() const {
  if (fixed) return 1;
  return static_cast<int>(std::llround((hi - lo) / step)) + 1;
}

double AxisSpec::at(int k) const {
  return fixed ? value : lo + static_cast<double>(k) * step;
}

std::string AxisSpec::render() const {
  if (fixed) return format_g17(value);
  return format_g17(lo) + ":" + format_g17(step) + ":" + format_g17(hi);
}

int ExperimentConfig::dim() const { return preset.empty() ? p : 3; }

GaussianModel ExperimentConfig::build_model() const {
  if (!preset.empty()) return GaussianModel::toeplitz3();
  Eigen::MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      sigma(i, j) = sigma_rowmajor[static_cast<std::size_t>(i) * p + j];
    }
  }
  try {
    return GaussianModel(sigma);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model.sigma: ") + e.what());
  }
}

long long ExperimentConfig::grid_rows() const {
  long long total = 1;
  for (const auto& axis : axes) total *= axis.count();
  return total;
}

std::vector<Eigen::VectorXd> ExperimentConfig::grid_points() const {
  const int p = static_cast<int>(axes.size());
  const long long total = grid_rows();
  std::vector<Eigen::VectorXd> points;
  points.reserve(static_cast<std::size_t>(total));
  for (long long t = 0; t < total; ++t) {
    Eigen::VectorXd z(p);
    long long rem = t;
    for (int a = p - 1; a >= 0; --a) {
      const int c = axes[a].count();
      z(a) = axes[a].at(static_cast<int>(rem % c));
      rem /= c;
    }
    points.push_back(std::move(z));
  }
  return points;
}

std::string ExperimentConfig::csv_file() const {
  return csv_name.empty() ? std::string(task_name(task)) + ".csv" : csv_name;
}

std::string ExperimentConfig::manifest_file() const {
  return manifest_name.empty()
             ? std::string(task_name(task)) + "-manifest.json"
             : manifest_name;
}

ExperimentConfig parse_config_text(const std::string& text) {
  Lookup in(lex(text));
  ExperimentConfig cfg;

  Entry* type = in.find("task", "type");
  if (!type) missing("task", "type");
  cfg.task = task_from_name(trim(type->value));

  read_model(in, &cfg);
  read_penalty(in, &cfg);
  read_plugin(in, &cfg);
  read_grid(in, &cfg);
  read_sc(in, &cfg);
  read_asv(in, &cfg);

  if (Entry* e = in.find("seeds", "seed")) cfg.seed = parse_seed(*e);
  in.get_string("output", "csv", &cfg.csv_name);
  in.get_string("output", "manifest", &cfg.manifest_name);

  in.finish(task_name(cfg.task));
  validate_task_fit(cfg);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << file.rdbuf();
  const std::string text = buf.str();

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("manifest: not valid JSON: ") + e.what());
    }
    if (!manifest.contains("config_text") ||
        !manifest["config_text"].is_string()) {
      throw ConfigError("manifest: missing config_text field");
    }
    return parse_config_text(manifest["config_text"].get<std::string>());
  }
  return parse_config_text(text);
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  auto line = [&out](const std::string& key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };

  out += "[model]\n";
  if (!cfg.preset.empty()) {
    line("preset", cfg.preset);
  } else {
    line("p", std::to_string(cfg.p));
    line("sigma", join_doubles(cfg.sigma_rowmajor));
  }

  out += "\n[penalty]\n";
  line("lambda", format_g17(cfg.penalty.lambda));
  line("tolerance", format_g17(cfg.penalty.tolerance));
  line("max_iterations", std::to_string(cfg.penalty.max_iterations));
  line("support_tolerance", format_g17(cfg.penalty.support_tolerance));

  out += "\n[plugin]\n";
  line("kind", plugin_name(cfg.kind));
  if (cfg.kind == PluginKind::FastMCD) {
    line("subset_fraction", format_g17(cfg.mcd.subset_fraction));
    line("reweight", cfg.mcd.reweight ? "true" : "false");
    line("reweight_cutoff", format_g17(cfg.mcd.reweight_cutoff));
    line("starts", std::to_string(cfg.mcd.starts));
  }

  out += "\n[task]\n";
  line("type", task_name(cfg.task));

  if (cfg.task == Task::IFSurface || cfg.task == Task::SCSurface) {
    out += "\n[grid]\n";
    for (std::size_t i = 0; i < cfg.axes.size(); ++i) {
      line("z" + std::to_string(i + 1), cfg.axes[i].render());
    }
  } else if (cfg.task == Task::GESScan) {
    out += "\n[grid]\n";
    line("radii", join_doubles(cfg.radii));
    std::string dirs;
    for (std::size_t i = 0; i < cfg.directions.size(); ++i) {
      if (i) dirs += "; ";
      const auto& v = cfg.directions[i];
      for (int j = 0; j < v.size(); ++j) {
        if (j) dirs += ',';
        dirs += format_g17(v(j));
      }
    }
    line("directions", dirs);
  }

  if (cfg.task == Task::SCSurface) {
    out += "\n[sc]\n";
    line("n", std::to_string(cfg.sc_n));
    line("replications", std::to_string(cfg.sc_replications));
  }

  if (cfg.task == Task::ASV || cfg.task == Task::EfficiencyTable) {
    out += "\n[asv]\n";
    line("order", std::to_string(cfg.asv.smooth_order));
    line("mc_samples", std::to_string(cfg.asv.mc_samples));
    if (cfg.task == Task::EfficiencyTable) {
      line("mc_batches", std::to_string(cfg.asv.mc_batches));
      std::string kinds;
      for (std::size_t i = 0; i < cfg.table_kinds.size(); ++i) {
        if (i) kinds += ',';
        kinds += plugin_name(cfg.table_kinds[i]);
      }
      line("kinds", kinds);
      std::string comps;
      for (std::size_t i = 0; i < cfg.components.size(); ++i) {
        if (i) comps += ',';
        comps += std::to_string(cfg.components[i].first + 1) + ":" +
                 std::to_string(cfg.components[i].second + 1);
      }
      line("components", comps);
    }
  }

  out += "\n[seeds]\n";
  line("seed", std::to_string(cfg.seed));

  out += "\n[output]\n";
  line("csv", cfg.csv_file());
  line("manifest", cfg.manifest_file());
  return out;
}

}  // namespace robglasso::cli
