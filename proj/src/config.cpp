#include "snse/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace snse {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s{
      {"physical", {"length", "viscosity", "horizon"}},
      {"spectral", {"cutoff"}},
      {"noise", {"scale", "trace", "decay", "seed", "policy"}},
      {"initial", {"kind", "amplitude", "decay", "seed", "gamma0"}},
      {"scheme", {"kind", "tol_fp", "max_iter", "advection"}},
      {"sweep", {"variable", "levels", "reference", "replicates", "steps", "reference_cutoff"}},
      {"analysis", {"order", "alpha", "lags", "fem_levels"}},
      {"constants", {"cbar", "sigma", "samples", "mu"}},
      {"output", {"dir", "format"}},
  };
  return s;
}

std::string nearest(const std::string& word, const std::vector<std::string>& candidates) {
  std::string best;
  int best_d = 1 << 30;
  for (const auto& c : candidates) {
    const int d = edit_distance(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  // Only suggest plausible typos.
  if (best_d > std::max<int>(2, static_cast<int>(word.size()) / 3)) return {};
  return best;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Reader {
  const pt::ptree& tree;
  std::vector<std::string>& problems;

  std::optional<std::string> raw(const std::string& section, const std::string& key) const {
    const auto sec = tree.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  template <class T>
  std::optional<T> number(const std::string& section, const std::string& key) const {
    const auto s = raw(section, key);
    if (!s) return std::nullopt;
    T value{};
    const char* first = s->data();
    const char* last = s->data() + s->size();
    std::from_chars_result r;
    if constexpr (std::is_floating_point_v<T>) {
      r = std::from_chars(first, last, value, std::chars_format::general);
    } else {
      r = std::from_chars(first, last, value);
    }
    if (r.ec != std::errc() || r.ptr != last || s->empty()) {
      problems.push_back(section + "." + key + ": expected a number, got '" + *s + "'");
      return std::nullopt;
    }
    return value;
  }

  template <class T>
  void set(const std::string& section, const std::string& key, T& field) const {
    if (auto v = number<T>(section, key)) field = *v;
  }

  template <class T>
  void set(const std::string& section, const std::string& key, std::optional<T>& field) const {
    if (auto v = number<T>(section, key)) field = *v;
  }

  template <class T>
  void list(const std::string& section, const std::string& key, std::vector<T>& field) const {
    const auto s = raw(section, key);
    if (!s) return;
    std::vector<T> out;
    std::stringstream ss(*s);
    std::string item;
    bool ok = true;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      T value{};
      std::from_chars_result r;
      if constexpr (std::is_floating_point_v<T>) {
        r = std::from_chars(item.data(), item.data() + item.size(), value,
                            std::chars_format::general);
      } else {
        r = std::from_chars(item.data(), item.data() + item.size(), value);
      }
      if (item.empty() || r.ec != std::errc() || r.ptr != item.data() + item.size()) {
        problems.push_back(section + "." + key + ": bad list entry '" + item + "'");
        ok = false;
        break;
      }
      out.push_back(value);
    }
    if (ok) field = std::move(out);
  }

  void boolean(const std::string& section, const std::string& key, bool& field) const {
    const auto s = raw(section, key);
    if (!s) return;
    if (*s == "true" || *s == "1" || *s == "on") {
      field = true;
    } else if (*s == "false" || *s == "0" || *s == "off") {
      field = false;
    } else {
      problems.push_back(section + "." + key + ": expected true or false, got '" + *s + "'");
    }
  }
};

bool is_power_of_two(long v) { return v > 0 && (v & (v - 1)) == 0; }

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      s += buf;
    } else {
      s += std::to_string(v[i]);
    }
  }
  return s;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string to_string(InitialKind kind) {
  switch (kind) {
    case InitialKind::Zero: return "zero";
    case InitialKind::Shear: return "shear";
    case InitialKind::RandomSmooth: return "random-smooth";
    case InitialKind::Gaussian: return "gaussian";
  }
  return "zero";
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError({"line " + std::to_string(e.line()) + ": " + e.message()});
  }

  std::vector<std::string> problems;
  const auto& known = schema();
  std::vector<std::string> section_names;
  for (const auto& [name, keys] : known) section_names.push_back(name);
  for (const auto& [section, child] : tree) {
    if (child.empty() && !child.data().empty()) {
      problems.push_back("key '" + section + "' outside any section");
      continue;
    }
    const auto it = known.find(section);
    if (it == known.end()) {
      std::string msg = "unknown section [" + section + "]";
      if (auto s = nearest(section, section_names); !s.empty()) msg += " (did you mean [" + s + "]?)";
      problems.push_back(msg);
      continue;
    }
    for (const auto& [key, value] : child) {
      if (std::find(it->second.begin(), it->second.end(), key) != it->second.end()) continue;
      std::string msg = "unknown key '" + key + "' in [" + section + "]";
      if (auto s = nearest(key, it->second); !s.empty()) msg += " (did you mean '" + s + "'?)";
      problems.push_back(msg);
    }
  }

  ExperimentConfig c;
  Reader r{tree, problems};
  r.set("physical", "length", c.length);
  r.set("physical", "viscosity", c.viscosity);
  r.set("physical", "horizon", c.horizon);
  r.set("spectral", "cutoff", c.cutoff);
  r.set("noise", "scale", c.noise_scale);
  r.set("noise", "trace", c.noise_trace);
  r.set("noise", "decay", c.noise_decay);
  r.set("noise", "seed", c.seed);
  if (auto p = r.raw("noise", "policy")) {
    if (*p == "warn") {
      c.reject_rough_noise = false;
    } else if (*p == "reject") {
      c.reject_rough_noise = true;
    } else {
      problems.push_back("noise.policy: expected warn or reject, got '" + *p + "'");
    }
  }
  if (auto k = r.raw("initial", "kind")) {
    if (*k == "zero") {
      c.initial = InitialKind::Zero;
    } else if (*k == "shear") {
      c.initial = InitialKind::Shear;
    } else if (*k == "random-smooth") {
      c.initial = InitialKind::RandomSmooth;
    } else if (*k == "gaussian") {
      c.initial = InitialKind::Gaussian;
    } else {
      problems.push_back("initial.kind: expected zero, shear, random-smooth or gaussian, got '" +
                         *k + "'");
    }
  }
  r.set("initial", "amplitude", c.initial_amplitude);
  r.set("initial", "decay", c.initial_decay);
  r.set("initial", "seed", c.initial_seed);
  r.set("initial", "gamma0", c.gamma0);
  if (auto k = r.raw("scheme", "kind")) {
    try {
      c.scheme = scheme_kind_from_string(*k);
    } catch (const std::invalid_argument&) {
      problems.push_back("scheme.kind: expected fully-implicit, semi-implicit or ou-exact, got '" +
                         *k + "'");
    }
  }
  r.set("scheme", "tol_fp", c.tol_fp);
  r.set("scheme", "max_iter", c.max_iter);
  r.boolean("scheme", "advection", c.advection);
  if (auto v = r.raw("sweep", "variable")) c.sweep_variable = *v;
  r.list("sweep", "levels", c.levels);
  r.set("sweep", "reference", c.reference);
  r.set("sweep", "replicates", c.replicates);
  r.set("sweep", "steps", c.steps);
  r.set("sweep", "reference_cutoff", c.reference_cutoff);
  r.set("analysis", "order", c.order);
  r.list("analysis", "alpha", c.alpha);
  r.set("analysis", "lags", c.lags);
  r.list("analysis", "fem_levels", c.fem_levels);
  r.set("constants", "cbar", c.cbar);
  r.set("constants", "sigma", c.sigma);
  r.set("constants", "samples", c.constant_samples);
  r.set("constants", "mu", c.mu);
  if (auto v = r.raw("output", "dir")) c.output_dir = *v;
  if (auto v = r.raw("output", "format")) c.format = *v;

  for (auto& p : validate(c)) problems.push_back(std::move(p));
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError({"cannot open config file '" + path + "'"});
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> p;
  if (!(c.length > 0.0)) p.push_back("physical.length must be positive");
  if (!(c.viscosity > 0.0)) p.push_back("physical.viscosity must be positive");
  if (!(c.horizon > 0.0)) p.push_back("physical.horizon must be positive");
  if (c.cutoff < 1) p.push_back("spectral.cutoff must be >= 1");

  if (c.noise_scale && c.noise_trace) p.push_back("noise.scale and noise.trace are exclusive");
  if (c.noise_scale && !(*c.noise_scale >= 0.0)) p.push_back("noise.scale must be >= 0");
  if (c.noise_trace && !(*c.noise_trace >= 0.0)) p.push_back("noise.trace must be >= 0");
  if (!std::isfinite(c.noise_decay)) p.push_back("noise.decay must be finite");
  if (c.reject_rough_noise && c.noise_decay <= 2.0) {
    p.push_back("noise.decay must exceed 2 under policy reject");
  }

  if (!(c.initial_amplitude >= 0.0)) p.push_back("initial.amplitude must be >= 0");
  if (!std::isfinite(c.initial_decay)) p.push_back("initial.decay must be finite");
  if (c.gamma0 && !(*c.gamma0 > 0.0)) p.push_back("initial.gamma0 must be positive");

  if (!(c.tol_fp > 0.0)) p.push_back("scheme.tol_fp must be positive");
  if (c.max_iter < 1) p.push_back("scheme.max_iter must be >= 1");

  const bool time_sweep = c.sweep_variable == "N";
  if (!time_sweep && c.sweep_variable != "n") {
    p.push_back("sweep.variable must be N or n, got '" + c.sweep_variable + "'");
  }
  if (c.levels.empty()) p.push_back("sweep.levels must not be empty");
  for (std::size_t i = 0; i < c.levels.size(); ++i) {
    const int lv = c.levels[i];
    if (lv < (time_sweep ? 1 : 2)) {
      p.push_back("sweep.levels: level " + std::to_string(lv) + " is too small");
      continue;
    }
    if (i > 0) {
      const int prev = c.levels[i - 1];
      if (lv <= prev || prev < 1 || lv % prev != 0 || !is_power_of_two(lv / prev)) {
        p.push_back("sweep.levels: level " + std::to_string(lv) +
                    " is not a dyadic refinement of " + std::to_string(prev));
      }
    }
    if (time_sweep && (c.reference < 1 || c.reference % lv != 0)) {
      p.push_back("sweep.reference " + std::to_string(c.reference) +
                  " is not a multiple of level " + std::to_string(lv));
    }
  }
  if (!is_power_of_two(c.reference)) p.push_back("sweep.reference must be a power of two");
  if (c.replicates < 1) p.push_back("sweep.replicates must be >= 1");
  if (!is_power_of_two(c.steps)) p.push_back("sweep.steps must be a power of two");
  if (c.reference_cutoff < c.cutoff) p.push_back("sweep.reference_cutoff must be >= spectral.cutoff");

  if (!(c.order >= 2.0)) p.push_back("analysis.order must be >= 2");
  for (double a : c.alpha) {
    if (!(a >= 0.0)) p.push_back("analysis.alpha entries must be >= 0");
  }
  if (c.lags < 3) p.push_back("analysis.lags must be >= 3");
  for (std::size_t i = 0; i < c.fem_levels.size(); ++i) {
    if (c.fem_levels[i] < 2) p.push_back("analysis.fem_levels entries must be >= 2");
    if (i > 0 && c.fem_levels[i] <= c.fem_levels[i - 1]) {
      p.push_back("analysis.fem_levels must be strictly increasing");
    }
  }

  if (c.cbar && !(*c.cbar > 0.0)) p.push_back("constants.cbar must be positive");
  if (c.sigma && !(*c.sigma > 0.0)) p.push_back("constants.sigma must be positive");
  if (c.constant_samples < 1) p.push_back("constants.samples must be >= 1");
  if (!(c.mu > 0.0 && c.mu < 1.0)) p.push_back("constants.mu must lie in (0, 1)");

  if (c.output_dir.empty()) p.push_back("output.dir must not be empty");
  if (c.format != "csv" && c.format != "json") p.push_back("output.format must be csv or json");
  return p;
}

std::string echo(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[physical]\nlength = " << fmt(c.length) << "\nviscosity = " << fmt(c.viscosity)
    << "\nhorizon = " << fmt(c.horizon) << "\n\n";
  o << "[spectral]\ncutoff = " << c.cutoff << "\n\n";
  o << "[noise]\n";
  if (c.noise_scale) o << "scale = " << fmt(*c.noise_scale) << "\n";
  if (c.noise_trace) o << "trace = " << fmt(*c.noise_trace) << "\n";
  o << "decay = " << fmt(c.noise_decay) << "\nseed = " << c.seed
    << "\npolicy = " << (c.reject_rough_noise ? "reject" : "warn") << "\n\n";
  o << "[initial]\nkind = " << to_string(c.initial) << "\namplitude = " << fmt(c.initial_amplitude)
    << "\ndecay = " << fmt(c.initial_decay) << "\nseed = " << c.initial_seed << "\n";
  if (c.gamma0) o << "gamma0 = " << fmt(*c.gamma0) << "\n";
  o << "\n[scheme]\nkind = " << to_string(c.scheme) << "\ntol_fp = " << fmt(c.tol_fp)
    << "\nmax_iter = " << c.max_iter << "\nadvection = " << (c.advection ? "true" : "false")
    << "\n\n";
  o << "[sweep]\nvariable = " << c.sweep_variable << "\nlevels = " << join(c.levels)
    << "\nreference = " << c.reference << "\nreplicates = " << c.replicates
    << "\nsteps = " << c.steps << "\nreference_cutoff = " << c.reference_cutoff << "\n\n";
  o << "[analysis]\norder = " << fmt(c.order) << "\nalpha = " << join(c.alpha)
    << "\nlags = " << c.lags << "\nfem_levels = " << join(c.fem_levels) << "\n\n";
  o << "[constants]\n";
  if (c.cbar) o << "cbar = " << fmt(*c.cbar) << "\n";
  if (c.sigma) o << "sigma = " << fmt(*c.sigma) << "\n";
  o << "samples = " << c.constant_samples << "\nmu = " << fmt(c.mu) << "\n\n";
  o << "[output]\ndir = " << c.output_dir << "\nformat = " << c.format << "\n";
  return o.str();
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  // The canonical text prints every field exactly.
  return echo(a) == echo(b);
}

}  // namespace snse
