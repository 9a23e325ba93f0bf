#include "snse/io.hpp"

#include "json.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace snse {
namespace {

namespace fs = std::filesystem;

constexpr char kNoiseMagic[4] = {'N', 'S', 'W', '1'};
constexpr char kTrajMagic[4] = {'N', 'S', 'T', '1'};

// Explicit little-endian byte order, independent of the host.
class Writer {
public:
  explicit Writer(const std::string& file) : out_(file, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open '" + file + "' for writing");
  }
  void magic(const char (&m)[4]) { out_.write(m, 4); }
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b, 8);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void finish(const std::string& file) {
    out_.flush();
    if (!out_) throw std::runtime_error("write to '" + file + "' failed");
  }

private:
  std::ofstream out_;
};

class Reader {
public:
  explicit Reader(const std::string& file) : file_(file), in_(file, std::ios::binary) {
    if (!in_) throw FormatError("cannot open '" + file + "'");
  }
  void magic(const char (&m)[4]) {
    char b[4];
    in_.read(b, 4);
    if (!in_ || std::memcmp(b, m, 4) != 0) {
      throw FormatError("'" + file_ + "' is not a " + std::string(m, 4) + " file");
    }
  }
  std::uint64_t u64() {
    unsigned char b[8];
    in_.read(reinterpret_cast<char*>(b), 8);
    if (!in_) throw FormatError("'" + file_ + "' is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw FormatError("'" + file_ + "' has trailing data");
    }
  }

private:
  std::string file_;
  std::ifstream in_;
};

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::json cell_json(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  if (s.empty()) return nullptr;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(v)) return v;
  return s;
}

std::string fmt_opt(const std::optional<FitResult>& f, double FitResult::*field) {
  return f ? format_double((*f).*field) : std::string();
}

std::string b(bool v) { return v ? "true" : "false"; }

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- binary

void write_noise_path(const std::string& file, const NoisePath& path) {
  Writer w(file);
  w.magic(kNoiseMagic);
  w.f64(path.grid().length());
  w.i64(path.grid().cutoff());
  w.i64(path.fine_steps());
  w.f64(path.horizon());
  w.u64(path.seed());
  w.f64(path.q().scale);
  w.f64(path.q().decay);
  for (double x : path.raw()) w.f64(x);
  w.finish(file);
}

NoisePath read_noise_path(const std::string& file) {
  Reader r(file);
  r.magic(kNoiseMagic);
  const double length = r.f64();
  const auto cutoff = r.i64();
  const auto fine = r.i64();
  const double horizon = r.f64();
  const auto seed = r.u64();
  const double scale = r.f64();
  const double decay = r.f64();
  if (cutoff < 1 || cutoff > (1 << 16) || fine < 1 || fine > (std::int64_t{1} << 32)) {
    throw FormatError("'" + file + "' has an implausible header");
  }
  auto grid = make_grid(length, static_cast<int>(cutoff));
  QSpec q = build_q(grid, scale, decay);
  std::vector<double> inc(grid->pair_count() * 2 * static_cast<std::size_t>(fine));
  for (auto& x : inc) x = r.f64();
  r.expect_end();
  return NoisePath(std::move(q), static_cast<int>(fine), horizon, seed, std::move(inc));
}

void write_trajectory(const std::string& file, const Trajectory& traj) {
  if (traj.states.empty()) throw std::invalid_argument("empty trajectory");
  const auto& g = traj.states.front().grid();
  Writer w(file);
  w.magic(kTrajMagic);
  w.f64(g.length());
  w.i64(g.cutoff());
  w.i64(traj.params.steps);
  w.f64(traj.params.horizon);
  w.f64(traj.params.viscosity);
  w.i64(static_cast<std::int64_t>(traj.params.kind));
  w.u64(traj.seed);
  for (const auto& s : traj.states) {
    for (const auto& c : s.coeffs()) {
      w.f64(c.x.real());
      w.f64(c.x.imag());
      w.f64(c.y.real());
      w.f64(c.y.imag());
    }
  }
  w.finish(file);
}

Trajectory read_trajectory(const std::string& file) {
  Reader r(file);
  r.magic(kTrajMagic);
  const double length = r.f64();
  const auto cutoff = r.i64();
  const auto steps = r.i64();
  Trajectory t;
  t.params.horizon = r.f64();
  t.params.viscosity = r.f64();
  const auto kind = r.i64();
  t.seed = r.u64();
  if (cutoff < 1 || cutoff > (1 << 16) || steps < 1 || steps > (std::int64_t{1} << 32) ||
      kind < 0 || kind > 2) {
    throw FormatError("'" + file + "' has an implausible header");
  }
  t.params.steps = static_cast<int>(steps);
  t.params.kind = static_cast<SchemeKind>(kind);
  auto grid = make_grid(length, static_cast<int>(cutoff));
  for (std::int64_t l = 0; l <= steps; ++l) {
    SpectralField f(grid);
    for (auto& c : f.coeffs()) {
      const double xr = r.f64(), xi = r.f64(), yr = r.f64(), yi = r.f64();
      c.x = {xr, xi};
      c.y = {yr, yi};
    }
    t.states.push_back(std::move(f));
  }
  r.expect_end();
  return t;
}

void write_triplets(const std::string& file, const SparseMatrix& m) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file + "' for writing");
  out << "# " << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  for (int c = 0; c < m.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) {
      out << it.row() << " " << it.col() << " " << format_double(it.value()) << "\n";
    }
  }
}

SparseMatrix read_triplets(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open '" + file + "'");
  std::string hash;
  long rows = 0, cols = 0, nnz = 0;
  if (!(in >> hash >> rows >> cols >> nnz) || hash != "#" || rows < 0 || cols < 0) {
    throw FormatError("'" + file + "' lacks the triplet header");
  }
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nnz);
  long r = 0, c = 0;
  double v = 0.0;
  while (in >> r >> c >> v) trip.emplace_back(r, c, v);
  if (static_cast<long>(trip.size()) != nnz) throw FormatError("'" + file + "' is truncated");
  SparseMatrix m(rows, cols);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

// ---------------------------------------------------------------- manifest

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Manifest make_manifest(const std::string& command, const ExperimentConfig& cfg) {
  Manifest m;
  m.command = command;
  m.config_text = echo(cfg);
  m.seed = cfg.seed;
  m.replicates = cfg.replicates;
  for (int r = 0; r < cfg.replicates; ++r) m.replicate_seeds.push_back(replicate_seed(cfg, r));
  return m;
}

std::string Manifest::json() const {
  nlohmann::ordered_json j;
  j["format"] = "snse-manifest";
  j["version"] = version;
  j["command"] = command;
  j["seed"] = seed;
  j["replicates"] = replicates;
  j["replicate_seeds"] = replicate_seeds;
  j["config"] = config_text;
  return j.dump(2);
}

std::uint64_t Manifest::hash() const { return fnv1a(json()); }

std::string write_manifest(const std::string& dir, const Manifest& man) {
  fs::create_directories(dir);
  const auto file = (fs::path(dir) / "manifest.json").string();
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(man.json());
  j["hash"] = hex64(man.hash());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file + "' for writing");
  out << j.dump(2) << "\n";
  return file;
}

// ---------------------------------------------------------------- tables

std::string write_table(const std::string& dir, const std::string& stem, const Table& t,
                        const Manifest& man, const std::string& format) {
  fs::create_directories(dir);
  const bool json = format == "json";
  const auto file = (fs::path(dir) / (stem + (json ? ".json" : ".csv"))).string();
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file + "' for writing");
  if (json) {
    nlohmann::ordered_json j;
    j["manifest"] = hex64(man.hash());
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : t.rows) {
      nlohmann::ordered_json o;
      for (std::size_t c = 0; c < t.columns.size(); ++c) {
        o[t.columns[c]] = c < row.size() ? cell_json(row[c]) : nullptr;
      }
      j["rows"].push_back(o);
    }
    out << j.dump(2) << "\n";
  } else {
    out << "# manifest=" << hex64(man.hash()) << "\n";
    for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
    out << "\n";
    for (const auto& row : t.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << csv_escape(row[c]);
      out << "\n";
    }
  }
  return file;
}

std::string write_rates(const std::string& dir, const std::string& stem, const RateReport& rep,
                        const Manifest& man, const std::string& format) {
  Table t;
  t.columns = {"sweep_var", "level",   "mean_err_L2sq", "ci_half",      "mean_err_Vsq",
               "ci_half_V", "replicates", "invalid",    "scale",        "aborted",
               "slope_L2",  "intercept_L2", "r2_L2",    "slope_V",      "intercept_V",
               "r2_V",      "slope_L2_without_coarsest"};
  for (const auto& r : rep.rows) {
    t.rows.push_back({rep.sweep_var, std::to_string(r.level), format_double(r.l2.mean),
                      format_double(r.l2.half_width), format_double(r.v.mean),
                      format_double(r.v.half_width), std::to_string(r.replicates),
                      std::to_string(r.invalid), format_double(r.scale), b(r.aborted),
                      fmt_opt(rep.fit_l2, &FitResult::slope),
                      fmt_opt(rep.fit_l2, &FitResult::intercept), fmt_opt(rep.fit_l2, &FitResult::r2),
                      fmt_opt(rep.fit_v, &FitResult::slope),
                      fmt_opt(rep.fit_v, &FitResult::intercept), fmt_opt(rep.fit_v, &FitResult::r2),
                      rep.slope_without_coarsest ? format_double(*rep.slope_without_coarsest)
                                                 : std::string()});
  }
  return write_table(dir, stem, t, man, format);
}

std::string write_moments(const std::string& dir, const MomentReport& rep, const Manifest& man,
                          const std::string& format) {
  Table t;
  t.columns = {"family", "level", "functional", "order", "mean", "ci_half", "replicates"};
  for (const auto& r : rep.rows) {
    t.rows.push_back({r.family, std::to_string(r.level), r.name, format_double(rep.order),
                      format_double(r.estimate.mean), format_double(r.estimate.half_width),
                      std::to_string(r.estimate.count)});
  }
  const auto file = write_table(dir, "moments", t, man, format);
  Table s;
  s.columns = {"family", "functional", "max_over_min", "pass"};
  for (const auto& r : rep.stability) {
    s.rows.push_back({r.family, r.name, format_double(r.ratio), b(r.pass)});
  }
  write_table(dir, "moment_stability", s, man, format);
  return file;
}

std::string write_exp_moments(const std::string& dir, const std::vector<ExpMomentRow>& rows,
                              const Manifest& man, const std::string& format) {
  Table t;
  t.columns = {"functional", "alpha",          "log_mean_half", "log_mean",   "log_ci_half",
               "largest_share", "count",       "ratio_full_half", "stable"};
  for (const auto& r : rows) {
    t.rows.push_back({r.functional, format_double(r.alpha), format_double(r.half.log_mean),
                      format_double(r.full.log_mean), format_double(r.full.log_half_width),
                      format_double(r.full.largest_share), std::to_string(r.full.count),
                      format_double(r.ratio), b(r.stable)});
  }
  return write_table(dir, "exp_moments", t, man, format);
}

std::string write_conditions(const std::string& dir, const ConditionReport& rep,
                             const Manifest& man, const std::string& format) {
  Table t;
  t.columns = {"theorem", "threshold", "value", "margin", "pass", "quantity"};
  for (const auto& r : rep.rows) {
    t.rows.push_back({r.theorem, format_double(r.threshold), format_double(r.value),
                      format_double(r.margin), b(r.pass), r.quantity});
  }
  const auto file = write_table(dir, "conditions", t, man, format);
  Table in;
  in.columns = {"nu", "T", "trace_q", "k0", "cbar", "sigma", "gamma0", "mu", "alpha0", "beta0", "beta1"};
  const auto& i = rep.inputs;
  in.rows.push_back({format_double(i.nu), format_double(i.horizon), format_double(i.trace_q),
                     format_double(i.k0), format_double(i.cbar), format_double(i.sigma),
                     i.gamma0 ? format_double(*i.gamma0) : std::string(), format_double(i.mu),
                     format_double(rep.alpha0), format_double(rep.beta0), format_double(rep.beta1)});
  write_table(dir, "condition_inputs", in, man, format);
  return file;
}

std::string write_regularity(const std::string& dir, const RegularityReport& rep,
                             const Manifest& man, const std::string& format) {
  Table t;
  t.columns = {"mode", "level", "scale", "mean", "ci_half", "replicates", "slope", "intercept", "r2"};
  for (const auto* r : {&rep.l2, &rep.v}) {
    const std::string mode = r == &rep.l2 ? "L2" : "V";
    for (const auto& row : r->rows) {
      t.rows.push_back({mode, std::to_string(row.level), format_double(row.scale),
                        format_double(row.l2.mean), format_double(row.l2.half_width),
                        std::to_string(row.replicates), fmt_opt(r->fit_l2, &FitResult::slope),
                        fmt_opt(r->fit_l2, &FitResult::intercept),
                        fmt_opt(r->fit_l2, &FitResult::r2)});
    }
  }
  return write_table(dir, "regularity", t, man, format);
}

std::string write_constants(const std::string& dir, const ConstantEstimate& est,
                            const Manifest& man, const std::string& format) {
  Table t;
  t.columns = {"constant", "estimate", "samples", "kind"};
  t.rows.push_back({"cbar", format_double(est.cbar), std::to_string(est.samples), "lower bound"});
  t.rows.push_back({"sigma", format_double(est.sigma), std::to_string(est.samples), "lower bound"});
  return write_table(dir, "constants", t, man, format);
}

std::string write_ou_validation(const std::string& dir, const OuValidation& ou,
                                const Manifest& man, const std::string& format) {
  Table v;
  v.columns = {"time", "coordinates", "worst_z", "pass"};
  for (const auto& c : ou.variance) {
    v.rows.push_back({format_double(c.time), std::to_string(c.coordinates),
                      format_double(c.worst_z), b(c.pass)});
  }
  write_table(dir, "ou_variance", v, man, format);
  write_rates(dir, "rates", ou.monte_carlo, man, format);
  Table o;
  o.columns = {"level", "oracle_L2sq", "oracle_Vsq", "slope_L2", "slope_V", "mc_slope_L2",
               "mc_slope_V", "bruteforce_gap"};
  for (std::size_t i = 0; i < ou.oracle_l2.size(); ++i) {
    o.rows.push_back({std::to_string(ou.monte_carlo.rows[i].level), format_double(ou.oracle_l2[i]),
                      format_double(ou.oracle_v[i]), fmt_opt(ou.oracle_fit_l2, &FitResult::slope),
                      fmt_opt(ou.oracle_fit_v, &FitResult::slope),
                      fmt_opt(ou.monte_carlo.fit_l2, &FitResult::slope),
                      fmt_opt(ou.monte_carlo.fit_v, &FitResult::slope),
                      format_double(ou.bruteforce_gap)});
  }
  return write_table(dir, "ou_oracle", o, man, format);
}

std::string write_diagnostics(const std::string& dir, const Trajectory& traj, const Manifest& man,
                              const std::string& format) {
  Table t;
  t.columns = {"step", "iterations", "energy_residual", "v_norm_sq", "dissipation_sum"};
  for (std::size_t l = 0; l < traj.diagnostics.size(); ++l) {
    const auto& d = traj.diagnostics[l];
    t.rows.push_back({std::to_string(l + 1), std::to_string(d.iterations),
                      format_double(d.energy_residual), format_double(d.v_norm_sq),
                      format_double(d.dissipation_sum)});
  }
  return write_table(dir, "diagnostics", t, man, format);
}

}  // namespace snse
