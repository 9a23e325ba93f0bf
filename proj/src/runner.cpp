#include "snse/runner.hpp"

#include <cstdio>
#include <filesystem>
#include <ostream>

#include "snse/io.hpp"

namespace snse {
namespace {

namespace fs = std::filesystem;

std::string num(double v, const char* f = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_rates(std::ostream& out, const RateReport& rep) {
  out << rep.sweep_var << "\tmean max|e|^2\t95% half\tmean V-term\t95% half\treplicates\tinvalid\n";
  for (const auto& r : rep.rows) {
    out << r.level << "\t" << num(r.l2.mean) << "\t" << num(r.l2.half_width) << "\t"
        << num(r.v.mean) << "\t" << num(r.v.half_width) << "\t" << r.replicates << "\t"
        << r.invalid << (r.aborted ? "\taborted" : "") << "\n";
  }
  if (rep.fit_l2) {
    out << "slope (L2 term): " << num(rep.fit_l2->slope, "%.3f") << " +- "
        << num(rep.fit_l2->slope_stderr, "%.3f") << ", R^2 " << num(rep.fit_l2->r2, "%.4f") << "\n";
  } else {
    out << "slope (L2 term): not enough usable levels\n";
  }
  if (rep.fit_v) out << "slope (V term):  " << num(rep.fit_v->slope, "%.3f") << "\n";
  if (rep.slope_without_coarsest) {
    out << "slope without coarsest level: " << num(*rep.slope_without_coarsest, "%.3f") << "\n";
  }
  for (const auto& n : rep.notes) out << "note: " << n << "\n";
}

void print_single(std::ostream& out, const RateReport& rep, const char* label) {
  out << rep.sweep_var << "\t" << label << "\t95% half\n";
  for (const auto& r : rep.rows) {
    out << r.level << "\t" << num(r.l2.mean) << "\t" << num(r.l2.half_width) << "\n";
  }
  if (rep.fit_l2) {
    out << "exponent: " << num(rep.fit_l2->slope, "%.3f") << " +- "
        << num(rep.fit_l2->slope_stderr, "%.3f") << "\n";
  }
  for (const auto& n : rep.notes) out << "note: " << n << "\n";
}

bool any_aborted(const RateReport& rep) {
  for (const auto& r : rep.rows) {
    if (r.aborted) return true;
  }
  return false;
}

int simulate(const ExperimentConfig& cfg, const RunOptions&, const Manifest& man,
             std::ostream& out) {
  const auto grid = config_grid(cfg);
  const auto q = config_q(cfg, grid);
  const auto path = sample_path(q, cfg.steps, cfg.horizon, cfg.seed);
  const auto u0 = initial_condition(cfg, grid, cfg.seed);
  fs::create_directories(cfg.output_dir);
  write_noise_path((fs::path(cfg.output_dir) / "noise.nsw").string(), path);
  Trajectory traj;
  try {
    traj = run_scheme(u0, path, config_scheme(cfg, cfg.steps, cfg.scheme));
  } catch (const SolverError& e) {
    out << "solver failure at step " << e.step() << " after " << e.iterations()
        << " iterations (residual " << num(e.residual()) << "): " << e.what() << "\n";
    return kExitSolver;
  }
  write_trajectory((fs::path(cfg.output_dir) / "trajectory.nst").string(), traj);
  write_diagnostics(cfg.output_dir, traj, man, cfg.format);
  double worst = 0.0;
  for (const auto& d : traj.diagnostics) worst = std::max(worst, std::abs(d.energy_residual));
  out << "steps " << cfg.steps << ", final |u|^2 " << num(std::pow(sobolev_norm(traj.states.back(), 0.0), 2))
      << ", final |A^{1/2}u|^2 " << num(traj.diagnostics.back().v_norm_sq)
      << ", max energy residual " << num(worst) << "\n";
  for (const auto& w : q.warnings) out << "note: noise: " << w << "\n";
  return kExitOk;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{
      "simulate", "converge-time", "converge-space", "converge-divfree", "ou-validate", "moments",
      "exp-moments", "regularity", "check-conditions", "estimate-constants", "dump-matrices"};
  return s;
}

int run_command(const std::string& sub, const ExperimentConfig& cfg, const RunOptions& opts,
                std::ostream& out) {
  if (auto problems = validate(cfg); !problems.empty()) throw ConfigError(std::move(problems));
  const Manifest man = make_manifest(sub, cfg);
  fs::create_directories(cfg.output_dir);
  write_manifest(cfg.output_dir, man);
  out << "manifest " << hex64(man.hash()) << "\n";

  try {
    if (sub == "simulate") return simulate(cfg, opts, man, out);

    if (sub == "converge-time" || sub == "converge-divfree") {
      if (cfg.sweep_variable != "N") throw ConfigError({"sweep.variable must be N for " + sub});
      const SchemeKind kind = sub == "converge-divfree" ? SchemeKind::SemiImplicit : cfg.scheme;
      const auto rep = run_time_sweep(cfg, kind, opts);
      write_rates(cfg.output_dir, "rates", rep, man, cfg.format);
      print_rates(out, rep);
      return any_aborted(rep) ? kExitAborted : kExitOk;
    }

    if (sub == "converge-space") {
      if (cfg.sweep_variable != "n") throw ConfigError({"sweep.variable must be n for " + sub});
      const auto rep = run_space_sweep(cfg, opts);
      write_rates(cfg.output_dir, "rates", rep, man, cfg.format);
      print_rates(out, rep);
      return any_aborted(rep) ? kExitAborted : kExitOk;
    }

    if (sub == "ou-validate") {
      const auto ou = run_ou_validation(cfg, opts);
      write_ou_validation(cfg.output_dir, ou, man, cfg.format);
      for (const auto& v : ou.variance) {
        out << "variance at t=" << num(v.time) << ": worst z " << num(v.worst_z, "%.2f") << " over "
            << v.coordinates << " coordinates " << (v.pass ? "ok" : "FAIL") << "\n";
      }
      print_rates(out, ou.monte_carlo);
      if (ou.oracle_fit_l2) out << "oracle slope (L2 term): " << num(ou.oracle_fit_l2->slope, "%.3f") << "\n";
      if (ou.oracle_fit_v) out << "oracle slope (V term):  " << num(ou.oracle_fit_v->slope, "%.3f") << "\n";
      out << "scalar brute force vs field computation: max relative gap " << num(ou.bruteforce_gap)
          << "\n";
      return any_aborted(ou.monte_carlo) ? kExitAborted : kExitOk;
    }

    if (sub == "moments") {
      const auto rep = run_moments(cfg, opts);
      write_moments(cfg.output_dir, rep, man, cfg.format);
      for (const auto& r : rep.rows) {
        out << r.family << "\t" << r.level << "\t" << r.name << "\t" << num(r.estimate.mean)
            << " +- " << num(r.estimate.half_width) << "\n";
      }
      for (const auto& s : rep.stability) {
        out << "stability " << s.family << " " << s.name << ": max/min " << num(s.ratio, "%.3f")
            << (s.pass ? " ok" : " exceeds 2") << "\n";
      }
      return kExitOk;
    }

    if (sub == "exp-moments") {
      const auto rows = run_exp_moments(cfg, opts);
      write_exp_moments(cfg.output_dir, rows, man, cfg.format);
      for (const auto& r : rows) {
        out << r.functional << " alpha=" << num(r.alpha) << ": log E = " << num(r.full.log_mean)
            << " +- " << num(r.full.log_half_width) << ", full/half " << num(r.ratio, "%.3f")
            << ", largest share " << num(r.full.largest_share, "%.3f")
            << (r.stable ? "" : " (unstable)") << "\n";
      }
      return kExitOk;
    }

    if (sub == "regularity") {
      const auto rep = run_regularity(cfg, opts);
      write_regularity(cfg.output_dir, rep, man, cfg.format);
      print_single(out, rep.l2, "max E|u(t+tau)-u(t)|^2");
      print_single(out, rep.v, "E sum |A^{1/2}(u(t)-u(s))|^2 dt");
      return kExitOk;
    }

    if (sub == "check-conditions") {
      const auto rep = run_conditions(cfg);
      write_conditions(cfg.output_dir, rep, man, cfg.format);
      out << "Tr(Q) " << num(rep.inputs.trace_q) << ", K0 " << num(rep.inputs.k0) << ", Cbar "
          << num(rep.inputs.cbar) << ", sigma " << num(rep.inputs.sigma) << ", alpha0 "
          << num(rep.alpha0) << "\n";
      for (const auto& r : rep.rows) {
        out << "Theorem " << r.theorem << " " << r.quantity << ": threshold " << num(r.threshold)
            << ", value " << num(r.value) << ", margin " << num(r.margin) << " "
            << (r.pass ? "pass" : "FAIL") << "\n";
      }
      return kExitOk;
    }

    if (sub == "estimate-constants") {
      const auto est = estimate_constants(config_grid(cfg), cfg.constant_samples, cfg.seed);
      write_constants(cfg.output_dir, est, man, cfg.format);
      out << "Cbar >= " << num(est.cbar, "%.6f") << ", sigma >= " << num(est.sigma, "%.6f") << " ("
          << est.samples << " samples per cutoff)\n";
      return kExitOk;
    }

    if (sub == "dump-matrices") {
      const int n = cfg.sweep_variable == "n" ? cfg.levels.front() : cfg.fem_levels.front();
      const auto sys = build_system(build_mesh(cfg.length, n));
      const fs::path dir(cfg.output_dir);
      write_triplets((dir / "mass.txt").string(), sys.mass());
      write_triplets((dir / "stiffness.txt").string(), sys.stiffness());
      write_triplets((dir / "divergence.txt").string(), sys.divergence());
      write_triplets((dir / "pressure_mass.txt").string(), sys.pressure_mass());
      out << "mesh n=" << n << ": " << sys.velocity_dofs() << " velocity and "
          << sys.pressure_dofs() << " pressure dofs written\n";
      return kExitOk;
    }
  } catch (const SolverError& e) {
    out << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  }
  throw ConfigError({"unknown subcommand '" + sub + "'"});
}

}  // namespace snse
