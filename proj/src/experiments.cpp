#include "snse/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "snse/rng.hpp"

namespace snse {
namespace {

void say(const RunOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

std::optional<FitResult> fit_points(const std::vector<double>& scales,
                                    const std::vector<double>& values) {
  std::vector<RatePoint> pts;
  for (std::size_t i = 0; i < scales.size(); ++i) pts.push_back({scales[i], values[i], 1.0});
  try {
    return fit_rate(pts);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

ErrorSample invalid_sample(std::uint64_t seed) {
  ErrorSample s;
  s.seed = seed;
  s.valid = false;
  return s;
}

std::vector<double> level_scales(const std::vector<int>& levels, double span) {
  std::vector<double> s;
  for (int lv : levels) s.push_back(span / lv);
  return s;
}

}  // namespace

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  threads = std::clamp(threads, 1, count);
  std::vector<std::exception_ptr> errors(count);
  if (threads == 1) {
    for (int i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

GridPtr config_grid(const ExperimentConfig& cfg, std::optional<int> cutoff) {
  return make_grid(cfg.length, cutoff.value_or(cfg.cutoff));
}

QSpec config_q(const ExperimentConfig& cfg, GridPtr grid) {
  const auto policy = cfg.reject_rough_noise ? DecayPolicy::Reject : DecayPolicy::Warn;
  if (cfg.noise_trace) return build_q_with_trace(std::move(grid), *cfg.noise_trace, cfg.noise_decay, policy);
  return build_q(std::move(grid), cfg.noise_scale.value_or(0.0), cfg.noise_decay, policy);
}

SchemeParams config_scheme(const ExperimentConfig& cfg, int steps, SchemeKind kind) {
  SchemeParams p;
  p.viscosity = cfg.viscosity;
  p.horizon = cfg.horizon;
  p.steps = steps;
  p.tol_fp = cfg.tol_fp;
  p.max_iter = cfg.max_iter;
  p.kind = kind;
  p.advection = cfg.advection;
  return p;
}

SpectralField initial_condition(const ExperimentConfig& cfg, GridPtr grid, std::uint64_t seed) {
  const auto& g = *grid;
  switch (cfg.initial) {
    case InitialKind::Zero: return SpectralField(grid);
    case InitialKind::Shear: {
      // u0 = a (sin(2 pi y / L), 0) up to normalization |u0| = amplitude.
      std::vector<cplx> amp(g.pair_count());
      amp[*g.index_of(0, 1)] = 1.0;
      auto u = from_stream_amplitudes(grid, amp);
      u *= cfg.initial_amplitude / sobolev_norm(u, 0.0);
      return u;
    }
    case InitialKind::RandomSmooth: {
      // Random phases, stream amplitude lambda^{-decay}, fixed across replicates.
      std::vector<cplx> amp(g.pair_count());
      for (std::size_t j = 0; j < amp.size(); ++j) {
        const auto m = g.mode(j);
        const auto [c, s] = normal_pair(cfg.initial_seed, Stream::InitialCondition, m.k1, m.k2, 0);
        amp[j] = std::polar(std::pow(g.eigenvalue(j), -cfg.initial_decay), std::atan2(s, c));
      }
      auto u = from_stream_amplitudes(grid, amp);
      const double n = sobolev_norm(u, 0.0);
      if (n > 0.0) u *= cfg.initial_amplitude / n;
      return u;
    }
    case InitialKind::Gaussian: {
      const QSpec q0 = build_q(grid, cfg.initial_amplitude, cfg.initial_decay);
      return sample_gaussian_u0(q0, mix_seed(seed, 0x1c));
    }
  }
  return SpectralField(grid);
}

std::optional<double> initial_gamma0(const ExperimentConfig& cfg, const GridPtr& grid) {
  if (cfg.gamma0) return cfg.gamma0;
  if (cfg.initial != InitialKind::Gaussian) return std::nullopt;
  const QSpec q0 = build_q(grid, cfg.initial_amplitude, cfg.initial_decay);
  double top = 0.0;
  for (std::size_t j = 0; j < q0.variance.size(); ++j) {
    top = std::max(top, grid->eigenvalue(j) * q0.variance[j]);
  }
  if (!(top > 0.0)) return std::nullopt;
  return 0.5 / (2.0 * top);
}

std::uint64_t replicate_seed(const ExperimentConfig& cfg, int replicate) {
  return mix_seed(cfg.seed, static_cast<std::uint64_t>(replicate));
}

// ---------------------------------------------------------------- sweeps

RateReport run_time_sweep(const ExperimentConfig& cfg, SchemeKind coarse_kind,
                          const RunOptions& opts) {
  if (coarse_kind == SchemeKind::OuExact) coarse_kind = SchemeKind::FullyImplicit;
  const auto grid = config_grid(cfg);
  const auto q = config_q(cfg, grid);
  const int n_levels = static_cast<int>(cfg.levels.size());
  const SchemeKind ref_kind = cfg.advection ? SchemeKind::FullyImplicit : SchemeKind::OuExact;
  std::vector<std::vector<ErrorSample>> samples(n_levels,
                                                std::vector<ErrorSample>(cfg.replicates));
  std::mutex log_mutex;
  parallel_for(cfg.replicates, opts.threads, [&](int r) {
    const auto seed = replicate_seed(cfg, r);
    const auto path = sample_path(q, cfg.reference, cfg.horizon, seed);
    const auto u0 = initial_condition(cfg, grid, seed);
    Trajectory ref;
    try {
      ref = run_scheme(u0, path, config_scheme(cfg, cfg.reference, ref_kind));
    } catch (const SolverError& e) {
      for (int i = 0; i < n_levels; ++i) samples[i][r] = invalid_sample(seed);
      std::lock_guard<std::mutex> lock(log_mutex);
      say(opts, "replicate " + std::to_string(r) + ": reference failed: " + e.what());
      return;
    }
    for (int i = 0; i < n_levels; ++i) {
      try {
        const auto coarse = run_scheme(u0, path, config_scheme(cfg, cfg.levels[i], coarse_kind));
        samples[i][r] = strong_error(ref, coarse, cfg.viscosity);
        samples[i][r].seed = seed;
      } catch (const SolverError& e) {
        samples[i][r] = invalid_sample(seed);
        std::lock_guard<std::mutex> lock(log_mutex);
        say(opts, "replicate " + std::to_string(r) + " level " + std::to_string(cfg.levels[i]) +
                      ": " + e.what());
      }
    }
  });
  auto rep = build_rate_report("N", cfg.levels, level_scales(cfg.levels, cfg.horizon), samples);
  rep.notes.push_back(std::string("reference: ") +
                      (cfg.advection ? "fully implicit scheme on " + std::to_string(cfg.reference) +
                                           " steps (fine-scheme surrogate for the exact solution)"
                                     : "exact OU solution on " + std::to_string(cfg.reference) +
                                           " fine steps"));
  for (const auto& w : q.warnings) rep.notes.push_back("noise: " + w);
  return rep;
}

namespace {

// U^0: nodal interpolation of u0, then the projection onto discretely
// divergence-free fields.
FemField fem_initial_value(const FemSystem& sys, const SpectralField& u0) {
  return project_qh0(sys, interp_from_spectral(u0, sys));
}

}  // namespace

RateReport run_space_sweep(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto grid = config_grid(cfg, cfg.reference_cutoff);
  const auto q = config_q(cfg, grid);
  const int n_levels = static_cast<int>(cfg.levels.size());
  std::vector<FemSystem> systems;
  for (int n : cfg.levels) systems.push_back(build_system(build_mesh(cfg.length, n)));
  std::vector<std::vector<ErrorSample>> samples(n_levels,
                                                std::vector<ErrorSample>(cfg.replicates));
  std::mutex log_mutex;
  parallel_for(cfg.replicates, opts.threads, [&](int r) {
    const auto seed = replicate_seed(cfg, r);
    const auto path = sample_path(q, cfg.steps, cfg.horizon, seed);
    const auto u0 = initial_condition(cfg, grid, seed);
    Trajectory ref;
    try {
      ref = run_scheme(u0, path, config_scheme(cfg, cfg.steps, SchemeKind::FullyImplicit));
    } catch (const SolverError& e) {
      for (int i = 0; i < n_levels; ++i) samples[i][r] = invalid_sample(seed);
      std::lock_guard<std::mutex> lock(log_mutex);
      say(opts, "replicate " + std::to_string(r) + ": reference failed: " + e.what());
      return;
    }
    for (int i = 0; i < n_levels; ++i) {
      try {
        const auto& sys = systems[i];
        const auto traj = run_full_scheme(fem_initial_value(sys, u0), path, sys, cfg.steps, cfg.viscosity);
        samples[i][r] = strong_error(ref, traj, sys, cfg.viscosity);
        samples[i][r].seed = seed;
      } catch (const SolverError& e) {
        samples[i][r] = invalid_sample(seed);
        std::lock_guard<std::mutex> lock(log_mutex);
        say(opts, "replicate " + std::to_string(r) + " mesh " + std::to_string(cfg.levels[i]) +
                      ": " + e.what());
      }
      std::lock_guard<std::mutex> lock(log_mutex);
      say(opts, "replicate " + std::to_string(r) + " mesh " + std::to_string(cfg.levels[i]) +
                    " done");
    }
  });
  std::vector<double> h;
  for (const auto& s : systems) h.push_back(s.mesh().h());
  auto rep = build_rate_report("n", cfg.levels, h, samples);
  rep.notes.push_back("reference: fully implicit spectral scheme, cutoff " +
                      std::to_string(cfg.reference_cutoff) + ", " + std::to_string(cfg.steps) +
                      " steps");
  for (const auto& w : q.warnings) rep.notes.push_back("noise: " + w);
  return rep;
}

// ---------------------------------------------------------------- OU

OuValidation run_ou_validation(const ExperimentConfig& base, const RunOptions& opts) {
  ExperimentConfig cfg = base;
  cfg.advection = false;
  const auto grid = config_grid(cfg);
  const auto q = config_q(cfg, grid);
  OuValidation out;

  // (a) Marginal variances of the exact solution started from zero.
  {
    const int fine = cfg.reference;
    const std::vector<int> marks{fine / 4, fine / 2, fine};
    const std::size_t pairs = grid->pair_count();
    // coords[r][mark][2 * pair + component]
    std::vector<std::vector<std::vector<double>>> coords(cfg.replicates);
    const double scale = std::sqrt(2.0) * grid->length();
    parallel_for(cfg.replicates, opts.threads, [&](int r) {
      const auto path = sample_path(q, fine, cfg.horizon, replicate_seed(cfg, r));
      const auto traj = ou_exact_trajectory(SpectralField(grid), path,
                                            config_scheme(cfg, fine, SchemeKind::OuExact));
      auto& c = coords[r];
      for (int t : marks) {
        const auto amp = stream_amplitudes(traj.states[t]);
        std::vector<double> row(2 * pairs);
        for (std::size_t j = 0; j < pairs; ++j) {
          row[2 * j] = scale * amp[j].real();
          row[2 * j + 1] = -scale * amp[j].imag();
        }
        c.push_back(std::move(row));
      }
    });
    for (std::size_t m = 0; m < marks.size(); ++m) {
      OuVarianceCheck chk;
      chk.time = cfg.horizon * marks[m] / fine;
      for (std::size_t i = 0; i < 2 * pairs; ++i) {
        const std::size_t j = i / 2;
        if (q.variance[j] == 0.0) continue;
        const double exact = ou_variance(q.variance[j], cfg.viscosity, grid->eigenvalue(j), chk.time);
        double ss = 0.0;
        for (int r = 0; r < cfg.replicates; ++r) ss += coords[r][m][i] * coords[r][m][i];
        const double var = ss / cfg.replicates;  // known zero mean
        const double se = exact * std::sqrt(2.0 / cfg.replicates);
        chk.worst_z = std::max(chk.worst_z, std::abs(var - exact) / se);
        ++chk.coordinates;
      }
      chk.pass = chk.worst_z <= 5.0;
      out.variance.push_back(chk);
    }
  }

  // (b) Strong error of implicit Euler against the exact solution.
  const int n_levels = static_cast<int>(cfg.levels.size());
  std::vector<std::vector<ErrorSample>> samples(n_levels,
                                                std::vector<ErrorSample>(cfg.replicates));
  std::vector<double> gaps(cfg.replicates, 0.0);
  parallel_for(cfg.replicates, opts.threads, [&](int r) {
    const auto seed = replicate_seed(cfg, r);
    const auto path = sample_path(q, cfg.reference, cfg.horizon, seed);
    const auto u0 = initial_condition(cfg, grid, seed);
    const auto exact = ou_exact_trajectory(u0, path,
                                           config_scheme(cfg, cfg.reference, SchemeKind::OuExact));
    for (int i = 0; i < n_levels; ++i) {
      const auto coarse =
          run_scheme(u0, path, config_scheme(cfg, cfg.levels[i], SchemeKind::FullyImplicit));
      samples[i][r] = strong_error(exact, coarse, cfg.viscosity);
      const auto brute = ou_bruteforce_error(u0, path, cfg.viscosity, cfg.levels[i]);
      auto rel = [](double a, double b) {
        const double d = std::max(std::abs(a), std::abs(b));
        return d > 0.0 ? std::abs(a - b) / d : 0.0;
      };
      gaps[r] = std::max({gaps[r], rel(brute.max_l2_sq, samples[i][r].max_l2_sq),
                          rel(brute.dissipation, samples[i][r].dissipation)});
    }
  });
  for (double g : gaps) out.bruteforce_gap = std::max(out.bruteforce_gap, g);
  const auto scales = level_scales(cfg.levels, cfg.horizon);
  out.monte_carlo = build_rate_report("N", cfg.levels, scales, samples);

  // Exact second moments; deterministic u0 only (a Gaussian u0 would need
  // its covariance folded in).
  if (cfg.initial != InitialKind::Gaussian) {
    const auto u0 = initial_condition(cfg, grid, cfg.seed);
    for (int n : cfg.levels) {
      const auto m = ou_field_error_moments(u0, q, cfg.viscosity, cfg.horizon, n);
      out.oracle_l2.push_back(m.max_l2_sq);
      out.oracle_v.push_back(m.dissipation);
    }
    out.oracle_fit_l2 = fit_points(scales, out.oracle_l2);
    out.oracle_fit_v = fit_points(scales, out.oracle_v);
  }
  return out;
}

// ---------------------------------------------------------------- moments

MomentReport run_moments(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto grid = config_grid(cfg);
  const auto q = config_q(cfg, grid);
  MomentReport rep;
  rep.order = cfg.order;
  const int fine = cfg.levels.back();
  const int n_levels = static_cast<int>(cfg.levels.size());
  const int n_fem = static_cast<int>(cfg.fem_levels.size());
  const auto names = trajectory_functional_names();
  const auto fem_names = fem_functional_names();
  std::vector<FemSystem> systems;
  for (int n : cfg.fem_levels) systems.push_back(build_system(build_mesh(cfg.length, n)));

  // values[level][replicate] -> functional vector
  std::vector<std::vector<std::vector<double>>> spec(n_levels,
                                                     std::vector<std::vector<double>>(cfg.replicates));
  std::vector<std::vector<std::vector<double>>> fem(n_fem,
                                                    std::vector<std::vector<double>>(cfg.replicates));
  // Paths must cover both the spectral levels and the FEM step count.
  const int path_steps = std::max(fine, cfg.steps);
  parallel_for(cfg.replicates, opts.threads, [&](int r) {
    const auto seed = replicate_seed(cfg, r);
    const auto path = sample_path(q, path_steps, cfg.horizon, seed);
    const auto u0 = initial_condition(cfg, grid, seed);
    for (int i = 0; i < n_levels; ++i) {
      const auto traj = run_scheme(u0, path, config_scheme(cfg, cfg.levels[i], cfg.scheme));
      spec[i][r] = trajectory_functionals(traj, cfg.order, cfg.advection);
    }
    for (int i = 0; i < n_fem; ++i) {
      const auto& sys = systems[i];
      const auto traj = run_full_scheme(fem_initial_value(sys, u0), path, sys, cfg.steps, cfg.viscosity);
      fem[i][r] = fem_functionals(traj, sys, cfg.order, cfg.viscosity);
    }
  });

  auto stability = [&](const std::string& family, const std::vector<std::string>& nm,
                       std::size_t first_row, int levels) {
    for (std::size_t c = 0; c < nm.size(); ++c) {
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (int i = 0; i < levels; ++i) {
        const double m = rep.rows[first_row + i * nm.size() + c].estimate.mean;
        lo = std::min(lo, m);
        hi = std::max(hi, m);
      }
      MomentStability s{family, nm[c], 1.0, true};
      if (hi > 0.0) s.ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
      s.pass = s.ratio < 2.0;
      rep.stability.push_back(s);
    }
  };

  for (int i = 0; i < n_levels; ++i) {
    for (auto& e : moment_estimates(spec[i], names)) {
      rep.rows.push_back({"spectral", cfg.levels[i], e.name, e.estimate});
    }
  }
  if (n_levels > 1) stability("spectral", names, 0, n_levels);
  const std::size_t fem_first = rep.rows.size();
  for (int i = 0; i < n_fem; ++i) {
    for (auto& e : moment_estimates(fem[i], fem_names)) {
      rep.rows.push_back({"fem", cfg.fem_levels[i], e.name, e.estimate});
    }
  }
  if (n_fem > 1) stability("fem", fem_names, fem_first, n_fem);
  return rep;
}

std::vector<ExpMomentRow> run_exp_moments(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto grid = config_grid(cfg);
  const auto q = config_q(cfg, grid);
  std::vector<double> sup_v(cfg.replicates), sup_vd(cfg.replicates);
  parallel_for(cfg.replicates, opts.threads, [&](int r) {
    const auto seed = replicate_seed(cfg, r);
    const auto path = sample_path(q, cfg.steps, cfg.horizon, seed);
    const auto u0 = initial_condition(cfg, grid, seed);
    const auto traj = run_scheme(u0, path, config_scheme(cfg, cfg.steps, cfg.scheme));
    sup_v[r] = sup_v_functional(traj);
    sup_vd[r] = sup_v_dissipation_functional(traj);
  });
  std::vector<ExpMomentRow> rows;
  const std::size_t half = std::max<std::size_t>(1, sup_v.size() / 2);
  for (const auto& [name, values] :
       {std::pair<std::string, const std::vector<double>*>{"sup_V", &sup_v},
        std::pair<std::string, const std::vector<double>*>{"sup_V_dissipation", &sup_vd}}) {
    for (double a : cfg.alpha) {
      ExpMomentRow row;
      row.functional = name;
      row.alpha = a;
      row.half = exp_moment_estimate(std::span<const double>(values->data(), half), a);
      row.full = exp_moment_estimate(*values, a);
      row.ratio = std::exp(row.full.log_mean - row.half.log_mean);
      row.stable = std::abs(row.ratio - 1.0) <= 0.2 && !row.full.unstable && !row.half.unstable;
      rows.push_back(row);
    }
  }
  return rows;
}

RegularityReport run_regularity(const ExperimentConfig& cfg, const RunOptions& opts) {
  const auto grid = config_grid(cfg);
  const auto q = config_q(cfg, grid);
  std::vector<Trajectory> trajs(cfg.replicates);
  parallel_for(cfg.replicates, opts.threads, [&](int r) {
    const auto seed = replicate_seed(cfg, r);
    const auto path = sample_path(q, cfg.steps, cfg.horizon, seed);
    const auto u0 = initial_condition(cfg, grid, seed);
    trajs[r] = run_scheme(u0, path, config_scheme(cfg, cfg.steps, cfg.scheme));
  });
  return {time_regularity_l2(trajs, cfg.lags), time_regularity_v(trajs, cfg.lags)};
}

ConstantEstimate config_constants(const ExperimentConfig& cfg) {
  if (cfg.cbar && cfg.sigma) {
    ConstantEstimate e;
    e.cbar = *cfg.cbar;
    e.sigma = *cfg.sigma;
    return e;
  }
  auto e = estimate_constants(config_grid(cfg), cfg.constant_samples, cfg.seed);
  if (cfg.cbar) e.cbar = *cfg.cbar;
  if (cfg.sigma) e.sigma = *cfg.sigma;
  return e;
}

ConditionReport run_conditions(const ExperimentConfig& cfg) {
  const auto grid = config_grid(cfg);
  const auto q = config_q(cfg, grid);
  const auto c = config_constants(cfg);
  ConditionInputs in;
  in.nu = cfg.viscosity;
  in.horizon = cfg.horizon;
  in.trace_q = q.trace;
  in.k0 = q.k0;
  in.cbar = c.cbar;
  in.sigma = c.sigma;
  in.gamma0 = initial_gamma0(cfg, grid);
  in.mu = cfg.mu;
  return check_conditions(in);
}

}  // namespace snse
