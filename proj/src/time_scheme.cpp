#include "snse/time_scheme.hpp"

#include <cmath>
#include <limits>

#include "snse/rng.hpp"

namespace snse {
namespace {

// (I + k nu A)^{-1}, diagonal.
SpectralField resolvent(SpectralField f, double k_nu) {
  const auto& g = f.grid();
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double d = 1.0 / (1.0 + k_nu * g.eigenvalue(j));
    f[j].x *= d;
    f[j].y *= d;
  }
  return f;
}

template <class Map>
StepResult damped_picard(const SpectralField& start, Map&& map, const SchemeParams& p) {
  SpectralField v = start;
  double damping = 1.0;
  double previous = std::numeric_limits<double>::infinity();
  double update = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= p.max_iter; ++it) {
    SpectralField diff = map(v);
    diff -= v;
    const double diff_norm = sobolev_norm(diff, 1.0);
    if (!std::isfinite(diff_norm)) break;
    v.add_scaled(damping, diff);
    update = damping * diff_norm;
    if (update <= p.tol_fp) return {std::move(v), it, update};
    // Residual growth: halve the step before continuing.
    if (diff_norm > previous) damping *= 0.5;
    previous = diff_norm;
  }
  throw SolverError("fixed-point iteration did not converge (last update " +
                        std::to_string(update) + ")",
                    -1, p.max_iter, update);
}

}  // namespace

std::string_view to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::FullyImplicit: return "fully-implicit";
    case SchemeKind::SemiImplicit: return "semi-implicit";
    case SchemeKind::OuExact: return "ou-exact";
  }
  return "unknown";
}

SchemeKind scheme_kind_from_string(std::string_view name) {
  if (name == "fully-implicit") return SchemeKind::FullyImplicit;
  if (name == "semi-implicit") return SchemeKind::SemiImplicit;
  if (name == "ou-exact") return SchemeKind::OuExact;
  throw std::invalid_argument("unknown scheme kind '" + std::string(name) + "'");
}

void SchemeParams::validate() const {
  if (!(viscosity > 0.0)) throw std::invalid_argument("viscosity must be positive");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (steps < 1) throw std::invalid_argument("step count must be >= 1");
  if (!(tol_fp > 0.0)) throw std::invalid_argument("fixed-point tolerance must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
}

StepResult implicit_step(const SpectralField& u_prev, const SpectralField& dW,
                         const SchemeParams& p) {
  require_same_grid(u_prev, dW);
  const double k = p.step_size();
  const double k_nu = k * p.viscosity;
  SpectralField rhs = u_prev + dW;
  SpectralField stokes = resolvent(rhs, k_nu);
  if (!p.advection) return {std::move(stokes), 1, 0.0};
  auto map = [&](const SpectralField& v) {
    SpectralField r = rhs;
    r.add_scaled(-k, bilinear_b(v, v));
    return resolvent(std::move(r), k_nu);
  };
  return damped_picard(stokes, map, p);
}

StepResult semi_implicit_step(const SpectralField& u_prev, const SpectralField& dW,
                              const SchemeParams& p) {
  require_same_grid(u_prev, dW);
  const double k = p.step_size();
  const double k_nu = k * p.viscosity;
  SpectralField rhs = u_prev + dW;
  SpectralField stokes = resolvent(rhs, k_nu);
  if (!p.advection || u_prev.is_zero()) return {std::move(stokes), 1, 0.0};
  auto map = [&](const SpectralField& v) {
    SpectralField r = rhs;
    r.add_scaled(-k, bilinear_b(u_prev, v));
    return resolvent(std::move(r), k_nu);
  };
  return damped_picard(stokes, map, p);
}

double energy_residual(const SpectralField& u_prev, const SpectralField& u,
                       const SpectralField& dW, const SchemeParams& p) {
  const double k = p.step_size();
  const double n_new = sobolev_norm(u, 0.0), n_old = sobolev_norm(u_prev, 0.0);
  const double jump = sobolev_norm(u - u_prev, 0.0);
  const double grad = sobolev_norm(u, 1.0);
  return n_new * n_new - n_old * n_old + jump * jump + 2.0 * k * p.viscosity * grad * grad -
         2.0 * inner_product(dW, u);
}

Trajectory run_scheme(const SpectralField& u0, const NoisePath& path, const SchemeParams& p) {
  p.validate();
  if (p.kind == SchemeKind::OuExact) return ou_exact_trajectory(u0, path, p);
  if (!u0.grid().same_as(path.grid())) {
    throw std::invalid_argument("initial condition and noise path use different grids");
  }
  const auto increments = increment_fields(path, p.steps);
  const double k = p.step_size();

  Trajectory traj;
  traj.params = p;
  traj.seed = path.seed();
  traj.states.reserve(p.steps + 1);
  traj.diagnostics.reserve(p.steps);
  traj.states.push_back(u0);
  double dissipation = 0.0;
  for (int l = 1; l <= p.steps; ++l) {
    const auto& prev = traj.states.back();
    const auto& dW = increments[l - 1];
    StepResult step = [&] {
      try {
        return p.kind == SchemeKind::SemiImplicit ? semi_implicit_step(prev, dW, p)
                                                  : implicit_step(prev, dW, p);
      } catch (const SolverError& e) {
        throw SolverError("step " + std::to_string(l) + ": " + e.what(), l, e.iterations(),
                          e.residual());
      }
    }();
    StepDiagnostics d;
    d.iterations = step.iterations;
    d.energy_residual = energy_residual(prev, step.state, dW, p);
    const double v = sobolev_norm(step.state, 1.0);
    const double a = sobolev_norm(step.state, 2.0);
    d.v_norm_sq = v * v;
    dissipation += k * p.viscosity * a * a;
    d.dissipation_sum = dissipation;
    traj.diagnostics.push_back(d);
    traj.states.push_back(std::move(step.state));
  }
  return traj;
}

Trajectory ou_exact_trajectory(const SpectralField& u0, const NoisePath& path,
                               const SchemeParams& p) {
  p.validate();
  if (!u0.grid().same_as(path.grid())) {
    throw std::invalid_argument("initial condition and noise path use different grids");
  }
  const int fine = path.fine_steps();
  if (fine % p.steps != 0) {
    throw std::invalid_argument("scheme steps must divide the fine noise grid");
  }
  const int stride = fine / p.steps;
  const auto& g = path.grid();
  const auto& q = path.q();
  const double delta = path.horizon() / fine;
  const double norm = 1.0 / (std::sqrt(2.0) * g.length());
  const std::size_t pairs = g.pair_count();

  // Per mode: z(t + delta) = decay z(t) + sqrt(q) I, where (db, I) is the
  // Gaussian pair (increment, int e^{-a(delta - s)} db(s)).
  std::vector<double> decay(pairs), regress(pairs), residual_sd(pairs);
  for (std::size_t j = 0; j < pairs; ++j) {
    const double a = p.viscosity * g.eigenvalue(j);
    const double x = a * delta;
    decay[j] = std::exp(-x);
    const double cov = -std::expm1(-x) / a;
    regress[j] = cov / delta;
    double cond;  // Var(I | db) / delta
    if (x < 1e-3) {
      cond = x * x / 12.0 - x * x * x / 12.0 + 17.0 * x * x * x * x / 360.0;
    } else {
      cond = -std::expm1(-2.0 * x) / (2.0 * x) - (cov / delta) * (cov / delta);
    }
    residual_sd[j] = std::sqrt(std::max(cond, 0.0) * delta);
  }

  std::vector<cplx> amp = stream_amplitudes(u0);
  Trajectory traj;
  traj.params = p;
  traj.params.kind = SchemeKind::OuExact;
  traj.seed = path.seed();
  traj.states.reserve(p.steps + 1);
  traj.states.push_back(from_stream_amplitudes(u0.grid_ptr(), amp));
  const double k = p.step_size();
  double dissipation = 0.0;
  for (int l = 0; l < fine; ++l) {
    for (std::size_t j = 0; j < pairs; ++j) {
      amp[j] *= decay[j];
      if (q.variance[j] == 0.0) continue;
      const auto mode = g.mode(j);
      const auto [xi_c, xi_s] = normal_pair(path.seed(), Stream::OuConvolution, mode.k1,
                                            mode.k2, static_cast<std::uint64_t>(l));
      const double ic = regress[j] * path.fine(j, 0)[l] + residual_sd[j] * xi_c;
      const double is = regress[j] * path.fine(j, 1)[l] + residual_sd[j] * xi_s;
      amp[j] += std::sqrt(q.variance[j]) * norm * cplx{ic, -is};
    }
    if ((l + 1) % stride == 0) {
      auto state = from_stream_amplitudes(u0.grid_ptr(), amp);
      StepDiagnostics d;
      const double v = sobolev_norm(state, 1.0);
      const double a = sobolev_norm(state, 2.0);
      d.v_norm_sq = v * v;
      dissipation += k * p.viscosity * a * a;
      d.dissipation_sum = dissipation;
      traj.diagnostics.push_back(d);
      traj.states.push_back(std::move(state));
    }
  }
  return traj;
}

}  // namespace snse
