#include "snse/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "snse/rng.hpp"

namespace snse {
namespace {

constexpr double kZ95 = 1.96;
constexpr double kInf = std::numeric_limits<double>::infinity();

int stride_between(int fine, int coarse) {
  if (coarse < 1 || fine < coarse || fine % coarse != 0) {
    throw std::invalid_argument("coarse step count " + std::to_string(coarse) +
                                " does not divide reference step count " + std::to_string(fine));
  }
  return fine / coarse;
}

void require_same_horizon(double a, double b) {
  if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b))) {
    throw std::invalid_argument("trajectories use different horizons");
  }
}

double sq(double x) { return x * x; }

}  // namespace

// ---------------------------------------------------------------- statistics

MeanCi mean_ci(std::span<const double> values) {
  MeanCi r;
  r.count = static_cast<int>(values.size());
  if (values.empty()) return r;
  double sum = 0.0;
  for (double v : values) sum += v;
  r.mean = sum / r.count;
  if (r.count < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += sq(v - r.mean);
  r.half_width = kZ95 * std::sqrt(ss / (r.count - 1)) / std::sqrt(static_cast<double>(r.count));
  return r;
}

FitResult fit_rate(std::span<const RatePoint> points) {
  std::vector<double> x, y, w;
  for (const auto& p : points) {
    if (!(p.scale > 0.0) || !(p.value > 0.0) || !(p.weight > 0.0)) continue;
    if (!std::isfinite(p.value) || !std::isfinite(p.weight)) continue;
    x.push_back(std::log(p.scale));
    y.push_back(std::log(p.value));
    w.push_back(p.weight);
  }
  const int n = static_cast<int>(x.size());
  if (n < 3) throw std::invalid_argument("rate fit needs at least 3 usable points");
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (int i = 0; i < n; ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xb = sx / sw, yb = sy / sw;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += w[i] * sq(x[i] - xb);
    sxy += w[i] * (x[i] - xb) * (y[i] - yb);
    syy += w[i] * sq(y[i] - yb);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("rate fit needs distinct scales");
  FitResult f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = yb - f.slope * xb;
  double res = 0.0;
  for (int i = 0; i < n; ++i) res += w[i] * sq(y[i] - f.intercept - f.slope * x[i]);
  f.r2 = syy > 0.0 ? 1.0 - res / syy : 1.0;
  // Weights normalized to mean one so the residual variance is scale free.
  const double wbar = sw / n;
  f.slope_stderr = std::sqrt(std::max(res / wbar / (n - 2), 0.0) / (sxx / wbar));
  return f;
}

// ---------------------------------------------------------------- errors

ErrorSample strong_error(const Trajectory& ref, const Trajectory& coarse, double nu) {
  require_same_horizon(ref.params.horizon, coarse.params.horizon);
  const int n = coarse.params.steps;
  const int stride = stride_between(ref.params.steps, n);
  const double k = coarse.params.step_size();
  ErrorSample s;
  s.seed = coarse.seed;
  for (int l = 0; l <= n; ++l) {
    const SpectralField e = ref.states[static_cast<std::size_t>(l) * stride] - coarse.states[l];
    s.max_l2_sq = std::max(s.max_l2_sq, sq(sobolev_norm(e, 0.0)));
    if (l > 0) s.dissipation += nu * k * sq(sobolev_norm(e, 1.0));
  }
  s.valid = std::isfinite(s.max_l2_sq) && std::isfinite(s.dissipation);
  return s;
}

ErrorSample strong_error(const Trajectory& ref, const FemTrajectory& coarse, const FemSystem& sys,
                         double nu) {
  const int n = static_cast<int>(coarse.velocities.size()) - 1;
  const int stride = stride_between(ref.params.steps, n);
  require_same_horizon(ref.params.horizon, coarse.step * n);
  const double k = coarse.step;
  ErrorSample s;
  s.seed = ref.seed;
  for (int l = 0; l <= n; ++l) {
    FemField e = interp_from_spectral(ref.states[static_cast<std::size_t>(l) * stride], sys);
    e.coeffs -= coarse.velocities[l].coeffs;
    s.max_l2_sq = std::max(s.max_l2_sq, sq(sys.l2_norm(e)));
    if (l > 0) s.dissipation += nu * k * sq(sys.h1_seminorm(e));
  }
  s.valid = std::isfinite(s.max_l2_sq) && std::isfinite(s.dissipation);
  return s;
}

std::optional<FitResult> fit_report_rows(std::span<const RateRow> rows, bool use_v) {
  std::vector<RatePoint> pts;
  bool any_zero_width = false;
  for (const auto& r : rows) {
    const MeanCi& m = use_v ? r.v : r.l2;
    if (r.aborted || !(m.mean > 0.0)) continue;
    if (!(m.half_width < 0.3 * m.mean)) continue;
    if (m.half_width == 0.0) any_zero_width = true;
    // Variance of log(mean) by the delta method.
    const double rel = m.half_width / kZ95 / m.mean;
    pts.push_back({r.scale, m.mean, rel > 0.0 ? 1.0 / (rel * rel) : 1.0});
  }
  if (any_zero_width) {
    for (auto& p : pts) p.weight = 1.0;
  }
  if (pts.size() < 3) return std::nullopt;
  try {
    return fit_rate(pts);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

RateReport build_rate_report(std::string sweep_var, std::span<const int> levels,
                             std::span<const double> scales,
                             const std::vector<std::vector<ErrorSample>>& samples) {
  if (levels.size() != scales.size() || levels.size() != samples.size()) {
    throw std::invalid_argument("levels, scales and samples differ in length");
  }
  RateReport rep;
  rep.sweep_var = std::move(sweep_var);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    RateRow row;
    row.level = levels[i];
    row.scale = scales[i];
    row.replicates = static_cast<int>(samples[i].size());
    std::vector<double> l2, v;
    for (const auto& s : samples[i]) {
      if (!s.valid) {
        ++row.invalid;
        continue;
      }
      l2.push_back(s.max_l2_sq);
      v.push_back(s.dissipation);
    }
    row.l2 = mean_ci(l2);
    row.v = mean_ci(v);
    row.aborted = row.invalid * 10 > row.replicates;
    if (row.aborted) {
      rep.notes.push_back("level " + std::to_string(row.level) + " aborted: " +
                          std::to_string(row.invalid) + " of " +
                          std::to_string(row.replicates) + " replicates invalid");
    } else if (row.invalid > 0) {
      rep.notes.push_back("level " + std::to_string(row.level) + ": " +
                          std::to_string(row.invalid) + " invalid replicates excluded");
    }
    if (row.l2.mean > 0.0 && !(row.l2.half_width < 0.3 * row.l2.mean)) {
      rep.notes.push_back("level " + std::to_string(row.level) +
                          " excluded from the fit: confidence half-width above 30% of the mean");
    }
    rep.rows.push_back(row);
  }
  rep.fit_l2 = fit_report_rows(rep.rows, false);
  rep.fit_v = fit_report_rows(rep.rows, true);
  if (rep.rows.size() > 3) {
    auto fit = fit_report_rows(std::span<const RateRow>(rep.rows).subspan(1), false);
    if (fit) rep.slope_without_coarsest = fit->slope;
  }
  return rep;
}

// ---------------------------------------------------------------- OU oracle

OuErrorMoments ou_scalar_error_moments(double a, double q, double x0, double horizon, int steps) {
  if (!(a > 0.0) || steps < 1 || !(horizon > 0.0)) {
    throw std::invalid_argument("OU moments need a > 0, T > 0, N >= 1");
  }
  const double k = horizon / steps;
  const double x = a * k;
  const double alpha = std::exp(-x);
  const double r = 1.0 / (1.0 + x);
  const double var_j = -std::expm1(-2.0 * x) / (2.0 * a);  // Var of the convolution
  const double cov = -std::expm1(-x) / a;                  // Cov(convolution, increment)
  // Var(J - r dW) and Cov(J - r dW, dW), written to avoid cancellation.
  const double d = alpha - r;
  const double var_inn = var_j - 2.0 * r * cov + r * r * k;
  const double cov_inn = cov - r * k;

  // State (e, y): e = exact - scheme, y = scheme.
  double ee = 0.0, ey = 0.0, yy = x0 * x0;
  OuErrorMoments m;
  m.mean_sq.reserve(steps + 1);
  m.mean_sq.push_back(0.0);
  for (int l = 1; l <= steps; ++l) {
    const double ee_n = alpha * alpha * ee + 2.0 * alpha * d * ey + d * d * yy + q * var_inn;
    const double ey_n = alpha * r * ey + d * r * yy + q * r * cov_inn;
    const double yy_n = r * r * (yy + q * k);
    ee = ee_n;
    ey = ey_n;
    yy = yy_n;
    m.mean_sq.push_back(std::max(ee, 0.0));
  }
  return m;
}

OuFieldErrorMoments ou_field_error_moments(const SpectralField& u0, const QSpec& q, double nu,
                                           double horizon, int steps) {
  const auto& g = u0.grid();
  if (!g.same_as(*q.grid)) throw std::invalid_argument("u0 and Q use different grids");
  const auto amp = stream_amplitudes(u0);
  const double scale = std::sqrt(2.0) * g.length();
  OuFieldErrorMoments out;
  out.l2_sq.assign(steps + 1, 0.0);
  out.v_sq.assign(steps + 1, 0.0);
  for (std::size_t j = 0; j < g.pair_count(); ++j) {
    const double lambda = g.eigenvalue(j);
    const double a = nu * lambda;
    const double c0 = scale * amp[j].real();
    const double s0 = -scale * amp[j].imag();
    const auto mc = ou_scalar_error_moments(a, q.variance[j], c0, horizon, steps);
    const auto ms = ou_scalar_error_moments(a, q.variance[j], s0, horizon, steps);
    for (int l = 0; l <= steps; ++l) {
      const double e2 = mc.mean_sq[l] + ms.mean_sq[l];
      out.l2_sq[l] += e2;
      out.v_sq[l] += lambda * e2;
    }
  }
  const double k = horizon / steps;
  for (int l = 1; l <= steps; ++l) out.dissipation += nu * k * out.v_sq[l];
  out.max_l2_sq = *std::max_element(out.l2_sq.begin(), out.l2_sq.end());
  return out;
}

ErrorSample ou_bruteforce_error(const SpectralField& u0, const NoisePath& path, double nu,
                                int steps) {
  const auto& g = path.grid();
  const auto& q = path.q();
  const int fine = path.fine_steps();
  const int stride = stride_between(fine, steps);
  const double delta = path.horizon() / fine;
  const double k = path.horizon() / steps;
  const auto amp = stream_amplitudes(u0);
  const double scale = std::sqrt(2.0) * g.length();

  std::vector<double> l2(steps + 1, 0.0), v(steps + 1, 0.0);
  for (std::size_t j = 0; j < g.pair_count(); ++j) {
    const double lambda = g.eigenvalue(j);
    const double a = nu * lambda;
    const double x = a * delta;
    const double decay = std::exp(-x);
    const double cov = -std::expm1(-x) / a;
    const double regress = cov / delta;
    double cond;
    if (x < 1e-3) {
      cond = x * x / 12.0 - x * x * x / 12.0 + 17.0 * x * x * x * x / 360.0;
    } else {
      cond = -std::expm1(-2.0 * x) / (2.0 * x) - regress * regress;
    }
    const double resid = std::sqrt(std::max(cond, 0.0) * delta);
    const double sq_q = std::sqrt(q.variance[j]);
    const double damp = 1.0 / (1.0 + k * a);
    const auto mode = g.mode(j);
    for (int comp = 0; comp < 2; ++comp) {
      const double x0 = comp == 0 ? scale * amp[j].real() : -scale * amp[j].imag();
      const auto dw = path.coarse(j, comp, steps);
      const auto fw = path.fine(j, comp);
      double z = x0, y = x0;
      for (int l = 1; l <= steps; ++l) {
        for (int m = (l - 1) * stride; m < l * stride; ++m) {
          z *= decay;
          if (q.variance[j] == 0.0) continue;
          const auto xi = normal_pair(path.seed(), Stream::OuConvolution, mode.k1, mode.k2,
                                      static_cast<std::uint64_t>(m));
          z += sq_q * (regress * fw[m] + resid * (comp == 0 ? xi.first : xi.second));
        }
        y = (y + sq_q * dw[l - 1]) * damp;
        const double e2 = sq(z - y);
        l2[l] += e2;
        v[l] += lambda * e2;
      }
    }
  }
  ErrorSample s;
  s.seed = path.seed();
  for (int l = 0; l <= steps; ++l) {
    s.max_l2_sq = std::max(s.max_l2_sq, l2[l]);
    if (l > 0) s.dissipation += nu * k * v[l];
  }
  s.valid = std::isfinite(s.max_l2_sq) && std::isfinite(s.dissipation);
  return s;
}

double ou_variance(double q, double nu, double lambda, double t) {
  const double a = nu * lambda;
  return -q * std::expm1(-2.0 * a * t) / (2.0 * a);
}

// ---------------------------------------------------------------- moments

std::vector<std::string> trajectory_functional_names() {
  return {"sup_V", "dissipation", "cross", "increments", "energy", "pressure"};
}

std::vector<double> trajectory_functionals(const Trajectory& traj, double q, bool advection_on) {
  const double k = traj.params.step_size();
  const double nu = traj.params.viscosity;
  const auto& u = traj.states;
  double sup_v = 0.0, diss = 0.0, cross = 0.0, incr = 0.0, energy = 0.0, pressure = 0.0;
  for (std::size_t l = 0; l < u.size(); ++l) {
    const double v = sobolev_norm(u[l], 1.0);
    sup_v = std::max(sup_v, std::pow(v, q));
    if (l == 0) continue;
    const double a = sobolev_norm(u[l], 2.0);
    diss += nu * k * std::pow(v, q - 2.0) * a * a;
    const double dv = sq(sobolev_norm(u[l] - u[l - 1], 1.0));
    cross += dv * v * v;
    incr += dv;
    energy += a * a;
    if (advection_on) {
      SpectralField adv = advection(u[l], u[l]);
      SpectralField grad_pi = adv - leray_project(adv);
      pressure += sq(sobolev_norm(grad_pi, 0.0));
    }
  }
  return {sup_v,
          diss,
          cross,
          std::pow(incr, q),
          std::pow(nu * k * energy, q),
          std::pow(k * pressure, q)};
}

std::vector<std::string> fem_functional_names() {
  return {"sup_L2", "dissipation", "energy", "pressure"};
}

std::vector<double> fem_functionals(const FemTrajectory& traj, const FemSystem& sys, double p,
                                    double nu) {
  const double k = traj.step;
  double sup = 0.0, diss = 0.0, energy = 0.0, pressure = 0.0;
  for (std::size_t l = 0; l < traj.velocities.size(); ++l) {
    const double n0 = sys.l2_norm(traj.velocities[l]);
    sup = std::max(sup, std::pow(n0, p));
    if (l == 0) continue;
    const double g = sys.h1_seminorm(traj.velocities[l]);
    diss += nu * k * std::pow(n0, p - 2.0) * g * g;
    energy += g * g;
  }
  for (const auto& pi : traj.pressures) pressure += sq(sys.gradient_norm(pi));
  return {sup, diss, std::pow(k * energy, p / 2.0), std::pow(k * pressure, p / 2.0)};
}

std::vector<NamedEstimate> moment_estimates(const std::vector<std::vector<double>>& per_replicate,
                                            const std::vector<std::string>& names) {
  std::vector<NamedEstimate> out;
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<double> col;
    col.reserve(per_replicate.size());
    for (const auto& row : per_replicate) {
      if (c >= row.size()) throw std::invalid_argument("functional vector too short");
      col.push_back(row[c]);
    }
    out.push_back({names[c], mean_ci(col)});
  }
  return out;
}

// ---------------------------------------------------------------- exp-moments

ExpMomentEstimate exp_moment_estimate(std::span<const double> values, double alpha) {
  ExpMomentEstimate e;
  e.alpha = alpha;
  e.count = static_cast<int>(values.size());
  if (values.empty()) throw std::invalid_argument("exp-moment of an empty sample");
  double top = -kInf;
  for (double v : values) top = std::max(top, alpha * v);
  if (!std::isfinite(top)) {
    e.log_mean = e.mean = kInf;
    e.unstable = true;
    return e;
  }
  std::vector<double> w;
  w.reserve(values.size());
  double sum = 0.0;
  for (double v : values) {
    w.push_back(std::exp(alpha * v - top));
    sum += w.back();
  }
  const double mean_w = sum / e.count;
  e.log_mean = top + std::log(mean_w);
  e.mean = std::exp(e.log_mean);
  e.largest_share = 1.0 / sum;
  e.unstable = e.count > 1 && e.largest_share > 0.5;
  if (e.count > 1) {
    double ss = 0.0;
    for (double x : w) ss += sq(x - mean_w);
    const double sd = std::sqrt(ss / (e.count - 1));
    e.log_half_width = kZ95 * sd / (mean_w * std::sqrt(static_cast<double>(e.count)));
  }
  return e;
}

double sup_v_functional(const Trajectory& traj) {
  double m = 0.0;
  for (const auto& u : traj.states) m = std::max(m, sq(sobolev_norm(u, 1.0)));
  return m;
}

double sup_v_dissipation_functional(const Trajectory& traj) {
  const double k = traj.params.step_size();
  const double nu = traj.params.viscosity;
  double m = sq(sobolev_norm(traj.states[0], 1.0));
  double running = 0.0;
  for (std::size_t l = 1; l < traj.states.size(); ++l) {
    running += nu * k * sq(sobolev_norm(traj.states[l], 2.0));
    m = std::max(m, sq(sobolev_norm(traj.states[l], 1.0)) + running);
  }
  return m;
}

// ---------------------------------------------------------------- regularity

namespace {

RateReport regularity_report(std::string var, std::vector<RateRow> rows) {
  RateReport rep;
  rep.sweep_var = std::move(var);
  rep.rows = std::move(rows);
  rep.fit_l2 = fit_report_rows(rep.rows, false);
  return rep;
}

void check_regularity_input(const std::vector<Trajectory>& trajs, int levels) {
  if (trajs.empty()) throw std::invalid_argument("regularity needs at least one trajectory");
  if (levels < 1) throw std::invalid_argument("regularity needs at least one level");
  for (const auto& t : trajs) {
    if (t.params.steps != trajs[0].params.steps) {
      throw std::invalid_argument("regularity trajectories differ in step count");
    }
  }
  if (trajs[0].params.steps % (1 << (levels - 1)) != 0) {
    throw std::invalid_argument("step count is not divisible by 2^(levels-1)");
  }
}

}  // namespace

RateReport time_regularity_l2(const std::vector<Trajectory>& trajs, int levels) {
  check_regularity_input(trajs, levels);
  const int n = trajs[0].params.steps;
  const double k = trajs[0].params.step_size();
  std::vector<RateRow> rows;
  for (int j = 0; j < levels; ++j) {
    const int m = 1 << j;
    std::vector<double> vals;
    for (const auto& t : trajs) {
      double s = 0.0;
      for (int l = 0; l + m <= n; ++l) s += sq(sobolev_norm(t.states[l + m] - t.states[l], 0.0));
      vals.push_back(s / (n - m + 1));
    }
    RateRow row;
    row.level = m;
    row.scale = m * k;
    row.l2 = mean_ci(vals);
    row.replicates = static_cast<int>(trajs.size());
    rows.push_back(row);
  }
  return regularity_report("tau", std::move(rows));
}

RateReport time_regularity_v(const std::vector<Trajectory>& trajs, int levels) {
  check_regularity_input(trajs, levels);
  const int n = trajs[0].params.steps;
  const double k = trajs[0].params.step_size();
  const double horizon = trajs[0].params.horizon;
  std::vector<RateRow> rows;
  for (int j = 0; j < levels; ++j) {
    const int r = 1 << j;
    const int coarse = n / r;
    std::vector<double> vals;
    for (const auto& t : trajs) {
      double s = 0.0;
      for (int c = 1; c <= coarse; ++c) {
        const auto& left = t.states[static_cast<std::size_t>(c - 1) * r];
        const auto& right = t.states[static_cast<std::size_t>(c) * r];
        for (int m = 1; m <= r; ++m) {
          const auto& mid = t.states[static_cast<std::size_t>(c - 1) * r + m];
          s += k * (sq(sobolev_norm(mid - left, 1.0)) + sq(sobolev_norm(mid - right, 1.0)));
        }
      }
      vals.push_back(s);
    }
    RateRow row;
    row.level = coarse;
    row.scale = horizon / coarse;
    row.l2 = mean_ci(vals);
    row.replicates = static_cast<int>(trajs.size());
    rows.push_back(row);
  }
  return regularity_report("T/N", std::move(rows));
}

// ---------------------------------------------------------------- constants

double cbar_ratio(const SpectralField& u) {
  const double l2 = sobolev_norm(u, 0.0), v = sobolev_norm(u, 1.0);
  if (!(l2 > 0.0)) return 0.0;
  return sq(l4_norm(to_physical(u))) / (l2 * v);
}

double sigma_ratio(const SpectralField& u) {
  const double a = sobolev_norm(u, 2.0);
  if (!(a > 0.0)) return 0.0;
  return linf_norm(to_physical(u)) / a;
}

namespace {

// Sample s: even s draws Gaussian coefficients with amplitude lambda^{-slope/2},
// odd s a Gaussian vortex of random width and center.
std::vector<cplx> random_amplitudes(const SpectralGrid& g, std::uint64_t seed, std::uint64_t s) {
  const auto [u1, u2] = uniform_pair(seed, Stream::ConstantSearch, 0, 0, s);
  std::vector<cplx> amp(g.pair_count());
  const double two_pi = 2.0 * std::numbers::pi;
  if (s % 2 == 0) {
    const double slope = 3.0 * u1;
    for (std::size_t j = 0; j < amp.size(); ++j) {
      const auto m = g.mode(j);
      const auto [a, b] = normal_pair(seed, Stream::ConstantSearch, m.k1, m.k2, s);
      amp[j] = std::pow(g.eigenvalue(j), -0.5 * slope) * cplx{a, b};
    }
  } else {
    const auto [c1, c2] = uniform_pair(seed, Stream::ConstantSearch, 0, 1, s);
    const double width = (0.05 + 0.5 * u1) * g.length() / two_pi;
    const double x0 = c1 * g.length(), y0 = c2 * g.length();
    (void)u2;
    for (std::size_t j = 0; j < amp.size(); ++j) {
      const double lambda = g.eigenvalue(j);
      // Stream function exp(-|kappa|^2 w^2 / 4) shifted to (x0, y0); the
      // velocity amplitude carries |kappa|.
      amp[j] = std::sqrt(lambda) * std::exp(-lambda * width * width / 4.0) *
               std::polar(1.0, -(g.kx(j) * x0 + g.ky(j) * y0));
    }
  }
  return amp;
}

struct SearchResult {
  double best = 0.0;
  std::vector<double> history;
};

template <class Ratio>
SearchResult search(const GridPtr& grid, int samples, std::uint64_t seed, int climb,
                    std::uint64_t climb_stream, Ratio&& ratio, double floor_value) {
  SearchResult r;
  r.best = floor_value;
  std::vector<cplx> best_amp;
  for (int s = 0; s < samples; ++s) {
    auto amp = random_amplitudes(*grid, seed, static_cast<std::uint64_t>(s));
    const double v = ratio(from_stream_amplitudes(grid, amp));
    if (std::isfinite(v) && (v > r.best || best_amp.empty())) {
      if (v > r.best) r.best = v;
      best_amp = std::move(amp);
    }
    r.history.push_back(r.best);
  }
  if (best_amp.empty()) return r;
  // Coordinate hill climbing: perturb one mode at a time, keep improvements.
  double current = ratio(from_stream_amplitudes(grid, best_amp));
  double step = 0.5;
  for (int it = 0; it < climb; ++it) {
    const auto [u, w] = uniform_pair(seed, Stream::ConstantSearch, 1, static_cast<int>(climb_stream),
                                     static_cast<std::uint64_t>(it));
    const std::size_t j = std::min(best_amp.size() - 1,
                                   static_cast<std::size_t>(u * static_cast<double>(best_amp.size())));
    double mag = 0.0;
    for (const auto& a : best_amp) mag = std::max(mag, std::abs(a));
    const auto [a, b] = normal_pair(seed, Stream::ConstantSearch, 2, static_cast<int>(climb_stream),
                                    static_cast<std::uint64_t>(it));
    auto trial = best_amp;
    trial[j] += step * mag * cplx{a, b};
    const double v = ratio(from_stream_amplitudes(grid, trial));
    if (std::isfinite(v) && v > current) {
      current = v;
      best_amp = std::move(trial);
    } else if (w < 0.2) {
      step *= 0.7;
    }
  }
  r.best = std::max(r.best, current);
  return r;
}

}  // namespace

ConstantEstimate estimate_constants(GridPtr grid, int samples, std::uint64_t seed,
                                    int climb_iterations) {
  if (samples < 1) throw std::invalid_argument("constant search needs at least one sample");
  ConstantEstimate e;
  e.samples = samples;
  // Every field with a smaller cutoff is also admissible here; searching the
  // nested cutoffs M, M/2, ..., 1 keeps the estimate monotone in M.
  double cbar_floor = 0.0, sigma_floor = 0.0;
  if (grid->cutoff() > 1) {
    const auto sub = estimate_constants(make_grid(grid->length(), grid->cutoff() / 2), samples,
                                        seed, climb_iterations);
    cbar_floor = sub.cbar;
    sigma_floor = sub.sigma;
  }
  const auto c = search(grid, samples, seed, climb_iterations, 0,
                        [](const SpectralField& u) { return cbar_ratio(u); }, cbar_floor);
  const auto s = search(grid, samples, seed, climb_iterations, 1,
                        [](const SpectralField& u) { return sigma_ratio(u); }, sigma_floor);
  e.cbar = c.best;
  e.sigma = s.best;
  e.cbar_history = c.history;
  e.sigma_history = s.history;
  return e;
}

// ---------------------------------------------------------------- conditions

double threshold_implicit_rate(double nu, double T, double cbar) { return 2.0 * nu * nu / (cbar * cbar * T); }

double threshold_fem_rate(double nu, double T, double cbar, double sigma) {
  return 4.0 * nu * nu * nu / (13.0 * (T * nu * cbar * cbar + 4.0 * sigma * sigma));
}

double threshold_divfree_rate(double nu, double T, double cbar) {
  return 4.0 * nu * nu / (5.0 * cbar * cbar * T);
}

bool ConditionReport::passes(const std::string& theorem) const {
  bool any = false;
  for (const auto& r : rows) {
    if (r.theorem.rfind(theorem, 0) != 0) continue;
    any = true;
    if (!r.pass) return false;
  }
  return any;
}

ConditionReport check_conditions(const ConditionInputs& in) {
  if (!(in.nu > 0.0) || !(in.horizon > 0.0) || !(in.cbar > 0.0) || in.sigma < 0.0 ||
      in.trace_q < 0.0 || !(in.mu > 0.0 && in.mu < 1.0)) {
    throw std::invalid_argument(
        "conditions need nu, T, Cbar > 0, sigma, Tr(Q) >= 0 and mu in (0, 1)");
  }
  ConditionReport rep;
  rep.inputs = in;
  rep.alpha0 = in.trace_q > 0.0 ? in.nu / in.trace_q : kInf;
  const double g = in.gamma0.value_or(kInf);
  auto harmonic = [](double a, double b, double wb) {
    // a b / (wb b + a), with the limits for infinite arguments.
    if (std::isinf(a) && std::isinf(b)) return kInf;
    if (std::isinf(b)) return a / wb;
    if (std::isinf(a)) return b;
    return a * b / (wb * b + a);
  };
  rep.beta0 = harmonic(rep.alpha0, g, 1.0);
  rep.beta1 = harmonic(rep.alpha0, g, 2.0);

  const double T = in.horizon, nu = in.nu, c2 = in.cbar * in.cbar, s2 = in.sigma * in.sigma;
  auto trace_row = [&](std::string thm, double threshold) {
    ConditionRow r{std::move(thm), "Tr(Q)", threshold, in.trace_q, threshold - in.trace_q, false};
    r.pass = in.trace_q < threshold;
    rep.rows.push_back(r);
  };
  auto gamma_row = [&](std::string thm, double threshold) {
    ConditionRow r{std::move(thm), "gamma0", threshold, g, g - threshold, false};
    r.pass = g >= threshold;
    rep.rows.push_back(r);
  };
  const double t33 = threshold_implicit_rate(nu, T, in.cbar);
  const double t43 = threshold_fem_rate(nu, T, in.cbar, in.sigma);
  const double t46 = threshold_divfree_rate(nu, T, in.cbar);
  trace_row("3.3", t33);
  trace_row("4.3", t43);
  trace_row("4.6", t46);
  const double mu = in.mu;
  trace_row("5.1", mu * t33);
  gamma_row("5.1", T * c2 / (2.0 * nu * (1.0 - mu)));
  trace_row("5.2", mu * t43);
  gamma_row("5.2", 13.0 * (T * nu * c2 + 2.0 * s2) / (4.0 * nu * nu * (1.0 - mu)));
  trace_row("5.3", mu * t46);
  gamma_row("5.3", 5.0 * c2 * T / (4.0 * nu * (1.0 - mu)));
  return rep;
}

}  // namespace snse
