#include "snse/noise.hpp"

#include <cmath>
#include <stdexcept>

#include "snse/rng.hpp"

namespace snse {
namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

double tree_sum(const double* v, std::size_t n) {
  if (n == 1) return v[0];
  const std::size_t half = n / 2;
  return tree_sum(v, half) + tree_sum(v + half, n - half);
}

// Halves a power-of-two array in place until it has `target` entries.
void coarsen_dyadic(std::vector<double>& v, std::size_t target) {
  while (v.size() > target) {
    const std::size_t half = v.size() / 2;
    for (std::size_t i = 0; i < half; ++i) v[i] = v[2 * i] + v[2 * i + 1];
    v.resize(half);
  }
}

void check_steps(const NoisePath& path, int steps) {
  if (steps < 1 || path.fine_steps() % steps != 0) {
    throw std::invalid_argument("coarse step count " + std::to_string(steps) +
                                " does not divide the fine grid " +
                                std::to_string(path.fine_steps()));
  }
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
  return values.empty() ? 0.0 : tree_sum(values.data(), values.size());
}

QSpec build_q(GridPtr grid, double scale, double decay, DecayPolicy policy) {
  if (!(scale >= 0.0)) throw std::invalid_argument("noise scale must be nonnegative");
  QSpec q;
  q.grid = grid;
  q.scale = scale;
  q.decay = decay;
  q.trace_condition = decay > 2.0;
  if (!q.trace_condition) {
    const std::string msg = "decay r = " + std::to_string(decay) +
                            " <= 2: K0 = Tr(A^1/2 Q A^1/2) diverges without truncation";
    if (policy == DecayPolicy::Reject) throw std::invalid_argument(msg);
    q.warnings.push_back(msg);
  }
  q.variance.resize(grid->pair_count());
  std::vector<double> trace_terms(grid->pair_count()), k0_terms(grid->pair_count());
  for (std::size_t j = 0; j < q.variance.size(); ++j) {
    const double lambda = grid->eigenvalue(j);
    q.variance[j] = scale == 0.0 ? 0.0 : scale * std::pow(lambda, -decay);
    trace_terms[j] = 2.0 * q.variance[j];
    k0_terms[j] = 2.0 * lambda * q.variance[j];
  }
  q.trace = pairwise_sum(trace_terms);
  q.k0 = pairwise_sum(k0_terms);
  return q;
}

QSpec build_q_with_trace(GridPtr grid, double trace, double decay, DecayPolicy policy) {
  if (!(trace >= 0.0)) throw std::invalid_argument("target trace must be nonnegative");
  const QSpec unit = build_q(grid, 1.0, decay, policy);
  return build_q(std::move(grid), trace / unit.trace, decay, policy);
}

NoisePath::NoisePath(QSpec q, int fine_steps, double horizon, std::uint64_t seed,
                     std::vector<double> increments)
    : q_(std::move(q)),
      fine_steps_(fine_steps),
      horizon_(horizon),
      seed_(seed),
      increments_(std::move(increments)) {
  if (!is_power_of_two(fine_steps_)) {
    throw std::invalid_argument("fine step count must be a power of two");
  }
  if (!(horizon_ > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (increments_.size() != q_.grid->pair_count() * 2 * static_cast<std::size_t>(fine_steps_)) {
    throw std::invalid_argument("increment array does not match the grid");
  }
}

std::span<const double> NoisePath::fine(std::size_t pair, int component) const {
  const std::size_t offset = (pair * 2 + static_cast<std::size_t>(component)) * fine_steps_;
  return {increments_.data() + offset, static_cast<std::size_t>(fine_steps_)};
}

std::vector<double> NoisePath::coarse(std::size_t pair, int component, int steps) const {
  check_steps(*this, steps);
  const auto f = fine(pair, component);
  std::vector<double> out(f.begin(), f.end());
  coarsen_dyadic(out, static_cast<std::size_t>(steps));
  return out;
}

NoisePath sample_path(const QSpec& q, int fine_steps, double horizon, std::uint64_t seed) {
  if (!is_power_of_two(fine_steps)) {
    throw std::invalid_argument("fine step count must be a power of two");
  }
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  const auto& g = *q.grid;
  const double sd = std::sqrt(horizon / fine_steps);
  std::vector<double> inc(g.pair_count() * 2 * static_cast<std::size_t>(fine_steps), 0.0);
  for (std::size_t j = 0; j < g.pair_count(); ++j) {
    if (q.variance[j] == 0.0) continue;
    const auto k = g.mode(j);
    double* cos_part = inc.data() + (2 * j) * fine_steps;
    double* sin_part = cos_part + fine_steps;
    for (int l = 0; l < fine_steps; ++l) {
      const auto [a, b] = normal_pair(seed, Stream::BrownianIncrement, k.k1, k.k2,
                                      static_cast<std::uint64_t>(l));
      cos_part[l] = sd * a;
      sin_part[l] = sd * b;
    }
  }
  return NoisePath(q, fine_steps, horizon, seed, std::move(inc));
}

SpectralField field_from_coordinates(const QSpec& q, std::span<const double> cos_part,
                                     std::span<const double> sin_part) {
  const auto& g = *q.grid;
  SpectralField f(q.grid);
  const double norm = 1.0 / (std::sqrt(2.0) * g.length());
  for (std::size_t j = 0; j < f.size(); ++j) {
    if (q.variance[j] == 0.0) continue;
    const cplx amp = std::sqrt(q.variance[j]) * norm * cplx{cos_part[j], -sin_part[j]};
    const auto e = perp_direction(g, j);
    f[j] = {amp * e.x, amp * e.y};
  }
  return f;
}

std::vector<SpectralField> increment_fields(const NoisePath& path, int steps) {
  check_steps(path, steps);
  const std::size_t pairs = path.grid().pair_count();
  std::vector<std::vector<double>> cos_steps(steps, std::vector<double>(pairs, 0.0));
  std::vector<std::vector<double>> sin_steps(steps, std::vector<double>(pairs, 0.0));
  for (std::size_t j = 0; j < pairs; ++j) {
    if (path.q().variance[j] == 0.0) continue;
    const auto c = path.coarse(j, 0, steps);
    const auto s = path.coarse(j, 1, steps);
    for (int l = 0; l < steps; ++l) {
      cos_steps[l][j] = c[l];
      sin_steps[l][j] = s[l];
    }
  }
  std::vector<SpectralField> out;
  out.reserve(steps);
  for (int l = 0; l < steps; ++l) {
    out.push_back(field_from_coordinates(path.q(), cos_steps[l], sin_steps[l]));
  }
  return out;
}

SpectralField increment_field(const NoisePath& path, int step, int steps) {
  check_steps(path, steps);
  if (step < 1 || step > steps) throw std::invalid_argument("increment index out of range");
  const std::size_t pairs = path.grid().pair_count();
  const std::size_t block = static_cast<std::size_t>(path.fine_steps() / steps);
  const std::size_t first = block * static_cast<std::size_t>(step - 1);
  std::vector<double> c(pairs, 0.0), s(pairs, 0.0);
  for (std::size_t j = 0; j < pairs; ++j) {
    c[j] = pairwise_sum(path.fine(j, 0).subspan(first, block));
    s[j] = pairwise_sum(path.fine(j, 1).subspan(first, block));
  }
  return field_from_coordinates(path.q(), c, s);
}

SpectralField total_increment(const NoisePath& path) { return increment_field(path, 1, 1); }

SpectralField sample_gaussian_u0(const QSpec& cov, std::uint64_t seed) {
  const auto& g = *cov.grid;
  std::vector<double> c(g.pair_count()), s(g.pair_count());
  for (std::size_t j = 0; j < g.pair_count(); ++j) {
    const auto k = g.mode(j);
    std::tie(c[j], s[j]) = normal_pair(seed, Stream::InitialCondition, k.k1, k.k2, 0);
  }
  return field_from_coordinates(cov, c, s);
}

}  // namespace snse
