#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "snse/spectral.hpp"

namespace snse::test {

/// Random divergence-free field with a k^-2 spectrum, deterministic in seed.
inline SpectralField random_field(const GridPtr& grid, std::uint64_t seed, double slope = 2.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<cplx> amp(grid->pair_count());
  for (std::size_t j = 0; j < amp.size(); ++j) {
    const double s = std::pow(grid->eigenvalue(j), -slope / 2.0);
    amp[j] = {s * nd(gen), s * nd(gen)};
  }
  return from_stream_amplitudes(grid, amp);
}

/// Random field with no divergence constraint.
inline SpectralField random_raw_field(const GridPtr& grid, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  SpectralField f(grid);
  for (std::size_t j = 0; j < f.size(); ++j) {
    f[j].x = {nd(gen), nd(gen)};
    f[j].y = {nd(gen), nd(gen)};
  }
  return f;
}

/// Coefficient of lattice mode k (conjugated for the unstored member, zero
/// outside the truncation).
inline ModeCoeff coeff_at(const SpectralField& f, int k1, int k2) {
  bool conj = false;
  const auto j = f.grid().index_of(k1, k2, &conj);
  if (!j) return {};
  const ModeCoeff c = f[*j];
  return conj ? ModeCoeff{std::conj(c.x), std::conj(c.y)} : c;
}

// (u . grad) v by direct convolution over the full lattice, truncated to
// the grid and Leray-projected.
inline SpectralField convolution_oracle(const SpectralField& u, const SpectralField& v) {
  const auto& g = u.grid();
  const int m = g.cutoff();
  const double w = 2.0 * std::numbers::pi / g.length();
  SpectralField out(u.grid_ptr());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto k = g.mode(j);
    cplx sx = 0.0, sy = 0.0;
    for (int p1 = -m; p1 <= m; ++p1) {
      for (int p2 = -m; p2 <= m; ++p2) {
        const int q1 = k.k1 - p1, q2 = k.k2 - p2;
        if (std::abs(q1) > m || std::abs(q2) > m) continue;
        const ModeCoeff up = coeff_at(u, p1, p2);
        const ModeCoeff vq = coeff_at(v, q1, q2);
        const cplx dot = cplx(0, 1) * w * (up.x * double(q1) + up.y * double(q2));
        sx += dot * vq.x;
        sy += dot * vq.y;
      }
    }
    out[j] = {sx, sy};
  }
  return leray_project(out);
}

}  // namespace snse::test
