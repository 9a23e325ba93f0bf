#pragma once

// Trace-class covariance Q diagonal in the divergence-free Fourier basis,
// Q-Wiener path sampling on a dyadic fine grid, and Gaussian initial data.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "snse/spectral.hpp"

namespace snse {

enum class DecayPolicy { Warn, Reject };

/// Eigenvalues q_k = c * lambda_k^{-r} of Q on the basis zeta_k.
struct QSpec {
  GridPtr grid;
  double scale = 0.0;
  double decay = 0.0;
  /// q_k per stored Hermitian pair (both members share it).
  std::vector<double> variance;
  /// Tr(Q) = sum over retained modes of q_k.
  double trace = 0.0;
  /// K_0 = Tr(A^{1/2} Q A^{1/2}) = sum over retained modes of lambda_k q_k.
  double k0 = 0.0;
  /// r > 2: the untruncated K_0 series converges.
  bool trace_condition = true;
  std::vector<std::string> warnings;
};

/// Throws std::invalid_argument for c < 0, and for r <= 2 under
/// DecayPolicy::Reject.
QSpec build_q(GridPtr grid, double scale, double decay, DecayPolicy policy = DecayPolicy::Warn);

/// Same decay law with the scale chosen so that Tr(Q) equals `trace`.
QSpec build_q_with_trace(GridPtr grid, double trace, double decay,
                         DecayPolicy policy = DecayPolicy::Warn);

/// Sum by a balanced binary tree over the input order.
double pairwise_sum(std::span<const double> values);

/// Real Brownian increments of the two basis functions (cos, sin) of every
/// Hermitian pair on the finest grid. Unscaled: each has variance T/N_fine.
class NoisePath {
public:
  NoisePath(QSpec q, int fine_steps, double horizon, std::uint64_t seed,
            std::vector<double> increments);

  const QSpec& q() const { return q_; }
  const SpectralGrid& grid() const { return *q_.grid; }
  int fine_steps() const { return fine_steps_; }
  double horizon() const { return horizon_; }
  std::uint64_t seed() const { return seed_; }

  /// Fine increments of basis function (pair, component), component 0 = cos.
  std::span<const double> fine(std::size_t pair, int component) const;
  std::span<const double> raw() const { return increments_; }

  /// Increments of (pair, component) on a grid of N steps; each is the
  /// dyadic-tree sum of its N_fine/N fine increments, so coarsening twice
  /// is bitwise identical to coarsening once.
  std::vector<double> coarse(std::size_t pair, int component, int steps) const;

private:
  QSpec q_;
  int fine_steps_;
  double horizon_;
  std::uint64_t seed_;
  std::vector<double> increments_;  // [pair][component][step]
};

/// N_fine must be a power of two, T > 0.
NoisePath sample_path(const QSpec& q, int fine_steps, double horizon, std::uint64_t seed);

/// Delta_l W on a grid of N steps, 1 <= l <= N. Throws if N does not divide
/// N_fine.
SpectralField increment_field(const NoisePath& path, int step, int steps);

/// All N increments at once (cheaper than N calls).
std::vector<SpectralField> increment_fields(const NoisePath& path, int steps);

/// W(T) = the single increment on a one-step grid.
SpectralField total_increment(const NoisePath& path);

/// sqrt(q_k) (b_cos - i b_sin) / (sqrt(2) L) along the divergence-free
/// direction: the field whose coordinates on (zeta_cos, zeta_sin) are
/// sqrt(q_k) (b_cos, b_sin).
SpectralField field_from_coordinates(const QSpec& q, std::span<const double> cos_part,
                                     std::span<const double> sin_part);

/// Mean-zero Gaussian divergence-free field with covariance `cov`, drawn from
/// a stream independent of the path generator.
SpectralField sample_gaussian_u0(const QSpec& cov, std::uint64_t seed);

}  // namespace snse
