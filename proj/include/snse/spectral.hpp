#pragma once

// Divergence-free Fourier-Galerkin representation of periodic vector fields
// on the torus [0, L]^2: the Stokes operator, the Leray projection and the
// dealiased convection term.

#include <complex>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace snse {

using cplx = std::complex<double>;

struct WaveVector {
  int k1 = 0;
  int k2 = 0;
  friend bool operator==(const WaveVector&, const WaveVector&) = default;
};

/// Truncated Fourier lattice 0 < |k|_inf <= M of the periodic box [0, L]^2.
///
/// Fields are real in physical space, so only one representative of each
/// Hermitian pair (k, -k) is stored: the modes with k2 > 0 and the modes with
/// k2 == 0, k1 > 0, ordered lexicographically on (k1, k2). The ordering does
/// not depend on anything but (L, M) and is what the noise generator keys on.
class SpectralGrid {
public:
  SpectralGrid(double length, int cutoff);

  double length() const { return length_; }
  int cutoff() const { return cutoff_; }
  /// Samples per axis of the dealiased physical grid (> 3M).
  int physical_size() const { return physical_size_; }

  /// Stored Hermitian representatives.
  std::size_t pair_count() const { return modes_.size(); }
  /// Retained lattice modes, i.e. both members of every pair.
  std::size_t mode_count() const { return 2 * modes_.size(); }

  WaveVector mode(std::size_t j) const { return modes_[j]; }
  double kx(std::size_t j) const { return kx_[j]; }
  double ky(std::size_t j) const { return ky_[j]; }
  /// Eigenvalue |kappa|^2 of the Stokes operator on mode j.
  double eigenvalue(std::size_t j) const { return lambda_[j]; }
  std::span<const double> eigenvalues() const { return lambda_; }

  /// Index of the stored representative of +/-k, and whether k itself is the
  /// conjugate member.
  std::optional<std::size_t> index_of(int k1, int k2, bool* conjugated = nullptr) const;

  /// Eigenvalues of every retained mode (with multiplicity), ascending.
  std::vector<double> sorted_eigenvalues() const;

  bool same_as(const SpectralGrid& other) const {
    return length_ == other.length_ && cutoff_ == other.cutoff_;
  }

private:
  double length_;
  int cutoff_;
  int physical_size_;
  std::vector<WaveVector> modes_;
  std::vector<double> kx_, ky_, lambda_;
};

using GridPtr = std::shared_ptr<const SpectralGrid>;

/// Throws std::invalid_argument for L <= 0 or M < 1.
GridPtr make_grid(double length, int cutoff);

struct ModeCoeff {
  cplx x;
  cplx y;
};

/// Complex Fourier coefficients u_k of a real, mean-zero periodic vector
/// field, normalized so that |u|_{L^2}^2 = L^2 * sum_k |u_k|^2 over all
/// retained modes.
class SpectralField {
public:
  explicit SpectralField(GridPtr grid);

  const SpectralGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::size_t size() const { return coeffs_.size(); }

  ModeCoeff& operator[](std::size_t j) { return coeffs_[j]; }
  const ModeCoeff& operator[](std::size_t j) const { return coeffs_[j]; }
  std::span<ModeCoeff> coeffs() { return coeffs_; }
  std::span<const ModeCoeff> coeffs() const { return coeffs_; }

  /// max_k |kappa_k . u_k| <= rel_tol * max_k |kappa_k| |u_k|.
  bool is_divergence_free(double rel_tol = 1e-12) const;
  bool is_zero() const;

  SpectralField& operator+=(const SpectralField& other);
  SpectralField& operator-=(const SpectralField& other);
  SpectralField& operator*=(double factor);
  /// this += factor * other
  SpectralField& add_scaled(double factor, const SpectralField& other);

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

  friend bool operator==(const SpectralField& a, const SpectralField& b);

private:
  GridPtr grid_;
  std::vector<ModeCoeff> coeffs_;
};

/// Unit vector kappa^perp / |kappa| spanning the divergence-free direction of
/// mode j.
ModeCoeff perp_direction(const SpectralGrid& grid, std::size_t j);

/// Builds a divergence-free field u_k = amplitude_k * perp_direction(k).
SpectralField from_stream_amplitudes(GridPtr grid, std::span<const cplx> amplitudes);

/// Component of each coefficient along perp_direction.
std::vector<cplx> stream_amplitudes(const SpectralField& f);

void require_same_grid(const SpectralField& a, const SpectralField& b);

SpectralField leray_project(const SpectralField& f);
SpectralField apply_stokes_power(const SpectralField& f, double s);

/// |A^{s/2} f|_{L^2}.
double sobolev_norm(const SpectralField& f, double s);

/// L^2 inner product (f, g).
double inner_product(const SpectralField& f, const SpectralField& g);

/// Galerkin truncation of (u . grad) v, unprojected. u must be
/// divergence-free: the product is formed in conservative form div(u (x) v).
SpectralField advection(const SpectralField& u, const SpectralField& v);

/// Leray projection of the truncated (u . grad) v.
SpectralField bilinear_b(const SpectralField& u, const SpectralField& v);

/// b(u, v, w) = int ((u . grad) v) . w dx.
double trilinear_form(const SpectralField& u, const SpectralField& v, const SpectralField& w);

/// Row-major samples [a * n + b] at (a L / n + ox, b L / n + oy).
struct PhysicalField {
  int n = 0;
  double length = 0.0;
  std::vector<double> x;
  std::vector<double> y;
};

/// Samples on the dealiased grid of f's SpectralGrid.
PhysicalField to_physical(const SpectralField& f);

/// Inverse of to_physical on the retained modes. The mean and every mode
/// beyond the cutoff are dropped. Throws if samples.n differs from the
/// grid's physical_size().
SpectralField from_physical(const PhysicalField& samples, GridPtr grid);

/// Evaluates the truncated series on an arbitrary n x n lattice shifted by
/// (ox, oy). Exact: modes beyond n/2 are folded, not discarded.
PhysicalField sample_lattice(const SpectralField& f, int n, double ox, double oy);

/// ||f||_{L^4} and ||f||_{L^inf} by quadrature on the dealiased grid.
double l4_norm(const PhysicalField& samples);
double linf_norm(const PhysicalField& samples);
double l2_norm(const PhysicalField& samples);

}  // namespace snse
