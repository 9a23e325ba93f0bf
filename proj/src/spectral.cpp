#include "snse/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fft.hpp"

namespace snse {
namespace {

int wrap(int k, int n) { return ((k % n) + n) % n; }

int dealiased_size(int cutoff) {
  // Quadratic products carry modes up to 2M; they alias onto retained modes
  // unless n > 3M.
  int n = 3 * cutoff + 1;
  return n % 2 == 0 ? n : n + 1;
}

}  // namespace

SpectralGrid::SpectralGrid(double length, int cutoff)
    : length_(length), cutoff_(cutoff), physical_size_(dealiased_size(cutoff)) {
  if (!(length > 0.0)) throw std::invalid_argument("domain length must be positive");
  if (cutoff < 1) throw std::invalid_argument("spectral cutoff must be >= 1");
  const double base = 2.0 * std::numbers::pi / length;
  for (int k1 = -cutoff; k1 <= cutoff; ++k1) {
    for (int k2 = 0; k2 <= cutoff; ++k2) {
      if (k2 == 0 && k1 <= 0) continue;
      modes_.push_back({k1, k2});
      kx_.push_back(base * k1);
      ky_.push_back(base * k2);
      lambda_.push_back(base * base * (k1 * k1 + k2 * k2));
    }
  }
}

std::optional<std::size_t> SpectralGrid::index_of(int k1, int k2, bool* conjugated) const {
  bool conj = false;
  if (k2 < 0 || (k2 == 0 && k1 < 0)) {
    k1 = -k1;
    k2 = -k2;
    conj = true;
  }
  if (k2 == 0 && k1 == 0) return std::nullopt;
  if (std::abs(k1) > cutoff_ || k2 > cutoff_) return std::nullopt;
  // Lexicographic layout: columns k1 <= 0 hold k2 = 1..M, columns k1 > 0
  // hold k2 = 0..M.
  std::size_t index = static_cast<std::size_t>(k1 + cutoff_) * cutoff_ +
                      static_cast<std::size_t>(std::max(0, k1 - 1));
  index += static_cast<std::size_t>(k1 > 0 ? k2 : k2 - 1);
  if (index >= modes_.size() || modes_[index] != WaveVector{k1, k2}) {
    throw std::logic_error("spectral mode index out of sync");
  }
  if (conjugated != nullptr) *conjugated = conj;
  return index;
}

std::vector<double> SpectralGrid::sorted_eigenvalues() const {
  std::vector<double> all;
  all.reserve(mode_count());
  for (double l : lambda_) {
    all.push_back(l);
    all.push_back(l);
  }
  std::sort(all.begin(), all.end());
  return all;
}

GridPtr make_grid(double length, int cutoff) {
  return std::make_shared<const SpectralGrid>(length, cutoff);
}

SpectralField::SpectralField(GridPtr grid) : grid_(std::move(grid)) {
  if (!grid_) throw std::invalid_argument("null spectral grid");
  coeffs_.assign(grid_->pair_count(), ModeCoeff{});
}

bool SpectralField::is_divergence_free(double rel_tol) const {
  double worst = 0.0, scale = 0.0;
  for (std::size_t j = 0; j < coeffs_.size(); ++j) {
    const double kx = grid_->kx(j), ky = grid_->ky(j);
    const auto& c = coeffs_[j];
    worst = std::max(worst, std::abs(kx * c.x + ky * c.y));
    scale = std::max(scale, std::sqrt(grid_->eigenvalue(j)) *
                                std::sqrt(std::norm(c.x) + std::norm(c.y)));
  }
  return worst <= rel_tol * scale;
}

bool SpectralField::is_zero() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(), [](const ModeCoeff& c) {
    return c.x == cplx{} && c.y == cplx{};
  });
}

SpectralField& SpectralField::operator+=(const SpectralField& other) {
  require_same_grid(*this, other);
  for (std::size_t j = 0; j < coeffs_.size(); ++j) {
    coeffs_[j].x += other.coeffs_[j].x;
    coeffs_[j].y += other.coeffs_[j].y;
  }
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& other) {
  require_same_grid(*this, other);
  for (std::size_t j = 0; j < coeffs_.size(); ++j) {
    coeffs_[j].x -= other.coeffs_[j].x;
    coeffs_[j].y -= other.coeffs_[j].y;
  }
  return *this;
}

SpectralField& SpectralField::operator*=(double factor) {
  for (auto& c : coeffs_) {
    c.x *= factor;
    c.y *= factor;
  }
  return *this;
}

SpectralField& SpectralField::add_scaled(double factor, const SpectralField& other) {
  require_same_grid(*this, other);
  for (std::size_t j = 0; j < coeffs_.size(); ++j) {
    coeffs_[j].x += factor * other.coeffs_[j].x;
    coeffs_[j].y += factor * other.coeffs_[j].y;
  }
  return *this;
}

bool operator==(const SpectralField& a, const SpectralField& b) {
  if (!a.grid_->same_as(*b.grid_)) return false;
  for (std::size_t j = 0; j < a.coeffs_.size(); ++j) {
    if (a.coeffs_[j].x != b.coeffs_[j].x || a.coeffs_[j].y != b.coeffs_[j].y) return false;
  }
  return true;
}

void require_same_grid(const SpectralField& a, const SpectralField& b) {
  if (&a.grid() != &b.grid() && !a.grid().same_as(b.grid())) {
    throw std::invalid_argument("spectral fields live on different grids");
  }
}

ModeCoeff perp_direction(const SpectralGrid& grid, std::size_t j) {
  const double norm = std::sqrt(grid.eigenvalue(j));
  return {cplx{-grid.ky(j) / norm}, cplx{grid.kx(j) / norm}};
}

SpectralField from_stream_amplitudes(GridPtr grid, std::span<const cplx> amplitudes) {
  SpectralField f(std::move(grid));
  if (amplitudes.size() != f.size()) throw std::invalid_argument("amplitude count mismatch");
  for (std::size_t j = 0; j < f.size(); ++j) {
    const auto e = perp_direction(f.grid(), j);
    f[j] = {amplitudes[j] * e.x, amplitudes[j] * e.y};
  }
  return f;
}

std::vector<cplx> stream_amplitudes(const SpectralField& f) {
  std::vector<cplx> out(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) {
    const auto e = perp_direction(f.grid(), j);
    out[j] = e.x.real() * f[j].x + e.y.real() * f[j].y;
  }
  return out;
}

SpectralField leray_project(const SpectralField& f) {
  SpectralField out = f;
  const auto& g = f.grid();
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double kx = g.kx(j), ky = g.ky(j), lam = g.eigenvalue(j);
    const cplx along = (kx * f[j].x + ky * f[j].y) / lam;
    out[j].x -= kx * along;
    out[j].y -= ky * along;
  }
  return out;
}

SpectralField apply_stokes_power(const SpectralField& f, double s) {
  SpectralField out = f;
  if (s == 0.0) return out;
  const auto& g = f.grid();
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double factor = s == 1.0 ? g.eigenvalue(j) : std::pow(g.eigenvalue(j), s);
    out[j].x *= factor;
    out[j].y *= factor;
  }
  return out;
}

double sobolev_norm(const SpectralField& f, double s) {
  const auto& g = f.grid();
  double sum = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double w = s == 0.0 ? 1.0 : (s == 1.0 ? g.eigenvalue(j) : std::pow(g.eigenvalue(j), s));
    sum += w * (std::norm(f[j].x) + std::norm(f[j].y));
  }
  const double L = g.length();
  return std::sqrt(2.0 * L * L * sum);
}

double inner_product(const SpectralField& f, const SpectralField& g) {
  require_same_grid(f, g);
  double sum = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    sum += (f[j].x * std::conj(g[j].x)).real() + (f[j].y * std::conj(g[j].y)).real();
  }
  const double L = f.grid().length();
  return 2.0 * L * L * sum;
}

namespace {

std::vector<cplx> forward_modes(const SpectralGrid& g, std::vector<double>& samples,
                                std::vector<cplx>& scratch) {
  const int n = g.physical_size();
  detail::fft_r2c(n, samples, scratch);
  const int half = n / 2 + 1;
  const double norm = 1.0 / (static_cast<double>(n) * n);
  std::vector<cplx> out(g.pair_count());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto k = g.mode(j);
    out[j] = scratch[static_cast<std::size_t>(wrap(k.k1, n)) * half + k.k2] * norm;
  }
  return out;
}

std::vector<double> inverse_modes(const SpectralGrid& g, const SpectralField& f, bool y_component,
                                  std::vector<cplx>& scratch) {
  const int n = g.physical_size();
  const int half = n / 2 + 1;
  scratch.assign(static_cast<std::size_t>(n) * half, cplx{});
  for (std::size_t j = 0; j < f.size(); ++j) {
    const auto k = g.mode(j);
    const cplx c = y_component ? f[j].y : f[j].x;
    scratch[static_cast<std::size_t>(wrap(k.k1, n)) * half + k.k2] = c;
    if (k.k2 == 0) scratch[static_cast<std::size_t>(wrap(-k.k1, n)) * half] = std::conj(c);
  }
  std::vector<double> out;
  detail::fft_c2r(n, scratch, out);
  return out;
}

}  // namespace

PhysicalField to_physical(const SpectralField& f) {
  const auto& g = f.grid();
  std::vector<cplx> scratch;
  PhysicalField p;
  p.n = g.physical_size();
  p.length = g.length();
  p.x = inverse_modes(g, f, false, scratch);
  p.y = inverse_modes(g, f, true, scratch);
  return p;
}

SpectralField from_physical(const PhysicalField& samples, GridPtr grid) {
  if (samples.n != grid->physical_size()) {
    throw std::invalid_argument("physical resolution does not match the spectral grid");
  }
  if (samples.length != grid->length()) {
    throw std::invalid_argument("physical samples live on a different domain");
  }
  std::vector<cplx> scratch;
  auto x = samples.x;
  auto y = samples.y;
  const auto cx = forward_modes(*grid, x, scratch);
  const auto cy = forward_modes(*grid, y, scratch);
  SpectralField f(std::move(grid));
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = {cx[j], cy[j]};
  return f;
}

SpectralField advection(const SpectralField& u, const SpectralField& v) {
  require_same_grid(u, v);
  const auto& g = u.grid();
  const auto pu = to_physical(u);
  const bool same = (&u == &v) || u == v;
  const auto pv = same ? pu : to_physical(v);
  const std::size_t count = pu.x.size();

  std::vector<cplx> scratch;
  std::vector<double> prod(count);
  auto transform = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < count; ++i) prod[i] = a[i] * b[i];
    return forward_modes(g, prod, scratch);
  };
  // Conservative form: ((u . grad) v)_i = d_x (u_x v_i) + d_y (u_y v_i).
  const auto xx = transform(pu.x, pv.x);
  const auto yy = transform(pu.y, pv.y);
  const auto xy = transform(pu.x, pv.y);
  const auto yx = same ? xy : transform(pu.y, pv.x);

  SpectralField out(u.grid_ptr());
  const cplx i{0.0, 1.0};
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double kx = g.kx(j), ky = g.ky(j);
    out[j].x = i * (kx * xx[j] + ky * yx[j]);
    out[j].y = i * (kx * xy[j] + ky * yy[j]);
  }
  return out;
}

SpectralField bilinear_b(const SpectralField& u, const SpectralField& v) {
  return leray_project(advection(u, v));
}

double trilinear_form(const SpectralField& u, const SpectralField& v, const SpectralField& w) {
  require_same_grid(u, w);
  return inner_product(advection(u, v), w);
}

PhysicalField sample_lattice(const SpectralField& f, int n, double ox, double oy) {
  if (n < 1) throw std::invalid_argument("lattice size must be positive");
  const auto& g = f.grid();
  std::vector<cplx> data(static_cast<std::size_t>(n) * n, cplx{});
  const cplx i{0.0, 1.0};
  for (std::size_t j = 0; j < f.size(); ++j) {
    const auto k = g.mode(j);
    const cplx phase = std::polar(1.0, g.kx(j) * ox + g.ky(j) * oy);
    const cplx cx = f[j].x * phase, cy = f[j].y * phase;
    data[static_cast<std::size_t>(wrap(k.k1, n)) * n + wrap(k.k2, n)] += cx + i * cy;
    data[static_cast<std::size_t>(wrap(-k.k1, n)) * n + wrap(-k.k2, n)] +=
        std::conj(cx) + i * std::conj(cy);
  }
  detail::fft_c2c_backward(n, data);
  PhysicalField p;
  p.n = n;
  p.length = g.length();
  p.x.resize(data.size());
  p.y.resize(data.size());
  for (std::size_t m = 0; m < data.size(); ++m) {
    p.x[m] = data[m].real();
    p.y[m] = data[m].imag();
  }
  return p;
}

double l4_norm(const PhysicalField& s) {
  double sum = 0.0;
  for (std::size_t m = 0; m < s.x.size(); ++m) {
    const double r2 = s.x[m] * s.x[m] + s.y[m] * s.y[m];
    sum += r2 * r2;
  }
  const double cell = s.length * s.length / (static_cast<double>(s.n) * s.n);
  return std::pow(sum * cell, 0.25);
}

double linf_norm(const PhysicalField& s) {
  double worst = 0.0;
  for (std::size_t m = 0; m < s.x.size(); ++m) {
    worst = std::max(worst, s.x[m] * s.x[m] + s.y[m] * s.y[m]);
  }
  return std::sqrt(worst);
}

double l2_norm(const PhysicalField& s) {
  double sum = 0.0;
  for (std::size_t m = 0; m < s.x.size(); ++m) sum += s.x[m] * s.x[m] + s.y[m] * s.y[m];
  const double cell = s.length * s.length / (static_cast<double>(s.n) * s.n);
  return std::sqrt(sum * cell);
}

}  // namespace snse
