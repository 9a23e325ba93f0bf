#include "snse/fem.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace snse {
namespace {

using Triplet = Eigen::Triplet<double>;

int wrap(int a, int n) { return ((a % n) + n) % n; }

// Lattice offsets (in half-cells) of the six local nodes.
constexpr int kNodeOffset[2][6][2] = {
    {{0, 0}, {2, 0}, {2, 2}, {1, 0}, {2, 1}, {1, 1}},
    {{0, 0}, {2, 2}, {0, 2}, {1, 1}, {1, 2}, {0, 1}},
};

std::array<double, 3> p1_values(double xi, double eta) { return {1.0 - xi - eta, xi, eta}; }
constexpr double kP1Gradient[3][2] = {{-1.0, -1.0}, {1.0, 0.0}, {0.0, 1.0}};

// Block diagonal diag(a, a).
SparseMatrix block_diag(const SparseMatrix& a) {
  std::vector<Triplet> t;
  t.reserve(2 * a.nonZeros());
  const int n = static_cast<int>(a.rows());
  for (int c = 0; c < a.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(a, c); it; ++it) {
      t.emplace_back(static_cast<int>(it.row()), c, it.value());
      t.emplace_back(static_cast<int>(it.row()) + n, c + n, it.value());
    }
  }
  SparseMatrix out(2 * n, 2 * n);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

int slot_of(const SparseMatrix& m, int row, int col) {
  const int* inner = m.innerIndexPtr();
  const int begin = m.outerIndexPtr()[col], end = m.outerIndexPtr()[col + 1];
  const int* it = std::lower_bound(inner + begin, inner + end, row);
  if (it == inner + end || *it != row) throw std::logic_error("entry missing from pattern");
  return static_cast<int>(it - inner);
}

double quad_form(const SparseMatrix& m, const Eigen::VectorXd& v) { return v.dot(m * v); }

}  // namespace

std::array<double, 6> p2_values(double xi, double eta) {
  const double l0 = 1.0 - xi - eta, l1 = xi, l2 = eta;
  return {l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
          4 * l0 * l1,       4 * l1 * l2,       4 * l2 * l0};
}

std::array<std::array<double, 2>, 6> p2_gradients(double xi, double eta) {
  const double l0 = 1.0 - xi - eta, l1 = xi, l2 = eta;
  // d l0 = (-1, -1), d l1 = (1, 0), d l2 = (0, 1)
  return {{{-(4 * l0 - 1), -(4 * l0 - 1)},
           {4 * l1 - 1, 0.0},
           {0.0, 4 * l2 - 1},
           {4 * (l0 - l1), -4 * l1},
           {4 * l2, 4 * l1},
           {-4 * l2, 4 * (l0 - l2)}}};
}

// ---------------------------------------------------------------- mesh

PeriodicMesh::PeriodicMesh(double length, int subdivisions) : length_(length), n_(subdivisions) {
  if (!(length > 0.0)) throw std::invalid_argument("mesh length must be positive");
  if (subdivisions < 2) throw std::invalid_argument("mesh needs n >= 2 subdivisions");
  triangles_.reserve(2 * static_cast<std::size_t>(n_) * n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      for (int type = 0; type < 2; ++type) {
        MeshTriangle t;
        t.type = type;
        t.i = i;
        t.j = j;
        for (int a = 0; a < 6; ++a) {
          t.nodes[a] = node_index(2 * i + kNodeOffset[type][a][0], 2 * j + kNodeOffset[type][a][1]);
        }
        for (int a = 0; a < 3; ++a) {
          t.vertices[a] = vertex_index(i + kNodeOffset[type][a][0] / 2, j + kNodeOffset[type][a][1] / 2);
        }
        triangles_.push_back(t);
      }
    }
  }
}

double PeriodicMesh::h() const { return length_ * std::sqrt(2.0) / n_; }
int PeriodicMesh::edge_count() const { return 3 * n_ * n_; }
int PeriodicMesh::node_index(int a, int b) const { return wrap(a, 2 * n_) * 2 * n_ + wrap(b, 2 * n_); }
int PeriodicMesh::vertex_index(int i, int j) const { return wrap(i, n_) * n_ + wrap(j, n_); }

PeriodicMesh build_mesh(double length, int subdivisions) { return PeriodicMesh(length, subdivisions); }

// ---------------------------------------------------------------- system

struct FemSystem::Cache {
  std::mutex mutex;
  std::unique_ptr<SaddlePointSolver> projector;
  std::unique_ptr<Eigen::SparseLU<SparseMatrix>> pressure_projector;
};

FemSystem::FemSystem(const PeriodicMesh& mesh)
    : mesh_(mesh),
      scalar_dofs_(4 * mesh.subdivisions() * mesh.subdivisions()),
      pressure_dofs_(mesh.vertex_count()),
      rule_(collapsed_gauss_rule(4)),
      fine_rule_(collapsed_gauss_rule(6)),
      cache_(std::make_shared<Cache>()) {
  const double H = mesh.spacing();
  types_[0].jacobian = {{{H, H}, {0.0, H}}};
  types_[1].jacobian = {{{H, 0.0}, {H, H}}};
  for (auto& t : types_) {
    const auto& J = t.jacobian;
    t.det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    // J^{-T}
    t.inverse_transpose = {{{J[1][1] / t.det, -J[1][0] / t.det}, {-J[0][1] / t.det, J[0][0] / t.det}}};
  }
  assemble();
}

FemSystem build_system(const PeriodicMesh& mesh) { return FemSystem(mesh); }

std::array<double, 2> FemSystem::position(const MeshTriangle& t,
                                          const std::array<double, 2>& ref) const {
  const double H = mesh_.spacing();
  const auto& J = types_[t.type].jacobian;
  return {t.i * H + J[0][0] * ref[0] + J[0][1] * ref[1],
          t.j * H + J[1][0] * ref[0] + J[1][1] * ref[1]};
}

std::array<std::array<double, 2>, 6> FemSystem::gradients(int type,
                                                          const std::array<double, 2>& ref) const {
  const auto g = p2_gradients(ref[0], ref[1]);
  const auto& T = types_[type].inverse_transpose;
  std::array<std::array<double, 2>, 6> out;
  for (int a = 0; a < 6; ++a) {
    out[a] = {T[0][0] * g[a][0] + T[0][1] * g[a][1], T[1][0] * g[a][0] + T[1][1] * g[a][1]};
  }
  return out;
}

SparseMatrix FemSystem::scatter(const std::vector<std::array<double, 36>>& local) const {
  SparseMatrix out = scalar_mass_;
  std::fill(out.valuePtr(), out.valuePtr() + out.nonZeros(), 0.0);
  double* v = out.valuePtr();
  for (std::size_t e = 0; e < local.size(); ++e) {
    const int* slot = element_slots_.data() + 36 * e;
    for (int m = 0; m < 36; ++m) v[slot[m]] += local[e][m];
  }
  return out;
}

void FemSystem::assemble() {
  const auto& tris = mesh_.triangles();
  const int ns = scalar_dofs_, np = pressure_dofs_;

  // Local matrices depend only on the element type.
  std::array<std::array<double, 36>, 2> mass_loc{}, stiff_loc{};
  std::array<std::array<double, 18>, 2> divx_loc{}, divy_loc{};
  std::array<std::array<double, 9>, 2> pmass_loc{}, pstiff_loc{};
  std::array<std::array<double, 6>, 2> vint_loc{};
  std::array<std::array<double, 3>, 2> pint_loc{};
  for (int type = 0; type < 2; ++type) {
    const double det = types_[type].det;
    for (std::size_t q = 0; q < rule_.points.size(); ++q) {
      const auto& p = rule_.points[q];
      const double w = rule_.weights[q] * det;
      const auto phi = p2_values(p[0], p[1]);
      const auto grad = gradients(type, p);
      const auto psi = p1_values(p[0], p[1]);
      for (int a = 0; a < 6; ++a) {
        vint_loc[type][a] += w * phi[a];
        for (int b = 0; b < 6; ++b) {
          mass_loc[type][6 * a + b] += w * phi[a] * phi[b];
          stiff_loc[type][6 * a + b] += w * (grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1]);
        }
      }
      for (int a = 0; a < 3; ++a) {
        pint_loc[type][a] += w * psi[a];
        for (int b = 0; b < 6; ++b) {
          divx_loc[type][6 * a + b] += w * psi[a] * grad[b][0];
          divy_loc[type][6 * a + b] += w * psi[a] * grad[b][1];
        }
        for (int b = 0; b < 3; ++b) pmass_loc[type][3 * a + b] += w * psi[a] * psi[b];
      }
    }
    const auto& T = types_[type].inverse_transpose;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        double s = 0.0;
        for (int r = 0; r < 2; ++r) {
          const double ga = T[r][0] * kP1Gradient[a][0] + T[r][1] * kP1Gradient[a][1];
          const double gb = T[r][0] * kP1Gradient[b][0] + T[r][1] * kP1Gradient[b][1];
          s += ga * gb;
        }
        pstiff_loc[type][3 * a + b] = 0.5 * det * s;
      }
    }
  }

  std::vector<Triplet> tm, ts, tb, tpm, tps;
  tm.reserve(36 * tris.size());
  ts.reserve(36 * tris.size());
  tb.reserve(36 * tris.size());
  Eigen::VectorXd vint = Eigen::VectorXd::Zero(ns);
  pressure_mean_ = Eigen::VectorXd::Zero(np);
  for (const auto& t : tris) {
    for (int a = 0; a < 6; ++a) {
      vint[t.nodes[a]] += vint_loc[t.type][a];
      for (int b = 0; b < 6; ++b) {
        tm.emplace_back(t.nodes[a], t.nodes[b], mass_loc[t.type][6 * a + b]);
        ts.emplace_back(t.nodes[a], t.nodes[b], stiff_loc[t.type][6 * a + b]);
      }
    }
    for (int a = 0; a < 3; ++a) {
      pressure_mean_[t.vertices[a]] += pint_loc[t.type][a];
      for (int b = 0; b < 6; ++b) {
        tb.emplace_back(t.vertices[a], t.nodes[b], divx_loc[t.type][6 * a + b]);
        tb.emplace_back(t.vertices[a], t.nodes[b] + ns, divy_loc[t.type][6 * a + b]);
      }
      for (int b = 0; b < 3; ++b) {
        tpm.emplace_back(t.vertices[a], t.vertices[b], pmass_loc[t.type][3 * a + b]);
        tps.emplace_back(t.vertices[a], t.vertices[b], pstiff_loc[t.type][3 * a + b]);
      }
    }
  }
  scalar_mass_.resize(ns, ns);
  scalar_mass_.setFromTriplets(tm.begin(), tm.end());
  scalar_stiffness_.resize(ns, ns);
  scalar_stiffness_.setFromTriplets(ts.begin(), ts.end());
  divergence_.resize(np, 2 * ns);
  divergence_.setFromTriplets(tb.begin(), tb.end());
  pressure_mass_.resize(np, np);
  pressure_mass_.setFromTriplets(tpm.begin(), tpm.end());
  pressure_stiffness_.resize(np, np);
  pressure_stiffness_.setFromTriplets(tps.begin(), tps.end());
  mass_ = block_diag(scalar_mass_);
  stiffness_ = block_diag(scalar_stiffness_);
  for (int c = 0; c < 2; ++c) {
    velocity_mean_[c] = Eigen::VectorXd::Zero(2 * ns);
    velocity_mean_[c].segment(c * ns, ns) = vint;
  }

  element_slots_.resize(36 * tris.size());
  for (std::size_t e = 0; e < tris.size(); ++e) {
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) {
        element_slots_[36 * e + 6 * a + b] = slot_of(scalar_mass_, tris[e].nodes[a], tris[e].nodes[b]);
      }
    }
  }

  scalar_mass_solver_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(scalar_mass_);
  if (scalar_mass_solver_->info() != Eigen::Success) {
    throw std::runtime_error("mass matrix factorization failed");
  }
}

SparseMatrix FemSystem::convection(const FemField& convecting) const {
  const auto& tris = mesh_.triangles();
  const int ns = scalar_dofs_;
  const auto& U = convecting.coeffs;
  if (U.size() != 2 * ns) throw std::invalid_argument("convecting field has the wrong size");
  // Reference values at the quadrature points, shared by all elements.
  const std::size_t nq = rule_.points.size();
  std::vector<std::array<double, 6>> phi(nq);
  std::array<std::vector<std::array<std::array<double, 2>, 6>>, 2> grad;
  for (std::size_t q = 0; q < nq; ++q) {
    phi[q] = p2_values(rule_.points[q][0], rule_.points[q][1]);
    for (int type = 0; type < 2; ++type) grad[type].push_back(gradients(type, rule_.points[q]));
  }
  std::vector<std::array<double, 36>> local(tris.size());
  for (std::size_t e = 0; e < tris.size(); ++e) {
    const auto& t = tris[e];
    const double det = types_[t.type].det;
    std::array<double, 6> ux, uy;
    for (int a = 0; a < 6; ++a) {
      ux[a] = U[t.nodes[a]];
      uy[a] = U[t.nodes[a] + ns];
    }
    auto& out = local[e];
    out.fill(0.0);
    for (std::size_t q = 0; q < nq; ++q) {
      const auto& f = phi[q];
      const auto& g = grad[t.type][q];
      double vx = 0, vy = 0, div = 0;
      for (int a = 0; a < 6; ++a) {
        vx += ux[a] * f[a];
        vy += uy[a] * f[a];
        div += ux[a] * g[a][0] + uy[a] * g[a][1];
      }
      const double w = rule_.weights[q] * det;
      for (int b = 0; b < 6; ++b) {
        const double col = w * (vx * g[b][0] + vy * g[b][1] + 0.5 * div * f[b]);
        for (int a = 0; a < 6; ++a) out[6 * a + b] += col * f[a];
      }
    }
  }
  return scatter(local);
}

Eigen::VectorXd FemSystem::load(const SpectralField& f) const {
  if (std::abs(f.grid().length() - mesh_.length()) > 1e-12 * mesh_.length()) {
    throw std::invalid_argument("spectral field and mesh have different domain lengths");
  }
  const int n = mesh_.subdivisions(), ns = scalar_dofs_;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * ns);
  const auto& tris = mesh_.triangles();
  for (int type = 0; type < 2; ++type) {
    const double det = types_[type].det;
    const auto& J = types_[type].jacobian;
    for (std::size_t q = 0; q < rule_.points.size(); ++q) {
      const auto& p = rule_.points[q];
      const double ox = J[0][0] * p[0] + J[0][1] * p[1];
      const double oy = J[1][0] * p[0] + J[1][1] * p[1];
      // All type-`type` elements see this quadrature point on a shifted lattice.
      const auto samples = sample_lattice(f, n, ox, oy);
      const auto phi = p2_values(p[0], p[1]);
      const double w = rule_.weights[q] * det;
      for (const auto& t : tris) {
        if (t.type != type) continue;
        const std::size_t m = static_cast<std::size_t>(t.i) * n + t.j;
        for (int a = 0; a < 6; ++a) {
          out[t.nodes[a]] += w * phi[a] * samples.x[m];
          out[t.nodes[a] + ns] += w * phi[a] * samples.y[m];
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd FemSystem::load(const VectorField& f) const {
  const int ns = scalar_dofs_;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * ns);
  for (const auto& t : mesh_.triangles()) {
    const double det = types_[t.type].det;
    for (std::size_t q = 0; q < fine_rule_.points.size(); ++q) {
      const auto& p = fine_rule_.points[q];
      const auto x = position(t, p);
      const auto v = f(x[0], x[1]);
      const auto phi = p2_values(p[0], p[1]);
      const double w = fine_rule_.weights[q] * det;
      for (int a = 0; a < 6; ++a) {
        out[t.nodes[a]] += w * phi[a] * v[0];
        out[t.nodes[a] + ns] += w * phi[a] * v[1];
      }
    }
  }
  return out;
}

Eigen::VectorXd FemSystem::pressure_load(const ScalarField& f) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(pressure_dofs_);
  for (const auto& t : mesh_.triangles()) {
    const double det = types_[t.type].det;
    for (std::size_t q = 0; q < fine_rule_.points.size(); ++q) {
      const auto& p = fine_rule_.points[q];
      const auto x = position(t, p);
      const double v = f(x[0], x[1]);
      const auto psi = p1_values(p[0], p[1]);
      const double w = fine_rule_.weights[q] * det;
      for (int a = 0; a < 3; ++a) out[t.vertices[a]] += w * psi[a] * v;
    }
  }
  return out;
}

Eigen::VectorXd FemSystem::solve_mass(const Eigen::VectorXd& load) const {
  const int ns = scalar_dofs_;
  if (load.size() != 2 * ns) throw std::invalid_argument("load vector has the wrong size");
  Eigen::VectorXd out(2 * ns);
  out.head(ns) = scalar_mass_solver_->solve(load.head(ns));
  out.tail(ns) = scalar_mass_solver_->solve(load.tail(ns));
  return out;
}

double FemSystem::l2_norm(const FemField& u) const {
  const int ns = scalar_dofs_;
  return std::sqrt(std::max(0.0, quad_form(scalar_mass_, u.coeffs.head(ns)) +
                                     quad_form(scalar_mass_, u.coeffs.tail(ns))));
}

double FemSystem::h1_seminorm(const FemField& u) const {
  const int ns = scalar_dofs_;
  return std::sqrt(std::max(0.0, quad_form(scalar_stiffness_, u.coeffs.head(ns)) +
                                     quad_form(scalar_stiffness_, u.coeffs.tail(ns))));
}

double FemSystem::l2_norm(const FemPressure& p) const {
  return std::sqrt(std::max(0.0, quad_form(pressure_mass_, p.coeffs)));
}

double FemSystem::gradient_norm(const FemPressure& p) const {
  return std::sqrt(std::max(0.0, quad_form(pressure_stiffness_, p.coeffs)));
}

double FemSystem::divergence_residual(const FemField& u) const {
  const double g = h1_seminorm(u);
  if (g == 0.0) return 0.0;
  const double psi = std::sqrt(pressure_mass_.diagonal().maxCoeff());
  return (divergence_ * u.coeffs).lpNorm<Eigen::Infinity>() / (g * psi);
}

double FemSystem::l2_error(const FemField& u, const VectorField& exact) const {
  const int ns = scalar_dofs_;
  double sum = 0.0;
  for (const auto& t : mesh_.triangles()) {
    const double det = types_[t.type].det;
    for (std::size_t q = 0; q < fine_rule_.points.size(); ++q) {
      const auto& p = fine_rule_.points[q];
      const auto x = position(t, p);
      const auto v = exact(x[0], x[1]);
      const auto phi = p2_values(p[0], p[1]);
      double ex = v[0], ey = v[1];
      for (int a = 0; a < 6; ++a) {
        ex -= u.coeffs[t.nodes[a]] * phi[a];
        ey -= u.coeffs[t.nodes[a] + ns] * phi[a];
      }
      sum += fine_rule_.weights[q] * det * (ex * ex + ey * ey);
    }
  }
  return std::sqrt(sum);
}

double FemSystem::h1_error(const FemField& u, const VectorGradient& exact_gradient) const {
  const int ns = scalar_dofs_;
  double sum = 0.0;
  for (const auto& t : mesh_.triangles()) {
    const double det = types_[t.type].det;
    for (std::size_t q = 0; q < fine_rule_.points.size(); ++q) {
      const auto& p = fine_rule_.points[q];
      const auto x = position(t, p);
      auto e = exact_gradient(x[0], x[1]);
      const auto g = gradients(t.type, p);
      for (int a = 0; a < 6; ++a) {
        const double cx = u.coeffs[t.nodes[a]], cy = u.coeffs[t.nodes[a] + ns];
        e[0] -= cx * g[a][0];
        e[1] -= cx * g[a][1];
        e[2] -= cy * g[a][0];
        e[3] -= cy * g[a][1];
      }
      sum += fine_rule_.weights[q] * det * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + e[3] * e[3]);
    }
  }
  return std::sqrt(sum);
}

double FemSystem::l2_error(const FemPressure& p, const ScalarField& exact) const {
  double sum = 0.0;
  for (const auto& t : mesh_.triangles()) {
    const double det = types_[t.type].det;
    for (std::size_t q = 0; q < fine_rule_.points.size(); ++q) {
      const auto& r = fine_rule_.points[q];
      const auto x = position(t, r);
      const auto psi = p1_values(r[0], r[1]);
      double e = exact(x[0], x[1]);
      for (int a = 0; a < 3; ++a) e -= p.coeffs[t.vertices[a]] * psi[a];
      sum += fine_rule_.weights[q] * det * e * e;
    }
  }
  return std::sqrt(sum);
}

// ---------------------------------------------------------------- saddle point

SaddlePointSolver::SaddlePointSolver(const FemSystem& sys)
    : scalar_dofs_(sys.scalar_dofs()), pressure_dofs_(sys.pressure_dofs()) {
  const int ns = scalar_dofs_, nv = 2 * ns, np = pressure_dofs_;
  const auto& pattern = sys.scalar_mass();
  std::vector<Triplet> t;
  t.reserve(2 * pattern.nonZeros() + 2 * sys.divergence().nonZeros() + 1);
  for (int c = 0; c < pattern.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(pattern, c); it; ++it) {
      t.emplace_back(static_cast<int>(it.row()), c, 0.0);
      t.emplace_back(static_cast<int>(it.row()) + ns, c + ns, 0.0);
    }
  }
  // Pressure dof 0 is pinned: its divergence row is implied by the others
  // (the rows of B sum to zero) and its column is dropped.
  const auto& B = sys.divergence();
  for (int c = 0; c < B.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(B, c); it; ++it) {
      if (it.row() == 0) continue;
      const int p = nv + static_cast<int>(it.row());
      t.emplace_back(c, p, -it.value());
      t.emplace_back(p, c, -it.value());
    }
  }
  t.emplace_back(nv, nv, 1.0);
  matrix_.resize(nv + np, nv + np);
  matrix_.setFromTriplets(t.begin(), t.end());
  matrix_.makeCompressed();

  slot_x_.resize(pattern.nonZeros());
  slot_y_.resize(pattern.nonZeros());
  int k = 0;
  for (int c = 0; c < pattern.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(pattern, c); it; ++it, ++k) {
      slot_x_[k] = slot_of(matrix_, static_cast<int>(it.row()), c);
      slot_y_[k] = slot_of(matrix_, static_cast<int>(it.row()) + ns, c + ns);
    }
  }
  border_ = Eigen::MatrixXd::Zero(nv + np, 2);
  border_.col(0).head(nv) = sys.velocity_mean(0);
  border_.col(1).head(nv) = sys.velocity_mean(1);
  pressure_weights_ = sys.pressure_mean();
}

void SaddlePointSolver::factorize(const SparseMatrix& scalar_block) {
  if (scalar_block.rows() != scalar_dofs_ || scalar_block.cols() != scalar_dofs_ ||
      scalar_block.nonZeros() != static_cast<Eigen::Index>(slot_x_.size()) ||
      !scalar_block.isCompressed()) {
    throw std::invalid_argument("velocity block does not have the scalar P2 pattern");
  }
  factorized_ = false;
  double* v = matrix_.valuePtr();
  const double* src = scalar_block.valuePtr();
  for (std::size_t k = 0; k < slot_x_.size(); ++k) {
    v[slot_x_[k]] = src[k];
    v[slot_y_[k]] = src[k];
  }
  if (!analyzed_) {
    lu_.analyzePattern(matrix_);
    analyzed_ = true;
  }
  lu_.factorize(matrix_);
  if (lu_.info() != Eigen::Success) {
    throw std::runtime_error("saddle-point factorization failed (singular or ill-posed system)");
  }
  // Velocity-mean multipliers by a 2 x 2 Schur complement.
  border_solved_ = lu_.solve(border_);
  schur_ = border_.transpose() * border_solved_;
  if (!(std::abs(schur_.determinant()) > 0.0)) throw std::runtime_error("singular mean constraint");
  factorized_ = true;
}

SaddleSolution SaddlePointSolver::solve(const Eigen::VectorXd& load) const {
  if (!factorized_) throw std::logic_error("saddle-point solver used before factorization");
  const int nv = 2 * scalar_dofs_;
  if (load.size() != nv) throw std::invalid_argument("load vector has the wrong size");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(matrix_.rows());
  rhs.head(nv) = load;
  Eigen::VectorXd x = lu_.solve(rhs);
  const Eigen::Vector2d mu = schur_.inverse() * (border_.transpose() * x);
  x -= border_solved_ * mu;
  SaddleSolution out;
  const double scale = std::max(rhs.lpNorm<Eigen::Infinity>(), 1e-300);
  out.residual = (matrix_ * x + border_ * mu - rhs).lpNorm<Eigen::Infinity>() / scale;
  if (!std::isfinite(out.residual)) throw std::runtime_error("saddle-point solve produced non-finite values");
  out.velocity = x.head(nv);
  out.pressure = x.segment(nv, pressure_dofs_);
  out.pressure.array() -= pressure_weights_.dot(out.pressure) / pressure_weights_.sum();
  return out;
}

// ---------------------------------------------------------------- projections

FemField project_qh0_from_load(const FemSystem& sys, const Eigen::VectorXd& load) {
  SaddlePointSolver* solver;
  {
    std::lock_guard<std::mutex> lock(sys.cache_->mutex);
    if (!sys.cache_->projector) {
      auto s = std::make_unique<SaddlePointSolver>(sys);
      s->factorize(sys.scalar_mass());
      sys.cache_->projector = std::move(s);
    }
    solver = sys.cache_->projector.get();
  }
  return {solver->solve(load).velocity};
}

FemField project_qh0(const FemSystem& sys, const FemField& z) {
  return project_qh0_from_load(sys, sys.mass() * z.coeffs);
}

FemField project_qh0(const FemSystem& sys, const SpectralField& z) {
  return project_qh0_from_load(sys, sys.load(z));
}

FemField project_qh0(const FemSystem& sys, const VectorField& z) {
  return project_qh0_from_load(sys, sys.load(z));
}

FemPressure project_ph0(const FemSystem& sys, const ScalarField& z) {
  const int np = sys.pressure_dofs();
  Eigen::SparseLU<SparseMatrix>* lu;
  {
    std::lock_guard<std::mutex> lock(sys.cache_->mutex);
    if (!sys.cache_->pressure_projector) {
      std::vector<Triplet> t;
      const auto& M = sys.pressure_mass();
      for (int c = 0; c < M.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(M, c); it; ++it) {
          t.emplace_back(static_cast<int>(it.row()), c, it.value());
        }
      }
      for (int a = 0; a < np; ++a) {
        t.emplace_back(a, np, sys.pressure_mean()[a]);
        t.emplace_back(np, a, sys.pressure_mean()[a]);
      }
      SparseMatrix bordered(np + 1, np + 1);
      bordered.setFromTriplets(t.begin(), t.end());
      auto solver = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
      solver->compute(bordered);
      if (solver->info() != Eigen::Success) throw std::runtime_error("pressure projection failed");
      sys.cache_->pressure_projector = std::move(solver);
    }
    lu = sys.cache_->pressure_projector.get();
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(np + 1);
  rhs.head(np) = sys.pressure_load(z);
  const Eigen::VectorXd x = lu->solve(rhs);
  return {x.head(np)};
}

FemField interp_from_spectral(const SpectralField& f, const FemSystem& sys) {
  const auto& mesh = sys.mesh();
  if (std::abs(f.grid().length() - mesh.length()) > 1e-12 * mesh.length()) {
    throw std::invalid_argument("spectral field and mesh have different domain lengths");
  }
  const int ns = sys.scalar_dofs();
  const auto s = sample_lattice(f, 2 * mesh.subdivisions(), 0.0, 0.0);
  FemField out{Eigen::VectorXd(2 * ns)};
  for (int m = 0; m < ns; ++m) {
    out.coeffs[m] = s.x[m];
    out.coeffs[m + ns] = s.y[m];
  }
  return out;
}

// ---------------------------------------------------------------- spectra

InfSupResult infsup_constant(const FemSystem& sys) {
  const int ns = sys.scalar_dofs(), np = sys.pressure_dofs();
  // Pinning node 0 makes the stiffness definite without changing solutions
  // for right-hand sides orthogonal to the constants, which B^T p always is.
  SparseMatrix pinned = sys.scalar_stiffness();
  pinned.coeffRef(0, 0) += 1.0;
  Eigen::SimplicialLDLT<SparseMatrix> S(pinned);
  if (S.info() != Eigen::Success) throw std::runtime_error("stiffness factorization failed");

  const SparseMatrix Bt = sys.divergence().transpose();
  const Eigen::MatrixXd BtDense = Eigen::MatrixXd(Bt);
  Eigen::MatrixXd X(2 * ns, np);
  X.topRows(ns) = S.solve(BtDense.topRows(ns));
  X.bottomRows(ns) = S.solve(BtDense.bottomRows(ns));
  Eigen::MatrixXd G = sys.divergence() * X;
  G = 0.5 * (G + G.transpose()).eval();
  const Eigen::MatrixXd Mp = Eigen::MatrixXd(sys.pressure_mass());
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(G, Mp);
  if (eig.info() != Eigen::Success) throw std::runtime_error("inf-sup eigensolve failed");
  const auto& values = eig.eigenvalues();
  // values(0) belongs to the constant pressure.
  if (np < 2 || !(values(1) > 1e-10 * values(np - 1))) {
    throw std::runtime_error("inf-sup eigenproblem has a spurious pressure mode");
  }
  InfSupResult out;
  out.beta = std::sqrt(values(1));
  out.pressure.coeffs = eig.eigenvectors().col(1);
  out.maximizer.coeffs = X * out.pressure.coeffs;
  // Remove the constant picked up by pinning; it carries no divergence.
  for (int c = 0; c < 2; ++c) {
    auto block = out.maximizer.coeffs.segment(c * ns, ns);
    const double mean = sys.velocity_mean(c).segment(c * ns, ns).dot(block) /
                        sys.velocity_mean(c).segment(c * ns, ns).sum();
    block.array() -= mean;
  }
  const double num = out.pressure.coeffs.dot(sys.divergence() * out.maximizer.coeffs);
  out.attained_ratio =
      std::abs(num) / (sys.h1_seminorm(out.maximizer) * sys.l2_norm(out.pressure));
  return out;
}

double laplacian_eigenvalue_near(const FemSystem& sys, double target) {
  const SparseMatrix& S = sys.scalar_stiffness();
  const SparseMatrix& M = sys.scalar_mass();
  const int n = sys.scalar_dofs();
  const int block = std::min(n, 8);
  SparseMatrix shifted = S - target * M;
  Eigen::SparseLU<SparseMatrix> lu(shifted);
  if (lu.info() != Eigen::Success) throw std::runtime_error("shifted Laplacian is singular");
  // Deterministic, generic start block.
  Eigen::MatrixXd X(n, block);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < block; ++c) X(i, c) = std::sin(0.37 * (i + 1) * (c + 1) + 0.11 * c);
  }
  double best = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    Eigen::MatrixXd Y = lu.solve(M * X);
    // M-orthonormalize through the Rayleigh-Ritz step.
    const Eigen::MatrixXd Ms = Y.transpose() * (M * Y);
    const Eigen::MatrixXd Ss = Y.transpose() * (S * Y);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ritz(0.5 * (Ss + Ss.transpose()),
                                                                    0.5 * (Ms + Ms.transpose()));
    X = Y * ritz.eigenvectors();
    int pick = 0;
    for (int c = 1; c < block; ++c) {
      if (std::abs(ritz.eigenvalues()(c) - target) < std::abs(ritz.eigenvalues()(pick) - target)) pick = c;
    }
    best = ritz.eigenvalues()(pick);
    if (std::abs(best - previous) <= 1e-14 * std::abs(best)) break;
    previous = best;
  }
  return best;
}

// ---------------------------------------------------------------- Taylor-Hood time step

FemStep algorithm1_step(const FemSystem& sys, SaddlePointSolver& solver, const FemField& u_prev,
                        const FemField& dW, double k, double nu) {
  if (!(k > 0.0) || !(nu > 0.0)) throw std::invalid_argument("step size and viscosity must be positive");
  const int ns = sys.scalar_dofs();
  if (u_prev.coeffs.size() != 2 * ns || dW.coeffs.size() != 2 * ns) {
    throw std::invalid_argument("field sizes do not match the system");
  }
  SparseMatrix K = sys.scalar_mass() + (k * nu) * sys.scalar_stiffness() + k * sys.convection(u_prev);
  K.makeCompressed();
  solver.factorize(K);
  const Eigen::VectorXd sum = u_prev.coeffs + dW.coeffs;
  Eigen::VectorXd rhs(2 * ns);
  rhs.head(ns) = sys.scalar_mass() * sum.head(ns);
  rhs.tail(ns) = sys.scalar_mass() * sum.tail(ns);
  auto sol = solver.solve(rhs);
  FemStep out;
  out.velocity.coeffs = std::move(sol.velocity);
  out.pressure.coeffs = sol.pressure / k;
  out.solver_residual = sol.residual;
  return out;
}

double fem_energy_residual(const FemSystem& sys, const FemField& u_prev, const FemField& u,
                           const FemField& dW, double k, double nu) {
  const FemField jump{u.coeffs - u_prev.coeffs};
  const double n_new = sys.l2_norm(u), n_old = sys.l2_norm(u_prev), j = sys.l2_norm(jump);
  const double g = sys.h1_seminorm(u);
  const int ns = sys.scalar_dofs();
  const double pairing = dW.coeffs.head(ns).dot(sys.scalar_mass() * u.coeffs.head(ns)) +
                         dW.coeffs.tail(ns).dot(sys.scalar_mass() * u.coeffs.tail(ns));
  return n_new * n_new - n_old * n_old + j * j + 2.0 * k * nu * g * g - 2.0 * pairing;
}

FemTrajectory run_full_scheme(const FemField& u0, const NoisePath& path, const FemSystem& sys,
                              int steps, double nu) {
  if (u0.coeffs.size() != sys.velocity_dofs()) throw std::invalid_argument("U0 does not match the system");
  const auto increments = increment_fields(path, steps);
  const double k = path.horizon() / steps;
  SaddlePointSolver solver(sys);
  FemTrajectory traj;
  traj.step = k;
  traj.velocities.reserve(steps + 1);
  traj.pressures.reserve(steps);
  traj.diagnostics.reserve(steps);
  traj.velocities.push_back(u0);
  double dissipation = 0.0;
  for (int l = 1; l <= steps; ++l) {
    const FemField dW{sys.solve_mass(sys.load(increments[l - 1]))};
    const FemField& prev = traj.velocities.back();
    FemStep step = [&] {
      try {
        return algorithm1_step(sys, solver, prev, dW, k, nu);
      } catch (const std::runtime_error& e) {
        throw SolverError("step " + std::to_string(l) + ": " + e.what(), l, 1,
                          std::numeric_limits<double>::infinity());
      }
    }();
    StepDiagnostics d;
    d.iterations = 1;
    d.energy_residual = fem_energy_residual(sys, prev, step.velocity, dW, k, nu);
    const double g = sys.h1_seminorm(step.velocity);
    d.v_norm_sq = g * g;
    dissipation += k * nu * g * g;
    d.dissipation_sum = dissipation;
    traj.diagnostics.push_back(d);
    traj.velocities.push_back(std::move(step.velocity));
    traj.pressures.push_back(std::move(step.pressure));
  }
  return traj;
}

}  // namespace snse
