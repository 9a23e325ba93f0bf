#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "snse/fem.hpp"
#include "snse/quadrature.hpp"
#include "test_util.hpp"

using namespace snse;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

// Smooth divergence-free field from psi = sin x sin 2y + cos 3x + 0.5 sin(x + y).
std::array<double, 2> smooth_u(double x, double y) {
  return {2 * std::sin(x) * std::cos(2 * y) + 0.5 * std::cos(x + y),
          -(std::cos(x) * std::sin(2 * y) - 3 * std::sin(3 * x) + 0.5 * std::cos(x + y))};
}

std::array<double, 4> smooth_grad(double x, double y) {
  return {2 * std::cos(x) * std::cos(2 * y) - 0.5 * std::sin(x + y),
          -4 * std::sin(x) * std::sin(2 * y) - 0.5 * std::sin(x + y),
          std::sin(x) * std::sin(2 * y) + 9 * std::cos(3 * x) + 0.5 * std::sin(x + y),
          -2 * std::cos(x) * std::cos(2 * y) + 0.5 * std::sin(x + y)};
}

double smooth_p(double x, double y) { return std::sin(x) * std::cos(y) + 0.3 * std::cos(2 * x); }

double order(double coarse, double fine) { return std::log2(coarse / fine); }

Eigen::VectorXd random_vector(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(gen);
  return v;
}

double integrate_monomial(const TriangleRule& r, int a, int b) {
  double s = 0;
  for (std::size_t q = 0; q < r.points.size(); ++q) {
    s += r.weights[q] * std::pow(r.points[q][0], a) * std::pow(r.points[q][1], b);
  }
  return s;
}

}  // namespace

TEST_CASE("collapsed Gauss rules integrate polynomials exactly") {
  for (int p = 2; p <= 6; ++p) {
    auto r = collapsed_gauss_rule(p);
    CHECK(r.degree == 2 * p - 2);
    for (int a = 0; a <= r.degree; ++a) {
      for (int b = 0; a + b <= r.degree; ++b) {
        const double exact = std::tgamma(a + 1) * std::tgamma(b + 1) / std::tgamma(a + b + 3);
        CHECK(integrate_monomial(r, a, b) == doctest::Approx(exact).epsilon(1e-13));
      }
    }
  }
  CHECK_THROWS(collapsed_gauss_rule(1));
  CHECK_THROWS(collapsed_gauss_rule(11));
}

TEST_CASE("P2 reference basis") {
  const std::array<std::array<double, 2>, 6> nodes{
      {{0, 0}, {1, 0}, {0, 1}, {0.5, 0}, {0.5, 0.5}, {0, 0.5}}};
  for (int i = 0; i < 6; ++i) {
    auto v = p2_values(nodes[i][0], nodes[i][1]);
    for (int j = 0; j < 6; ++j) CHECK(v[j] == doctest::Approx(i == j ? 1.0 : 0.0));
  }
  auto g = p2_gradients(0.3, 0.2);
  double sx = 0, sy = 0;
  for (auto& d : g) sx += d[0], sy += d[1];
  CHECK(std::abs(sx) < 1e-14);
  CHECK(std::abs(sy) < 1e-14);
}

TEST_CASE("periodic mesh") {
  for (int n : {2, 3, 8}) {
    PeriodicMesh m(kTwoPi, n);
    CHECK(m.triangle_count() == 2 * n * n);
    CHECK(m.vertex_count() == n * n);
    CHECK(m.euler_characteristic() == 0);
    CHECK(m.h() == doctest::Approx(kTwoPi * std::sqrt(2.0) / n));
  }
  CHECK_THROWS_AS(build_mesh(kTwoPi, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_mesh(0.0, 4), std::invalid_argument);
}

TEST_CASE("assembled operators") {
  auto sys = build_system(build_mesh(kTwoPi, 2));
  const int nv = sys.velocity_dofs(), ns = sys.scalar_dofs();
  CHECK(ns == 16);
  CHECK(sys.pressure_dofs() == 4);
  CHECK(sys.divergence().rows() == sys.pressure_dofs());
  CHECK(sys.divergence().cols() == nv);

  Eigen::VectorXd ones = Eigen::VectorXd::Ones(nv);
  CHECK((sys.stiffness() * ones).cwiseAbs().maxCoeff() < 1e-12);
  // partition of unity: the mass of the constant is L^2 per component
  CHECK(ones.dot(sys.mass() * ones) == doctest::Approx(2 * kTwoPi * kTwoPi).epsilon(1e-13));
  CHECK(sys.velocity_mean(0).sum() == doctest::Approx(kTwoPi * kTwoPi).epsilon(1e-13));
  CHECK(sys.pressure_mean().sum() == doctest::Approx(kTwoPi * kTwoPi).epsilon(1e-13));

  Eigen::MatrixXd m = sys.mass(), k = sys.stiffness();
  CHECK((m - m.transpose()).norm() < 1e-12 * m.norm());
  CHECK((k - k.transpose()).norm() < 1e-12 * k.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m), ek(k);
  CHECK(em.eigenvalues().minCoeff() > 0.0);
  // stiffness: only the two constant fields in the kernel
  CHECK(std::abs(ek.eigenvalues()[1]) < 1e-12 * ek.eigenvalues().maxCoeff());
  CHECK(ek.eigenvalues()[2] > 1e-3);

  // the divergence annihilates constants and pairs to zero with constant pressure
  CHECK((sys.divergence() * ones).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::VectorXd pones = Eigen::VectorXd::Ones(sys.pressure_dofs());
  CHECK((sys.divergence().transpose() * pones).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("discrete Laplacian eigenvalue converges at order at least 2") {
  double prev = 0.0;
  for (int n : {4, 8, 16}) {
    auto sys = build_system(build_mesh(kTwoPi, n));
    const double err = std::abs(laplacian_eigenvalue_near(sys, 1.0) - 1.0);
    if (prev > 0) CHECK(order(prev, err) >= 1.9);
    prev = err;
  }
}

TEST_CASE("convection operator is skew-symmetric") {
  auto sys = build_system(build_mesh(kTwoPi, 4));
  FemField u{random_vector(sys.velocity_dofs(), 3)};  // not divergence-free on purpose
  SparseMatrix n = sys.convection(u);
  SparseMatrix skew = SparseMatrix(n.transpose()) + n;
  CHECK(skew.norm() <= 1e-10 * n.norm());
  for (unsigned s = 0; s < 5; ++s) {
    Eigen::VectorXd phi = random_vector(sys.scalar_dofs(), 10 + s);
    CHECK(std::abs(phi.dot(n * phi)) <= 1e-10 * phi.squaredNorm() * n.norm());
  }
}

TEST_CASE("inf-sup constant") {
  std::vector<double> betas;
  for (int n : {4, 8, 16}) {
    auto sys = build_system(build_mesh(kTwoPi, n));
    auto r = infsup_constant(sys);
    CHECK(r.beta > 0.1);
    CHECK(r.attained_ratio == doctest::Approx(r.beta).epsilon(1e-8));
    betas.push_back(r.beta);
  }
  for (std::size_t i = 1; i < betas.size(); ++i) {
    CHECK(std::abs(betas[i] / betas[i - 1] - 1) < 0.2);
  }
}

TEST_CASE("projection onto discretely divergence-free fields") {
  SUBCASE("fixes elements of the subspace and is orthogonal") {
    auto sys = build_system(build_mesh(kTwoPi, 4));
    FemField z{random_vector(sys.velocity_dofs(), 5)};
    auto pz = project_qh0(sys, z);
    CHECK(sys.divergence_residual(pz) < 1e-10);
    CHECK(std::abs(sys.velocity_mean(0).dot(pz.coeffs)) < 1e-10 * pz.coeffs.norm());
    auto ppz = project_qh0(sys, pz);
    CHECK((ppz.coeffs - pz.coeffs).cwiseAbs().maxCoeff() < 1e-12 * pz.coeffs.cwiseAbs().maxCoeff());
    // (z - Qz, Phi) = 0 for Phi in the subspace
    auto phi = project_qh0(sys, FemField{random_vector(sys.velocity_dofs(), 6)});
    const double r = (z.coeffs - pz.coeffs).dot(sys.mass() * phi.coeffs);
    CHECK(std::abs(r) < 1e-10 * sys.l2_norm(z) * sys.l2_norm(phi));
    CHECK(sys.divergence_residual(z) > 1e-3);
  }

  SUBCASE("observed orders on smooth data") {
    double pl2 = 0, ph1 = 0, pp = 0;
    for (int n : {4, 8, 16}) {
      auto sys = build_system(build_mesh(kTwoPi, n));
      auto pz = project_qh0(sys, VectorField(smooth_u));
      const double el2 = sys.l2_error(pz, smooth_u);
      const double eh1 = sys.h1_error(pz, smooth_grad);
      const double ep = sys.l2_error(project_ph0(sys, smooth_p), smooth_p);
      if (pl2 > 0) {
        CHECK(order(pl2, el2) >= 1.9);
        CHECK(order(ph1, eh1) >= 0.9);
        CHECK(order(pp, ep) >= 0.9);
      }
      pl2 = el2, ph1 = eh1, pp = ep;
    }
  }
}

TEST_CASE("interpolation of spectral fields") {
  auto g = make_grid(kTwoPi, 3);
  SpectralField f(g);
  f[*g->index_of(1, 0)].y = cplx(0.5, 0.0);    // u_y = cos x
  f[*g->index_of(0, 2)].x = cplx(0.0, -0.25);  // u_x = 0.5 sin 2y
  auto exact = [](double x, double y) -> std::array<double, 2> {
    return {0.5 * std::sin(2 * y), std::cos(x)};
  };

  auto sys4 = build_system(build_mesh(kTwoPi, 4));
  CHECK(interp_from_spectral(SpectralField(g), sys4).coeffs.isZero());
  auto iv = interp_from_spectral(f, sys4);
  const int ns = sys4.scalar_dofs();
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) {
      const auto e = exact(a * kTwoPi / 8, b * kTwoPi / 8);
      CHECK(iv.coeffs[a * 8 + b] == doctest::Approx(e[0]).scale(1.0).epsilon(1e-14));
      CHECK(iv.coeffs[ns + a * 8 + b] == doctest::Approx(e[1]).scale(1.0).epsilon(1e-14));
    }
  }
  CHECK_THROWS(interp_from_spectral(SpectralField(make_grid(1.0, 3)), sys4));

  // n = 4 leaves four nodes per wavelength of sin 2y: not yet asymptotic
  double prev = 0;
  for (int n : {8, 16, 32}) {
    auto sys = build_system(build_mesh(kTwoPi, n));
    const double err = sys.l2_error(interp_from_spectral(f, sys), exact);
    if (prev > 0) CHECK(order(prev, err) >= 2.0);
    prev = err;
  }
}

TEST_CASE("algorithm 1 step") {
  SUBCASE("zero data") {
    auto sys = build_system(build_mesh(kTwoPi, 3));
    SaddlePointSolver solver(sys);
    FemField z{Eigen::VectorXd::Zero(sys.velocity_dofs())};
    auto s = algorithm1_step(sys, solver, z, z, 0.1, 1.0);
    CHECK(s.velocity.coeffs.isZero());
    CHECK(s.pressure.coeffs.isZero(1e-14));
  }

  SUBCASE("Stokes solve against a dense bordered system on n = 2") {
    auto sys = build_system(build_mesh(kTwoPi, 2));
    SaddlePointSolver solver(sys);
    const double k = 0.05, nu = 0.8;
    const int nv = sys.velocity_dofs(), np = sys.pressure_dofs();
    FemField zero{Eigen::VectorXd::Zero(nv)};
    FemField dw{random_vector(nv, 12)};
    auto s = algorithm1_step(sys, solver, zero, dw, k, nu);

    const int n = nv + np + 3;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    a.topLeftCorner(nv, nv) = Eigen::MatrixXd(sys.mass()) + k * nu * Eigen::MatrixXd(sys.stiffness());
    Eigen::MatrixXd b = sys.divergence();
    a.block(0, nv, nv, np) = -b.transpose();
    a.block(nv, 0, np, nv) = -b;
    for (int c = 0; c < 2; ++c) {
      a.block(0, nv + np + c, nv, 1) = sys.velocity_mean(c);
      a.block(nv + np + c, 0, 1, nv) = sys.velocity_mean(c).transpose();
    }
    a.block(nv, nv + np + 2, np, 1) = sys.pressure_mean();
    a.block(nv + np + 2, nv, 1, np) = sys.pressure_mean().transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs.head(nv) = sys.mass() * dw.coeffs;
    Eigen::VectorXd x = a.fullPivLu().solve(rhs);

    CHECK((s.velocity.coeffs - x.head(nv)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((s.pressure.coeffs - x.segment(nv, np) / k).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(s.solver_residual < 1e-12);
  }

  SUBCASE("divergence constraint and energy identity with convection") {
    auto sys = build_system(build_mesh(kTwoPi, 4));
    SaddlePointSolver solver(sys);
    const double k = 0.02, nu = 1.0;
    auto u = project_qh0(sys, VectorField(smooth_u));
    for (unsigned l = 0; l < 5; ++l) {
      FemField dw{0.1 * project_qh0(sys, FemField{random_vector(sys.velocity_dofs(), 40 + l)}).coeffs};
      auto s = algorithm1_step(sys, solver, u, dw, k, nu);
      CHECK(sys.divergence_residual(s.velocity) < 1e-10);
      const double scale = std::pow(sys.l2_norm(u), 2);
      CHECK(std::abs(fem_energy_residual(sys, u, s.velocity, dw, k, nu)) < 1e-10 * scale);
      u = s.velocity;
    }
  }
}

TEST_CASE("run_full_scheme") {
  auto sys = build_system(build_mesh(kTwoPi, 4));
  auto g = make_grid(kTwoPi, 4);

  SUBCASE("zero data") {
    auto path = sample_path(build_q(g, 0.0, 2.5), 8, 1.0, 1);
    auto tr = run_full_scheme(FemField{Eigen::VectorXd::Zero(sys.velocity_dofs())}, path, sys, 8, 1.0);
    CHECK(tr.velocities.size() == 9);
    CHECK(tr.pressures.size() == 8);
    for (const auto& v : tr.velocities) CHECK(v.coeffs.isZero());
  }

  SUBCASE("noisy run stays divergence-free and satisfies the energy identity") {
    auto path = sample_path(build_q(g, 1.0, 2.5), 16, 1.0, 4);
    auto u0 = project_qh0(sys, VectorField(smooth_u));
    auto a = run_full_scheme(u0, path, sys, 16, 1.0);
    auto b = run_full_scheme(u0, path, sys, 16, 1.0);
    for (std::size_t l = 0; l < a.velocities.size(); ++l) {
      CHECK(sys.divergence_residual(a.velocities[l]) < 1e-10);
      CHECK(a.velocities[l].coeffs == b.velocities[l].coeffs);
    }
    for (const auto& d : a.diagnostics) CHECK(std::abs(d.energy_residual) < 1e-9);
  }

  SUBCASE("size mismatch") {
    auto path = sample_path(build_q(g, 1.0, 2.5), 8, 1.0, 4);
    CHECK_THROWS(run_full_scheme(FemField{Eigen::VectorXd::Zero(3)}, path, sys, 8, 1.0));
  }
}
