#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "snse/harness.hpp"
#include "snse/rng.hpp"
#include "snse/time_scheme.hpp"
#include "test_util.hpp"

using namespace snse;
using snse::test::convolution_oracle;
using snse::test::random_field;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

double max_diff(const SpectralField& a, const SpectralField& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    d = std::max({d, std::abs(a[j].x - b[j].x), std::abs(a[j].y - b[j].y)});
  }
  return d;
}

SpectralField resolvent(SpectralField f, double k_nu) {
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double d = 1.0 / (1.0 + k_nu * f.grid().eigenvalue(j));
    f[j].x *= d;
    f[j].y *= d;
  }
  return f;
}

SpectralField shear_flow(const GridPtr& g, double amp) {
  SpectralField s(g);
  s[*g->index_of(0, 1)].x = cplx(0, -0.5 * amp);
  s[*g->index_of(0, 2)].x = cplx(0.2 * amp, 0.1 * amp);
  return s;
}

// Real coordinates (Re a_j, Im a_j) of the stream amplitudes.
Eigen::VectorXd coords(const SpectralField& f) {
  auto a = stream_amplitudes(f);
  Eigen::VectorXd v(2 * a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    v[2 * j] = a[j].real();
    v[2 * j + 1] = a[j].imag();
  }
  return v;
}

SpectralField from_coords(const GridPtr& g, const Eigen::VectorXd& v) {
  std::vector<cplx> a(g->pair_count());
  for (std::size_t j = 0; j < a.size(); ++j) a[j] = {v[2 * j], v[2 * j + 1]};
  return from_stream_amplitudes(g, a);
}

}  // namespace

TEST_CASE("scheme parameters") {
  SchemeParams p;
  CHECK_NOTHROW(p.validate());
  for (auto kind : {SchemeKind::FullyImplicit, SchemeKind::SemiImplicit, SchemeKind::OuExact}) {
    CHECK(scheme_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(scheme_kind_from_string("crank-nicolson"), std::invalid_argument);
  auto bad = p;
  bad.viscosity = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.tol_fp = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.horizon = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("implicit_step") {
  auto g = make_grid(kTwoPi, 8);
  SchemeParams p;
  p.steps = 10;
  const double k = p.step_size();

  SUBCASE("zero data") {
    SpectralField z(g);
    auto r = implicit_step(z, z, p);
    CHECK(r.state.is_zero());
  }

  SUBCASE("shear flow decays mode by mode") {
    auto s = shear_flow(g, 2.0);
    SpectralField z(g);
    auto r = implicit_step(s, z, p);
    CHECK(max_diff(r.state, resolvent(s, k)) < 1e-15);
    CHECK(r.iterations <= 2);
  }

  SUBCASE("three-mode oracle by direct iteration") {
    auto g1 = make_grid(kTwoPi, 1);
    auto u = 0.3 * random_field(g1, 5);
    auto dw = 0.1 * random_field(g1, 6);
    p.tol_fp = 1e-14;
    auto got = implicit_step(u, dw, p);
    // independent fixed point with the convolution-sum nonlinearity
    SpectralField v = u;
    for (int it = 0; it < 500; ++it) {
      SpectralField rhs = u + dw;
      rhs.add_scaled(-k, convolution_oracle(v, v));
      v = resolvent(rhs, k);
    }
    CHECK(max_diff(got.state, v) < 1e-12);
    CHECK(std::abs(energy_residual(u, got.state, dw, p)) < 10 * p.tol_fp);
  }

  SUBCASE("non-convergence is reported") {
    auto u = 1e4 * random_field(g, 3, 0.0);
    SpectralField z(g);
    p.max_iter = 5;
    CHECK_THROWS_AS(implicit_step(u, z, p), SolverError);
  }
}

TEST_CASE("semi_implicit_step") {
  auto g = make_grid(kTwoPi, 8);
  SchemeParams p;
  p.steps = 20;
  p.kind = SchemeKind::SemiImplicit;
  const double k = p.step_size();

  SUBCASE("no convecting velocity: one linear solve") {
    SpectralField z(g);
    auto dw = random_field(g, 4);
    CHECK(max_diff(semi_implicit_step(z, dw, p).state, resolvent(dw, k)) == 0.0);
  }

  SUBCASE("shear flow agrees with the implicit step") {
    auto s = shear_flow(g, 1.0);
    SpectralField z(g);
    CHECK(max_diff(semi_implicit_step(s, z, p).state, implicit_step(s, z, p).state) < 1e-15);
  }

  SUBCASE("three-mode dense solve") {
    auto g1 = make_grid(kTwoPi, 1);
    auto u = 0.5 * random_field(g1, 8);
    auto dw = 0.2 * random_field(g1, 9);
    p.tol_fp = 1e-14;
    const int n = 2 * static_cast<int>(g1->pair_count());
    Eigen::MatrixXd m(n, n);
    for (int c = 0; c < n; ++c) {
      Eigen::VectorXd e = Eigen::VectorXd::Unit(n, c);
      auto v = from_coords(g1, e);
      SpectralField img = v + k * apply_stokes_power(v, 1.0);
      img.add_scaled(k, convolution_oracle(u, v));
      m.col(c) = coords(img);
    }
    Eigen::VectorXd x = m.partialPivLu().solve(coords(u + dw));
    auto got = semi_implicit_step(u, dw, p);
    CHECK((coords(got.state) - x).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("run_scheme") {
  auto g = make_grid(kTwoPi, 8);
  SchemeParams p;
  p.steps = 32;

  SUBCASE("zero data stays zero") {
    auto path = sample_path(build_q(g, 0.0, 2.5), 32, 1.0, 1);
    auto tr = run_scheme(SpectralField(g), path, p);
    CHECK(tr.states.size() == 33);
    CHECK(tr.diagnostics.size() == 32);
    for (const auto& s : tr.states) CHECK(s.is_zero());
  }

  SUBCASE("overdamped decay without noise") {
    auto path = sample_path(build_q(g, 0.0, 2.5), 32, 1.0, 1);
    p.viscosity = 5.0;
    auto tr = run_scheme(random_field(g, 2), path, p);
    for (std::size_t l = 1; l < tr.states.size(); ++l) {
      CHECK(sobolev_norm(tr.states[l], 1.0) < sobolev_norm(tr.states[l - 1], 1.0));
    }
  }

  SUBCASE("deterministic, divergence-free, energy identity") {
    auto path = sample_path(build_q(g, 1.0, 2.5), 64, 1.0, 7);
    auto u0 = random_field(g, 3);
    for (auto kind : {SchemeKind::FullyImplicit, SchemeKind::SemiImplicit}) {
      p.kind = kind;
      auto a = run_scheme(u0, path, p), b = run_scheme(u0, path, p);
      for (std::size_t l = 0; l < a.states.size(); ++l) {
        CHECK(a.states[l] == b.states[l]);
        CHECK(a.states[l].is_divergence_free());
      }
      for (const auto& d : a.diagnostics) CHECK(std::abs(d.energy_residual) <= 10 * p.tol_fp);
      const double a_end = sobolev_norm(a.states.back(), 1.0);
      CHECK(a.diagnostics.back().v_norm_sq == doctest::Approx(a_end * a_end));
    }
  }

  SUBCASE("step failures carry the step index") {
    auto path = sample_path(build_q(g, 0.0, 2.5), 4, 1.0, 1);
    p.steps = 4;
    p.max_iter = 3;
    try {
      run_scheme(1e4 * random_field(g, 3, 0.0), path, p);
      FAIL("expected a solver failure");
    } catch (const SolverError& e) {
      CHECK(e.step() == 1);
      CHECK(e.iterations() == 3);
    }
  }

  SUBCASE("steps must divide the fine grid") {
    auto path = sample_path(build_q(g, 1.0, 2.5), 16, 1.0, 1);
    p.steps = 3;
    CHECK_THROWS(run_scheme(SpectralField(g), path, p));
  }
}

TEST_CASE("ou_exact_trajectory") {
  auto g = make_grid(kTwoPi, 4);
  SchemeParams p;
  p.kind = SchemeKind::OuExact;
  p.advection = false;
  p.viscosity = 0.7;

  SUBCASE("heat decay without noise") {
    p.steps = 8;
    auto path = sample_path(build_q(g, 0.0, 2.5), 16, 2.0, 1);
    p.horizon = 2.0;
    auto u0 = random_field(g, 4);
    auto tr = run_scheme(u0, path, p);
    for (int l = 0; l <= 8; ++l) {
      const double t = l * 0.25;
      for (std::size_t j = 0; j < g->pair_count(); ++j) {
        const double f = std::exp(-p.viscosity * g->eigenvalue(j) * t);
        CHECK(std::abs(tr.states[l][j].x - f * u0[j].x) <= 1e-14 * std::abs(u0[j].x) + 1e-300);
      }
    }
  }

  SUBCASE("marginal variance, including the stationary regime") {
    const double t = 6.0;
    p.horizon = t;
    p.steps = 2;
    auto q = build_q(g, 1.0, 2.5);
    const int reps = 3000;
    std::vector<std::vector<double>> mid(g->pair_count()), end(g->pair_count());
    for (int r = 0; r < reps; ++r) {
      auto path = sample_path(q, 4, t, mix_seed(3, r));
      auto tr = ou_exact_trajectory(SpectralField(g), path, p);
      const auto amp1 = stream_amplitudes(tr.states[1]);
      const auto amp2 = stream_amplitudes(tr.states[2]);
      for (std::size_t j = 0; j < g->pair_count(); ++j) {
        // cos coordinate sqrt(2) L Re(a)
        mid[j].push_back(std::sqrt(2.0) * g->length() * amp1[j].real());
        end[j].push_back(std::sqrt(2.0) * g->length() * amp2[j].real());
      }
    }
    for (std::size_t j = 0; j < g->pair_count(); ++j) {
      const double lam = g->eigenvalue(j);
      for (auto [samples, time] : {std::pair{&mid[j], t / 2}, std::pair{&end[j], t}}) {
        double ss = 0;
        for (double x : *samples) ss += x * x;
        const double exact = ou_variance(q.variance[j], p.viscosity, lam, time);
        CHECK(std::abs(ss / reps - exact) < 5 * exact * std::sqrt(2.0 / reps));
      }
      const double stationary = q.variance[j] / (2 * p.viscosity * lam);
      CHECK(ou_variance(q.variance[j], p.viscosity, lam, t) ==
            doctest::Approx(stationary).epsilon(1e-3));
    }
  }
}
