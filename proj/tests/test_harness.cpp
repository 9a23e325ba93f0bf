#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "snse/harness.hpp"
#include "snse/rng.hpp"
#include "test_util.hpp"

using namespace snse;
using snse::test::random_field;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

SpectralField single_mode(const GridPtr& g, int k1, int k2, cplx amp) {
  std::vector<cplx> a(g->pair_count(), 0.0);
  a[*g->index_of(k1, k2)] = amp;
  return from_stream_amplitudes(g, a);
}

SchemeParams params(int steps, SchemeKind kind, bool advection = true, double nu = 1.0) {
  SchemeParams p;
  p.steps = steps;
  p.kind = kind;
  p.advection = advection;
  p.viscosity = nu;
  return p;
}

ConditionInputs base_inputs() {
  ConditionInputs in;
  in.nu = 1.0;
  in.horizon = 1.0;
  in.cbar = 2.0;
  in.sigma = 1.0;
  in.trace_q = 0.01;
  in.k0 = 0.05;
  in.mu = 0.5;
  return in;
}

}  // namespace

TEST_CASE("mean_ci") {
  std::vector<double> v{1.0, 2.0, 3.0};
  auto ci = mean_ci(v);
  CHECK(ci.mean == 2.0);
  CHECK(ci.half_width == doctest::Approx(1.96 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(ci.count == 3);
  std::vector<double> one{4.0};
  CHECK(mean_ci(one).half_width == 0.0);
}

TEST_CASE("fit_rate") {
  SUBCASE("exact power laws") {
    std::vector<RatePoint> pts;
    for (double k : {0.5, 0.25, 0.125, 0.0625}) pts.push_back({k, 3.0 * std::pow(k, 2.0), 1.0});
    auto f = fit_rate(pts);
    CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::exp(f.intercept) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.points == 4);

    for (auto& p : pts) p.value = 7.0;
    CHECK(std::abs(fit_rate(pts).slope) < 1e-12);
  }

  SUBCASE("noisy slope-1 data") {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> nd(0.0, 0.01);
    std::vector<RatePoint> pts;
    for (int i = 0; i < 100; ++i) {
      const double k = std::pow(2.0, -i / 10.0);
      pts.push_back({k, k * (1 + nd(gen)), 1.0});
    }
    auto f = fit_rate(pts);
    CHECK(f.slope >= 0.98);
    CHECK(f.slope <= 1.02);
    CHECK(f.slope_stderr > 0.0);
  }

  SUBCASE("unusable points") {
    std::vector<RatePoint> pts{{1, 1, 1}, {0.5, 0.25, 1}, {0.25, 0.0, 1}, {-1, 1, 1}};
    CHECK_THROWS_AS(fit_rate(pts), std::invalid_argument);
    pts.push_back({0.125, 0.125 * 0.125, 1});
    CHECK(fit_rate(pts).slope == doctest::Approx(2.0));
  }
}

TEST_CASE("build_rate_report") {
  std::vector<int> levels{8, 16, 32, 64};
  std::vector<double> scales{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  std::vector<std::vector<ErrorSample>> samples(4);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> ud(0.9, 1.1);
  for (int i = 0; i < 4; ++i) {
    for (int r = 0; r < 40; ++r) {
      ErrorSample s;
      s.max_l2_sq = scales[i] * ud(gen);
      s.dissipation = scales[i] * scales[i] * ud(gen);
      samples[i].push_back(s);
    }
  }

  SUBCASE("slopes and counts") {
    auto rep = build_rate_report("N", levels, scales, samples);
    REQUIRE(rep.fit_l2);
    REQUIRE(rep.fit_v);
    CHECK(rep.fit_l2->slope == doctest::Approx(1.0).epsilon(0.02));
    CHECK(rep.fit_v->slope == doctest::Approx(2.0).epsilon(0.02));
    REQUIRE(rep.slope_without_coarsest);
    CHECK(std::abs(*rep.slope_without_coarsest - rep.fit_l2->slope) < 0.1);
    for (const auto& row : rep.rows) {
      CHECK(row.replicates == 40);
      CHECK(row.invalid == 0);
      CHECK_FALSE(row.aborted);
    }
  }

  SUBCASE("invalid replicates are counted and abort above 10%") {
    for (int r = 0; r < 4; ++r) samples[1][r].valid = false;   // exactly 10%
    for (int r = 0; r < 5; ++r) samples[2][r].valid = false;   // above
    samples[1][0].max_l2_sq = 1e9;  // excluded from the mean
    auto rep = build_rate_report("N", levels, scales, samples);
    CHECK(rep.rows[1].invalid == 4);
    CHECK_FALSE(rep.rows[1].aborted);
    CHECK(rep.rows[1].l2.count == 36);
    CHECK(rep.rows[1].l2.mean < 1.0);
    CHECK(rep.rows[2].aborted);
  }

  SUBCASE("rows with wide intervals are left out of the fit") {
    std::vector<RateRow> rows(4);
    for (int i = 0; i < 4; ++i) {
      rows[i].scale = scales[i];
      rows[i].l2 = {scales[i], 0.01 * scales[i], 10};
    }
    rows[0].l2 = {100.0, 50.0, 10};  // 50% half-width: excluded
    auto f = fit_report_rows(rows, false);
    REQUIRE(f);
    CHECK(f->points == 3);
    CHECK(f->slope == doctest::Approx(1.0).epsilon(1e-12));
    rows[1].l2.half_width = rows[1].l2.mean;
    CHECK_FALSE(fit_report_rows(rows, false).has_value());
  }
}

TEST_CASE("strong_error") {
  auto g = make_grid(kTwoPi, 6);
  auto path = sample_path(build_q(g, 1.0, 2.5), 32, 1.0, 3);
  auto u0 = random_field(g, 1);
  auto ref = run_scheme(u0, path, params(32, SchemeKind::FullyImplicit));

  SUBCASE("identical trajectories") {
    auto e = strong_error(ref, ref, 1.0);
    CHECK(e.max_l2_sq == 0.0);
    CHECK(e.dissipation == 0.0);
  }

  SUBCASE("the reference subsampled at half resolution") {
    Trajectory half = ref;
    half.params.steps = 16;
    half.states.clear();
    for (int l = 0; l <= 32; l += 2) half.states.push_back(ref.states[l]);
    auto e = strong_error(ref, half, 1.0);
    CHECK(e.max_l2_sq == 0.0);
    CHECK(e.dissipation == 0.0);
  }

  SUBCASE("coupled coarse run has a positive error") {
    auto coarse = run_scheme(u0, path, params(8, SchemeKind::FullyImplicit));
    auto e = strong_error(ref, coarse, 1.0);
    CHECK(e.max_l2_sq > 0.0);
    CHECK(e.dissipation > 0.0);
  }

  SUBCASE("time-grid mismatch") {
    Trajectory odd = ref;
    odd.params.steps = 12;
    odd.states.erase(odd.states.begin() + 13, odd.states.end());
    CHECK_THROWS(strong_error(ref, odd, 1.0));
    Trajectory longer = ref;
    longer.params.horizon = 2.0;
    CHECK_THROWS(strong_error(ref, longer, 1.0));
  }
}

TEST_CASE("OU oracles") {
  SUBCASE("one-step scalar moments in closed form") {
    const double a = 3.0, q = 0.7, x0 = 1.3, T = 0.2;
    auto m = ou_scalar_error_moments(a, q, x0, T, 1);
    const double k = T, r = 1 / (1 + a * k);
    const double var_i = -std::expm1(-2 * a * k) / (2 * a);
    const double cov = -std::expm1(-a * k) / a;
    const double expected = std::pow(std::exp(-a * k) - r, 2) * x0 * x0 + q * (var_i - 2 * r * cov + r * r * k);
    REQUIRE(m.mean_sq.size() == 2);
    CHECK(m.mean_sq[0] == 0.0);
    CHECK(m.mean_sq[1] == doctest::Approx(expected).epsilon(1e-13));
  }

  SUBCASE("deterministic decay error in closed form") {
    const double a = 2.0, x0 = 0.5, T = 1.0;
    const int n = 10;
    auto m = ou_scalar_error_moments(a, 0.0, x0, T, n);
    const double k = T / n;
    for (int l = 0; l <= n; ++l) {
      const double e = x0 * (std::exp(-a * k * l) - std::pow(1 + a * k, -l));
      CHECK(m.mean_sq[l] == doctest::Approx(e * e).epsilon(1e-12));
    }
  }

  SUBCASE("pathwise brute force equals the field computation") {
    auto g = make_grid(kTwoPi, 4);
    auto q = build_q(g, 1.0, 2.5);
    auto u0 = random_field(g, 7);
    for (std::uint64_t s = 0; s < 4; ++s) {
      auto path = sample_path(q, 64, 1.0, mix_seed(5, s));
      for (int n : {8, 16, 64}) {
        auto exact = run_scheme(u0, path, params(n, SchemeKind::OuExact, false));
        auto scheme = run_scheme(u0, path, params(n, SchemeKind::FullyImplicit, false));
        auto field = strong_error(exact, scheme, 1.0);
        auto brute = ou_bruteforce_error(u0, path, 1.0, n);
        CHECK(brute.max_l2_sq == doctest::Approx(field.max_l2_sq).epsilon(1e-12));
        CHECK(brute.dissipation == doctest::Approx(field.dissipation).epsilon(1e-12));
      }
    }
  }

  SUBCASE("Monte Carlo errors agree with the moment oracle") {
    auto g = make_grid(kTwoPi, 3);
    auto q = build_q(g, 1.0, 2.5);
    SpectralField u0(g);
    const int n = 8, reps = 1500;
    std::vector<double> l2_end, diss;
    for (int s = 0; s < reps; ++s) {
      auto path = sample_path(q, n, 1.0, mix_seed(11, s));
      auto exact = run_scheme(u0, path, params(n, SchemeKind::OuExact, false));
      auto scheme = run_scheme(u0, path, params(n, SchemeKind::FullyImplicit, false));
      l2_end.push_back(std::pow(sobolev_norm(exact.states.back() - scheme.states.back(), 0.0), 2));
      diss.push_back(strong_error(exact, scheme, 1.0).dissipation);
    }
    auto oracle = ou_field_error_moments(u0, q, 1.0, 1.0, n);
    auto c1 = mean_ci(l2_end), c2 = mean_ci(diss);
    CHECK(std::abs(c1.mean - oracle.l2_sq.back()) < 5 * c1.half_width / 1.96);
    CHECK(std::abs(c2.mean - oracle.dissipation) < 5 * c2.half_width / 1.96);
  }

  SUBCASE("oracle error decreases with N") {
    auto g = make_grid(kTwoPi, 4);
    auto q = build_q(g, 1.0, 2.5);
    auto u0 = random_field(g, 2);
    double prev = 1e300;
    for (int n : {4, 8, 16, 32, 64}) {
      auto m = ou_field_error_moments(u0, q, 1.0, 1.0, n);
      CHECK(m.max_l2_sq < prev);
      prev = m.max_l2_sq;
    }
  }
}

TEST_CASE("moment functionals") {
  auto g = make_grid(kTwoPi, 4);
  auto zero_path = sample_path(build_q(g, 0.0, 2.5), 16, 1.0, 1);

  SUBCASE("zero data") {
    auto tr = run_scheme(SpectralField(g), zero_path, params(16, SchemeKind::FullyImplicit));
    for (double v : trajectory_functionals(tr, 2.0, true)) CHECK(v == 0.0);
  }

  SUBCASE("decaying single mode in closed form") {
    auto u0 = single_mode(g, 2, 1, cplx(0.3, -0.1));
    const double lam = 5.0, nu = 0.5, k = 1.0 / 16;
    auto tr = run_scheme(u0, zero_path, params(16, SchemeKind::FullyImplicit, true, nu));
    auto f = trajectory_functionals(tr, 2.0, true);
    const double v0 = std::pow(sobolev_norm(u0, 1.0), 2);
    const double r = 1 / (1 + k * nu * lam);
    double diss = 0, incr = 0;
    for (int l = 1; l <= 16; ++l) {
      diss += nu * k * lam * v0 * std::pow(r, 2 * l);
      incr += v0 * std::pow(std::pow(r, l) - std::pow(r, l - 1), 2);
    }
    auto names = trajectory_functional_names();
    CHECK(names[0] == "sup_V");
    CHECK(f[0] == doctest::Approx(v0).epsilon(1e-13));
    CHECK(f[1] == doctest::Approx(diss).epsilon(1e-12));
    CHECK(f[3] == doctest::Approx(incr * incr).epsilon(1e-12));
    CHECK(f[5] < 1e-28);
  }

  SUBCASE("column means") {
    std::vector<std::vector<double>> reps{{1, 10}, {3, 30}};
    auto est = moment_estimates(reps, {"a", "b"});
    CHECK(est[0].estimate.mean == 2.0);
    CHECK(est[1].name == "b");
    CHECK(est[1].estimate.mean == 20.0);
  }
}

TEST_CASE("exponential moments") {
  std::vector<double> v{0.1, 0.4, 0.2, 0.3, 0.25};
  auto z = exp_moment_estimate(v, 0.0);
  CHECK(z.log_mean == 0.0);
  CHECK(z.mean == 1.0);

  auto e = exp_moment_estimate(v, 0.7);
  double naive = 0;
  for (double x : v) naive += std::exp(0.7 * x);
  naive /= v.size();
  CHECK(e.mean == doctest::Approx(naive).epsilon(1e-12));
  CHECK_FALSE(e.unstable);

  std::vector<double> heavy{0.0, 0.0, 0.0, 1e6};
  auto h = exp_moment_estimate(heavy, 1.0);
  CHECK(std::isfinite(h.log_mean));
  CHECK(h.log_mean == doctest::Approx(1e6 - std::log(4.0)));
  CHECK(h.unstable);
  CHECK(h.largest_share == doctest::Approx(1.0));
  CHECK_THROWS(exp_moment_estimate(std::span<const double>{}, 1.0));

  SUBCASE("sup functionals") {
    auto g = make_grid(kTwoPi, 4);
    auto path = sample_path(build_q(g, 0.0, 2.5), 8, 1.0, 1);
    auto u0 = single_mode(g, 1, 0, cplx(0.4, 0));
    auto tr = run_scheme(u0, path, params(8, SchemeKind::FullyImplicit));
    CHECK(sup_v_functional(tr) == doctest::Approx(std::pow(sobolev_norm(u0, 1.0), 2)));
    CHECK(sup_v_dissipation_functional(tr) >= sup_v_functional(tr) * (1 - 1e-15));
  }
}

TEST_CASE("time regularity") {
  auto g = make_grid(kTwoPi, 4);

  SUBCASE("smooth deterministic path has exponent 2") {
    auto path = sample_path(build_q(g, 0.0, 2.5), 256, 1.0, 1);
    auto tr = run_scheme(single_mode(g, 1, 0, 1.0), path, params(256, SchemeKind::OuExact, false, 0.05));
    auto rep = time_regularity_l2({tr}, 6);
    REQUIRE(rep.fit_l2);
    CHECK(rep.fit_l2->slope == doctest::Approx(2.0).epsilon(0.01));
  }

  SUBCASE("OU paths match the closed-form increment moments") {
    auto q = build_q(g, 1.0, 2.5);
    const int n = 128, reps = 200, levels = 6;
    const double nu = 1.0, T = 1.0, k = T / n;
    std::vector<Trajectory> trajs;
    for (int r = 0; r < reps; ++r) {
      auto path = sample_path(q, n, T, mix_seed(21, r));
      trajs.push_back(run_scheme(SpectralField(g), path, params(n, SchemeKind::OuExact, false, nu)));
    }
    auto rep = time_regularity_l2(trajs, levels);
    REQUIRE(rep.fit_l2);
    std::vector<RatePoint> exact;
    for (int j = 0; j < levels; ++j) {
      const int m = 1 << j;
      const double tau = m * k;
      double s = 0;
      for (int l = 0; l + m <= n; ++l) {
        for (std::size_t p = 0; p < g->pair_count(); ++p) {
          const double lam = g->eigenvalue(p), a = nu * lam;
          const double damp = -std::expm1(-a * tau);
          s += 2 * (damp * damp * ou_variance(q.variance[p], nu, lam, l * k) +
                    ou_variance(q.variance[p], nu, lam, tau));
        }
      }
      exact.push_back({tau, s / (n - m + 1), 1.0});
      CHECK(std::abs(rep.rows[j].l2.mean - s / (n - m + 1)) < 5 * rep.rows[j].l2.half_width / 1.96);
    }
    CHECK(std::abs(rep.fit_l2->slope - fit_rate(exact).slope) < 0.15);
  }

  SUBCASE("V functional on a noisy path") {
    auto path = sample_path(build_q(g, 0.1, 2.5), 64, 1.0, 2);
    auto tr = run_scheme(SpectralField(g), path, params(64, SchemeKind::FullyImplicit));
    auto rep = time_regularity_v({tr}, 4);
    CHECK(rep.rows.size() == 4);
    CHECK(rep.rows[0].level == 64);
    CHECK(rep.rows[0].scale == doctest::Approx(1.0 / 64));
    CHECK(rep.rows[0].l2.mean > 0.0);
    CHECK_THROWS(time_regularity_v({tr}, 8));
  }
}

TEST_CASE("constant estimates") {
  SUBCASE("single mode ratios in closed form") {
    auto g = make_grid(kTwoPi, 4);
    auto u = single_mode(g, 1, 0, 1.0);  // u = c (0, cos x)
    CHECK(cbar_ratio(u) == doctest::Approx(std::sqrt(1.5) / kTwoPi).epsilon(1e-12));
    CHECK(sigma_ratio(u) == doctest::Approx(1 / (std::numbers::pi * std::sqrt(2.0))).epsilon(1e-12));
  }

  SUBCASE("running maxima and nested cutoffs") {
    auto a = estimate_constants(make_grid(kTwoPi, 4), 200, 9);
    auto b = estimate_constants(make_grid(kTwoPi, 8), 200, 9);
    CHECK(std::is_sorted(a.cbar_history.begin(), a.cbar_history.end()));
    CHECK(std::is_sorted(a.sigma_history.begin(), a.sigma_history.end()));
    CHECK(a.cbar >= a.cbar_history.back());
    CHECK(b.cbar >= a.cbar);
    CHECK(b.sigma >= a.sigma);
    CHECK(a.cbar >= std::sqrt(1.5) / kTwoPi);
  }
}

TEST_CASE("condition checker") {
  SUBCASE("threshold arithmetic") {
    CHECK(threshold_implicit_rate(1, 1, 2) == 0.5);
    CHECK(threshold_fem_rate(1, 1, 2, 1) == doctest::Approx(1.0 / 26).epsilon(1e-15));
    CHECK(threshold_divfree_rate(1, 1, 2) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(threshold_implicit_rate(2, 3, 0.5) == doctest::Approx(2 * 4 / (0.25 * 3)).epsilon(1e-15));
  }

  SUBCASE("derived exponents and gamma0 thresholds") {
    auto in = base_inputs();
    in.trace_q = 0.25;
    in.gamma0 = 2.0;
    auto rep = check_conditions(in);
    CHECK(rep.alpha0 == 4.0);
    CHECK(rep.beta0 == doctest::Approx(4.0 * 2 / 6));
    CHECK(rep.beta1 == doctest::Approx(4.0 * 2 / 8));
    for (const auto& r : rep.rows) {
      if (r.theorem == "5.1" && r.quantity == "gamma0") CHECK(r.threshold == doctest::Approx(4.0));
      if (r.theorem == "5.2" && r.quantity == "gamma0") CHECK(r.threshold == doctest::Approx(13.0 * 6 / 2));
      if (r.theorem == "5.3" && r.quantity == "gamma0") CHECK(r.threshold == doctest::Approx(10.0));
      if (r.theorem == "5.1" && r.quantity == "Tr(Q)") CHECK(r.threshold == doctest::Approx(0.25));
    }
    CHECK(rep.passes("3.3"));
    CHECK_FALSE(rep.passes("5.1"));
  }

  SUBCASE("strict inequality at the threshold") {
    auto in = base_inputs();
    in.trace_q = 0.5;
    auto rep = check_conditions(in);
    CHECK_FALSE(rep.passes("3.3"));
    in.trace_q = std::nextafter(0.5, 0.0);
    CHECK(check_conditions(in).passes("3.3"));
  }

  SUBCASE("vanishing noise passes everything") {
    auto in = base_inputs();
    in.trace_q = 0.0;
    auto rep = check_conditions(in);
    CHECK(std::isinf(rep.alpha0));
    for (const auto& r : rep.rows) CHECK(r.pass);
    in.trace_q = 1e-12;
    for (const auto& r : check_conditions(in).rows) CHECK(r.pass);
  }

  SUBCASE("monotone in Tr(Q) and gamma0") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 500; ++t) {
      auto in = base_inputs();
      in.cbar = 0.1 + u(gen);
      in.sigma = u(gen);
      in.nu = 0.2 + u(gen);
      in.horizon = 0.5 + u(gen);
      in.mu = 0.05 + 0.9 * u(gen);
      in.trace_q = 5 * u(gen);
      in.gamma0 = 20 * u(gen);
      auto a = check_conditions(in);
      auto smaller = in;
      smaller.trace_q *= u(gen);
      auto bigger_gamma = in;
      bigger_gamma.gamma0 = *in.gamma0 * (1 + u(gen));
      auto b = check_conditions(smaller), c = check_conditions(bigger_gamma);
      for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (a.rows[i].pass) {
          CHECK(b.rows[i].pass);
          CHECK(c.rows[i].pass);
        }
      }
    }
  }

  SUBCASE("deterministic initial data passes every gamma0 row") {
    auto in = base_inputs();
    in.gamma0.reset();
    for (const auto& r : check_conditions(in).rows) {
      if (r.quantity == "gamma0") CHECK(r.pass);
    }
  }

  SUBCASE("invalid inputs") {
    auto in = base_inputs();
    in.mu = 1.0;
    CHECK_THROWS_AS(check_conditions(in), std::invalid_argument);
    in = base_inputs();
    in.cbar = 0.0;
    CHECK_THROWS_AS(check_conditions(in), std::invalid_argument);
    in = base_inputs();
    in.nu = -1.0;
    CHECK_THROWS_AS(check_conditions(in), std::invalid_argument);
  }
}
