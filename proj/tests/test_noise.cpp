#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "snse/harness.hpp"
#include "snse/noise.hpp"
#include "snse/rng.hpp"

using namespace snse;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

// Sum in the same balanced dyadic order the path uses for coarsening.
double tree_sum(std::span<const double> v) {
  if (v.size() == 1) return v[0];
  const auto h = v.size() / 2;
  return tree_sum(v.first(h)) + tree_sum(v.subspan(h));
}

}  // namespace

TEST_CASE("philox known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(philox4x32(A4{0, 0, 0, 0}, A2{0, 0}) ==
        A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, A2{0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, A2{0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("normal_pair moments and stream separation") {
  const int n = 20000;
  double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
  for (int i = 0; i < n; ++i) {
    auto [a, b] = normal_pair(42, Stream::BrownianIncrement, 1, 2, i);
    s1 += a, s2 += b, s11 += a * a, s22 += b * b, s12 += a * b;
  }
  const double se_mean = 1 / std::sqrt(double(n)), se_var = std::sqrt(2.0 / n);
  CHECK(std::abs(s1 / n) < 5 * se_mean);
  CHECK(std::abs(s2 / n) < 5 * se_mean);
  CHECK(std::abs(s11 / n - 1) < 5 * se_var);
  CHECK(std::abs(s22 / n - 1) < 5 * se_var);
  CHECK(std::abs(s12 / n) < 5 * se_mean);

  CHECK(normal_pair(1, Stream::BrownianIncrement, 1, 0, 3) ==
        normal_pair(1, Stream::BrownianIncrement, 1, 0, 3));
  CHECK(normal_pair(1, Stream::BrownianIncrement, 1, 0, 3) !=
        normal_pair(1, Stream::OuConvolution, 1, 0, 3));
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  auto [u, v] = uniform_pair(3, Stream::ConstantSearch, 0, 1, 0);
  CHECK((u > 0 && u < 1 && v > 0 && v < 1));
}

TEST_CASE("build_q") {
  SUBCASE("zero scale") {
    auto q = build_q(make_grid(kTwoPi, 4), 0.0, 3.0);
    CHECK(q.trace == 0.0);
    CHECK(q.k0 == 0.0);
  }
  SUBCASE("hand sum over the eight modes of M = 1") {
    auto q = build_q(make_grid(kTwoPi, 1), 1.0, 2.0, DecayPolicy::Warn);
    CHECK(q.trace == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(q.k0 == doctest::Approx(6.0).epsilon(1e-15));
    CHECK_FALSE(q.trace_condition);
    CHECK_FALSE(q.warnings.empty());
  }
  SUBCASE("linearity in the scale") {
    auto g = make_grid(kTwoPi, 6);
    auto a = build_q(g, 1.3, 2.5), b = build_q(g, 2.6, 2.5);
    CHECK(b.trace == doctest::Approx(2 * a.trace).epsilon(1e-15));
    CHECK(b.k0 == doctest::Approx(2 * a.k0).epsilon(1e-15));
    CHECK(a.trace_condition);
    CHECK(a.warnings.empty());
  }
  SUBCASE("target trace") {
    auto q = build_q_with_trace(make_grid(kTwoPi, 8), 0.75, 2.5);
    CHECK(q.trace == doctest::Approx(0.75).epsilon(1e-14));
  }
  SUBCASE("errors") {
    auto g = make_grid(kTwoPi, 2);
    CHECK_THROWS_AS(build_q(g, -1.0, 3.0), std::invalid_argument);
    CHECK_THROWS_AS(build_q(g, 1.0, 2.0, DecayPolicy::Reject), std::invalid_argument);
    CHECK_NOTHROW(build_q(g, 1.0, 2.01, DecayPolicy::Reject));
  }
}

TEST_CASE("pairwise_sum") {
  std::vector<double> v{1e16, 1.0, -1e16, 1.0};
  CHECK(pairwise_sum(v) == tree_sum(v));
  std::vector<double> w(1000);
  std::iota(w.begin(), w.end(), 1.0);
  CHECK(pairwise_sum(w) == 500500.0);
  CHECK(pairwise_sum(std::span<const double>{}) == 0.0);
}

TEST_CASE("sample_path") {
  auto g = make_grid(kTwoPi, 4);
  auto q = build_q(g, 1.0, 2.5);

  SUBCASE("zero covariance gives zero increments") {
    auto p = sample_path(build_q(g, 0.0, 2.5), 8, 1.0, 3);
    for (int l = 1; l <= 8; ++l) CHECK(increment_field(p, l, 8).is_zero());
  }

  SUBCASE("determinism") {
    auto a = sample_path(q, 64, 1.0, 5), b = sample_path(q, 64, 1.0, 5);
    CHECK(std::equal(a.raw().begin(), a.raw().end(), b.raw().begin(), b.raw().end()));
    auto c = sample_path(q, 64, 1.0, 6);
    CHECK_FALSE(std::equal(a.raw().begin(), a.raw().end(), c.raw().begin(), c.raw().end()));
  }

  SUBCASE("adding modes does not perturb existing draws") {
    auto big = make_grid(kTwoPi, 8);
    auto a = sample_path(q, 32, 1.0, 9);
    auto b = sample_path(build_q(big, 1.0, 2.5), 32, 1.0, 9);
    for (std::size_t j = 0; j < g->pair_count(); ++j) {
      const auto k = g->mode(j);
      const auto jb = *big->index_of(k.k1, k.k2);
      for (int c = 0; c < 2; ++c) {
        auto fa = a.fine(j, c), fb = b.fine(jb, c);
        CHECK(std::equal(fa.begin(), fa.end(), fb.begin(), fb.end()));
      }
    }
  }

  SUBCASE("fine increment variance over 2^14 steps") {
    const int n = 1 << 14;
    const double t = 2.0;
    auto p = sample_path(q, n, t, 17);
    for (std::size_t j = 0; j < g->pair_count(); j += 7) {
      for (int c = 0; c < 2; ++c) {
        double ss = 0;
        for (double x : p.fine(j, c)) ss += x * x;
        const double var = ss / n, exact = t / n;
        CHECK(std::abs(var - exact) < 5 * exact * std::sqrt(2.0 / n));
      }
    }
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(sample_path(q, 12, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_path(q, 16, 0.0, 1), std::invalid_argument);
    auto p = sample_path(q, 16, 1.0, 1);
    CHECK_THROWS_AS(increment_field(p, 1, 3), std::invalid_argument);
    CHECK_THROWS_AS(increment_field(p, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(increment_field(p, 5, 4), std::invalid_argument);
  }
}

TEST_CASE("dyadic coarsening telescopes bitwise") {
  auto g = make_grid(kTwoPi, 3);
  auto p = sample_path(build_q(g, 1.0, 3.0), 256, 1.0, 23);
  for (std::size_t j = 0; j < g->pair_count(); ++j) {
    for (int c = 0; c < 2; ++c) {
      auto fine = p.fine(j, c);
      auto same = p.coarse(j, c, 256);
      CHECK(std::equal(fine.begin(), fine.end(), same.begin(), same.end()));
      for (int n2 = 2; n2 <= 256; n2 *= 2) {
        auto c2 = p.coarse(j, c, n2);
        auto c1 = p.coarse(j, c, n2 / 2);
        for (int l = 0; l < n2 / 2; ++l) CHECK(c1[l] == c2[2 * l] + c2[2 * l + 1]);
        CHECK(tree_sum(c2) == p.coarse(j, c, 1)[0]);
      }
    }
  }
  // field level: N = 1 is W(T)
  auto w = total_increment(p);
  auto one = increment_field(p, 1, 1);
  CHECK(w == one);
  auto fine = increment_fields(p, 256);
  CHECK(fine[5] == increment_field(p, 6, 256));
  CHECK(fine[0].is_divergence_free());
}

TEST_CASE("increment second moment equals (T/N) Tr(Q)") {
  auto g = make_grid(kTwoPi, 4);
  auto q = build_q(g, 0.8, 2.5);
  const int n = 8, seeds = 2000;
  const double t = 1.0;
  std::vector<double> vals;
  for (int s = 0; s < seeds; ++s) {
    auto p = sample_path(q, n, t, mix_seed(99, s));
    auto d = increment_field(p, 3, n);
    vals.push_back(std::pow(sobolev_norm(d, 0.0), 2));
  }
  auto ci = mean_ci(vals);
  const double se = ci.half_width / 1.96;
  CHECK(std::abs(ci.mean - t / n * q.trace) < 5 * se);

  SUBCASE("quadrupling the scale doubles the rms exactly on a fixed path") {
    auto p1 = sample_path(q, n, t, 5);
    auto p4 = sample_path(build_q(g, 3.2, 2.5), n, t, 5);
    const double a = sobolev_norm(increment_field(p1, 2, n), 0.0);
    const double b = sobolev_norm(increment_field(p4, 2, n), 0.0);
    CHECK(b == doctest::Approx(2 * a).epsilon(1e-14));
  }
}

TEST_CASE("increments of distinct modes and steps are uncorrelated") {
  auto g = make_grid(kTwoPi, 2);
  auto p = sample_path(build_q(g, 1.0, 2.5), 1 << 14, 1.0, 31);
  const double n = 1 << 14;
  auto a = p.fine(0, 0), b = p.fine(1, 0), c = p.fine(0, 1);
  double ab = 0, ac = 0, lag = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    ac += a[i] * c[i];
    if (i + 1 < a.size()) lag += a[i] * a[i + 1];
  }
  const double v = 1.0 / n;  // per-increment variance
  const double se = v / std::sqrt(n);
  CHECK(std::abs(ab / n) < 5 * se);
  CHECK(std::abs(ac / n) < 5 * se);
  CHECK(std::abs(lag / (n - 1)) < 5 * se);
}

TEST_CASE("field_from_coordinates gives orthonormal coordinates") {
  auto g = make_grid(kTwoPi, 3);
  auto q = build_q(g, 1.0, 2.5);
  std::vector<double> c(g->pair_count(), 0.0), s(g->pair_count(), 0.0);
  c[2] = 1.0;
  auto f = field_from_coordinates(q, c, s);
  CHECK(sobolev_norm(f, 0.0) == doctest::Approx(std::sqrt(q.variance[2])).epsilon(1e-14));
  c[2] = 0.0;
  s[2] = 1.0;
  auto h = field_from_coordinates(q, c, s);
  CHECK(sobolev_norm(h, 0.0) == doctest::Approx(std::sqrt(q.variance[2])).epsilon(1e-14));
  CHECK(std::abs(inner_product(f, h)) < 1e-15);
  CHECK(f.is_divergence_free());
}

TEST_CASE("sample_gaussian_u0") {
  auto g = make_grid(kTwoPi, 4);
  CHECK(sample_gaussian_u0(build_q(g, 0.0, 3.0), 1).is_zero());

  auto cov = build_q(g, 0.5, 3.0);
  const int n = 4000;
  std::vector<double> v;
  for (int s = 0; s < n; ++s) v.push_back(std::pow(sobolev_norm(sample_gaussian_u0(cov, mix_seed(7, s)), 1.0), 2));
  auto ci = mean_ci(v);
  CHECK(std::abs(ci.mean - cov.k0) < 5 * ci.half_width / 1.96);

  SUBCASE("independent of the path stream") {
    auto u = sample_gaussian_u0(cov, 3);
    auto p = sample_path(cov, 1, 1.0, 3);
    CHECK_FALSE(u == increment_field(p, 1, 1));
    CHECK(u.is_divergence_free());
  }

  SUBCASE("exponential moment below the critical gamma") {
    double top = 0.0;
    for (std::size_t j = 0; j < g->pair_count(); ++j) top = std::max(top, g->eigenvalue(j) * cov.variance[j]);
    const double gamma = 0.5 / (2 * top);
    // each real coordinate contributes (1 - 2 gamma lambda q)^{-1/2}
    double log_exact = 0.0;
    for (std::size_t j = 0; j < g->pair_count(); ++j) {
      log_exact += -std::log1p(-2 * gamma * g->eigenvalue(j) * cov.variance[j]);
    }
    auto full = exp_moment_estimate(v, gamma);
    auto half = exp_moment_estimate(std::span<const double>(v).first(n / 2), gamma);
    CHECK(std::isfinite(full.log_mean));
    CHECK(std::abs(full.log_mean - log_exact) < 2 * full.log_half_width + 0.05);
    CHECK(std::abs(std::exp(full.log_mean - half.log_mean) - 1) < 0.2);
  }
}
