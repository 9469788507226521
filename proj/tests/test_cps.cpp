#include "cpsdyn/cps.hpp"
#include "cpsdyn/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <numbers>

using namespace cpsdyn;

TEST_CASE("gamma_w values") {
  CHECK(gamma_w(2) == doctest::Approx((std::sqrt(3.0) - 1.0) / 2.0));
  CHECK(gamma_w(3) == doctest::Approx(1.0 / 3.0));
  for (int f = 1; f <= 8; ++f) {
    const double g = gamma_w(f);
    CHECK(f * g * g + 2.0 * g == doctest::Approx(1.0));
  }
}

TEST_CASE("sphere samples satisfy the constraint") {
  Rng rng = make_stream(1, 0);
  for (int f = 1; f <= 6; ++f)
    for (const double g : {-0.9 / f, 0.0, gamma_w(f), 1.0}) {
      for (int i = 0; i < 50; ++i) {
        const StiefelPoint p = sample_sphere(f, g, rng);
        double s = 0.0;
        for (int n = 0; n < f; ++n) s += p.action(n);
        CHECK(s == doctest::Approx(1.0 + f * g).epsilon(1e-13));
        CHECK(check_constraints(p, 1e-12).pass);
      }
    }
  CHECK_THROWS_AS(sample_sphere(2, -0.5, rng), DomainError);
}

TEST_CASE("streams are reproducible and distinct") {
  Rng a = make_stream(7, 3), b = make_stream(7, 3), c = make_stream(7, 4), d = make_stream(8, 3);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("sphere actions are flat on the simplex (KS)") {
  // e_1/S ~ Beta(1, F-1) for a uniform point on the sphere
  for (int f = 2; f <= 4; ++f) {
    const double g = gamma_w(f), s = 1.0 + f * g;
    std::vector<double> e1, phase;
    for (long i = 0; i < 20000; ++i) {
      Rng rng = make_stream(99, static_cast<std::uint64_t>(i));
      const StiefelPoint p = sample_sphere(f, g, rng);
      e1.push_back(p.action(0) / s);
      phase.push_back(action_angle(p).angles[static_cast<std::size_t>(f - 1)]);
    }
    CHECK(testing::ks_statistic(e1, [f](double x) { return 1.0 - std::pow(1.0 - x, f - 1); }) <
          testing::kKsCritical);
    CHECK(testing::ks_statistic(phase, [](double x) { return x / (2.0 * std::numbers::pi); }) <
          testing::kKsCritical);
  }
}

TEST_CASE("sphere second and fourth moments") {
  const int f = 3;
  const double g = 0.2, s = 1.0 + f * g;
  const long n = 100000;
  std::vector<StiefelPoint> pts;
  for (long i = 0; i < n; ++i) {
    Rng rng = make_stream(5, static_cast<std::uint64_t>(i));
    pts.push_back(sample_sphere(f, g, rng));
  }
  for (int a = 0; a < f; ++a)
    for (int b = 0; b < f; ++b) {
      const auto re = testing::mc_mean(n, [&](long i) {
        return (pts[i].frames(a, 0) * std::conj(pts[i].frames(b, 0))).real();
      });
      CHECK(std::abs(re.mean - (a == b ? 2.0 * s / f : 0.0)) < 5.0 * re.se);
      const auto fourth = testing::mc_mean(n, [&](long i) {
        return std::norm(pts[i].frames(a, 0)) * std::norm(pts[i].frames(b, 0));
      });
      const double want = 4.0 * s * s / (f * (f + 1.0)) * (a == b ? 2.0 : 1.0);
      CHECK(std::abs(fourth.mean - want) < 5.0 * fourth.se);
    }
}

TEST_CASE("measure normalization matches the Monte Carlo shell volume") {
  // Omega(gamma) = dV/dS of the ball sum (x^2+p^2)/2 <= S
  for (int f = 2; f <= 3; ++f) {
    const double g = gamma_w(f), s = 1.0 + f * g, eps = 0.05 * s;
    const double half = std::sqrt(2.0 * (s + eps));
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-half, half);
    const long n = 2000000;
    const auto hit = testing::mc_mean(n, [&](long) {
      double e = 0.0;
      for (int d = 0; d < 2 * f; ++d) {
        const double x = u(rng);
        e += 0.5 * x * x;
      }
      return (e >= s - eps && e < s + eps) ? 1.0 : 0.0;
    });
    const double scale = std::pow(2.0 * half, 2 * f) / (2.0 * eps);
    // central difference bias is eps^2/(3 S^2) relative for F = 3, zero for F = 2
    const double bias = measure_norm(f, g) * eps * eps / (3.0 * s * s);
    CHECK(std::abs(hit.mean * scale - measure_norm(f, g)) < 5.0 * hit.se * scale + bias);
  }
  CHECK(measure_norm(2, 0.0) == doctest::Approx(4.0 * std::numbers::pi * std::numbers::pi));
}

TEST_CASE("action-angle round trip") {
  const std::vector<double> e = {0.7, 0.2, 0.4}, q = {0.0, 1.0, 5.5};
  const double g = (0.7 + 0.2 + 0.4 - 1.0) / 3.0;
  const StiefelPoint p = point_from_actions(e, q, g);
  const ActionAngle aa = action_angle(p);
  for (int i = 0; i < 3; ++i) {
    CHECK(aa.actions[i] == doctest::Approx(e[i]));
    CHECK(aa.angles[i] == doctest::Approx(q[i]));
  }
}

TEST_CASE("Stiefel samples have orthogonal frames with the signature norms") {
  const double lam[] = {1.5, -0.5};
  const StiefelSignature sig = StiefelSignature::from_frames(4, lam, 0.25);
  CHECK(sig.r == 2);
  CHECK(sig.signs[0] == 1);
  CHECK(sig.signs[1] == -1);
  Rng rng = make_stream(2, 2);
  for (int i = 0; i < 100; ++i) {
    const StiefelPoint p = sample_stiefel(sig, rng);
    const ConstraintReport c = check_constraints(p, 1e-12);
    CHECK(c.pass);
    CHECK(0.5 * p.frames.col(0).squaredNorm() == doctest::Approx(1.75));
    CHECK(0.5 * p.frames.col(1).squaredNorm() == doctest::Approx(0.25));
  }
}

TEST_CASE("gamma weights") {
  const GammaWeight tri = GammaWeight::triangle(3);
  CHECK(tri.total() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(tri.support().first == doctest::Approx(0.0));
  CHECK(tri.support().second == doctest::Approx(2.0 / 3.0));
  CHECK(triangle_norm(2) == doctest::Approx(4.0 / 3.0));

  const GammaWeight comb = GammaWeight::delta_comb({{0.0, 1.5}, {0.5, -0.5}});
  CHECK(comb.total() == doctest::Approx(1.0));
  CHECK(comb.abs_total() == doctest::Approx(2.0));
  const long n = 40000;
  long low = 0;
  double signed_sum = 0.0;
  Rng rng = make_stream(4, 0);
  for (long i = 0; i < n; ++i) {
    const GammaDraw d = sample_gamma(comb, rng);
    CHECK(d.magnitude == doctest::Approx(2.0));
    if (d.gamma == 0.0) ++low;
    signed_sum += d.sign * d.magnitude;
  }
  const double p = static_cast<double>(low) / n;
  CHECK(std::abs(p - 0.75) < 5.0 * std::sqrt(0.75 * 0.25 / n));
  CHECK(std::abs(signed_sum / n - 1.0) < 5.0 * 2.0 * std::sqrt(0.75 * 0.25 / n) * 2.0);

  const GammaWeight box = GammaWeight::custom({0.0, 0.5, 1.0}, {1.0, 1.0});
  CHECK(box.integrate([](double g) { return g; }) == doctest::Approx(0.5));
  CHECK(box.density(0.25) == doctest::Approx(1.0));

  CHECK_THROWS_AS(GammaWeight::single(-0.6).validate(2), DomainError);
  CHECK_THROWS_AS(GammaWeight::delta_comb({{0.0, 0.9}}).validate(2), DomainError);
  CHECK_NOTHROW(GammaWeight::single(0.3).validate(2));
}
