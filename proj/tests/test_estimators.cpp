#include "cpsdyn/errors.hpp"
#include "cpsdyn/estimators.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace cpsdyn;

namespace {

HermitianMatrix rabi() {
  ComplexMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return HermitianMatrix(m);
}

TCFRequest request(const HermitianMatrix& h, MethodSpec method, int n, int m, int k, int l,
                   long n_traj, std::vector<double> t = {0.0, 0.5, 1.0, 2.0, 4.0}) {
  TCFRequest r;
  r.hamiltonian = h;
  r.n = n;
  r.m = m;
  r.k = k;
  r.l = l;
  r.t_grid = std::move(t);
  r.n_traj = n_traj;
  r.seed = 42;
  r.method = std::move(method);
  return r;
}

void check_exact(const TCFRequest& r) {
  const TCFResult res = estimate_tcf(r);
  const auto ex = exact_element_tcf(r.hamiltonian, r.n, r.m, r.k, r.l, r.t_grid);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const Complex d = res.estimates[i] - ex[i];
    CHECK(std::abs(d.real()) <= 5.0 * res.se_re[i] + 1e-12);
    CHECK(std::abs(d.imag()) <= 5.0 * res.se_im[i] + 1e-12);
  }
}

StiefelPoint at_actions(std::vector<double> e) {
  double s = 0.0;
  for (const double v : e) s += v;
  const std::vector<double> q(e.size(), 0.3);
  return point_from_actions(e, q, (s - 1.0) / static_cast<double>(e.size()));
}

}  // namespace

TEST_CASE("hill exponent and cornered normalization") {
  CHECK(hill_exponent(2) == doctest::Approx(1.0));
  CHECK(hill_exponent(3) == doctest::Approx(0.75));
  CHECK(cornered_norm(2, 1.0) == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("window values") {
  CHECK(eval_window(WindowKind::triangle, at_actions({1.5, 0.2}), 0) == 1.0);
  CHECK(eval_window(WindowKind::triangle, at_actions({1.5, 0.6}), 0) == 0.0);
  CHECK(eval_window(WindowKind::hill_obs, at_actions({0.8, 0.2}), 0) == doctest::Approx(0.6));
  CHECK(eval_window(WindowKind::hill_obs, at_actions({0.8, 0.2}), 1) == 0.0);
  // equal actions sit on the boundary of both windows
  CHECK(eval_window(WindowKind::hill_rho, at_actions({0.5, 0.5}), 0) == 0.0);
  CHECK(eval_window(WindowKind::hill_rho, at_actions({0.5, 0.5}), 1) == 0.0);
}

TEST_CASE("cornered window integrates to one over the sphere") {
  for (const int f : {2, 3})
    for (const double g : {0.5, 1.0}) {
      const auto w = testing::mc_mean(200000, [&](long i) {
        Rng rng = make_stream(31, static_cast<std::uint64_t>(i));
        return f * eval_window(WindowKind::cornered, sample_sphere(f, g, rng), 0);
      });
      CHECK(std::abs(w.mean - 1.0) < 5.0 * w.se);
    }
}

TEST_CASE("jackknife reduces to the block-mean standard error for unit denominators") {
  std::vector<double> num, den;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(2.0, 1.0);
  for (int b = 0; b < 50; ++b) {
    num.push_back(10.0 * nd(rng));
    den.push_back(10.0);
  }
  double mean = 0.0, var = 0.0;
  for (const double x : num) mean += x / 10.0 / 50.0;
  for (const double x : num) var += std::pow(x / 10.0 - mean, 2);
  const double se = std::sqrt(var / (50.0 * 49.0));
  CHECK(jackknife_ratio_se(num, den) == doctest::Approx(se).epsilon(1e-10));
  CHECK(std::isnan(jackknife_ratio_se({1.0}, {1.0})));
}

TEST_CASE("Rabi populations for every family") {
  const HermitianMatrix h = rabi();
  const long n = 20000;
  check_exact(request(h, MethodSpec::cmm(gamma_w(2)), 0, 0, 0, 0, n));
  check_exact(request(h, MethodSpec::wmm(GammaWeight::single(gamma_w(2))), 0, 0, 1, 1, n));
  check_exact(request(h, MethodSpec::cmmcv({0.2, 0.1}), 0, 0, 0, 0, n));
  check_exact(request(h, MethodSpec::cornered_simplex(1.0), 0, 0, 0, 0, n));
  check_exact(request(h, MethodSpec::triangle_sqc(), 0, 0, 1, 1, n));
  check_exact(request(h, MethodSpec::triangle_sqc(true), 0, 0, 1, 1, n));
  check_exact(request(h, MethodSpec::ehrenfest(), 0, 0, 0, 0, n));
  check_exact(request(h, MethodSpec::lambda_point(0.4), 0, 0, 0, 0, n));
  check_exact(request(h, MethodSpec::dtwa(), 0, 0, 0, 0, n));
  check_exact(request(h, MethodSpec::gdtwa(), 0, 0, 1, 1, n));
  check_exact(request(h, MethodSpec::triangle_ww(), 0, 0, 0, 0, n));
  check_exact(request(h, MethodSpec::triangle_f2_single(0.25), 0, 0, 1, 1, n));
  check_exact(request(h, MethodSpec::hill_ww(0.0), 0, 0, 0, 0, n));
}

TEST_CASE("coherences at F = 3") {
  std::mt19937_64 rng(3);
  const HermitianMatrix h = testing::random_hermitian(3, rng, 0.5);
  const long n = 20000;
  check_exact(request(h, MethodSpec::cmm(0.0), 0, 1, 1, 0, n));
  check_exact(request(h, MethodSpec::ehrenfest(), 0, 2, 2, 1, n));
  check_exact(request(h, MethodSpec::lambda_point(0.3), 1, 2, 0, 0, n));
  check_exact(request(h, MethodSpec::gdtwa(), 2, 0, 0, 2, n));
  check_exact(request(h, MethodSpec::triangle_sqc(), 0, 1, 1, 0, n));
  check_exact(request(h, MethodSpec::cornered_simplex(0.5), 0, 1, 2, 2, n));
}

TEST_CASE("Ehrenfest off-diagonal sampler sits at e = (1/2, 1/2, 0)") {
  // with those actions every draw gives 2 z_2 conj z_1 * z_1 conj z_2 / 2 = 1
  const TCFResult r =
      estimate_tcf(request(HermitianMatrix::zero(3), MethodSpec::ehrenfest(), 0, 1, 1, 0, 500, {0.0}));
  CHECK(r.estimates[0].real() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(std::abs(r.estimates[0].imag()) < 1e-13);
  CHECK(r.se_re[0] < 1e-13);
}

TEST_CASE("frozen Hamiltonian gives time-independent estimates") {
  const TCFResult r = estimate_tcf(
      request(HermitianMatrix::zero(2), MethodSpec::cmm(0.1), 0, 1, 1, 0, 1000, {0.0, 3.0, 10.0}));
  CHECK(r.estimates[0] == r.estimates[1]);
  CHECK(r.estimates[0] == r.estimates[2]);
}

TEST_CASE("ww contributions are nonnegative and populations sum to one") {
  std::mt19937_64 rng(5);
  const HermitianMatrix h3 = testing::random_hermitian(3, rng, 0.5);
  for (const auto& [h, method] :
       std::vector<std::pair<HermitianMatrix, MethodSpec>>{{rabi(), MethodSpec::triangle_ww()},
                                                           {rabi(), MethodSpec::triangle_f2_single(0.5)},
                                                           {h3, MethodSpec::hill_ww(0.1)},
                                                           {h3, MethodSpec::triangle_ww()}}) {
    const int f = h.dim();
    std::vector<Complex> total(5);
    for (int k = 0; k < f; ++k) {
      const TCFResult r = estimate_tcf(request(h, method, 0, 0, k, k, 5000));
      CHECK(r.min_contribution >= 0.0);
      for (std::size_t i = 0; i < total.size(); ++i) {
        total[i] += r.estimates[i];
        CHECK(r.estimates[i].imag() == 0.0);
      }
    }
    for (const auto& s : total) CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("triangle_sqc populations sum to one at t = 0") {
  std::mt19937_64 rng(1);
  const HermitianMatrix h = testing::random_hermitian(3, rng);
  double sum = 0.0, se2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const TCFResult r =
        estimate_tcf(request(h, MethodSpec::triangle_sqc(), 1, 1, k, k, 20000, {0.0}));
    sum += r.estimates[0].real();
    se2 += r.se_re[0] * r.se_re[0];
  }
  // the three estimates share trajectories, so sum the SEs as a bound
  CHECK(std::abs(sum - 1.0) <= 5.0 * std::sqrt(3.0 * se2) + 1e-12);
}

TEST_CASE("Hermiticity of estimates") {
  std::mt19937_64 rng(8);
  const HermitianMatrix h = testing::random_hermitian(3, rng, 0.5);
  const TCFResult a = estimate_tcf(request(h, MethodSpec::cmm(0.2), 0, 1, 2, 0, 20000));
  const TCFResult b = estimate_tcf(request(h, MethodSpec::cmm(0.2), 1, 0, 0, 2, 20000));
  for (std::size_t i = 0; i < a.estimates.size(); ++i) {
    const Complex d = a.estimates[i] - std::conj(b.estimates[i]);
    CHECK(std::abs(d.real()) <= 5.0 * std::hypot(a.se_re[i], b.se_re[i]) + 1e-12);
    CHECK(std::abs(d.imag()) <= 5.0 * std::hypot(a.se_im[i], b.se_im[i]) + 1e-12);
  }
}

TEST_CASE("results do not depend on the thread count") {
  std::mt19937_64 rng(2);
  const HermitianMatrix h = testing::random_hermitian(3, rng);
  for (const auto& m : {MethodSpec::wmm(intra_electron_comb(3)), MethodSpec::hill_ww(0.0),
                        MethodSpec::gdtwa()}) {
    TCFRequest r = request(h, m, 0, 0, 1, 1, 3333);
    r.threads = 1;
    const TCFResult a = estimate_tcf(r);
    r.threads = 4;
    const TCFResult b = estimate_tcf(r);
    CHECK(a.estimates == b.estimates);
    CHECK(a.se_re == b.se_re);
    CHECK(a.normalization == b.normalization);
  }
}

TEST_CASE("family and index errors") {
  const HermitianMatrix h = rabi();
  CHECK_THROWS_AS(estimate_tcf(request(h, MethodSpec::cornered_simplex(1.0), 0, 0, 0, 1, 10)),
                  DomainError);
  CHECK_THROWS_AS(estimate_tcf(request(h, MethodSpec::hill_ww(0.0), 0, 1, 0, 0, 10)), DomainError);
  CHECK_THROWS_AS(estimate_tcf(request(h, MethodSpec::cmm(0.0), 0, 0, 2, 0, 10)), std::invalid_argument);
  CHECK_THROWS_AS(estimate_tcf(request(h, MethodSpec::cmm(0.0), 0, 0, 0, 0, 0)), DomainError);
  CHECK_THROWS_AS(MethodSpec::dtwa().validate(3), DomainError);
  CHECK_THROWS_AS(MethodSpec::cornered_simplex(0.0).validate(2), DomainError);
  CHECK_THROWS_AS(MethodSpec::lambda_point(-0.1).validate(2), DomainError);
  CHECK_THROWS_AS(MethodSpec::triangle_f2_single(0.0).validate(3), DomainError);
  try {
    MethodSpec::wmm(GammaWeight::single(0.1)).validate(2);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("0.22") != std::string::npos);  // 2*0.01 + 0.2
  }
  CHECK(parse_family("gdtwa") == MethodSpec::Family::gdtwa);
  CHECK(!parse_family("sqc"));
}

TEST_CASE("exact mapping identity at the sphere moment level") {
  const MappingCheck mc = mapping_identity_mc(GammaWeight::single(0.0), 2, true, 50000, 3);
  CHECK(mc.max_z() < 5.0);
  const MappingCheck mw = mapping_identity_mc(intra_electron_comb(2), 2, false, 50000, 3);
  CHECK(mw.max_z() < 5.0);
}

TEST_CASE("intra-electron weights") {
  // bisection oracle for (1 + 2 g)^3 = 6
  double lo = 0.0, hi = 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::pow(1.0 + 2.0 * mid, 3) < 6.0 ? lo : hi) = mid;
  }
  CHECK(intra_electron_single_gamma(2) == doctest::Approx(lo).epsilon(1e-12));
  CHECK(intra_electron_single_gamma(2) == doctest::Approx((std::cbrt(6.0) - 1.0) / 2.0));

  for (const int f : {2, 3, 4}) {
    const GammaWeight w = intra_electron_comb(f);
    CHECK(w.total() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.integrate([f](double g) { return f * g * g + 2.0 * g; }) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.integrate([f](double g) { return std::pow(1.0 + f * g, 3); }) ==
          doctest::Approx((1.0 + f) * (2.0 + f) / 2.0).epsilon(1e-12));
  }

  const HermitianMatrix h = rabi();
  const HermitianMatrix rho = HermitianMatrix::projector(2, 0);
  const IntraElectronReport rep =
      intra_electron_check(intra_electron_comb(2), h, rho, rho, 100000, 7);
  CHECK(rep.moments_ok);
  CHECK(rep.agree);
  // a single sphere at gamma_w fails the cubic condition
  const IntraElectronReport bad =
      intra_electron_check(GammaWeight::single(gamma_w(2)), h, rho, rho, 1000, 7);
  CHECK_FALSE(bad.moments_ok);
  // H = I: Tr[rho A] on both sides
  const IntraElectronReport id =
      intra_electron_check(intra_electron_comb(2), HermitianMatrix::identity(2), rho, rho, 100000, 9);
  CHECK(id.lhs == doctest::Approx(1.0));
  CHECK(std::abs(id.rhs - 1.0) < 5.0 * id.rhs_se);
}
