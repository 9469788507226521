#include "cpsdyn/errors.hpp"
#include "cpsdyn/kernels.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace cpsdyn;

namespace {

std::vector<double> sorted_spectrum(const HermitianMatrix& k) {
  const SpectralDecomposition e = hermitian_eig(k);
  return {e.eigenvalues.data(), e.eigenvalues.data() + e.eigenvalues.size()};
}

}  // namespace

TEST_CASE("covariant kernel has unit trace and the sphere spectrum") {
  for (int f = 2; f <= 6; ++f)
    for (const double g : {0.0, gamma_w(f), 1.0}) {
      Rng rng = make_stream(f, 0);
      const StiefelPoint p = sample_sphere(f, g, rng);
      const HermitianMatrix k = eval_kernel(KernelSpec::cps_covariant(f, g), p);
      CHECK(k.trace() == doctest::Approx(1.0).epsilon(1e-12));
      const auto ev = sorted_spectrum(k);
      CHECK(ev.back() == doctest::Approx(1.0 + (f - 1) * g).epsilon(1e-12));
      for (int i = 0; i + 1 < f; ++i) CHECK(std::abs(ev[i] + g) < 1e-12);
    }
}

TEST_CASE("element helpers agree with the full kernels") {
  const int f = 3;
  const double g = 0.3;
  Rng rng = make_stream(1, 1);
  const StiefelPoint p = sample_sphere(f, g, rng);
  const HermitianMatrix k = eval_kernel(KernelSpec::cps_covariant(f, g), p);
  const HermitianMatrix ki = eval_inverse_kernel(g, p);
  for (int a = 0; a < f; ++a)
    for (int b = 0; b < f; ++b) {
      CHECK(std::abs(cps_kernel_element(p.frames, g, a, b) - k(a, b)) < 1e-14);
      CHECK(std::abs(cps_inverse_element(p.frames, f, g, a, b) - ki(a, b)) < 1e-14);
      CHECK(std::abs(stiefel_kernel_element(p.signature, p.frames, a, b) - k(a, b)) < 1e-14);
    }
}

TEST_CASE("inverse kernel reproduces the identity through the sphere moments") {
  // F E[K_mn Kinv_lk] = delta_mk delta_nl using the closed-form moments
  // E[z_a conj z_b] = 2S/F delta_ab and
  // E[z_a conj z_b z_c conj z_d] = 4S^2/(F(F+1)) (delta_ab delta_cd + delta_ad delta_cb)
  for (int f = 2; f <= 4; ++f)
    for (const double g : {0.0, gamma_w(f), 1.0}) {
      const double s = 1.0 + f * g;
      const double m2 = 2.0 * s / f, m4 = 4.0 * s * s / (f * (f + 1.0));
      const double a = (1.0 + f) / (2.0 * s * s), c = (1.0 - g) / s;
      for (int m = 0; m < f; ++m)
        for (int n = 0; n < f; ++n)
          for (int l = 0; l < f; ++l)
            for (int k = 0; k < f; ++k) {
              // K_mn = z_m conj z_n / 2 - g d_mn, Kinv_lk = a z_l conj z_k - c d_lk
              const double zz = m4 * ((m == n && l == k) + (m == k && l == n));
              const double v = 0.5 * a * zz - 0.5 * c * m2 * (m == n) * (l == k) -
                               g * a * m2 * (m == n) * (l == k) + g * c * (m == n) * (l == k);
              CHECK(std::abs(f * v - double(m == k && n == l)) < 1e-14);
            }
    }
}

TEST_CASE("covariance under unitary rotations") {
  std::mt19937_64 urng(8);
  for (int f = 2; f <= 4; ++f)
    for (int rep = 0; rep < 20; ++rep) {
      const ComplexMatrix u = testing::random_unitary(f, urng);
      Rng rng = make_stream(f, rep);
      const StiefelPoint p = sample_sphere(f, 0.2, rng);
      StiefelPoint q = p;
      q.frames = u * p.frames;
      const KernelSpec spec = KernelSpec::cps_covariant(f, 0.2);
      const ComplexMatrix lhs = eval_kernel(spec, q).matrix();
      const ComplexMatrix rhs = u * eval_kernel(spec, p).matrix() * u.adjoint();
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("classification and reconstruction of kernels") {
  Rng rng = make_stream(3, 3);
  const StiefelPoint p = sample_sphere(3, 0.25, rng);
  const HermitianMatrix k = eval_kernel(KernelSpec::cps_covariant(3, 0.25), p);
  const StiefelSignature sig = classify_kernel(k);
  CHECK(sig.r == 1);
  CHECK(sig.gamma == doctest::Approx(0.25));
  const StiefelPoint back = point_from_kernel(k);
  CHECK((eval_kernel(KernelSpec::stiefel_covariant(back.signature), back).matrix() - k.matrix())
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  // at F = 2 the DTWA kernel is itself a sphere kernel with gamma = gamma_w
  const StiefelSignature s2 = classify_kernel(gdtwa_points(2, 0).kernels.front());
  CHECK(s2.r == 1);
  CHECK(s2.gamma == doctest::Approx(gamma_w(2)));
  for (int f = 3; f <= 5; ++f) {
    const DiscretePointSet set = gdtwa_points(f, 0);
    const StiefelSignature s = classify_kernel(set.kernels.front());
    REQUIRE(s.r == 2);
    CHECK(s.gamma == doctest::Approx(0.0).scale(1.0));
    CHECK(s.signs[0] == 1);
    CHECK(s.signs[1] == -1);
  }
}

TEST_CASE("(G)DTWA phase points") {
  for (int f = 2; f <= 5; ++f)
    for (int n = 0; n < f; ++n) {
      const DiscretePointSet set = gdtwa_points(f, n);
      CHECK(set.size() == (std::size_t{1} << (2 * (f - 1))));
      const auto want = gdtwa_spectrum(f);
      std::vector<double> want_sorted = want;
      std::sort(want_sorted.begin(), want_sorted.end());
      ComplexMatrix mean = ComplexMatrix::Zero(f, f);
      for (std::size_t a = 0; a < set.size(); ++a) {
        const auto ev = sorted_spectrum(set.kernels[a]);
        for (int i = 0; i < f; ++i) CHECK(std::abs(ev[i] - want_sorted[i]) < 1e-10);
        const HermitianMatrix k = eval_kernel(KernelSpec::gdtwa(f), set.points[a]);
        CHECK((k.matrix() - set.kernels[a].matrix()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(check_constraints(set.points[a], 1e-12).pass);
        mean += set.kernels[a].matrix();
      }
      mean /= static_cast<double>(set.size());
      // the discrete ensemble averages to the pure state |n><n|
      CHECK((mean - HermitianMatrix::projector(f, n).matrix()).cwiseAbs().maxCoeff() < 1e-12);
    }
  CHECK(gdtwa_spectrum(2)[0] == doctest::Approx((1.0 + std::sqrt(3.0)) / 2.0));
}

TEST_CASE("cmmcv kernel subtracts the commutator matrix") {
  ComplexMatrix gm(2, 2);
  gm << 0.3, Complex(0.1, 0.2), Complex(0.1, -0.2), 0.4;
  const HermitianMatrix gamma(gm);
  Rng rng = make_stream(1, 2);
  const StiefelPoint p = sample_sphere(2, 0.35, rng);
  const HermitianMatrix k = eval_kernel(KernelSpec::cmmcv(gamma), p);
  const ComplexMatrix want = 0.5 * p.frames.col(0) * p.frames.col(0).adjoint() - gm;
  CHECK((k.matrix() - want).cwiseAbs().maxCoeff() < 1e-14);
}
