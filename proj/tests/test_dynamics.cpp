#include "cpsdyn/dynamics.hpp"
#include "cpsdyn/errors.hpp"
#include "cpsdyn/kernels.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace cpsdyn;

namespace {

double frame_error(const StiefelPoint& a, const StiefelPoint& b) {
  return (a.frames - b.frames).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("exact propagation is the unitary action on the frames") {
  std::mt19937_64 rng(2);
  const HermitianMatrix h = testing::random_hermitian(3, rng);
  Rng r = make_stream(1, 0);
  const StiefelPoint p = sample_sphere(3, 0.1, r);
  const StiefelPoint q = propagate_exact(p, h, 1.7);
  const ComplexMatrix want = testing::taylor_expm(h.matrix(), 1.7) * p.frames;
  CHECK((q.frames - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(propagate_exact(p, HermitianMatrix::identity(2), 1.0), DimensionError);
}

TEST_CASE("frozen evolution for H = 0") {
  Rng r = make_stream(1, 1);
  const StiefelPoint p = sample_sphere(2, 0.3, r);
  const HermitianMatrix h = HermitianMatrix::zero(2);
  CHECK(frame_error(propagate_exact(p, h, 10.0), p) == 0.0);
  CHECK(frame_error(propagate_rk4(p, h, 0.01, 1000), p) == 0.0);
}

TEST_CASE("rk4 converges to the exact flow at fourth order") {
  std::mt19937_64 rng(4);
  const HermitianMatrix h = testing::random_hermitian(3, rng);
  Rng r = make_stream(2, 0);
  const StiefelPoint p = sample_sphere(3, gamma_w(3), r);
  const StiefelPoint ref = propagate_exact(p, h, 10.0);
  const double e1 = frame_error(propagate_rk4(p, h, 0.02, 500), ref);
  const double e2 = frame_error(propagate_rk4(p, h, 0.01, 1000), ref);
  CHECK(e1 / e2 > 14.0);
  CHECK(e1 / e2 < 18.0);
  CHECK_THROWS_AS(propagate_rk4(p, h, 0.0, 10), DomainError);
}

TEST_CASE("rk4 with sign factors follows the exact flow on every frame") {
  std::mt19937_64 rng(6);
  const HermitianMatrix h = testing::random_hermitian(3, rng);
  const DiscretePointSet set = gdtwa_points(3, 1);
  for (const auto& p : set.points) {
    const StiefelPoint a = propagate_exact(p, h, 2.0);
    const StiefelPoint b = propagate_rk4(p, h, 1e-3, 2000);
    CHECK(frame_error(a, b) < 1e-10);
  }
}

TEST_CASE("invariants along trajectories") {
  std::mt19937_64 rng(10);
  const HermitianMatrix h = testing::random_hermitian(3, rng);
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(0.5 * i);
  Rng r = make_stream(3, 0);
  const StiefelPoint p = sample_sphere(3, 0.4, r);
  const DriftReport ex = invariant_drift(integrate_segment(p, h, t, Backend::exact()));
  CHECK(ex.worst() < 1e-10);
  const DriftReport rk = invariant_drift(integrate_segment(p, h, t, Backend::rk4(1e-3)));
  CHECK(rk.worst() < 1e-6);
  // sign-mixed (G)DTWA frames conserve the cross-frame overlap too
  const StiefelPoint g = gdtwa_points(3, 0).points[5];
  CHECK(invariant_drift(integrate_segment(g, h, t, Backend::exact())).worst() < 1e-10);
  CHECK(invariant_drift(integrate_segment(g, h, t, Backend::rk4(1e-3))).worst() < 1e-6);
}

TEST_CASE("mapping energy is Tr[H K]") {
  std::mt19937_64 rng(12);
  const HermitianMatrix h = testing::random_hermitian(4, rng);
  Rng r = make_stream(3, 1);
  const StiefelPoint p = sample_sphere(4, 0.2, r);
  const HermitianMatrix k = eval_kernel(KernelSpec::cps_covariant(4, 0.2), p);
  CHECK(mapping_energy(p, h) == doctest::Approx((h.matrix() * k.matrix()).trace().real()));
}

TEST_CASE("segments reject unsorted grids and bad steps") {
  Rng r = make_stream(3, 2);
  const StiefelPoint p = sample_sphere(2, 0.2, r);
  const HermitianMatrix h = HermitianMatrix::identity(2);
  CHECK_THROWS_AS(integrate_segment(p, h, {1.0, 0.5}, Backend::exact()), DomainError);
  CHECK_THROWS_AS(integrate_segment(p, h, {1.0}, Backend::rk4(0.0)), DomainError);
  const TrajectorySegment seg = integrate_segment(p, h, {0.0, 0.25, 1.0}, Backend::rk4(0.1));
  CHECK(seg.points.size() == 3);
  CHECK(frame_error(seg.points[0], p) == 0.0);
}
