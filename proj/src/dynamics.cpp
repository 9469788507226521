#include "cpsdyn/dynamics.hpp"

#include "cpsdyn/errors.hpp"

#include <algorithm>
#include <cmath>

namespace cpsdyn {

namespace {

void require_dims(const StiefelPoint& point, int f) {
  if (point.F() != f) throw DimensionError("phase point and Hamiltonian dimensions differ");
}

// Time derivative of every frame from the Hamilton equations. For frame k,
// dH_C/dx_n = s_k Re(H z)_n and dH_C/dp_n = s_k Im(H z)_n.
void frame_derivative(const ComplexMatrix& frames, const std::vector<int>& signs,
                      const ComplexMatrix& h, ComplexMatrix& out) {
  out.noalias() = h * frames;
  for (int k = 0; k < frames.cols(); ++k) {
    const double s = signs[static_cast<std::size_t>(k)];
    for (int n = 0; n < frames.rows(); ++n) {
      const Complex hz = out(n, k);
      const double grad_x = s * hz.real();
      const double grad_p = s * hz.imag();
      out(n, k) = Complex(s * grad_p, -s * grad_x);
    }
  }
}

}  // namespace

double mapping_energy(const StiefelPoint& point, const HermitianMatrix& h) {
  require_dims(point, h.dim());
  double e = -point.signature.gamma * h.trace();
  for (int i = 0; i < point.r(); ++i) {
    const Complex q = point.frames.col(i).dot(h.matrix() * point.frames.col(i));
    e += 0.5 * point.signature.signs[static_cast<std::size_t>(i)] * q.real();
  }
  return e;
}

StiefelPoint propagate_exact(const StiefelPoint& point, const UnitaryPropagator& u) {
  if (point.F() != u.dim()) throw DimensionError("phase point and propagator dimensions differ");
  StiefelPoint out;
  out.signature = point.signature;
  out.frames = u.matrix * point.frames;
  return out;
}

StiefelPoint propagate_exact(const StiefelPoint& point, const HermitianMatrix& h, double t) {
  require_dims(point, h.dim());
  return propagate_exact(point, propagator(h, t));
}

void rk4_frames(ComplexMatrix& frames, const std::vector<int>& signs, const ComplexMatrix& h,
                double dt, long steps, ComplexMatrix (&work)[5]) {
  auto& [k1, k2, k3, k4, tmp] = work;
  for (long s = 0; s < steps; ++s) {
    frame_derivative(frames, signs, h, k1);
    tmp = frames + (0.5 * dt) * k1;
    frame_derivative(tmp, signs, h, k2);
    tmp = frames + (0.5 * dt) * k2;
    frame_derivative(tmp, signs, h, k3);
    tmp = frames + dt * k3;
    frame_derivative(tmp, signs, h, k4);
    frames += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

StiefelPoint propagate_rk4(const StiefelPoint& point, const HermitianMatrix& h, double dt,
                           long steps) {
  require_dims(point, h.dim());
  if (!(dt > 0.0)) throw DomainError("rk4 step must be positive");
  StiefelPoint out = point;
  ComplexMatrix work[5];
  rk4_frames(out.frames, out.signature.signs, h.matrix(), dt, steps, work);
  return out;
}

TrajectorySegment integrate_segment(const StiefelPoint& x0, const HermitianMatrix& h,
                                    const std::vector<double>& times, Backend backend) {
  require_dims(x0, h.dim());
  if (!std::is_sorted(times.begin(), times.end()))
    throw DomainError("segment times must be monotone");
  if (backend.kind == Backend::Kind::rk4 && !(backend.dt > 0.0))
    throw DomainError("rk4 backend needs dt > 0");
  TrajectorySegment seg;
  seg.times = times;
  seg.backend = backend;
  seg.hamiltonian = h;
  if (backend.kind == Backend::Kind::exact) {
    const SpectralDecomposition eig = hermitian_eig(h);
    for (const double t : times) seg.points.push_back(propagate_exact(x0, propagator(eig, t)));
    return seg;
  }
  StiefelPoint cur = x0;
  double tcur = 0.0;
  ComplexMatrix work[5];
  for (const double t : times) {
    const double span = t - tcur;
    if (span > 0.0) {
      const long steps = static_cast<long>(std::ceil(span / backend.dt - 1e-9));
      rk4_frames(cur.frames, cur.signature.signs, h.matrix(), span / steps, steps, work);
      tcur = t;
    }
    seg.points.push_back(cur);
  }
  return seg;
}

double DriftReport::worst() const {
  return std::max({max_norm_drift, max_overlap_drift, max_energy_drift});
}

DriftReport invariant_drift(const TrajectorySegment& segment) {
  DriftReport rep;
  if (segment.points.empty()) return rep;
  const double e0 = mapping_energy(segment.points.front(), segment.hamiltonian);
  for (const auto& pt : segment.points) {
    const ConstraintReport c = check_constraints(pt, 0.0);
    rep.max_norm_drift = std::max(rep.max_norm_drift, c.max_norm_residual);
    rep.max_overlap_drift = std::max(rep.max_overlap_drift, c.max_overlap_residual);
    rep.max_energy_drift =
        std::max(rep.max_energy_drift, std::abs(mapping_energy(pt, segment.hamiltonian) - e0));
  }
  return rep;
}

}  // namespace cpsdyn
