#pragma once

// Phase trajectories on the generalized CPS: exact unitary frame evolution
// and direct RK4 integration of the sign-factor Hamilton equations
//   dx_n^(k)/dt =  s^(k) dH_C/dp_n^(k),   dp_n^(k)/dt = -s^(k) dH_C/dx_n^(k).

#include "cpsdyn/cps.hpp"
#include "cpsdyn/qcore.hpp"

#include <vector>

namespace cpsdyn {

struct Backend {
  enum class Kind { exact, rk4 };
  Kind kind = Kind::exact;
  double dt = 0.0;  // rk4 only

  static Backend exact() { return {}; }
  static Backend rk4(double dt) { return {Kind::rk4, dt}; }
};

/// Mapping Hamiltonian H_C = Tr[H K(X)] with the point's covariant kernel.
double mapping_energy(const StiefelPoint& point, const HermitianMatrix& h);

StiefelPoint propagate_exact(const StiefelPoint& point, const HermitianMatrix& h, double t);
StiefelPoint propagate_exact(const StiefelPoint& point, const UnitaryPropagator& u);

/// Classic RK4 on the real (x, p) equations of motion with analytic
/// gradients of H_C. No renormalization is applied.
StiefelPoint propagate_rk4(const StiefelPoint& point, const HermitianMatrix& h, double dt,
                           long steps);

/// In-place RK4 on raw frames; `work` is scratch storage reused across calls.
void rk4_frames(ComplexMatrix& frames, const std::vector<int>& signs, const ComplexMatrix& h,
                double dt, long steps, ComplexMatrix (&work)[5]);

struct TrajectorySegment {
  std::vector<double> times;
  std::vector<StiefelPoint> points;
  Backend backend;
  HermitianMatrix hamiltonian = HermitianMatrix::zero(1);
};

/// Points at each requested time (monotone, starting at or after 0) from x0.
/// rk4 uses ceil(dt_interval/dt) equal substeps per interval.
TrajectorySegment integrate_segment(const StiefelPoint& x0, const HermitianMatrix& h,
                                    const std::vector<double>& times, Backend backend);

struct DriftReport {
  double max_norm_drift = 0.0;     // worst |frame half-norm - |lambda+gamma||
  double max_overlap_drift = 0.0;  // worst cross-frame overlap
  double max_energy_drift = 0.0;   // worst |H_C(t) - H_C(0)|

  double worst() const;
  bool within(double tol) const { return worst() < tol; }
};

DriftReport invariant_drift(const TrajectorySegment& segment);

}  // namespace cpsdyn
