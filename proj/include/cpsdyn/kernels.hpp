#pragma once

// Covariant mapping kernels, their inverses, spectrum classification of
// arbitrary kernel matrices, and the (G)DTWA discrete phase points.

#include "cpsdyn/cps.hpp"
#include "cpsdyn/qcore.hpp"

#include <optional>
#include <vector>

namespace cpsdyn {

struct KernelSpec {
  enum class Kind { cps_covariant, cps_inverse, cmmcv, gdtwa, stiefel_covariant };

  Kind kind = Kind::cps_covariant;
  int F = 0;
  double gamma = 0.0;
  std::optional<HermitianMatrix> commutator;  // cmmcv only
  StiefelSignature signature;                 // stiefel_covariant only

  static KernelSpec cps_covariant(int f, double gamma);
  static KernelSpec cps_inverse(int f, double gamma);
  static KernelSpec cmmcv(const HermitianMatrix& commutator);
  static KernelSpec gdtwa(int f);
  static KernelSpec stiefel_covariant(const StiefelSignature& signature);
};

/// K(X) for the given kernel family.
///   cps_covariant:      1/2 z z^dag - gamma I
///   cps_inverse:        see eval_inverse_kernel
///   cmmcv:              1/2 z z^dag - Gamma
///   stiefel_covariant:  sum_i s_i/2 z_i z_i^dag - gamma I
///   gdtwa:              stiefel_covariant with the point's own signature,
///                       which must carry the (G)DTWA spectrum
HermitianMatrix eval_kernel(const KernelSpec& spec, const StiefelPoint& point);

/// CMM observable kernel
///   [(1+F)/(2(1+F gamma)^2)] z_n conj(z_m) - [(1-gamma)/(1+F gamma)] delta_nm.
HermitianMatrix eval_inverse_kernel(double gamma, const StiefelPoint& point);

/// Single element K_{row,col} of sum_i s_i/2 z_i z_i^dag - gamma I.
inline Complex stiefel_kernel_element(const StiefelSignature& sig, const ComplexMatrix& frames,
                                      int row, int col) {
  Complex acc = 0.0;
  for (int i = 0; i < frames.cols(); ++i)
    acc += (0.5 * sig.signs[static_cast<std::size_t>(i)]) * frames(row, i) * std::conj(frames(col, i));
  if (row == col) acc -= sig.gamma;
  return acc;
}

/// Covariant CPS kernel element 1/2 z_row conj(z_col) - gamma delta.
inline Complex cps_kernel_element(const ComplexMatrix& frames, double gamma, int row, int col) {
  Complex v = 0.5 * frames(row, 0) * std::conj(frames(col, 0));
  if (row == col) v -= gamma;
  return v;
}

/// Inverse CPS kernel element for F states.
inline Complex cps_inverse_element(const ComplexMatrix& frames, int f, double gamma, int row,
                                   int col) {
  const double s = 1.0 + f * gamma;
  Complex v = ((1.0 + f) / (2.0 * s * s)) * frames(row, 0) * std::conj(frames(col, 0));
  if (row == col) v -= (1.0 - gamma) / s;
  return v;
}

StiefelSignature classify_kernel(const HermitianMatrix& k, double degeneracy_tol = 1e-8);

/// Phase point whose covariant Stiefel kernel reproduces K.
StiefelPoint point_from_kernel(const HermitianMatrix& k, double degeneracy_tol = 1e-8);

/// {(1+sqrt(2F-1))/2, (1-sqrt(2F-1))/2, 0, ..., 0}
std::vector<double> gdtwa_spectrum(int f);

/// Phase points of the (G)DTWA sampling for initial state n (0-based). Point
/// a has delta_j = +1 if bit j of a is clear (else -1) and sigma_j likewise
/// from bit (F-1)+j, where j runs over the states other than n in order.
struct DiscretePointSet {
  int F = 0;
  int n = 0;
  std::vector<std::vector<int>> deltas;  // per point, F entries (entry n unused = 0)
  std::vector<std::vector<int>> sigmas;
  std::vector<HermitianMatrix> kernels;
  std::vector<StiefelPoint> points;

  std::size_t size() const { return points.size(); }
};

HermitianMatrix gdtwa_kernel_matrix(int f, int n, const std::vector<int>& deltas,
                                    const std::vector<int>& sigmas);

DiscretePointSet gdtwa_points(int f, int n);

}  // namespace cpsdyn
