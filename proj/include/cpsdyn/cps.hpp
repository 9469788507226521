#pragma once

// Geometry, constraints, invariant measures and samplers for the constraint
// phase space (CPS) sphere and its generalization to complex Stiefel
// manifolds V_r(C^F), plus quasi-probability weights over the gamma axis.

#include "cpsdyn/qcore.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace cpsdyn {

/// Random stream for one trajectory. Streams are keyed by (experiment seed,
/// trajectory index) so a trajectory's draws never depend on scheduling.
using Rng = std::mt19937_64;

Rng make_stream(std::uint64_t seed, std::uint64_t index);

/// gamma_w = (sqrt(1+F) - 1)/F, the W-version sphere parameter.
double gamma_w(int f);

/// Spectrum classification of a mapping kernel: which V_r(C^F) component a
/// phase point lives on.
struct StiefelSignature {
  int F = 0;
  /// Kernel spectrum ordered by |lambda + gamma| descending; the first r
  /// entries are the frame eigenvalues, the rest equal -gamma.
  std::vector<double> eigenvalues;
  int r = 0;
  double gamma = 0.0;
  std::vector<int> signs;  // s^(i) = sgn(lambda^(i) + gamma), i < r
  double degeneracy_tol = 1e-8;

  /// |lambda^(i) + gamma|, the half squared norm of frame i.
  double frame_weight(int i) const;

  /// CMM sphere: spectrum {1 + (F-1) gamma, -gamma, ..., -gamma}, r = 1.
  static StiefelSignature sphere(int f, double gamma);
  /// Builds a signature from explicit frame eigenvalues and gamma (r = size).
  static StiefelSignature from_frames(int f, std::span<const double> frame_eigenvalues,
                                      double gamma);
};

/// A point on one component of the generalized CPS. Frame i is the complex
/// F-vector z^(i) = x^(i) + i p^(i).
struct StiefelPoint {
  StiefelSignature signature;
  ComplexMatrix frames;  // F x r

  int F() const { return static_cast<int>(frames.rows()); }
  int r() const { return static_cast<int>(frames.cols()); }
  RealVector x(int i) const { return frames.col(i).real(); }
  RealVector p(int i) const { return frames.col(i).imag(); }
  /// Action e_n = (x_n^2 + p_n^2)/2 of frame i.
  double action(int n, int i = 0) const { return 0.5 * std::norm(frames(n, i)); }
};

struct ActionAngle {
  std::vector<double> actions;
  std::vector<double> angles;  // [0, 2 pi)
};

ActionAngle action_angle(const StiefelPoint& point);

/// Inverse of action_angle for r = 1 sphere points with the given gamma.
StiefelPoint point_from_actions(std::span<const double> actions, std::span<const double> angles,
                                double gamma);

/// Uniform point on the CPS sphere sum_n (x_n^2+p_n^2)/2 = 1 + F gamma.
StiefelPoint sample_sphere(int f, double gamma, Rng& rng);

/// Haar-uniform r-frame with column norms set by the signature.
StiefelPoint sample_stiefel(const StiefelSignature& signature, Rng& rng);

/// Omega(gamma) = [2 pi^F/(F-1)!] (2(1+F gamma))^(F-1).
double measure_norm(int f, double gamma);

struct ConstraintReport {
  std::vector<double> norm_residuals;  // per frame
  double max_norm_residual = 0.0;
  double max_overlap_residual = 0.0;   // worst cross-frame overlap (both parts)
  bool pass = false;
};

ConstraintReport check_constraints(const StiefelPoint& point, double tol);

/// Quasi-probability distribution w(gamma) over CPS spheres. Weights may be
/// negative; sampling draws from |w| and carries sign and total |w| mass.
class GammaWeight {
 public:
  enum class Kind { single, delta_comb, triangle, custom };

  static GammaWeight single(double gamma);
  static GammaWeight delta_comb(std::vector<std::pair<double, double>> deltas);
  /// Triangle-window sphere weight on [0, 1 - 1/F].
  static GammaWeight triangle(int f);
  /// Piecewise-constant density: values[i] on [edges[i], edges[i+1]).
  static GammaWeight custom(std::vector<double> edges, std::vector<double> values);

  Kind kind() const { return kind_; }
  int triangle_f() const { return triangle_f_; }
  const std::vector<std::pair<double, double>>& deltas() const { return deltas_; }
  const std::vector<double>& edges() const { return edges_; }
  const std::vector<double>& values() const { return values_; }

  /// Signed integral of w(gamma) * g(gamma). Exact for delta kinds; Gauss-Legendre
  /// quadrature for densities.
  template <class Fn>
  double integrate(Fn&& g) const;

  double total() const;
  double abs_total() const;
  std::pair<double, double> support() const;
  /// Density value (triangle/custom kinds only).
  double density(double gamma) const;

  /// Checks support lies above -1/F and the signed total is 1 within tol.
  void validate(int f, double tol = 1e-8) const;

 private:
  Kind kind_ = Kind::single;
  std::vector<std::pair<double, double>> deltas_;  // (gamma, weight)
  int triangle_f_ = 0;
  std::vector<double> edges_;
  std::vector<double> values_;
};

struct GammaDraw {
  double gamma = 0.0;
  double sign = 1.0;
  double magnitude = 1.0;  // integral of |w|
};

GammaDraw sample_gamma(const GammaWeight& weight, Rng& rng);

/// Triangle-window normalization F * F! / (F^F - 1).
double triangle_norm(int f);

// Nodes and weights of 64-point Gauss-Legendre on [-1, 1].
std::span<const double> gauss_legendre_nodes();
std::span<const double> gauss_legendre_weights();

template <class Fn>
double GammaWeight::integrate(Fn&& g) const {
  double acc = 0.0;
  auto quad = [&](double a, double b, auto&& dens) {
    const auto xs = gauss_legendre_nodes();
    const auto ws = gauss_legendre_weights();
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double x = 0.5 * (b - a) * xs[i] + 0.5 * (a + b);
      s += ws[i] * dens(x) * g(x);
    }
    return 0.5 * (b - a) * s;
  };
  switch (kind_) {
    case Kind::single:
    case Kind::delta_comb:
      for (const auto& [gam, w] : deltas_) acc += w * g(gam);
      break;
    case Kind::triangle: {
      const auto [a, b] = support();
      acc = quad(a, b, [&](double x) { return density(x); });
      break;
    }
    case Kind::custom:
      for (std::size_t i = 0; i + 1 < edges_.size(); ++i)
        acc += quad(edges_[i], edges_[i + 1], [&](double) { return values_[i]; });
      break;
  }
  return acc;
}

}  // namespace cpsdyn
