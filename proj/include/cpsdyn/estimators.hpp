#pragma once

// Monte Carlo time-correlation-function estimators for every kernel family.
// All state indices in this API are 0-based.

#include "cpsdyn/cps.hpp"
#include "cpsdyn/dynamics.hpp"
#include "cpsdyn/qcore.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cpsdyn {

/// Distribution of the CMMcv commutator matrix: Gamma = gamma I + sigma G with
/// G a traceless GUE draw (sigma = 0 gives the scalar case).
struct CommutatorDistribution {
  double gamma = 0.0;
  double sigma = 0.0;
};

enum class EstimatorClass { cc, cx, xc, ww };

struct MethodSpec {
  enum class Family {
    cmm,
    wmm,
    cmmcv,
    cornered_simplex,
    triangle_sqc,
    ehrenfest,
    lambda_point,
    dtwa,
    gdtwa,
    triangle_ww,
    triangle_f2_single,
    hill_ww
  };

  Family family = Family::cmm;
  double gamma = 0.0;
  GammaWeight weight = GammaWeight::single(0.0);  // wmm only
  CommutatorDistribution commutator;              // cmmcv only
  bool fixed_third = false;                       // triangle_sqc: observable gamma = 1/3

  static MethodSpec cmm(double gamma);
  static MethodSpec wmm(GammaWeight weight);
  static MethodSpec cmmcv(CommutatorDistribution dist);
  static MethodSpec cornered_simplex(double gamma);
  static MethodSpec triangle_sqc(bool fixed_third = false);
  static MethodSpec ehrenfest();
  static MethodSpec lambda_point(double gamma);
  static MethodSpec dtwa();
  static MethodSpec gdtwa();
  static MethodSpec triangle_ww();
  static MethodSpec triangle_f2_single(double gamma);
  static MethodSpec hill_ww(double gamma);

  EstimatorClass estimator_class() const;
  bool is_ratio() const { return estimator_class() == EstimatorClass::ww; }
  std::string name() const;
  /// Family/parameter/dimension consistency; throws DomainError.
  void validate(int f) const;
};

std::string family_name(MethodSpec::Family family);
std::optional<MethodSpec::Family> parse_family(std::string_view name);

struct TCFRequest {
  HermitianMatrix hamiltonian = HermitianMatrix::zero(1);
  int n = 0, m = 0;  // rho = |n><m|
  int k = 0, l = 0;  // A = |k><l|
  std::vector<double> t_grid;
  long n_traj = 1;
  std::uint64_t seed = 0;
  MethodSpec method;
  Backend backend;
  int threads = 1;
};

struct TCFResult {
  std::vector<double> t_grid;
  std::vector<Complex> estimates;
  std::vector<double> normalization;  // C(t); identically 1 outside ww
  std::vector<double> se_re, se_im;   // NaN when n_traj == 1
  long n_traj = 0;
  /// Smallest per-trajectory numerator over all times (ww only, else NaN).
  double min_contribution = 0.0;
};

/// Dispatches on the method's class.
TCFResult estimate_tcf(const TCFRequest& req);

TCFResult estimate_tcf_cc(const TCFRequest& req);
TCFResult estimate_tcf_cx(const TCFRequest& req);
TCFResult estimate_tcf_xc(const TCFRequest& req);
TCFResult estimate_tcf_ww(const TCFRequest& req);

/// B(F) = 3/(7(F-1)) + 60/(7(F+13)).
double hill_exponent(int f);

/// Cornered-simplex window normalization F (F gamma/(1 + F gamma))^(F-1).
double cornered_norm(int f, double gamma);

enum class WindowKind {
  triangle,      // h(e_n - 1) prod h(2 - e_n - e_k)
  triangle_obs,  // h(e_n - 1) prod h(1 - e_k)
  hill_obs,      // prod (e_n - e_k)^B h(e_n - e_k)
  hill_rho,      // prod h(e_n - e_k)
  cornered       // h(e_n - 1) / cornered_norm, gamma from the point
};

double eval_window(WindowKind kind, const StiefelPoint& point, int n);

/// Blocked jackknife standard error of sum(num)/sum(den). Block b holds
/// trajectories [i*B/N] == b; inputs are per-block sums.
double jackknife_ratio_se(const std::vector<double>& num_blocks,
                          const std::vector<double>& den_blocks);

/// Monte Carlo of int dgamma w int dmu [K(X)]_mn [K_A(X)]_lk for every
/// quadruple at once. K_A is the inverse kernel (CMM pair) or K itself
/// (self-dual wMM pair). Entry index ((m F + n) F + l) F + k.
struct MappingCheck {
  int F = 0;
  std::vector<Complex> mean;
  std::vector<double> se_re, se_im;

  std::size_t index(int m, int n, int l, int k) const {
    return static_cast<std::size_t>(((m * F + n) * F + l) * F + k);
  }
  /// Largest |mean - delta_mk delta_nl| / SE over both parts.
  double max_z() const;
  double max_abs_error() const;
};

MappingCheck mapping_identity_mc(const GammaWeight& weight, int f, bool inverse_observable,
                                 long n_traj, std::uint64_t seed, int threads = 1);

struct IntraElectronReport {
  double lhs = 0.0;  // 1/2 Tr[rho {A, H}]
  double rhs = 0.0;  // Monte Carlo over the weighted spheres
  double rhs_se = 0.0;
  double linear_moment = 0.0;  // int w (F gamma^2 + 2 gamma)
  double cubic_moment = 0.0;   // int w (1 + F gamma)^3
  double cubic_target = 0.0;   // (1+F)(2+F)/2
  bool moments_ok = false;     // both conditions within 1e-6
  bool agree = false;          // |lhs - rhs| <= 5 SE
};

IntraElectronReport intra_electron_check(const GammaWeight& weight, const HermitianMatrix& h,
                                         const HermitianMatrix& rho, const HermitianMatrix& a,
                                         long n_traj, std::uint64_t seed, int threads = 1);

/// Two-delta comb at gamma = 0 and a second sphere that satisfies both the
/// self-dual condition and the cubic moment condition.
GammaWeight intra_electron_comb(int f);

/// gamma with (1 + F gamma)^3 = (1+F)(2+F)/2.
double intra_electron_single_gamma(int f);

}  // namespace cpsdyn
