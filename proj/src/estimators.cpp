#include "cpsdyn/estimators.hpp"

#include "cpsdyn/errors.hpp"
#include "cpsdyn/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace cpsdyn {

using Family = MethodSpec::Family;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double heav(double x) { return x > 0.0 ? 1.0 : 0.0; }

void require_positive_gamma(double gamma, const char* what) {
  if (!(gamma > 0.0)) {
    std::ostringstream os;
    os << what << " needs gamma > 0, got " << gamma;
    throw DomainError(os.str());
  }
}

void require_sphere(int f, double gamma, const char* what) {
  if (!(1.0 + f * gamma > 0.0)) {
    std::ostringstream os;
    os << what << ": gamma = " << gamma << " must exceed -1/F = " << -1.0 / f;
    throw DomainError(os.str());
  }
}

}  // namespace

// ---------------------------------------------------------------- MethodSpec

MethodSpec MethodSpec::cmm(double gamma) {
  MethodSpec s;
  s.family = Family::cmm;
  s.gamma = gamma;
  return s;
}

MethodSpec MethodSpec::wmm(GammaWeight weight) {
  MethodSpec s;
  s.family = Family::wmm;
  s.weight = std::move(weight);
  return s;
}

MethodSpec MethodSpec::cmmcv(CommutatorDistribution dist) {
  MethodSpec s;
  s.family = Family::cmmcv;
  s.gamma = dist.gamma;
  s.commutator = dist;
  return s;
}

MethodSpec MethodSpec::cornered_simplex(double gamma) {
  MethodSpec s;
  s.family = Family::cornered_simplex;
  s.gamma = gamma;
  return s;
}

MethodSpec MethodSpec::triangle_sqc(bool fixed_third) {
  MethodSpec s;
  s.family = Family::triangle_sqc;
  s.fixed_third = fixed_third;
  return s;
}

MethodSpec MethodSpec::ehrenfest() {
  MethodSpec s;
  s.family = Family::ehrenfest;
  return s;
}

MethodSpec MethodSpec::lambda_point(double gamma) {
  MethodSpec s;
  s.family = Family::lambda_point;
  s.gamma = gamma;
  return s;
}

MethodSpec MethodSpec::dtwa() {
  MethodSpec s;
  s.family = Family::dtwa;
  return s;
}

MethodSpec MethodSpec::gdtwa() {
  MethodSpec s;
  s.family = Family::gdtwa;
  return s;
}

MethodSpec MethodSpec::triangle_ww() {
  MethodSpec s;
  s.family = Family::triangle_ww;
  return s;
}

MethodSpec MethodSpec::triangle_f2_single(double gamma) {
  MethodSpec s;
  s.family = Family::triangle_f2_single;
  s.gamma = gamma;
  return s;
}

MethodSpec MethodSpec::hill_ww(double gamma) {
  MethodSpec s;
  s.family = Family::hill_ww;
  s.gamma = gamma;
  return s;
}

EstimatorClass MethodSpec::estimator_class() const {
  switch (family) {
    case Family::cmm:
    case Family::wmm:
    case Family::cmmcv:
      return EstimatorClass::cc;
    case Family::cornered_simplex:
      return EstimatorClass::cx;
    case Family::triangle_sqc:
    case Family::ehrenfest:
    case Family::lambda_point:
    case Family::dtwa:
    case Family::gdtwa:
      return EstimatorClass::xc;
    case Family::triangle_ww:
    case Family::triangle_f2_single:
    case Family::hill_ww:
      return EstimatorClass::ww;
  }
  return EstimatorClass::cc;
}

namespace {

constexpr std::pair<Family, const char*> kFamilyNames[] = {
    {Family::cmm, "cmm"},
    {Family::wmm, "wmm"},
    {Family::cmmcv, "cmmcv"},
    {Family::cornered_simplex, "cornered_simplex"},
    {Family::triangle_sqc, "triangle_sqc"},
    {Family::ehrenfest, "ehrenfest"},
    {Family::lambda_point, "lambda_point"},
    {Family::dtwa, "dtwa"},
    {Family::gdtwa, "gdtwa"},
    {Family::triangle_ww, "triangle_ww"},
    {Family::triangle_f2_single, "triangle_f2_single"},
    {Family::hill_ww, "hill_ww"},
};

}  // namespace

std::string family_name(Family family) {
  for (const auto& [f, name] : kFamilyNames)
    if (f == family) return name;
  return "unknown";
}

std::optional<Family> parse_family(std::string_view name) {
  for (const auto& [f, n] : kFamilyNames)
    if (name == n) return f;
  return std::nullopt;
}

std::string MethodSpec::name() const {
  std::ostringstream os;
  os.precision(17);
  os << family_name(family);
  switch (family) {
    case Family::cmm:
    case Family::cornered_simplex:
    case Family::lambda_point:
    case Family::triangle_f2_single:
    case Family::hill_ww:
      os << "(gamma=" << gamma << ")";
      break;
    case Family::cmmcv:
      os << "(gamma=" << commutator.gamma << ",sigma=" << commutator.sigma << ")";
      break;
    case Family::triangle_sqc:
      os << (fixed_third ? "(obs_gamma=1/3)" : "(obs_gamma=shell)");
      break;
    case Family::wmm: {
      os << "(";
      switch (weight.kind()) {
        case GammaWeight::Kind::single:
        case GammaWeight::Kind::delta_comb: {
          const char* sep = "";
          for (const auto& [g, w] : weight.deltas()) {
            os << sep << g << ":" << w;
            sep = ",";
          }
          break;
        }
        case GammaWeight::Kind::triangle:
          os << "triangle";
          break;
        case GammaWeight::Kind::custom:
          os << "custom";
          break;
      }
      os << ")";
      break;
    }
    default:
      break;
  }
  return os.str();
}

void MethodSpec::validate(int f) const {
  if (f < 1) throw DomainError("number of states F must be >= 1");
  switch (family) {
    case Family::cmm:
      require_sphere(f, gamma, "cmm");
      break;
    case Family::wmm: {
      weight.validate(f, 1e-8);
      const double moment = weight.integrate([f](double g) { return f * g * g + 2.0 * g; });
      if (!(std::abs(moment - 1.0) <= 1e-6)) {
        std::ostringstream os;
        os.precision(12);
        os << "wmm weight violates int w(gamma) (F gamma^2 + 2 gamma) dgamma = 1: measured "
           << moment;
        throw DomainError(os.str());
      }
      break;
    }
    case Family::cmmcv:
      require_sphere(f, commutator.gamma, "cmmcv");
      if (!(commutator.sigma >= 0.0)) throw DomainError("cmmcv: sigma must be >= 0");
      break;
    case Family::cornered_simplex:
      require_positive_gamma(gamma, "cornered_simplex");
      break;
    case Family::triangle_sqc:
    case Family::triangle_ww:
      if (f < 2) throw DomainError("triangle windows need F >= 2");
      break;
    case Family::ehrenfest:
      if (gamma != 0.0) throw DomainError("ehrenfest fixes gamma = 0");
      break;
    case Family::lambda_point:
      require_positive_gamma(gamma, "lambda_point");
      break;
    case Family::dtwa:
      if (f != 2) {
        std::ostringstream os;
        os << "dtwa is defined for F = 2 only (got F = " << f << "); use gdtwa";
        throw DomainError(os.str());
      }
      break;
    case Family::gdtwa:
      if (f < 2) throw DomainError("gdtwa needs F >= 2");
      break;
    case Family::triangle_f2_single:
      if (f != 2) throw DomainError("triangle_f2_single needs F = 2");
      require_sphere(f, gamma, "triangle_f2_single");
      break;
    case Family::hill_ww:
      if (f < 2) throw DomainError("hill_ww needs F >= 2");
      require_sphere(f, gamma, "hill_ww");
      break;
  }
}

// ------------------------------------------------------------------ windows

double hill_exponent(int f) {
  if (f < 2) throw DomainError("hill exponent needs F >= 2");
  return 3.0 / (7.0 * (f - 1)) + 60.0 / (7.0 * (f + 13));
}

double cornered_norm(int f, double gamma) {
  require_positive_gamma(gamma, "cornered window");
  return f * std::pow(f * gamma / (1.0 + f * gamma), f - 1);
}

namespace {

// Windows on a vector of actions.
double triangle_window(const double* e, int f, int n) {
  double w = heav(e[n] - 1.0);
  for (int k = 0; k < f && w > 0.0; ++k)
    if (k != n) w *= heav(2.0 - e[n] - e[k]);
  return w;
}

double triangle_obs_window(const double* e, int f, int n) {
  double w = heav(e[n] - 1.0);
  for (int k = 0; k < f && w > 0.0; ++k)
    if (k != n) w *= heav(1.0 - e[k]);
  return w;
}

double hill_rho_window(const double* e, int f, int n) {
  for (int k = 0; k < f; ++k)
    if (k != n && !(e[n] - e[k] > 0.0)) return 0.0;
  return 1.0;
}

double hill_obs_window(const double* e, int f, int n, double b) {
  double w = 1.0;
  for (int k = 0; k < f; ++k) {
    if (k == n) continue;
    const double d = e[n] - e[k];
    if (!(d > 0.0)) return 0.0;
    w *= std::pow(d, b);
  }
  return w;
}

}  // namespace

double eval_window(WindowKind kind, const StiefelPoint& point, int n) {
  if (point.r() != 1) throw DimensionError("windows are defined on r = 1 points");
  const int f = point.F();
  if (n < 0 || n >= f) throw DimensionError("window state index out of range");
  std::vector<double> e(f);
  for (int j = 0; j < f; ++j) e[j] = point.action(j);
  switch (kind) {
    case WindowKind::triangle:
      return triangle_window(e.data(), f, n);
    case WindowKind::triangle_obs:
      return triangle_obs_window(e.data(), f, n);
    case WindowKind::hill_obs:
      return hill_obs_window(e.data(), f, n, hill_exponent(f));
    case WindowKind::hill_rho:
      return hill_rho_window(e.data(), f, n);
    case WindowKind::cornered:
      return heav(e[n] - 1.0) / cornered_norm(f, point.signature.gamma);
  }
  return 0.0;
}

// -------------------------------------------------------------- reduction

double jackknife_ratio_se(const std::vector<double>& num_blocks,
                          const std::vector<double>& den_blocks) {
  const std::size_t b = num_blocks.size();
  if (b != den_blocks.size()) throw DimensionError("jackknife block count mismatch");
  if (b < 2) return kNaN;
  double ns = 0.0, ds = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    ns += num_blocks[i];
    ds += den_blocks[i];
  }
  std::vector<double> theta(b);
  double mean = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double d = ds - den_blocks[i];
    if (d == 0.0) return kNaN;
    theta[i] = (ns - num_blocks[i]) / d;
    mean += theta[i];
  }
  mean /= static_cast<double>(b);
  double ss = 0.0;
  for (const double t : theta) ss += (t - mean) * (t - mean);
  return std::sqrt(ss * static_cast<double>(b - 1) / static_cast<double>(b));
}

namespace {

constexpr long kMaxBlocks = 100;

struct BlockSums {
  long count = 0;
  std::vector<Complex> num;
  std::vector<double> den;
  double min_num = std::numeric_limits<double>::infinity();
};

/// Runs n trajectories split into min(100, n) contiguous blocks. Each block
/// is summed in index order by one worker; the result depends only on n.
/// make_worker() is called once per thread and must return a callable
/// (long index, Complex* num, double* den) writing `width` values each.
template <class MakeWorker>
std::vector<BlockSums> run_blocks(long n, std::size_t width, int threads,
                                  MakeWorker&& make_worker) {
  const long nb = std::min(kMaxBlocks, n);
  std::vector<BlockSums> blocks(static_cast<std::size_t>(nb));
  std::atomic<long> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto body = [&]() {
    try {
      auto worker = make_worker();
      std::vector<Complex> num(width);
      std::vector<double> den(width);
      for (long b = next++; b < nb; b = next++) {
        const long lo = (b * n + nb - 1) / nb;
        const long hi = ((b + 1) * n + nb - 1) / nb;
        BlockSums& out = blocks[static_cast<std::size_t>(b)];
        out.num.assign(width, Complex(0.0, 0.0));
        out.den.assign(width, 0.0);
        for (long i = lo; i < hi; ++i) {
          worker(i, num.data(), den.data());
          for (std::size_t t = 0; t < width; ++t) {
            out.num[t] += num[t];
            out.den[t] += den[t];
            out.min_num = std::min(out.min_num, num[t].real());
          }
        }
        out.count = hi - lo;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = nb;
    }
  };

  const int nthreads = static_cast<int>(std::clamp<long>(threads, 1, nb));
  if (nthreads == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return blocks;
}

// ------------------------------------------------------------ trajectories

struct Shared {
  const TCFRequest* req = nullptr;
  int f = 0;
  std::size_t nt = 0;
  std::vector<ComplexMatrix> u;                // exact backend, one per time
  std::vector<std::pair<long, double>> steps;  // rk4 backend, per interval
  DiscretePointSet set_n, set_m;               // (g)dtwa
  double obs_gamma_const = 0.0;
  double hill_b = 1.0;
  double cornered_inv = 1.0;
};

class Worker {
 public:
  explicit Worker(const Shared& s)
      : s_(s), req_(*s.req), f_(s.f), z0_(s.f, 1), zt_(s.f, 1), e_(static_cast<std::size_t>(s.f)) {}

  void operator()(long index, Complex* num, double* den) {
    Rng rng = make_stream(req_.seed, static_cast<std::uint64_t>(index));
    switch (req_.method.family) {
      case Family::cmm:
        cmm(rng, num, den);
        break;
      case Family::wmm:
        wmm(rng, num, den);
        break;
      case Family::cmmcv:
        cmmcv(rng, num, den);
        break;
      case Family::cornered_simplex:
        cornered(rng, num, den);
        break;
      case Family::triangle_sqc:
        triangle_sqc(rng, num, den);
        break;
      case Family::ehrenfest:
      case Family::lambda_point:
        lambda_point(rng, num, den);
        break;
      case Family::dtwa:
      case Family::gdtwa:
        gdtwa(rng, num, den);
        break;
      case Family::triangle_ww:
        triangle_ww(rng, num, den);
        break;
      case Family::triangle_f2_single:
        triangle_f2_single(rng, num, den);
        break;
      case Family::hill_ww:
        hill_ww(rng, num, den);
        break;
    }
  }

 private:
  // fn(time index, frames at that time)
  template <class Fn>
  void evolve(const ComplexMatrix& z0, const std::vector<int>& signs, Fn&& fn) {
    if (req_.backend.kind == Backend::Kind::exact) {
      for (std::size_t t = 0; t < s_.nt; ++t) {
        zt_.noalias() = s_.u[t] * z0;
        fn(t, zt_);
      }
      return;
    }
    zt_ = z0;
    for (std::size_t t = 0; t < s_.nt; ++t) {
      const auto [steps, dt] = s_.steps[t];
      if (steps > 0) rk4_frames(zt_, signs, req_.hamiltonian.matrix(), dt, steps, work_);
      fn(t, zt_);
    }
  }

  void sphere(double gamma, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    double norm2 = 0.0;
    for (int j = 0; j < f_; ++j) {
      const double x = normal(rng);
      const double p = normal(rng);
      z0_(j, 0) = Complex(x, p);
      norm2 += x * x + p * p;
    }
    z0_ *= std::sqrt(2.0 * (1.0 + f_ * gamma) / norm2);
  }

  void from_actions(Rng& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int j = 0; j < f_; ++j) z0_(j, 0) = std::polar(std::sqrt(2.0 * e_[j]), kTwoPi * uni(rng));
  }

  // Actions inside the triangle window of state c, density proportional to
  // u = 2 - e_c on the window; uniform angles.
  void triangle_point(int c, Rng& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u = std::sqrt(uni(rng));
    for (int j = 0; j < f_; ++j) e_[j] = (j == c) ? 2.0 - u : u * uni(rng);
    from_actions(rng);
  }

  void actions_at(const ComplexMatrix& z) {
    for (int j = 0; j < f_; ++j) e_[j] = 0.5 * std::norm(z(j, 0));
  }

  void fill_den(double* den) { std::fill(den, den + s_.nt, 1.0); }

  void cmm(Rng& rng, Complex* num, double* den) {
    const double g = req_.method.gamma;
    sphere(g, rng);
    const Complex w = static_cast<double>(f_) * cps_kernel_element(z0_, g, req_.m, req_.n);
    evolve(z0_, sphere_signs_, [&](std::size_t t, const ComplexMatrix& z) {
      num[t] = w * cps_inverse_element(z, f_, g, req_.l, req_.k);
    });
    fill_den(den);
  }

  void wmm(Rng& rng, Complex* num, double* den) {
    const GammaDraw d = sample_gamma(req_.method.weight, rng);
    sphere(d.gamma, rng);
    const Complex w =
        d.sign * d.magnitude * f_ * cps_kernel_element(z0_, d.gamma, req_.m, req_.n);
    evolve(z0_, sphere_signs_, [&](std::size_t t, const ComplexMatrix& z) {
      num[t] = w * cps_kernel_element(z, d.gamma, req_.l, req_.k);
    });
    fill_den(den);
  }

  void cmmcv(Rng& rng, Complex* num, double* den) {
    const CommutatorDistribution& cd = req_.method.commutator;
    sphere(cd.gamma, rng);
    Complex gamma_mn = (req_.m == req_.n) ? Complex(cd.gamma) : Complex(0.0);
    if (cd.sigma > 0.0) {
      // traceless GUE draw
      std::normal_distribution<double> normal(0.0, 1.0);
      ComplexMatrix g(f_, f_);
      for (int i = 0; i < f_; ++i) {
        g(i, i) = normal(rng);
        for (int j = i + 1; j < f_; ++j) {
          const double re = normal(rng);
          const double im = normal(rng);
          g(i, j) = Complex(re, im) / std::numbers::sqrt2;
          g(j, i) = std::conj(g(i, j));
        }
      }
      const Complex tr = g.trace() / static_cast<double>(f_);
      g.diagonal().array() -= tr;
      gamma_mn += cd.sigma * g(req_.m, req_.n);
    }
    const Complex w =
        static_cast<double>(f_) * (0.5 * z0_(req_.m, 0) * std::conj(z0_(req_.n, 0)) - gamma_mn);
    evolve(z0_, sphere_signs_, [&](std::size_t t, const ComplexMatrix& z) {
      num[t] = w * cps_inverse_element(z, f_, cd.gamma, req_.l, req_.k);
    });
    fill_den(den);
  }

  void cornered(Rng& rng, Complex* num, double* den) {
    const double g = req_.method.gamma;
    sphere(g, rng);
    const Complex w = static_cast<double>(f_) * cps_kernel_element(z0_, g, req_.m, req_.n);
    evolve(z0_, sphere_signs_, [&](std::size_t t, const ComplexMatrix& z) {
      num[t] = w * (heav(0.5 * std::norm(z(req_.k, 0)) - 1.0) * s_.cornered_inv);
    });
    fill_den(den);
  }

  void triangle_sqc(Rng& rng, Complex* num, double* den) {
    Complex w = 1.0;
    if (req_.n == req_.m) {
      triangle_point(req_.n, rng);
    } else {
      std::uniform_int_distribution<int> pick(0, 1);
      triangle_point(pick(rng) == 0 ? req_.n : req_.m, rng);
      w = 1.2 * z0_(req_.m, 0) * std::conj(z0_(req_.n, 0));
    }
    double g = s_.obs_gamma_const;
    if (!req_.method.fixed_third) {
      double total = 0.0;
      for (int j = 0; j < f_; ++j) total += e_[j];
      g = (total - 1.0) / f_;
    }
    evolve(z0_, sphere_signs_, [&](std::size_t t, const ComplexMatrix& z) {
      num[t] = w * cps_kernel_element(z, g, req_.l, req_.k);
    });
    fill_den(den);
  }

  void lambda_point(Rng& rng, Complex* num, double* den) {
    const double g = req_.method.gamma;
    Complex w = 1.0;
    std::fill(e_.begin(), e_.end(), g);
    if (req_.n == req_.m) {
      e_[req_.n] = 1.0 + g;
      from_actions(rng);
    } else {
      const double c = 0.5 * (1.0 + 2.0 * g);
      e_[req_.n] = c;
      e_[req_.m] = c;
      from_actions(rng);
      w = 2.0 * z0_(req_.m, 0) * std::conj(z0_(req_.n, 0)) / ((1.0 + 2.0 * g) * (1.0 + 2.0 * g));
    }
    evolve(z0_, sphere_signs_, [&](std::size_t t, const ComplexMatrix& z) {
      num[t] = w * cps_kernel_element(z, g, req_.l, req_.k);
    });
    fill_den(den);
  }

  void gdtwa(Rng& rng, Complex* num, double* den) {
    const DiscretePointSet* set = &s_.set_n;
    if (req_.n != req_.m) {
      std::uniform_int_distribution<int> pick(0, 1);
      if (pick(rng) == 1) set = &s_.set_m;
    }
    std::uniform_int_distribution<std::size_t> which(0, set->size() - 1);
    const std::size_t a = which(rng);
    const StiefelPoint& pt = set->points[a];
    const Complex w = (req_.n == req_.m) ? Complex(1.0) : 2.0 * set->kernels[a](req_.m, req_.n);
    evolve(pt.frames, pt.signature.signs, [&](std::size_t t, const ComplexMatrix& z) {
      num[t] = w * stiefel_kernel_element(pt.signature, z, req_.l, req_.k);
    });
    fill_den(den);
  }

  void triangle_ww(Rng& rng, Complex* num, double* den) {
    triangle_point(req_.n, rng);
    evolve(z0_, sphere_signs_, [&](std::size_t t, const ComplexMatrix& z) {
      actions_at(z);
      double total = 0.0, mine = 0.0;
      for (int j = 0; j < f_; ++j) {
        const double v = triangle_obs_window(e_.data(), f_, j);
        total += v;
        if (j == req_.k) mine = v;
      }
      num[t] = mine;
      den[t] = total;
    });
  }

  void triangle_f2_single(Rng& rng, Complex* num, double* den) {
    const double s = 1.0 + 2.0 * req_.method.gamma;
    sphere(req_.method.gamma, rng);
    const double a0 = std::norm(z0_(req_.n, 0));  // x^2 + p^2
    const double rho = heav(a0 - s);
    evolve(z0_, sphere_signs_, [&](std::size_t t, const ComplexMatrix& z) {
      double total = 0.0, mine = 0.0;
      for (int j = 0; j < 2; ++j) {
        const double at = std::norm(z(j, 0));
        const double lo = std::min(a0, at);
        const double q = rho * heav(at - s) * (1.0 - s * s / (lo * lo));
        total += q;
        if (j == req_.k) mine = q;
      }
      num[t] = mine;
      den[t] = total;
    });
  }

  void hill_ww(Rng& rng, Complex* num, double* den) {
    sphere(req_.method.gamma, rng);
    actions_at(z0_);
    const double rho = f_ * hill_rho_window(e_.data(), f_, req_.n);
    if (rho == 0.0) {
      std::fill(num, num + s_.nt, Complex(0.0));
      std::fill(den, den + s_.nt, 0.0);
      return;
    }
    evolve(z0_, sphere_signs_, [&](std::size_t t, const ComplexMatrix& z) {
      actions_at(z);
      double total = 0.0, mine = 0.0;
      for (int j = 0; j < f_; ++j) {
        const double v = hill_obs_window(e_.data(), f_, j, s_.hill_b);
        total += v;
        if (j == req_.k) mine = v;
      }
      num[t] = rho * mine;
      den[t] = rho * total;
    });
  }

  const Shared& s_;
  const TCFRequest& req_;
  int f_;
  ComplexMatrix z0_, zt_;
  ComplexMatrix work_[5];
  std::vector<double> e_;
  const std::vector<int> sphere_signs_{1};
};

void check_request(const TCFRequest& req) {
  const int f = req.hamiltonian.dim();
  for (const int idx : {req.n, req.m, req.k, req.l})
    if (idx < 0 || idx >= f) {
      std::ostringstream os;
      os << "state index " << idx << " outside [0, " << f - 1 << "]";
      throw DimensionError(os.str());
    }
  if (req.n_traj < 1) throw DomainError("n_traj must be >= 1");
  if (req.t_grid.empty()) throw DomainError("time grid is empty");
  if (req.t_grid.front() < 0.0 || !std::is_sorted(req.t_grid.begin(), req.t_grid.end()))
    throw DomainError("time grid must be nonnegative and nondecreasing");
  if (req.backend.kind == Backend::Kind::rk4 && !(req.backend.dt > 0.0))
    throw DomainError("rk4 backend needs dt > 0");
  req.method.validate(f);
}

TCFResult run_estimator(const TCFRequest& req) {
  check_request(req);
  const MethodSpec& method = req.method;
  const int f = req.hamiltonian.dim();

  Shared shared;
  shared.req = &req;
  shared.f = f;
  shared.nt = req.t_grid.size();
  if (req.backend.kind == Backend::Kind::exact) {
    const SpectralDecomposition eig = hermitian_eig(req.hamiltonian);
    for (const double t : req.t_grid) shared.u.push_back(propagator(eig, t).matrix);
  } else {
    double prev = 0.0;
    for (const double t : req.t_grid) {
      const double span = t - prev;
      if (span > 0.0) {
        const long steps = static_cast<long>(std::ceil(span / req.backend.dt - 1e-9));
        shared.steps.emplace_back(steps, span / steps);
      } else {
        shared.steps.emplace_back(0, 0.0);
      }
      prev = t;
    }
  }
  if (method.family == Family::dtwa || method.family == Family::gdtwa) {
    shared.set_n = gdtwa_points(f, req.n);
    if (req.m != req.n) shared.set_m = gdtwa_points(f, req.m);
  }
  if (method.family == Family::triangle_sqc) shared.obs_gamma_const = 1.0 / 3.0;
  if (method.family == Family::hill_ww) shared.hill_b = hill_exponent(f);
  if (method.family == Family::cornered_simplex)
    shared.cornered_inv = 1.0 / cornered_norm(f, method.gamma);

  const std::vector<BlockSums> blocks = run_blocks(req.n_traj, shared.nt, req.threads,
                                                   [&shared]() { return Worker(shared); });

  const std::size_t nb = blocks.size();
  TCFResult res;
  res.t_grid = req.t_grid;
  res.n_traj = req.n_traj;
  res.estimates.resize(shared.nt);
  res.normalization.resize(shared.nt);
  res.se_re.resize(shared.nt);
  res.se_im.resize(shared.nt);
  const bool ratio = method.is_ratio();
  res.min_contribution = kNaN;
  if (ratio) {
    res.min_contribution = std::numeric_limits<double>::infinity();
    for (const auto& b : blocks) res.min_contribution = std::min(res.min_contribution, b.min_num);
  }

  std::vector<double> re(nb), im(nb), den(nb);
  for (std::size_t t = 0; t < shared.nt; ++t) {
    Complex num_total = 0.0;
    double den_total = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      re[b] = blocks[b].num[t].real();
      im[b] = blocks[b].num[t].imag();
      den[b] = ratio ? blocks[b].den[t] : static_cast<double>(blocks[b].count);
      num_total += blocks[b].num[t];
      den_total += den[b];
    }
    if (ratio) {
      res.estimates[t] = den_total > 0.0 ? num_total / den_total : Complex(kNaN, kNaN);
      res.normalization[t] = den_total / static_cast<double>(req.n_traj);
    } else {
      res.estimates[t] = num_total / static_cast<double>(req.n_traj);
      res.normalization[t] = 1.0;
    }
    res.se_re[t] = jackknife_ratio_se(re, den);
    res.se_im[t] = jackknife_ratio_se(im, den);
  }
  return res;
}

void require_class(const TCFRequest& req, EstimatorClass want, const char* what) {
  if (req.method.estimator_class() != want) {
    std::ostringstream os;
    os << what << " does not handle method " << family_name(req.method.family);
    throw DomainError(os.str());
  }
}

}  // namespace

TCFResult estimate_tcf_cc(const TCFRequest& req) {
  require_class(req, EstimatorClass::cc, "cc estimator");
  return run_estimator(req);
}

TCFResult estimate_tcf_cx(const TCFRequest& req) {
  require_class(req, EstimatorClass::cx, "cx estimator");
  if (req.k != req.l)
    throw DomainError("cornered_simplex windows are diagonal: observable must be |k><k|");
  return run_estimator(req);
}

TCFResult estimate_tcf_xc(const TCFRequest& req) {
  require_class(req, EstimatorClass::xc, "xc estimator");
  return run_estimator(req);
}

TCFResult estimate_tcf_ww(const TCFRequest& req) {
  require_class(req, EstimatorClass::ww, "ww estimator");
  if (req.n != req.m || req.k != req.l)
    throw DomainError("ww estimators take population-population indices only (n = m, k = l)");
  return run_estimator(req);
}

TCFResult estimate_tcf(const TCFRequest& req) {
  switch (req.method.estimator_class()) {
    case EstimatorClass::cc:
      return estimate_tcf_cc(req);
    case EstimatorClass::cx:
      return estimate_tcf_cx(req);
    case EstimatorClass::xc:
      return estimate_tcf_xc(req);
    case EstimatorClass::ww:
      return estimate_tcf_ww(req);
  }
  throw DomainError("unknown estimator class");
}

// ----------------------------------------------------------- mapping check

namespace {

// |err| / se, with exact zeros (se = 0) treated as agreement only if err = 0.
double zscore(double err, double se) {
  if (se > 0.0) return std::abs(err) / se;
  return err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

}  // namespace

double MappingCheck::max_z() const {
  double worst = 0.0;
  for (int m = 0; m < F; ++m)
    for (int n = 0; n < F; ++n)
      for (int l = 0; l < F; ++l)
        for (int k = 0; k < F; ++k) {
          const std::size_t i = index(m, n, l, k);
          const double want = (m == k && n == l) ? 1.0 : 0.0;
          worst = std::max({worst, zscore(mean[i].real() - want, se_re[i]),
                            zscore(mean[i].imag(), se_im[i])});
        }
  return worst;
}

double MappingCheck::max_abs_error() const {
  double worst = 0.0;
  for (int m = 0; m < F; ++m)
    for (int n = 0; n < F; ++n)
      for (int l = 0; l < F; ++l)
        for (int k = 0; k < F; ++k) {
          const double want = (m == k && n == l) ? 1.0 : 0.0;
          worst = std::max(worst, std::abs(mean[index(m, n, l, k)] - want));
        }
  return worst;
}

MappingCheck mapping_identity_mc(const GammaWeight& weight, int f, bool inverse_observable,
                                 long n_traj, std::uint64_t seed, int threads) {
  weight.validate(f, 1e-8);
  if (n_traj < 1) throw DomainError("n_traj must be >= 1");
  const std::size_t width = static_cast<std::size_t>(f) * f * f * f;
  auto make = [&]() {
    return [&, z = ComplexMatrix(f, 1), ka = ComplexMatrix(f, f), kr = ComplexMatrix(f, f)](
               long i, Complex* num, double* den) mutable {
      Rng rng = make_stream(seed, static_cast<std::uint64_t>(i));
      const GammaDraw d = sample_gamma(weight, rng);
      z = sample_sphere(f, d.gamma, rng).frames;
      const double scale = d.sign * d.magnitude * f;
      for (int a = 0; a < f; ++a)
        for (int b = 0; b < f; ++b) {
          kr(a, b) = cps_kernel_element(z, d.gamma, a, b);
          ka(a, b) = inverse_observable ? cps_inverse_element(z, f, d.gamma, a, b) : kr(a, b);
        }
      std::size_t idx = 0;
      for (int m = 0; m < f; ++m)
        for (int n = 0; n < f; ++n)
          for (int l = 0; l < f; ++l)
            for (int k = 0; k < f; ++k) {
              num[idx] = scale * kr(m, n) * ka(l, k);
              den[idx++] = 1.0;
            }
    };
  };
  const std::vector<BlockSums> blocks = run_blocks(n_traj, width, threads, make);
  MappingCheck out;
  out.F = f;
  out.mean.resize(width);
  out.se_re.resize(width);
  out.se_im.resize(width);
  std::vector<double> re(blocks.size()), im(blocks.size()), cnt(blocks.size());
  for (std::size_t j = 0; j < width; ++j) {
    Complex total = 0.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      re[b] = blocks[b].num[j].real();
      im[b] = blocks[b].num[j].imag();
      cnt[b] = static_cast<double>(blocks[b].count);
      total += blocks[b].num[j];
    }
    out.mean[j] = total / static_cast<double>(n_traj);
    out.se_re[j] = jackknife_ratio_se(re, cnt);
    out.se_im[j] = jackknife_ratio_se(im, cnt);
  }
  return out;
}

// --------------------------------------------------------- intra-electron

GammaWeight intra_electron_comb(int f) {
  if (f < 1) throw DomainError("F must be >= 1");
  const double target = 0.5 * (1.0 + f) * (2.0 + f);
  // S = 1 + F gamma of the second sphere solves F S^2 + c S + c = 0, c = F + 1 - target
  const double c = f + 1.0 - target;
  const double s2 = (-c + std::sqrt(c * c - 4.0 * f * c)) / (2.0 * f);
  const double w2 = f / (s2 * s2 - 1.0);
  return GammaWeight::delta_comb({{0.0, 1.0 - w2}, {(s2 - 1.0) / f, w2}});
}

double intra_electron_single_gamma(int f) {
  const double target = 0.5 * (1.0 + f) * (2.0 + f);
  return (std::cbrt(target) - 1.0) / f;
}

IntraElectronReport intra_electron_check(const GammaWeight& weight, const HermitianMatrix& h,
                                         const HermitianMatrix& rho, const HermitianMatrix& a,
                                         long n_traj, std::uint64_t seed, int threads) {
  const int f = h.dim();
  if (rho.dim() != f || a.dim() != f) throw DimensionError("operator dimensions differ");
  if (n_traj < 1) throw DomainError("n_traj must be >= 1");
  weight.validate(f, 1e-8);

  IntraElectronReport rep;
  const ComplexMatrix anti = a.matrix() * h.matrix() + h.matrix() * a.matrix();
  rep.lhs = 0.5 * (rho.matrix() * anti).trace().real();
  rep.linear_moment = weight.integrate([f](double g) { return f * g * g + 2.0 * g; });
  rep.cubic_moment = weight.integrate([f](double g) { return std::pow(1.0 + f * g, 3); });
  rep.cubic_target = 0.5 * (1.0 + f) * (2.0 + f);
  rep.moments_ok = std::abs(rep.linear_moment - 1.0) <= 1e-6 &&
                   std::abs(rep.cubic_moment - rep.cubic_target) <= 1e-6;

  const double tr_rho = rho.trace(), tr_a = a.trace(), tr_h = h.trace();
  auto make = [&]() {
    return [&, z = ComplexVector(f)](long i, Complex* num, double* den) mutable {
      Rng rng = make_stream(seed, static_cast<std::uint64_t>(i));
      const GammaDraw d = sample_gamma(weight, rng);
      const StiefelPoint pt = sample_sphere(f, d.gamma, rng);
      z = pt.frames.col(0);
      auto tr_k = [&](const ComplexMatrix& op, double tr) {
        return 0.5 * z.dot(op * z).real() - d.gamma * tr;
      };
      num[0] = d.sign * d.magnitude * f * tr_k(rho.matrix(), tr_rho) * tr_k(a.matrix(), tr_a) *
               tr_k(h.matrix(), tr_h);
      den[0] = 1.0;
    };
  };
  const std::vector<BlockSums> blocks = run_blocks(n_traj, 1, threads, make);
  std::vector<double> num(blocks.size()), cnt(blocks.size());
  double total = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    num[b] = blocks[b].num[0].real();
    cnt[b] = static_cast<double>(blocks[b].count);
    total += num[b];
  }
  rep.rhs = total / static_cast<double>(n_traj);
  rep.rhs_se = jackknife_ratio_se(num, cnt);
  rep.agree = std::abs(rep.lhs - rep.rhs) <= 5.0 * rep.rhs_se;
  return rep;
}

}  // namespace cpsdyn
