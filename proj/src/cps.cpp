#include "cpsdyn/cps.hpp"

#include "cpsdyn/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace cpsdyn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void require_sphere_gamma(int f, double gamma) {
  if (f < 1) throw DomainError("number of states F must be >= 1");
  if (!(1.0 + f * gamma > 0.0)) {
    std::ostringstream os;
    os << "gamma = " << gamma << " must exceed -1/F = " << -1.0 / f;
    throw DomainError(os.str());
  }
}

struct GaussLegendre {
  static constexpr int kOrder = 64;
  std::array<double, kOrder> nodes{};
  std::array<double, kOrder> weights{};

  GaussLegendre() {
    for (int i = 0; i < kOrder; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (kOrder + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= kOrder; ++k) {
          const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = pk;
        }
        dp = kOrder * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      nodes[i] = x;
      weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }
};

const GaussLegendre& gauss_legendre() {
  static const GaussLegendre gl;
  return gl;
}

}  // namespace

std::span<const double> gauss_legendre_nodes() { return gauss_legendre().nodes; }
std::span<const double> gauss_legendre_weights() { return gauss_legendre().weights; }

Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

double gamma_w(int f) { return (std::sqrt(1.0 + f) - 1.0) / f; }

double StiefelSignature::frame_weight(int i) const { return std::abs(eigenvalues.at(i) + gamma); }

StiefelSignature StiefelSignature::sphere(int f, double gamma) {
  require_sphere_gamma(f, gamma);
  StiefelSignature s;
  s.F = f;
  s.r = 1;
  s.gamma = gamma;
  s.eigenvalues.assign(f, -gamma);
  s.eigenvalues[0] = 1.0 + (f - 1) * gamma;
  s.signs = {1};
  return s;
}

StiefelSignature StiefelSignature::from_frames(int f, std::span<const double> frame_eigenvalues,
                                               double gamma) {
  const int r = static_cast<int>(frame_eigenvalues.size());
  if (r > f) throw DimensionError("more frames than states");
  StiefelSignature s;
  s.F = f;
  s.r = r;
  s.gamma = gamma;
  std::vector<double> frames(frame_eigenvalues.begin(), frame_eigenvalues.end());
  std::stable_sort(frames.begin(), frames.end(), [gamma](double a, double b) {
    const double wa = std::abs(a + gamma), wb = std::abs(b + gamma);
    if (wa != wb) return wa > wb;
    return a > b;
  });
  s.eigenvalues = frames;
  s.eigenvalues.resize(f, -gamma);
  for (const double lam : frames) s.signs.push_back(lam + gamma >= 0.0 ? 1 : -1);
  return s;
}

ActionAngle action_angle(const StiefelPoint& point) {
  ActionAngle aa;
  for (int n = 0; n < point.F(); ++n) {
    const Complex z = point.frames(n, 0);
    aa.actions.push_back(0.5 * std::norm(z));
    double th = std::atan2(z.imag(), z.real());
    if (th < 0.0) th += kTwoPi;
    aa.angles.push_back(th);
  }
  return aa;
}

StiefelPoint point_from_actions(std::span<const double> actions, std::span<const double> angles,
                                double gamma) {
  const int f = static_cast<int>(actions.size());
  if (static_cast<int>(angles.size()) != f) throw DimensionError("actions/angles size mismatch");
  StiefelPoint pt;
  pt.signature = StiefelSignature::sphere(f, gamma);
  pt.frames.resize(f, 1);
  for (int n = 0; n < f; ++n) {
    if (actions[n] < 0.0) throw DomainError("actions must be nonnegative");
    pt.frames(n, 0) = std::polar(std::sqrt(2.0 * actions[n]), angles[n]);
  }
  return pt;
}

StiefelPoint sample_sphere(int f, double gamma, Rng& rng) {
  require_sphere_gamma(f, gamma);
  std::normal_distribution<double> normal(0.0, 1.0);
  StiefelPoint pt;
  pt.signature = StiefelSignature::sphere(f, gamma);
  pt.frames.resize(f, 1);
  double norm2 = 0.0;
  for (int n = 0; n < f; ++n) {
    const double x = normal(rng);
    const double p = normal(rng);
    pt.frames(n, 0) = Complex(x, p);
    norm2 += x * x + p * p;
  }
  pt.frames *= std::sqrt(2.0 * (1.0 + f * gamma) / norm2);
  return pt;
}

StiefelPoint sample_stiefel(const StiefelSignature& signature, Rng& rng) {
  const int f = signature.F;
  const int r = signature.r;
  if (r < 1) throw DomainError("sample_stiefel needs r >= 1");
  if (r > f) throw DimensionError("sample_stiefel: r exceeds F");
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexMatrix q(f, r);
  for (int i = 0; i < r; ++i)
    for (int n = 0; n < f; ++n) {
      const double re = normal(rng);
      const double im = normal(rng);
      q(n, i) = Complex(re, im);
    }
  // Modified Gram-Schmidt. The R factor has positive diagonal by construction,
  // which makes Q Haar distributed.
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < i; ++j) {
      const Complex proj = q.col(j).dot(q.col(i));
      q.col(i) -= proj * q.col(j);
    }
    q.col(i) /= q.col(i).norm();
  }
  StiefelPoint pt;
  pt.signature = signature;
  pt.frames.resize(f, r);
  for (int i = 0; i < r; ++i)
    pt.frames.col(i) = std::sqrt(2.0 * signature.frame_weight(i)) * q.col(i);
  return pt;
}

double measure_norm(int f, double gamma) {
  require_sphere_gamma(f, gamma);
  return 2.0 * std::pow(std::numbers::pi, f) / std::tgamma(static_cast<double>(f)) *
         std::pow(2.0 * (1.0 + f * gamma), f - 1);
}

ConstraintReport check_constraints(const StiefelPoint& point, double tol) {
  ConstraintReport rep;
  const int r = point.r();
  for (int i = 0; i < r; ++i) {
    const double half_norm = 0.5 * point.frames.col(i).squaredNorm();
    const double res = std::abs(half_norm - point.signature.frame_weight(i));
    rep.norm_residuals.push_back(res);
    rep.max_norm_residual = std::max(rep.max_norm_residual, res);
  }
  // sum_n (x_i x_j + p_i p_j) = Re(z_i^dag z_j); sum_n (x_i p_j - p_i x_j) = Im(z_i^dag z_j)
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) {
      const Complex ov = point.frames.col(i).dot(point.frames.col(j));
      rep.max_overlap_residual =
          std::max({rep.max_overlap_residual, std::abs(ov.real()), std::abs(ov.imag())});
    }
  rep.pass = rep.max_norm_residual < tol && rep.max_overlap_residual < tol;
  return rep;
}

double triangle_norm(int f) {
  return f * std::tgamma(f + 1.0) / (std::pow(static_cast<double>(f), f) - 1.0);
}

GammaWeight GammaWeight::single(double gamma) {
  GammaWeight w;
  w.kind_ = Kind::single;
  w.deltas_ = {{gamma, 1.0}};
  return w;
}

GammaWeight GammaWeight::delta_comb(std::vector<std::pair<double, double>> deltas) {
  if (deltas.empty()) throw DomainError("delta comb needs at least one delta");
  GammaWeight w;
  w.kind_ = Kind::delta_comb;
  w.deltas_ = std::move(deltas);
  return w;
}

GammaWeight GammaWeight::triangle(int f) {
  if (f < 2) throw DomainError("triangle weight needs F >= 2");
  GammaWeight w;
  w.kind_ = Kind::triangle;
  w.triangle_f_ = f;
  return w;
}

GammaWeight GammaWeight::custom(std::vector<double> edges, std::vector<double> values) {
  if (edges.size() < 2 || values.size() + 1 != edges.size())
    throw DomainError("custom weight needs n+1 edges for n bin values");
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw DomainError("custom weight edges must be strictly increasing");
  GammaWeight w;
  w.kind_ = Kind::custom;
  w.edges_ = std::move(edges);
  w.values_ = std::move(values);
  return w;
}

double GammaWeight::total() const {
  return integrate([](double) { return 1.0; });
}

double GammaWeight::abs_total() const {
  switch (kind_) {
    case Kind::single:
    case Kind::delta_comb: {
      double s = 0.0;
      for (const auto& d : deltas_) s += std::abs(d.second);
      return s;
    }
    case Kind::triangle:
      return total();
    case Kind::custom: {
      double s = 0.0;
      for (std::size_t i = 0; i < values_.size(); ++i)
        s += std::abs(values_[i]) * (edges_[i + 1] - edges_[i]);
      return s;
    }
  }
  return 0.0;
}

std::pair<double, double> GammaWeight::support() const {
  switch (kind_) {
    case Kind::single:
    case Kind::delta_comb: {
      double lo = deltas_.front().first, hi = lo;
      for (const auto& d : deltas_) {
        lo = std::min(lo, d.first);
        hi = std::max(hi, d.first);
      }
      return {lo, hi};
    }
    case Kind::triangle:
      return {0.0, 1.0 - 1.0 / triangle_f_};
    case Kind::custom:
      return {edges_.front(), edges_.back()};
  }
  return {0.0, 0.0};
}

double GammaWeight::density(double gamma) const {
  switch (kind_) {
    case Kind::triangle: {
      const int f = triangle_f_;
      if (gamma < 0.0 || gamma > 1.0 - 1.0 / f) return 0.0;
      return triangle_norm(f) * std::pow(1.0 + f * gamma, f - 1) / std::tgamma(static_cast<double>(f));
    }
    case Kind::custom: {
      if (gamma < edges_.front() || gamma >= edges_.back()) return 0.0;
      const auto it = std::upper_bound(edges_.begin(), edges_.end(), gamma);
      return values_[static_cast<std::size_t>(it - edges_.begin()) - 1];
    }
    default:
      throw DomainError("density() is defined only for continuous gamma weights");
  }
}

void GammaWeight::validate(int f, double tol) const {
  const double lo = support().first;
  if (!(1.0 + f * lo > 0.0)) {
    std::ostringstream os;
    os << "gamma weight support starts at " << lo << ", not above -1/F = " << -1.0 / f;
    throw DomainError(os.str());
  }
  if (kind_ == Kind::triangle && triangle_f_ != f)
    throw DimensionError("triangle weight built for a different F");
  const double t = total();
  if (!(std::abs(t - 1.0) <= tol)) {
    std::ostringstream os;
    os << "gamma weight is not normalized: integral = " << t;
    throw DomainError(os.str());
  }
}

GammaDraw sample_gamma(const GammaWeight& weight, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  GammaDraw d;
  d.magnitude = weight.abs_total();
  if (!(d.magnitude > 0.0) || !std::isfinite(d.magnitude))
    throw DomainError("gamma weight has no normalizable mass");
  switch (weight.kind()) {
    case GammaWeight::Kind::single:
      d.gamma = weight.deltas().front().first;
      d.sign = weight.deltas().front().second >= 0.0 ? 1.0 : -1.0;
      break;
    case GammaWeight::Kind::delta_comb: {
      const double u = uni(rng) * d.magnitude;
      double acc = 0.0;
      const auto& ds = weight.deltas();
      std::size_t pick = ds.size() - 1;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        acc += std::abs(ds[i].second);
        if (u < acc) {
          pick = i;
          break;
        }
      }
      d.gamma = ds[pick].first;
      d.sign = ds[pick].second >= 0.0 ? 1.0 : -1.0;
      break;
    }
    case GammaWeight::Kind::triangle: {
      // density proportional to S^(F-1) with S = 1 + F gamma in [1, F]
      const int f = weight.triangle_f();
      const double ff = std::pow(static_cast<double>(f), f);
      const double s = std::pow(1.0 + uni(rng) * (ff - 1.0), 1.0 / f);
      d.gamma = (s - 1.0) / f;
      d.sign = 1.0;
      break;
    }
    case GammaWeight::Kind::custom: {
      const auto& edges = weight.edges();
      const auto& values = weight.values();
      const double u = uni(rng) * d.magnitude;
      double acc = 0.0;
      std::size_t pick = values.size() - 1;
      for (std::size_t i = 0; i < values.size(); ++i) {
        acc += std::abs(values[i]) * (edges[i + 1] - edges[i]);
        if (u < acc) {
          pick = i;
          break;
        }
      }
      d.gamma = edges[pick] + uni(rng) * (edges[pick + 1] - edges[pick]);
      d.sign = values[pick] >= 0.0 ? 1.0 : -1.0;
      break;
    }
  }
  return d;
}

}  // namespace cpsdyn
