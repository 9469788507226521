#include "cpsdyn/kernels.hpp"

#include "cpsdyn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cpsdyn {

KernelSpec KernelSpec::cps_covariant(int f, double gamma) {
  KernelSpec s;
  s.kind = Kind::cps_covariant;
  s.F = f;
  s.gamma = gamma;
  return s;
}

KernelSpec KernelSpec::cps_inverse(int f, double gamma) {
  KernelSpec s;
  s.kind = Kind::cps_inverse;
  s.F = f;
  s.gamma = gamma;
  return s;
}

KernelSpec KernelSpec::cmmcv(const HermitianMatrix& commutator) {
  KernelSpec s;
  s.kind = Kind::cmmcv;
  s.F = commutator.dim();
  s.commutator = commutator;
  return s;
}

KernelSpec KernelSpec::gdtwa(int f) {
  KernelSpec s;
  s.kind = Kind::gdtwa;
  s.F = f;
  return s;
}

KernelSpec KernelSpec::stiefel_covariant(const StiefelSignature& signature) {
  KernelSpec s;
  s.kind = Kind::stiefel_covariant;
  s.F = signature.F;
  s.gamma = signature.gamma;
  s.signature = signature;
  return s;
}

namespace {

void require_rank_one(const StiefelPoint& point, const char* what) {
  if (point.r() != 1) {
    std::ostringstream os;
    os << what << " needs an r = 1 point, got r = " << point.r();
    throw DimensionError(os.str());
  }
}

ComplexMatrix stiefel_matrix(const StiefelSignature& sig, const ComplexMatrix& frames) {
  const int f = static_cast<int>(frames.rows());
  ComplexMatrix k = -sig.gamma * ComplexMatrix::Identity(f, f);
  for (int i = 0; i < frames.cols(); ++i)
    k += (0.5 * sig.signs[static_cast<std::size_t>(i)]) * frames.col(i) * frames.col(i).adjoint();
  return k;
}

struct Classified {
  StiefelSignature signature;
  std::vector<int> frame_columns;  // eigenvector column for each frame
  SpectralDecomposition eig;
};

Classified classify(const HermitianMatrix& k, double degeneracy_tol) {
  Classified out;
  out.eig = hermitian_eig(k);
  const RealVector& lam = out.eig.eigenvalues;
  const int f = static_cast<int>(lam.size());

  const double range = lam(f - 1) - lam(0);
  const double tol_abs = degeneracy_tol * range;

  // consecutive grouping of the ascending spectrum
  std::vector<int> group(f, 0);
  for (int i = 1; i < f; ++i)
    group[i] = (lam(i) - lam(i - 1) <= tol_abs) ? group[i - 1] : group[i - 1] + 1;
  const int ngroups = group[f - 1] + 1;
  std::vector<int> size(ngroups, 0);
  std::vector<double> mean(ngroups, 0.0);
  for (int i = 0; i < f; ++i) {
    ++size[group[i]];
    mean[group[i]] += lam(i);
  }
  for (int g = 0; g < ngroups; ++g) mean[g] /= size[g];

  const int maxdeg = *std::max_element(size.begin(), size.end());
  int chosen = -1;
  for (int g = 0; g < ngroups; ++g) {
    if (size[g] != maxdeg) continue;
    if (chosen < 0 || std::abs(mean[g]) < std::abs(mean[chosen]) - 1e-14) chosen = g;
  }

  StiefelSignature sig;
  sig.F = f;
  sig.gamma = -mean[chosen];
  sig.r = f - maxdeg;
  sig.degeneracy_tol = degeneracy_tol;

  std::vector<int> cols;
  for (int i = 0; i < f; ++i)
    if (group[i] != chosen) cols.push_back(i);
  const double gam = sig.gamma;
  std::stable_sort(cols.begin(), cols.end(), [&](int a, int b) {
    const double wa = std::abs(lam(a) + gam), wb = std::abs(lam(b) + gam);
    if (std::abs(wa - wb) > tol_abs) return wa > wb;
    return lam(a) > lam(b);
  });
  for (const int c : cols) {
    sig.eigenvalues.push_back(lam(c));
    sig.signs.push_back(lam(c) + gam >= 0.0 ? 1 : -1);
  }
  sig.eigenvalues.resize(f, -gam);
  out.signature = std::move(sig);
  out.frame_columns = std::move(cols);
  return out;
}

}  // namespace

HermitianMatrix eval_kernel(const KernelSpec& spec, const StiefelPoint& point) {
  if (point.F() != spec.F) {
    std::ostringstream os;
    os << "kernel built for F = " << spec.F << " evaluated at a point with F = " << point.F();
    throw DimensionError(os.str());
  }
  const int f = spec.F;
  switch (spec.kind) {
    case KernelSpec::Kind::cps_covariant: {
      require_rank_one(point, "cps_covariant kernel");
      const ComplexVector z = point.frames.col(0);
      return HermitianMatrix(0.5 * z * z.adjoint() - spec.gamma * ComplexMatrix::Identity(f, f));
    }
    case KernelSpec::Kind::cps_inverse:
      return eval_inverse_kernel(spec.gamma, point);
    case KernelSpec::Kind::cmmcv: {
      require_rank_one(point, "cmmcv kernel");
      const ComplexVector z = point.frames.col(0);
      return HermitianMatrix(0.5 * z * z.adjoint() - spec.commutator->matrix());
    }
    case KernelSpec::Kind::gdtwa: {
      std::vector<double> want = gdtwa_spectrum(f);
      std::sort(want.begin(), want.end(), std::greater<>());
      const int want_r = f == 2 ? 1 : 2;
      std::vector<double> have = point.signature.eigenvalues;
      std::sort(have.begin(), have.end(), std::greater<>());
      bool same = point.r() == want_r && point.signature.r == want_r;
      for (int i = 0; same && i < f; ++i) same = std::abs(have[i] - want[i]) < 1e-9;
      if (!same)
        throw DimensionError("gdtwa kernel: point is not on the (G)DTWA Stiefel component");
      return HermitianMatrix(stiefel_matrix(point.signature, point.frames), 1e-10);
    }
    case KernelSpec::Kind::stiefel_covariant: {
      if (point.r() != spec.signature.r) {
        std::ostringstream os;
        os << "stiefel kernel with r = " << spec.signature.r << " evaluated at an r = " << point.r()
           << " point";
        throw DimensionError(os.str());
      }
      return HermitianMatrix(stiefel_matrix(spec.signature, point.frames), 1e-10);
    }
  }
  throw DomainError("unknown kernel kind");
}

HermitianMatrix eval_inverse_kernel(double gamma, const StiefelPoint& point) {
  require_rank_one(point, "inverse kernel");
  const int f = point.F();
  const double s = 1.0 + f * gamma;
  if (!(s > 0.0)) throw DomainError("inverse kernel needs gamma > -1/F");
  const double total = 0.5 * point.frames.col(0).squaredNorm();
  if (std::abs(total - s) > 1e-8) {
    std::ostringstream os;
    os << "point violates the CPS constraint: sum e_n = " << total << ", expected " << s;
    throw DomainError(os.str());
  }
  const ComplexVector z = point.frames.col(0);
  return HermitianMatrix(((1.0 + f) / (2.0 * s * s)) * z * z.adjoint() -
                         ((1.0 - gamma) / s) * ComplexMatrix::Identity(f, f));
}

StiefelSignature classify_kernel(const HermitianMatrix& k, double degeneracy_tol) {
  return classify(k, degeneracy_tol).signature;
}

StiefelPoint point_from_kernel(const HermitianMatrix& k, double degeneracy_tol) {
  Classified c = classify(k, degeneracy_tol);
  StiefelPoint pt;
  const int f = k.dim();
  const int r = c.signature.r;
  pt.frames.resize(f, r);
  for (int i = 0; i < r; ++i)
    pt.frames.col(i) = std::sqrt(2.0 * c.signature.frame_weight(i)) *
                       c.eig.eigenvectors.col(c.frame_columns[static_cast<std::size_t>(i)]);
  pt.signature = std::move(c.signature);
  return pt;
}

std::vector<double> gdtwa_spectrum(int f) {
  if (f < 2) throw DomainError("(G)DTWA needs F >= 2");
  const double root = std::sqrt(2.0 * f - 1.0);
  std::vector<double> s(f, 0.0);
  s[0] = 0.5 * (1.0 + root);
  s[1] = 0.5 * (1.0 - root);
  return s;
}

HermitianMatrix gdtwa_kernel_matrix(int f, int n, const std::vector<int>& deltas,
                                    const std::vector<int>& sigmas) {
  if (n < 0 || n >= f) throw DimensionError("gdtwa state index out of range");
  ComplexMatrix k = ComplexMatrix::Zero(f, f);
  k(n, n) = 1.0;
  for (int i = 0; i < f; ++i) {
    if (i == n) continue;
    const Complex c(0.5 * deltas[static_cast<std::size_t>(i)], 0.5 * sigmas[static_cast<std::size_t>(i)]);
    k(i, n) = c;
    k(n, i) = std::conj(c);
  }
  return HermitianMatrix(k);
}

DiscretePointSet gdtwa_points(int f, int n) {
  if (f < 2) throw DomainError("(G)DTWA needs F >= 2");
  if (n < 0 || n >= f) throw DimensionError("gdtwa state index out of range");
  DiscretePointSet set;
  set.F = f;
  set.n = n;
  std::vector<int> others;
  for (int j = 0; j < f; ++j)
    if (j != n) others.push_back(j);
  const int m = f - 1;
  const unsigned count = 1u << (2 * m);
  for (unsigned a = 0; a < count; ++a) {
    std::vector<int> d(f, 0), s(f, 0);
    for (int j = 0; j < m; ++j) {
      d[others[j]] = (a >> j) & 1u ? -1 : 1;
      s[others[j]] = (a >> (m + j)) & 1u ? -1 : 1;
    }
    HermitianMatrix k = gdtwa_kernel_matrix(f, n, d, s);
    set.points.push_back(point_from_kernel(k));
    set.kernels.push_back(std::move(k));
    set.deltas.push_back(std::move(d));
    set.sigmas.push_back(std::move(s));
  }
  return set;
}

}  // namespace cpsdyn
