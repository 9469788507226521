#include "cpsdyn/qcore.hpp"

#include "cpsdyn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cpsdyn {

double HermitianMatrix::max_asymmetry(const ComplexMatrix& m, int* row, int* col) {
  double worst = 0.0;
  int wr = 0, wc = 0;
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = i; j < m.cols(); ++j) {
      const double d = std::abs(m(i, j) - std::conj(m(j, i)));
      if (d > worst) {
        worst = d;
        wr = i;
        wc = j;
      }
    }
  }
  if (row) *row = wr;
  if (col) *col = wc;
  return worst;
}

HermitianMatrix::HermitianMatrix(const ComplexMatrix& m, double tol) {
  if (m.rows() < 1 || m.rows() != m.cols()) {
    std::ostringstream os;
    os << "Hermitian matrix must be square with dim >= 1, got " << m.rows() << "x" << m.cols();
    throw DimensionError(os.str());
  }
  int r = 0, c = 0;
  const double asym = max_asymmetry(m, &r, &c);
  if (!(asym <= tol)) {
    std::ostringstream os;
    os << "matrix is not Hermitian: |A(" << r + 1 << "," << c + 1 << ") - conj(A(" << c + 1 << ","
       << r + 1 << "))| = " << asym << " exceeds " << tol;
    throw NonHermitianError(os.str(), asym, r, c);
  }
  m_ = 0.5 * (m + m.adjoint());
}

HermitianMatrix HermitianMatrix::identity(int dim) {
  return HermitianMatrix(ComplexMatrix::Identity(dim, dim));
}

HermitianMatrix HermitianMatrix::zero(int dim) {
  return HermitianMatrix(ComplexMatrix::Zero(dim, dim));
}

HermitianMatrix HermitianMatrix::projector(int dim, int n) {
  if (n < 0 || n >= dim) throw DimensionError("projector index out of range");
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  m(n, n) = 1.0;
  return HermitianMatrix(m);
}

HermitianMatrix HermitianMatrix::diagonal(std::span<const double> values) {
  const int f = static_cast<int>(values.size());
  ComplexMatrix m = ComplexMatrix::Zero(f, f);
  for (int i = 0; i < f; ++i) m(i, i) = values[i];
  return HermitianMatrix(m);
}

ComplexMatrix SpectralDecomposition::reconstruct() const {
  return eigenvectors * eigenvalues.cast<Complex>().asDiagonal() * eigenvectors.adjoint();
}

double SpectralDecomposition::reconstruction_error(const HermitianMatrix& h) const {
  return (reconstruct() - h.matrix()).norm();
}

double UnitaryPropagator::unitarity_error() const {
  const int f = dim();
  return (matrix.adjoint() * matrix - ComplexMatrix::Identity(f, f)).norm();
}

namespace {

double off_diagonal_norm(const ComplexMatrix& a) {
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (i != j) s += std::norm(a(i, j));
  return std::sqrt(s);
}

// One complex Jacobi rotation zeroing a(p,q). The rotation is the phase
// transform diag(1, e^{-i phi}) on (p,q) followed by the real symmetric
// Jacobi rotation for the now-real pivot |a(p,q)|.
void jacobi_rotate(ComplexMatrix& a, ComplexMatrix& v, int p, int q) {
  const Complex apq = a(p, q);
  const double mag = std::abs(apq);
  const Complex phase = apq / mag;  // e^{i phi}
  const double app = a(p, p).real();
  const double aqq = a(q, q).real();

  const double tau = (aqq - app) / (2.0 * mag);
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;

  // G = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] on (p, q).
  const Complex gpp = c;
  const Complex gpq = s;
  const Complex gqp = -s * std::conj(phase);
  const Complex gqq = c * std::conj(phase);

  const int n = static_cast<int>(a.rows());
  for (int k = 0; k < n; ++k) {
    const Complex akp = a(k, p);
    const Complex akq = a(k, q);
    a(k, p) = akp * gpp + akq * gqp;
    a(k, q) = akp * gpq + akq * gqq;
    const Complex vkp = v(k, p);
    const Complex vkq = v(k, q);
    v(k, p) = vkp * gpp + vkq * gqp;
    v(k, q) = vkp * gpq + vkq * gqq;
  }
  for (int k = 0; k < n; ++k) {
    const Complex apk = a(p, k);
    const Complex aqk = a(q, k);
    a(p, k) = std::conj(gpp) * apk + std::conj(gqp) * aqk;
    a(q, k) = std::conj(gpq) * apk + std::conj(gqq) * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  a(p, p) = a(p, p).real();
  a(q, q) = a(q, q).real();
}

void fix_phase(ComplexMatrix& v) {
  for (int col = 0; col < v.cols(); ++col) {
    int best = 0;
    double best_mag = -1.0;
    for (int i = 0; i < v.rows(); ++i) {
      const double mag = std::abs(v(i, col));
      // earlier components win near-ties so the choice is stable under roundoff
      if (mag > best_mag + 1e-12) {
        best_mag = mag;
        best = i;
      }
    }
    if (best_mag > 0.0) v.col(col) *= std::conj(v(best, col)) / best_mag;
    v(best, col) = std::abs(v(best, col));
  }
}

}  // namespace

SpectralDecomposition hermitian_eig(const HermitianMatrix& h) {
  const int n = h.dim();
  ComplexMatrix a = h.matrix();
  ComplexMatrix v = ComplexMatrix::Identity(n, n);

  const double scale = std::max(a.norm(), 1e-300);
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal_norm(a) <= 1e-15 * scale) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) > 1e-300) jacobi_rotate(a, v, p, q);
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a(i, i).real() < a(j, j).real(); });

  SpectralDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (int k = 0; k < n; ++k) {
    out.eigenvalues(k) = a(order[k], order[k]).real();
    out.eigenvectors.col(k) = v.col(order[k]);
  }
  fix_phase(out.eigenvectors);
  return out;
}

SpectralDecomposition hermitian_eig(const ComplexMatrix& m, double tol) {
  return hermitian_eig(HermitianMatrix(m, tol));
}

UnitaryPropagator propagator(const SpectralDecomposition& eig, double t) {
  const int n = static_cast<int>(eig.eigenvalues.size());
  ComplexVector phases(n);
  for (int k = 0; k < n; ++k) phases(k) = std::polar(1.0, -eig.eigenvalues(k) * t);
  UnitaryPropagator u;
  u.matrix = eig.eigenvectors * phases.asDiagonal() * eig.eigenvectors.adjoint();
  u.time = t;
  return u;
}

UnitaryPropagator propagator(const HermitianMatrix& h, double t) {
  return propagator(hermitian_eig(h), t);
}

std::vector<Complex> exact_tcf(const ComplexMatrix& rho, const ComplexMatrix& a,
                               const HermitianMatrix& h, std::span<const double> t_grid) {
  const int f = h.dim();
  if (rho.rows() != f || rho.cols() != f || a.rows() != f || a.cols() != f)
    throw DimensionError("exact_tcf: rho, A and H must share the same dimension");
  const SpectralDecomposition eig = hermitian_eig(h);
  std::vector<Complex> out;
  out.reserve(t_grid.size());
  for (const double t : t_grid) {
    const ComplexMatrix u = propagator(eig, t).matrix;
    out.push_back((rho * u.adjoint() * a * u).trace());
  }
  return out;
}

std::vector<Complex> exact_tcf(const HermitianMatrix& rho, const HermitianMatrix& a,
                               const HermitianMatrix& h, std::span<const double> t_grid) {
  return exact_tcf(rho.matrix(), a.matrix(), h, t_grid);
}

std::vector<Complex> exact_element_tcf(const HermitianMatrix& h, int n, int m, int k, int l,
                                       std::span<const double> t_grid) {
  const int f = h.dim();
  for (const int idx : {n, m, k, l})
    if (idx < 0 || idx >= f) throw DimensionError("exact_element_tcf: state index out of range");
  const SpectralDecomposition eig = hermitian_eig(h);
  std::vector<Complex> out;
  out.reserve(t_grid.size());
  for (const double t : t_grid) {
    const ComplexMatrix u = propagator(eig, t).matrix;
    // Tr[|n><m| U^dag |k><l| U] = conj(U_km) U_ln
    out.push_back(std::conj(u(k, m)) * u(l, n));
  }
  return out;
}

}  // namespace cpsdyn
