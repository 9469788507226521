#pragma once

// Dense complex linear algebra for small F and the exact quantum reference.

#include <Eigen/Dense>

#include <complex>
#include <span>
#include <vector>

namespace cpsdyn {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kHermitianTol = 1e-12;

/// F x F complex Hermitian operator. Construction rejects matrices whose
/// largest |A_ij - conj(A_ji)| exceeds the tolerance; the stored matrix is
/// symmetrized so downstream code can rely on exact Hermiticity.
class HermitianMatrix {
 public:
  explicit HermitianMatrix(const ComplexMatrix& m, double tol = kHermitianTol);

  static HermitianMatrix identity(int dim);
  static HermitianMatrix zero(int dim);
  /// |n><n| with a 0-based state index.
  static HermitianMatrix projector(int dim, int n);
  static HermitianMatrix diagonal(std::span<const double> values);

  int dim() const { return static_cast<int>(m_.rows()); }
  const ComplexMatrix& matrix() const { return m_; }
  Complex operator()(int i, int j) const { return m_(i, j); }
  double trace() const { return m_.trace().real(); }

  /// Largest |A_ij - conj(A_ji)| of an arbitrary square matrix.
  static double max_asymmetry(const ComplexMatrix& m, int* row = nullptr, int* col = nullptr);

 private:
  ComplexMatrix m_;
};

struct SpectralDecomposition {
  RealVector eigenvalues;      // ascending
  ComplexMatrix eigenvectors;  // orthonormal columns

  ComplexMatrix reconstruct() const;
  double reconstruction_error(const HermitianMatrix& h) const;
};

struct UnitaryPropagator {
  ComplexMatrix matrix;
  double time = 0.0;

  int dim() const { return static_cast<int>(matrix.rows()); }
  double unitarity_error() const;
};

/// Cyclic complex Jacobi diagonalization. Eigenvalues ascending; each
/// eigenvector is rephased so its first component of largest modulus is real
/// and nonnegative.
SpectralDecomposition hermitian_eig(const HermitianMatrix& h);
SpectralDecomposition hermitian_eig(const ComplexMatrix& m, double tol = kHermitianTol);

/// U(t) = exp(-i H t), hbar = 1.
UnitaryPropagator propagator(const HermitianMatrix& h, double t);
UnitaryPropagator propagator(const SpectralDecomposition& eig, double t);

/// Tr[rho U(t)^dagger A U(t)] on every grid time.
std::vector<Complex> exact_tcf(const HermitianMatrix& rho, const HermitianMatrix& a,
                               const HermitianMatrix& h, std::span<const double> t_grid);
std::vector<Complex> exact_tcf(const ComplexMatrix& rho, const ComplexMatrix& a,
                               const HermitianMatrix& h, std::span<const double> t_grid);

/// Tr[|n><m| U^dagger(t) |k><l| U(t)] for 0-based state indices.
std::vector<Complex> exact_element_tcf(const HermitianMatrix& h, int n, int m, int k, int l,
                                       std::span<const double> t_grid);

}  // namespace cpsdyn
