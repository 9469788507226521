#pragma once

#include "cpsdyn/cps.hpp"
#include "cpsdyn/qcore.hpp"

#include <cmath>
#include <random>

namespace testing {

using cpsdyn::Complex;
using cpsdyn::ComplexMatrix;

inline ComplexMatrix random_complex(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  ComplexMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = Complex(nd(rng), nd(rng));
  return m;
}

inline cpsdyn::HermitianMatrix random_hermitian(int f, std::mt19937_64& rng, double scale = 1.0) {
  const ComplexMatrix a = random_complex(f, f, rng);
  return cpsdyn::HermitianMatrix(scale * 0.5 * (a + a.adjoint()));
}

// Haar unitary from QR with the phase fix on R's diagonal.
inline ComplexMatrix random_unitary(int f, std::mt19937_64& rng) {
  const ComplexMatrix a = random_complex(f, f, rng);
  Eigen::HouseholderQR<ComplexMatrix> qr(a);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix r = qr.matrixQR();
  for (int j = 0; j < f; ++j) q.col(j) *= r(j, j) / std::abs(r(j, j));
  return q;
}

// exp(-iHt) by Taylor series with squaring.
inline ComplexMatrix taylor_expm(const ComplexMatrix& h, double t) {
  int sq = 0;
  double norm = h.cwiseAbs().rowwise().sum().maxCoeff() * std::abs(t);
  while (norm > 0.25) {
    norm *= 0.5;
    ++sq;
  }
  const ComplexMatrix a = Complex(0.0, -t / std::ldexp(1.0, sq)) * h;
  ComplexMatrix term = ComplexMatrix::Identity(h.rows(), h.cols());
  ComplexMatrix sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < sq; ++i) sum = sum * sum;
  return sum;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

template <class Fn>
MeanSe mc_mean(long n, Fn&& sample) {
  double s = 0.0, s2 = 0.0;
  for (long i = 0; i < n; ++i) {
    const double v = sample(i);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  return {mean, std::sqrt(std::max(s2 / n - mean * mean, 0.0) / n)};
}

// Kolmogorov-Smirnov statistic sqrt(N) D for samples against a CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf&& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double c = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - c, c - i / n});
  }
  return std::sqrt(n) * d;
}

// 0.1% critical value of the limiting Kolmogorov distribution
inline constexpr double kKsCritical = 1.95;

}  // namespace testing
