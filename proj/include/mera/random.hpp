#pragma once
// Seeded random matrices and states.

#include <cstdint>
#include <random>

#include "mera/tensor.hpp"

namespace mera {

using Rng = std::mt19937_64;

inline CMatrix ginibre(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double re = g(rng);
      const double im = g(rng);
      m(i, j) = cplx(re, im);
    }
  return m;
}

// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases of
// R's diagonal moved into Q.
inline CMatrix haar_unitary(std::size_t d, Rng& rng) {
  const CMatrix z = ginibre(d, d, rng);
  Eigen::HouseholderQR<CMatrix> qr(z);
  CMatrix q = qr.householderQ();
  const CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t k = 0; k < d; ++k) {
    const cplx x = r(k, k);
    if (std::abs(x) > 0) q.col(k) *= x / std::abs(x);
  }
  return q;
}

inline Eigen::VectorXcd haar_state(std::size_t d, Rng& rng) {
  Eigen::VectorXcd v = ginibre(d, 1, rng).col(0);
  return v / v.norm();
}

}  // namespace mera
