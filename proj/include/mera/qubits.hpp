#pragma once
// State-vector and operator utilities for registers of qubits.
//
// Site s of an n-qubit register is bit (n-1-s) of the basis index, so site 0
// is the most significant bit and the leftmost tensor factor. A gate acting
// on sites (s_0, ..., s_{g-1}) is a 2^g x 2^g matrix whose first listed site is
// its most significant bit.

#include <bit>
#include <cstdint>
#include <vector>

#include "mera/tensor.hpp"

namespace mera {

using CVector = Eigen::VectorXcd;

inline std::size_t qubit_count(std::size_t dim) {
  if (dim == 0 || !std::has_single_bit(dim))
    throw ValidationError("dimension " + std::to_string(dim) + " is not a power of two");
  return static_cast<std::size_t>(std::countr_zero(dim));
}

namespace detail {

inline std::vector<std::size_t> local_offsets(std::size_t n, const std::vector<std::size_t>& sites) {
  const std::size_t g = sites.size();
  std::vector<std::size_t> off(std::size_t{1} << g, 0);
  for (std::size_t l = 0; l < off.size(); ++l)
    for (std::size_t i = 0; i < g; ++i)
      if ((l >> (g - 1 - i)) & 1) off[l] |= std::size_t{1} << (n - 1 - sites[i]);
  return off;
}

inline std::size_t site_mask(std::size_t n, const std::vector<std::size_t>& sites) {
  std::size_t m = 0;
  for (std::size_t s : sites) {
    if (s >= n) throw ValidationError("site " + std::to_string(s) + " outside register of " +
                                      std::to_string(n));
    const std::size_t bit = std::size_t{1} << (n - 1 - s);
    if (m & bit) throw ValidationError("repeated site " + std::to_string(s));
    m |= bit;
  }
  return m;
}

}  // namespace detail

// Applies `gate` to the listed sites of an n-qubit state vector in place.
template <class Derived>
void apply_gate_inplace(CVector& psi, std::size_t n, const Eigen::MatrixBase<Derived>& gate,
                        const std::vector<std::size_t>& sites) {
  const std::size_t mask = detail::site_mask(n, sites);
  const auto off = detail::local_offsets(n, sites);
  const std::size_t d = off.size();
  if (static_cast<std::size_t>(gate.rows()) != d || static_cast<std::size_t>(gate.cols()) != d)
    throw ValidationError("gate dimension does not match its site count");
  if (static_cast<std::size_t>(psi.size()) != (std::size_t{1} << n))
    throw ValidationError("state dimension does not match register size");
  const CMatrix g = gate;
  CVector in(d), out(d);
  for (std::size_t b = 0; b < static_cast<std::size_t>(psi.size()); ++b) {
    if (b & mask) continue;
    for (std::size_t l = 0; l < d; ++l) in(l) = psi(b | off[l]);
    out.noalias() = g * in;
    for (std::size_t l = 0; l < d; ++l) psi(b | off[l]) = out(l);
  }
}

// Reduced density matrix of a pure n-qubit state on `sites`, in the listed
// order (first listed site most significant).
inline CMatrix reduced_density_matrix(const CVector& psi, const std::vector<std::size_t>& sites) {
  const std::size_t n = qubit_count(psi.size());
  const std::size_t mask = detail::site_mask(n, sites);
  const auto off = detail::local_offsets(n, sites);
  const std::size_t d = off.size();
  const std::size_t rest = (std::size_t{1} << n) / d;
  // Columns of M enumerate the traced-out configurations.
  CMatrix m(d, rest);
  std::size_t col = 0;
  for (std::size_t b = 0; b < static_cast<std::size_t>(psi.size()); ++b) {
    if (b & mask) continue;
    for (std::size_t l = 0; l < d; ++l) m(l, col) = psi(b | off[l]);
    ++col;
  }
  return m * m.adjoint();
}

// Reduced density matrix of an n-qubit density matrix on `sites`.
inline CMatrix reduced_density_matrix(const CMatrix& rho, const std::vector<std::size_t>& sites) {
  const std::size_t n = qubit_count(rho.rows());
  const std::size_t mask = detail::site_mask(n, sites);
  const auto off = detail::local_offsets(n, sites);
  const std::size_t d = off.size();
  CMatrix out = CMatrix::Zero(d, d);
  for (std::size_t b = 0; b < static_cast<std::size_t>(rho.rows()); ++b) {
    if (b & mask) continue;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out(i, j) += rho(b | off[i], b | off[j]);
  }
  return out;
}

// Dense n-qubit matrix equal to `op` on `sites` and identity elsewhere.
inline CMatrix embed_operator(const CMatrix& op, const std::vector<std::size_t>& sites, std::size_t n) {
  const std::size_t mask = detail::site_mask(n, sites);
  const auto off = detail::local_offsets(n, sites);
  const std::size_t d = off.size();
  if (static_cast<std::size_t>(op.rows()) != d || static_cast<std::size_t>(op.cols()) != d)
    throw ValidationError("embed_operator: operator dimension does not match sites");
  const std::size_t dim = std::size_t{1} << n;
  CMatrix out = CMatrix::Zero(dim, dim);
  for (std::size_t b = 0; b < dim; ++b) {
    if (b & mask) continue;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) out(b | off[i], b | off[j]) = op(i, j);
  }
  return out;
}

}  // namespace mera
