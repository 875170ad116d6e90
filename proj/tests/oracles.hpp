#pragma once
// Brute-force reference computations shared by the unit tests and the
// acceptance suite. Everything here works on full dense matrices or full
// state vectors and avoids the library's transfer-tensor machinery.

#include <vector>

#include "mera/circuit.hpp"
#include "mera/pauli.hpp"

namespace oracle {

using namespace mera;

// Full 2^L x 2^L matrix of a gate acting on `sites` of an L-site register.
inline CMatrix dense_gate(const Gate& g, std::size_t L) {
  return embed_operator(to_matrix(g.unitary), g.sites, L);
}

// Dense layer unitary (all v after all u) on the input lattice.
inline CMatrix dense_layer_unitary(const Layer& layer) {
  const std::size_t L = layer.lattice;
  CMatrix U = CMatrix::Identity(std::size_t{1} << L, std::size_t{1} << L);
  for (const Gate& g : layer.disentanglers) U = dense_gate(g, L) * U;
  for (const Gate& g : layer.isometries) U = dense_gate(g, L) * U;
  return U;
}

// Isometric embedding of the output lattice into the input lattice with
// ancillas in |0>: column o has a single 1 at the kept-site positions.
inline CMatrix dense_embedding(const Layer& layer) {
  const std::size_t L = layer.lattice, k = layer.k(), Lo = L / k;
  CMatrix E = CMatrix::Zero(std::size_t{1} << L, std::size_t{1} << Lo);
  for (std::size_t o = 0; o < (std::size_t{1} << Lo); ++o) {
    std::size_t b = 0;
    for (std::size_t j = 0; j < Lo; ++j)
      if ((o >> (Lo - 1 - j)) & 1) b |= std::size_t{1} << (L - 1 - k * j);
    E(b, o) = 1;
  }
  return E;
}

// Generative map of a whole circuit as a dense 2^n x 2^D matrix.
inline CMatrix dense_circuit_map(const MeraCircuit& c) {
  CMatrix M = CMatrix::Identity(std::size_t{1} << c.top_sites, std::size_t{1} << c.top_sites);
  for (std::size_t t = c.layers.size(); t-- > 0;) {
    const Layer& l = c.layers[t];
    M = dense_layer_unitary(l).adjoint() * dense_embedding(l) * M;
  }
  return M;
}

// A[O] on the full output lattice by conjugation with the dense layer
// unitary and projection: E^dagger U O U^dagger E.
inline CMatrix dense_ascend(const Layer& layer, const CMatrix& op_full) {
  const CMatrix U = dense_layer_unitary(layer);
  const CMatrix E = dense_embedding(layer);
  return E.adjoint() * U * op_full * U.adjoint() * E;
}

// Same quantity via state vectors: A[O]_{ab} = <phi_a| O |phi_b> with
// phi_b = U^dagger E |b>. Usable for lattices too large for dense U.
template <class ApplyOp>
CMatrix ascend_by_columns(const Layer& layer, ApplyOp&& apply_op) {
  const std::size_t Lo = layer.output_lattice();
  const std::size_t d = std::size_t{1} << Lo;
  std::vector<CVector> phi, ophi;
  for (std::size_t b = 0; b < d; ++b) {
    CVector e = CVector::Zero(d);
    e(b) = 1;
    phi.push_back(unapply_layer(e, layer));
    ophi.push_back(apply_op(phi.back()));
  }
  CMatrix A(d, d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) A(a, b) = phi[a].dot(ophi[b]);
  return A;
}

// P |psi> for an n-site Pauli string, by direct bit manipulation.
inline CVector apply_pauli(const PauliString& p, const CVector& psi) {
  const std::size_t n = p.size();
  CVector out = CVector::Zero(psi.size());
  for (std::size_t b = 0; b < static_cast<std::size_t>(psi.size()); ++b) {
    std::size_t t = b;
    cplx ph = 1;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t bit = std::size_t{1} << (n - 1 - s);
      const bool one = b & bit;
      switch (p[s]) {
        case 'X': t ^= bit; break;
        case 'Y': t ^= bit; ph *= one ? cplx(0, -1) : cplx(0, 1); break;
        case 'Z': if (one) ph = -ph; break;
        default: break;
      }
    }
    out(t) += ph * psi(b);
  }
  return out;
}

}  // namespace oracle
