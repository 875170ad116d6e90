#pragma once
// MERA circuits on periodic chains.
//
// Gate placement. A layer with arity k (2 binary, 3 ternary) reads a lattice of
// L sites and writes L/k sites:
//
//   disentangler j  acts on (k*j + k - 1, k*j + k mod L)      j = 0 .. L/k - 1
//   isometry     j  acts on (k*j, ..., k*j + k - 1) -> site j
//
// so isometry j's rightmost input shares disentangler j with isometry j+1's
// leftmost input. In the analysis direction a layer applies every
// disentangler, then every isometry unitary v, then projects the k-1 ancilla
// outputs of each v onto |0>. The kept output of v is its most significant
// qubit: v maps the retained subspace onto indices {kept * 2^(k-1)}.
//
// The number of layers m and top size D follow from n: divide by k while the
// quotient stays >= 2. All sites carry qubits (chi = 2).

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mera/qubits.hpp"
#include "mera/random.hpp"
#include "mera/tensor.hpp"

namespace mera {

enum class Geometry { binary, ternary };

inline std::size_t arity(Geometry g) { return g == Geometry::binary ? 2 : 3; }

inline std::string to_string(Geometry g) { return g == Geometry::binary ? "binary" : "ternary"; }

inline Geometry geometry_from_string(const std::string& s) {
  if (s == "binary") return Geometry::binary;
  if (s == "ternary") return Geometry::ternary;
  throw ValidationError("unknown geometry \"" + s + "\" (expected binary or ternary)");
}

enum class GateKind { disentangler, isometry };

struct Gate {
  GateKind kind;
  CTensor unitary;                  // u, or v with the projector implied
  std::vector<std::size_t> sites;   // level-(level-1) sites, first = most significant
  std::size_t level;                // tau >= 1
};

struct Layer {
  Geometry geometry;
  std::size_t level;    // tau
  std::size_t lattice;  // input lattice size at level tau-1
  std::vector<Gate> disentanglers;
  std::vector<Gate> isometries;

  std::size_t k() const { return arity(geometry); }
  std::size_t output_lattice() const { return lattice / k(); }
};

struct MeraCircuit {
  Geometry geometry = Geometry::binary;
  std::size_t n = 0;
  std::size_t chi = 2;
  std::vector<Layer> layers;
  std::size_t top_sites = 0;     // D
  std::optional<CTensor> top;    // pure top state of dimension chi^D

  std::size_t depth() const { return layers.size(); }
};

struct LatticeShape {
  std::size_t top_sites;  // D
  std::size_t layers;     // m
};

inline std::vector<std::size_t> valid_sizes(Geometry g, std::size_t up_to);

inline LatticeShape decompose(std::size_t n, Geometry g) {
  const std::size_t k = arity(g);
  std::size_t L = n, m = 0;
  while (L % k == 0 && L / k >= 2) {
    L /= k;
    ++m;
  }
  if (m == 0 || L > 4 || n < 2 * k) {
    std::string list;
    for (std::size_t v : valid_sizes(g, std::max<std::size_t>(4 * n, 64)))
      list += (list.empty() ? "" : ", ") + std::to_string(v);
    throw ValidationError("n = " + std::to_string(n) + " is not a valid " + to_string(g) +
                          " MERA size; valid sizes: " + list);
  }
  return {L, m};
}

inline std::vector<std::size_t> valid_sizes(Geometry g, std::size_t up_to) {
  std::vector<std::size_t> out;
  const std::size_t k = arity(g);
  for (std::size_t n = 2 * k; n <= up_to; ++n) {
    std::size_t L = n, m = 0;
    while (L % k == 0 && L / k >= 2) { L /= k; ++m; }
    if (m > 0 && L <= 4) out.push_back(n);
  }
  return out;
}

// Lattice size at level tau.
inline std::size_t lattice_at(const MeraCircuit& c, std::size_t level) {
  std::size_t L = c.n;
  for (std::size_t t = 0; t < level; ++t) L /= arity(c.geometry);
  return L;
}

// ---------------------------------------------------------------------------
// Site bookkeeping within one layer

inline std::vector<std::size_t> disentangler_sites(Geometry g, std::size_t L, std::size_t j) {
  const std::size_t k = arity(g);
  return {(k * j + k - 1) % L, (k * j + k) % L};
}

inline std::vector<std::size_t> isometry_sites(Geometry g, std::size_t L, std::size_t j) {
  const std::size_t k = arity(g);
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i < k; ++i) s.push_back((k * j + i) % L);
  return s;
}

// Index of the disentangler acting on site s, if any (ternary middle sites
// have none).
inline std::optional<std::size_t> disentangler_of(Geometry g, std::size_t L, std::size_t s) {
  const std::size_t k = arity(g);
  const std::size_t r = s % k;
  if (r == k - 1) return (s - (k - 1)) / k;
  if (r == 0) return (s / k + L / k - 1) % (L / k);
  return std::nullopt;
}

inline std::optional<std::size_t> disentangler_partner(Geometry g, std::size_t L, std::size_t s) {
  const auto j = disentangler_of(g, L, s);
  if (!j) return std::nullopt;
  const auto d = disentangler_sites(g, L, *j);
  return d[0] == s ? d[1] : d[0];
}

inline std::size_t isometry_of(Geometry g, std::size_t s) { return s / arity(g); }

// The k+2 sites whose density matrix determines isometry j: its inputs plus
// the outer legs of its two disentanglers, in chain order.
inline std::vector<std::size_t> isometry_block(Geometry g, std::size_t L, std::size_t j) {
  const std::size_t k = arity(g);
  std::vector<std::size_t> b;
  for (std::size_t i = 0; i < k + 2; ++i) b.push_back((k * j + L - 1 + i) % L);
  return b;
}

// Past causal cone one level down: isometry inputs of the block plus the
// other legs of the disentanglers touching them. Chain order starting at the
// left end of the cone when the block is an arc.
inline std::vector<std::size_t> past_cone(Geometry g, std::size_t lattice_below,
                                          const std::vector<std::size_t>& block) {
  const std::size_t L = lattice_below, k = arity(g);
  std::vector<std::size_t> out;
  auto add = [&](std::size_t s) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  };
  for (std::size_t j : block) {
    if (j >= L / k) throw ValidationError("past_cone: block site outside lattice");
    for (std::size_t s : isometry_sites(g, L, j)) {
      if (s % k == 0) {
        if (auto p = disentangler_partner(g, L, s)) add(*p);
      }
      add(s);
      if (s % k == k - 1) {
        if (auto p = disentangler_partner(g, L, s)) add(*p);
      }
    }
  }
  return out;
}

// Physical (level 0) sites in the past causal cone of `block` at `level`, for
// an n-site chain.
inline std::vector<std::size_t> causal_cone(Geometry g, std::size_t n, std::size_t level,
                                            std::vector<std::size_t> block) {
  std::size_t L = n;
  for (std::size_t t = 0; t < level; ++t) L /= arity(g);
  for (std::size_t s : block)
    if (s >= L) throw ValidationError("causal_cone: block site outside level lattice");
  for (std::size_t t = level; t-- > 0;) {
    L *= arity(g);
    block = past_cone(g, L, block);
  }
  return block;
}

// ---------------------------------------------------------------------------
// Construction

inline bool is_unitary(const CMatrix& u, double tol = 1e-10) {
  return u.rows() == u.cols() &&
         (u * u.adjoint() - CMatrix::Identity(u.rows(), u.cols())).norm() <= tol;
}

// Rows of v that survive the ancilla projector: w = P v.
inline CMatrix isometry_form(const CMatrix& v) {
  const std::size_t k = qubit_count(v.rows());
  const std::size_t step = std::size_t{1} << (k - 1);
  CMatrix w(2, v.cols());
  w.row(0) = v.row(0);
  w.row(1) = v.row(step);
  return w;
}

inline Layer make_layer(Geometry g, std::size_t level, std::size_t L,
                        const std::vector<CMatrix>& us, const std::vector<CMatrix>& vs) {
  const std::size_t k = arity(g);
  if (L % k != 0 || L / k < 2) throw ValidationError("layer lattice size incompatible with geometry");
  if (us.size() != L / k || vs.size() != L / k)
    throw ValidationError("layer needs " + std::to_string(L / k) + " disentanglers and isometries");
  Layer layer{g, level, L, {}, {}};
  for (std::size_t j = 0; j < L / k; ++j) {
    if (us[j].rows() != 4 || !is_unitary(us[j]))
      throw ValidationError("disentangler " + std::to_string(j) + " is not a 4x4 unitary");
    if (vs[j].rows() != static_cast<Eigen::Index>(1u << k) || !is_unitary(vs[j]))
      throw ValidationError("isometry unitary " + std::to_string(j) + " has wrong size or is not unitary");
    layer.disentanglers.push_back({GateKind::disentangler, from_matrix(us[j]), disentangler_sites(g, L, j), level});
    layer.isometries.push_back({GateKind::isometry, from_matrix(vs[j]), isometry_sites(g, L, j), level});
  }
  return layer;
}

inline MeraCircuit identity_mera(std::size_t n, Geometry g, std::size_t chi = 2) {
  if (chi != 2) throw ValidationError("only chi = 2 (qubit) circuits are supported");
  const auto shape = decompose(n, g);
  const std::size_t k = arity(g);
  MeraCircuit c{g, n, chi, {}, shape.top_sites, std::nullopt};
  std::size_t L = n;
  for (std::size_t t = 1; t <= shape.layers; ++t) {
    std::vector<CMatrix> us(L / k, CMatrix::Identity(4, 4)), vs(L / k, CMatrix::Identity(1 << k, 1 << k));
    c.layers.push_back(make_layer(g, t, L, us, vs));
    L /= k;
  }
  CVector top = CVector::Zero(std::size_t{1} << shape.top_sites);
  top(0) = 1;
  c.top = from_vector(top);
  return c;
}

inline MeraCircuit random_mera(std::size_t n, Geometry g, std::size_t chi, std::uint64_t seed) {
  if (chi != 2) throw ValidationError("only chi = 2 (qubit) circuits are supported");
  const auto shape = decompose(n, g);
  const std::size_t k = arity(g);
  Rng rng(seed);
  MeraCircuit c{g, n, chi, {}, shape.top_sites, std::nullopt};
  std::size_t L = n;
  for (std::size_t t = 1; t <= shape.layers; ++t) {
    std::vector<CMatrix> us, vs;
    for (std::size_t j = 0; j < L / k; ++j) us.push_back(haar_unitary(4, rng));
    for (std::size_t j = 0; j < L / k; ++j) vs.push_back(haar_unitary(std::size_t{1} << k, rng));
    c.layers.push_back(make_layer(g, t, L, us, vs));
    L /= k;
  }
  c.top = from_vector(haar_state(std::size_t{1} << shape.top_sites, rng));
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation

// Analysis direction through one layer: disentangle, apply v, project the
// ancillas onto |0>. Returns the unnormalized state on L/k sites.
inline CVector apply_layer(const CVector& psi, const Layer& layer) {
  const std::size_t L = layer.lattice, k = layer.k();
  if (static_cast<std::size_t>(psi.size()) != (std::size_t{1} << L))
    throw ValidationError("apply_layer: state dimension does not match lattice");
  CVector x = psi;
  for (const Gate& g : layer.disentanglers) apply_gate_inplace(x, L, to_matrix(g.unitary), g.sites);
  for (const Gate& g : layer.isometries) apply_gate_inplace(x, L, to_matrix(g.unitary), g.sites);
  const std::size_t Lo = L / k;
  CVector out(std::size_t{1} << Lo);
  for (std::size_t o = 0; o < static_cast<std::size_t>(out.size()); ++o) {
    std::size_t b = 0;
    for (std::size_t j = 0; j < Lo; ++j)
      if ((o >> (Lo - 1 - j)) & 1) b |= std::size_t{1} << (L - 1 - k * j);
    out(o) = x(b);
  }
  return out;
}

// Generative direction through one layer: embed with |0> ancillas, apply
// v^dagger, then u^dagger.
inline CVector unapply_layer(const CVector& phi, const Layer& layer) {
  const std::size_t L = layer.lattice, k = layer.k(), Lo = L / k;
  if (static_cast<std::size_t>(phi.size()) != (std::size_t{1} << Lo))
    throw ValidationError("unapply_layer: state dimension does not match output lattice");
  CVector x = CVector::Zero(std::size_t{1} << L);
  for (std::size_t o = 0; o < static_cast<std::size_t>(phi.size()); ++o) {
    std::size_t b = 0;
    for (std::size_t j = 0; j < Lo; ++j)
      if ((o >> (Lo - 1 - j)) & 1) b |= std::size_t{1} << (L - 1 - k * j);
    x(b) = phi(o);
  }
  for (const Gate& g : layer.isometries)
    apply_gate_inplace(x, L, to_matrix(g.unitary).adjoint(), g.sites);
  for (const Gate& g : layer.disentanglers)
    apply_gate_inplace(x, L, to_matrix(g.unitary).adjoint(), g.sites);
  return x;
}

inline CTensor evaluate_state(const MeraCircuit& c, const CTensor& top) {
  if (top.rank() != 1 || top.size() != (std::size_t{1} << c.top_sites))
    throw ValidationError("evaluate_state: top state must have dimension chi^D = " +
                          std::to_string(std::size_t{1} << c.top_sites));
  CVector x = to_vector(top);
  for (std::size_t t = c.layers.size(); t-- > 0;) x = unapply_layer(x, c.layers[t]);
  return from_vector(x);
}

inline CTensor evaluate_state(const MeraCircuit& c) {
  if (!c.top) throw ValidationError("evaluate_state: circuit has no top state");
  return evaluate_state(c, *c.top);
}

}  // namespace mera
