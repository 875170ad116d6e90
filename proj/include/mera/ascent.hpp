#pragma once
// Ascending superoperators.
//
// An operator X on level-(tau-1) sites is carried to level tau by
// A[X] = P U X U^dagger P^dagger. Because every gate conjugation maps Pauli
// strings to real combinations of Pauli strings, the ascent is evaluated on
// real coefficient vectors (orthonormal Pauli basis, see pauli.hpp) by
// contracting per-gate transfer tensors:
//
//   disentangler  D[p_a, p_b, s_a, s_b] = tr((P^_pa (x) P^_pb) u (P^_sa (x) P^_sb) u^dagger)
//   isometry      W[r, s_1..s_k]        = tr(P^_r  w (P^_s1 (x) ... ) w^dagger),   w = P v
//
// where P^ = P / sqrt(2). Sites outside the operator's support carry the
// identity, whose coefficient vector on one site is (sqrt 2, 0, 0, 0).

#include <map>
#include <numeric>
#include <optional>
#include <set>

#include "mera/circuit.hpp"
#include "mera/pauli.hpp"

namespace mera {

// ---------------------------------------------------------------------------
// Per-gate transfer tensors

inline RTensor disentangler_transfer(const CMatrix& u) {
  std::vector<double> d(256);
  const auto& P = single_site_paulis();
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      CMatrix in(4, 4);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) in.block(2 * i, 2 * j, 2, 2) = P[a](i, j) * P[b] / 2.0;
      const Eigen::VectorXd c = hermitian_pauli_coefficients(u * in * u.adjoint());
      for (int p = 0; p < 16; ++p) d[p * 16 + a * 4 + b] = c(p);
    }
  return RTensor({4, 4, 4, 4}, std::move(d));
}

inline RTensor isometry_transfer(const CMatrix& v) {
  const CMatrix w = isometry_form(v);
  const std::size_t k = qubit_count(v.rows());
  const std::size_t nin = std::size_t{1} << (2 * k);
  std::vector<double> d(4 * nin);
  const double scale = std::pow(2.0, -0.5 * static_cast<double>(k));
  for (std::size_t s = 0; s < nin; ++s) {
    const CMatrix in = pauli_dense(PauliString::from_index(s, k)) * scale;
    const Eigen::VectorXd c = hermitian_pauli_coefficients(w * in * w.adjoint());
    for (int r = 0; r < 4; ++r) d[r * nin + s] = c(r);
  }
  std::vector<std::size_t> shape(k + 1, 4);
  return RTensor(shape, std::move(d));
}

// Transfer tensors of every gate of a layer, computed once.
struct LayerTransfer {
  const Layer* layer = nullptr;
  std::vector<RTensor> D;
  std::vector<RTensor> W;

  explicit LayerTransfer(const Layer& l) : layer(&l) {
    for (const Gate& g : l.disentanglers) D.push_back(disentangler_transfer(to_matrix(g.unitary)));
    for (const Gate& g : l.isometries) W.push_back(isometry_transfer(to_matrix(g.unitary)));
  }
};

// ---------------------------------------------------------------------------
// Labeled contraction

namespace detail {

struct Node {
  RTensor t;
  std::vector<long> labels;
};

inline Node contract_nodes(const Node& a, const Node& b) {
  LegPairs pairs;
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    for (std::size_t j = 0; j < b.labels.size(); ++j)
      if (a.labels[i] == b.labels[j]) pairs.emplace_back(i, j);
  Node out{contract(a.t, b.t, pairs), {}};
  std::vector<bool> ca(a.labels.size(), false), cb(b.labels.size(), false);
  for (auto [i, j] : pairs) { ca[i] = true; cb[j] = true; }
  for (std::size_t i = 0; i < a.labels.size(); ++i) if (!ca[i]) out.labels.push_back(a.labels[i]);
  for (std::size_t j = 0; j < b.labels.size(); ++j) if (!cb[j]) out.labels.push_back(b.labels[j]);
  if (out.labels.empty()) out.t = out.t.reshape({1});
  return out;
}

inline double result_size(const Node& a, const Node& b) {
  double s = 1;
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    if (std::find(b.labels.begin(), b.labels.end(), a.labels[i]) == b.labels.end()) s *= a.t.dim(i);
  for (std::size_t j = 0; j < b.labels.size(); ++j)
    if (std::find(a.labels.begin(), a.labels.end(), b.labels[j]) == a.labels.end()) s *= b.t.dim(j);
  return s;
}

inline bool share_label(const Node& a, const Node& b) {
  for (long x : a.labels)
    if (std::find(b.labels.begin(), b.labels.end(), x) != b.labels.end()) return true;
  return false;
}

// Contracts a connected network by repeatedly merging the pair of nodes that
// share a label and give the smallest result; the remaining open labels are
// permuted into `order`.
inline RTensor contract_network(std::vector<Node> nodes, const std::vector<long>& order) {
  while (nodes.size() > 1) {
    std::size_t bi = 0, bj = 0;
    double best = -1;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (std::size_t j = i + 1; j < nodes.size(); ++j) {
        if (!share_label(nodes[i], nodes[j])) continue;
        const double s = result_size(nodes[i], nodes[j]);
        if (best < 0 || s < best) { best = s; bi = i; bj = j; }
      }
    if (best < 0) { bi = 0; bj = 1; }  // disconnected pieces: outer product
    Node merged = contract_nodes(nodes[bi], nodes[bj]);
    nodes.erase(nodes.begin() + static_cast<long>(bj));
    nodes[bi] = std::move(merged);
  }
  Node& r = nodes.front();
  if (order.empty()) return r.t;
  if (r.labels.size() != order.size()) throw Error("contract_network: open legs do not match requested order");
  std::vector<std::size_t> perm;
  for (long x : order) {
    auto it = std::find(r.labels.begin(), r.labels.end(), x);
    if (it == r.labels.end()) throw Error("contract_network: missing open leg");
    perm.push_back(static_cast<std::size_t>(it - r.labels.begin()));
  }
  return r.t.permute(perm);
}

inline RTensor identity_vector() { return RTensor({4}, {std::sqrt(2.0), 0, 0, 0}); }

// Contract leg `leg` of t with the one-site identity vector.
inline Node close_with_identity(const Node& n, long label) {
  return contract_nodes(n, Node{identity_vector(), {label}});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ascent through one layer on coefficient tensors

// One factor of a product operator: a coefficient tensor with one leg of
// dimension 4 per site, followed by `batch` extra legs carried through.
struct OperatorFactor {
  std::vector<std::size_t> sites;
  RTensor x;
  std::size_t batch = 0;
};

// Inputs to one ascent. With no factors, the legs of `sites` stay open and
// the result is the transfer map itself. `boundary` holds optional
// effective one-site maps [p, s] replacing a site's disentangler (see
// boundary_map).
struct AscentInput {
  std::vector<std::size_t> sites;
  std::vector<OperatorFactor> factors;
  std::map<std::size_t, RMatrix> boundary;
};

struct AscentOutput {
  RTensor t;                         // legs: outputs, then open site legs or batch legs
  std::vector<std::size_t> outputs;  // level-tau sites, in leg order
};

inline AscentOutput ascend_coefficients(const LayerTransfer& lt, const AscentInput& in) {
  const Layer& layer = *lt.layer;
  const Geometry g = layer.geometry;
  const std::size_t L = layer.lattice;
  const long LL = static_cast<long>(L);
  auto IN = [&](std::size_t s) { return static_cast<long>(s); };
  auto MID = [&](std::size_t s) { return LL + static_cast<long>(s); };
  auto OUT = [&](std::size_t j) { return 2 * LL + static_cast<long>(j); };

  std::vector<std::size_t> sites = in.sites;
  if (!in.factors.empty()) {
    sites.clear();
    for (const auto& f : in.factors) sites.insert(sites.end(), f.sites.begin(), f.sites.end());
  }
  std::set<std::size_t> support(sites.begin(), sites.end());
  if (support.size() != sites.size()) throw ValidationError("ascend: repeated site in support");
  for (std::size_t s : sites)
    if (s >= L) throw ValidationError("ascend: site " + std::to_string(s) + " outside lattice of " + std::to_string(L));
  for (const auto& [s, m] : in.boundary)
    if (!support.count(s)) throw ValidationError("ascend: boundary map on a site outside the support");

  std::vector<detail::Node> nodes;
  std::set<std::size_t> mids;  // sites whose post-disentangler leg is produced
  std::vector<std::size_t> dis_used, out_order;
  auto note_output = [&](std::size_t j) {
    if (std::find(out_order.begin(), out_order.end(), j) == out_order.end()) out_order.push_back(j);
  };

  long batch_label = 3 * LL;
  std::vector<long> batch_order;
  for (const auto& f : in.factors) {
    std::vector<long> labels;
    for (std::size_t s : f.sites) labels.push_back(IN(s));
    for (std::size_t b = 0; b < f.batch; ++b) {
      labels.push_back(batch_label);
      batch_order.push_back(batch_label++);
    }
    if (f.x.rank() != labels.size()) throw ValidationError("ascend: coefficient tensor rank mismatch");
    nodes.push_back({f.x, labels});
  }

  for (std::size_t s : sites) {
    if (auto it = in.boundary.find(s); it != in.boundary.end()) {
      nodes.push_back({from_matrix(it->second), {MID(s), IN(s)}});
      mids.insert(s);
      note_output(isometry_of(g, s));
      continue;
    }
    const auto dj = disentangler_of(g, L, s);
    if (!dj) {
      nodes.push_back({RTensor::identity(4), {MID(s), IN(s)}});
      mids.insert(s);
      note_output(isometry_of(g, s));
      continue;
    }
    const auto ds = disentangler_sites(g, L, *dj);
    if (std::find(dis_used.begin(), dis_used.end(), *dj) == dis_used.end()) {
      dis_used.push_back(*dj);
      detail::Node node{lt.D[*dj], {MID(ds[0]), MID(ds[1]), IN(ds[0]), IN(ds[1])}};
      for (std::size_t t : ds)
        if (!support.count(t)) node = detail::close_with_identity(node, IN(t));
      nodes.push_back(std::move(node));
      mids.insert(ds[0]);
      mids.insert(ds[1]);
    }
    if (s == ds[1]) note_output(isometry_of(g, ds[0]));
    note_output(isometry_of(g, s));
    if (s == ds[0]) note_output(isometry_of(g, ds[1]));
  }

  for (std::size_t j : out_order) {
    const auto xs = isometry_sites(g, L, j);
    std::vector<long> labels{OUT(j)};
    for (std::size_t x : xs) labels.push_back(MID(x));
    detail::Node node{lt.W[j], labels};
    for (std::size_t x : xs)
      if (!mids.count(x)) node = detail::close_with_identity(node, MID(x));
    nodes.push_back(std::move(node));
  }

  std::vector<long> order;
  for (std::size_t j : out_order) order.push_back(OUT(j));
  if (in.factors.empty()) {
    for (std::size_t s : sites) order.push_back(IN(s));
  } else {
    order.insert(order.end(), batch_order.begin(), batch_order.end());
  }
  return {detail::contract_network(std::move(nodes), order), out_order};
}

// Effective map on a window-boundary site whose disentangler partner lies
// outside the window. Returns the 4x4 map E[p, s] when every non-identity
// Pauli on the site ascends to an operator that is the identity on the
// outside isometry's output; otherwise nothing (the site leaks).
inline std::optional<RMatrix> boundary_map(const Layer& layer, std::size_t site, double tol = 1e-12) {
  const Geometry g = layer.geometry;
  const std::size_t L = layer.lattice, k = layer.k();
  const auto dj = disentangler_of(g, L, site);
  if (!dj) return std::nullopt;
  const auto ds = disentangler_sites(g, L, *dj);
  const std::size_t partner = ds[0] == site ? ds[1] : ds[0];
  const std::size_t outer = isometry_of(g, partner);
  const auto oxs = isometry_sites(g, L, outer);
  // Local register: the outer isometry inputs followed by `site`.
  std::vector<std::size_t> reg(oxs.begin(), oxs.end());
  reg.push_back(site);
  auto pos = [&](std::size_t s) {
    return static_cast<std::size_t>(std::find(reg.begin(), reg.end(), s) - reg.begin());
  };
  const std::size_t nreg = reg.size();
  const CMatrix u = to_matrix(layer.disentanglers[*dj].unitary);
  const CMatrix v = to_matrix(layer.isometries[outer].unitary);
  RMatrix E(4, 4);
  const std::size_t anc_step = std::size_t{1} << (k - 1);
  for (int sig = 0; sig < 4; ++sig) {
    std::string lab(nreg, 'I');
    lab[pos(site)] = "IXYZ"[sig];
    CMatrix op = pauli_dense(PauliString(lab)) / std::sqrt(2.0);
    const CMatrix U = embed_operator(u, {pos(ds[0]), pos(ds[1])}, nreg);
    std::vector<std::size_t> vpos;
    for (std::size_t x : oxs) vpos.push_back(pos(x));
    const CMatrix V = embed_operator(v, vpos, nreg);
    op = V * U * op * U.adjoint() * V.adjoint();
    // Keep the outer kept qubit and `site`; project ancillas onto |0>.
    // Register bit order: oxs[0] (kept), ancillas, site.
    CMatrix red(4, 4);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const std::size_t ia = ((a >> 1) * anc_step) * 2 + (a & 1);
        const std::size_t ib = ((b >> 1) * anc_step) * 2 + (b & 1);
        red(a, b) = op(ia, ib);
      }
    const Eigen::VectorXd c = hermitian_pauli_coefficients(red);
    for (int r = 1; r < 4; ++r)
      for (int p = 0; p < 4; ++p)
        if (std::abs(c(4 * r + p)) > tol) return std::nullopt;
    for (int p = 0; p < 4; ++p) E(p, sig) = c(p) / std::sqrt(2.0);
  }
  return E;
}

// One-site map on a window-boundary site obtained by contracting the outer
// leg of its disentangler with itself: X -> tr_partner[u (1 (x) X) u^dagger] / 2.
// Unital, and equal to boundary_map whenever the disentangler is a product.
inline RMatrix traced_boundary_map(const Layer& layer, std::size_t site) {
  const Geometry g = layer.geometry;
  const std::size_t L = layer.lattice;
  const auto dj = disentangler_of(g, L, site);
  if (!dj) throw ValidationError("traced_boundary_map: site " + std::to_string(site) + " has no disentangler");
  const auto ds = disentangler_sites(g, L, *dj);
  const std::size_t here = ds[0] == site ? 0 : 1;
  const CMatrix u = to_matrix(layer.disentanglers[*dj].unitary);
  RMatrix E(4, 4);
  for (int sig = 0; sig < 4; ++sig) {
    std::string lab = "II";
    lab[here] = "IXYZ"[sig];
    const CMatrix op = u * pauli_dense(PauliString(lab)) * u.adjoint() / std::sqrt(2.0);
    const CMatrix red = reduced_density_matrix(op, {here}) / 2.0;
    const Eigen::VectorXd c = hermitian_pauli_coefficients(red);
    for (int p = 0; p < 4; ++p) E(p, sig) = c(p);
  }
  return E;
}

// ---------------------------------------------------------------------------
// Dense front ends

namespace detail {

// Coefficient tensor of a dense operator with a trailing re/im leg.
inline OperatorFactor dense_factor(const CMatrix& m, const std::vector<std::size_t>& sites) {
  if (m.rows() != (Eigen::Index{1} << sites.size()) || m.rows() != m.cols())
    throw ValidationError("operator dimension does not match its support");
  const CVector c = pauli_coefficients(m);
  std::vector<double> x(static_cast<std::size_t>(c.size()) * 2);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    x[2 * i] = c(i).real();
    x[2 * i + 1] = c(i).imag();
  }
  std::vector<std::size_t> shape(sites.size(), 4);
  shape.push_back(2);
  return {sites, RTensor(shape, std::move(x)), 1};
}

// Inverse of dense_factor for a result with `factors` trailing re/im legs:
// the coefficient is the sum over legs of i^(number of imaginary picks).
inline CMatrix dense_from_result(const RTensor& t, std::size_t factors) {
  const std::size_t nb = std::size_t{1} << factors;
  const std::size_t dim = t.size() / nb;
  static const cplx ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  CVector r = CVector::Zero(dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t b = 0; b < nb; ++b) r(i) += ipow[std::popcount(b) & 3] * t[i * nb + b];
  return from_pauli_coefficients(r);
}

}  // namespace detail

struct AscendedOperator {
  CTensor op;
  std::vector<std::size_t> support;
};

// Ascends a dense operator on `support` (first site most significant)
// through `layer`. The new support lists the level-tau sites reached.
inline AscendedOperator ascend_operator(const Layer& layer, const CTensor& op,
                                        const std::vector<std::size_t>& support) {
  if (support.empty()) throw ValidationError("ascend_operator: empty support");
  if (support.size() > 12) throw ValidationError("ascend_operator: support wider than 12 sites");
  LayerTransfer lt(layer);
  const AscentOutput out =
      ascend_coefficients(lt, AscentInput{{}, {detail::dense_factor(to_matrix(op), support)}, {}});
  return {from_matrix(detail::dense_from_result(out.t, 1)), out.outputs};
}

// Dense operator on `to` (ordered) equal to `op` on `from` and identity
// elsewhere; `from` must be a subset of `to`.
inline CMatrix widen_operator(const CMatrix& op, const std::vector<std::size_t>& from,
                              const std::vector<std::size_t>& to) {
  std::vector<std::size_t> pos;
  for (std::size_t s : from) {
    auto it = std::find(to.begin(), to.end(), s);
    if (it == to.end()) throw ValidationError("widen_operator: site not in target support");
    pos.push_back(static_cast<std::size_t>(it - to.begin()));
  }
  return embed_operator(op, pos, to.size());
}

// || A[O_A (x) O_B] - A[O_A] A[O_B] ||_F on the union of the ascended
// supports. Zero when the two cones share no disentangler, since the
// ascended factors then act on disjoint sites.
inline double distributivity_deviation(const Layer& layer, const CTensor& op_a,
                                       const std::vector<std::size_t>& sup_a, const CTensor& op_b,
                                       const std::vector<std::size_t>& sup_b) {
  for (std::size_t s : sup_a)
    if (std::find(sup_b.begin(), sup_b.end(), s) != sup_b.end())
      throw ValidationError("distributivity_deviation: supports overlap");
  const auto fa = detail::dense_factor(to_matrix(op_a), sup_a);
  const auto fb = detail::dense_factor(to_matrix(op_b), sup_b);
  LayerTransfer lt(layer);
  const AscentOutput ab = ascend_coefficients(lt, AscentInput{{}, {fa, fb}, {}});
  const AscentOutput a = ascend_coefficients(lt, AscentInput{{}, {fa}, {}});
  const AscentOutput b = ascend_coefficients(lt, AscentInput{{}, {fb}, {}});
  std::vector<std::size_t> uni = ab.outputs;
  for (const auto* o : {&a.outputs, &b.outputs})
    for (std::size_t s : *o)
      if (std::find(uni.begin(), uni.end(), s) == uni.end()) uni.push_back(s);
  if (uni.size() > 12) throw ValidationError("distributivity_deviation: ascended support too wide");
  const CMatrix lhs = widen_operator(detail::dense_from_result(ab.t, 2), ab.outputs, uni);
  const CMatrix rhs = widen_operator(detail::dense_from_result(a.t, 1), a.outputs, uni) *
                      widen_operator(detail::dense_from_result(b.t, 1), b.outputs, uni);
  return (lhs - rhs).norm();
}

}  // namespace mera
