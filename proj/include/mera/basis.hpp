#pragma once
// Renormalized observable bases.
//
// The density matrix of a block of level-tau sites is reconstructed from
// expectation values of base-level Pauli strings O^j whose ascended images
// A[O^j] span the operators on the block. Candidates are built recursively:
//
//   * the window is the set of level-(tau-1) isometry inputs feeding the
//     block, minus sites whose disentangler partner lies outside it (their
//     images would leak onto neighbouring outputs). Sites joined to the
//     outside by a product disentangler are kept through an effective
//     one-site map.
//   * one level above the base, candidates are all Pauli strings on the
//     window;
//   * higher up, the window is split into at most two contiguous child
//     blocks, each with its own selected basis, and the candidates are the
//     products of child observables. Child windows never share a gate, so
//     the ascent of a product is the product of the ascents.
//
// From the candidates, 4^s observables are selected (longest residual vector
// plus one-by-one replacement), orthogonalized, and cached per block.

#include <deque>
#include <map>
#include <memory>
#include <set>

#include "mera/ascent.hpp"
#include "mera/selection.hpp"

namespace mera {

struct RenormalizedBasis {
  std::size_t level = 0;                // tau
  std::size_t base_level = 0;           // level whose Pauli strings are measured
  std::vector<std::size_t> block;       // level-tau sites, leg order of all coefficient vectors
  std::vector<std::size_t> window;      // level-(tau-1) sites the candidates act on
  std::vector<std::vector<std::size_t>> children;  // level-(tau-1) blocks multiplied into candidates
  std::size_t candidate_count = 0;
  std::vector<PauliString> labels;      // selected observables on the base lattice; labels[0] is I
  OrthogonalBasis ortho;
  double log_abs_det_lrv = 0;           // before replacement
  double log_abs_det = 0;
  std::size_t swaps = 0;

  std::size_t dim() const { return std::size_t{1} << (2 * block.size()); }
};

// Candidate windows. `isometry_inputs` takes every isometry input of the
// block and contracts the outer legs of the two boundary disentanglers
// (traced_boundary_map); the resulting candidates serve conditioning
// studies but do not reproduce expectation values exactly unless those
// disentanglers are products. `confined` drops boundary sites whose
// disentangler is entangling, which keeps every candidate exact.
enum class CandidateWindow { isometry_inputs, confined };

inline std::string to_string(CandidateWindow w) {
  return w == CandidateWindow::isometry_inputs ? "isometry-inputs" : "confined";
}

struct BasisOptions {
  CandidateWindow window = CandidateWindow::isometry_inputs;
  bool replace = true;
  std::size_t max_swaps = 100000;
  std::size_t max_candidates = std::size_t{1} << 18;
};

namespace detail {

// Operator Schmidt rank one, i.e. u = a (x) b.
inline bool is_product_gate(const CMatrix& u, double tol = 1e-10) {
  CMatrix r(4, 4);
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 2; ++a)
      for (int j = 0; j < 2; ++j)
        for (int b = 0; b < 2; ++b) r(2 * i + j, 2 * a + b) = u(2 * i + a, 2 * j + b);
  Eigen::JacobiSVD<CMatrix> svd(r);
  return svd.singularValues()(1) <= tol * svd.singularValues()(0);
}

inline bool contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

// Union of two strings with disjoint supports.
inline PauliString merge_labels(const PauliString& a, const PauliString& b) {
  std::string s = a.str();
  for (std::size_t i = 0; i < s.size(); ++i)
    if (b[i] != 'I') {
      if (s[i] != 'I') throw ValidationError("basis: child observables overlap at site " + std::to_string(i));
      s[i] = b[i];
    }
  return PauliString(s);
}

// Legs [outputs..., rest...] of an ascent reordered to [block..., rest...]
// and flattened to a (4^|block| x rest) matrix.
inline RMatrix arrange_outputs(const AscentOutput& out, const std::vector<std::size_t>& block) {
  if (out.outputs.size() != block.size())
    throw ValidationError("basis: ascended window does not cover exactly the block");
  std::vector<std::size_t> perm;
  for (std::size_t s : block) {
    auto it = std::find(out.outputs.begin(), out.outputs.end(), s);
    if (it == out.outputs.end()) throw ValidationError("basis: ascended window leaves the block");
    perm.push_back(static_cast<std::size_t>(it - out.outputs.begin()));
  }
  for (std::size_t i = block.size(); i < out.t.rank(); ++i) perm.push_back(i);
  const RTensor t = out.t.permute(perm);
  const std::size_t rows = std::size_t{1} << (2 * block.size());
  return Eigen::Map<const RMatrix>(t.data().data(), static_cast<Eigen::Index>(rows),
                                   static_cast<Eigen::Index>(t.size() / rows));
}

}  // namespace detail

// A block given in ring order; the whole ring is canonicalized to 0..L-1.
inline std::vector<std::size_t> canonical_block(const std::vector<std::size_t>& block, std::size_t L) {
  if (block.empty()) throw ValidationError("basis: empty block");
  std::vector<std::size_t> sorted = block;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.back() >= L)
    throw ValidationError("basis: block sites repeated or outside the lattice");
  if (block.size() == L) return sorted;
  for (std::size_t i = 1; i < block.size(); ++i)
    if (block[i] != (block[i - 1] + 1) % L) throw ValidationError("basis: block is not a contiguous arc");
  return block;
}

// Density matrix with its sites listed in `from` reordered to `to`.
inline CMatrix reorder_sites(const CMatrix& rho, const std::vector<std::size_t>& from,
                             const std::vector<std::size_t>& to) {
  if (from == to) return rho;
  std::vector<std::size_t> pos;
  for (std::size_t s : to) {
    auto it = std::find(from.begin(), from.end(), s);
    if (it == from.end()) throw ValidationError("reorder_sites: site sets differ");
    pos.push_back(static_cast<std::size_t>(it - from.begin()));
  }
  return reduced_density_matrix(rho, pos);
}

class BasisBuilder {
 public:
  explicit BasisBuilder(std::size_t base_level = 0, BasisOptions opt = {}) : base_(base_level), opt_(opt) {}

  // Uses the circuit layers above `base_level`.
  BasisBuilder(const MeraCircuit& c, std::size_t base_level, BasisOptions opt = {}) : BasisBuilder(base_level, opt) {
    for (std::size_t t = base_level; t < c.layers.size(); ++t) add_layer(c.layers[t]);
  }

  BasisBuilder(const BasisBuilder&) = delete;
  BasisBuilder& operator=(const BasisBuilder&) = delete;

  // Layers must arrive in order, starting with the one above the base level.
  void add_layer(const Layer& l) {
    if (l.level != base_ + layers_.size() + 1)
      throw ValidationError("BasisBuilder: expected layer " + std::to_string(base_ + layers_.size() + 1) +
                            ", got " + std::to_string(l.level));
    layers_.push_back(l);
    transfers_.emplace_back(layers_.back());
  }

  std::size_t base_level() const { return base_; }
  std::size_t top_level() const { return base_ + layers_.size(); }
  std::size_t lattice_at(std::size_t level) const {
    if (level == base_) return layers_.empty() ? 0 : layers_.front().lattice;
    return layer(level).output_lattice();
  }

  std::shared_ptr<const RenormalizedBasis> get(std::size_t level, const std::vector<std::size_t>& block) {
    if (level <= base_ || level > top_level())
      throw ValidationError("basis: no layers available for level " + std::to_string(level));
    const auto canon = canonical_block(block, layer(level).output_lattice());
    const auto key = std::make_pair(level, canon);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    auto b = build(level, canon);
    cache_.emplace(key, b);
    return b;
  }

  // Density matrix of `block` (in the given order) from expectation values
  // of the basis observables; values[0] belongs to the identity.
  CMatrix density(std::size_t level, const std::vector<std::size_t>& block, const Eigen::VectorXd& values) {
    const auto b = get(level, block);
    if (static_cast<std::size_t>(values.size()) != b->dim())
      throw ValidationError("basis: expected " + std::to_string(b->dim()) + " expectation values");
    const Eigen::VectorXd t = b->ortho.beta * values;
    const Eigen::VectorXd r = b->ortho.R * t / std::ldexp(1.0, static_cast<int>(b->block.size()));
    const CMatrix rho = from_pauli_coefficients(CVector(r.cast<cplx>()));
    return reorder_sites(rho, b->block, block);
  }

 private:
  const Layer& layer(std::size_t level) const { return layers_.at(level - base_ - 1); }

  std::shared_ptr<RenormalizedBasis> build(std::size_t level, const std::vector<std::size_t>& block) {
    const Layer& l = layer(level);
    const LayerTransfer& lt = transfers_.at(level - base_ - 1);
    const Geometry g = l.geometry;
    const std::size_t L = l.lattice;
    const std::size_t n_base = lattice_at(base_);

    std::vector<std::size_t> inputs;
    for (std::size_t j : block)
      for (std::size_t s : isometry_sites(g, L, j)) inputs.push_back(s);
    const bool full = inputs.size() == L;
    std::vector<std::size_t> window;
    std::map<std::size_t, RMatrix> boundary;
    for (std::size_t s : inputs) {
      const auto p = disentangler_partner(g, L, s);
      if (full || !p || detail::contains(inputs, *p)) {
        window.push_back(s);
      } else if (opt_.window == CandidateWindow::isometry_inputs) {
        window.push_back(s);
        boundary.emplace(s, traced_boundary_map(l, s));
      } else if (detail::is_product_gate(to_matrix(l.disentanglers[*disentangler_of(g, L, s)].unitary))) {
        if (auto e = boundary_map(l, s)) {
          window.push_back(s);
          boundary.emplace(s, *e);
        }
      }
    }
    if (window.empty()) throw ValidationError("basis: block has no confined window");

    auto b = std::make_shared<RenormalizedBasis>();
    b->level = level;
    b->base_level = base_;
    b->block = block;
    b->window = window;
    RMatrix X;
    std::vector<PauliString> labels;

    if (level - 1 == base_) {
      if (2 * window.size() > 62 || (std::size_t{1} << (2 * window.size())) > opt_.max_candidates)
        throw ValidationError("basis: window of " + std::to_string(window.size()) +
                              " sites exceeds the candidate limit");
      const AscentOutput out = ascend_coefficients(lt, AscentInput{window, {}, boundary});
      X = detail::arrange_outputs(out, block) * std::sqrt(std::ldexp(1.0, static_cast<int>(window.size())));
      const std::size_t N = std::size_t{1} << (2 * window.size());
      labels.reserve(N);
      for (std::size_t c = 0; c < N; ++c)
        labels.push_back(PauliString::from_index(c, window.size()).embed(window, n_base));
    } else {
      std::vector<std::vector<std::size_t>> parts;
      if (window.size() <= 4) {
        parts.push_back(window);
      } else if (window.size() <= 8) {
        const std::size_t h = (window.size() + 1) / 2;
        parts.emplace_back(window.begin(), window.begin() + static_cast<long>(h));
        parts.emplace_back(window.begin() + static_cast<long>(h), window.end());
      } else {
        throw ValidationError("basis: window of " + std::to_string(window.size()) +
                              " sites is too wide for product candidates");
      }
      std::vector<std::shared_ptr<const RenormalizedBasis>> kids;
      std::size_t N = 1;
      b->children = parts;
      for (const auto& p : parts) {
        kids.push_back(get(level - 1, p));
        N *= kids.back()->dim();
      }
      if (N > opt_.max_candidates)
        throw ValidationError("basis: " + std::to_string(N) + " product candidates exceed the limit");
      std::vector<OperatorFactor> factors;
      for (const auto& k : kids) {
        std::vector<std::size_t> shape(k->block.size(), 4);
        shape.push_back(k->dim());
        factors.push_back({k->block, RTensor(shape, std::vector<double>(k->ortho.C.data(),
                                                                        k->ortho.C.data() + k->ortho.C.size())),
                           1});
      }
      X = detail::arrange_outputs(ascend_coefficients(lt, AscentInput{{}, factors, boundary}), block);
      labels.reserve(N);
      if (kids.size() == 1) {
        labels = kids[0]->labels;
      } else {
        for (const auto& a : kids[0]->labels)
          for (const auto& c : kids[1]->labels) labels.push_back(detail::merge_labels(a, c));
      }
    }
    if (!labels.front().is_identity()) throw Error("basis: candidate 0 is not the identity");
    b->candidate_count = static_cast<std::size_t>(X.cols());

    const std::size_t d = b->dim();
    Selection sel = lrv_select(X, d, 0);
    b->log_abs_det_lrv = sel.log_abs_det;
    if (opt_.replace) sel = one_by_one_replace(X, sel, opt_.max_swaps);
    b->log_abs_det = sel.log_abs_det;
    b->swaps = sel.swaps;
    RMatrix C(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
      C.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(sel.members[j]));
      b->labels.push_back(labels[sel.members[j]]);
    }
    b->ortho = gram_orthogonalize(C, block.size());
    return b;
  }

  std::size_t base_;
  BasisOptions opt_;
  std::deque<Layer> layers_;
  std::deque<LayerTransfer> transfers_;
  std::map<std::pair<std::size_t, std::vector<std::size_t>>, std::shared_ptr<const RenormalizedBasis>> cache_;
};

// ---------------------------------------------------------------------------
// Conditioning

// Blocks whose density matrices are needed at `level`: the isometry blocks
// of the next layer, or the whole top lattice. Full-ring blocks appear once.
inline std::vector<std::vector<std::size_t>> level_blocks(const MeraCircuit& c, std::size_t level) {
  const std::size_t L = lattice_at(c, level);
  std::vector<std::vector<std::size_t>> out;
  if (level >= c.layers.size()) {
    std::vector<std::size_t> all(L);
    std::iota(all.begin(), all.end(), 0);
    out.push_back(all);
    return out;
  }
  for (std::size_t j = 0; j < L / arity(c.geometry); ++j) {
    auto b = isometry_block(c.geometry, L, j);
    if (b.size() >= L) {
      if (!out.empty()) continue;
      std::sort(b.begin(), b.end());
    }
    out.push_back(b);
  }
  return out;
}

inline double conditioning_factor(const RenormalizedBasis& b, std::size_t M0 = 100) {
  return allocate(b.ortho.beta, M0).S;
}

// Mean S over the blocks of `level`, measured from the builder's base level.
inline double mean_conditioning(BasisBuilder& bb, const MeraCircuit& c, std::size_t level, std::size_t M0 = 100) {
  double s = 0;
  const auto blocks = level_blocks(c, level);
  for (const auto& b : blocks) s += conditioning_factor(*bb.get(level, b), M0);
  return s / static_cast<double>(blocks.size());
}

struct ConditioningProfile {
  std::vector<double> S;   // S[l-1] = S_{0 -> l}, l = 1..m
  double S12 = 0;          // S_{1 -> 2}, zero when fewer than two layers
  double composition_ratio() const { return S.size() >= 2 && S12 > 0 ? S[1] / (S[0] * S12) : 0.0; }
};

inline ConditioningProfile conditioning_profile(const MeraCircuit& c, std::size_t M0 = 100,
                                                std::size_t max_level = 0, BasisOptions opt = {}) {
  const std::size_t top = max_level ? std::min(max_level, c.layers.size()) : c.layers.size();
  ConditioningProfile p;
  BasisBuilder from0(c, 0, opt);
  for (std::size_t l = 1; l <= top; ++l) p.S.push_back(mean_conditioning(from0, c, l, M0));
  if (top >= 2) {
    BasisBuilder from1(c, 1, opt);
    p.S12 = mean_conditioning(from1, c, 2, M0);
  }
  return p;
}

// S_{0 -> 2} from two non-interfering level-1 blocks: each child keeps the
// Pauli strings of its confined physical window, the children's selected
// observables are multiplied, ascended through layer 2, and selected again.
// Averaged over the level-2 blocks.
inline double two_level_conditioning(const MeraCircuit& c, std::size_t M0 = 100, BasisOptions opt = {}) {
  if (c.layers.size() < 2) throw ValidationError("two_level_conditioning: needs two reconstructed layers");
  opt.window = CandidateWindow::confined;
  BasisBuilder bb(c, 0, opt);
  const Layer& l1 = c.layers[0];
  double s = 0;
  const auto blocks = level_blocks(c, 2);
  for (const auto& block : blocks) {
    const auto b = bb.get(2, block);
    std::vector<std::set<std::size_t>> used;
    for (const auto& child : b->children) {
      std::set<std::size_t> gates;
      for (std::size_t site : bb.get(1, child)->window)
        if (auto u = disentangler_of(l1.geometry, l1.lattice, site))
          if (!detail::is_product_gate(to_matrix(l1.disentanglers[*u].unitary))) gates.insert(*u);
      for (const auto& other : used)
        for (std::size_t u : gates)
          if (other.count(u))
            throw ValidationError("two_level_conditioning: child blocks share disentangler " + std::to_string(u));
      used.push_back(gates);
    }
    s += conditioning_factor(*b, M0);
  }
  return s / static_cast<double>(blocks.size());
}

// ---------------------------------------------------------------------------
// Single-site scaling in a ternary layer

// Transfer matrix M[i][j] = tr(P_i A[P_j]) / 2 of the middle input of
// isometry j, which reaches its output without a disentangler.
struct SingleSiteScaling {
  RMatrix M;
  RMatrix Minv;
  Eigen::VectorXd eigen_magnitudes;  // |eigenvalues of M|, descending
  Eigen::Vector3d lambda;            // sum_{i>=1} |Minv_{i,y}|^2 for y = X, Y, Z
  double overhead() const { return lambda.maxCoeff(); }
};

inline SingleSiteScaling single_site_scaling(const Layer& layer, std::size_t isometry = 0) {
  if (layer.geometry != Geometry::ternary) throw ValidationError("single_site_scaling: needs a ternary layer");
  if (isometry >= layer.isometries.size()) throw ValidationError("single_site_scaling: isometry out of range");
  LayerTransfer lt(layer);
  const AscentOutput out = ascend_coefficients(lt, AscentInput{{3 * isometry + 1}, {}, {}});
  SingleSiteScaling s;
  s.M = Eigen::Map<const RMatrix>(out.t.data().data(), 4, 4);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(s.M);
  if (!lu.isInvertible()) throw NumericError("single_site_scaling: one-site transfer matrix is singular");
  s.Minv = lu.inverse();
  Eigen::EigenSolver<Eigen::MatrixXd> es(s.M);
  s.eigen_magnitudes = es.eigenvalues().cwiseAbs();
  std::sort(s.eigen_magnitudes.data(), s.eigen_magnitudes.data() + 4, std::greater<>());
  for (int y = 1; y < 4; ++y) s.lambda(y - 1) = s.Minv.col(y).tail(3).squaredNorm();
  return s;
}

// ---------------------------------------------------------------------------
// Measurement budgets

enum class BudgetMode { binary, ternary_naive, brute_force };

inline std::string to_string(BudgetMode m) {
  switch (m) {
    case BudgetMode::binary: return "binary";
    case BudgetMode::ternary_naive: return "ternary-naive";
    default: return "brute-force";
  }
}

// Total number of measurements. `factor` is S for the binary MERA and the
// per-site overhead lambda for the naive ternary scheme (per-level
// multiplier lambda^5 on 5-site blocks); it is ignored for brute force.
inline double total_budget(std::size_t n, BudgetMode mode, double factor, std::size_t M0 = 100) {
  const double m0 = static_cast<double>(M0);
  if (mode == BudgetMode::brute_force) return m0 * std::pow(3.0, static_cast<double>(n));
  if (mode == BudgetMode::binary) {
    const auto sh = decompose(n, Geometry::binary);
    if (sh.layers < 2) throw ValidationError("total_budget: binary formula needs at least two layers");
    const int m = static_cast<int>(sh.layers);
    double sum = 0;
    for (int t = 0; t <= m - 3; ++t) sum += std::ldexp(1.0, m - t + 1) * std::pow(factor, t);
    return m0 * (256.0 * sum + std::pow(4.0, static_cast<double>(sh.top_sites)) * std::pow(factor, m - 2));
  }
  const auto sh = decompose(n, Geometry::ternary);
  const double mult = std::pow(factor, 5);
  double sum = 0;
  for (std::size_t t = 0; t < sh.layers; ++t)
    sum += static_cast<double>(n) / std::pow(3.0, static_cast<double>(t)) * std::pow(mult, static_cast<double>(t));
  return m0 * (1024.0 * sum + std::pow(4.0, static_cast<double>(sh.top_sites)) *
                                  std::pow(mult, static_cast<double>(sh.layers)));
}

}  // namespace mera
