#include "catch_amalgamated.hpp"

#include <numeric>

#include "mera/basis.hpp"
#include "mera/random.hpp"
#include "oracles.hpp"

using namespace mera;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

BasisOptions confined() {
  BasisOptions o;
  o.window = CandidateWindow::confined;
  return o;
}

RMatrix random_real(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> g;
  RMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

double abs_det(const RMatrix& X, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd A(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) A.col(j) = X.col(cols[j]);
  return std::abs(A.determinant());
}

// Candidates of the two-qubit to one-qubit toy: the 16 two-qubit Paulis
// ascended through a single isometry, as 4-dimensional coefficient vectors.
RMatrix toy_candidates(const CMatrix& v) {
  const RTensor W = isometry_transfer(v);
  RMatrix X(4, 16);
  for (int r = 0; r < 4; ++r)
    for (int s = 0; s < 16; ++s) X(r, s) = 2.0 * W[r * 16 + s];
  return X;
}

// Exhaustive optimum over identity plus three of the fifteen others.
double toy_optimum(const RMatrix& X) {
  double best = 0;
  for (std::size_t a = 1; a < 16; ++a)
    for (std::size_t b = a + 1; b < 16; ++b)
      for (std::size_t c = b + 1; c < 16; ++c) best = std::max(best, abs_det(X, {0, a, b, c}));
  return best;
}

CVector renormalized(const MeraCircuit& c, const CVector& psi, std::size_t level) {
  CVector x = psi;
  for (std::size_t t = 0; t < level; ++t) x = apply_layer(x, c.layers[t]);
  return x / x.norm();
}

Eigen::VectorXd exact_values(const RenormalizedBasis& b, const CVector& psi) {
  Eigen::VectorXd v(b.labels.size());
  for (std::size_t j = 0; j < b.labels.size(); ++j) v(j) = expectation(psi, b.labels[j]);
  return v;
}

}  // namespace

TEST_CASE("LRV on orthogonal candidates picks the longest", "[selection]") {
  RMatrix X = RMatrix::Zero(3, 5);
  X(0, 0) = 1;   // pinned
  X(1, 1) = 0.5;
  X(2, 2) = 3;
  X(1, 3) = 2;
  X(2, 4) = 1;
  const auto s = lrv_select(X, 3, 0);
  REQUIRE(s.members == std::vector<std::size_t>{0, 2, 3});
  REQUIRE_THAT(s.log_abs_det, WithinAbs(std::log(6.0), 1e-14));
  const auto free = lrv_select(X, 2, std::nullopt);
  REQUIRE(free.members == std::vector<std::size_t>{2, 3});
  REQUIRE_THROWS_AS(lrv_select(RMatrix::Zero(3, 4), 1, std::nullopt), RankError);
  try {
    RMatrix flat = RMatrix::Zero(3, 4);
    flat(0, 0) = flat(0, 1) = 1;
    lrv_select(flat, 3, 0);
    FAIL("expected a rank error");
  } catch (const RankError& e) {
    REQUIRE(e.achieved_rank == 1);
  }
}

TEST_CASE("two-dimensional counterexample", "[selection]") {
  // The counterexample needs (1 - eps)^2 > (1 - eps) / sqrt 2, i.e. eps < 0.29.
  for (double eps : {0.01, 0.05, 0.1, 0.2}) {
    RMatrix X(2, 3);
    const double a = (1 - eps) / std::sqrt(2.0);
    X << 1, a, a, 0, a, -a;
    const auto lrv = lrv_select(X, 2, std::nullopt);
    REQUIRE(lrv.members == std::vector<std::size_t>{0, 1});
    REQUIRE_THAT(std::exp(lrv.log_abs_det), WithinAbs((1 - eps) / std::sqrt(2.0), 1e-14));
    const auto rep = one_by_one_replace(X, lrv);
    std::vector<std::size_t> m = rep.members;
    std::sort(m.begin(), m.end());
    REQUIRE(m == std::vector<std::size_t>{1, 2});
    // The optimal pair has |det| = 2 a^2 = (1 - eps)^2.
    REQUIRE_THAT(std::exp(rep.log_abs_det), WithinAbs((1 - eps) * (1 - eps), 1e-14));
    REQUIRE_THAT(abs_det(X, {1, 2}), WithinAbs((1 - eps) * (1 - eps), 1e-14));
  }
}

TEST_CASE("toy selection against the exhaustive optimum", "[selection]") {
  Rng rng(31);
  double worst_lrv = 1, worst_rep = 1;
  for (int t = 0; t < 40; ++t) {
    const CMatrix v = haar_unitary(4, rng);
    const RMatrix X = toy_candidates(v);
    // Dense oracle for the candidates: A[P] = w P w^dagger with w = P v.
    const CMatrix w = isometry_form(v);
    for (std::size_t s = 0; s < 16; ++s) {
      const Eigen::VectorXd c =
          hermitian_pauli_coefficients(CMatrix(w * pauli_dense(PauliString::from_index(s, 2)) * w.adjoint()));
      REQUIRE((c - X.col(s)).norm() < 1e-12);
    }
    REQUIRE((X.col(0) - Eigen::Vector4d(std::sqrt(2.0), 0, 0, 0)).norm() < 1e-12);
    const double opt = toy_optimum(X);
    const auto lrv = lrv_select(X, 4, 0);
    const auto rep = one_by_one_replace(X, lrv);
    REQUIRE(rep.members[0] == 0);
    REQUIRE(rep.log_abs_det >= lrv.log_abs_det - 1e-12);
    worst_lrv = std::min(worst_lrv, std::exp(lrv.log_abs_det) / opt);
    worst_rep = std::min(worst_rep, std::exp(rep.log_abs_det) / opt);
  }
  REQUIRE(worst_lrv >= 0.5);
  REQUIRE(worst_rep >= 0.9);
}

TEST_CASE("replacement reaches a single-swap local optimum", "[selection]") {
  Rng rng(32);
  for (int t = 0; t < 10; ++t) {
    for (Eigen::Index k : {4, 3}) {
      const RMatrix X = random_real(4, 12, rng);
      const auto lrv = lrv_select(X, static_cast<std::size_t>(k), 0);
      const auto rep = one_by_one_replace(X, lrv);
      REQUIRE(rep.log_abs_det >= lrv.log_abs_det - 1e-12);
      REQUIRE_THAT(rep.log_abs_det, WithinAbs(log_gram_volume(X, rep.members), 1e-10));
      for (std::size_t r = 1; r < rep.members.size(); ++r)
        for (std::size_t c = 0; c < 12; ++c) {
          if (std::find(rep.members.begin(), rep.members.end(), c) != rep.members.end()) continue;
          auto alt = rep.members;
          alt[r] = c;
          REQUIRE(log_gram_volume(X, alt) <= rep.log_abs_det + 1e-8);
        }
    }
  }
}

TEST_CASE("selection is invariant under global rescaling", "[selection]") {
  Rng rng(33);
  const RMatrix X = random_real(6, 40, rng);
  const auto a = one_by_one_replace(X, lrv_select(X, 6, 0));
  const auto b = one_by_one_replace(RMatrix(2.5 * X), lrv_select(RMatrix(2.5 * X), 6, 0));
  REQUIRE(a.members == b.members);
  REQUIRE_THAT(b.log_abs_det - a.log_abs_det, WithinAbs(6 * std::log(2.5), 1e-10));
}

TEST_CASE("Gram orthogonalization and allocation", "[selection]") {
  // The Pauli basis itself: beta is a signed permutation, every multiplier 1.
  const RMatrix paulis = 4.0 * RMatrix::Identity(256, 256);
  const auto ob = gram_orthogonalize(paulis, 4);
  REQUIRE((ob.beta.cwiseAbs2().colwise().sum().array() - 1).abs().maxCoeff() < 1e-12);
  REQUIRE((ob.beta.cwiseAbs().rowwise().maxCoeff().array() - 1).abs().maxCoeff() < 1e-12);
  const auto p1 = allocate(ob.beta);
  REQUIRE_THAT(p1.S, WithinAbs(1.0, 1e-12));
  REQUIRE(p1.total == 25600);

  Rng rng(34);
  for (std::size_t s : {1u, 2u}) {
    const Eigen::Index d = Eigen::Index{1} << (2 * s);
    RMatrix C = random_real(d, d, rng);
    const auto o = gram_orthogonalize(C, s);
    const Eigen::MatrixXd RR = o.R.transpose() * o.R;
    REQUIRE((RR - std::ldexp(1.0, static_cast<int>(s)) * Eigen::MatrixXd::Identity(d, d)).norm() < 1e-10);
    // sum_j beta_ij <O^j> = <R_i> on random states.
    for (int t = 0; t < 5; ++t) {
      const CVector psi = haar_state(std::size_t{1} << s, rng);
      const CMatrix rho = psi * psi.adjoint();
      const Eigen::VectorXd r = hermitian_pauli_coefficients(rho);
      const Eigen::VectorXd obs = C.transpose() * r;       // <O^j> = tr(rho O^j)
      const Eigen::VectorXd viaR = o.R.transpose() * r;     // <R_i>
      REQUIRE((o.beta * obs - viaR).norm() < 1e-10);
    }
    const auto plan = allocate(o.beta, 100);
    const Eigen::VectorXd load = plan.B * plan.n_tilde.cwiseInverse();
    REQUIRE(load.maxCoeff() <= 1.0 + 1e-12);
    REQUIRE(plan.n_tilde.minCoeff() >= 1.0);
    REQUIRE(plan.S >= 1.0);
    REQUIRE_THAT(plan.S, WithinAbs(plan.n_tilde.sum() / double(d), 1e-12));
  }
  REQUIRE_THROWS_AS(gram_orthogonalize(RMatrix::Zero(4, 4), 1), NumericError);
}

TEST_CASE("identity circuits give unit conditioning", "[selection][basis]") {
  for (std::size_t n : {8u}) {
    const MeraCircuit c = identity_mera(n, Geometry::binary);
    BasisBuilder bb(c, 0);
    for (std::size_t l = 1; l <= std::min<std::size_t>(c.depth(), 2); ++l)
      REQUIRE_THAT(mean_conditioning(bb, c, l), WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("level-one candidates match the dense ascent", "[selection][basis]") {
  const MeraCircuit c = random_mera(12, Geometry::binary, 2, 41);
  BasisBuilder bb(c, 0, confined());
  const std::vector<std::size_t> block{5, 0, 1, 2};
  const auto b = bb.get(1, block);
  REQUIRE(b->window == std::vector<std::size_t>{11, 0, 1, 2, 3, 4});
  REQUIRE(b->candidate_count == 4096);
  REQUIRE(b->labels.size() == 256);
  REQUIRE(b->log_abs_det >= b->log_abs_det_lrv - 1e-12);
  std::vector<std::size_t> all(6);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t j = 0; j < 256; j += 17) {
    const PauliString& p = b->labels[j];
    const CMatrix want = oracle::ascend_by_columns(c.layers[0], [&](const CVector& x) { return oracle::apply_pauli(p, x); });
    const CMatrix got = widen_operator(from_pauli_coefficients(CVector(b->ortho.C.col(j).cast<cplx>())), block, all);
    REQUIRE((want - got).norm() < 1e-10);
  }
}

TEST_CASE("isometry-input candidates contract the outer disentangler legs", "[selection][basis]") {
  const MeraCircuit c = random_mera(12, Geometry::binary, 2, 45);
  const Layer& layer = c.layers[0];
  BasisBuilder bb(c, 0);
  const std::vector<std::size_t> block{5, 0, 1, 2};
  const auto b = bb.get(1, block);
  REQUIRE(b->window == std::vector<std::size_t>{10, 11, 0, 1, 2, 3, 4, 5});
  REQUIRE(b->candidate_count == 65536);
  // Dense contraction on the 10-site cone {9, 10, 11, 0, ..., 6}: the block's
  // gates only, the two outer sites traced out, ancillas projected on |0>.
  const std::vector<std::size_t> cone{9, 10, 11, 0, 1, 2, 3, 4, 5, 6};
  auto local = [&](std::size_t s) { return static_cast<std::size_t>(std::find(cone.begin(), cone.end(), s) - cone.begin()); };
  CMatrix U = CMatrix::Identity(1024, 1024);
  for (std::size_t d : {4u, 5u, 0u, 1u, 2u}) {
    const Gate& g = layer.disentanglers[d];
    U = embed_operator(to_matrix(g.unitary), {local(g.sites[0]), local(g.sites[1])}, 10) * U;
  }
  for (std::size_t j : {5u, 0u, 1u, 2u}) {
    const Gate& g = layer.isometries[j];
    U = embed_operator(to_matrix(g.unitary), {local(g.sites[0]), local(g.sites[1])}, 10) * U;
  }
  for (std::size_t j = 0; j < 256; j += 23) {
    std::string lab(10, 'I');
    const PauliString& p = b->labels[j];
    for (std::size_t s : b->window) lab[local(s)] = p[s];
    const CMatrix m = U * pauli_dense(PauliString(lab)) * U.adjoint();
    // Keep the isometry outputs of the block, in block order.
    std::vector<std::size_t> keep;
    for (std::size_t s : block) keep.push_back(local(2 * s));
    CMatrix want = CMatrix::Zero(16, 16);
    for (int r = 0; r < 16; ++r)
      for (int q = 0; q < 16; ++q)
        for (int o = 0; o < 4; ++o) {
          // o enumerates the outer sites 9 and 6 (first and last of the cone).
          std::size_t ir = (o >> 1) << 9 | (o & 1), iq = ir;
          for (int t = 0; t < 4; ++t) {
            if ((r >> (3 - t)) & 1) ir |= std::size_t{1} << (9 - keep[t]);
            if ((q >> (3 - t)) & 1) iq |= std::size_t{1} << (9 - keep[t]);
          }
          want(r, q) += m(ir, iq) / 4.0;
        }
    const CMatrix got = from_pauli_coefficients(CVector(b->ortho.C.col(j).cast<cplx>()));
    REQUIRE((want - got).norm() < 1e-10);
  }
}

TEST_CASE("traced boundary map agrees with the exact map on product gates", "[selection][basis]") {
  Rng rng(46);
  std::vector<CMatrix> us, vs;
  for (int j = 0; j < 4; ++j) {
    const CMatrix a = haar_unitary(2, rng), b = haar_unitary(2, rng);
    CMatrix ab(4, 4);
    for (int r = 0; r < 2; ++r)
      for (int q = 0; q < 2; ++q) ab.block(2 * r, 2 * q, 2, 2) = a(r, q) * b;
    us.push_back(ab);
    vs.push_back(haar_unitary(4, rng));
  }
  const Layer layer = make_layer(Geometry::binary, 1, 8, us, vs);
  for (std::size_t s = 0; s < 8; ++s) {
    const auto exact = boundary_map(layer, s);
    REQUIRE(exact.has_value());
    REQUIRE((*exact - traced_boundary_map(layer, s)).norm() < 1e-12);
  }
}

TEST_CASE("basis route reproduces renormalized density matrices", "[selection][basis]") {
  for (std::size_t n : {8u, 12u}) {
    const MeraCircuit c = random_mera(n, Geometry::binary, 2, 42 + n);
    const CVector psi = to_vector(evaluate_state(c));
    BasisBuilder bb(c, 0, confined());
    for (std::size_t l = 1; l <= c.depth(); ++l) {
      const CVector phi = renormalized(c, psi, l);
      for (const auto& blk : level_blocks(c, l)) {
        const auto b = bb.get(l, blk);
        const CMatrix rho = bb.density(l, blk, exact_values(*b, psi));
        REQUIRE((rho - reduced_density_matrix(phi, blk)).norm() < 1e-10);
      }
    }
    // A rotated full-ring block reuses the canonical basis.
    if (n == 8) {
      const std::vector<std::size_t> rot{3, 0, 1, 2};
      const auto b = bb.get(1, rot);
      REQUIRE(b->block == std::vector<std::size_t>{0, 1, 2, 3});
      const CMatrix rho = bb.density(1, rot, exact_values(*b, psi));
      REQUIRE((rho - reduced_density_matrix(renormalized(c, psi, 1), rot)).norm() < 1e-10);
    }
  }
}

TEST_CASE("conditioning profile on random circuits", "[selection][basis]") {
  const MeraCircuit c = random_mera(8, Geometry::binary, 2, 43);
  const auto p = conditioning_profile(c);
  REQUIRE(p.S.size() == 2);
  for (double s : p.S) REQUIRE(s >= 1.0);
  REQUIRE(p.S12 >= 1.0);
  REQUIRE(p.composition_ratio() > 0);
}

TEST_CASE("single-site scaling", "[selection][basis]") {
  // An isometry routing the middle input to the kept output transfers every
  // Pauli unchanged.
  CMatrix swap01 = CMatrix::Zero(8, 8);
  for (int b = 0; b < 8; ++b) {
    const int hi = (b >> 2) & 1, mid = (b >> 1) & 1, lo = b & 1;
    swap01((mid << 2) | (hi << 1) | lo, b) = 1;
  }
  std::vector<CMatrix> us(2, CMatrix::Identity(4, 4)), vs(2, swap01);
  const Layer ident = make_layer(Geometry::ternary, 1, 6, us, vs);
  const auto s0 = single_site_scaling(ident);
  REQUIRE((s0.M - RMatrix::Identity(4, 4)).norm() < 1e-12);
  REQUIRE((s0.lambda.array() - 1).abs().maxCoeff() < 1e-12);

  const MeraCircuit c = random_mera(6, Geometry::ternary, 2, 44);
  const auto s = single_site_scaling(c.layers[0], 1);
  REQUIRE_THAT(s.M(0, 0), WithinAbs(1.0, 1e-12));
  REQUIRE(s.M.col(0).tail(3).norm() < 1e-12);
  // Dense oracle: M[i][j] = tr(P_i w (I (x) P_j (x) I) w^dagger) / 2.
  const CMatrix w = isometry_form(to_matrix(c.layers[0].isometries[1].unitary));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      std::string lab = "III";
      lab[1] = "IXYZ"[j];
      const CMatrix a = w * pauli_dense(PauliString(lab)) * w.adjoint();
      const double want = (pauli_dense(PauliString(std::string(1, "IXYZ"[i]))) * a).trace().real() / 2;
      REQUIRE_THAT(s.M(i, j), WithinAbs(want, 1e-12));
    }
  REQUIRE((s.M * s.Minv - RMatrix::Identity(4, 4)).norm() < 1e-10);
  REQUIRE_THROWS_AS(single_site_scaling(random_mera(8, Geometry::binary, 2, 1).layers[0]), ValidationError);
}

TEST_CASE("measurement budgets", "[selection][budget]") {
  REQUIRE(total_budget(8, BudgetMode::brute_force, 0) == 656100.0);
  REQUIRE(total_budget(16, BudgetMode::binary, 6) == 419200.0);
  REQUIRE(total_budget(16, BudgetMode::binary, 1) == 100.0 * (256 * 16 + 16));
  REQUIRE(total_budget(32, BudgetMode::binary, 1) == 100.0 * (256 * (32 + 16) + 16));
  REQUIRE(total_budget(16, BudgetMode::binary, 7) > total_budget(16, BudgetMode::binary, 6));
  REQUIRE(total_budget(32, BudgetMode::binary, 6) > total_budget(16, BudgetMode::binary, 6));
  REQUIRE(total_budget(16, BudgetMode::binary, 6, 200) == 2 * 419200.0);
  REQUIRE(total_budget(12, BudgetMode::ternary_naive, 6) > 10 * total_budget(16, BudgetMode::binary, 6));
  REQUIRE_THROWS_AS(total_budget(10, BudgetMode::binary, 6), ValidationError);
  REQUIRE_THROWS_AS(total_budget(4, BudgetMode::binary, 6), ValidationError);
}
