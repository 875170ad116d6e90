#include "catch_amalgamated.hpp"

#include <cstring>

#include "mera/certificate.hpp"
#include "mera/state_prep.hpp"

using namespace mera;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

CMatrix random_density(std::size_t dim, std::size_t rank, Rng& rng) {
  const CMatrix g = ginibre(dim, rank, rng);
  const CMatrix rho = g * g.adjoint();
  return rho / rho.trace().real();
}

// Random rank-r orthogonal projector on C^d.
CMatrix random_projector(std::size_t d, std::size_t r, Rng& rng) {
  const CMatrix q = haar_unitary(d, rng).leftCols(static_cast<Eigen::Index>(r));
  return q * q.adjoint();
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Projector that fixes qubit `q` of an n-qubit register to |0>.
CMatrix ancilla_projector(std::size_t n, std::size_t q) {
  CMatrix p = CMatrix::Zero(std::size_t{1} << n, std::size_t{1} << n);
  for (std::size_t b = 0; b < (std::size_t{1} << n); ++b)
    if (!((b >> (n - 1 - q)) & 1)) p(b, b) = 1;
  return p;
}

TruncationReport report_from(const std::vector<std::vector<double>>& eps, double top = 0) {
  TruncationReport r;
  for (std::size_t t = 0; t < eps.size(); ++t) {
    LayerReport l;
    l.level = t + 1;
    l.eps = eps[t];
    r.layers.push_back(l);
  }
  r.top_eps = top;
  return r;
}

}  // namespace

TEST_CASE("dense fidelities and distances", "[certificate]") {
  Rng rng(3);
  const CVector a = haar_state(16, rng);
  CVector b = haar_state(16, rng);
  CHECK_THAT(fidelity(a, a), WithinAbs(1.0, 1e-14));
  CHECK_THAT(exact_fidelity(from_vector(a), from_vector(a)), WithinAbs(1.0, 1e-14));
  b -= a.dot(b) * a;
  CHECK_THAT(fidelity(a, b), WithinAbs(0.0, 1e-14));
  CHECK_THAT(trace_distance(a, b), WithinAbs(1.0, 1e-14));

  // Mixed-state formula on pure inputs agrees with the overlap.
  const CVector c = haar_state(16, rng);
  const CMatrix ra = a * a.adjoint(), rc = c * c.adjoint();
  CHECK_THAT(fidelity(ra, rc), WithinAbs(fidelity(a, c), 1e-12));
  CHECK_THAT(trace_distance(ra, rc), WithinAbs(trace_distance(a, c), 1e-12));

  // Commuting states: F = (sum_i sqrt(p_i q_i))^2.
  Eigen::VectorXd p(4), q(4);
  p << 0.4, 0.3, 0.2, 0.1;
  q << 0.1, 0.2, 0.3, 0.4;
  double s = 0;
  for (int i = 0; i < 4; ++i) s += std::sqrt(p(i) * q(i));
  const CMatrix P = p.cast<cplx>().asDiagonal(), Q = q.cast<cplx>().asDiagonal();
  CHECK_THAT(fidelity(P, Q), WithinAbs(s * s, 1e-14));
  CHECK_THAT(trace_distance(P, Q), WithinAbs(0.4, 1e-14));

  // Symmetry on generic mixed states.
  const CMatrix m1 = random_density(8, 3, rng), m2 = random_density(8, 5, rng);
  CHECK_THAT(fidelity(m1, m2), WithinAbs(fidelity(m2, m1), 1e-10));
  CHECK_THROWS_AS(fidelity(m1, CMatrix(CMatrix::Identity(4, 4))), ValidationError);
}

TEST_CASE("truncation fidelity identity on spectral cuts", "[certificate]") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 16, keep = 1 + static_cast<std::size_t>(trial % 12);
    const CMatrix rho = random_density(d, d, rng);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho);
    const CMatrix v = es.eigenvectors().rightCols(static_cast<Eigen::Index>(keep));
    const Truncation t = truncate(rho, v * v.adjoint());
    CHECK_THAT(root_fidelity(rho, t.rho), WithinAbs(std::sqrt(1 - t.eps), 1e-12));
  }
  // Pure states satisfy it for any projector.
  for (int trial = 0; trial < 20; ++trial) {
    const CVector psi = haar_state(16, rng);
    const Truncation t = truncate(psi * psi.adjoint(), random_projector(16, 6, rng));
    CHECK_THAT(root_fidelity(psi * psi.adjoint(), t.rho), WithinAbs(std::sqrt(1 - t.eps), 1e-12));
  }
}

TEST_CASE("layer_truncation_weight", "[certificate]") {
  const auto r = report_from({{0.5}, {0.1, 0.2}});
  CHECK(layer_truncation_weight(r, 1) == 0.5);
  CHECK_THAT(layer_truncation_weight(r, 2), WithinAbs(0.3, 1e-15));
  CHECK_THROWS_AS(layer_truncation_weight(r, 0), ValidationError);
  CHECK_THROWS_AS(layer_truncation_weight(r, 3), ValidationError);
}

TEST_CASE("summed local weights bound the global discarded weight", "[certificate]") {
  // Three isometries, each projecting its two-qubit input onto a random
  // rank-2 subspace. The global kept space is the tensor product.
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const CMatrix rho = random_density(64, 1 + static_cast<std::size_t>(trial % 4), rng);
    std::vector<CMatrix> P;
    for (int i = 0; i < 3; ++i) P.push_back(random_projector(4, 2, rng));
    double sum = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const CMatrix local = reduced_density_matrix(rho, {2 * i, 2 * i + 1});
      sum += 1 - (P[i] * local).trace().real();
    }
    const double eps_e = 1 - (kron(kron(P[0], P[1]), P[2]) * rho).trace().real();
    CHECK(sum >= eps_e - 1e-12);
  }
}

TEST_CASE("trace distance to a truncation", "[certificate]") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const CMatrix P = random_projector(16, 4 + static_cast<std::size_t>(trial % 8), rng);
    const CMatrix Q = CMatrix::Identity(16, 16) - P;
    // Incoherent mixture of kept and discarded parts.
    const CMatrix mixed = random_density(16, 16, rng);
    const CMatrix rho = P * mixed * P + Q * mixed * Q;
    const Truncation t = truncate(rho, P);
    CHECK(2 * trace_distance(rho, t.rho) <= 2 * t.eps + 1e-12);
    // A pure state keeps coherences between the two parts and sits at
    // distance sqrt(eps) from its truncation.
    const CVector psi = haar_state(16, rng);
    const Truncation tp = truncate(psi * psi.adjoint(), P);
    CHECK_THAT(trace_distance(psi * psi.adjoint(), tp.rho), WithinAbs(std::sqrt(tp.eps), 1e-12));
  }
}

TEST_CASE("layer-by-layer distances add up along a circuit", "[certificate]") {
  // Two layers on four qubits: a random unitary followed by fixing one
  // qubit to |0>. The reconstruction pulls the final truncated state back
  // through both unitaries.
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const CMatrix rho0 = random_density(16, 1 + static_cast<std::size_t>(trial % 3), rng);
    const CMatrix U1 = haar_unitary(16, rng), U2 = haar_unitary(16, rng);
    const CMatrix rho1 = U1 * rho0 * U1.adjoint();
    const Truncation t1 = truncate(rho1, ancilla_projector(4, 3));
    const CMatrix rho2 = U2 * t1.rho * U2.adjoint();
    const Truncation t2 = truncate(rho2, ancilla_projector(4, 1));
    const CMatrix tomo = U1.adjoint() * U2.adjoint() * t2.rho * U2 * U1;
    CHECK(trace_distance(rho0, tomo) <= trace_distance(rho1, t1.rho) + trace_distance(rho2, t2.rho) + 1e-12);
    CHECK(fidelity_angle(rho0, tomo) <= fidelity_angle(rho1, t1.rho) + fidelity_angle(rho2, t2.rho) + 1e-10);
  }
}

TEST_CASE("fidelity and trace bounds", "[certificate]") {
  CHECK(fidelity_bound(std::vector<double>{0, 0, 0}) == 0);
  CHECK(trace_distance_bound(std::vector<double>{0, 0}) == 0);
  CHECK_THAT(fidelity_bound(std::vector<double>{0.01}), WithinRel(0.005, 1e-14));
  CHECK_THAT(trace_distance_bound(std::vector<double>{0.01, 0.002}), WithinRel(0.012, 1e-14));
  // Incoherent sum plus pairwise cross terms.
  const std::vector<double> w{0.02, 0.003, 0.0004};
  double expanded = 0.5 * (w[0] + w[1] + w[2]);
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = i + 1; j < w.size(); ++j) expanded += std::sqrt(w[i] * w[j]);
  CHECK_THAT(fidelity_bound(w), WithinRel(expanded, 1e-14));
  CHECK_THROWS_AS(fidelity_bound(std::vector<double>{-0.1}), ValidationError);
  // The report form includes the top step.
  const auto r = report_from({{0.005, 0.005}, {0.002}}, 0.001);
  CHECK_THAT(trace_distance_bound(r), WithinRel(0.013, 1e-14));
}

TEST_CASE("trace-norm factor", "[certificate]") {
  SECTION("identity basis matches the dense Pauli sum") {
    for (std::size_t s : {1u, 2u}) {
      const Eigen::Index d = Eigen::Index{1} << (2 * s);
      OrthogonalBasis b;
      b.sites = s;
      b.beta = RMatrix::Identity(d, d);
      b.R = std::sqrt(std::ldexp(1.0, static_cast<int>(s))) * RMatrix::Identity(d, d);
      CMatrix sum = CMatrix::Zero(Eigen::Index{1} << s, Eigen::Index{1} << s);
      for (Eigen::Index i = 0; i < d; ++i) sum += pauli_dense(PauliString::from_index(static_cast<std::size_t>(i), s));
      Eigen::JacobiSVD<CMatrix> svd(sum);
      CHECK_THAT(trace_norm_factor(b), WithinAbs(svd.singularValues().sum(), 1e-12));
      // Each Pauli has trace norm 2^s.
      CHECK_THAT(trace_norm_factor(b, FactorForm::per_observable),
                 WithinAbs(static_cast<double>(d) * std::ldexp(1.0, static_cast<int>(s)), 1e-12));
    }
  }
  SECTION("circuit bases") {
    const MeraCircuit c = random_mera(8, Geometry::binary, 2, 2);
    BasisOptions opt;
    opt.window = CandidateWindow::confined;
    BasisBuilder bb(c, 0, opt);
    const auto summed = level_factors(bb, c);
    const auto per_j = level_factors(bb, c, FactorForm::per_observable);
    REQUIRE(summed.size() == 2);
    for (std::size_t l = 0; l < summed.size(); ++l) {
      CHECK(summed[l].level == l + 1);
      CHECK(summed[l].max > 0);
      CHECK(summed[l].mean <= summed[l].max + 1e-12);
      CHECK(per_j[l].max >= summed[l].max - 1e-9);
    }
    BasisBuilder from1(c, 1, opt);
    CHECK_THROWS_AS(level_factors(from1, c), ValidationError);
  }
}

TEST_CASE("reconstruction error bound", "[certificate]") {
  const auto r = report_from({{0.004, 0.006}, {0.002}});
  CHECK_THAT(reconstruction_error_bound(r, {2.0, 3.0}), WithinRel(0.5 * 0.01 * 2 + 0.5 * 0.012 * 3, 1e-14));
  CHECK(reconstruction_error_bound(report_from({{0, 0}, {0}}), {2.0, 3.0}) == 0);
  CHECK_THROWS_AS(reconstruction_error_bound(r, {2.0}), ValidationError);
}

TEST_CASE("certificate invariants", "[certificate]") {
  const auto zero = certificate(report_from({{0, 0}, {0}}), std::vector<double>{1.5, 2.5});
  CHECK(zero.fidelity_bound == 0);
  CHECK(zero.trace_bound == 0);
  CHECK(*zero.reconstruction_bound == 0);
  CHECK(zero.combined_bound == 0);
  CHECK(zero.small_angle_ok);

  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 0.05);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> eps{{u(rng), u(rng), u(rng)}, {u(rng)}};
    const std::vector<double> f{1 + u(rng) * 40, 1 + u(rng) * 40};
    const auto base = certificate(report_from(eps, u(rng)), f);
    CHECK(base.fidelity_bound >= 0);
    CHECK(base.combined_bound >= base.trace_bound);
    // Raise one entry: nothing may decrease.
    auto bumped = eps;
    bumped[trial % 2][0] += 0.01;
    const auto up = certificate(report_from(bumped, base.weights.back()), f);
    CHECK(up.fidelity_bound >= base.fidelity_bound);
    CHECK(up.trace_bound >= base.trace_bound);
    CHECK(*up.reconstruction_bound >= *base.reconstruction_bound);
    CHECK(up.combined_bound >= base.combined_bound);
  }
  const auto wide = certificate(report_from({{0.3}}), std::nullopt);
  CHECK_FALSE(wide.small_angle_ok);
  CHECK_FALSE(wide.reconstruction_bound);
  CHECK(wide.combined_bound == wide.trace_bound);
}

TEST_CASE("certificate of an exact MERA reconstruction", "[certificate]") {
  const CTensor psi = evaluate_state(random_mera(8, Geometry::binary, 2, 13));
  BasisOptions opt;
  opt.window = CandidateWindow::confined;
  SECTION("renormalized route") {
    TomographyConfig cfg;
    cfg.route = BlockRoute::renormalized;
    const auto r = tomograph(to_vector(psi), Geometry::binary, cfg);
    for (std::size_t t = 1; t <= r.report.layers.size(); ++t) CHECK(layer_truncation_weight(r.report, t) < 1e-10);
    BasisBuilder bb(r.circuit, 0, opt);
    Certificate c = certificate(r.report, bb, r.circuit);
    verify(c, psi, evaluate_state(r.circuit));
    CHECK(c.fidelity_bound < 1e-10);
    CHECK(c.trace_bound < 1e-10);
    CHECK(c.combined_bound < 1e-9);
    REQUIRE(c.truth);
    CHECK_THAT(c.truth->fidelity, WithinAbs(1.0, 1e-10));
    CHECK(exact_fidelity(psi, r.circuit) == c.truth->fidelity);
  }
  SECTION("basis route") {
    // Level-one leakage of amplitude ~1e-8 enters the renormalized
    // expectation values at first order, so upper-level weights sit near
    // that floor while the reconstructed state stays exact.
    const auto r = tomograph(to_vector(psi), Geometry::binary);
    CHECK(layer_truncation_weight(r.report, 1) < 1e-12);
    BasisBuilder bb(r.circuit, 0, opt);
    Certificate c = certificate(r.report, bb, r.circuit);
    verify(c, psi, evaluate_state(r.circuit));
    CHECK(c.trace_bound < 1e-7);
    CHECK(c.combined_bound < 1e-6);
    CHECK_THAT(c.truth->fidelity, WithinAbs(1.0, 1e-10));
  }
}

TEST_CASE("certificate of a perturbed MERA reconstruction", "[certificate]") {
  const CTensor base = evaluate_state(random_mera(12, Geometry::binary, 2, 1));
  const CTensor psi = perturbed_state(base, 0.1, 51);
  TomographyConfig cfg;
  cfg.route = BlockRoute::renormalized;
  const auto r = tomograph(to_vector(psi), Geometry::binary, cfg);
  Certificate c = certificate(r.report, std::nullopt);
  verify(c, psi, evaluate_state(r.circuit));
  REQUIRE(c.truth);
  CHECK(c.truth->infidelity > 0.005);
  CHECK(c.truth->infidelity < 0.02);
  CHECK(c.truth->fidelity_bound_holds);
  // For pure states the distance to a truncation grows like sqrt(eps), so
  // the linear trace form sits below the measured distance.
  CHECK(c.truth->trace_distance > c.trace_bound);

  const auto j = to_json(c);
  CHECK(j["weights"].size() == r.report.layers.size() + 1);
  CHECK(j["reconstruction_bound"].is_null());
  CHECK(j["true_state"]["fidelity_bound_holds"] == true);
  const std::string row = certificate_csv_row("0.1", c);
  CHECK(std::count(row.begin(), row.end(), ',') ==
        std::count(certificate_csv_header(), certificate_csv_header() + std::strlen(certificate_csv_header()), ','));
}
