#include "catch_amalgamated.hpp"

#include "mera/pauli.hpp"
#include "mera/random.hpp"

using namespace mera;
using Catch::Matchers::WithinAbs;

namespace {

PauliString random_string(std::size_t n, Rng& rng) {
  std::uniform_int_distribution<int> d(0, 3);
  std::string s(n, 'I');
  for (auto& c : s) c = "IXYZ"[d(rng)];
  return PauliString(s);
}

CVector basis_state(std::size_t n, std::size_t b) {
  CVector v = CVector::Zero(std::size_t{1} << n);
  v(b) = 1;
  return v;
}

}  // namespace

TEST_CASE("pauli strings parse and index", "[pauli]") {
  const PauliString p("IXYZ");
  REQUIRE(p.support() == std::vector<std::size_t>{1, 2, 3});
  REQUIRE(p.index() == 0 * 64 + 1 * 16 + 2 * 4 + 3);
  REQUIRE(PauliString::from_index(p.index(), 4) == p);
  REQUIRE(p.restrict({3, 1}).str() == "ZX");
  REQUIRE(PauliString("ZX").embed({3, 1}, 5).str() == "IXIZI");
  REQUIRE_THROWS_AS(PauliString("XA"), ValidationError);
}

TEST_CASE("pauli matrices", "[pauli]") {
  const CMatrix z = to_matrix(pauli_matrix(PauliString("Z")));
  CMatrix want(2, 2);
  want << 1, 0, 0, -1;
  REQUIRE(z == want);

  CVector bell = CVector::Zero(4);
  bell(0) = bell(3) = 1 / std::sqrt(2.0);
  REQUIRE_THAT(expectation(bell, PauliString("XX")), WithinAbs(1.0, 1e-15));

  Rng rng(11);
  for (int t = 0; t < 30; ++t) {
    const CMatrix m = pauli_dense(random_string(3, rng));
    REQUIRE((m * m - CMatrix::Identity(8, 8)).norm() < 1e-15);
    REQUIRE((m - m.adjoint()).norm() < 1e-15);
  }
  // Hilbert-Schmidt orthogonality on two sites.
  for (std::size_t a = 0; a < 16; ++a)
    for (std::size_t b = 0; b < 16; ++b) {
      const cplx tr = (pauli_dense(PauliString::from_index(a, 2)) *
                       pauli_dense(PauliString::from_index(b, 2)).adjoint()).trace();
      REQUIRE(std::abs(tr - cplx(a == b ? 4.0 : 0.0)) < 1e-15);
    }
}

TEST_CASE("pauli coefficient transform round trips", "[pauli]") {
  Rng rng(12);
  for (std::size_t w = 1; w <= 4; ++w) {
    const CMatrix m = ginibre(std::size_t{1} << w, std::size_t{1} << w, rng);
    const CVector c = pauli_coefficients(m);
    REQUIRE((from_pauli_coefficients(c) - m).norm() < 1e-12);
    REQUIRE_THAT(c.norm(), WithinAbs(m.norm(), 1e-12));
    // Direct oracle: c_p = tr(P m) / sqrt(2^w).
    for (std::size_t p = 0; p < std::size_t{1} << (2 * w); p += 7) {
      const cplx want = (pauli_dense(PauliString::from_index(p, w)) * m).trace() / std::sqrt(double(1 << w));
      REQUIRE(std::abs(c(p) - want) < 1e-12);
    }
  }
  REQUIRE_THROWS_AS(hermitian_pauli_coefficients(ginibre(4, 4, rng)), ValidationError);
}

TEST_CASE("expectation values", "[pauli]") {
  REQUIRE(expectation(basis_state(1, 0), PauliString("Z")) == 1.0);
  CVector plus(2);
  plus << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  REQUIRE_THAT(expectation(plus, PauliString("Z")), WithinAbs(0.0, 1e-15));

  Rng rng(13);
  for (int t = 0; t < 100; ++t) {
    const CVector psi = haar_state(32, rng);
    const PauliString p = random_string(5, rng);
    const double dense = (psi.adjoint() * pauli_dense(p) * psi)(0, 0).real();
    REQUIRE_THAT(expectation(psi, p), WithinAbs(dense, 1e-12));
    const CTensor rho = from_matrix(CMatrix(psi * psi.adjoint()));
    REQUIRE_THAT(expectation(rho, p), WithinAbs(dense, 1e-12));
    REQUIRE_THAT(expectation(from_vector(psi), pauli_matrix(p)), WithinAbs(dense, 1e-12));
  }
  REQUIRE_THROWS_AS(expectation(basis_state(2, 0), PauliString("Z")), ValidationError);
}

TEST_CASE("sampling a setting", "[pauli][sampling]") {
  const auto r0 = sample_setting(basis_state(1, 0), PauliString("Z"), 500, 1);
  REQUIRE(r0.counts[0] == 500);
  REQUIRE(r0.estimate(PauliString("Z")) == 1.0);

  CVector plus(2);
  plus << 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
  const auto r1 = sample_setting(plus, PauliString("Z"), 10000, 2);
  REQUIRE(std::abs(r1.estimate(PauliString("Z"))) <= 0.03);

  Rng rng(14);
  const CVector psi = haar_state(16, rng);
  const PauliString setting("XYZX");
  const auto a = sample_setting(psi, setting, 1000, 77);
  const auto b = sample_setting(psi, setting, 1000, 77);
  REQUIRE(a.counts == b.counts);
  std::uint64_t total = 0;
  for (auto c : a.counts) total += c;
  REQUIRE(total == 1000);
  const auto est = a.estimates();
  REQUIRE(est.size() == 16);
  REQUIRE(est.at("IIII") == 1.0);
  for (const auto& [k, v] : est) REQUIRE(std::abs(v) <= 1.0);
  REQUIRE_THROWS_AS(a.estimate(PauliString("ZIII")), ValidationError);
  REQUIRE_THROWS_AS(sample_setting(psi, setting, 0, 1), ValidationError);
  REQUIRE(full_settings(8).size() == 6561);
  REQUIRE(full_settings(2).front().str() == "XX");
  REQUIRE(full_settings(2).back().str() == "ZZ");
}

TEST_CASE("sampled estimates are statistically consistent", "[pauli][sampling]") {
  Rng rng(15);
  const CVector psi = haar_state(8, rng);
  const PauliString setting("XZY");
  const PauliString sub("XIY");
  const double exact = expectation(psi, sub);
  const std::uint64_t shots = 400;
  double mean = 0;
  const int runs = 200;
  for (int s = 0; s < runs; ++s) mean += sample_setting(psi, setting, shots, 1000 + s).estimate(sub);
  mean /= runs;
  const double se = std::sqrt((1 - exact * exact) / (double(shots) * runs));
  REQUIRE(std::abs(mean - exact) <= 5 * se);
}

TEST_CASE("marginal estimates match direct sampling in distribution", "[pauli][sampling]") {
  // Sign frequencies of "XII" marginalized from a full setting versus sampled
  // directly: two-sample chi-square with one degree of freedom.
  Rng rng(16);
  const CVector psi = haar_state(8, rng);
  const auto full = sample_setting(psi, PauliString("XZZ"), 20000, 5);
  const auto direct = sample_setting(psi, PauliString("XII"), 20000, 6);
  const double n1 = 20000, n2 = 20000;
  const double plus1 = (n1 + full.estimate(PauliString("XII")) * n1) / 2;
  const double plus2 = (n2 + direct.estimate(PauliString("XII")) * n2) / 2;
  const double pooled = (plus1 + plus2) / (n1 + n2);
  const double e1p = n1 * pooled, e1m = n1 * (1 - pooled), e2p = n2 * pooled, e2m = n2 * (1 - pooled);
  const double chi2 = (plus1 - e1p) * (plus1 - e1p) / e1p + (n1 - plus1 - e1m) * (n1 - plus1 - e1m) / e1m +
         (plus2 - e2p) * (plus2 - e2p) / e2p + (n2 - plus2 - e2m) * (n2 - plus2 - e2m) / e2m;
  // One degree of freedom: p > 1e-3 corresponds to chi2 < 10.83.
  REQUIRE(chi2 < 10.83);
}
