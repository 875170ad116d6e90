#pragma once
// Pauli strings, Pauli-basis coefficient transforms, expectation values and
// simulated tensor-product measurements.
//
// Single-site Pauli index: I=0, X=1, Y=2, Z=3. A w-site string has the
// base-4 index sum_s p_s 4^(w-1-s), site 0 most significant, matching the
// textual form where the leftmost character is site 0.
//
// Coefficient vectors are taken in the orthonormal basis P / sqrt(2^w), so the
// Euclidean norm of a coefficient vector equals the Hilbert-Schmidt norm of
// the operator.

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mera/qubits.hpp"
#include "mera/tensor.hpp"

namespace mera {

class PauliString {
 public:
  PauliString() = default;

  explicit PauliString(std::string_view text) : labels_(text) {
    for (char c : labels_)
      if (c != 'I' && c != 'X' && c != 'Y' && c != 'Z')
        throw ValidationError("invalid Pauli label '" + std::string(1, c) + "' in \"" +
                              std::string(text) + "\"");
  }

  static PauliString identity(std::size_t n) { return PauliString(std::string(n, 'I')); }

  // Inverse of index(): w sites, base-4 digits.
  static PauliString from_index(std::size_t index, std::size_t w) {
    static constexpr char names[4] = {'I', 'X', 'Y', 'Z'};
    std::string s(w, 'I');
    for (std::size_t i = w; i-- > 0;) {
      s[i] = names[index & 3];
      index >>= 2;
    }
    return PauliString(s);
  }

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& str() const noexcept { return labels_; }
  char operator[](std::size_t site) const { return labels_.at(site); }

  int code(std::size_t site) const {
    switch (labels_.at(site)) {
      case 'X': return 1;
      case 'Y': return 2;
      case 'Z': return 3;
      default: return 0;
    }
  }

  std::size_t index() const {
    std::size_t k = 0;
    for (std::size_t s = 0; s < size(); ++s) k = 4 * k + code(s);
    return k;
  }

  std::vector<std::size_t> support() const {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < size(); ++i)
      if (labels_[i] != 'I') s.push_back(i);
    return s;
  }

  std::size_t weight() const { return support().size(); }
  bool is_identity() const { return weight() == 0; }

  // Restriction to the listed sites, in that order.
  PauliString restrict(const std::vector<std::size_t>& sites) const {
    std::string s;
    for (std::size_t i : sites) s += labels_.at(i);
    return PauliString(s);
  }

  // n-site string equal to this string on `sites` and identity elsewhere.
  PauliString embed(const std::vector<std::size_t>& sites, std::size_t n) const {
    if (sites.size() != size()) throw ValidationError("embed: site count mismatch");
    std::string s(n, 'I');
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (sites[i] >= n) throw ValidationError("embed: site out of range");
      s[sites[i]] = labels_[i];
    }
    return PauliString(s);
  }

  friend bool operator==(const PauliString&, const PauliString&) = default;
  friend auto operator<=>(const PauliString&, const PauliString&) = default;

 private:
  std::string labels_;
};

inline const std::array<CMatrix, 4>& single_site_paulis() {
  static const std::array<CMatrix, 4> p = [] {
    std::array<CMatrix, 4> m;
    for (auto& x : m) x = CMatrix::Zero(2, 2);
    const cplx i{0, 1};
    m[0](0, 0) = 1; m[0](1, 1) = 1;
    m[1](0, 1) = 1; m[1](1, 0) = 1;
    m[2](0, 1) = -i; m[2](1, 0) = i;
    m[3](0, 0) = 1; m[3](1, 1) = -1;
    return m;
  }();
  return p;
}

inline CMatrix pauli_dense(const PauliString& p) {
  CMatrix m = CMatrix::Ones(1, 1);
  for (std::size_t s = 0; s < p.size(); ++s) {
    const CMatrix& f = single_site_paulis()[p.code(s)];
    CMatrix next(m.rows() * 2, m.cols() * 2);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) next.block(2 * r, 2 * c, 2, 2) = m(r, c) * f;
    m = std::move(next);
  }
  return m;
}

inline CTensor pauli_matrix(const PauliString& p) { return from_matrix(pauli_dense(p)); }

// ---------------------------------------------------------------------------
// Pauli-basis transforms

namespace detail {

// Per-site map from the (row, col) pair index r*2+c to Pauli index p:
// coefficient_p = tr(P_p M) / sqrt(2) restricted to one site.
inline const CMatrix& site_to_pauli() {
  static const CMatrix t = [] {
    CMatrix m(4, 4);
    for (int p = 0; p < 4; ++p)
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) m(p, 2 * r + c) = single_site_paulis()[p](c, r) / std::sqrt(2.0);
    return m;
  }();
  return t;
}

// out[..., a, ...] = sum_b m(a, b) t[..., b, ...] on leg `leg`.
template <class T, class M>
Tensor<T> apply_to_leg(const Tensor<T>& t, std::size_t leg, const M& m) {
  const Tensor<T> mt = from_matrix(RowMatrix<T>(m));
  Tensor<T> c = contract(mt, t, {{1, leg}});
  std::vector<std::size_t> perm(t.rank());
  for (std::size_t i = 0, k = 1; i < t.rank(); ++i) perm[i] = (i == leg) ? 0 : k++;
  return c.permute(perm);
}

}  // namespace detail

// Coefficients of a 2^w x 2^w matrix in the orthonormal Pauli basis.
inline CVector pauli_coefficients(const CMatrix& m) {
  const std::size_t w = qubit_count(m.rows());
  if (m.rows() != m.cols()) throw ValidationError("pauli_coefficients: matrix not square");
  if (w == 0) return CVector::Constant(1, m(0, 0));
  std::vector<std::size_t> shape(2 * w, 2), perm;
  for (std::size_t s = 0; s < w; ++s) { perm.push_back(s); perm.push_back(w + s); }
  CTensor t = from_matrix(m).reshape(shape).permute(perm).reshape(std::vector<std::size_t>(w, 4));
  for (std::size_t s = 0; s < w; ++s) t = detail::apply_to_leg(t, s, detail::site_to_pauli());
  return to_vector(t);
}

// Inverse of pauli_coefficients.
inline CMatrix from_pauli_coefficients(const CVector& c) {
  std::size_t w = 0;
  while ((std::size_t{1} << (2 * w)) < static_cast<std::size_t>(c.size())) ++w;
  if ((std::size_t{1} << (2 * w)) != static_cast<std::size_t>(c.size()))
    throw ValidationError("from_pauli_coefficients: length is not a power of four");
  if (w == 0) return CMatrix::Constant(1, 1, c(0));
  // site_to_pauli is unitary up to conjugation: its inverse is its adjoint.
  const CMatrix inv = detail::site_to_pauli().adjoint();
  CTensor t = from_vector(c).reshape(std::vector<std::size_t>(w, 4));
  for (std::size_t s = 0; s < w; ++s) t = detail::apply_to_leg(t, s, inv);
  std::vector<std::size_t> shape(2 * w, 2), perm(2 * w);
  for (std::size_t s = 0; s < w; ++s) { perm[s] = 2 * s; perm[w + s] = 2 * s + 1; }
  const std::size_t d = std::size_t{1} << w;
  return to_matrix(t.reshape(shape).permute(perm).reshape({d, d}));
}

// Real coefficients of a Hermitian matrix; throws if it is not Hermitian.
inline Eigen::VectorXd hermitian_pauli_coefficients(const CMatrix& m, double tol = 1e-10) {
  const CVector c = pauli_coefficients(m);
  const double scale = std::max(1.0, c.norm());
  if (c.imag().norm() > tol * scale)
    throw ValidationError("operator is not Hermitian (imaginary Pauli coefficients)");
  return c.real();
}

// ---------------------------------------------------------------------------
// Expectation values

namespace detail {

struct PauliMasks {
  std::size_t flip = 0;   // X or Y
  std::size_t phase = 0;  // Y or Z
  int ny = 0;
};

inline PauliMasks masks(const PauliString& p) {
  PauliMasks m;
  const std::size_t n = p.size();
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t bit = std::size_t{1} << (n - 1 - s);
    const char c = p[s];
    if (c == 'X' || c == 'Y') m.flip |= bit;
    if (c == 'Y' || c == 'Z') m.phase |= bit;
    if (c == 'Y') ++m.ny;
  }
  return m;
}

inline double checked_real(cplx z, double tol = 1e-10) {
  if (std::abs(z.imag()) > tol * std::max(1.0, std::abs(z.real())))
    throw ValidationError("expectation value has imaginary part " + std::to_string(z.imag()));
  return z.real();
}

}  // namespace detail

// <psi| P |psi> for a state vector over P.size() qubits.
inline double expectation(const CVector& psi, const PauliString& p) {
  const std::size_t n = p.size();
  if (static_cast<std::size_t>(psi.size()) != (std::size_t{1} << n))
    throw ValidationError("expectation: state dimension " + std::to_string(psi.size()) +
                          " does not match " + std::to_string(n) + "-site Pauli string");
  const auto m = detail::masks(p);
  static const cplx ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  cplx acc = 0;
  for (std::size_t b = 0; b < static_cast<std::size_t>(psi.size()); ++b) {
    const double sign = (std::popcount(b & m.phase) & 1) ? -1.0 : 1.0;
    acc += std::conj(psi(b ^ m.flip)) * psi(b) * sign;
  }
  return detail::checked_real(acc * ipow[m.ny & 3]);
}

// Tensor front ends: a rank-1 tensor is a pure state, a rank-2 tensor a
// density matrix.
inline double expectation(const CTensor& state, const PauliString& p) {
  if (state.rank() == 1) return expectation(CVector(to_vector(state)), p);
  const CMatrix rho = to_matrix(state);
  if (rho.rows() != (Eigen::Index{1} << p.size()))
    throw ValidationError("expectation: density matrix dimension does not match Pauli string");
  return detail::checked_real((rho * pauli_dense(p)).trace());
}

inline double expectation(const CTensor& state, const CTensor& obs) {
  const CMatrix o = to_matrix(obs);
  if (state.rank() == 1) {
    const CVector psi = to_vector(state);
    if (psi.size() != o.rows() || o.rows() != o.cols())
      throw ValidationError("expectation: observable dimension does not match state");
    return detail::checked_real(psi.dot(o * psi));
  }
  const CMatrix rho = to_matrix(state);
  if (rho.rows() != o.rows() || o.rows() != o.cols())
    throw ValidationError("expectation: observable dimension does not match state");
  return detail::checked_real((rho * o).trace());
}

// ---------------------------------------------------------------------------
// Simulated measurements

// Outcomes of one tensor-product setting measured `shots` times on the
// window given by the setting's support. counts[o] holds outcome o, where bit
// (k-1-i) of o is 1 when window site i returned eigenvalue -1.
struct MeasurementRecord {
  PauliString setting;
  std::vector<std::size_t> window;
  std::uint64_t shots = 0;
  std::vector<std::uint64_t> counts;

  // Estimate of a string whose support lies inside the window and which
  // agrees with the setting there.
  double estimate(const PauliString& sub) const {
    if (sub.size() != setting.size()) throw ValidationError("estimate: string length mismatch");
    std::size_t mask = 0;
    const std::size_t k = window.size();
    std::vector<bool> in_window(setting.size(), false);
    for (std::size_t i = 0; i < k; ++i) {
      in_window[window[i]] = true;
      if (sub[window[i]] == 'I') continue;
      if (sub[window[i]] != setting[window[i]])
        throw ValidationError("estimate: " + sub.str() + " is not a sub-string of " + setting.str());
      mask |= std::size_t{1} << (k - 1 - i);
    }
    for (std::size_t s = 0; s < sub.size(); ++s)
      if (!in_window[s] && sub[s] != 'I')
        throw ValidationError("estimate: " + sub.str() + " leaves the measured window");
    return signed_sum(mask) / static_cast<double>(shots);
  }

  // Every sub-string obtainable by marginalization, keyed by its text.
  std::map<std::string, double> estimates() const {
    std::map<std::string, double> out;
    const std::size_t k = window.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
      std::string s(setting.size(), 'I');
      for (std::size_t i = 0; i < k; ++i)
        if ((mask >> (k - 1 - i)) & 1) s[window[i]] = setting[window[i]];
      out[s] = signed_sum(mask) / static_cast<double>(shots);
    }
    return out;
  }

  // sum_o counts[o] * (-1)^{popcount(o & mask)}
  double signed_sum(std::size_t mask) const {
    std::int64_t acc = 0;
    for (std::size_t o = 0; o < counts.size(); ++o) {
      const auto c = static_cast<std::int64_t>(counts[o]);
      acc += (std::popcount(o & mask) & 1) ? -c : c;
    }
    return static_cast<double>(acc);
  }
};

namespace detail {

// Single-qubit rotation taking the eigenbasis of X, Y or Z to the
// computational basis, +1 eigenvector to |0>.
inline CMatrix measurement_rotation(char label) {
  const double r = 1 / std::sqrt(2.0);
  CMatrix h(2, 2);
  h << r, r, r, -r;
  if (label == 'X') return h;
  if (label == 'Y') {
    CMatrix sdg = CMatrix::Zero(2, 2);
    sdg(0, 0) = 1;
    sdg(1, 1) = cplx(0, -1);
    return h * sdg;
  }
  return CMatrix::Identity(2, 2);
}

}  // namespace detail

// Outcome distribution of a setting given the reduced density matrix on its
// window (window sites in support order).
inline std::vector<double> setting_distribution(const CMatrix& rho_window, const PauliString& setting) {
  const auto window = setting.support();
  CMatrix v = CMatrix::Ones(1, 1);
  for (std::size_t s : window) {
    const CMatrix f = detail::measurement_rotation(setting[s]);
    CMatrix next(v.rows() * 2, v.cols() * 2);
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c) next.block(2 * r, 2 * c, 2, 2) = v(r, c) * f;
    v = std::move(next);
  }
  const CMatrix rotated = v * rho_window * v.adjoint();
  std::vector<double> p(rotated.rows());
  for (Eigen::Index i = 0; i < rotated.rows(); ++i) p[i] = std::max(0.0, rotated(i, i).real());
  return p;
}

inline MeasurementRecord sample_from_distribution(const PauliString& setting, const std::vector<double>& p,
                                                  std::uint64_t shots, std::uint64_t seed) {
  if (shots == 0) throw ValidationError("sample_setting: shots must be positive");
  MeasurementRecord rec{setting, setting.support(), shots, std::vector<std::uint64_t>(p.size(), 0)};
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  for (std::uint64_t t = 0; t < shots; ++t) ++rec.counts[dist(rng)];
  return rec;
}

inline MeasurementRecord sample_setting(const CVector& psi, const PauliString& setting,
                                        std::uint64_t shots, std::uint64_t seed) {
  if (static_cast<std::size_t>(psi.size()) != (std::size_t{1} << setting.size()))
    throw ValidationError("sample_setting: state dimension does not match setting length");
  if (shots == 0) throw ValidationError("sample_setting: shots must be positive");
  const auto window = setting.support();
  const CMatrix rho = reduced_density_matrix(psi, window);
  return sample_from_distribution(setting, setting_distribution(rho, setting), shots, seed);
}

inline MeasurementRecord sample_setting(const CTensor& state, const PauliString& setting,
                                        std::uint64_t shots, std::uint64_t seed) {
  if (state.rank() != 1) throw ValidationError("sample_setting: expected a pure state vector");
  return sample_setting(CVector(to_vector(state)), setting, shots, seed);
}

// All 3^k settings with no identity on k sites, in base-3 order X<Y<Z.
inline std::vector<PauliString> full_settings(std::size_t k) {
  std::vector<PauliString> out;
  std::size_t total = 1;
  for (std::size_t i = 0; i < k; ++i) total *= 3;
  out.reserve(total);
  for (std::size_t t = 0; t < total; ++t) {
    std::string s(k, 'X');
    std::size_t x = t;
    for (std::size_t i = k; i-- > 0;) {
      s[i] = "XYZ"[x % 3];
      x /= 3;
    }
    out.emplace_back(s);
  }
  return out;
}

}  // namespace mera
