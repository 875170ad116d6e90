#pragma once
// Target states: ground states of periodic spin chains, random MERA states,
// and perturbed states.
//
// Models (periodic, site n identified with site 0):
//   ising-critical  H = - sum_i X_i X_{i+1} - sum_i Z_i
//   xx              H =   sum_i (X_i X_{i+1} + Y_i Y_{i+1})
// Both Hamiltonians are real in the computational basis, so the eigensolver
// works on real vectors.

#include <bit>
#include <cstdint>
#include <functional>
#include <string>

#include "mera/qubits.hpp"
#include "mera/random.hpp"
#include "mera/tensor.hpp"

namespace mera {

enum class ModelKind { ising_critical, xx };

inline std::string to_string(ModelKind m) { return m == ModelKind::ising_critical ? "ising-critical" : "xx"; }

inline ModelKind model_from_string(const std::string& s) {
  if (s == "ising-critical" || s == "ising") return ModelKind::ising_critical;
  if (s == "xx") return ModelKind::xx;
  throw ValidationError("unknown model \"" + s + "\" (expected ising-critical or xx)");
}

struct SpinModel {
  ModelKind kind = ModelKind::ising_critical;
  std::size_t n = 0;
};

struct GroundState {
  CTensor state;
  double energy = 0;
  double residual = 0;  // ||H psi - E psi||
  double gap = 0;       // to the next level inside the starting symmetry sector
  bool degenerate = false;
  std::size_t matvecs = 0;
};

// y = H x
inline void apply_hamiltonian(const SpinModel& m, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
  const std::size_t n = m.n, dim = std::size_t{1} << n;
  y.setZero(static_cast<Eigen::Index>(dim));
  std::vector<std::size_t> bonds;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    bonds.push_back((std::size_t{1} << (n - 1 - i)) | (std::size_t{1} << (n - 1 - j)));
  }
  if (m.kind == ModelKind::ising_critical) {
    for (std::size_t b = 0; b < dim; ++b) {
      double acc = -(static_cast<double>(n) - 2.0 * std::popcount(b)) * x(b);
      for (std::size_t mask : bonds) acc -= x(b ^ mask);
      y(b) = acc;
    }
  } else {
    for (std::size_t b = 0; b < dim; ++b) {
      double acc = 0;
      for (std::size_t mask : bonds) {
        const std::size_t bits = b & mask;
        if (bits != 0 && bits != mask) acc += 2.0 * x(b ^ mask);
      }
      y(b) = acc;
    }
  }
}

namespace detail {

struct LanczosResult {
  Eigen::VectorXd vec;
  double value = 0;
  double residual = 0;
  std::size_t matvecs = 0;
};

// Lowest eigenpair of a real symmetric operator by restarted Lanczos with
// full reorthogonalization. Every Krylov vector is kept orthogonal to the
// columns of `deflate`.
inline LanczosResult lanczos_lowest(const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& apply,
                                    Eigen::VectorXd start, const std::vector<Eigen::VectorXd>& deflate,
                                    double tol, std::size_t krylov = 40, std::size_t max_restarts = 200) {
  auto project = [&](Eigen::VectorXd& w) {
    for (const auto& d : deflate) w -= d.dot(w) * d;
  };
  project(start);
  if (start.norm() == 0) throw NumericError("lanczos: start vector vanishes after deflation");
  start.normalize();
  LanczosResult res;
  Eigen::VectorXd w(start.size());
  for (std::size_t restart = 0; restart < max_restarts; ++restart) {
    std::vector<Eigen::VectorXd> V{start};
    std::vector<double> alpha, beta;
    for (std::size_t j = 0; j < krylov; ++j) {
      apply(V[j], w);
      ++res.matvecs;
      project(w);
      alpha.push_back(V[j].dot(w));
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& v : V) w -= v.dot(w) * v;
      project(w);
      const double b = w.norm();
      if (b < 1e-13 || j + 1 == krylov) break;
      beta.push_back(b);
      V.push_back(w / b);
    }
    const std::size_t k = alpha.size();
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
      T(i, i) = alpha[i];
      if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const Eigen::VectorXd y = es.eigenvectors().col(0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(start.size());
    for (std::size_t i = 0; i < k; ++i) x += y(i) * V[i];
    x.normalize();
    apply(x, w);
    ++res.matvecs;
    const double theta = x.dot(w);
    res.vec = x;
    res.value = theta;
    res.residual = (w - theta * x).norm();
    if (res.residual <= tol) return res;
    start = x;
  }
  return res;
}

// Deterministic start vector inside the symmetry sector of the wanted
// ground state.
inline Eigen::VectorXd symmetric_start(const SpinModel& m) {
  const std::size_t n = m.n, dim = std::size_t{1} << n;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  if (m.kind == ModelKind::ising_critical) {
    // Uniform superposition over even-parity configurations.
    for (std::size_t b = 0; b < dim; ++b)
      if (std::popcount(b) % 2 == 0) v(b) = 1;
  } else {
    // Half filling with the Marshall sign on the odd sublattice.
    std::size_t odd = 0;
    for (std::size_t s = 1; s < n; s += 2) odd |= std::size_t{1} << (n - 1 - s);
    for (std::size_t b = 0; b < dim; ++b)
      if (static_cast<std::size_t>(std::popcount(b)) == n / 2)
        v(b) = (std::popcount(b & odd) % 2) ? -1.0 : 1.0;
  }
  return v.normalized();
}

}  // namespace detail

inline GroundState ground_state(const SpinModel& m, std::size_t cap = 20) {
  if (m.n < 2) throw ValidationError("ground_state: need at least 2 sites");
  if (m.n > cap)
    throw ValidationError("ground_state: n = " + std::to_string(m.n) + " exceeds the configured cap of " +
                          std::to_string(cap));
  auto H = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { apply_hamiltonian(m, x, y); };
  const Eigen::VectorXd start = detail::symmetric_start(m);
  const auto gs = detail::lanczos_lowest(H, start, {}, 1e-10);
  if (gs.residual > 1e-8)
    throw NumericError("ground_state: Lanczos did not converge (residual " + std::to_string(gs.residual) + ")");
  // First excited level in the same sector, by deflation. A start vector
  // orthogonal to the ground state is obtained from the sector start by
  // weighting each configuration with its index parity pattern.
  Eigen::VectorXd s2 = start;
  for (Eigen::Index b = 0; b < s2.size(); ++b) s2(b) *= 1.0 + 0.5 * std::cos(0.37 * static_cast<double>(b));
  const auto ex = detail::lanczos_lowest(H, s2, {gs.vec}, 1e-6);
  GroundState out;
  out.state = from_vector(Eigen::VectorXcd(gs.vec.cast<cplx>()));
  out.energy = gs.value;
  out.residual = gs.residual;
  out.gap = ex.value - gs.value;
  out.degenerate = out.gap < 1e-8;
  out.matvecs = gs.matvecs + ex.matvecs;
  return out;
}

// sqrt(1 - delta^2) base + delta psi_e with psi_e Haar random, renormalized.
inline CTensor perturbed_state(const CTensor& base, double delta, std::uint64_t seed) {
  if (!(delta > 0 && delta < 1)) throw ValidationError("perturbed_state: delta must lie in (0, 1)");
  if (base.rank() != 1) throw ValidationError("perturbed_state: base must be a state vector");
  const CVector b = to_vector(base);
  if (std::abs(b.norm() - 1) > 1e-10) throw ValidationError("perturbed_state: base is not normalized");
  Rng rng(seed);
  const CVector e = haar_state(static_cast<std::size_t>(b.size()), rng);
  CVector out = std::sqrt(1 - delta * delta) * b + delta * e;
  out.normalize();
  return from_vector(out);
}

inline CTensor haar_random_state(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return from_vector(haar_state(std::size_t{1} << n, rng));
}

}  // namespace mera
