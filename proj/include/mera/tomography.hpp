#pragma once
// Layer-by-layer MERA tomography.
//
// For every isometry j of the layer being reconstructed, the density matrix
// of its block (the k inputs plus the outer legs of the two neighbouring
// disentanglers) is estimated. Disentanglers are then optimized by sweeping
// linearized SVD updates that maximize the weight each isometry keeps,
//
//   f_j = sum of the chi largest eigenvalues of
//         sigma_j = tr_{outer}[(uL (x) uR) rho_j (uL (x) uR)^dagger],
//
// after which each isometry maps the top-chi eigenvectors of sigma_j to the
// kept qubit with ancillas in |0>, discarding weight eps_j = 1 - f_j.
// Level-0 blocks come from Pauli settings on the physical state; higher
// levels from renormalized observable bases or, alternatively, from the
// renormalized state itself.

#include <nlohmann/json.hpp>

#include "mera/basis.hpp"
#include "mera/random.hpp"

namespace mera {

enum class MeasurementMode { exact, sampled };
enum class BlockRoute { basis, renormalized };

inline std::string to_string(MeasurementMode m) { return m == MeasurementMode::exact ? "exact" : "sampled"; }
inline std::string to_string(BlockRoute r) { return r == BlockRoute::basis ? "basis" : "renormalized"; }

struct TomographyConfig {
  std::size_t chi = 2;
  MeasurementMode mode = MeasurementMode::exact;
  std::uint64_t shots = 10000;   // per Pauli setting on level-0 blocks
  std::size_t M0 = 100;          // reference shots for renormalized observables
  std::uint64_t seed = 1;
  std::size_t max_sweeps = 2000;
  double sweep_tol = 1e-12;      // on the change of sum_j f_j over one sweep
  double gradient_tol = 1e-13;   // on the anti-Hermitian part of u Gamma
  bool random_init = false;      // Haar-random instead of identity disentanglers
  std::size_t restarts = 0;      // extra Haar-random starts per layer
  bool psd_repair = true;
  BlockRoute route = BlockRoute::basis;  // levels >= 1; ternary circuits always use the state
  BasisOptions basis;
};

struct BlockEstimate {
  std::size_t level = 0;
  std::vector<std::size_t> sites;
  CMatrix rho;
  MeasurementMode source = MeasurementMode::exact;
  std::uint64_t shots = 0;  // total shots spent, zero in exact mode
  bool repaired = false;    // negative eigenvalues were clipped
  double min_eigenvalue = 0;  // before repair
};

struct LayerReport {
  std::size_t level = 0;
  std::vector<double> eps;         // per isometry
  std::vector<double> objective;   // sum_j f_j after each sweep
  std::size_t sweeps = 0;
  bool converged = false;
  std::size_t starts = 1;
  double gradient = 0;
  std::size_t repaired_blocks = 0;

  double eps_sum() const { return std::accumulate(eps.begin(), eps.end(), 0.0); }
  // Mean over disentanglers of 2 - f(u) with f(u) = f_R + f_L.
  double deficit() const {
    if (objective.empty() || eps.empty()) return 0.0;
    return 2.0 - 2.0 * *std::max_element(objective.begin(), objective.end()) / static_cast<double>(eps.size());
  }
};

struct TruncationReport {
  std::vector<LayerReport> layers;
  double top_eps = 0;        // 1 - largest eigenvalue of the top density matrix
  std::size_t top_sites = 0;
  bool top_repaired = false;

  // eps^tau for tau = 1..m followed by the top truncation.
  std::vector<double> level_weights() const {
    std::vector<double> w;
    for (const auto& l : layers) w.push_back(l.eps_sum());
    w.push_back(top_eps);
    return w;
  }
};

inline nlohmann::json to_json(const TruncationReport& r) {
  nlohmann::json j;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : r.layers) {
    nlohmann::json e;
    e["level"] = l.level;
    e["eps"] = l.eps;
    e["eps_sum"] = l.eps_sum();
    e["objective"] = l.objective;
    e["sweeps"] = l.sweeps;
    e["converged"] = l.converged;
    e["starts"] = l.starts;
    e["gradient"] = l.gradient;
    e["deficit"] = l.deficit();
    e["repaired_blocks"] = l.repaired_blocks;
    j["layers"].push_back(e);
  }
  j["top"] = {{"sites", r.top_sites}, {"eps", r.top_eps}, {"repaired", r.top_repaired}};
  return j;
}

inline TruncationReport truncation_report_from_json(const nlohmann::json& j) {
  TruncationReport r;
  for (const auto& e : j.at("layers")) {
    LayerReport l;
    l.level = e.at("level").get<std::size_t>();
    l.eps = e.at("eps").get<std::vector<double>>();
    l.objective = e.value("objective", std::vector<double>{});
    l.sweeps = e.value("sweeps", std::size_t{0});
    l.converged = e.value("converged", true);
    l.starts = e.value("starts", std::size_t{1});
    l.gradient = e.value("gradient", 0.0);
    l.repaired_blocks = e.value("repaired_blocks", std::size_t{0});
    r.layers.push_back(l);
  }
  r.top_sites = j.at("top").at("sites").get<std::size_t>();
  r.top_eps = j.at("top").at("eps").get<double>();
  r.top_repaired = j.at("top").value("repaired", false);
  return r;
}

// ---------------------------------------------------------------------------
// Density-matrix estimation

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Clips negative eigenvalues and restores unit trace.
inline CMatrix repair_density(const CMatrix& rho, double* min_eig = nullptr) {
  const CMatrix h = (rho + rho.adjoint()) / 2.0;
  auto [vals, vecs] = hermitian_eig_matrix(h);
  if (min_eig) *min_eig = vals.minCoeff();
  const Eigen::VectorXd c = vals.cwiseMax(0.0);
  if (c.sum() <= 0) throw NumericError("repair_density: no positive weight left");
  return vecs * (c / c.sum()).asDiagonal() * vecs.adjoint();
}

// Measurement access to a physical pure state.
class StateAccess {
 public:
  StateAccess(CVector psi, MeasurementMode mode, std::uint64_t seed)
      : psi_(std::move(psi)), mode_(mode), seed_(seed) {
    if (std::abs(psi_.norm() - 1) > 1e-10) throw ValidationError("StateAccess: state is not normalized");
  }

  const CVector& state() const { return psi_; }
  MeasurementMode mode() const { return mode_; }
  std::size_t sites() const { return qubit_count(psi_.size()); }
  std::uint64_t shots_used() const { return shots_used_; }

  // <P> exactly, or as the mean of `shots` single-shot parities.
  double pauli(const PauliString& p, std::uint64_t shots) {
    const double e = expectation(psi_, p);
    if (mode_ == MeasurementMode::exact || p.is_identity()) return e;
    std::mt19937_64 rng(next_seed());
    std::binomial_distribution<std::uint64_t> bin(shots, std::clamp((1 + e) / 2, 0.0, 1.0));
    shots_used_ += shots;
    return 2.0 * static_cast<double>(bin(rng)) / static_cast<double>(shots) - 1;
  }

  std::uint64_t next_seed() { return detail::splitmix(seed_ ^ detail::splitmix(++counter_)); }
  void add_shots(std::uint64_t s) { shots_used_ += s; }

 private:
  CVector psi_;
  MeasurementMode mode_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::uint64_t shots_used_ = 0;
};

// Brute-force block tomography on a pure state: every Pauli expectation of
// the block is taken from the 3^b settings, pooling all settings that agree
// with a string on its support. Exact mode returns the reduced density
// matrix directly, which is what the settings determine.
inline BlockEstimate settings_block(const CVector& psi, const std::vector<std::size_t>& sites, MeasurementMode mode,
                                    std::uint64_t shots, std::uint64_t seed, bool repair = true) {
  BlockEstimate est;
  est.sites = sites;
  est.source = mode;
  const CMatrix exact = reduced_density_matrix(psi, sites);
  if (mode == MeasurementMode::exact) {
    est.rho = exact;
    return est;
  }
  if (shots == 0) throw ValidationError("sampled tomography needs a positive shot count");
  const std::size_t b = sites.size();
  const std::size_t np = std::size_t{1} << (2 * b);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
  Eigen::VectorXd cnt = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
  const auto settings = full_settings(b);
  for (std::size_t si = 0; si < settings.size(); ++si) {
    const auto rec = sample_from_distribution(settings[si], setting_distribution(exact, settings[si]), shots,
                                              detail::splitmix(seed + si));
    est.shots += shots;
    for (std::size_t mask = 0; mask < (std::size_t{1} << b); ++mask) {
      std::size_t idx = 0;
      for (std::size_t i = 0; i < b; ++i) {
        const bool on = (mask >> (b - 1 - i)) & 1;
        const std::size_t code = on ? static_cast<std::size_t>(settings[si].code(i)) : 0;
        idx = idx * 4 + code;
      }
      sum(static_cast<Eigen::Index>(idx)) += rec.signed_sum(mask);
      cnt(static_cast<Eigen::Index>(idx)) += static_cast<double>(shots);
    }
  }
  Eigen::VectorXd c = sum.cwiseQuotient(cnt) / std::sqrt(std::ldexp(1.0, static_cast<int>(b)));
  c(0) = std::sqrt(std::ldexp(1.0, -static_cast<int>(b)));
  est.rho = from_pauli_coefficients(CVector(c.cast<cplx>()));
  if (repair) {
    double me = 0;
    const CMatrix fixed = repair_density(est.rho, &me);
    est.min_eigenvalue = me;
    if (me < -1e-12) {
      est.rho = fixed;
      est.repaired = true;
    }
  }
  return est;
}

// ---------------------------------------------------------------------------
// Disentangler optimization and isometry extraction

namespace detail {

// Block of isometry j in local positions: 0 = left outer leg, 1..k = inputs,
// k+1 = right outer leg.
struct BlockGeometry {
  std::size_t k;
  std::size_t nb() const { return k + 2; }
  std::vector<std::size_t> left() const { return {0, 1}; }
  std::vector<std::size_t> right() const { return {k, k + 1}; }
  std::vector<std::size_t> inputs() const {
    std::vector<std::size_t> v(k);
    std::iota(v.begin(), v.end(), 1);
    return v;
  }
  std::vector<std::size_t> complement(const std::vector<std::size_t>& s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nb(); ++i)
      if (std::find(s.begin(), s.end(), i) == s.end()) out.push_back(i);
    return out;
  }
};

inline CMatrix conjugate(const CMatrix& rho, const CMatrix& u, const std::vector<std::size_t>& pos, std::size_t nb) {
  const CMatrix U = embed_operator(u, pos, nb);
  return U * rho * U.adjoint();
}

// Projector on the top-chi eigenvectors of sigma and the kept weight.
inline std::pair<CMatrix, double> top_projector(const CMatrix& sigma, std::size_t chi) {
  auto [vals, vecs] = hermitian_eig_matrix(CMatrix((sigma + sigma.adjoint()) / 2.0));
  const auto c = static_cast<Eigen::Index>(chi);
  const CMatrix V = vecs.leftCols(c);
  return {V * V.adjoint(), vals.head(c).sum()};
}

}  // namespace detail

struct DisentanglerState {
  std::vector<CMatrix> u;  // current disentanglers of the layer
};

// sigma_j for the current disentanglers.
inline CMatrix isometry_input_state(const CMatrix& rho_block, const CMatrix& uL, const CMatrix& uR, std::size_t k) {
  const detail::BlockGeometry bg{k};
  CMatrix r = detail::conjugate(rho_block, uL, bg.left(), bg.nb());
  r = detail::conjugate(r, uR, bg.right(), bg.nb());
  return reduced_density_matrix(r, bg.inputs());
}

// Environments of the right disentangler of one block and the left
// disentangler of the next, so that f = tr(u Gamma) at the current u.
inline CMatrix right_environment(const CMatrix& rho_block, const CMatrix& uL, const CMatrix& uR, std::size_t k,
                                 std::size_t chi) {
  const detail::BlockGeometry bg{k};
  const CMatrix rp = detail::conjugate(rho_block, uL, bg.left(), bg.nb());
  const CMatrix sigma = reduced_density_matrix(detail::conjugate(rp, uR, bg.right(), bg.nb()), bg.inputs());
  const CMatrix Q = detail::top_projector(sigma, chi).first;
  const CMatrix X = embed_operator(Q, bg.inputs(), bg.nb());
  const CMatrix Ud = embed_operator(CMatrix(uR.adjoint()), bg.right(), bg.nb());
  return reduced_density_matrix(CMatrix(rp * Ud * X), bg.right());
}

inline CMatrix left_environment(const CMatrix& rho_block, const CMatrix& uL, const CMatrix& uR, std::size_t k,
                                std::size_t chi) {
  const detail::BlockGeometry bg{k};
  const CMatrix rp = detail::conjugate(rho_block, uR, bg.right(), bg.nb());
  const CMatrix sigma = reduced_density_matrix(detail::conjugate(rp, uL, bg.left(), bg.nb()), bg.inputs());
  const CMatrix Q = detail::top_projector(sigma, chi).first;
  const CMatrix X = embed_operator(Q, bg.inputs(), bg.nb());
  const CMatrix Ud = embed_operator(CMatrix(uL.adjoint()), bg.left(), bg.nb());
  return reduced_density_matrix(CMatrix(rp * Ud * X), bg.left());
}

// Maximizer of Re tr(u Gamma) over unitaries: Gamma = N S M^dagger, u = M N^dagger.
inline CMatrix linearized_update(const CMatrix& gamma) {
  Eigen::JacobiSVD<CMatrix> svd(gamma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixV() * svd.matrixU().adjoint();
}

struct DisentanglerResult {
  CMatrix u;
  double f = 0;  // f_R + f_L after the update
};

// One linearized update of the disentangler shared by the right side of
// `rho_left` and the left side of `rho_right`.
inline DisentanglerResult optimize_disentangler(const CMatrix& u0, const CMatrix& rho_left, const CMatrix& uL_of_left,
                                                const CMatrix& rho_right, const CMatrix& uR_of_right, std::size_t k,
                                                std::size_t chi) {
  if (!is_unitary(u0)) throw ValidationError("optimize_disentangler: u0 is not unitary");
  const CMatrix gamma = right_environment(rho_left, uL_of_left, u0, k, chi) +
                        left_environment(rho_right, u0, uR_of_right, k, chi);
  DisentanglerResult r;
  r.u = linearized_update(gamma);
  r.f = detail::top_projector(isometry_input_state(rho_left, uL_of_left, r.u, k), chi).second +
        detail::top_projector(isometry_input_state(rho_right, r.u, uR_of_right, k), chi).second;
  return r;
}

struct IsometryResult {
  CMatrix v;
  double eps = 0;
};

// v maps the top-chi eigenvectors of sigma to |kept> (x) |0...0> and the
// remaining ones to the other basis states in increasing order.
inline IsometryResult extract_isometry(const CMatrix& sigma, std::size_t chi) {
  if (chi != 2) throw ValidationError("extract_isometry: only chi = 2 is supported");
  const std::size_t dim = static_cast<std::size_t>(sigma.rows());
  const std::size_t k = qubit_count(dim);
  auto [vals, vecs] = hermitian_eig_matrix(CMatrix((sigma + sigma.adjoint()) / 2.0));
  std::vector<std::size_t> targets;
  for (std::size_t c = 0; c < chi; ++c) targets.push_back(c << (k - 1));
  for (std::size_t t = 0; t < dim; ++t)
    if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
  IsometryResult r;
  r.v = CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) r.v.row(static_cast<Eigen::Index>(targets[i])) = vecs.col(i).adjoint();
  double disc = 0;
  for (std::size_t i = chi; i < dim; ++i) disc += vals(static_cast<Eigen::Index>(i));
  r.eps = std::clamp(disc / std::max(vals.sum(), 1e-300), 0.0, 1.0);
  return r;
}

namespace detail {

struct SweepOutcome {
  std::vector<CMatrix> u;
  std::vector<double> objective;
  std::size_t sweeps = 0;
  bool converged = false;
  double best = 0;
  double gradient = 0;  // largest |u Gamma - (u Gamma)^dagger| seen in the last sweep
};

inline SweepOutcome sweep_disentanglers(std::size_t k, const std::vector<CMatrix>& rhos, std::vector<CMatrix> us,
                                        const TomographyConfig& cfg) {
  const std::size_t nj = rhos.size();
  auto left_of = [&](std::size_t j) { return (j + nj - 1) % nj; };
  auto layer_objective = [&](const std::vector<CMatrix>& u) {
    double f = 0;
    for (std::size_t j = 0; j < nj; ++j) {
      const double fj = top_projector(isometry_input_state(rhos[j], u[left_of(j)], u[j], k), cfg.chi).second;
      if (fj > 1 + 1e-8) throw NumericError("reconstruct_layer: kept weight exceeds one");
      f += fj;
    }
    return f;
  };
  SweepOutcome out;
  double prev = layer_objective(us);
  out.best = prev;
  out.u = us;
  for (std::size_t sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    double grad = 0;
    for (std::size_t i = 0; i < nj; ++i) {
      const std::size_t right_block = (i + 1) % nj;
      const CMatrix gamma = right_environment(rhos[i], us[left_of(i)], us[i], k, cfg.chi) +
                            left_environment(rhos[right_block], us[i], us[right_block], k, cfg.chi);
      const CMatrix ug = us[i] * gamma;
      grad = std::max(grad, (ug - ug.adjoint()).norm());
      us[i] = linearized_update(gamma);
    }
    const double f = layer_objective(us);
    out.objective.push_back(f);
    out.sweeps = sweep + 1;
    out.gradient = grad;
    if (f > out.best) {
      out.best = f;
      out.u = us;
    }
    if (std::abs(f - prev) < cfg.sweep_tol && grad < cfg.gradient_tol) {
      out.converged = true;
      break;
    }
    prev = f;
  }
  return out;
}

}  // namespace detail

// Sweeps the layer's disentanglers to convergence from the configured start
// (plus `restarts` Haar-random ones, keeping the largest kept weight), then
// extracts isometries.
inline std::pair<Layer, LayerReport> reconstruct_layer(Geometry g, std::size_t level, std::size_t L,
                                                       const std::vector<CMatrix>& rhos, const TomographyConfig& cfg,
                                                       Rng* init_rng = nullptr) {
  const std::size_t k = arity(g), nj = L / k;
  if (rhos.size() != nj) throw ValidationError("reconstruct_layer: need one block estimate per isometry");
  if ((cfg.random_init || cfg.restarts) && !init_rng)
    throw ValidationError("reconstruct_layer: random starts need a generator");
  auto start = [&](bool random) {
    std::vector<CMatrix> us;
    for (std::size_t i = 0; i < nj; ++i)
      us.push_back(random ? haar_unitary(4, *init_rng) : CMatrix(CMatrix::Identity(4, 4)));
    return us;
  };
  detail::SweepOutcome best = detail::sweep_disentanglers(k, rhos, start(cfg.random_init), cfg);
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    auto trial = detail::sweep_disentanglers(k, rhos, start(true), cfg);
    if (trial.best > best.best + 1e-12) best = std::move(trial);
  }

  LayerReport rep;
  rep.level = level;
  rep.objective = best.objective;
  rep.sweeps = best.sweeps;
  rep.converged = best.converged;
  rep.gradient = best.gradient;
  rep.starts = 1 + cfg.restarts;
  std::vector<CMatrix> vs;
  for (std::size_t j = 0; j < nj; ++j) {
    const auto iso = extract_isometry(isometry_input_state(rhos[j], best.u[(j + nj - 1) % nj], best.u[j], k), cfg.chi);
    vs.push_back(iso.v);
    rep.eps.push_back(iso.eps);
  }
  return {make_layer(g, level, L, best.u, vs), rep};
}

// ---------------------------------------------------------------------------
// Full reconstruction

struct TomographyResult {
  MeraCircuit circuit;
  TruncationReport report;
  std::uint64_t shots = 0;
};

class Tomographer {
  static BasisOptions exact_window(BasisOptions o) {
    o.window = CandidateWindow::confined;
    return o;
  }

 public:
  Tomographer(const CVector& psi, Geometry g, TomographyConfig cfg)
      : access_(psi, cfg.mode, cfg.seed), g_(g), cfg_(cfg), bases_(0, exact_window(cfg.basis)) {
    if (cfg.chi != 2) throw ValidationError("tomograph: only chi = 2 is supported");
    const std::size_t n = access_.sites();
    const auto shape = decompose(n, g);
    circuit_ = MeraCircuit{g, n, cfg.chi, {}, shape.top_sites, std::nullopt};
    levels_.push_back(psi);
    layers_total_ = shape.layers;
  }

  BlockRoute route() const { return g_ == Geometry::ternary ? BlockRoute::renormalized : cfg_.route; }

  // Density matrix of `block` (level-`level` sites, in order) with the
  // layers reconstructed so far.
  BlockEstimate estimate_block(std::size_t level, const std::vector<std::size_t>& block) {
    if (level > circuit_.layers.size()) throw ValidationError("estimate_block: level not reconstructed yet");
    if (level == 0 || route() == BlockRoute::renormalized) {
      auto e = settings_block(levels_.at(level), block, cfg_.mode, cfg_.shots, access_.next_seed(), cfg_.psd_repair);
      access_.add_shots(e.shots);
      e.level = level;
      return e;
    }
    const auto b = bases_.get(level, block);
    const MeasurementPlan plan = allocate(b->ortho.beta, cfg_.M0);
    Eigen::VectorXd values(static_cast<Eigen::Index>(b->labels.size()));
    BlockEstimate est;
    est.level = level;
    est.sites = block;
    est.source = cfg_.mode;
    for (std::size_t j = 0; j < b->labels.size(); ++j) {
      values(static_cast<Eigen::Index>(j)) = access_.pauli(b->labels[j], plan.shots[j]);
      if (cfg_.mode == MeasurementMode::sampled && j > 0) est.shots += plan.shots[j];
    }
    est.rho = bases_.density(level, block, values);
    double me = 0;
    const CMatrix fixed = repair_density(est.rho, &me);
    est.min_eigenvalue = me;
    if (cfg_.psd_repair && me < -1e-12) {
      est.rho = fixed;
      est.repaired = true;
    }
    return est;
  }

  void reconstruct_next_layer() {
    const std::size_t tau = circuit_.layers.size();
    if (tau >= layers_total_) throw ValidationError("tomograph: all layers already reconstructed");
    const std::size_t L = lattice_at(circuit_, tau);
    const std::size_t k = arity(g_);
    std::vector<CMatrix> rhos;
    std::size_t repaired = 0;
    for (std::size_t j = 0; j < L / k; ++j) {
      auto e = estimate_block(tau, isometry_block(g_, L, j));
      repaired += e.repaired ? 1 : 0;
      rhos.push_back(std::move(e.rho));
    }
    Rng init(detail::splitmix(cfg_.seed + 7919 * (tau + 1)));
    auto [layer, rep] = reconstruct_layer(g_, tau + 1, L, rhos, cfg_, &init);
    rep.repaired_blocks = repaired;
    append(layer, std::move(rep));
  }

  // Uses a known layer for the next level instead of reconstructing it,
  // e.g. to resume from a stored partial circuit. Truncation weights are
  // measured against the current block estimates.
  void adopt_layer(const Layer& layer) {
    const std::size_t tau = circuit_.layers.size();
    if (tau >= layers_total_) throw ValidationError("tomograph: all layers already reconstructed");
    const std::size_t L = lattice_at(circuit_, tau);
    if (layer.geometry != g_ || layer.level != tau + 1 || layer.lattice != L)
      throw ValidationError("adopt_layer: layer does not fit level " + std::to_string(tau + 1));
    const std::size_t k = arity(g_), nj = L / k;
    LayerReport rep;
    rep.level = tau + 1;
    rep.converged = true;
    rep.starts = 0;
    for (std::size_t j = 0; j < nj; ++j) {
      const auto e = estimate_block(tau, isometry_block(g_, L, j));
      rep.repaired_blocks += e.repaired ? 1 : 0;
      const CMatrix sigma =
          isometry_input_state(e.rho, to_matrix(layer.disentanglers[(j + nj - 1) % nj].unitary),
                                       to_matrix(layer.disentanglers[j].unitary), k);
      const CMatrix w = isometry_form(to_matrix(layer.isometries[j].unitary));
      rep.eps.push_back(std::clamp(1.0 - (w * sigma * w.adjoint()).trace().real(), 0.0, 1.0));
    }
    append(layer, std::move(rep));
  }

  TomographyResult finish() {
    while (circuit_.layers.size() < layers_total_) reconstruct_next_layer();
    std::vector<std::size_t> top(circuit_.top_sites);
    std::iota(top.begin(), top.end(), 0);
    const BlockEstimate e = estimate_block(layers_total_, top);
    auto [vals, vecs] = hermitian_eig_matrix(CMatrix((e.rho + e.rho.adjoint()) / 2.0));
    circuit_.top = from_vector(CVector(vecs.col(0)));
    report_.top_sites = circuit_.top_sites;
    report_.top_eps = std::clamp(1 - vals(0) / vals.sum(), 0.0, 1.0);
    report_.top_repaired = e.repaired;
    return {circuit_, report_, access_.shots_used()};
  }

  const MeraCircuit& circuit() const { return circuit_; }
  BasisBuilder& bases() { return bases_; }
  StateAccess& access() { return access_; }

 private:
  void append(const Layer& layer, LayerReport rep) {
    circuit_.layers.push_back(layer);
    report_.layers.push_back(rep);
    bases_.add_layer(circuit_.layers.back());
    if (route() == BlockRoute::renormalized) {
      CVector next = apply_layer(levels_.back(), circuit_.layers.back());
      const double nrm = next.norm();
      if (!(nrm > 0)) throw NumericError("tomograph: renormalized state vanished");
      levels_.push_back(next / nrm);
    } else {
      levels_.push_back(CVector());
    }
  }

  StateAccess access_;
  Geometry g_;
  TomographyConfig cfg_;
  BasisBuilder bases_;
  MeraCircuit circuit_;
  TruncationReport report_;
  std::vector<CVector> levels_;  // renormalized states, when that route is used
  std::size_t layers_total_ = 0;
};

inline TomographyResult tomograph(const CVector& psi, Geometry g, const TomographyConfig& cfg = {}) {
  Tomographer t(psi, g, cfg);
  return t.finish();
}

}  // namespace mera
