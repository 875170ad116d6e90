#pragma once
// A posteriori error certificates for a reconstructed MERA state.
//
// Every layer tau discards weight eps^tau = sum_k eps_k^tau when its
// isometries project onto the kept subspace; the top step discards
// 1 - (largest eigenvalue) of the top density matrix. From these weights:
//
//   fidelity form   1 - F <= 1/2 [ sum_j sqrt(eps^j) ]^2
//   trace form      D     <= sum_j eps^j                      (intrinsic term)
//   reconstruction  sum_tau 1/2 sum_{l<=tau} eps^l || sum_ij beta_ij R_i ||_1
//
// and the combined bound is reconstruction + intrinsic. The trace norm uses
// the orthogonalized basis of the level; a level with several blocks takes
// the largest block factor.
//
// Fidelities are squared, F = (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, which
// reduces to |<a|b>|^2 on pure states. root_fidelity returns sqrt(F).

#include <sstream>

#include <nlohmann/json.hpp>

#include "mera/basis.hpp"
#include "mera/tomography.hpp"

namespace mera {

// ---------------------------------------------------------------------------
// Dense distances

namespace detail {

// A with rho = A A^dagger, dropping eigenvalues at round-off level.
inline CMatrix psd_factor(const CMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(CMatrix(0.5 * (rho + rho.adjoint())));
  const Eigen::VectorXd& w = es.eigenvalues();
  const double floor = static_cast<double>(rho.rows()) * 1e-15 * std::max(w.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w(i) > floor) keep.push_back(i);
  CMatrix a(rho.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    a.col(static_cast<Eigen::Index>(c)) = std::sqrt(w(keep[c])) * es.eigenvectors().col(keep[c]);
  return a;
}

}  // namespace detail

inline double trace_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(m);
  return svd.singularValues().sum();
}

// || sqrt(rho) sqrt(sigma) ||_1, evaluated as || A^dagger B ||_1 for
// factors rho = A A^dagger and sigma = B B^dagger.
inline double root_fidelity(const CMatrix& rho, const CMatrix& sigma) {
  if (rho.rows() != sigma.rows() || rho.rows() != rho.cols() || sigma.rows() != sigma.cols())
    throw ValidationError("fidelity: density matrices of different shapes");
  return trace_norm(CMatrix(detail::psd_factor(rho).adjoint() * detail::psd_factor(sigma)));
}

inline double fidelity(const CMatrix& rho, const CMatrix& sigma) {
  const double f = root_fidelity(rho, sigma);
  return f * f;
}

// 1 - |<a|b>|^2 for normalized inputs, from the residual of b after
// projecting out a, which avoids the cancellation in 1 - |<a|b>|^2.
inline double infidelity(const CVector& a, const CVector& b) {
  if (a.size() != b.size()) throw ValidationError("fidelity: state vectors of different dimension");
  const CVector an = a.normalized(), bn = b.normalized();
  return std::min(1.0, (bn - an * an.dot(bn)).squaredNorm());
}

inline double fidelity(const CVector& a, const CVector& b) { return 1.0 - infidelity(a, b); }

// Fidelity of two state tensors.
inline double exact_fidelity(const CTensor& a, const CTensor& b) {
  if (a.rank() != 1 || b.rank() != 1) throw ValidationError("exact_fidelity: expected state vectors");
  return fidelity(to_vector(a), to_vector(b));
}

// Fidelity of a state with the state a circuit prepares from its top.
inline double exact_fidelity(const CTensor& a, const MeraCircuit& c) { return exact_fidelity(a, evaluate_state(c)); }

inline double trace_distance(const CMatrix& rho, const CMatrix& sigma) {
  if (rho.rows() != sigma.rows() || rho.cols() != sigma.cols())
    throw ValidationError("trace_distance: density matrices of different shapes");
  const CMatrix d = rho - sigma;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(CMatrix(0.5 * (d + d.adjoint())));
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

// Pure states: D = sqrt(1 - F).
inline double trace_distance(const CVector& a, const CVector& b) { return std::sqrt(infidelity(a, b)); }

// Bures angle, arccos of the root fidelity.
inline double fidelity_angle(const CMatrix& rho, const CMatrix& sigma) {
  return std::acos(std::clamp(root_fidelity(rho, sigma), 0.0, 1.0));
}

struct Truncation {
  CMatrix rho;        // P rho P / tr(P rho P)
  double eps = 0;     // 1 - tr(P rho)
};

inline Truncation truncate(const CMatrix& rho, const CMatrix& projector) {
  if (projector.rows() != rho.rows() || projector.cols() != rho.cols())
    throw ValidationError("truncate: projector and state differ in shape");
  Truncation t;
  t.rho = projector * rho * projector;
  const double kept = t.rho.trace().real();
  if (!(kept > 0)) throw NumericError("truncate: projector annihilates the state");
  t.rho /= kept;
  t.eps = 1.0 - kept / rho.trace().real();
  return t;
}

// ---------------------------------------------------------------------------
// Bounds from recorded truncation weights

inline double layer_truncation_weight(const TruncationReport& r, std::size_t tau) {
  if (tau < 1 || tau > r.layers.size())
    throw ValidationError("layer_truncation_weight: level " + std::to_string(tau) + " outside 1.." +
                          std::to_string(r.layers.size()));
  return r.layers[tau - 1].eps_sum();
}

namespace detail {

inline void check_weights(const std::vector<double>& w) {
  for (double e : w)
    if (!(e >= 0) || !std::isfinite(e)) throw ValidationError("certificate: truncation weights must be finite and >= 0");
}

}  // namespace detail

// Bounds on explicit weight lists, one entry per truncation step.
inline double fidelity_bound(const std::vector<double>& weights) {
  detail::check_weights(weights);
  double s = 0;
  for (double e : weights) s += std::sqrt(e);
  return 0.5 * s * s;
}

inline double trace_distance_bound(const std::vector<double>& weights) {
  detail::check_weights(weights);
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

inline double fidelity_bound(const TruncationReport& r) { return fidelity_bound(r.level_weights()); }
inline double trace_distance_bound(const TruncationReport& r) { return trace_distance_bound(r.level_weights()); }

// How the beta-weighted basis operators are collapsed into one trace norm:
// `summed` takes || sum_ij beta_ij R_i ||_1, `per_observable` takes
// sum_j || sum_i beta_ij R_i ||_1.
enum class FactorForm { summed, per_observable };

inline std::string to_string(FactorForm f) { return f == FactorForm::summed ? "summed" : "per-observable"; }

inline FactorForm factor_form_from_string(const std::string& s) {
  if (s == "summed") return FactorForm::summed;
  if (s == "per-observable") return FactorForm::per_observable;
  throw ValidationError("unknown trace-norm factor form \"" + s + "\" (expected summed or per-observable)");
}

inline double trace_norm_factor(const OrthogonalBasis& b, FactorForm form = FactorForm::summed) {
  if (b.beta.rows() != b.R.cols() || b.beta.rows() == 0) throw ValidationError("trace_norm_factor: malformed basis");
  if (form == FactorForm::summed) {
    const Eigen::VectorXd r = b.R * b.beta.rowwise().sum();
    return trace_norm(from_pauli_coefficients(r.cast<cplx>()));
  }
  double s = 0;
  for (Eigen::Index j = 0; j < b.beta.cols(); ++j) {
    const Eigen::VectorXd r = b.R * b.beta.col(j);
    s += trace_norm(from_pauli_coefficients(r.cast<cplx>()));
  }
  return s;
}

struct LevelFactor {
  std::size_t level = 0;
  std::size_t blocks = 0;
  double max = 0;
  double mean = 0;
};

// Trace-norm factors of levels 1..m of a circuit, from a builder that
// measures level-0 Pauli strings.
inline std::vector<LevelFactor> level_factors(BasisBuilder& bb, const MeraCircuit& c,
                                              FactorForm form = FactorForm::summed) {
  if (bb.base_level() != 0) throw ValidationError("level_factors: builder must start at the physical level");
  std::vector<LevelFactor> out;
  for (std::size_t level = 1; level <= c.layers.size(); ++level) {
    LevelFactor f;
    f.level = level;
    for (const auto& block : level_blocks(c, level)) {
      const double x = trace_norm_factor(bb.get(level, block)->ortho, form);
      f.max = std::max(f.max, x);
      f.mean += x;
      ++f.blocks;
    }
    f.mean /= static_cast<double>(f.blocks);
    out.push_back(f);
  }
  return out;
}

// sum_tau 1/2 factor_tau sum_{l<=tau} eps^l over the reconstructed levels.
inline double reconstruction_error_bound(const TruncationReport& r, const std::vector<double>& factors) {
  if (factors.size() != r.layers.size())
    throw ValidationError("reconstruction_error_bound: missing basis for level " +
                          std::to_string(std::min(factors.size(), r.layers.size()) + 1) + " (have " +
                          std::to_string(factors.size()) + " factors for " + std::to_string(r.layers.size()) +
                          " levels)");
  double total = 0, upstream = 0;
  for (std::size_t tau = 1; tau <= r.layers.size(); ++tau) {
    upstream += layer_truncation_weight(r, tau);
    if (!(factors[tau - 1] >= 0)) throw ValidationError("reconstruction_error_bound: negative trace-norm factor");
    total += 0.5 * upstream * factors[tau - 1];
  }
  return total;
}

// ---------------------------------------------------------------------------
// Certificate

struct TrueStateCheck {
  double fidelity = 0;
  double infidelity = 0;
  double trace_distance = 0;
  bool fidelity_bound_holds = false;
  bool trace_bound_holds = false;
  bool combined_bound_holds = false;
};

struct Certificate {
  std::vector<double> weights;       // eps^1..eps^m, then the top truncation
  double fidelity_bound = 0;
  double trace_bound = 0;            // intrinsic term
  std::optional<double> reconstruction_bound;
  std::vector<double> factors;       // per level, largest block
  FactorForm factor_form = FactorForm::summed;
  double combined_bound = 0;
  bool small_angle_ok = true;        // every sqrt(eps^j) <= 0.5
  std::optional<TrueStateCheck> truth;
};

inline Certificate certificate(const TruncationReport& r, const std::optional<std::vector<double>>& factors,
                               FactorForm form = FactorForm::summed) {
  Certificate c;
  c.weights = r.level_weights();
  c.fidelity_bound = fidelity_bound(c.weights);
  c.trace_bound = trace_distance_bound(c.weights);
  c.factor_form = form;
  for (double e : c.weights)
    if (std::sqrt(e) > 0.5) c.small_angle_ok = false;
  c.combined_bound = c.trace_bound;
  if (factors) {
    c.factors = *factors;
    c.reconstruction_bound = reconstruction_error_bound(r, *factors);
    c.combined_bound += *c.reconstruction_bound;
  }
  return c;
}

inline Certificate certificate(const TruncationReport& r, BasisBuilder& bb, const MeraCircuit& circuit,
                               FactorForm form = FactorForm::summed) {
  std::vector<double> f;
  for (const auto& lf : level_factors(bb, circuit, form)) f.push_back(lf.max);
  return certificate(r, f, form);
}

// Compares the bounds with the exact distance to a known true state.
inline void verify(Certificate& c, const CTensor& truth, const CTensor& reconstructed) {
  TrueStateCheck t;
  const CVector a = to_vector(truth), b = to_vector(reconstructed);
  t.infidelity = infidelity(a, b);
  t.fidelity = 1.0 - t.infidelity;
  t.trace_distance = trace_distance(a, b);
  t.fidelity_bound_holds = c.fidelity_bound >= t.infidelity;
  t.trace_bound_holds = c.trace_bound >= t.trace_distance;
  t.combined_bound_holds = c.combined_bound >= t.trace_distance;
  c.truth = t;
}

inline nlohmann::json to_json(const Certificate& c) {
  nlohmann::json j;
  j["weights"] = c.weights;
  j["fidelity_bound"] = c.fidelity_bound;
  j["trace_bound"] = c.trace_bound;
  j["reconstruction_bound"] = c.reconstruction_bound ? nlohmann::json(*c.reconstruction_bound) : nlohmann::json();
  j["trace_norm_factors"] = c.factors;
  j["factor_form"] = to_string(c.factor_form);
  j["combined_bound"] = c.combined_bound;
  j["small_angle_ok"] = c.small_angle_ok;
  if (c.truth) {
    j["true_state"] = {{"fidelity", c.truth->fidelity},
                       {"infidelity", c.truth->infidelity},
                       {"trace_distance", c.truth->trace_distance},
                       {"fidelity_bound_holds", c.truth->fidelity_bound_holds},
                       {"trace_bound_holds", c.truth->trace_bound_holds},
                       {"combined_bound_holds", c.truth->combined_bound_holds}};
  }
  return j;
}

inline const char* certificate_csv_header() {
  return "label,exact_infidelity,exact_trace_distance,fidelity_bound,trace_bound,combined_bound,small_angle_ok";
}

// One row; exact columns are empty without a true state.
inline std::string certificate_csv_row(const std::string& label, const Certificate& c) {
  std::ostringstream os;
  os.precision(10);
  os << label << ',';
  if (c.truth) os << c.truth->infidelity << ',' << c.truth->trace_distance << ',';
  else os << ",,";
  os << c.fidelity_bound << ',' << c.trace_bound << ',' << c.combined_bound << ',' << (c.small_angle_ok ? 1 : 0);
  return os.str();
}

}  // namespace mera
