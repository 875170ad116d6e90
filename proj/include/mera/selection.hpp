#pragma once
// Subset selection over candidate operators and the measurement allocation
// that follows from it.
//
// Candidates are real coefficient vectors (columns of a d x N matrix) in the
// orthonormal Hermitian Pauli basis of a block. A selection of d columns is
// scored by |det|; for fewer than d columns the score is the Gram volume
// sqrt(det(A^T A)).

#include <cmath>
#include <limits>
#include <optional>

#include "mera/errors.hpp"
#include "mera/tensor.hpp"

namespace mera {

struct Selection {
  std::vector<std::size_t> members;  // candidate column indices
  double log_abs_det = 0;            // log of the Gram volume of the members
  bool pinned = false;               // members[0] never leaves the selection
  std::size_t swaps = 0;
};

// log sqrt(det(A^T A)) of the listed columns, via pivoted QR.
inline double log_gram_volume(const RMatrix& X, const std::vector<std::size_t>& members) {
  Eigen::MatrixXd A(X.rows(), static_cast<Eigen::Index>(members.size()));
  for (std::size_t j = 0; j < members.size(); ++j) A.col(j) = X.col(members[j]);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  double s = 0;
  for (Eigen::Index i = 0; i < A.cols(); ++i) s += std::log(std::abs(qr.matrixR()(i, i)));
  return s;
}

// Longest residual vector selection. Greedily adds the candidate with the
// largest component orthogonal to the span of those already chosen; ties go
// to the lowest index. With `pinned`, that column is taken first.
inline Selection lrv_select(const RMatrix& X, std::size_t count, std::optional<std::size_t> pinned = 0,
                            double rank_tol = 1e-9) {
  const auto d = static_cast<std::size_t>(X.rows());
  const auto N = static_cast<std::size_t>(X.cols());
  if (count > d || count > N)
    throw ValidationError("lrv_select: cannot pick " + std::to_string(count) + " of " + std::to_string(N) +
                          " candidates in dimension " + std::to_string(d));
  if (pinned && *pinned >= N) throw ValidationError("lrv_select: pinned index out of range");

  Eigen::RowVectorXd r2 = X.colwise().squaredNorm();
  const double max2 = r2.size() ? r2.maxCoeff() : 0.0;
  Eigen::MatrixXd Q(d, count);
  Selection sel;
  sel.pinned = pinned.has_value();
  constexpr double taken = -std::numeric_limits<double>::infinity();

  for (std::size_t step = 0; step < count; ++step) {
    std::size_t c = 0;
    if (step == 0 && pinned) {
      c = *pinned;
    } else {
      double best = taken;
      for (std::size_t i = 0; i < N; ++i)
        if (r2(i) > best) {
          best = r2(i);
          c = i;
        }
    }
    Eigen::VectorXd v = X.col(c);
    for (int pass = 0; pass < 2; ++pass)
      if (step) v -= Q.leftCols(step) * (Q.leftCols(step).transpose() * v);
    const double nv = v.norm();
    if (!(nv > rank_tol * std::sqrt(max2)))
      throw RankError("lrv_select: candidates span only " + std::to_string(step) + " of the " +
                          std::to_string(count) + " requested dimensions",
                      step);
    Q.col(step) = v / nv;
    sel.members.push_back(c);
    sel.log_abs_det += std::log(nv);
    r2 -= (Q.col(step).transpose() * X).cwiseAbs2();
    for (std::size_t m : sel.members) r2(m) = taken;
  }
  return sel;
}

// One-by-one replacement: repeatedly applies the single member/candidate
// swap with the largest |det| gain until none exceeds 1 + tol or
// `max_swaps` is reached. The pinned member is never replaced.
inline Selection one_by_one_replace(const RMatrix& X, Selection sel, std::size_t max_swaps = 100000,
                                    double tol = 1e-9) {
  const Eigen::Index d = X.rows(), N = X.cols();
  const Eigen::Index k = static_cast<Eigen::Index>(sel.members.size());
  std::vector<char> member(static_cast<std::size_t>(N), 0);
  for (std::size_t m : sel.members) member[m] = 1;
  const Eigen::Index first = sel.pinned ? 1 : 0;

  auto selected = [&] {
    Eigen::MatrixXd A(d, k);
    for (Eigen::Index j = 0; j < k; ++j) A.col(j) = X.col(sel.members[j]);
    return A;
  };

  if (k == d) {
    // Y = A^{-1} X; swapping member r for candidate c scales |det| by |Y(r,c)|.
    RMatrix Y;
    auto refresh = [&] {
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(selected());
      Y = lu.solve(X);
    };
    refresh();
    while (sel.swaps < max_swaps) {
      double best = 1 + tol;
      Eigen::Index br = -1, bc = -1;
      for (Eigen::Index r = first; r < k; ++r) {
        const double* row = Y.row(r).data();
        for (Eigen::Index c = 0; c < N; ++c)
          if (!member[c] && std::abs(row[c]) > best) {
            best = std::abs(row[c]);
            br = r;
            bc = c;
          }
      }
      if (br < 0) break;
      const Eigen::VectorXd yc = Y.col(bc);
      const Eigen::RowVectorXd yr = Y.row(br) / yc(br);
      Eigen::VectorXd u = yc;
      u(br) -= 1;
      Y.noalias() -= u * yr;
      member[sel.members[br]] = 0;
      member[bc] = 1;
      sel.members[br] = static_cast<std::size_t>(bc);
      ++sel.swaps;
      if (sel.swaps % 32 == 0) refresh();
    }
  } else {
    // Non-square: squared volume ratio y_r^2 + |x_perp|^2 (A^T A)^{-1}_rr.
    while (sel.swaps < max_swaps) {
      const Eigen::MatrixXd A = selected();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
      const Eigen::MatrixXd Qa = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
      const Eigen::MatrixXd R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
      const Eigen::MatrixXd Rinv = R.inverse();
      const Eigen::MatrixXd P = Qa.transpose() * X;
      const Eigen::MatrixXd Y = Rinv * P;
      const Eigen::RowVectorXd perp2 =
          (X.colwise().squaredNorm() - P.colwise().squaredNorm()).cwiseMax(0.0);
      const Eigen::VectorXd ginv = Rinv.rowwise().squaredNorm();
      double best = (1 + tol) * (1 + tol);
      Eigen::Index br = -1, bc = -1;
      for (Eigen::Index r = first; r < k; ++r)
        for (Eigen::Index c = 0; c < N; ++c) {
          if (member[c]) continue;
          const double ratio = Y(r, c) * Y(r, c) + perp2(c) * ginv(r);
          if (ratio > best) {
            best = ratio;
            br = r;
            bc = c;
          }
        }
      if (br < 0) break;
      member[sel.members[br]] = 0;
      member[bc] = 1;
      sel.members[br] = static_cast<std::size_t>(bc);
      ++sel.swaps;
    }
  }
  sel.log_abs_det = log_gram_volume(X, sel.members);
  return sel;
}

// Orthogonal operators R_i = sum_j beta_ij O^j built from the Gram matrix
// G = C^T C = Z D Z^T of the selected coefficient vectors (columns of C):
// beta = diag(sqrt(2^s / D_ii)) Z^T, so that tr(R_i R_j) = 2^s delta_ij.
struct OrthogonalBasis {
  std::size_t sites = 0;
  RMatrix C;                 // selected coefficient vectors, by column
  RMatrix beta;
  RMatrix R;                 // coefficient vectors of R_i, by column
  Eigen::VectorXd gram_eigenvalues;  // descending
};

inline OrthogonalBasis gram_orthogonalize(const RMatrix& C, std::size_t sites, double rel_tol = 1e-12) {
  const Eigen::Index d = C.rows();
  if (C.cols() != d || d != (Eigen::Index{1} << (2 * sites)))
    throw ValidationError("gram_orthogonalize: expected a square 4^s x 4^s selection");
  const Eigen::MatrixXd G = C.transpose() * C;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  Eigen::VectorXd D = es.eigenvalues().reverse();
  Eigen::MatrixXd Z = es.eigenvectors().rowwise().reverse();
  if (!(D(d - 1) > rel_tol * D(0)))
    throw NumericError("gram_orthogonalize: Gram matrix is singular (smallest eigenvalue " +
                       std::to_string(D(d - 1)) + ")");
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::Index r;
    Z.col(i).cwiseAbs().maxCoeff(&r);
    if (Z(r, i) < 0) Z.col(i) = -Z.col(i);
  }
  const double scale = std::sqrt(std::ldexp(1.0, static_cast<int>(sites)));
  OrthogonalBasis out;
  out.sites = sites;
  out.C = C;
  out.beta = (scale * D.cwiseSqrt().cwiseInverse()).asDiagonal() * Z.transpose();
  out.R = C * out.beta.transpose();
  out.gram_eigenvalues = D;
  return out;
}

// Shot allocation keeping every t_i = sum_j beta_ij <O^j> at the precision
// of a directly measured Pauli: sum_j B_ij / N~_j <= 1 for all i.
struct MeasurementPlan {
  RMatrix B;                 // beta_ij^2
  Eigen::VectorXd gamma;     // max_i B_ij
  double K = 0;
  Eigen::VectorXd n_tilde;   // per-observable multiplier, >= 1
  double S = 0;              // mean multiplier
  std::size_t M0 = 0;
  std::vector<std::uint64_t> shots;  // ceil(N~_j M0)
  std::uint64_t total = 0;
};

inline MeasurementPlan allocate(const RMatrix& beta, std::size_t M0 = 100) {
  if (M0 == 0) throw ValidationError("allocate: M0 must be positive");
  MeasurementPlan p;
  p.M0 = M0;
  p.B = beta.cwiseAbs2();
  p.gamma = p.B.colwise().maxCoeff().transpose();
  if (p.gamma.minCoeff() <= 0) throw NumericError("allocate: an observable carries no weight");
  p.K = (p.B * p.gamma.cwiseInverse()).maxCoeff();
  p.n_tilde = (p.K * p.gamma).cwiseMax(1.0);
  const Eigen::VectorXd load = p.B * p.n_tilde.cwiseInverse();
  if (load.maxCoeff() > 1 + 1e-12) throw Error("allocate: emitted plan violates the precision constraint");
  p.S = p.n_tilde.sum() / static_cast<double>(p.n_tilde.size());
  for (Eigen::Index j = 0; j < p.n_tilde.size(); ++j) {
    const auto s = static_cast<std::uint64_t>(std::ceil(p.n_tilde(j) * static_cast<double>(M0) - 1e-9));
    p.shots.push_back(s);
    p.total += s;
  }
  return p;
}

}  // namespace mera
