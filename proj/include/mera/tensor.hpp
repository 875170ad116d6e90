#pragma once
// Dense tensors over double or complex<double>.
//
// Layout: row-major, the last leg varies fastest. A Tensor is a value: once
// constructed it is never modified in place, and every operation returns a
// new Tensor. Matrix-shaped tensors (rank 2) interoperate with Eigen through
// to_matrix / from_matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mera/errors.hpp"

namespace mera {

using cplx = std::complex<double>;

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMatrix = RowMatrix<cplx>;
using RMatrix = RowMatrix<double>;

namespace detail {

inline std::string shape_string(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline std::size_t volume(const std::vector<std::size_t>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

template <class T>
double abs2(const T& x) {
  if constexpr (is_complex<T>::value) return std::norm(x);
  else return x * x;
}

template <class T>
T conj_value(const T& x) {
  if constexpr (is_complex<T>::value) return std::conj(x);
  else return x;
}

}  // namespace detail

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(detail::volume(shape_), T{}) {
    check_shape();
  }

  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != detail::volume(shape_))
      throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + detail::shape_string(shape_));
  }

  static Tensor identity(std::size_t d) {
    std::vector<T> v(d * d, T{});
    for (std::size_t i = 0; i < d; ++i) v[i * d + i] = T{1};
    return Tensor({d, d}, std::move(v));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t leg) const { return shape_.at(leg); }
  const std::vector<T>& data() const noexcept { return data_; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  const T& at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) throw ValidationError("index rank mismatch");
    std::size_t off = 0, k = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[k]) throw ValidationError("index out of range");
      off = off * shape_[k++] + i;
    }
    return data_[off];
  }

  Tensor reshape(std::vector<std::size_t> shape) const {
    if (detail::volume(shape) != data_.size())
      throw ValidationError("cannot reshape " + detail::shape_string(shape_) + " to " +
                            detail::shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  // Output leg i is input leg perm[i].
  Tensor permute(const std::vector<std::size_t>& perm) const {
    const std::size_t r = rank();
    if (perm.size() != r) throw ValidationError("permutation rank mismatch");
    std::vector<bool> seen(r, false);
    for (std::size_t p : perm) {
      if (p >= r || seen[p]) throw ValidationError("invalid permutation");
      seen[p] = true;
    }
    std::vector<std::size_t> in_stride(r, 1);
    for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * shape_[i];
    std::vector<std::size_t> out_shape(r), stride(r);
    for (std::size_t i = 0; i < r; ++i) {
      out_shape[i] = shape_[perm[i]];
      stride[i] = in_stride[perm[i]];
    }
    std::vector<T> out(data_.size());
    if (r == 0 || data_.empty()) return Tensor(std::move(out_shape), std::move(out));
    // Odometer over the output; the innermost leg is a strided copy.
    std::vector<std::size_t> counter(r, 0);
    const std::size_t inner = out_shape[r - 1], inner_stride = stride[r - 1];
    std::size_t src = 0, dst = 0;
    while (dst < out.size()) {
      for (std::size_t j = 0; j < inner; ++j) out[dst++] = data_[src + j * inner_stride];
      std::size_t leg = r - 1;
      while (leg-- > 0) {
        src += stride[leg];
        if (++counter[leg] < out_shape[leg]) break;
        src -= stride[leg] * out_shape[leg];
        counter[leg] = 0;
      }
    }
    return Tensor(std::move(out_shape), std::move(out));
  }

  Tensor conj() const {
    std::vector<T> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](const T& x) { return detail::conj_value(x); });
    return Tensor(shape_, std::move(out));
  }

  double norm() const {
    double s = 0;
    for (const T& x : data_) s += detail::abs2(x);
    return std::sqrt(s);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    for (std::size_t d : shape_)
      if (d == 0) throw ValidationError("tensor legs must have positive dimension");
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using CTensor = Tensor<cplx>;
using RTensor = Tensor<double>;

// ---------------------------------------------------------------------------
// Eigen interop

template <class T>
RowMatrix<T> to_matrix(const Tensor<T>& t) {
  if (t.rank() != 2) throw ValidationError("expected a matrix-shaped tensor, got rank " +
                                           std::to_string(t.rank()));
  return Eigen::Map<const RowMatrix<T>>(t.data().data(), t.dim(0), t.dim(1));
}

template <class Derived>
auto from_matrix(const Eigen::MatrixBase<Derived>& m) {
  using T = typename Derived::Scalar;
  RowMatrix<T> rm = m;
  std::vector<T> v(rm.data(), rm.data() + rm.size());
  return Tensor<T>({static_cast<std::size_t>(rm.rows()), static_cast<std::size_t>(rm.cols())},
                   std::move(v));
}

template <class T>
Eigen::Matrix<T, Eigen::Dynamic, 1> to_vector(const Tensor<T>& t) {
  return Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(t.data().data(), t.size());
}

template <class Derived>
auto from_vector(const Eigen::MatrixBase<Derived>& v) {
  using T = typename Derived::Scalar;
  std::vector<T> d(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) d[i] = v(i);
  return Tensor<T>({static_cast<std::size_t>(v.size())}, std::move(d));
}

// ---------------------------------------------------------------------------
// Contraction

using LegPairs = std::vector<std::pair<std::size_t, std::size_t>>;

// Sums over each (leg of a, leg of b) pair. Output legs: free legs of a in
// order, then free legs of b in order.
template <class T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, const LegPairs& pairs) {
  std::vector<bool> ca(a.rank(), false), cb(b.rank(), false);
  std::size_t inner = 1;
  for (const auto& [la, lb] : pairs) {
    if (la >= a.rank() || lb >= b.rank())
      throw ContractError("contract: leg pair (" + std::to_string(la) + "," +
                          std::to_string(lb) + ") out of range");
    if (ca[la] || cb[lb])
      throw ContractError("contract: leg pair (" + std::to_string(la) + "," +
                          std::to_string(lb) + ") reuses a leg");
    if (a.dim(la) != b.dim(lb))
      throw ContractError("contract: leg pair (" + std::to_string(la) + "," +
                          std::to_string(lb) + ") has dimensions " +
                          std::to_string(a.dim(la)) + " and " + std::to_string(b.dim(lb)));
    ca[la] = cb[lb] = true;
    inner *= a.dim(la);
  }
  std::vector<std::size_t> pa, pb, out_shape;
  std::size_t rows = 1, cols = 1;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (!ca[i]) { pa.push_back(i); out_shape.push_back(a.dim(i)); rows *= a.dim(i); }
  for (const auto& pr : pairs) { pa.push_back(pr.first); pb.push_back(pr.second); }
  for (std::size_t i = 0; i < b.rank(); ++i)
    if (!cb[i]) { pb.push_back(i); out_shape.push_back(b.dim(i)); cols *= b.dim(i); }

  const Tensor<T> ap = a.permute(pa), bp = b.permute(pb);
  Eigen::Map<const RowMatrix<T>> am(ap.data().data(), rows, inner);
  Eigen::Map<const RowMatrix<T>> bm(bp.data().data(), inner, cols);
  std::vector<T> out(rows * cols);
  Eigen::Map<RowMatrix<T>> om(out.data(), rows, cols);
  om.noalias() = am * bm;
  if (out_shape.empty()) out_shape.push_back(1);
  return Tensor<T>(std::move(out_shape), std::move(out));
}

// ---------------------------------------------------------------------------
// Factorizations

template <class T>
struct SVDResult {
  Tensor<T> U;
  std::vector<double> S;
  Tensor<T> V;
};

// m = U diag(S) V^dagger, S descending. Thin factors.
template <class T>
SVDResult<T> svd(const Tensor<T>& m) {
  const RowMatrix<T> a = to_matrix(m);
  if (!a.allFinite()) throw NumericError("svd: non-finite input");
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  Mat u, v;
  Eigen::VectorXd s;
  if (std::min(a.rows(), a.cols()) <= 64) {
    Eigen::JacobiSVD<Mat> dec(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = dec.matrixU(); v = dec.matrixV(); s = dec.singularValues();
  } else {
    Eigen::BDCSVD<Mat> dec(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = dec.matrixU(); v = dec.matrixV(); s = dec.singularValues();
  }
  if (!s.allFinite()) throw NumericError("svd: decomposition produced non-finite values");
  return {from_matrix(u), std::vector<double>(s.data(), s.data() + s.size()), from_matrix(v)};
}

template <class T>
struct SpectralDecomposition {
  std::vector<double> eigenvalues;  // descending
  Tensor<T> eigenvectors;           // column k pairs with eigenvalues[k]
};

namespace detail {

// Make the largest-magnitude entry of every column real and positive. The
// first entry within a relative 1e-12 of the maximum wins, which keeps the
// choice stable when two entries are equal up to rounding.
template <class Mat>
void fix_column_phases(Mat& v) {
  using T = typename Mat::Scalar;
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    double best = 0;
    for (Eigen::Index r = 0; r < v.rows(); ++r) best = std::max(best, std::abs(v(r, c)));
    Eigen::Index pick = 0;
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      if (std::abs(v(r, c)) >= best * (1 - 1e-12)) { pick = r; break; }
    const T x = v(pick, c);
    if (std::abs(x) == 0) continue;
    if constexpr (is_complex<T>::value) v.col(c) *= std::conj(x) / std::abs(x);
    else if (x < 0) v.col(c) *= -1.0;
  }
}

}  // namespace detail

template <class Derived>
auto hermitian_eig_matrix(const Eigen::MatrixBase<Derived>& m) {
  using T = typename Derived::Scalar;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  const Mat a = m;
  if (a.rows() != a.cols()) throw ValidationError("hermitian_eig: matrix is not square");
  if (!a.allFinite()) throw NumericError("hermitian_eig: non-finite input");
  const double scale = a.norm();
  if ((a - a.adjoint()).norm() > 1e-10 * std::max(scale, 1e-300) && scale > 0)
    throw ValidationError("hermitian_eig: input is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  if (es.info() != Eigen::Success) throw NumericError("hermitian_eig: solver failed");
  const Eigen::Index n = a.rows();
  Mat vecs(n, n);
  Eigen::VectorXd vals(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    vals(k) = es.eigenvalues()(n - 1 - k);
    vecs.col(k) = es.eigenvectors().col(n - 1 - k);
  }
  detail::fix_column_phases(vecs);
  return std::make_pair(vals, vecs);
}

template <class T>
SpectralDecomposition<T> hermitian_eig(const Tensor<T>& m) {
  auto [vals, vecs] = hermitian_eig_matrix(to_matrix(m));
  return {std::vector<double>(vals.data(), vals.data() + vals.size()), from_matrix(vecs)};
}

// ---------------------------------------------------------------------------
// Partial trace

// rho is a (prod dims) x (prod dims) matrix over subsystems listed in dims,
// subsystem 0 most significant. The result keeps the subsystems in `keep`,
// in ascending subsystem order.
template <class T>
Tensor<T> partial_trace(const Tensor<T>& rho, const std::vector<std::size_t>& dims,
                        std::vector<std::size_t> keep) {
  const std::size_t total = detail::volume(dims);
  if (rho.rank() != 2 || rho.dim(0) != total || rho.dim(1) != total)
    throw ValidationError("partial_trace: rho of shape " + detail::shape_string(rho.shape()) +
                          " is not square over dims " + detail::shape_string(dims));
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  for (std::size_t k : keep)
    if (k >= dims.size())
      throw ValidationError("partial_trace: keep index " + std::to_string(k) + " out of range");
  const std::size_t r = dims.size();
  std::vector<bool> kept(r, false);
  for (std::size_t k : keep) kept[k] = true;
  // rho as tensor with legs (row_0..row_{r-1}, col_0..col_{r-1}); bring to
  // (row_kept, row_traced, col_kept, col_traced).
  std::vector<std::size_t> shape2(dims);
  shape2.insert(shape2.end(), dims.begin(), dims.end());
  std::vector<std::size_t> perm;
  std::size_t dk = 1, dt = 1;
  for (std::size_t i = 0; i < r; ++i) if (kept[i]) { perm.push_back(i); dk *= dims[i]; }
  for (std::size_t i = 0; i < r; ++i) if (!kept[i]) { perm.push_back(i); dt *= dims[i]; }
  for (std::size_t i = 0; i < r; ++i) if (kept[i]) perm.push_back(r + i);
  for (std::size_t i = 0; i < r; ++i) if (!kept[i]) perm.push_back(r + i);
  const Tensor<T> p = rho.reshape(shape2).permute(perm);
  std::vector<T> out(dk * dk, T{});
  const auto& d = p.data();
  for (std::size_t a = 0; a < dk; ++a)
    for (std::size_t b = 0; b < dk; ++b) {
      T s{};
      for (std::size_t t = 0; t < dt; ++t) s += d[((a * dt + t) * dk + b) * dt + t];
      out[a * dk + b] = s;
    }
  return Tensor<T>({dk, dk}, std::move(out));
}

// ---------------------------------------------------------------------------
// Small helpers used across modules

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  return contract(a, b, {{1, 0}});
}

template <class T>
Tensor<T> dagger(const Tensor<T>& m) {
  if (m.rank() != 2) throw ValidationError("dagger: expected a matrix");
  return m.permute({1, 0}).conj();
}

template <class T>
Tensor<T> kron(const Tensor<T>& a, const Tensor<T>& b) {
  const RowMatrix<T> x = to_matrix(a), y = to_matrix(b);
  RowMatrix<T> out(x.rows() * y.rows(), x.cols() * y.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
  return from_matrix(out);
}

template <class T>
double frobenius_distance(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ValidationError("frobenius_distance: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += detail::abs2(a[i] - b[i]);
  return std::sqrt(s);
}

template <class T>
T trace(const Tensor<T>& m) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) throw ValidationError("trace: expected square matrix");
  T s{};
  for (std::size_t i = 0; i < m.dim(0); ++i) s += m[i * m.dim(0) + i];
  return s;
}

}  // namespace mera
