// Copyright 2026 The krembed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Block low-rank (BLR) storage of ell vectors of length n_hat * n_tilde:
//
//   w_j = vec(U * Sigma(j) * V^T),   U: n_hat x r_hat,  V: n_tilde x r_tilde,
//
// with shared bases U, V and one r_hat x r_tilde core per column. The
// transpose on V is a plain transpose for complex scalars as well; inner
// products conjugate the first argument.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "krembed/dense.hpp"
#include "krembed/kron.hpp"
#include "krembed/sketch.hpp"

namespace krembed {

template <typename Scalar>
class BlockLowRank {
 public:
  using MatS = Mat<Scalar>;

  BlockLowRank() = default;

  /// Empty block (ell = 0) with zero ranks.
  BlockLowRank(Index n_hat, Index n_tilde) : U_(MatS::Zero(n_hat, 0)), V_(MatS::Zero(n_tilde, 0)) {}

  BlockLowRank(MatS U, MatS V, std::vector<MatS> sigma, bool orthonormal = false)
      : U_(std::move(U)), V_(std::move(V)), sigma_(std::move(sigma)), orthonormal_(orthonormal) {
    for (const auto& s : sigma_) {
      if (s.rows() != U_.cols() || s.cols() != V_.cols()) {
        throw DimensionMismatch("core slice does not match the factor ranks");
      }
    }
  }

  Index n_hat() const { return U_.rows(); }
  Index n_tilde() const { return V_.rows(); }
  Index n() const { return n_hat() * n_tilde(); }
  Index r_hat() const { return U_.cols(); }
  Index r_tilde() const { return V_.cols(); }
  Index max_rank() const { return std::max(r_hat(), r_tilde()); }
  Index ell() const { return static_cast<Index>(sigma_.size()); }
  bool orthonormal() const { return orthonormal_; }

  const MatS& U() const { return U_; }
  const MatS& V() const { return V_; }
  const MatS& sigma(Index j) const { return sigma_[static_cast<std::size_t>(j)]; }
  const std::vector<MatS>& sigmas() const { return sigma_; }

  /// Number of stored scalars.
  std::int64_t storage() const {
    return static_cast<std::int64_t>(U_.size() + V_.size()) +
           static_cast<std::int64_t>(ell()) * r_hat() * r_tilde();
  }

  /// n_hat x n_tilde matrix of column j.
  MatS column_matrix(Index j) const { return U_ * sigma(j) * V_.transpose(); }

  /// Stack of the ell represented vectors.
  MatS to_dense(std::int64_t cap = kDefaultDenseCap) const {
    if (static_cast<std::int64_t>(n()) * std::max<Index>(ell(), 1) > cap) {
      throw SizeOverflow("to_dense: block exceeds materialization cap");
    }
    MatS out(n(), ell());
    for (Index j = 0; j < ell(); ++j) {
      const MatS X = column_matrix(j);
      out.col(j) = Eigen::Map<const Vec<Scalar>>(X.data(), X.size());
    }
    return out;
  }

  /// Builds the block for scale * (tilde (.) hat): U and V are the Q factors
  /// of hat and tilde, Sigma(j) = (R_hat e_j)(R_tilde e_j)^T.
  static BlockLowRank from_khatri_rao(const KhatriRaoSketch& sk) {
    if (sk.tilde.cols() != sk.hat.cols()) throw DimensionMismatch("Khatri-Rao factors differ in column count");
    const auto qh = qr_econ(sk.hat.cast<Scalar>().eval());
    const auto qt = qr_econ(sk.tilde.cast<Scalar>().eval());
    std::vector<MatS> sigma;
    sigma.reserve(static_cast<std::size_t>(sk.ell()));
    for (Index j = 0; j < sk.ell(); ++j) {
      sigma.push_back(Scalar(sk.scale) * qh.R.col(j) * qt.R.col(j).transpose());
    }
    return BlockLowRank(qh.Q, qt.Q, std::move(sigma), true);
  }

  /// Columns vec(Xhat_j Xtil_j^T) for the given factor pairs, stored with
  /// U = [Xhat_1, ...], V = [Xtil_1, ...] and block-selector cores.
  static BlockLowRank from_factored_columns(Index n_hat, Index n_tilde,
                                            const std::vector<std::pair<MatS, MatS>>& cols) {
    Index r = 0;
    for (const auto& [h, t] : cols) {
      if (h.rows() != n_hat || t.rows() != n_tilde || h.cols() != t.cols()) {
        throw DimensionMismatch("factored column has inconsistent shape");
      }
      r += h.cols();
    }
    MatS U(n_hat, r), V(n_tilde, r);
    std::vector<MatS> sigma;
    Index off = 0;
    for (const auto& [h, t] : cols) {
      U.middleCols(off, h.cols()) = h;
      V.middleCols(off, t.cols()) = t;
      MatS s = MatS::Zero(r, r);
      s.block(off, off, h.cols(), h.cols()).setIdentity();
      sigma.push_back(std::move(s));
      off += h.cols();
    }
    return BlockLowRank(std::move(U), std::move(V), std::move(sigma), false);
  }

  /// Block (ell = cols of W) from a dense n x ell matrix via exact
  /// per-column factorization; test and oracle helper.
  static BlockLowRank from_dense(const MatS& W, Index n_hat, Index n_tilde) {
    if (W.rows() != n_hat * n_tilde) throw DimensionMismatch("from_dense: row count mismatch");
    // shared bases: identity factors with full cores
    std::vector<MatS> sigma;
    for (Index j = 0; j < W.cols(); ++j) {
      sigma.push_back(Eigen::Map<const MatS>(W.col(j).data(), n_hat, n_tilde));
    }
    return BlockLowRank(MatS::Identity(n_hat, n_hat), MatS::Identity(n_tilde, n_tilde), std::move(sigma), true);
  }

  BlockLowRank scaled(Scalar c) const {
    std::vector<MatS> s = sigma_;
    for (auto& m : s) m *= c;
    return BlockLowRank(U_, V_, std::move(s), orthonormal_);
  }

  /// Columns [first, first + count).
  BlockLowRank columns(Index first, Index count) const {
    if (first < 0 || count < 0 || first + count > ell()) throw OutOfRange("column range out of bounds");
    std::vector<MatS> s(sigma_.begin() + first, sigma_.begin() + first + count);
    return BlockLowRank(U_, V_, std::move(s), orthonormal_);
  }

  /// ||w_j||_2 for every column, via QR of the bases (no Gram squaring).
  VecD column_norms() const {
    VecD out(ell());
    if (ell() == 0) return out;
    const auto qu = qr_econ(U_);
    const auto qv = qr_econ(V_);
    for (Index j = 0; j < ell(); ++j) out(j) = (qu.R * sigma(j) * qv.R.transpose()).norm();
    return out;
  }

  double frobenius_norm() const { return column_norms().norm(); }

 private:
  MatS U_;
  MatS V_;
  std::vector<MatS> sigma_;
  bool orthonormal_ = false;
};

using BlrD = BlockLowRank<double>;
using BlrC = BlockLowRank<Complex>;

namespace detail {
template <typename Scalar>
Mat<Scalar> block_diag_repeat(const Mat<Scalar>& S, Index times) {
  Mat<Scalar> out = Mat<Scalar>::Zero(S.rows() * times, S.cols() * times);
  for (Index t = 0; t < times; ++t) out.block(t * S.rows(), t * S.cols(), S.rows(), S.cols()) = S;
  return out;
}
}  // namespace detail

/// A W with U' = [hat_1 U, ..., hat_s U], V' = [tilde_1 V, ..., tilde_s V]
/// and block-diagonal cores.
template <typename Scalar>
BlockLowRank<Scalar> apply_operator(const KroneckerSumOperator& A, const BlockLowRank<Scalar>& W) {
  if (A.n_hat() != W.n_hat() || A.n_tilde() != W.n_tilde()) {
    throw DimensionMismatch("apply_operator: operator and block sizes differ");
  }
  const Index s = A.num_terms();
  Mat<Scalar> U(W.n_hat(), s * W.r_hat());
  Mat<Scalar> V(W.n_tilde(), s * W.r_tilde());
  for (Index i = 0; i < s; ++i) {
    const auto& t = A.terms()[static_cast<std::size_t>(i)];
    U.middleCols(i * W.r_hat(), W.r_hat()) = t.hat.apply(W.U());
    V.middleCols(i * W.r_tilde(), W.r_tilde()) = t.tilde.apply(W.V());
  }
  std::vector<Mat<Scalar>> sigma;
  sigma.reserve(static_cast<std::size_t>(W.ell()));
  for (Index j = 0; j < W.ell(); ++j) sigma.push_back(detail::block_diag_repeat(W.sigma(j), s));
  return BlockLowRank<Scalar>(std::move(U), std::move(V), std::move(sigma), false);
}

/// Columnwise sum; an empty operand (ell = 0 with no ranks) is neutral only
/// against another empty operand.
template <typename Scalar>
BlockLowRank<Scalar> add(const BlockLowRank<Scalar>& W1, const BlockLowRank<Scalar>& W2) {
  if (W1.n_hat() != W2.n_hat() || W1.n_tilde() != W2.n_tilde() || W1.ell() != W2.ell()) {
    throw DimensionMismatch("add: blocks differ in size or column count");
  }
  using MatS = Mat<Scalar>;
  MatS U(W1.n_hat(), W1.r_hat() + W2.r_hat());
  U << W1.U(), W2.U();
  MatS V(W1.n_tilde(), W1.r_tilde() + W2.r_tilde());
  V << W1.V(), W2.V();
  std::vector<MatS> sigma;
  sigma.reserve(static_cast<std::size_t>(W1.ell()));
  for (Index j = 0; j < W1.ell(); ++j) {
    MatS s = MatS::Zero(U.cols(), V.cols());
    s.topLeftCorner(W1.r_hat(), W1.r_tilde()) = W1.sigma(j);
    s.bottomRightCorner(W2.r_hat(), W2.r_tilde()) = W2.sigma(j);
    sigma.push_back(std::move(s));
  }
  return BlockLowRank<Scalar>(std::move(U), std::move(V), std::move(sigma), false);
}

/// Horizontal concatenation [W1, W2] of two blocks on the same grid.
template <typename Scalar>
BlockLowRank<Scalar> hconcat(const BlockLowRank<Scalar>& W1, const BlockLowRank<Scalar>& W2) {
  if (W1.n_hat() != W2.n_hat() || W1.n_tilde() != W2.n_tilde()) throw DimensionMismatch("hconcat: grid mismatch");
  using MatS = Mat<Scalar>;
  if (W2.ell() == 0) return W1;
  if (W1.ell() == 0) return W2;
  MatS U(W1.n_hat(), W1.r_hat() + W2.r_hat());
  U << W1.U(), W2.U();
  MatS V(W1.n_tilde(), W1.r_tilde() + W2.r_tilde());
  V << W1.V(), W2.V();
  std::vector<MatS> sigma;
  for (Index j = 0; j < W1.ell(); ++j) {
    MatS s = MatS::Zero(U.cols(), V.cols());
    s.topLeftCorner(W1.r_hat(), W1.r_tilde()) = W1.sigma(j);
    sigma.push_back(std::move(s));
  }
  for (Index j = 0; j < W2.ell(); ++j) {
    MatS s = MatS::Zero(U.cols(), V.cols());
    s.bottomRightCorner(W2.r_hat(), W2.r_tilde()) = W2.sigma(j);
    sigma.push_back(std::move(s));
  }
  return BlockLowRank<Scalar>(std::move(U), std::move(V), std::move(sigma), false);
}

/// Z = W1^H W2 (ell1 x ell2) from the trace formula.
template <typename Scalar>
Mat<Scalar> block_inner(const BlockLowRank<Scalar>& W1, const BlockLowRank<Scalar>& W2) {
  if (W1.n_hat() != W2.n_hat() || W1.n_tilde() != W2.n_tilde()) {
    throw DimensionMismatch("block_inner: blocks live on different grids");
  }
  using MatS = Mat<Scalar>;
  MatS Z(W1.ell(), W2.ell());
  if (&W1 == &W2 && W1.orthonormal()) {
    for (Index i = 0; i < W1.ell(); ++i) {
      for (Index j = i; j < W1.ell(); ++j) {
        Z(i, j) = (W1.sigma(i).conjugate().cwiseProduct(W1.sigma(j))).sum();
        Z(j, i) = conj_scalar(Z(i, j));
      }
    }
    return Z;
  }
  const MatS GU = W1.U().adjoint() * W2.U();                // r_hat1 x r_hat2
  const MatS GV = W2.V().transpose() * W1.V().conjugate();  // r_tilde2 x r_tilde1
  for (Index j = 0; j < W2.ell(); ++j) {
    const MatS T = GU * W2.sigma(j) * GV;  // r_hat1 x r_tilde1
    for (Index i = 0; i < W1.ell(); ++i) Z(i, j) = (W1.sigma(i).conjugate().cwiseProduct(T)).sum();
  }
  return Z;
}

/// W B with Sigma'(i) = sum_j B(j, i) Sigma(j).
template <typename Scalar, typename Derived>
BlockLowRank<Scalar> right_multiply(const BlockLowRank<Scalar>& W, const Eigen::MatrixBase<Derived>& B) {
  if (B.rows() != W.ell()) throw DimensionMismatch("right_multiply: B must have ell rows");
  using MatS = Mat<Scalar>;
  std::vector<MatS> sigma;
  sigma.reserve(static_cast<std::size_t>(B.cols()));
  for (Index i = 0; i < B.cols(); ++i) {
    MatS s = MatS::Zero(W.r_hat(), W.r_tilde());
    for (Index j = 0; j < W.ell(); ++j) {
      const Scalar b = static_cast<Scalar>(B(j, i));
      if (b != Scalar(0)) s += b * W.sigma(j);
    }
    sigma.push_back(std::move(s));
  }
  return BlockLowRank<Scalar>(W.U(), W.V(), std::move(sigma), W.orthonormal());
}

/// Observed per-mode data from one truncation, for diagnostics.
struct TruncationInfo {
  Index r_hat_in = 0, r_tilde_in = 0;
  Index r_hat_out = 0, r_tilde_out = 0;
  bool capped = false;  // r_max reduced at least one mode
};

/// Two-mode HOSVD truncation: QR of both bases, SVD of the mode-1 and
/// mode-2 unfoldings of the reduced cores, cut at eps / sqrt(2) relative
/// tail per mode, capped at r_max. The result has orthonormal bases.
template <typename Scalar>
BlockLowRank<Scalar> truncate(const BlockLowRank<Scalar>& W, double eps, Index r_max,
                              TruncationInfo* info = nullptr) {
  if (eps < 0) throw OutOfRange("truncate: eps must be >= 0");
  if (r_max < 1) throw OutOfRange("truncate: r_max must be >= 1");
  using MatS = Mat<Scalar>;
  if (info) {
    info->r_hat_in = W.r_hat();
    info->r_tilde_in = W.r_tilde();
  }
  const Index ell = W.ell();
  const auto qu = qr_econ(W.U());
  const auto qv = qr_econ(W.V());
  const Index ku = qu.R.rows();
  const Index kv = qv.R.rows();
  std::vector<MatS> C;
  C.reserve(static_cast<std::size_t>(ell));
  for (Index j = 0; j < ell; ++j) C.push_back(qu.R * W.sigma(j) * qv.R.transpose());

  const double tol = eps / std::sqrt(2.0);
  const Index big = std::numeric_limits<Index>::max();
  // mode 1: [C_1, ..., C_ell] (ku x ell*kv)
  MatS M1(ku, ell * kv);
  for (Index j = 0; j < ell; ++j) M1.middleCols(j * kv, kv) = C[static_cast<std::size_t>(j)];
  auto s1 = svd_trunc(M1, tol, big);
  // mode 2: [C_1^T, ..., C_ell^T] (kv x ell*ku)
  MatS M2(kv, ell * ku);
  for (Index j = 0; j < ell; ++j) M2.middleCols(j * ku, ku) = C[static_cast<std::size_t>(j)].transpose();
  auto s2 = svd_trunc(M2, tol, big);

  Index r1 = s1.rank();
  Index r2 = s2.rank();
  bool capped = false;
  if (r1 > r_max) {
    r1 = r_max;
    capped = true;
  }
  if (r2 > r_max) {
    r2 = r_max;
    capped = true;
  }
  const MatS U1 = s1.U.leftCols(r1);
  const MatS U2 = s2.U.leftCols(r2);
  MatS Ut = qu.Q * U1;
  MatS Vt = qv.Q * U2;
  std::vector<MatS> sigma;
  sigma.reserve(static_cast<std::size_t>(ell));
  const MatS U1h = U1.adjoint();
  const MatS U2c = U2.conjugate();
  for (Index j = 0; j < ell; ++j) sigma.push_back(U1h * C[static_cast<std::size_t>(j)] * U2c);
  if (info) {
    info->r_hat_out = r1;
    info->r_tilde_out = r2;
    info->capped = capped;
  }
  return BlockLowRank<Scalar>(std::move(Ut), std::move(Vt), std::move(sigma), true);
}

template <typename Scalar>
struct Orthonormalized {
  BlockLowRank<Scalar> W;
  Mat<Scalar> L;  // lower triangular, W_in = W_out L^H
};

/// W L^{-H} with L = chol(W^H W).
template <typename Scalar>
Orthonormalized<Scalar> orthonormalize_cholesky(const BlockLowRank<Scalar>& W) {
  Mat<Scalar> G = block_inner(W, W);
  G = (0.5 * (G + G.adjoint())).eval();
  Mat<Scalar> L;
  try {
    L = cholesky(G);
  } catch (const NotPositiveDefinite& e) {
    throw GramNotSPD(e.what());
  }
  // B = L^{-H}: solve L^H B = I
  const Mat<Scalar> B =
      L.adjoint().template triangularView<Eigen::Upper>().solve(Mat<Scalar>::Identity(W.ell(), W.ell()));
  return {right_multiply(W, B), L};
}

template <typename Scalar>
struct ReducedBasis {
  BlockLowRank<Scalar> W;  // orthonormal columns, possibly fewer than the input
  Index dropped = 0;
};

/// Orthonormal basis of span(W) from the eigendecomposition of its Gram
/// matrix; directions with eigenvalue below rel_tol * lambda_max are
/// discarded. Used when Cholesky orthonormalization fails.
template <typename Scalar>
ReducedBasis<Scalar> orthonormalize_svd(const BlockLowRank<Scalar>& W, double rel_tol = 1e-12) {
  Mat<Scalar> G = block_inner(W, W);
  G = (0.5 * (G + G.adjoint())).eval();
  ReducedBasis<Scalar> out;
  if (W.ell() == 0) {
    out.W = W;
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(G);
  const VecD& ev = es.eigenvalues();
  const double top = std::max(ev(ev.size() - 1), 0.0);
  std::vector<Index> keep;
  for (Index i = ev.size() - 1; i >= 0; --i) {
    if (top > 0.0 && ev(i) > rel_tol * top) keep.push_back(i);
  }
  Mat<Scalar> B(W.ell(), static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    B.col(static_cast<Index>(c)) = es.eigenvectors().col(keep[c]) / std::sqrt(ev(keep[c]));
  }
  out.W = right_multiply(W, B);
  out.dropped = W.ell() - B.cols();
  return out;
}

// ---------------------------------------------------------------------------
// Binary container: 8-byte magic "KRBLR001", six little-endian int64 header
// fields (n_hat, n_tilde, r_hat, r_tilde, ell, scalar kind 0 = real,
// 1 = complex), then U, V and the ell core slices, each column-major,
// as little-endian float64 (complex entries as real, imaginary pairs).

namespace detail {
inline constexpr char kBlrMagic[8] = {'K', 'R', 'B', 'L', 'R', '0', '0', '1'};

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  v = to_little_endian(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("truncated BLR stream");
  return to_little_endian(v);
}

template <typename Scalar>
void write_matrix(std::ostream& os, const Mat<Scalar>& M) {
  for (Index i = 0; i < M.size(); ++i) {
    if constexpr (is_complex_v<Scalar>) {
      write_pod(os, M.data()[i].real());
      write_pod(os, M.data()[i].imag());
    } else {
      write_pod(os, M.data()[i]);
    }
  }
}

template <typename Scalar>
Mat<Scalar> read_matrix(std::istream& is, Index rows, Index cols) {
  Mat<Scalar> M(rows, cols);
  for (Index i = 0; i < M.size(); ++i) {
    if constexpr (is_complex_v<Scalar>) {
      const double re = read_pod<double>(is);
      const double im = read_pod<double>(is);
      M.data()[i] = Scalar(re, im);
    } else {
      M.data()[i] = read_pod<double>(is);
    }
  }
  return M;
}
}  // namespace detail

template <typename Scalar>
void write_blr(std::ostream& os, const BlockLowRank<Scalar>& W) {
  os.write(detail::kBlrMagic, 8);
  for (std::int64_t v : {static_cast<std::int64_t>(W.n_hat()), static_cast<std::int64_t>(W.n_tilde()),
                         static_cast<std::int64_t>(W.r_hat()), static_cast<std::int64_t>(W.r_tilde()),
                         static_cast<std::int64_t>(W.ell()), std::int64_t{is_complex_v<Scalar> ? 1 : 0}}) {
    detail::write_pod(os, v);
  }
  detail::write_matrix(os, W.U());
  detail::write_matrix(os, W.V());
  for (const auto& s : W.sigmas()) detail::write_matrix(os, s);
}

template <typename Scalar>
BlockLowRank<Scalar> read_blr(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kBlrMagic, 8) != 0) throw FormatError("not a BLR stream");
  std::int64_t h[6];
  for (auto& v : h) v = detail::read_pod<std::int64_t>(is);
  for (int i = 0; i < 5; ++i) {
    if (h[i] < 0 || h[i] > (std::int64_t{1} << 40)) throw FormatError("BLR header field out of range");
  }
  if (h[5] != (is_complex_v<Scalar> ? 1 : 0)) throw FormatError("BLR scalar kind does not match the requested type");
  auto U = detail::read_matrix<Scalar>(is, h[0], h[2]);
  auto V = detail::read_matrix<Scalar>(is, h[1], h[3]);
  std::vector<Mat<Scalar>> sigma;
  for (std::int64_t j = 0; j < h[4]; ++j) sigma.push_back(detail::read_matrix<Scalar>(is, h[2], h[3]));
  return BlockLowRank<Scalar>(std::move(U), std::move(V), std::move(sigma), false);
}

}  // namespace krembed
