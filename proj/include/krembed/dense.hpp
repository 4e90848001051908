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

// Small dense kernels shared by the rest of the library. Everything is
// templated on the scalar type (double or std::complex<double>) and built on
// Eigen. Matrices are stored column-major, which is also the storage order
// assumed by vec() / mat() throughout.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <complex>
#include <type_traits>
#include <vector>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "krembed/errors.hpp"

namespace krembed {

using Index = Eigen::Index;
using Complex = std::complex<double>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using MatC = Mat<Complex>;
using VecD = Vec<double>;
using VecC = Vec<Complex>;

template <typename T>
struct is_complex : std::false_type {};
template <typename T>
struct is_complex<std::complex<T>> : std::true_type {};
template <typename T>
inline constexpr bool is_complex_v = is_complex<T>::value;

/// conj() that stays real for real scalars.
template <typename Scalar>
inline Scalar conj_scalar(const Scalar& x) {
  if constexpr (is_complex_v<Scalar>) {
    return std::conj(x);
  } else {
    return x;
  }
}

template <typename Scalar>
struct QrResult {
  Mat<Scalar> Q;  // m x min(m,n), orthonormal columns
  Mat<Scalar> R;  // min(m,n) x n, upper trapezoidal
};

/// Economy Householder QR. Wide inputs (m < n) are accepted and yield an
/// m x m Q with an m x n upper trapezoidal R.
template <typename Derived>
QrResult<typename Derived::Scalar> qr_econ(const Eigen::MatrixBase<Derived>& M) {
  using Scalar = typename Derived::Scalar;
  const Index m = M.rows();
  const Index n = M.cols();
  const Index k = std::min(m, n);
  QrResult<Scalar> out;
  if (k == 0) {
    out.Q = Mat<Scalar>::Zero(m, 0);
    out.R = Mat<Scalar>::Zero(0, n);
    return out;
  }
  Eigen::HouseholderQR<Mat<Scalar>> qr(M.derived());
  out.Q = qr.householderQ() * Mat<Scalar>::Identity(m, k);
  out.R = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
  return out;
}

/// Number of leading singular values kept by the relative Frobenius tail
/// rule: the smallest r with sqrt(sum_{i>r} s_i^2) <= tol * ||s||_2, capped
/// at r_max. Ties are resolved by index order.
inline Index truncation_rank(const VecD& s, double tol, Index r_max) {
  const Index n = s.size();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += s(i) * s(i);
  if (total == 0.0) return 0;
  const double bound = tol * tol * total;
  // accumulate the tail from the small end to avoid cancellation
  Index r = n;
  double tail = 0.0;
  while (r > 0) {
    const double next = tail + s(r - 1) * s(r - 1);
    if (next > bound) break;
    tail = next;
    --r;
  }
  return std::min(r, r_max);
}

template <typename Scalar>
struct SvdResult {
  Mat<Scalar> U;
  VecD S;  // nonincreasing
  Mat<Scalar> V;
  Index rank() const { return S.size(); }
};

namespace detail {

inline lapack_int lapack_svd(char job, lapack_int m, lapack_int n, double* a, double* s, double* u, lapack_int ldu,
                             double* vt, lapack_int ldvt) {
  return LAPACKE_dgesdd(LAPACK_COL_MAJOR, job, m, n, a, m, s, u, ldu, vt, ldvt);
}
inline lapack_int lapack_svd(char job, lapack_int m, lapack_int n, Complex* a, double* s, Complex* u, lapack_int ldu,
                             Complex* vt, lapack_int ldvt) {
  return LAPACKE_zgesdd(LAPACK_COL_MAJOR, job, m, n, a, m, s, u, ldu, vt, ldvt);
}
inline lapack_int lapack_svd_qr(char job, lapack_int m, lapack_int n, double* a, double* s, double* u, lapack_int ldu,
                                double* vt, lapack_int ldvt) {
  std::vector<double> superb(static_cast<std::size_t>(std::max<lapack_int>(1, std::min(m, n))));
  return LAPACKE_dgesvd(LAPACK_COL_MAJOR, job, job, m, n, a, m, s, u, ldu, vt, ldvt, superb.data());
}
inline lapack_int lapack_svd_qr(char job, lapack_int m, lapack_int n, Complex* a, double* s, Complex* u,
                                lapack_int ldu, Complex* vt, lapack_int ldvt) {
  std::vector<double> superb(static_cast<std::size_t>(std::max<lapack_int>(1, std::min(m, n))));
  return LAPACKE_zgesvd(LAPACK_COL_MAJOR, job, job, m, n, a, m, s, u, ldu, vt, ldvt, superb.data());
}

}  // namespace detail

/// Thin SVD through LAPACK (divide and conquer, with the QR-iteration
/// driver as fallback). Eigen's BDCSVD is avoided: in 3.4 it can return
/// factors with reconstruction errors far above machine precision.
template <typename Derived>
SvdResult<typename Derived::Scalar> svd_thin(const Eigen::MatrixBase<Derived>& M, bool vectors = true) {
  using Scalar = typename Derived::Scalar;
  const Index m = M.rows();
  const Index n = M.cols();
  const Index k = std::min(m, n);
  SvdResult<Scalar> out;
  out.S = VecD::Zero(k);
  out.U = Mat<Scalar>::Zero(m, vectors ? k : 0);
  out.V = Mat<Scalar>::Zero(n, vectors ? k : 0);
  if (k == 0) return out;
  const auto lm = static_cast<lapack_int>(m);
  const auto ln = static_cast<lapack_int>(n);
  const char job = vectors ? 'S' : 'N';
  Mat<Scalar> Vt = Mat<Scalar>::Zero(vectors ? k : 1, vectors ? n : 1);
  Mat<Scalar> Uw = Mat<Scalar>::Zero(vectors ? m : 1, vectors ? k : 1);
  Mat<Scalar> A = M.derived();
  lapack_int info = detail::lapack_svd(job, lm, ln, A.data(), out.S.data(), Uw.data(), static_cast<lapack_int>(Uw.rows()),
                                       Vt.data(), static_cast<lapack_int>(Vt.rows()));
  if (info > 0) {
    A = M.derived();
    info = detail::lapack_svd_qr(job, lm, ln, A.data(), out.S.data(), Uw.data(), static_cast<lapack_int>(Uw.rows()),
                                 Vt.data(), static_cast<lapack_int>(Vt.rows()));
  }
  if (info != 0) throw OutOfRange("svd: LAPACK driver failed to converge (info " + std::to_string(info) + ")");
  if (vectors) {
    out.U = std::move(Uw);
    out.V = Vt.adjoint();
  }
  return out;
}

/// Thin SVD truncated by truncation_rank().
template <typename Derived>
SvdResult<typename Derived::Scalar> svd_trunc(const Eigen::MatrixBase<Derived>& M,
                                              double tol, Index r_max) {
  using Scalar = typename Derived::Scalar;
  if (r_max < 1) throw OutOfRange("svd_trunc: r_max must be >= 1");
  if (tol < 0) throw OutOfRange("svd_trunc: tol must be >= 0");
  SvdResult<Scalar> out;
  const Index m = M.rows();
  const Index n = M.cols();
  if (m == 0 || n == 0) {
    out.U = Mat<Scalar>::Zero(m, 0);
    out.V = Mat<Scalar>::Zero(n, 0);
    out.S = VecD::Zero(0);
    return out;
  }
  const auto svd = svd_thin(M);
  const Index r = truncation_rank(svd.S, tol, r_max);
  out.U = svd.U.leftCols(r);
  out.V = svd.V.leftCols(r);
  out.S = svd.S.head(r);
  return out;
}

/// Lower Cholesky factor L with L L^H = G.
template <typename Derived>
Mat<typename Derived::Scalar> cholesky(const Eigen::MatrixBase<Derived>& G) {
  using Scalar = typename Derived::Scalar;
  if (G.rows() != G.cols()) throw DimensionMismatch("cholesky: matrix is not square");
  if (G.rows() == 0) return Mat<Scalar>::Zero(0, 0);
  Eigen::LLT<Mat<Scalar>> llt(G.derived());
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("Gram matrix is not positive definite");
  Mat<Scalar> L = llt.matrixL();
  // pivots at rounding level relative to the largest diagonal entry count as singular
  const double dmax = G.diagonal().real().cwiseAbs().maxCoeff();
  const double floor = 10.0 * static_cast<double>(G.rows()) * std::numeric_limits<double>::epsilon() * dmax;
  for (Index i = 0; i < L.rows(); ++i) {
    const double p = std::real(L(i, i));
    if (!(p * p > floor) || !std::isfinite(p)) throw NotPositiveDefinite("Cholesky pivot is not positive");
  }
  return L;
}

template <typename Scalar>
struct GenEigResult {
  VecD theta;     // ascending
  Mat<Scalar> C;  // Btil-orthonormal eigenvectors
};

/// Smallest `want` eigenpairs of the Hermitian pencil (Atil, Btil).
template <typename DerivedA, typename DerivedB>
GenEigResult<typename DerivedA::Scalar> eig_sym_gen(const Eigen::MatrixBase<DerivedA>& Atil,
                                                    const Eigen::MatrixBase<DerivedB>& Btil,
                                                    Index want) {
  using Scalar = typename DerivedA::Scalar;
  const Index k = Atil.rows();
  if (Atil.cols() != k || Btil.rows() != k || Btil.cols() != k) {
    throw DimensionMismatch("eig_sym_gen: pencil dimensions disagree");
  }
  if (want < 0 || want > k) throw OutOfRange("eig_sym_gen: want must lie in [0, k]");
  GenEigResult<Scalar> out;
  if (k == 0) {
    out.theta = VecD::Zero(0);
    out.C = Mat<Scalar>::Zero(0, 0);
    return out;
  }
  Eigen::LLT<Mat<Scalar>> llt(Btil.derived());
  if (llt.info() != Eigen::Success) throw BtilNotSPD("projected Gram matrix is not positive definite");
  // reduce to a standard problem with the Cholesky factor: L^{-1} A L^{-H}
  Mat<Scalar> L = llt.matrixL();
  for (Index i = 0; i < k; ++i) {
    if (!(std::real(L(i, i)) > 0.0)) throw BtilNotSPD("projected Gram matrix is singular");
  }
  Mat<Scalar> tmp = llt.matrixL().solve(Atil.derived());
  Mat<Scalar> H = llt.matrixL().solve(tmp.adjoint()).adjoint();
  H = (H + H.adjoint()).eval() * 0.5;
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(H);
  if (es.info() != Eigen::Success) throw BtilNotSPD("projected eigenproblem did not converge");
  out.theta = es.eigenvalues().head(want);
  out.C = llt.matrixU().solve(es.eigenvectors().leftCols(want));
  return out;
}

/// Largest singular value.
template <typename Derived>
double two_norm(const Eigen::MatrixBase<Derived>& M) {
  if (M.rows() == 0 || M.cols() == 0) return 0.0;
  return svd_thin(M, false).S(0);
}

/// Smallest singular value of a matrix with at least as many rows as columns.
template <typename Derived>
double min_singular_value(const Eigen::MatrixBase<Derived>& M) {
  if (M.rows() == 0 || M.cols() == 0) return 0.0;
  const VecD s = svd_thin(M, false).S;
  return s(s.size() - 1);
}

/// Orthonormal basis of the range of M via thin QR (columns assumed
/// independent).
template <typename Derived>
Mat<typename Derived::Scalar> orth(const Eigen::MatrixBase<Derived>& M) {
  return qr_econ(M).Q;
}

}  // namespace krembed
