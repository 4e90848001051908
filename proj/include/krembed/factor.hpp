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

// Real square matrices used as Kronecker factors. A factor is tagged as
// identity, diagonal, banded or dense so that products, applications and
// shifted solves can use the cheapest representation.
//
// Banded factors use the LAPACK band layout: with kl sub- and ku
// super-diagonals, entry A(i, j) lives at band(ku + i - j, j).

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <utility>
#include <vector>

#include "krembed/dense.hpp"

namespace krembed {

class Factor {
 public:
  enum class Kind { identity, diagonal, banded, dense };

  Factor() = default;

  static Factor identity(Index n) {
    Factor f;
    f.kind_ = Kind::identity;
    f.n_ = n;
    return f;
  }

  static Factor diagonal(VecD d) {
    Factor f;
    f.kind_ = Kind::diagonal;
    f.n_ = d.size();
    f.diag_ = std::move(d);
    return f;
  }

  /// band is (kl + ku + 1) x n in LAPACK layout.
  static Factor banded(MatD band, Index kl, Index ku) {
    if (band.rows() != kl + ku + 1) throw DimensionMismatch("band storage must have kl + ku + 1 rows");
    Factor f;
    f.kind_ = Kind::banded;
    f.n_ = band.cols();
    f.kl_ = kl;
    f.ku_ = ku;
    f.band_ = std::move(band);
    return f;
  }

  /// Symmetric tridiagonal factor with the given diagonal and off-diagonal.
  static Factor tridiagonal(const VecD& diag, const VecD& off) {
    const Index n = diag.size();
    if (off.size() != std::max<Index>(n - 1, 0)) throw DimensionMismatch("off-diagonal must have n - 1 entries");
    MatD band = MatD::Zero(3, n);
    band.row(1) = diag.transpose();
    for (Index j = 1; j < n; ++j) band(0, j) = off(j - 1);      // A(j-1, j)
    for (Index j = 0; j + 1 < n; ++j) band(2, j) = off(j);      // A(j+1, j)
    return banded(std::move(band), 1, 1);
  }

  static Factor dense(MatD m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("Kronecker factors must be square");
    Factor f;
    f.kind_ = Kind::dense;
    f.n_ = m.rows();
    f.dense_ = std::move(m);
    return f;
  }

  Kind kind() const { return kind_; }
  Index size() const { return n_; }
  Index kl() const { return kind_ == Kind::banded ? kl_ : (kind_ == Kind::dense ? n_ - 1 : 0); }
  Index ku() const { return kind_ == Kind::banded ? ku_ : (kind_ == Kind::dense ? n_ - 1 : 0); }
  bool is_identity() const { return kind_ == Kind::identity; }
  const VecD& diag_values() const { return diag_; }
  const MatD& band() const { return band_; }
  const MatD& dense_values() const { return dense_; }

  double operator()(Index i, Index j) const {
    switch (kind_) {
      case Kind::identity:
        return i == j ? 1.0 : 0.0;
      case Kind::diagonal:
        return i == j ? diag_(i) : 0.0;
      case Kind::banded:
        return (i - j > kl_ || j - i > ku_) ? 0.0 : band_(ku_ + i - j, j);
      case Kind::dense:
        return dense_(i, j);
    }
    return 0.0;
  }

  MatD to_dense() const {
    switch (kind_) {
      case Kind::identity:
        return MatD::Identity(n_, n_);
      case Kind::diagonal:
        return diag_.asDiagonal();
      case Kind::dense:
        return dense_;
      case Kind::banded: {
        MatD out = MatD::Zero(n_, n_);
        for (Index j = 0; j < n_; ++j) {
          for (Index i = std::max<Index>(0, j - ku_); i <= std::min(n_ - 1, j + kl_); ++i) {
            out(i, j) = band_(ku_ + i - j, j);
          }
        }
        return out;
      }
    }
    return {};
  }

  /// F * M for an n x m block of any scalar type.
  template <typename Derived>
  Mat<typename Derived::Scalar> apply(const Eigen::MatrixBase<Derived>& M) const {
    using Scalar = typename Derived::Scalar;
    if (M.rows() != n_) throw DimensionMismatch("factor application: row count mismatch");
    switch (kind_) {
      case Kind::identity:
        return M;
      case Kind::diagonal:
        return diag_.cast<Scalar>().asDiagonal() * M;
      case Kind::dense:
        return dense_.cast<Scalar>() * M;
      case Kind::banded: {
        Mat<Scalar> out = Mat<Scalar>::Zero(n_, M.cols());
        for (Index c = 0; c < M.cols(); ++c) {
          for (Index j = 0; j < n_; ++j) {
            const Scalar mj = M(j, c);
            const Index i0 = std::max<Index>(0, j - ku_);
            const Index i1 = std::min(n_ - 1, j + kl_);
            for (Index i = i0; i <= i1; ++i) out(i, c) += band_(ku_ + i - j, j) * mj;
          }
        }
        return out;
      }
    }
    return {};
  }

  Factor scaled(double c) const {
    switch (kind_) {
      case Kind::identity:
        return c == 1.0 ? *this : diagonal(VecD::Constant(n_, c));
      case Kind::diagonal:
        return diagonal(c * diag_);
      case Kind::banded:
        return banded(c * band_, kl_, ku_);
      case Kind::dense:
        return dense(c * dense_);
    }
    return {};
  }

  /// F + c I
  Factor plus_identity(double c) const {
    if (c == 0.0) return *this;
    switch (kind_) {
      case Kind::identity:
        return diagonal(VecD::Constant(n_, 1.0 + c));
      case Kind::diagonal:
        return diagonal((diag_.array() + c).matrix());
      case Kind::banded: {
        MatD b = band_;
        b.row(ku_).array() += c;
        return banded(std::move(b), kl_, ku_);
      }
      case Kind::dense: {
        MatD d = dense_;
        d.diagonal().array() += c;
        return dense(std::move(d));
      }
    }
    return {};
  }

  friend Factor operator*(const Factor& a, const Factor& b) {
    if (a.n_ != b.n_) throw DimensionMismatch("factor product: size mismatch");
    if (a.is_identity()) return b;
    if (b.is_identity()) return a;
    if (a.kind_ == Kind::diagonal && b.kind_ == Kind::diagonal) {
      return diagonal(a.diag_.cwiseProduct(b.diag_));
    }
    if (a.kind_ == Kind::dense || b.kind_ == Kind::dense) return dense(a.apply(b.to_dense()));
    // banded (or diagonal) times banded
    const Index n = a.n_;
    const Index kl = std::min(n - 1, a.kl() + b.kl());
    const Index ku = std::min(n - 1, a.ku() + b.ku());
    if (2 * (kl + ku + 1) > n) return dense(a.apply(b.to_dense()));
    MatD band = MatD::Zero(kl + ku + 1, n);
    for (Index j = 0; j < n; ++j) {
      for (Index m = std::max<Index>(0, j - b.ku()); m <= std::min(n - 1, j + b.kl()); ++m) {
        const double bmj = b(m, j);
        if (bmj == 0.0) continue;
        for (Index i = std::max<Index>(0, m - a.ku()); i <= std::min(n - 1, m + a.kl()); ++i) {
          band(ku + i - j, j) += a(i, m) * bmj;
        }
      }
    }
    return banded(std::move(band), kl, ku);
  }

  friend Factor operator+(const Factor& a, const Factor& b) {
    if (a.n_ != b.n_) throw DimensionMismatch("factor sum: size mismatch");
    const bool a_diag = a.kind_ == Kind::identity || a.kind_ == Kind::diagonal;
    const bool b_diag = b.kind_ == Kind::identity || b.kind_ == Kind::diagonal;
    auto diag_of = [](const Factor& f) -> VecD {
      return f.kind_ == Kind::identity ? VecD::Ones(f.n_) : f.diag_;
    };
    if (a_diag && b_diag) return diagonal(diag_of(a) + diag_of(b));
    if (a.kind_ == Kind::dense || b.kind_ == Kind::dense) return dense(a.to_dense() + b.to_dense());
    const Index n = a.n_;
    const Index kl = std::max(a.kl(), b.kl());
    const Index ku = std::max(a.ku(), b.ku());
    MatD band = MatD::Zero(kl + ku + 1, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = std::max<Index>(0, j - ku); i <= std::min(n - 1, j + kl); ++i) {
        band(ku + i - j, j) = a(i, j) + b(i, j);
      }
    }
    return banded(std::move(band), kl, ku);
  }

  /// Exact structural and numerical equality (used to merge Kronecker terms).
  bool same_as(const Factor& o) const {
    if (n_ != o.n_) return false;
    if (kind_ == o.kind_) {
      switch (kind_) {
        case Kind::identity:
          return true;
        case Kind::diagonal:
          return diag_ == o.diag_;
        case Kind::banded:
          return kl_ == o.kl_ && ku_ == o.ku_ && band_ == o.band_;
        case Kind::dense:
          return dense_ == o.dense_;
      }
    }
    return to_dense() == o.to_dense();
  }

  bool is_symmetric() const {
    if (kind_ == Kind::identity || kind_ == Kind::diagonal) return true;
    const MatD d = to_dense();
    return d == d.transpose();
  }

 private:
  Kind kind_ = Kind::identity;
  Index n_ = 0;
  Index kl_ = 0;
  Index ku_ = 0;
  VecD diag_;
  MatD band_;
  MatD dense_;
};

/// Solver for (a F + mu I) X = B with complex a, mu; factorized once.
class ShiftedSolver {
 public:
  ShiftedSolver(const Factor& F, Complex a, Complex mu) : kind_(F.kind()), n_(F.size()) {
    switch (kind_) {
      case Factor::Kind::identity:
      case Factor::Kind::diagonal: {
        const VecD d = kind_ == Factor::Kind::identity ? VecD::Ones(n_) : F.diag_values();
        inv_diag_.resize(n_);
        for (Index i = 0; i < n_; ++i) {
          const Complex v = a * d(i) + mu;
          if (v == Complex(0.0) || !std::isfinite(std::abs(v))) throw SingularShiftedSolve("zero pivot in diagonal shifted solve");
          inv_diag_(i) = 1.0 / v;
        }
        break;
      }
      case Factor::Kind::banded: {
        kl_ = F.kl();
        ku_ = F.ku();
        // LAPACK gbtrf storage needs kl extra rows for fill-in
        ab_ = MatC::Zero(2 * kl_ + ku_ + 1, n_);
        ab_.bottomRows(kl_ + ku_ + 1) = a * F.band().cast<Complex>();
        ab_.row(kl_ + ku_).array() += mu;
        ipiv_.resize(static_cast<std::size_t>(n_));
        const lapack_int info = LAPACKE_zgbtrf(LAPACK_COL_MAJOR, static_cast<lapack_int>(n_), static_cast<lapack_int>(n_),
                                               static_cast<lapack_int>(kl_), static_cast<lapack_int>(ku_), ab_.data(),
                                               static_cast<lapack_int>(ab_.rows()), ipiv_.data());
        if (info != 0) throw SingularShiftedSolve("banded shifted matrix is singular");
        check_pivots_banded();
        break;
      }
      case Factor::Kind::dense: {
        MatC M = a * F.dense_values().cast<Complex>();
        M.diagonal().array() += mu;
        lu_.compute(M);
        const VecC d = lu_.matrixLU().diagonal();
        const double big = d.cwiseAbs().maxCoeff();
        if (!(d.cwiseAbs().minCoeff() > 1e3 * std::numeric_limits<double>::epsilon() * big)) {
          throw SingularShiftedSolve("dense shifted matrix is numerically singular");
        }
        break;
      }
    }
  }

  MatC solve(const MatC& B) const {
    if (B.rows() != n_) throw DimensionMismatch("shifted solve: row count mismatch");
    switch (kind_) {
      case Factor::Kind::identity:
      case Factor::Kind::diagonal:
        return inv_diag_.asDiagonal() * B;
      case Factor::Kind::banded: {
        MatC X = B;
        if (X.cols() == 0) return X;
        const lapack_int info = LAPACKE_zgbtrs(LAPACK_COL_MAJOR, 'N', static_cast<lapack_int>(n_), static_cast<lapack_int>(kl_),
                                               static_cast<lapack_int>(ku_), static_cast<lapack_int>(X.cols()), ab_.data(),
                                               static_cast<lapack_int>(ab_.rows()), ipiv_.data(), X.data(),
                                               static_cast<lapack_int>(n_));
        if (info != 0) throw SingularShiftedSolve("banded triangular solve failed");
        return X;
      }
      case Factor::Kind::dense:
        return lu_.solve(B);
    }
    return {};
  }

 private:
  void check_pivots_banded() const {
    double big = 0.0, small = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n_; ++j) {
      const double v = std::abs(ab_(kl_ + ku_, j));
      big = std::max(big, v);
      small = std::min(small, v);
    }
    if (!(small > 1e3 * std::numeric_limits<double>::epsilon() * big)) {
      throw SingularShiftedSolve("banded shifted matrix is numerically singular");
    }
  }

  Factor::Kind kind_;
  Index n_;
  Index kl_ = 0;
  Index ku_ = 0;
  VecC inv_diag_;
  MatC ab_;
  std::vector<lapack_int> ipiv_;
  Eigen::PartialPivLU<MatC> lu_;
};

// ---------------------------------------------------------------------------
// Spectral intervals of symmetric factors

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

namespace detail {
/// Number of eigenvalues of the symmetric tridiagonal (d, e) below x.
inline Index sturm_count(const VecD& d, const VecD& e, double x) {
  Index count = 0;
  double q = 1.0;
  const double tiny = std::numeric_limits<double>::min();
  for (Index i = 0; i < d.size(); ++i) {
    const double e2 = i > 0 ? e(i - 1) * e(i - 1) : 0.0;
    q = d(i) - x - (i > 0 ? e2 / q : 0.0);
    if (q == 0.0) q = -tiny;
    if (q < 0.0) ++count;
  }
  return count;
}

/// k-th smallest eigenvalue (0-based) by bisection.
inline double tridiag_eigenvalue(const VecD& d, const VecD& e, Index k) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Index i = 0; i < d.size(); ++i) {
    const double r = (i > 0 ? std::abs(e(i - 1)) : 0.0) + (i + 1 < d.size() ? std::abs(e(i)) : 0.0);
    lo = std::min(lo, d(i) - r);
    hi = std::max(hi, d(i) + r);
  }
  const double scale = std::max(std::abs(lo), std::abs(hi));
  lo -= 1e-14 * scale + 1e-300;
  hi += 1e-14 * scale + 1e-300;
  for (int it = 0; it < 200 && hi - lo > 4 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sturm_count(d, e, mid) > k) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// [lambda_min, lambda_max] of a symmetric factor. Tridiagonal factors use
/// Sturm bisection, other banded or dense factors a dense eigensolve.
inline Interval spectral_interval(const Factor& F) {
  const Index n = F.size();
  if (n == 0) throw DimensionMismatch("empty factor has no spectrum");
  switch (F.kind()) {
    case Factor::Kind::identity:
      return {1.0, 1.0};
    case Factor::Kind::diagonal:
      return {F.diag_values().minCoeff(), F.diag_values().maxCoeff()};
    case Factor::Kind::banded:
      if (F.kl() == 1 && F.ku() == 1) {
        const VecD d = F.band().row(1).transpose();
        const VecD e = F.band().row(2).head(n - 1).transpose();
        return {detail::tridiag_eigenvalue(d, e, 0), detail::tridiag_eigenvalue(d, e, n - 1)};
      }
      [[fallthrough]];
    case Factor::Kind::dense: {
      Eigen::SelfAdjointEigenSolver<MatD> es(F.to_dense(), Eigen::EigenvaluesOnly);
      return {es.eigenvalues()(0), es.eigenvalues()(n - 1)};
    }
  }
  return {};
}

}  // namespace krembed
