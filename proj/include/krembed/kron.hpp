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

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "krembed/factor.hpp"

namespace krembed {

/// One term tilde (x) hat of a Kronecker-sum operator.
struct KronTerm {
  Factor tilde;  // n_tilde x n_tilde
  Factor hat;    // n_hat x n_hat
};

/// A = sum_i tilde_i (x) hat_i. Vectors of length n_hat * n_tilde are
/// identified with n_hat x n_tilde matrices X (column-major vec), on which
/// (tilde (x) hat) vec(X) = vec(hat X tilde^T).
class KroneckerSumOperator {
 public:
  KroneckerSumOperator() = default;

  explicit KroneckerSumOperator(std::vector<KronTerm> terms) : terms_(std::move(terms)) {
    if (terms_.empty()) throw OutOfRange("Kronecker-sum operator needs at least one term");
    for (const auto& t : terms_) {
      if (t.tilde.size() != terms_[0].tilde.size() || t.hat.size() != terms_[0].hat.size()) {
        throw DimensionMismatch("Kronecker terms disagree in factor sizes");
      }
    }
  }

  const std::vector<KronTerm>& terms() const { return terms_; }
  Index num_terms() const { return static_cast<Index>(terms_.size()); }
  Index n_tilde() const { return terms_.empty() ? 0 : terms_[0].tilde.size(); }
  Index n_hat() const { return terms_.empty() ? 0 : terms_[0].hat.size(); }
  Index n() const { return n_tilde() * n_hat(); }

  /// sum_i hat_i X tilde_i^T for X of size n_hat x n_tilde.
  template <typename Derived>
  Mat<typename Derived::Scalar> apply_matrix(const Eigen::MatrixBase<Derived>& X) const {
    using Scalar = typename Derived::Scalar;
    if (X.rows() != n_hat() || X.cols() != n_tilde()) throw DimensionMismatch("operator applied to wrong shape");
    Mat<Scalar> out = Mat<Scalar>::Zero(X.rows(), X.cols());
    for (const auto& t : terms_) {
      const Mat<Scalar> HX = t.hat.apply(X);
      out += t.tilde.apply(HX.transpose()).transpose();
    }
    return out;
  }

  /// A x for a dense vector x = vec(X).
  template <typename Scalar>
  Vec<Scalar> apply_vector(const Vec<Scalar>& x) const {
    if (x.size() != n()) throw DimensionMismatch("operator applied to vector of wrong length");
    const Mat<Scalar> X = Eigen::Map<const Mat<Scalar>>(x.data(), n_hat(), n_tilde());
    const Mat<Scalar> Y = apply_matrix(X);
    return Eigen::Map<const Vec<Scalar>>(Y.data(), Y.size());
  }

  /// Column-by-column A W for a dense n x m block.
  MatD apply_dense(const MatD& W) const {
    MatD out(W.rows(), W.cols());
    for (Index j = 0; j < W.cols(); ++j) out.col(j) = apply_vector<double>(W.col(j));
    return out;
  }

 private:
  std::vector<KronTerm> terms_;
};

inline constexpr Index kDefaultAssembleCap = 4000;

/// sum_i kron(tilde_i, hat_i) as an explicit n x n matrix. Oracle use only.
inline MatD assemble_dense(const KroneckerSumOperator& A, Index cap = kDefaultAssembleCap) {
  const Index n = A.n();
  if (n > cap) throw SizeOverflow("assemble_dense: n = " + std::to_string(n) + " exceeds cap " + std::to_string(cap));
  const Index nh = A.n_hat();
  const Index nt = A.n_tilde();
  MatD out = MatD::Zero(n, n);
  for (const auto& t : A.terms()) {
    const MatD Tt = t.tilde.to_dense();
    const MatD Th = t.hat.to_dense();
    for (Index j = 0; j < nt; ++j) {
      for (Index i = 0; i < nt; ++i) {
        if (Tt(i, j) == 0.0) continue;
        out.block(i * nh, j * nh, nh, nh) += Tt(i, j) * Th;
      }
    }
  }
  return out;
}

/// ||A||_2 estimate from `iters` power iterations on A^T A started at a
/// fixed deterministic vector.
inline double operator_norm_estimate(const KroneckerSumOperator& A, int iters = 20) {
  const Index n = A.n();
  VecD x(n);
  for (Index i = 0; i < n; ++i) x(i) = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(i) + 0.3);
  x.normalize();
  double est = 0.0;
  for (int it = 0; it < iters; ++it) {
    VecD y = A.apply_vector<double>(x);
    est = y.norm();
    if (est == 0.0) return 0.0;
    x = y / est;
  }
  return est;
}

}  // namespace krembed
