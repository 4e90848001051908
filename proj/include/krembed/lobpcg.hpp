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


// Block LOBPCG for the smallest eigenvalues of a symmetric Kronecker-sum
// operator, with every iterate stored in block low-rank form and truncated
// after each recombination.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "krembed/blr.hpp"
#include "krembed/parallel.hpp"
#include "krembed/problems.hpp"
#include "krembed/rng.hpp"
#include "krembed/sylvester.hpp"

namespace krembed {

/// Inverse of M = I (x) Kh + Kt (x) I applied with a fixed number of ADI
/// steps, i.e. an approximate solve of Kh Y + Y Kt^T = mat(w). All columns
/// of a block share the bases U and V, so the step recursion runs once on
/// each basis and the cores are repeated block-diagonally.
class KronSumPreconditioner {
 public:
  KronSumPreconditioner(const KroneckerSumOperator& M, int adi_iterations) : steps_(adi_iterations) {
    if (adi_iterations < 1) throw OutOfRange("preconditioner needs at least one ADI iteration");
    if (M.num_terms() != 2) throw StructureMismatch("preconditioner operator must have exactly two terms");
    std::optional<Factor> kh, kt;
    for (const auto& t : M.terms()) {
      if (t.tilde.is_identity() && !kh) {
        kh = t.hat;
      } else if (t.hat.is_identity() && !kt) {
        kt = t.tilde;
      }
    }
    if (!kh || !kt) throw StructureMismatch("preconditioner operator must be I (x) Kh + Kt (x) I");
    const Interval ih = spectral_interval(*kh);
    const Interval it = spectral_interval(*kt);
    if (!(ih.lo > 0.0) || !(it.lo > 0.0)) throw DegenerateInterval("preconditioner factors must be positive definite");
    plan_.emplace(AffineFactor{*kh, 1.0, 0.0}, AffineFactor{*kt, 1.0, 0.0}, adi_shifts(ih, it, adi_iterations));
  }

  /// Built from the (I, K), (K, I) pair of an operator.
  static KronSumPreconditioner from_operator(const KroneckerSumOperator& A, int adi_iterations) {
    const auto [i, j] = detail::find_laplacian_pair(A);
    if (i < 0) throw StructureMismatch("operator has no (I, K), (K, I) pair for a default preconditioner");
    const auto& t = A.terms();
    return KronSumPreconditioner(KroneckerSumOperator({t[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(j)]}),
                                 adi_iterations);
  }

  int steps() const { return steps_; }
  const AdiPlan& plan() const { return *plan_; }

  /// Untruncated result; ranks grow by a factor `steps`.
  BlrD apply(const BlrD& W, unsigned threads = 1) const {
    const Index rh = W.r_hat(), rt = W.r_tilde();
    MatD Uo(W.n_hat(), steps_ * rh);
    MatD Vo(W.n_tilde(), steps_ * rt);
    std::vector<Complex> d(static_cast<std::size_t>(steps_));
    parallel_for(2, threads, [&](std::size_t side) {
      MatC Wk = (side == 0 ? W.U() : W.V()).cast<Complex>();
      for (int k = 0; k < steps_; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        const ShiftPair& sp = plan_->shifts()[ks % plan_->num_shifts()];
        const Complex dk = sp.beta - sp.alpha;
        if (side == 0) {
          const MatC Vk = plan_->solve_left(ks, Wk);
          Wk += dk * Vk;
          Uo.middleCols(k * rh, rh) = (dk * Vk).real();
          d[ks] = dk;
        } else {
          const MatC Vk = -plan_->solve_right(ks, Wk);
          Wk -= dk * Vk;
          Vo.middleCols(k * rt, rt) = Vk.real();
        }
      }
    });
    std::vector<MatD> sigma;
    sigma.reserve(static_cast<std::size_t>(W.ell()));
    for (Index j = 0; j < W.ell(); ++j) sigma.push_back(detail::block_diag_repeat(W.sigma(j), steps_));
    return BlrD(std::move(Uo), std::move(Vo), std::move(sigma), false);
  }

 private:
  int steps_;
  std::optional<AdiPlan> plan_;
};

/// M^{-1} W followed by truncation.
inline BlrD precond_apply(const KronSumPreconditioner& M, const BlrD& W, double eps, Index r_max,
                          unsigned threads = 1) {
  return truncate(M.apply(W, threads), eps, r_max);
}

enum class ConvergenceMode { relative, absolute };

struct LobpcgConfig {
  Index k = 4;
  Index ell = 6;
  double trunc_eps = 1e-7;
  Index r_max = 50;
  int max_iter = 200;
  double conv_tol = 1e-7;
  ConvergenceMode conv_mode = ConvergenceMode::relative;
  int adi_iterations = 8;
  std::optional<KroneckerSumOperator> precond;  // M; default from A's (I, K), (K, I) pair
  double shift = 0.0;                           // sigma: A + sigma I is iterated
  int norm_iterations = 20;
  std::uint64_t norm_seed = 0x6e6f726d;
  double gram_drop_tol = 1e-12;
  unsigned threads = 1;

  void validate() const {
    if (k < 1 || ell < k) throw OutOfRange("lobpcg: need 1 <= k <= ell");
    if (trunc_eps < 0.0) throw OutOfRange("lobpcg: trunc_eps must be >= 0");
    if (r_max < 1) throw OutOfRange("lobpcg: r_max must be >= 1");
    if (max_iter < 0) throw OutOfRange("lobpcg: max_iter must be >= 0");
    if (adi_iterations < 1) throw OutOfRange("lobpcg: adi_iterations must be >= 1");
  }
};

struct LobpcgIteration {
  int iter = 0;
  VecD ritz;       // Theta of the shifted operator, ascending
  VecD residuals;  // ||A x_j - theta_j x_j||
  Index rank_x_pre = 0;
  Index rank_x = 0;
  Index rank_r = 0;
  Index rank_p = 0;
  double orth_error = 0.0;  // max |X^T X - I|
  bool fallback = false;    // an SVD reduction replaced a Cholesky step
};

struct LobpcgResult {
  VecD values;  // Theta - shift for the k wanted pairs
  BlrD vectors;
  VecD residuals;
  bool converged = false;
  int iterations = 0;
  double norm_estimate = 0.0;
  double threshold = 0.0;
  std::vector<LobpcgIteration> history;
  int drift_violations = 0;
  double seconds = 0.0;
};

/// ||A||_2 by power iteration on vectors of length n (A symmetric).
inline double power_norm_estimate(const KroneckerSumOperator& A, int iterations, std::uint64_t seed) {
  CounterRng rng(seed);
  VecD x(A.n());
  for (Index i = 0; i < x.size(); ++i) x(i) = rng.normal(static_cast<std::uint64_t>(i));
  x.normalize();
  double est = 0.0;
  for (int it = 0; it < iterations; ++it) {
    VecD y = A.apply_vector<double>(x);
    est = y.norm();
    if (est == 0.0) return 0.0;
    x = y / est;
  }
  return est;
}

struct RitzBlocks {
  MatD C1, C2, C3;
  VecD theta;
  bool reduced = false;  // solved on a truncated basis of the projected Gram
};

namespace detail {

/// Smallest `want` pairs of (At, Bt); when Bt is not numerically SPD the
/// pencil is restricted to the dominant eigenspace of Bt.
inline GenEigResult<double> projected_eig(const MatD& At, const MatD& Bt, Index want, double drop, bool* reduced) {
  try {
    return eig_sym_gen(At, Bt, want);
  } catch (const BtilNotSPD&) {
  }
  if (reduced) *reduced = true;
  Eigen::SelfAdjointEigenSolver<MatD> eb(Bt);
  const VecD& ev = eb.eigenvalues();
  const double top = ev(ev.size() - 1);
  std::vector<Index> keep;
  for (Index i = ev.size() - 1; i >= 0; --i) {
    if (top > 0.0 && ev(i) > drop * top) keep.push_back(i);
  }
  if (static_cast<Index>(keep.size()) < want) throw BtilNotSPD("projected Gram matrix has too small a numerical rank");
  MatD Q(Bt.rows(), static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    Q.col(static_cast<Index>(c)) = eb.eigenvectors().col(keep[c]) / std::sqrt(ev(keep[c]));
  }
  MatD H = Q.transpose() * At * Q;
  H = (0.5 * (H + H.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<MatD> eh(H);
  GenEigResult<double> out;
  out.theta = eh.eigenvalues().head(want);
  out.C = Q * eh.eigenvectors().leftCols(want);
  return out;
}

inline RitzBlocks rayleigh_ritz_blocks(const std::vector<const BlrD*>& S, const std::vector<const BlrD*>& AS,
                                       Index want, double drop, unsigned threads) {
  const std::size_t m = S.size();
  std::vector<Index> off(m + 1, 0);
  for (std::size_t i = 0; i < m; ++i) off[i + 1] = off[i] + S[i]->ell();
  const Index N = off[m];
  MatD At(N, N), Bt(N, N);
  parallel_for(m * m, threads, [&](std::size_t t) {
    const std::size_t i = t / m, j = t % m;
    if (j < i) return;
    At.block(off[i], off[j], S[i]->ell(), S[j]->ell()) = block_inner(*S[i], *AS[j]);
    Bt.block(off[i], off[j], S[i]->ell(), S[j]->ell()) = block_inner(*S[i], *S[j]);
  });
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      At.block(off[i], off[j], S[i]->ell(), S[j]->ell()) = At.block(off[j], off[i], S[j]->ell(), S[i]->ell()).transpose();
      Bt.block(off[i], off[j], S[i]->ell(), S[j]->ell()) = Bt.block(off[j], off[i], S[j]->ell(), S[i]->ell()).transpose();
    }
  }
  At = (0.5 * (At + At.transpose())).eval();
  Bt = (0.5 * (Bt + Bt.transpose())).eval();
  RitzBlocks out;
  const auto ge = projected_eig(At, Bt, want, drop, &out.reduced);
  out.theta = ge.theta;
  auto rows = [&](std::size_t b) { return b < m ? MatD(ge.C.middleRows(off[b], S[b]->ell())) : MatD(0, want); };
  out.C1 = rows(0);
  out.C2 = rows(1);
  out.C3 = rows(2);
  return out;
}

/// Cholesky orthonormalization with the Gram-eigenvalue fallback.
inline BlrD orthonormalize_block(const BlrD& W, double drop, bool* fallback) {
  if (W.ell() == 0) return W;
  try {
    return orthonormalize_cholesky(W).W;
  } catch (const GramNotSPD&) {
    if (fallback) *fallback = true;
    return orthonormalize_svd(W, drop).W;
  }
}

inline double orthonormality_error(const BlrD& X) {
  const MatD G = block_inner(X, X);
  return (G - MatD::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

inline BlrD residual_block(const BlrD& AX, const BlrD& X, const VecD& theta) {
  const MatD negTheta = -MatD(theta.asDiagonal());
  return add(AX, right_multiply(X, negTheta));
}

}  // namespace detail

/// Rayleigh-Ritz on span[S1, S2, S3]; empty blocks (ell = 0) are skipped.
/// Returns the ell(S1) smallest pairs with C partitioned by block rows.
inline RitzBlocks rayleigh_ritz_3block(const KroneckerSumOperator& A, const BlrD& S1, const BlrD& S2, const BlrD& S3) {
  std::vector<BlrD> AS;
  std::vector<const BlrD*> S;
  for (const BlrD* b : {&S1, &S2, &S3}) {
    if (b->ell() == 0 && b != &S1) continue;
    S.push_back(b);
  }
  AS.reserve(S.size());
  for (const BlrD* b : S) AS.push_back(apply_operator(A, *b));
  std::vector<const BlrD*> ASp;
  for (const auto& a : AS) ASp.push_back(&a);
  RitzBlocks rb = detail::rayleigh_ritz_blocks(S, ASp, S1.ell(), 0.0, 1);
  // map the compacted row partition back onto (S1, S2, S3)
  if (S2.ell() == 0) {
    rb.C3 = rb.C2;
    rb.C2 = MatD(0, S1.ell());
  }
  if (S3.ell() == 0) rb.C3 = MatD(0, S1.ell());
  return rb;
}

/// Low-rank LOBPCG starting from the columns of X0.
inline LobpcgResult lobpcg_lowrank(const KroneckerSumOperator& A_in, const LobpcgConfig& cfg, const BlrD& X0) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (X0.ell() != cfg.ell) throw DimensionMismatch("lobpcg: X0 must have ell columns");
  if (X0.n_hat() != A_in.n_hat() || X0.n_tilde() != A_in.n_tilde()) throw DimensionMismatch("lobpcg: X0 grid mismatch");
  const KroneckerSumOperator A = cfg.shift != 0.0 ? shift_operator(A_in, cfg.shift, true) : A_in;
  const KronSumPreconditioner M = cfg.precond ? KronSumPreconditioner(*cfg.precond, cfg.adi_iterations)
                                              : KronSumPreconditioner::from_operator(A, cfg.adi_iterations);
  const double eps = cfg.trunc_eps;
  const Index rmax = cfg.r_max;
  const double drop = cfg.gram_drop_tol;
  auto T = [&](const BlrD& W) { return truncate(W, eps, rmax); };

  LobpcgResult out;
  out.norm_estimate = power_norm_estimate(A, cfg.norm_iterations, cfg.norm_seed);
  out.threshold = cfg.conv_mode == ConvergenceMode::relative ? cfg.conv_tol * out.norm_estimate : cfg.conv_tol;

  // Lines 1-3
  bool fb = false;
  BlrD X = detail::orthonormalize_block(X0, drop, &fb);
  if (X.ell() < cfg.ell) throw RankDeficient("lobpcg: starting block is numerically rank deficient");
  BlrD AX = apply_operator(A, X);
  RitzBlocks rb = detail::rayleigh_ritz_blocks({&X}, {&AX}, cfg.ell, drop, cfg.threads);
  VecD theta = rb.theta;
  X = right_multiply(X, rb.C1);
  AX = right_multiply(AX, rb.C1);
  BlrD P(MatD::Zero(X.n_hat(), 0), MatD::Zero(X.n_tilde(), 0), {}, true);
  Index rank_p = 0;
  Index pending_pre = X.max_rank();
  BlrD Xr = X;  // Ritz vectors of the last projection, before the Line 13 truncation

  for (int it = 1;; ++it) {
    LobpcgIteration rec;
    rec.iter = it;
    rec.ritz = theta;
    rec.rank_x = X.max_rank();
    rec.rank_p = rank_p;
    rec.orth_error = detail::orthonormality_error(X);
    const BlrD resid = detail::residual_block(AX, X, theta);
    rec.residuals = it == 1 ? resid.column_norms() : detail::residual_block(apply_operator(A, Xr), Xr, theta).column_norms();
    rec.fallback = fb;
    fb = false;
    bool done = true;
    for (Index j = 0; j < cfg.k; ++j) done = done && rec.residuals(j) <= out.threshold;
    // soft drift bound against the previous 10 iterations
    {
      double prev_min = std::numeric_limits<double>::infinity();
      const std::size_t h = out.history.size();
      for (std::size_t q = h > 10 ? h - 10 : 0; q < h; ++q) prev_min = std::min(prev_min, out.history[q].ritz.minCoeff());
      if (theta.minCoeff() > prev_min + 10.0 * eps * theta.cwiseAbs().maxCoeff()) ++out.drift_violations;
    }
    rec.rank_x_pre = pending_pre;
    out.history.push_back(rec);
    out.iterations = it - 1;
    if (done) {
      out.converged = true;
      break;
    }
    if (it > cfg.max_iter) break;

    // Line 5: the residual block is truncated before and after M^{-1}
    BlrD R = precond_apply(M, T(resid), eps, rmax, cfg.threads);
    // Lines 6-7
    R = detail::orthonormalize_block(R, drop, &fb);
    if (P.ell() > 0) P = detail::orthonormalize_block(P, drop, &fb);
    // Lines 8-11
    const BlrD AR = apply_operator(A, R);
    const BlrD AP = P.ell() > 0 ? apply_operator(A, P) : P;
    std::vector<const BlrD*> S{&X, &R}, AS{&AX, &AR};
    if (P.ell() > 0) {
      S.push_back(&P);
      AS.push_back(&AP);
    }
    rb = detail::rayleigh_ritz_blocks(S, AS, cfg.ell, drop, cfg.threads);
    fb = fb || rb.reduced;
    theta = rb.theta;
    // Line 12
    BlrD Pn = right_multiply(R, rb.C2);
    if (P.ell() > 0) Pn = add(Pn, right_multiply(P, rb.C3));
    P = T(Pn);
    rank_p = P.max_rank();
    // Line 13
    const BlrD Xn = add(right_multiply(X, rb.C1), P);
    const Index pre = Xn.max_rank();
    X = T(Xn);
    AX = apply_operator(A, X);
    Xr = Xn;
    out.history.back().rank_r = R.max_rank();
    pending_pre = pre;
  }
  out.values = theta.head(cfg.k).array() - cfg.shift;
  out.vectors = Xr.columns(0, cfg.k);
  out.residuals = out.history.back().residuals.head(cfg.k);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace krembed
