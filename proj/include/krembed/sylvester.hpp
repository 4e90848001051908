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

// Low-rank solvers for matrix equations
//
//   Ac X + X Bc^T + gamma * L X R^T = F G^T,
//
// with X an n_hat x n_tilde matrix kept in factored form X = Xhat Xtil^T.
// Ac and Bc are affine in a real factor (a * K + c * I), which covers both
// (z/2) I - K at a complex quadrature node and the real coefficients of the
// LOBPCG preconditioner.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/ellint_1.hpp>
#include <boost/math/special_functions/jacobi_elliptic.hpp>

#include "krembed/dense.hpp"
#include "krembed/factor.hpp"
#include "krembed/rng.hpp"

namespace krembed {

/// a * F + c * I with a real factor F and complex coefficients.
struct AffineFactor {
  Factor F;
  Complex a{1.0, 0.0};
  Complex c{0.0, 0.0};

  Index size() const { return F.size(); }

  MatC apply(const MatC& M) const {
    MatC out = F.apply(M);
    out *= a;
    if (c != Complex(0.0)) out += c * M;
    return out;
  }

  MatC to_dense() const {
    MatC out = a * F.to_dense().cast<Complex>();
    out.diagonal().array() += c;
    return out;
  }
};

/// Low-rank n_hat x n_tilde matrix L R^T.
struct LowRank {
  MatC L;  // n_hat x r
  MatC R;  // n_tilde x r

  Index rank() const { return L.cols(); }
  MatC dense() const { return L * R.transpose(); }

  static LowRank zero(Index n_hat, Index n_tilde) { return {MatC::Zero(n_hat, 0), MatC::Zero(n_tilde, 0)}; }
};

/// sum_k c_k X_k as a concatenation (no compression).
inline LowRank combine(std::initializer_list<std::pair<Complex, const LowRank*>> parts) {
  Index r = 0;
  Index nh = -1, nt = -1;
  for (const auto& [c, x] : parts) {
    r += x->rank();
    nh = x->L.rows();
    nt = x->R.rows();
  }
  LowRank out{MatC(nh, r), MatC(nt, r)};
  Index off = 0;
  for (const auto& [c, x] : parts) {
    out.L.middleCols(off, x->rank()) = c * x->L;
    out.R.middleCols(off, x->rank()) = x->R;
    off += x->rank();
  }
  return out;
}

/// <X, Y> = trace(X^H Y) from the factors.
inline Complex lr_inner(const LowRank& X, const LowRank& Y) {
  if (X.rank() == 0 || Y.rank() == 0) return Complex(0.0);
  const MatC GL = X.L.adjoint() * Y.L;
  const MatC GR = X.R.adjoint() * Y.R;
  return GL.cwiseProduct(GR).sum();
}

/// ||L R^T||_F via QR of both factors (accurate for small norms).
inline double lr_norm(const LowRank& X) {
  if (X.rank() == 0) return 0.0;
  const auto ql = qr_econ(X.L);
  const auto qr = qr_econ(X.R);
  return (ql.R * qr.R.transpose()).norm();
}

/// Best approximation of rank <= r_max with relative Frobenius tail <= tol.
inline LowRank lr_truncate(const LowRank& X, double tol, Index r_max) {
  if (X.rank() == 0) return X;
  if (X.rank() >= std::min(X.L.rows(), X.R.rows())) {
    // wide factors: the dense product is cheaper than two QRs
    const auto s = svd_trunc(MatC(X.L * X.R.transpose()), tol, std::max<Index>(r_max, 1));
    return {s.U * s.S.cast<Complex>().asDiagonal(), s.V.conjugate()};
  }
  const auto ql = qr_econ(X.L);
  const auto qr = qr_econ(X.R);
  const MatC core = ql.R * qr.R.transpose();
  const auto s = svd_trunc(core, tol, std::max<Index>(r_max, 1));
  LowRank out;
  out.L = ql.Q * (s.U * s.S.cast<Complex>().asDiagonal());
  out.R = qr.Q * s.V.conjugate();
  return out;
}

// ---------------------------------------------------------------------------
// ADI shifts

struct ShiftPair {
  Complex alpha;  // near the spectrum of Ac
  Complex beta;   // near the spectrum of -Bc
};

/// Wachspress shifts for Ac X + X Bc^T = rhs with real spectra of Ac in
/// [a1, b1] and of Bc in [a2, b2] (both positive, or both negative).
/// The two intervals are mapped by a Moebius transform onto [k, 1] and
/// [-1, -k]; the optimal parameters for the symmetric problem,
/// gamma_j = dn((2j-1) K(k') / (2J), k'), are mapped back.
inline std::vector<ShiftPair> adi_shifts(Interval A, Interval B, int count) {
  if (count < 1) throw OutOfRange("adi_shifts: count must be >= 1");
  if (!(A.lo <= A.hi) || !(B.lo <= B.hi)) throw DegenerateInterval("adi_shifts: interval with lo > hi");
  if (!std::isfinite(A.lo) || !std::isfinite(A.hi) || !std::isfinite(B.lo) || !std::isfinite(B.hi)) {
    throw DegenerateInterval("adi_shifts: non-finite interval");
  }
  if (A.hi < 0.0 && B.hi < 0.0) {
    auto flipped = adi_shifts({-A.hi, -A.lo}, {-B.hi, -B.lo}, count);
    for (auto& p : flipped) p = {-p.alpha, -p.beta};
    return flipped;
  }
  if (A.lo <= 0.0 || B.lo <= 0.0) throw DegenerateInterval("adi_shifts: spectral intervals must exclude 0");
  const double a1 = A.lo, b1 = A.hi, a2 = B.lo, b2 = B.hi;
  std::vector<ShiftPair> out;
  out.reserve(static_cast<std::size_t>(count));
  const double m = (a1 + b2) * (b1 + a2) / ((a1 + a2) * (b1 + b2));
  if (!(m > 1.0 + 1e-13)) {
    for (int j = 0; j < count; ++j) out.push_back({Complex(a1), Complex(-a2)});
    return out;
  }
  const double t = 2.0 * m - 1.0;
  const double k = t - std::sqrt(t * t - 1.0);
  const double kp = std::sqrt(std::max(0.0, 1.0 - k * k));
  const double Kp = boost::math::ellint_1(kp);
  // inverse Moebius map: w in {-1, k, 1} -> {-b2, a1, b1}
  auto back = [&](double w) {
    const double c = 2.0 * (w - k) / ((w - 1.0) * (1.0 + k));
    return (a1 * (b1 + b2) - c * b1 * (a1 + b2)) / ((b1 + b2) - c * (a1 + b2));
  };
  for (int j = 1; j <= count; ++j) {
    const double u = (2.0 * j - 1.0) * Kp / (2.0 * count);
    const double g = boost::math::jacobi_dn(kp, u);
    out.push_back({Complex(back(g)), Complex(back(-g))});
  }
  return out;
}

/// Shift count J for which the Wachspress bound 4 exp(-pi^2 J / ln(4/k))
/// falls below tol, clamped to [1, max_count].
inline int adi_shift_count(Interval A, Interval B, double tol, int max_count) {
  const double a1 = std::abs(A.lo), b1 = std::abs(A.hi), a2 = std::abs(B.lo), b2 = std::abs(B.hi);
  const double m = (std::min(a1, b1) + std::max(a2, b2)) * (std::max(a1, b1) + std::min(a2, b2)) /
                   ((std::min(a1, b1) + std::min(a2, b2)) * (std::max(a1, b1) + std::max(a2, b2)));
  if (!(m > 1.0 + 1e-13)) return 1;
  const double t = 2.0 * m - 1.0;
  const double k = t - std::sqrt(t * t - 1.0);
  const double pi2 = M_PI * M_PI;
  const int J = static_cast<int>(std::ceil(std::log(4.0 / std::max(tol, 1e-300)) * std::log(4.0 / k) / pi2));
  return std::clamp(J, 1, std::max(1, max_count));
}

// ---------------------------------------------------------------------------
// Factored ADI

struct FactoredSolution {
  MatC Xhat;  // n_hat x rho
  MatC Xtil;  // n_tilde x rho, X = Xhat Xtil^T
  double achieved_residual = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  bool breakdown = false;
  int restarts = 0;
  std::vector<double> residual_history;

  Index rank() const { return Xhat.cols(); }
  MatC dense() const { return Xhat * Xtil.transpose(); }
  LowRank low_rank() const { return {Xhat, Xtil}; }
};

/// Shifted solvers for one fixed shift sequence, factorized up front and
/// immutable afterwards. The sequence is applied cyclically.
class AdiPlan {
 public:
  AdiPlan(AffineFactor Ac, AffineFactor Bc, std::vector<ShiftPair> shifts)
      : Ac_(std::move(Ac)), Bc_(std::move(Bc)), shifts_(std::move(shifts)) {
    if (shifts_.empty()) throw OutOfRange("ADI plan needs at least one shift");
    left_.reserve(shifts_.size());
    right_.reserve(shifts_.size());
    for (const auto& sp : shifts_) {
      left_.emplace_back(Ac_.F, Ac_.a, Ac_.c - sp.beta);
      right_.emplace_back(Bc_.F, Bc_.a, Bc_.c + sp.alpha);
    }
  }

  std::size_t num_shifts() const { return shifts_.size(); }
  const std::vector<ShiftPair>& shifts() const { return shifts_; }
  const AffineFactor& Ac() const { return Ac_; }
  const AffineFactor& Bc() const { return Bc_; }

  /// (Ac - beta_j I)^{-1} M
  MatC solve_left(std::size_t j, const MatC& M) const { return left_[j % shifts_.size()].solve(M); }

  /// (Bc + alpha_j I)^{-1} M
  MatC solve_right(std::size_t j, const MatC& M) const { return right_[j % shifts_.size()].solve(M); }

 private:
  AffineFactor Ac_;
  AffineFactor Bc_;
  std::vector<ShiftPair> shifts_;
  std::vector<ShiftedSolver> left_;
  std::vector<ShiftedSolver> right_;
};

namespace detail {
/// ||W T^T||_F from the Gram matrices of the factors.
inline double residual_norm_wt(const MatC& W, const MatC& T) {
  const MatC GW = W.adjoint() * W;
  const MatC GT = T.adjoint() * T;
  return std::sqrt(std::max(0.0, GW.cwiseProduct(GT.conjugate()).sum().real()));
}
}  // namespace detail

/// Residual-based factored ADI (transposed variant) for Ac X + X Bc^T = F G^T.
/// Each step adds rank(F) columns; no compression is applied.
inline FactoredSolution adi_solve(const AdiPlan& plan, const MatC& F, const MatC& G, double tol, int max_iter) {
  if (F.rows() != plan.Ac().size() || G.rows() != plan.Bc().size() || F.cols() != G.cols()) {
    throw DimensionMismatch("adi_solve: right-hand side factors do not match the coefficients");
  }
  if (max_iter < 1) throw OutOfRange("adi_solve: max_iter must be >= 1");
  FactoredSolution sol;
  const Index r = F.cols();
  MatC W = F;
  MatC T = G;
  const double rhs_norm = detail::residual_norm_wt(F, G);
  if (rhs_norm == 0.0 || r == 0) {
    sol.Xhat = MatC::Zero(F.rows(), 0);
    sol.Xtil = MatC::Zero(G.rows(), 0);
    sol.achieved_residual = 0.0;
    sol.converged = true;
    return sol;
  }
  std::vector<MatC> Zs, Ys;
  for (int it = 0; it < max_iter; ++it) {
    const std::size_t j = static_cast<std::size_t>(it);
    const ShiftPair& sp = plan.shifts()[j % plan.num_shifts()];
    const MatC V = plan.solve_left(j, W);
    const MatC Vt = -plan.solve_right(j, T);
    const Complex d = sp.beta - sp.alpha;
    W += d * V;
    T -= d * Vt;
    Zs.push_back(d * V);
    Ys.push_back(Vt);
    sol.iterations = it + 1;
    const double res = detail::residual_norm_wt(W, T) / rhs_norm;
    sol.residual_history.push_back(res);
    sol.achieved_residual = res;
    if (res <= tol) {
      sol.converged = true;
      break;
    }
  }
  sol.Xhat.resize(F.rows(), r * static_cast<Index>(Zs.size()));
  sol.Xtil.resize(G.rows(), r * static_cast<Index>(Ys.size()));
  for (std::size_t k = 0; k < Zs.size(); ++k) {
    sol.Xhat.middleCols(static_cast<Index>(k) * r, r) = Zs[k];
    sol.Xtil.middleCols(static_cast<Index>(k) * r, r) = Ys[k];
  }
  return sol;
}

/// Convenience overload building a one-off plan.
inline FactoredSolution adi_solve(const AffineFactor& Ac, const AffineFactor& Bc, const MatC& F, const MatC& G,
                                  const std::vector<ShiftPair>& shifts, double tol, int max_iter) {
  AdiPlan plan(Ac, Bc, shifts);
  return adi_solve(plan, F, G, tol, max_iter);
}

// ---------------------------------------------------------------------------
// Three-term equation

struct MultitermSylvester {
  AffineFactor Acoef;  // n_hat side, acts from the left
  AffineFactor Bcoef;  // n_tilde side, acts from the right as X Bcoef^T
  std::optional<Factor> coupling_left;   // L (n_hat x n_hat)
  std::optional<Factor> coupling_right;  // R (n_tilde x n_tilde)
  Complex coupling_coef{-1.0, 0.0};      // gamma
  MatC F;                                // n_hat x r
  MatC G;                                // n_tilde x r

  Index n_hat() const { return Acoef.size(); }
  Index n_tilde() const { return Bcoef.size(); }
  bool has_coupling() const { return coupling_left.has_value() && coupling_right.has_value(); }

  /// L(X) for X = P Q^T, returned unevaluated with rank 2r or 3r.
  LowRank apply(const LowRank& X) const {
    const Index r = X.rank();
    const Index terms = has_coupling() ? 3 : 2;
    LowRank out{MatC(n_hat(), terms * r), MatC(n_tilde(), terms * r)};
    out.L.leftCols(r) = Acoef.apply(X.L);
    out.R.leftCols(r) = X.R;
    out.L.middleCols(r, r) = X.L;
    out.R.middleCols(r, r) = Bcoef.apply(X.R);
    if (has_coupling()) {
      out.L.rightCols(r) = coupling_coef * coupling_left->apply(X.L);
      out.R.rightCols(r) = coupling_right->apply(X.R);
    }
    return out;
  }

  MatC apply_dense(const MatC& X) const {
    MatC out = Acoef.apply(X) + Bcoef.apply(X.transpose()).transpose();
    if (has_coupling()) {
      out += coupling_coef * coupling_left->apply(coupling_right->apply(X.transpose()).transpose());
    }
    return out;
  }

  LowRank rhs() const { return {F, G}; }
};

/// ||L(X) - F G^T||_F / ||F G^T||_F from the factors (QR based, no n_hat x
/// n_tilde matrix is formed).
inline double multiterm_residual(const MultitermSylvester& p, const LowRank& X) {
  const LowRank b = p.rhs();
  const double bn = lr_norm(b);
  if (X.rank() == 0) return bn == 0.0 ? 0.0 : 1.0;
  const LowRank AX = p.apply(X);
  const LowRank r = combine({{Complex(1.0), &b}, {Complex(-1.0), &AX}});
  return lr_norm(r) / bn;
}

inline double multiterm_residual(const MultitermSylvester& p, const FactoredSolution& sol) {
  return multiterm_residual(p, sol.low_rank());
}

struct BicgstabConfig {
  double tol = 1e-6;
  int max_iter = 200;
  Index rank_cap = 90;
  double trunc_tol = -1.0;  // < 0: 0.1 * tol
  int precond_iter = 55;
  double precond_tol = 1e-5;
  std::uint64_t restart_seed = 0x5eed;
  int max_restarts = 1;

  double solution_trunc_tol = -1.0;  // < 0: 1e-3 * effective_trunc_tol()
  int stagnation_checks = 3;

  double effective_trunc_tol() const { return trunc_tol < 0 ? 0.1 * tol : trunc_tol; }
  double effective_solution_tol() const {
    return solution_trunc_tol < 0 ? 1e-3 * effective_trunc_tol() : solution_trunc_tol;
  }
};

/// ADI-based approximate inverse of X -> Ac X + X Bc^T. Shifts come from
/// the real spectral intervals of the underlying factors and are translated
/// by the constant parts of Ac and Bc.
class AdiPreconditioner {
 public:
  AdiPreconditioner(const AffineFactor& Ac, const AffineFactor& Bc, Interval spec_A, Interval spec_B,
                    int max_iter, double tol)
      : plan_(make_plan(Ac, Bc, spec_A, spec_B, max_iter, tol)), max_iter_(max_iter), tol_(tol) {}

  AdiPreconditioner(const AffineFactor& Ac, const AffineFactor& Bc, int max_iter, double tol)
      : AdiPreconditioner(Ac, Bc, spectral_interval(Ac.F), spectral_interval(Bc.F), max_iter, tol) {}

  LowRank apply(const LowRank& X) const {
    if (X.rank() == 0) return X;
    const FactoredSolution s = adi_solve(plan_, X.L, X.R, tol_, max_iter_);
    return s.low_rank();
  }

  const AdiPlan& plan() const { return plan_; }

 private:
  static AdiPlan make_plan(const AffineFactor& Ac, const AffineFactor& Bc, Interval sA, Interval sB, int max_iter,
                           double tol) {
    if (Ac.a != Bc.a || Ac.a == Complex(0.0)) {
      throw StructureMismatch("ADI preconditioner needs equal nonzero factor coefficients on both sides");
    }
    // divide by a: (K_A + sA) X + X (K_B + sB)^T = rhs / a. The plan works on
    // the original coefficients, so the shifts are scaled back by a.
    const Complex a = Ac.a;
    Complex shA = Ac.c / a;
    Complex shB = Bc.c / a;
    // An indefinite factor is moved to a positive interval; the translation
    // is taken back out of the constant parts so the equation is unchanged.
    const bool both_negative = sA.hi < 0.0 && sB.hi < 0.0;
    auto lift = [&](Interval& iv, Complex& sh) {
      if (both_negative || iv.lo > 0.0) return;
      const double tau = 0.01 * std::max(iv.hi - iv.lo, std::abs(iv.hi)) - iv.lo;
      iv.lo += tau;
      iv.hi += tau;
      sh -= tau;
    };
    lift(sA, shA);
    lift(sB, shB);
    const int J = adi_shift_count(sA, sB, tol, max_iter);
    auto real = adi_shifts(sA, sB, J);
    std::vector<ShiftPair> shifts;
    shifts.reserve(real.size());
    for (const auto& p : real) shifts.push_back({a * (p.alpha + shA), a * (p.beta - shB)});
    return AdiPlan(Ac, Bc, std::move(shifts));
  }

  AdiPlan plan_;
  int max_iter_;
  double tol_;
};

/// Right-preconditioned BiCGstab on factored iterates. Every recombination
/// is compressed with lr_truncate(trunc_tol, rank_cap); the solution is
/// compressed relative to its own norm. Convergence is declared on the
/// recursively updated residual and then confirmed on the true residual;
/// if the true residual is too large the iteration restarts from the
/// current iterate, and stops once `stagnation_checks` consecutive checks
/// fail to halve the best true residual. On breakdown the shadow residual
/// is redrawn at random up to max_restarts times before the Breakdown flag
/// is surfaced.
inline FactoredSolution bicgstab_multiterm(const MultitermSylvester& p, const AdiPreconditioner& M,
                                           const BicgstabConfig& cfg) {
  const Index nh = p.n_hat();
  const Index nt = p.n_tilde();
  if (p.F.rows() != nh || p.G.rows() != nt || p.F.cols() != p.G.cols()) {
    throw DimensionMismatch("bicgstab: right-hand side does not match the coefficients");
  }
  if (cfg.rank_cap < p.F.cols()) throw OutOfRange("bicgstab: rank cap below right-hand side rank");
  const double ttol = cfg.effective_trunc_tol();
  const double xtol = cfg.effective_solution_tol();
  const Index cap = cfg.rank_cap;
  auto T = [&](const LowRank& X) { return lr_truncate(X, ttol, cap); };

  FactoredSolution sol;
  const LowRank b = p.rhs();
  const double bnorm = lr_norm(b);
  LowRank x = LowRank::zero(nh, nt);
  if (bnorm == 0.0) {
    sol.Xhat = x.L;
    sol.Xtil = x.R;
    sol.achieved_residual = 0.0;
    sol.converged = true;
    return sol;
  }

  LowRank r = T(b);
  LowRank rhat = r;
  int restarts = 0;
  int shadow_draws = 0;
  auto fresh_shadow = [&]() {
    const std::uint64_t s = derive_seed(cfg.restart_seed, static_cast<std::uint64_t>(++shadow_draws));
    CounterRng rng(s);
    LowRank out{MatC(nh, 1), MatC(nt, 1)};
    std::uint64_t ctr = 0;
    auto draw = [&]() {
      const double re = rng.normal(ctr++);
      const double im = rng.normal(ctr++);
      return Complex(re, im);
    };
    for (Index i = 0; i < nh; ++i) out.L(i, 0) = draw();
    for (Index i = 0; i < nt; ++i) out.R(i, 0) = draw();
    return out;
  };

  Complex rho_old(1.0), alpha(1.0), omega(1.0);
  LowRank v = LowRank::zero(nh, nt);
  LowRank pdir = LowRank::zero(nh, nt);
  const double tiny = 1e-300;
  double best_true = 1.0;
  LowRank best_x = x;

  auto restart_from = [&](bool new_shadow) {
    const LowRank Ax = p.apply(x);
    r = T(combine({{Complex(1.0), &b}, {Complex(-1.0), &Ax}}));
    rhat = new_shadow ? fresh_shadow() : r;
    rho_old = alpha = omega = Complex(1.0);
    v = LowRank::zero(nh, nt);
    pdir = LowRank::zero(nh, nt);
  };

  int stalls = 0;
  auto true_check = [&]() {
    const double res = multiterm_residual(p, x);
    stalls = res < 0.5 * best_true ? 0 : stalls + 1;
    if (res < best_true) {
      best_true = res;
      best_x = x;
    }
    return res;
  };

  for (int it = 0; it < cfg.max_iter; ++it) {
    sol.iterations = it + 1;
    const Complex rho = lr_inner(rhat, r);
    if (std::abs(rho) < tiny * std::max(1.0, bnorm * bnorm) || !std::isfinite(std::abs(rho))) {
      if (restarts < cfg.max_restarts) {
        ++restarts;
        restart_from(true);
        continue;
      }
      sol.breakdown = true;
      break;
    }
    if (it == 0 || pdir.rank() == 0) {
      pdir = r;
    } else {
      const Complex beta = (rho / rho_old) * (alpha / omega);
      pdir = T(combine({{Complex(1.0), &r}, {beta, &pdir}, {-beta * omega, &v}}));
    }
    const LowRank phat = T(M.apply(pdir));
    v = T(p.apply(phat));
    const Complex denom = lr_inner(rhat, v);
    if (std::abs(denom) == 0.0 || !std::isfinite(std::abs(denom))) {
      if (restarts < cfg.max_restarts) {
        ++restarts;
        restart_from(true);
        continue;
      }
      sol.breakdown = true;
      break;
    }
    alpha = rho / denom;
    const LowRank s = T(combine({{Complex(1.0), &r}, {-alpha, &v}}));
    const double snorm = lr_norm(s) / bnorm;
    if (snorm <= cfg.tol) {
      x = lr_truncate(combine({{Complex(1.0), &x}, {alpha, &phat}}), xtol, cap);
      const double res = true_check();
      sol.residual_history.push_back(res);
      if (res <= cfg.tol) {
        sol.converged = true;
        break;
      }
      if (stalls >= cfg.stagnation_checks) break;
      restart_from(false);
      continue;
    }
    const LowRank shat = T(M.apply(s));
    const LowRank t = T(p.apply(shat));
    const Complex tt = lr_inner(t, t);
    if (std::abs(tt) == 0.0) {
      sol.breakdown = true;
      break;
    }
    omega = lr_inner(t, s) / tt;
    x = lr_truncate(combine({{Complex(1.0), &x}, {alpha, &phat}, {omega, &shat}}), xtol, cap);
    r = T(combine({{Complex(1.0), &s}, {-omega, &t}}));
    const double rnorm = lr_norm(r) / bnorm;
    sol.residual_history.push_back(rnorm);
    if (rnorm <= cfg.tol) {
      const double res = true_check();
      sol.residual_history.back() = res;
      if (res <= cfg.tol) {
        sol.converged = true;
        break;
      }
      if (stalls >= cfg.stagnation_checks) break;
      restart_from(false);
      continue;
    }
    if (std::abs(omega) == 0.0) {
      if (restarts < cfg.max_restarts) {
        ++restarts;
        restart_from(true);
        continue;
      }
      sol.breakdown = true;
      break;
    }
    rho_old = rho;
  }
  if (!sol.converged) true_check();
  const LowRank& final_x = sol.converged ? x : best_x;
  sol.Xhat = final_x.L;
  sol.Xtil = final_x.R;
  sol.achieved_residual = sol.converged ? multiterm_residual(p, x) : best_true;
  sol.restarts = restarts;
  return sol;
}

/// Convenience overload building the ADI preconditioner from the two-term
/// part of the equation.
inline FactoredSolution bicgstab_multiterm(const MultitermSylvester& p, const BicgstabConfig& cfg) {
  AdiPreconditioner M(p.Acoef, p.Bcoef, cfg.precond_iter, cfg.precond_tol);
  return bicgstab_multiterm(p, M, cfg);
}

}  // namespace krembed
