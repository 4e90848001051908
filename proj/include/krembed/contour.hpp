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

// Contour-integral eigensolver for A = I (x) K + K (x) I + Vt (x) Vh with a
// Khatri-Rao starting block. Every column omega_j = tilde_j (x) hat_j of the
// sketch is pushed through the rational filter
//
//   rho(A) omega_j = (1 / 2 pi i) sum_i w_i (z_i I - A)^{-1} omega_j,
//
// each resolvent being a three-term Sylvester equation solved in factored
// form. Ritz pairs are extracted from the span of the filtered columns.
//
// The second half of the file holds desk-scale evaluators for the
// subspace-angle bound on the filtered subspace.

#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "krembed/blr.hpp"
#include "krembed/kron.hpp"
#include "krembed/parallel.hpp"
#include "krembed/problems.hpp"
#include "krembed/sketch.hpp"
#include "krembed/sylvester.hpp"

namespace krembed {

// ---------------------------------------------------------------------------
// Rational filter

struct RationalFilter {
  std::vector<Complex> nodes;
  std::vector<Complex> weights;
  double center = 0.0;
  double radius = 1.0;

  std::size_t size() const { return nodes.size(); }
};

/// Midpoint trapezoidal rule on the circle |z - center| = radius:
/// z_j = c + r e^{i theta_j}, theta_j = 2 pi (j + 1/2) / q,
/// w_j = 2 pi i r e^{i theta_j} / q.
inline RationalFilter trapezoid_circle(double center, double radius, int q) {
  if (q < 2) throw OutOfRange("trapezoid_circle: q must be >= 2");
  if (!(radius > 0.0)) throw OutOfRange("trapezoid_circle: radius must be positive");
  RationalFilter f;
  f.center = center;
  f.radius = radius;
  const Complex I(0.0, 1.0);
  for (int j = 0; j < q; ++j) {
    const double theta = 2.0 * M_PI * (j + 0.5) / q;
    const Complex e = std::polar(1.0, theta);
    f.nodes.push_back(center + radius * e);
    f.weights.push_back(2.0 * M_PI * I * radius * e / static_cast<double>(q));
  }
  return f;
}

/// rho(lambda) = (1 / 2 pi i) sum_i w_i / (z_i - lambda).
inline Complex filter_eval(const RationalFilter& f, Complex lambda) {
  const Complex two_pi_i(0.0, 2.0 * M_PI);
  Complex sum(0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Complex d = f.nodes[i] - lambda;
    if (std::abs(d) <= 1e-14 * (std::abs(lambda) + f.radius)) throw PoleHit("filter evaluated at a quadrature node");
    sum += f.weights[i] / d;
  }
  return sum / two_pi_i;
}

inline Complex filter_eval(const RationalFilter& f, double lambda) { return filter_eval(f, Complex(lambda, 0.0)); }

inline bool inside_circle(const RationalFilter& f, double lambda, double slack = 1e-8) {
  return std::abs(lambda - f.center) < f.radius * (1.0 + slack);
}

// ---------------------------------------------------------------------------
// Resolvent equations

/// Pieces of A = I (x) K_hat + K_tilde (x) I [+ Vt (x) Vh].
struct ResolventParts {
  Factor K_hat;
  Factor K_tilde;
  std::optional<Factor> V_hat;
  std::optional<Factor> V_tilde;
};

inline ResolventParts resolvent_parts(const KroneckerSumOperator& A) {
  const auto [i, j] = detail::find_laplacian_pair(A);
  if (i < 0) throw StructureMismatch("operator lacks the I (x) K + K (x) I pair");
  ResolventParts parts{A.terms()[static_cast<std::size_t>(i)].hat, A.terms()[static_cast<std::size_t>(j)].tilde,
                       std::nullopt, std::nullopt};
  for (int t = 0; t < static_cast<int>(A.terms().size()); ++t) {
    if (t == i || t == j) continue;
    if (parts.V_hat) throw StructureMismatch("contour solver supports at most one coupling term");
    parts.V_hat = A.terms()[static_cast<std::size_t>(t)].hat;
    parts.V_tilde = A.terms()[static_cast<std::size_t>(t)].tilde;
  }
  return parts;
}

/// (z/2 - K_hat) X + X (z/2 - K_tilde)^T - Vh X Vt^T = F G^T, the matricized
/// form of (z I - A) x = vec(F G^T).
inline MultitermSylvester resolvent_equation(const ResolventParts& parts, Complex z, MatC F, MatC G) {
  MultitermSylvester p;
  p.Acoef = {parts.K_hat, Complex(-1.0), 0.5 * z};
  p.Bcoef = {parts.K_tilde, Complex(-1.0), 0.5 * z};
  if (parts.V_hat) {
    p.coupling_left = *parts.V_hat;
    p.coupling_right = *parts.V_tilde;
    p.coupling_coef = Complex(-1.0);
  }
  p.F = std::move(F);
  p.G = std::move(G);
  return p;
}

// ---------------------------------------------------------------------------
// Eigensolver

struct ContourConfig {
  BicgstabConfig solver;
  bool recompress = true;
  double recompress_eps = -1.0;  // < 0: 1e-2 * solver.tol
  Index recompress_rank = 90;
  double assembly_eps = -1.0;  // < 0: 1e-2 * solver.tol
  Index assembly_rank_cap = 2000;
  bool conjugate_pairs = true;
  double inside_slack = 1e-8;
  unsigned threads = 1;

  // Cutting far below the solve accuracy only keeps solver noise.
  double effective_recompress_eps() const { return recompress_eps < 0 ? 1e-2 * solver.tol : recompress_eps; }
  double effective_assembly_eps() const { return assembly_eps < 0 ? 1e-2 * solver.tol : assembly_eps; }
};

struct NodeReport {
  int node = 0;
  int column = 0;
  Complex z;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  bool breakdown = false;
  int restarts = 0;
  Index rank = 0;
  bool failed = false;  // solver threw; the contribution was skipped
  std::string message;
};

struct ContourResult {
  VecD ritz_values;  // ascending
  BlrD ritz_vectors;
  VecD residual_norms;
  std::vector<bool> inside;
  Index inside_count = 0;
  std::vector<NodeReport> reports;
  std::vector<std::vector<Index>> accumulated_ranks;  // [column][node step]
  std::vector<bool> degraded_columns;
  Index subspace_dim = 0;  // columns kept after orthonormalization
  Index r_hat = 0;         // ranks of the truncated subspace block
  Index r_tilde = 0;
  std::int64_t factor_storage = 0;  // doubles held by the subspace block
  double solve_seconds = 0.0;
  double extract_seconds = 0.0;
};

namespace detail {

/// Real L R^T with both factors re-expressed through a truncated SVD.
inline void recompress_real(MatD& L, MatD& R, double eps, Index cap) {
  if (L.cols() == 0) return;
  const auto ql = qr_econ(L);
  const auto qr = qr_econ(R);
  const MatD core = ql.R * qr.R.transpose();
  const auto s = svd_trunc(core, eps, std::max<Index>(cap, 1));
  L = ql.Q * (s.U * s.S.asDiagonal());
  R = qr.Q * s.V;
}

/// factor * Re(c L R^T) as real factors [Re cL, Im cL] [Re R, -Im R]^T.
inline std::pair<MatD, MatD> real_part_factors(const MatC& L, const MatC& R, Complex c, double factor) {
  const MatC cL = c * L;
  MatD hat(L.rows(), 2 * L.cols());
  MatD til(R.rows(), 2 * R.cols());
  hat << factor * cL.real(), factor * cL.imag();
  til << R.real(), -R.imag();
  return {std::move(hat), std::move(til)};
}

}  // namespace detail

/// Rayleigh-Ritz extraction from the span of a real BLR block.
struct RitzPairs {
  VecD values;
  BlrD vectors;
  VecD residuals;
  Index dropped = 0;
};

/// With orthonormal U and V, column j of W is (V (x) U) vec(Sigma_j), so an
/// SVD of the stacked core vectors orthonormalizes W without forming the
/// Gram matrix. Directions below rel_tol * s_max are dropped.
inline ReducedBasis<double> orthonormalize_cores(const BlrD& W, double rel_tol = 1e-14) {
  const Index rh = W.r_hat(), rt = W.r_tilde();
  MatD C(rh * rt, W.ell());
  for (Index j = 0; j < W.ell(); ++j) C.col(j) = Eigen::Map<const VecD>(W.sigma(j).data(), rh * rt);
  const auto svd = svd_thin(C);
  const VecD& s = svd.S;
  Index keep = 0;
  while (keep < s.size() && s(keep) > rel_tol * s(0)) ++keep;
  std::vector<MatD> sigma;
  for (Index j = 0; j < keep; ++j) sigma.push_back(Eigen::Map<const MatD>(svd.U.col(j).data(), rh, rt));
  return {BlrD(W.U(), W.V(), std::move(sigma), true), W.ell() - keep};
}

inline RitzPairs rayleigh_ritz(const KroneckerSumOperator& A, const BlrD& W) {
  BlrD Q;
  Index dropped = 0;
  if (W.orthonormal() && W.ell() > 0 && W.r_hat() * W.r_tilde() >= W.ell()) {
    auto red = orthonormalize_cores(W);
    dropped = red.dropped;
    Q = std::move(red.W);
  } else try {
    // two passes restore orthogonality lost to the Gram conditioning
    Q = orthonormalize_cholesky(orthonormalize_cholesky(W).W).W;
  } catch (const GramNotSPD&) {
    auto red = orthonormalize_svd(W);
    dropped = red.dropped;
    Q = orthonormalize_cholesky(red.W).W;
  }
  MatD H = block_inner(Q, apply_operator(A, Q));
  H = (0.5 * (H + H.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<MatD> es(H);
  RitzPairs out;
  out.values = es.eigenvalues();
  out.vectors = right_multiply(Q, es.eigenvectors());
  const MatD negTheta = -MatD(out.values.asDiagonal());
  const BlrD res = add(apply_operator(A, out.vectors), right_multiply(out.vectors, negTheta));
  out.residuals = res.column_norms();
  out.dropped = dropped;
  return out;
}

/// Filtered-subspace eigensolver. The sketch columns are scale * tilde_j (x)
/// hat_j; nodes in the lower half-plane are mirrored from their conjugates
/// when conjugate_pairs is set (A real).
inline ContourResult contour_eigensolve(const KroneckerSumOperator& A, const RationalFilter& filter,
                                        const KhatriRaoSketch& sketch, const ContourConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const ResolventParts parts = resolvent_parts(A);
  const Index nh = A.n_hat();
  const Index nt = A.n_tilde();
  const Index ell = sketch.ell();
  if (sketch.hat.rows() != nh || sketch.tilde.rows() != nt) throw DimensionMismatch("sketch does not match the operator");
  if (ell < 1) throw OutOfRange("contour_eigensolve: sketch has no columns");

  // nodes to solve and their real-part weights
  struct Node {
    int index;
    Complex z;
    Complex c;  // w / (2 pi i)
    double factor;
  };
  std::vector<Node> nodes;
  const Complex two_pi_i(0.0, 2.0 * M_PI);
  for (std::size_t i = 0; i < filter.size(); ++i) {
    const Complex z = filter.nodes[i];
    const Complex c = filter.weights[i] / two_pi_i;
    if (!cfg.conjugate_pairs) {
      nodes.push_back({static_cast<int>(i), z, c, 1.0});
    } else if (z.imag() > 1e-14 * std::abs(z)) {
      nodes.push_back({static_cast<int>(i), z, c, 2.0});
    } else if (std::abs(z.imag()) <= 1e-14 * std::abs(z)) {
      nodes.push_back({static_cast<int>(i), Complex(z.real(), 0.0), c, 1.0});
    }
  }

  // one preconditioner per node, shared read-only by the column solves
  std::vector<std::optional<AdiPreconditioner>> precond(nodes.size());
  std::vector<std::string> precond_error(nodes.size());
  parallel_for(nodes.size(), cfg.threads, [&](std::size_t k) {
    try {
      const auto p = resolvent_equation(parts, nodes[k].z, MatC(), MatC());
      precond[k].emplace(p.Acoef, p.Bcoef, cfg.solver.precond_iter, cfg.solver.precond_tol);
    } catch (const Error& e) {
      precond_error[k] = e.what();
    }
  });

  const std::size_t tasks = nodes.size() * static_cast<std::size_t>(ell);
  std::vector<FactoredSolution> sols(tasks);
  std::vector<NodeReport> reports(tasks);
  parallel_for(tasks, cfg.threads, [&](std::size_t t) {
    const std::size_t k = t / static_cast<std::size_t>(ell);
    const Index j = static_cast<Index>(t % static_cast<std::size_t>(ell));
    NodeReport& rep = reports[t];
    rep.node = nodes[k].index;
    rep.column = static_cast<int>(j);
    rep.z = nodes[k].z;
    if (!precond[k]) {
      rep.failed = true;
      rep.message = precond_error[k];
      return;
    }
    try {
      const MatC F = (sketch.scale * sketch.hat.col(j)).cast<Complex>();
      const MatC G = sketch.tilde.col(j).cast<Complex>();
      const auto p = resolvent_equation(parts, nodes[k].z, F, G);
      sols[t] = bicgstab_multiterm(p, *precond[k], cfg.solver);
      rep.iterations = sols[t].iterations;
      rep.residual = sols[t].achieved_residual;
      rep.converged = sols[t].converged;
      rep.breakdown = sols[t].breakdown;
      rep.restarts = sols[t].restarts;
      rep.rank = sols[t].rank();
    } catch (const Error& e) {
      rep.failed = true;
      rep.message = e.what();
    }
  });
  const auto t1 = clock::now();

  ContourResult out;
  out.accumulated_ranks.assign(static_cast<std::size_t>(ell), {});
  out.degraded_columns.assign(static_cast<std::size_t>(ell), false);
  std::vector<std::pair<MatD, MatD>> cols(static_cast<std::size_t>(ell));
  for (Index j = 0; j < ell; ++j) {
    MatD Xh = MatD::Zero(nh, 0);
    MatD Xt = MatD::Zero(nt, 0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const std::size_t t = k * static_cast<std::size_t>(ell) + static_cast<std::size_t>(j);
      if (reports[t].failed || !reports[t].converged) out.degraded_columns[static_cast<std::size_t>(j)] = true;
      if (reports[t].failed) continue;
      auto [h, tl] = detail::real_part_factors(sols[t].Xhat, sols[t].Xtil, nodes[k].c, nodes[k].factor);
      MatD nh_(nh, Xh.cols() + h.cols()), nt_(nt, Xt.cols() + tl.cols());
      nh_ << Xh, h;
      nt_ << Xt, tl;
      Xh = std::move(nh_);
      Xt = std::move(nt_);
      if (cfg.recompress) detail::recompress_real(Xh, Xt, cfg.effective_recompress_eps(), cfg.recompress_rank);
      out.accumulated_ranks[static_cast<std::size_t>(j)].push_back(Xh.cols());
    }
    cols[static_cast<std::size_t>(j)] = {std::move(Xh), std::move(Xt)};
  }
  out.reports = std::move(reports);
  sols.clear();

  const BlrD raw = BlrD::from_factored_columns(nh, nt, cols);
  TruncationInfo info;
  const BlrD W = truncate(raw, cfg.effective_assembly_eps(), cfg.assembly_rank_cap, &info);
  if (info.capped) throw RankOverflow("filtered subspace exceeds the assembly rank cap after truncation");
  out.r_hat = W.r_hat();
  out.r_tilde = W.r_tilde();
  out.factor_storage = W.storage();

  const RitzPairs rr = rayleigh_ritz(A, W);
  out.ritz_values = rr.values;
  out.ritz_vectors = rr.vectors;
  out.residual_norms = rr.residuals;
  out.subspace_dim = rr.values.size();
  out.inside.resize(static_cast<std::size_t>(rr.values.size()));
  for (Index i = 0; i < rr.values.size(); ++i) {
    const bool in = inside_circle(filter, rr.values(i), cfg.inside_slack);
    out.inside[static_cast<std::size_t>(i)] = in;
    out.inside_count += in ? 1 : 0;
  }
  const auto t2 = clock::now();
  out.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.extract_seconds = std::chrono::duration<double>(t2 - t1).count();
  return out;
}

// ---------------------------------------------------------------------------
// Desk-scale diagnostics

/// tan of the B-angle between u and span(Z); +inf when u is B-orthogonal
/// to the subspace.
inline double tan_angle_B(const VecD& u, const MatD& Z, const MatD& B) {
  const Index n = u.size();
  if (Z.rows() != n || B.rows() != n || B.cols() != n) throw DimensionMismatch("tan_angle_B: size mismatch");
  if (u.norm() == 0.0) throw DegenerateSubspace("tan_angle_B: zero vector");
  Eigen::SelfAdjointEigenSolver<MatD> es(B);
  if (es.eigenvalues()(0) <= 0.0) throw NotPositiveDefinite("tan_angle_B: B is not positive definite");
  const MatD Bh = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  const VecD ub = Bh * u;
  const MatD Zb = Bh * Z;
  Eigen::ColPivHouseholderQR<MatD> qr(Zb);
  if (qr.rank() < Z.cols()) throw DegenerateSubspace("tan_angle_B: Z is rank deficient");
  const MatD Q = qr.householderQ() * MatD::Identity(n, Z.cols());
  const VecD p = Q * (Q.transpose() * ub);
  const VecD r = ub - p;
  const double pn = p.norm();
  if (pn == 0.0) return std::numeric_limits<double>::infinity();
  return r.norm() / pn;
}

/// Generalized eigenproblem (A, B) ordered by decreasing |rho(lambda)|,
/// with Ufull = B^{1/2} [u_1, ..., u_n] orthonormal.
struct DeskSpectrum {
  VecD lambda;
  VecD rho;      // real filter values rho(lambda_i)
  MatD Ufull;    // n x n orthonormal
  MatD B_isqrt;  // B^{-1/2}
};

inline DeskSpectrum desk_spectrum(const MatD& A, const MatD& B, const RationalFilter& f) {
  const Index n = A.rows();
  if (n > 2500) throw SizeOverflow("desk_spectrum: n above desk scale");
  Eigen::SelfAdjointEigenSolver<MatD> eb(B);
  if (eb.eigenvalues()(0) <= 0.0) throw NotPositiveDefinite("desk_spectrum: B is not positive definite");
  const MatD Bis = eb.eigenvectors() * eb.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                   eb.eigenvectors().transpose();
  MatD C = Bis * A * Bis;
  C = (0.5 * (C + C.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<MatD> ec(C);
  std::vector<Index> order(static_cast<std::size_t>(n));
  VecD rho(n);
  for (Index i = 0; i < n; ++i) {
    order[static_cast<std::size_t>(i)] = i;
    rho(i) = filter_eval(f, ec.eigenvalues()(i)).real();
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return std::abs(rho(a)) > std::abs(rho(b)); });
  DeskSpectrum out;
  out.lambda.resize(n);
  out.rho.resize(n);
  out.Ufull.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    const Index s = order[static_cast<std::size_t>(i)];
    out.lambda(i) = ec.eigenvalues()(s);
    out.rho(i) = rho(s);
    out.Ufull.col(i) = ec.eigenvectors().col(s);
  }
  out.B_isqrt = Bis;
  return out;
}

/// Z = rho(B^{-1} A) B^{-1/2} Omega.
inline MatD filtered_block(const DeskSpectrum& s, const MatD& Omega) {
  return s.B_isqrt * (s.Ufull * (s.rho.asDiagonal() * (s.Ufull.transpose() * Omega)));
}

struct StructuralBound {
  double sharp = 0.0;   // || rho(L_perp) (Up^T Om) (U^T Om)^+ e_j || / |rho(l_j)|
  double split = 0.0;   // |rho(l_{k+1})| / |rho(l_j)| ||Up^T Om|| ||(U^T Om)^+||
  double weak = 0.0;    // |rho(l_{k+1})| / |rho(l_j)| ||Om|| ||(Om^T U)^+||
};

/// Bounds on tan angle_B(u_j, span Z) for the k leading filter values.
inline StructuralBound structural_bound(const MatD& U, const MatD& Uperp, const VecD& rho_k, const VecD& rho_perp,
                                        const MatD& Omega, Index j) {
  const Index k = U.cols();
  if (j < 0 || j >= k) throw OutOfRange("structural_bound: j out of range");
  const MatD UO = U.transpose() * Omega;
  Eigen::JacobiSVD<MatD> svd(UO, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecD& sv = svd.singularValues();
  if (sv.size() < k || !(sv(k - 1) > 1e-12 * sv(0))) throw RankDeficient("U^T Omega lacks full row rank");
  const MatD pinv = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  const MatD UpO = Uperp.transpose() * Omega;
  const VecD y = rho_perp.asDiagonal() * (UpO * pinv.col(j));
  StructuralBound b;
  const double rj = std::abs(rho_k(j));
  b.sharp = y.norm() / rj;
  const double r_next = rho_perp.size() > 0 ? rho_perp.cwiseAbs().maxCoeff() : 0.0;
  b.split = r_next / rj * two_norm(UpO) * (1.0 / sv(k - 1));
  b.weak = r_next / rj * two_norm(Omega) * pinv_norm(Omega.transpose() * U);
  return b;
}

/// ||Omega||_2 ||(Omega^T U)^+||_2 and whether it is at most 8 sqrt(n / ell).
struct SketchConditioning {
  double value = 0.0;
  bool within = false;
};

inline SketchConditioning sketch_conditioning(const MatD& Omega, const MatD& U) {
  SketchConditioning c;
  c.value = two_norm(Omega) * pinv_norm(Omega.transpose() * U);
  c.within = c.value <= 8.0 * std::sqrt(static_cast<double>(Omega.rows()) / static_cast<double>(Omega.cols()));
  return c;
}

}  // namespace krembed
