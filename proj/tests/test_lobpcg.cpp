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


#include <gtest/gtest.h>

#include "krembed/lobpcg.hpp"
#include "reference.hpp"

using namespace krembed;

namespace {

/// Random SPD tridiagonal K and a small positive diagonal coupling.
KroneckerSumOperator random_spd_kron(Index n, std::uint64_t seed) {
  const MatD g = gaussian(n, 4, seed);
  VecD d(n), e(n - 1), a(n), b(n);
  for (Index i = 0; i < n; ++i) {
    d(i) = 2.5 + 0.5 * std::abs(g(i, 0));
    a(i) = 0.3 * std::abs(g(i, 2));
    b(i) = 0.3 * std::abs(g(i, 3));
  }
  for (Index i = 0; i + 1 < n; ++i) e(i) = -0.5 - 0.4 * std::abs(g(i, 1));
  const Factor K = Factor::tridiagonal(d, e);
  const Factor I = Factor::identity(n);
  return KroneckerSumOperator({{I, K}, {K, I}, {Factor::diagonal(a), Factor::diagonal(b)}});
}

KroneckerSumOperator laplace_part(const KroneckerSumOperator& A) {
  const auto [i, j] = detail::find_laplacian_pair(A);
  return KroneckerSumOperator({A.terms()[static_cast<std::size_t>(i)], A.terms()[static_cast<std::size_t>(j)]});
}

BlrD random_blr(Index nh, Index nt, Index rh, Index rt, Index ell, std::uint64_t seed) {
  std::vector<MatD> s;
  for (Index j = 0; j < ell; ++j) s.push_back(gaussian(rh, rt, derive_seed(seed, static_cast<std::uint64_t>(j))));
  return BlrD(gaussian(nh, rh, derive_seed(seed, 100)), gaussian(nt, rt, derive_seed(seed, 101)), std::move(s), false);
}

}  // namespace

TEST(Precond, HalfIdentityIsIdentity) {
  const Index n = 7;
  const Factor H = Factor::diagonal(VecD::Constant(n, 0.5));
  const KroneckerSumOperator M({{Factor::identity(n), H}, {H, Factor::identity(n)}});
  const KronSumPreconditioner P(M, 3);
  const BlrD W = random_blr(n, n, 3, 2, 4, 1);
  const MatD Y = P.apply(W).to_dense();
  EXPECT_LE((Y - W.to_dense()).norm(), 1e-13 * W.to_dense().norm());
}

TEST(Precond, MatchesClassicalAdiColumnwise) {
  const Index n = 20;
  const auto A = schrodinger_kron(sum_of_squares(n));
  const KroneckerSumOperator M = laplace_part(A);
  const MatD K = schrodinger_k(sum_of_squares(n)).to_dense();
  for (int steps : {1, 3, 8}) {
    const KronSumPreconditioner P(M, steps);
    const BlrD W = random_blr(n, n, 4, 3, 3, 7);
    const BlrD Y = P.apply(W);
    std::vector<ShiftPair> sh = P.plan().shifts();
    for (Index j = 0; j < W.ell(); ++j) {
      const MatD ref = testref::classical_adi(K, K, W.column_matrix(j), sh, steps);
      EXPECT_LE((Y.column_matrix(j) - ref).norm(), 1e-10 * ref.norm()) << steps;
    }
  }
}

TEST(Precond, ApproachesExactInverse) {
  const Index n = 20;
  const auto A = schrodinger_kron(zero_potential(n));
  const KroneckerSumOperator M = laplace_part(A);
  const MatD Md = assemble_dense(M);
  const BlrD W = random_blr(n, n, 2, 2, 2, 3);
  const MatD Wd = W.to_dense();
  const MatD exact = Md.llt().solve(Wd);
  double prev = 1e300;
  for (int steps : {2, 4, 8, 16}) {
    const MatD Y = precond_apply(KronSumPreconditioner(M, steps), W, 0.0, 1000).to_dense();
    const double err = (Y - exact).norm() / exact.norm();
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LE(prev, 1e-8);
}

TEST(Precond, RejectsIndefiniteFactor) {
  const Index n = 30;
  const auto A = schrodinger_kron(mathieu(n));
  EXPECT_THROW(KronSumPreconditioner::from_operator(A, 8), DegenerateInterval);
  const KroneckerSumOperator one({{Factor::identity(n), Factor::identity(n)}});
  EXPECT_THROW(KronSumPreconditioner(one, 4), StructureMismatch);
}

TEST(RayleighRitz3, EmptyBlocksReduceToPlainProjection) {
  const Index n = 10;
  const auto A = random_spd_kron(n, 4);
  const BlrD S1 = random_blr(n, n, 3, 3, 4, 5);
  const BlrD none(MatD::Zero(n, 0), MatD::Zero(n, 0), {}, true);
  const auto rb = rayleigh_ritz_3block(A, S1, none, none);
  const MatD X = S1.to_dense();
  const MatD Ad = assemble_dense(A);
  Eigen::GeneralizedSelfAdjointEigenSolver<MatD> ge(X.transpose() * Ad * X, X.transpose() * X);
  EXPECT_LE((rb.theta - ge.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10 * ge.eigenvalues().cwiseAbs().maxCoeff());
  EXPECT_EQ(rb.C2.rows(), 0);
  EXPECT_EQ(rb.C3.rows(), 0);
}

TEST(RayleighRitz3, MatchesDenseAndAscends) {
  const Index n = 12;
  const auto A = random_spd_kron(n, 8);
  const BlrD S1 = random_blr(n, n, 2, 3, 3, 9), S2 = random_blr(n, n, 3, 2, 3, 10), S3 = random_blr(n, n, 2, 2, 2, 11);
  const auto rb = rayleigh_ritz_3block(A, S1, S2, S3);
  MatD S(n * n, 8);
  S << S1.to_dense(), S2.to_dense(), S3.to_dense();
  const MatD Ad = assemble_dense(A);
  Eigen::GeneralizedSelfAdjointEigenSolver<MatD> ge(S.transpose() * Ad * S, S.transpose() * S);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(rb.theta(i), ge.eigenvalues()(i), 1e-10 * std::abs(ge.eigenvalues()(i)));
  for (Index i = 1; i < rb.theta.size(); ++i) EXPECT_LE(rb.theta(i - 1), rb.theta(i));
  EXPECT_EQ(rb.C1.rows(), 3);
  EXPECT_EQ(rb.C2.rows(), 3);
  EXPECT_EQ(rb.C3.rows(), 2);
  // C is Btil-orthonormal and solves the pencil
  MatD C(8, 3);
  C << rb.C1, rb.C2, rb.C3;
  const MatD G = C.transpose() * S.transpose() * S * C;
  EXPECT_LE((G - MatD::Identity(3, 3)).norm(), 1e-9);
}

TEST(Lobpcg, TruncationOffMatchesDenseReference) {
  for (int variant = 0; variant < 2; ++variant) {
    const Index n = 15;
    const auto A = variant == 0 ? schrodinger_kron(sum_of_squares(n)) : random_spd_kron(n, 21);
    const auto sk = KhatriRaoSketch::draw(n, n, 6, 31, 32);
    LobpcgConfig cfg;
    cfg.trunc_eps = 0.0;
    cfg.r_max = 100000;
    cfg.max_iter = 10;
    cfg.conv_tol = 0.0;
    cfg.conv_mode = ConvergenceMode::absolute;
    const auto res = lobpcg_lowrank(A, cfg, BlrD::from_khatri_rao(sk));
    ASSERT_EQ(res.history.size(), 11u);

    const KronSumPreconditioner M = KronSumPreconditioner::from_operator(A, cfg.adi_iterations);
    const MatD K = laplace_part(A).terms()[0].hat.to_dense();
    const auto shifts = M.plan().shifts();
    auto Minv = [&](const VecD& r) {
      const MatD C = Eigen::Map<const MatD>(r.data(), n, n);
      const MatD Y = testref::classical_adi(K, K, C, shifts, cfg.adi_iterations);
      return VecD(Eigen::Map<const VecD>(Y.data(), n * n));
    };
    const auto ref = testref::dense_lobpcg(assemble_dense(A), khatri_rao_dense(sk), Minv, 10);
    for (std::size_t i = 0; i < res.history.size(); ++i) {
      EXPECT_LE((res.history[i].ritz - ref.theta[i]).cwiseAbs().maxCoeff(), 1e-9) << "iteration " << i;
    }
  }
}

TEST(Lobpcg, RandomSpdMatchesDenseEigensolver) {
  const Index n = 15;
  const auto A = random_spd_kron(n, 41);
  LobpcgConfig cfg;
  cfg.trunc_eps = 1e-12;
  cfg.r_max = 15;
  cfg.conv_mode = ConvergenceMode::absolute;
  cfg.conv_tol = 1e-7;
  const auto res = lobpcg_lowrank(A, cfg, BlrD::from_khatri_rao(KhatriRaoSketch::draw(n, n, 6, 1, 2)));
  EXPECT_TRUE(res.converged);
  EXPECT_LE(res.iterations, 200);
  Eigen::SelfAdjointEigenSolver<MatD> es(assemble_dense(A), Eigen::EigenvaluesOnly);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(res.values(i), es.eigenvalues()(i), 1e-8);
}

TEST(Lobpcg, ZeroPotentialClosedForm) {
  for (Index n : {20, 40}) {
    const auto s = zero_potential(n);
    const auto A = schrodinger_kron(s);
    LobpcgConfig cfg;
    cfg.trunc_eps = 1e-12;
    cfg.r_max = n;
    cfg.conv_mode = ConvergenceMode::absolute;
    cfg.conv_tol = 1e-6;
    const auto res = lobpcg_lowrank(A, cfg, BlrD::from_khatri_rao(KhatriRaoSketch::draw(n, n, 6, 3, 4)));
    ASSERT_TRUE(res.converged) << n;
    const auto mu = fd_laplacian_2d_smallest(n, s.h(), 4);
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(res.values(i), mu[static_cast<std::size_t>(i)], 1e-8) << n;
  }
}

TEST(Lobpcg, ResidualsAgreeWithDenseAndStayOrthonormal) {
  const Index n = 16;
  const auto A = schrodinger_kron(sum_of_squares(n));
  LobpcgConfig cfg;
  cfg.trunc_eps = 1e-8;
  cfg.r_max = 16;
  cfg.max_iter = 25;
  cfg.conv_mode = ConvergenceMode::absolute;
  cfg.conv_tol = 1e-9;
  const auto res = lobpcg_lowrank(A, cfg, BlrD::from_khatri_rao(KhatriRaoSketch::draw(n, n, 6, 5, 6)));
  const MatD Ad = assemble_dense(A);
  const MatD X = res.vectors.to_dense();
  for (Index j = 0; j < 4; ++j) {
    const double th = res.history.back().ritz(j);
    EXPECT_NEAR((Ad * X.col(j) - th * X.col(j)).norm(), res.residuals(j), 1e-9);
  }
  for (const auto& h : res.history) EXPECT_LE(h.orth_error, 5e-7) << h.iter;
  for (std::size_t i = 1; i < res.history.size(); ++i) {
    EXPECT_LE(res.history[i].rank_x, cfg.r_max);
    EXPECT_GE(res.history[i].rank_x_pre, res.history[i].rank_x);
  }
  EXPECT_EQ(res.drift_violations, 0);
}

TEST(Lobpcg, ShiftRecoversIndefiniteSpectrum) {
  const Index n = 14;
  const auto A = schrodinger_kron(gaussian_well(n));
  Eigen::SelfAdjointEigenSolver<MatD> es(assemble_dense(A), Eigen::EigenvaluesOnly);
  ASSERT_LT(es.eigenvalues()(0), 0.0);
  LobpcgConfig cfg;
  cfg.trunc_eps = 1e-12;
  cfg.r_max = n;
  cfg.shift = 60.0;
  cfg.conv_mode = ConvergenceMode::absolute;
  cfg.conv_tol = 1e-7;
  const auto res = lobpcg_lowrank(A, cfg, BlrD::from_khatri_rao(KhatriRaoSketch::draw(n, n, 6, 9, 10)));
  ASSERT_TRUE(res.converged);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(res.values(i), es.eigenvalues()(i), 1e-8);
}

TEST(Lobpcg, RankDropsAfterConvergence) {
  const Index n = 100;
  const auto A = schrodinger_kron(sum_of_squares(n));
  LobpcgConfig cfg;
  cfg.conv_mode = ConvergenceMode::absolute;
  cfg.conv_tol = 1e-6;
  cfg.max_iter = 100;
  const auto res = lobpcg_lowrank(A, cfg, BlrD::from_khatri_rao(KhatriRaoSketch::draw(n, n, 6, 1, 2)));
  ASSERT_TRUE(res.converged);
  Index peak = 0;
  for (const auto& h : res.history) {
    EXPECT_LE(h.rank_x, cfg.r_max);
    peak = std::max(peak, h.rank_x);
  }
  EXPECT_LE(res.history.back().rank_x, peak);
  EXPECT_LT(res.history.back().rank_x, cfg.r_max);
  const VecD ref = testref::galerkin_eigenvalues(sum_of_squares(n), 30, 4);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(res.values(i), ref(i), 1e-8);
}

TEST(Lobpcg, RelativeThresholdUsesNormEstimate) {
  const Index n = 12;
  const auto A = schrodinger_kron(zero_potential(n));
  const double est = power_norm_estimate(A, 200, 1);
  Eigen::SelfAdjointEigenSolver<MatD> es(assemble_dense(A), Eigen::EigenvaluesOnly);
  EXPECT_NEAR(est, es.eigenvalues().maxCoeff(), 1e-3 * est);
  LobpcgConfig cfg;
  cfg.max_iter = 0;
  const auto res = lobpcg_lowrank(A, cfg, BlrD::from_khatri_rao(KhatriRaoSketch::draw(n, n, 6, 1, 2)));
  EXPECT_DOUBLE_EQ(res.threshold, cfg.conv_tol * res.norm_estimate);
  EXPECT_EQ(res.history.size(), 1u);
}

TEST(Lobpcg, ConfigValidation) {
  const auto A = schrodinger_kron(zero_potential(6));
  const BlrD X0 = BlrD::from_khatri_rao(KhatriRaoSketch::draw(6, 6, 6, 1, 2));
  LobpcgConfig cfg;
  cfg.k = 7;
  EXPECT_THROW(lobpcg_lowrank(A, cfg, X0), OutOfRange);
  cfg = LobpcgConfig{};
  cfg.r_max = 0;
  EXPECT_THROW(lobpcg_lowrank(A, cfg, X0), OutOfRange);
  cfg = LobpcgConfig{};
  cfg.ell = 5;
  EXPECT_THROW(lobpcg_lowrank(A, cfg, X0), DimensionMismatch);
}
