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

#include <sstream>

#include "krembed/blr.hpp"
#include "krembed/problems.hpp"

using namespace krembed;

namespace {

BlrD random_blr(Index nh, Index nt, Index rh, Index rt, Index ell, std::uint64_t seed) {
  std::vector<MatD> s;
  for (Index j = 0; j < ell; ++j) s.push_back(gaussian(rh, rt, derive_seed(seed, 3, j)));
  return BlrD(gaussian(nh, rh, derive_seed(seed, 1)), gaussian(nt, rt, derive_seed(seed, 2)), s);
}

BlrC random_blr_c(Index nh, Index nt, Index rh, Index rt, Index ell, std::uint64_t seed) {
  auto cplx = [](const MatD& a, const MatD& b) {
    MatC out(a.rows(), a.cols());
    out.real() = a;
    out.imag() = b;
    return out;
  };
  std::vector<MatC> s;
  for (Index j = 0; j < ell; ++j) s.push_back(cplx(gaussian(rh, rt, derive_seed(seed, 3, j)), gaussian(rh, rt, derive_seed(seed, 4, j))));
  return BlrC(cplx(gaussian(nh, rh, derive_seed(seed, 1)), gaussian(nh, rh, derive_seed(seed, 5))),
              cplx(gaussian(nt, rt, derive_seed(seed, 2)), gaussian(nt, rt, derive_seed(seed, 6))), s);
}

double rel(const MatD& a, const MatD& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }
double relc(const MatC& a, const MatC& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST(Blr, ToDenseExamples) {
  EXPECT_EQ(BlrD(3, 4).to_dense().rows(), 12);
  EXPECT_EQ(BlrD(3, 4).to_dense().cols(), 0);
  MatD S(2, 2);
  S << 1, 2, 3, 4;
  const BlrD W(MatD::Identity(2, 2), MatD::Identity(2, 2), {S});
  VecD expect(4);
  expect << 1, 3, 2, 4;
  EXPECT_EQ(W.to_dense().col(0), expect);
  EXPECT_THROW(BlrD(MatD::Zero(2, 2), MatD::Zero(2, 3), {MatD::Zero(2, 2)}), DimensionMismatch);
}

TEST(Blr, FromKhatriRao) {
  KhatriRaoSketch id;
  id.tilde = MatD::Identity(2, 2);
  id.hat = MatD::Identity(2, 2);
  const MatD E = BlrD::from_khatri_rao(id).to_dense();
  EXPECT_NEAR(E(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(E(3, 1), 1.0, 1e-15);
  EXPECT_NEAR(E.norm(), std::sqrt(2.0), 1e-15);

  const auto sk = KhatriRaoSketch::draw(20, 20, 6, 11, 12, true);
  const BlrD W = BlrD::from_khatri_rao(sk);
  EXPECT_LE((W.to_dense() - khatri_rao_dense(sk)).norm(), 1e-12);
  EXPECT_TRUE(W.orthonormal());
  for (Index j = 0; j < 6; ++j) {
    Eigen::JacobiSVD<MatD> svd(W.sigma(j));
    EXPECT_LE(svd.singularValues()(1), 1e-13 * svd.singularValues()(0));
  }
}

TEST(Blr, ApplyOperator) {
  const BlrD W = random_blr(4, 4, 3, 2, 3, 1);
  const KroneckerSumOperator I({{Factor::identity(4), Factor::identity(4)}});
  EXPECT_LE(rel(apply_operator(I, W).to_dense(), W.to_dense()), 1e-15);
  const auto L = schrodinger_kron(zero_potential(4));
  const BlrD AW = apply_operator(L, W);
  EXPECT_EQ(AW.r_hat(), 6);
  EXPECT_EQ(AW.r_tilde(), 4);
  EXPECT_LE(rel(AW.to_dense(), assemble_dense(L) * W.to_dense()), 1e-12);
  EXPECT_EQ(apply_operator(L, BlrD(4, 4)).ell(), 0);
  EXPECT_THROW(apply_operator(L, random_blr(5, 4, 1, 1, 1, 2)), DimensionMismatch);
}

TEST(Blr, AddAndRightMultiply) {
  const BlrD W = random_blr(20, 20, 4, 5, 3, 2);
  const BlrD Z = add(W, right_multiply(W, -MatD::Identity(3, 3)));
  EXPECT_LE(Z.to_dense().norm(), 1e-12 * W.to_dense().norm());
  const BlrD W2 = random_blr(20, 20, 2, 3, 3, 3);
  const BlrD S = add(W, W2);
  EXPECT_EQ(S.r_hat(), 6);
  EXPECT_EQ(S.r_tilde(), 8);
  EXPECT_LE(rel(S.to_dense(), W.to_dense() + W2.to_dense()), 1e-12);
  EXPECT_EQ(add(BlrD(20, 20), BlrD(20, 20)).ell(), 0);
  EXPECT_THROW(add(W, BlrD(20, 20)), DimensionMismatch);

  const BlrD W4 = random_blr(10, 9, 3, 3, 4, 4);
  const BlrD e1 = right_multiply(W4, MatD::Identity(4, 1));
  EXPECT_LE(rel(e1.to_dense(), W4.to_dense().col(0)), 1e-15);
  const MatD B = gaussian(4, 3, 5);
  EXPECT_LE(rel(right_multiply(W4, B).to_dense(), W4.to_dense() * B), 1e-12);
  EXPECT_THROW(right_multiply(W4, MatD::Identity(3, 3)), DimensionMismatch);
}

TEST(Blr, BlockInner) {
  MatD U = MatD::Identity(3, 2), V = MatD::Identity(3, 2);
  MatD E11 = MatD::Zero(2, 2), E22 = MatD::Zero(2, 2);
  E11(0, 0) = 1;
  E22(1, 1) = 1;
  const BlrD O(U, V, {E11, E22}, true);
  EXPECT_LE((block_inner(O, O) - MatD::Identity(2, 2)).norm(), 1e-15);
  const BlrD W1 = random_blr(15, 12, 3, 4, 4, 6), W2 = random_blr(15, 12, 5, 2, 3, 7);
  EXPECT_LE(rel(block_inner(W1, W2), W1.to_dense().transpose() * W2.to_dense()), 1e-12);
  const MatD G = block_inner(W1, W1);
  EXPECT_LE((G - G.transpose()).norm(), 1e-12 * G.norm());
  Eigen::SelfAdjointEigenSolver<MatD> es(G);
  EXPECT_GE(es.eigenvalues()(0), -1e-10 * G.norm());
  EXPECT_EQ(block_inner(BlrD(3, 3), BlrD(3, 3)).size(), 0);
}

TEST(Blr, ComplexAlgebraConjugatesFirstArgument) {
  const BlrC W1 = random_blr_c(7, 6, 3, 2, 3, 8), W2 = random_blr_c(7, 6, 2, 3, 2, 9);
  EXPECT_LE(relc(block_inner(W1, W2), W1.to_dense().adjoint() * W2.to_dense()), 1e-12);
  const auto T = truncate(W1, 0.0, 100);
  EXPECT_LE(relc(T.to_dense(), W1.to_dense()), 1e-12);
  EXPECT_LE(relc(block_inner(T, T), W1.to_dense().adjoint() * W1.to_dense()), 1e-12);
  const auto O = orthonormalize_cholesky(W1);
  EXPECT_LE((block_inner(O.W, O.W) - MatC::Identity(3, 3)).norm(), 1e-10);
  const auto A = schrodinger_kron(sum_of_squares(7));
  (void)A;
}

TEST(Blr, TruncateLossless) {
  const BlrD W = random_blr(12, 10, 5, 6, 4, 10);
  TruncationInfo info;
  const BlrD T = truncate(W, 0.0, 1000, &info);
  EXPECT_LE(rel(T.to_dense(), W.to_dense()), 1e-12);
  EXPECT_LE(T.r_hat(), 5);
  EXPECT_LE(T.r_tilde(), 6);
  EXPECT_TRUE(T.orthonormal());
  EXPECT_LE((T.U().transpose() * T.U() - MatD::Identity(T.r_hat(), T.r_hat())).norm(), 1e-10);
  EXPECT_LE((T.V().transpose() * T.V() - MatD::Identity(T.r_tilde(), T.r_tilde())).norm(), 1e-10);
  EXPECT_FALSE(info.capped);
}

TEST(Blr, TruncateFindsExactRank) {
  // rank (2, 2) content stored at rank (6, 6)
  const MatD U0 = gaussian(15, 2, 1), V0 = gaussian(14, 2, 2);
  const MatD P = gaussian(2, 6, 3), Q = gaussian(2, 6, 4);
  std::vector<MatD> s;
  for (Index j = 0; j < 3; ++j) s.push_back(P.transpose() * gaussian(2, 2, 10 + j) * Q);
  const BlrD W(U0 * P, V0 * Q, s);
  const BlrD T = truncate(W, 1e-10, 100);
  EXPECT_EQ(T.r_hat(), 2);
  EXPECT_EQ(T.r_tilde(), 2);
  EXPECT_LE(rel(T.to_dense(), W.to_dense()), 1e-10);
}

TEST(Blr, TruncateErrorBound) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    // decaying spectrum so that the cut is nontrivial
    MatD U = gaussian(20, 8, derive_seed(seed, 1));
    MatD V = gaussian(18, 8, derive_seed(seed, 2));
    for (Index k = 0; k < 8; ++k) {
      U.col(k) *= std::pow(0.3, static_cast<double>(k));
      V.col(k) *= std::pow(0.4, static_cast<double>(k));
    }
    std::vector<MatD> s;
    for (Index j = 0; j < 3; ++j) s.push_back(gaussian(8, 8, derive_seed(seed, 3, j)));
    const BlrD W(U, V, s);
    const double eps = 1e-3;
    const BlrD T = truncate(W, eps, 1000);
    const MatD D = W.to_dense();
    EXPECT_LE((T.to_dense() - D).norm(), 2.0 * eps * D.norm());
    EXPECT_LE(T.r_hat(), 8);
    EXPECT_LE(T.r_tilde(), 8);
    const BlrD C = truncate(W, eps, 2);
    EXPECT_LE(C.max_rank(), 2);
  }
}

// Repeating the cut is stable when the retained and discarded singular
// values are separated by more than the tolerance.
TEST(Blr, TruncateIdempotentAcrossGap) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    MatD U = gaussian(20, 7, derive_seed(seed, 1));
    MatD V = gaussian(18, 7, derive_seed(seed, 2));
    U.rightCols(4) *= 1e-6;
    V.rightCols(3) *= 1e-6;
    std::vector<MatD> s;
    for (Index j = 0; j < 3; ++j) s.push_back(gaussian(7, 7, derive_seed(seed, 3, j)));
    const BlrD W(U, V, s);
    const BlrD T = truncate(W, 1e-3, 1000);
    EXPECT_EQ(T.r_hat(), 3);
    EXPECT_EQ(T.r_tilde(), 4);
    const BlrD T2 = truncate(T, 1e-3, 1000);
    EXPECT_EQ(T2.r_hat(), T.r_hat());
    EXPECT_EQ(T2.r_tilde(), T.r_tilde());
    EXPECT_LE((T2.to_dense() - T.to_dense()).norm(), 1e-12 * T.to_dense().norm());
  }
}

TEST(Blr, OrthonormalizeCholesky) {
  const auto sk = KhatriRaoSketch::draw(8, 8, 3, 1, 2);
  const BlrD W = truncate(BlrD::from_khatri_rao(sk), 0.0, 100);
  const auto O0 = orthonormalize_cholesky(W);
  const auto O = orthonormalize_cholesky(O0.W);
  EXPECT_LE((O.L - MatD::Identity(3, 3)).norm(), 1e-12);
  EXPECT_LE(rel(O.W.to_dense(), O0.W.to_dense()), 1e-12);
  const auto O3 = orthonormalize_cholesky(O0.W.scaled(3.0));
  EXPECT_LE((O3.L - 3 * MatD::Identity(3, 3)).norm(), 1e-12);
  const BlrD R = random_blr(20, 20, 4, 4, 5, 33);
  const auto OR = orthonormalize_cholesky(R);
  EXPECT_LE((block_inner(OR.W, OR.W) - MatD::Identity(5, 5)).norm(), 1e-8);
  EXPECT_LE(rel(OR.W.to_dense() * OR.L.transpose(), R.to_dense()), 1e-10);
  const BlrD dup = hconcat(R.columns(0, 1), R.columns(0, 1));
  EXPECT_THROW(orthonormalize_cholesky(dup), GramNotSPD);
}

TEST(Blr, RandomCompositionsMatchDense) {
  const auto L = shift_operator(schrodinger_kron(sum_of_squares(6)), 1.0);
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    CounterRng rng(derive_seed(4242, trial));
    std::uint64_t ctr = 0;
    auto pick = [&](int m) { return static_cast<int>(rng.bits(ctr++) % static_cast<std::uint64_t>(m)); };
    const Index ell = 1 + pick(6);
    BlrD W = random_blr(6, 6, 1 + pick(4), 1 + pick(4), ell, derive_seed(trial, 99));
    MatD D = W.to_dense();
    const int steps = 1 + pick(6);
    for (int s = 0; s < steps; ++s) {
      switch (pick(5)) {
        case 0:
          W = apply_operator(L, W);
          D = assemble_dense(L) * D;
          break;
        case 1: {
          const BlrD W2 = random_blr(6, 6, 2, 2, W.ell(), derive_seed(trial, s));
          W = add(W, W2);
          D += W2.to_dense();
          break;
        }
        case 2: {
          const MatD B = gaussian(W.ell(), W.ell(), derive_seed(trial, s, 7));
          W = right_multiply(W, B);
          D = D * B;
          break;
        }
        case 3:
          W = truncate(W, 0.0, 1000);
          break;
        default: {
          const MatD G = block_inner(W, W);
          EXPECT_LE(rel(G, D.transpose() * D), 1e-10);
        }
      }
    }
    EXPECT_LE(rel(W.to_dense(), D), 1e-10) << "trial " << trial;
  }
}

TEST(Blr, SerializationRoundTrip) {
  const BlrC W = random_blr_c(5, 4, 2, 3, 3, 1);
  std::stringstream ss;
  write_blr(ss, W);
  const BlrC R = read_blr<Complex>(ss);
  EXPECT_EQ(R.U(), W.U());
  EXPECT_EQ(R.V(), W.V());
  for (Index j = 0; j < 3; ++j) EXPECT_EQ(R.sigma(j), W.sigma(j));
  std::stringstream bad("nonsense-bytes");
  EXPECT_THROW(read_blr<double>(bad), FormatError);
  std::stringstream ss2;
  write_blr(ss2, W);
  EXPECT_THROW(read_blr<double>(ss2), FormatError);
  std::stringstream ss3;
  write_blr(ss3, W);
  std::string cut = ss3.str().substr(0, 60);
  std::stringstream ss4(cut);
  EXPECT_THROW(read_blr<Complex>(ss4), FormatError);
}
