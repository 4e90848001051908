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

#include "krembed/factor.hpp"
#include "krembed/sketch.hpp"

using namespace krembed;

namespace {

Factor random_banded(Index n, Index kl, Index ku, std::uint64_t seed) {
  MatD band = gaussian(kl + ku + 1, n, seed);
  return Factor::banded(band, kl, ku);
}

}  // namespace

TEST(Factor, TridiagonalLayout) {
  VecD d(3), e(2);
  d << 1, 2, 3;
  e << 4, 5;
  const MatD D = Factor::tridiagonal(d, e).to_dense();
  MatD expect(3, 3);
  expect << 1, 4, 0, 4, 2, 5, 0, 5, 3;
  EXPECT_EQ(D, expect);
}

TEST(Factor, ApplyMatchesDense) {
  const Factor F = random_banded(9, 2, 1, 4);
  const MatD M = gaussian(9, 3, 5);
  EXPECT_LE((F.apply(M) - F.to_dense() * M).norm(), 1e-13);
  const MatC Mc = M.cast<Complex>() * Complex(0.3, -1.2);
  EXPECT_LE((F.apply(Mc) - F.to_dense().cast<Complex>() * Mc).norm(), 1e-13);
  EXPECT_THROW(F.apply(MatD::Zero(8, 1)), DimensionMismatch);
}

TEST(Factor, ProductsAndSums) {
  const Factor A = random_banded(20, 1, 2, 1);
  const Factor B = random_banded(20, 2, 1, 2);
  const Factor Dg = Factor::diagonal(gaussian(20, 1, 3).col(0));
  const Factor I = Factor::identity(20);
  for (const auto& [x, y] : std::vector<std::pair<Factor, Factor>>{{A, B}, {A, Dg}, {Dg, Dg}, {I, A}, {A, I}}) {
    EXPECT_LE(((x * y).to_dense() - x.to_dense() * y.to_dense()).norm(), 1e-12);
    EXPECT_LE(((x + y).to_dense() - x.to_dense() - y.to_dense()).norm(), 1e-12);
  }
  EXPECT_EQ((A * B).kind(), Factor::Kind::banded);
  EXPECT_EQ((Dg * Dg).kind(), Factor::Kind::diagonal);
  EXPECT_LE((A.plus_identity(2.5).to_dense() - A.to_dense() - 2.5 * MatD::Identity(20, 20)).norm(), 1e-13);
  EXPECT_LE((A.scaled(-3).to_dense() + 3 * A.to_dense()).norm(), 1e-13);
}

TEST(ShiftedSolver, AllKindsMatchDense) {
  const Complex a(0.7, 0.2), mu(1.5, -3.0);
  const MatC B = gaussian(12, 2, 9).cast<Complex>();
  const std::vector<Factor> fs{Factor::identity(12), Factor::diagonal(VecD::LinSpaced(12, 1, 4)), random_banded(12, 2, 1, 7),
                               Factor::dense(gaussian(12, 12, 8))};
  for (const auto& F : fs) {
    ShiftedSolver s(F, a, mu);
    MatC M = a * F.to_dense().cast<Complex>();
    M.diagonal().array() += mu;
    const MatC X = s.solve(B);
    EXPECT_LE((M * X - B).norm(), 1e-11 * B.norm());
  }
}

TEST(ShiftedSolver, SingularShiftThrows) {
  VecD d(3);
  d << 1, 2, 3;
  EXPECT_THROW(ShiftedSolver(Factor::diagonal(d), 1.0, -2.0), SingularShiftedSolve);
  const Factor T = Factor::tridiagonal(VecD::Constant(5, 2.0), VecD::Constant(4, -1.0));
  const double lam = 2.0 - 2.0 * std::cos(M_PI / 6.0);
  EXPECT_THROW(ShiftedSolver(T, 1.0, -lam), SingularShiftedSolve);
}

TEST(SpectralInterval, SturmMatchesDenseEig) {
  const VecD d = gaussian(40, 1, 1).col(0);
  const VecD e = gaussian(39, 1, 2).col(0);
  const Factor T = Factor::tridiagonal(d, e);
  Eigen::SelfAdjointEigenSolver<MatD> es(T.to_dense());
  const Interval iv = spectral_interval(T);
  EXPECT_NEAR(iv.lo, es.eigenvalues()(0), 1e-13);
  EXPECT_NEAR(iv.hi, es.eigenvalues()(39), 1e-13);
  for (Index k : {0, 5, 20, 39}) EXPECT_NEAR(detail::tridiag_eigenvalue(d, e, k), es.eigenvalues()(k), 1e-13);
}

TEST(SpectralInterval, LaplacianClosedForm) {
  const Index n = 50;
  const double h = 1.0 / (n + 1);
  const Factor K = Factor::tridiagonal(VecD::Constant(n, 2 / (h * h)), VecD::Constant(n - 1, -1 / (h * h)));
  const Interval iv = spectral_interval(K);
  const double lo = 4 / (h * h) * std::pow(std::sin(M_PI / (2.0 * (n + 1))), 2);
  const double hi = 4 / (h * h) * std::pow(std::sin(n * M_PI / (2.0 * (n + 1))), 2);
  EXPECT_NEAR(iv.lo, lo, 1e-12 * hi);
  EXPECT_NEAR(iv.hi, hi, 1e-12 * hi);
  EXPECT_GT(iv.lo, 0.0);
}
