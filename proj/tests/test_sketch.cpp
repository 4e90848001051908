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

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "krembed/sketch.hpp"

using namespace krembed;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

big e4() { return boost::multiprecision::exp(big(4)); }

std::uint64_t big_ceil(const big& v) { return static_cast<std::uint64_t>(boost::multiprecision::ceil(v)); }

}  // namespace

TEST(Gaussian, DeterministicAndSeedSensitive) {
  const MatD a = gaussian(3, 2, 7);
  const MatD b = gaussian(3, 2, 7);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * 6), 0);
  EXPECT_NE(gaussian(2, 2, 1), gaussian(2, 2, 2));
  EXPECT_THROW(gaussian(0, 2, 1), OutOfRange);
}

TEST(Gaussian, MomentsAtTenThousandSamples) {
  const MatD z = gaussian(10000, 1, 123);
  const double mean = z.mean();
  const double var = (z.array() - mean).square().sum() / (z.size() - 1);
  EXPECT_GE(mean, -0.05);
  EXPECT_LE(mean, 0.05);
  EXPECT_GE(var, 0.94);
  EXPECT_LE(var, 1.06);
}

TEST(Gaussian, EntryMapIsColumnMajorCounter) {
  const MatD g = gaussian(4, 3, 99);
  CounterRng rng(99);
  for (Index c = 0; c < 3; ++c)
    for (Index r = 0; r < 4; ++r) EXPECT_EQ(g(r, c), rng.normal(static_cast<std::uint64_t>(r + 4 * c)));
}

TEST(KhatriRao, HandExamples) {
  KhatriRaoSketch sk;
  sk.tilde = MatD(2, 1);
  sk.tilde << 1, 2;
  sk.hat = MatD(2, 1);
  sk.hat << 3, 4;
  const MatD O = khatri_rao_dense(sk);
  ASSERT_EQ(O.rows(), 4);
  EXPECT_EQ(O(0, 0), 3);
  EXPECT_EQ(O(1, 0), 4);
  EXPECT_EQ(O(2, 0), 6);
  EXPECT_EQ(O(3, 0), 8);

  sk.tilde = MatD::Identity(2, 2);
  sk.hat = MatD::Identity(2, 2);
  const MatD E = khatri_rao_dense(sk);
  MatD expect = MatD::Zero(4, 2);
  expect(0, 0) = 1;
  expect(3, 1) = 1;
  EXPECT_EQ(E, expect);
}

TEST(KhatriRao, DistinctSeedsAndCap) {
  EXPECT_THROW(KhatriRaoSketch::draw(3, 3, 2, 5, 5), OutOfRange);
  auto sk = KhatriRaoSketch::draw(100, 100, 20, 1, 2);
  EXPECT_THROW(khatri_rao_dense(sk, 1000), SizeOverflow);
  auto norm = KhatriRaoSketch::draw(3, 4, 9, 1, 2, true);
  EXPECT_DOUBLE_EQ(norm.scale, 1.0 / 3.0);
}

TEST(KhatriRao, HadamardNormIdentity) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto sk = KhatriRaoSketch::draw(5, 5, 3 + s % 4, 2 * s + 1, 2 * s + 2, s % 2 == 0);
    const MatD O = khatri_rao_dense(sk);
    const MatD H = (sk.tilde.transpose() * sk.tilde).cwiseProduct(sk.hat.transpose() * sk.hat) * sk.scale * sk.scale;
    const double lhs = std::pow(two_norm(O), 2);
    EXPECT_NEAR(lhs, two_norm(H), 1e-12 * lhs);
  }
}

TEST(Bounds, JlFormulaAgainstFiftyDigits) {
  const big C = 128 * e4();
  // delta = e^-8, eps = 1
  auto b = jl_moment_sample_bound(1.0, 8.0);
  EXPECT_EQ(b.p, 4u);
  EXPECT_EQ(b.ell, big_ceil(8 * C * C + 64 * C));
  // delta = e^-10, eps = 0.5
  auto c = jl_moment_sample_bound(0.5, 10.0);
  EXPECT_EQ(c.p, 5u);
  EXPECT_EQ(c.ell, big_ceil(C * C * 10 / big(0.25) + C * 100 / big(0.5)));
  // halving eps at least doubles ell
  for (double eps : {1.0, 0.5, 0.25, 0.1}) {
    EXPECT_GE(jl_moment_sample_bound(eps / 2, 8.0).ell, 2 * jl_moment_sample_bound(eps, 8.0).ell);
  }
  EXPECT_THROW(jl_moment_sample_bound(0.0, 8.0), OutOfRange);
  EXPECT_THROW(jl_moment_sample_bound(1.5, 8.0), OutOfRange);
  EXPECT_THROW(jl_moment_sample_bound(0.5, 7.9), OutOfRange);
}

TEST(Bounds, OseFormulaAgainstFiftyDigits) {
  const big C = (2000 * e4()) * (2000 * e4());
  EXPECT_EQ(ose_sample_bound({1.0, 1.0, 1}), big_ceil(3 * C));
  const double L = -std::log(0.01);
  const big Lb = -boost::multiprecision::log(big("0.01"));
  const big k = 8;
  const big e = big("0.5");
  const big expect = C * (boost::multiprecision::pow(k, big(1.5)) / (e * e) + k * Lb / (e * e) +
                          boost::multiprecision::sqrt(k) * Lb * Lb / e);
  EXPECT_EQ(ose_sample_bound(OseBoundParams::from_delta(0.5, 0.01, 8)), big_ceil(expect));
  (void)L;
  for (std::int64_t kk : {1, 3, 10, 50}) {
    const auto a = ose_sample_bound({0.5, 3.0, kk});
    const auto b4 = ose_sample_bound({0.5, 3.0, 4 * kk});
    EXPECT_LE(static_cast<double>(b4) / static_cast<double>(a), 8.0);
  }
  EXPECT_THROW(ose_sample_bound({0.5, std::log(2.0), 1}), OutOfRange);
  EXPECT_THROW(ose_sample_bound({0.5, 2.0, 0}), OutOfRange);
}

TEST(Embedding, DistortionExamples) {
  const MatD U = orth(gaussian(30, 4, 3));
  EXPECT_NEAR(embedding_distortion(U, U), 0.0, 1e-13);
  EXPECT_NEAR(embedding_distortion(2 * U, U), 3.0, 1e-13);
  EXPECT_THROW(embedding_distortion(MatD::Zero(5, 2), U), DimensionMismatch);
}

TEST(Embedding, GaussianConcentration) {
  const MatD U = orth(gaussian(100, 4, 17));
  int good = 0;
  for (int t = 0; t < 200; ++t) {
    const MatD O = gaussian(100, 400, derive_seed(5, t)) / 20.0;
    good += embedding_distortion(O, U) < 0.5 ? 1 : 0;
  }
  EXPECT_GE(good, 198);
}

TEST(PinvNorm, Examples) {
  MatD I = MatD::Zero(6, 4);
  I.topRows(4).setIdentity();
  EXPECT_NEAR(pinv_norm(I), 1.0, 1e-15);
  VecD d(2);
  d << 2, 0.5;
  EXPECT_NEAR(pinv_norm(MatD(d.asDiagonal())), 2.0, 1e-14);
  MatD r = MatD::Zero(3, 2);
  r(0, 0) = 1;
  EXPECT_TRUE(std::isinf(pinv_norm(r)));
}

TEST(PinvNorm, DistortionImpliesPinvBound) {
  const MatD U = orth(gaussian(200, 5, 9));
  for (int t = 0; t < 50; ++t) {
    const MatD O = gaussian(200, 40, derive_seed(8, t)) / std::sqrt(40.0);
    const double eps = embedding_distortion(O, U);
    if (eps < 1.0) EXPECT_LE(pinv_norm(O.transpose() * U), 1.0 / (1.0 - eps) * (1 + 1e-12));
  }
}

TEST(OseSweep, GaussianMedianAtTwentyEight) {
  OseSweepConfig cfg;
  cfg.ks = {8};
  cfg.ells = {28};
  cfg.trials = 1000;
  cfg.families = {SketchFamily::gaussian};
  cfg.modes = {UMode::random_orthonormal};
  auto res = ose_trial_sweep(cfg);
  ASSERT_EQ(res.cells.size(), 1u);
  EXPECT_LE(res.cells[0].median, 2.5);
  EXPECT_LE(res.cells[0].median, res.cells[0].p95);
  EXPECT_LE(res.cells[0].p95, res.cells[0].max);
}

TEST(OseSweep, DeterministicAndThreadIndependent) {
  OseSweepConfig cfg;
  cfg.n_tilde = cfg.n_hat = 8;
  cfg.ks = {3};
  cfg.ells = {6, 9};
  cfg.trials = 1;
  cfg.seed = 7;
  cfg.frontier = true;
  cfg.frontier_ell_max = 40;
  auto a = ose_trial_sweep(cfg);
  cfg.threads = 3;
  cfg.trials = 1;
  auto b = ose_trial_sweep(cfg);
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].median, b.cells[i].median);
    EXPECT_EQ(a.cells[i].max, b.cells[i].max);
  }
  ASSERT_EQ(a.frontier.size(), b.frontier.size());
  for (std::size_t i = 0; i < a.frontier.size(); ++i) EXPECT_EQ(a.frontier[i].ell, b.frontier[i].ell);
}

TEST(OseSweep, FrontierIsSmallestPassingEll) {
  OseSweepConfig cfg;
  cfg.n_tilde = cfg.n_hat = 10;
  cfg.ks = {4};
  cfg.trials = 200;
  cfg.frontier = true;
  cfg.families = {SketchFamily::gaussian};
  cfg.modes = {UMode::random_orthonormal};
  auto res = ose_trial_sweep(cfg);
  ASSERT_EQ(res.frontier.size(), 1u);
  ASSERT_TRUE(res.frontier[0].ell.has_value());
  const Index ell = *res.frontier[0].ell;
  cfg.frontier = false;
  cfg.ells = {ell - 1, ell};
  auto cells = ose_trial_sweep(cfg).cells;
  EXPECT_GE(cells[0].p_exceed, cfg.target_probability);
  EXPECT_LT(cells[1].p_exceed, cfg.target_probability);
}

TEST(OseSweep, RankOneSubspaceIsOrthonormalKronecker) {
  const MatD U = test_subspace(UMode::rank_one, 6, 7, 5, 3);
  EXPECT_LE((U.transpose() * U - MatD::Identity(5, 5)).norm(), 1e-13);
  for (Index j = 0; j < 5; ++j) {
    const MatD Cj = Eigen::Map<const MatD>(U.col(j).data(), 7, 6);
    Eigen::JacobiSVD<MatD> svd(Cj);
    EXPECT_LE(svd.singularValues()(1), 1e-13);
  }
}

TEST(Moments, GaussianSecondMoment) {
  VecD a = VecD::Zero(5);
  a(0) = 1;
  const double v = lp_moment_estimate(InnerSampler::gaussian_inner, a, {}, 2.0, 100000, 4);
  EXPECT_GE(v, 0.95);
  EXPECT_LE(v, 1.05);
}

TEST(Moments, LemmaBoundsHold) {
  const double orders[] = {2, 3, 4, 6, 8};
  for (int t = 0; t < 5; ++t) {
    VecD a = gaussian(36, 1, derive_seed(77, t)).col(0);
    a.normalize();
    auto g = lp_moment_estimates(InnerSampler::gaussian_inner, a, {}, orders, 100000, derive_seed(1, t));
    auto k = lp_moment_estimates(InnerSampler::kr_inner, a, {6, 6}, orders, 100000, derive_seed(2, t));
    for (std::size_t q = 0; q < 5; ++q) {
      EXPECT_LE(g[q], std::sqrt(orders[q]) * 1.05);
      EXPECT_LE(k[q], orders[q] * 1.05);
    }
  }
  EXPECT_THROW(lp_moment_estimate(InnerSampler::gaussian_inner, VecD::Ones(2), {}, 2.0, 10, 1), OutOfRange);
}

TEST(Moments, SketchedNormIsUnbiased) {
  VecD x = gaussian(64, 1, 3).col(0);
  x.normalize();
  const double m = mean_sketched_norm2(x, 8, 8, 4, 100000, 21);
  EXPECT_NEAR(m, 1.0, 0.02);
}
