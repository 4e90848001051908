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

// Gaussian and Khatri-Rao random matrices, sample-size bounds for the
// Khatri-Rao embedding, and Monte Carlo experiments measuring how well the
// sketches embed a fixed subspace.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "krembed/dense.hpp"
#include "krembed/parallel.hpp"
#include "krembed/rng.hpp"

namespace krembed {

/// rows x cols matrix of i.i.d. standard normals; see rng.hpp for the
/// (seed, index) -> value map.
inline MatD gaussian(Index rows, Index cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw OutOfRange("gaussian: rows and cols must be >= 1");
  CounterRng rng(seed);
  MatD out(rows, cols);
  double* data = out.data();
  const auto total = static_cast<std::uint64_t>(rows * cols);
  for (std::uint64_t i = 0; i < total; ++i) data[i] = rng.normal(i);
  return out;
}

/// Pair (tilde, hat) representing Omega = scale * (tilde (.) hat), the
/// columnwise Kronecker product with column j equal to
/// scale * kron(tilde.col(j), hat.col(j)).
struct KhatriRaoSketch {
  MatD tilde;  // n_tilde x ell
  MatD hat;    // n_hat x ell
  double scale = 1.0;
  std::uint64_t seed_tilde = 0;
  std::uint64_t seed_hat = 0;

  Index n_tilde() const { return tilde.rows(); }
  Index n_hat() const { return hat.rows(); }
  Index ell() const { return tilde.cols(); }
  Index n() const { return tilde.rows() * hat.rows(); }

  static KhatriRaoSketch draw(Index n_tilde, Index n_hat, Index ell, std::uint64_t seed_tilde,
                              std::uint64_t seed_hat, bool normalize = false) {
    if (seed_tilde == seed_hat) {
      throw OutOfRange("Khatri-Rao factors need distinct seeds to be independent");
    }
    KhatriRaoSketch sk;
    sk.tilde = gaussian(n_tilde, ell, seed_tilde);
    sk.hat = gaussian(n_hat, ell, seed_hat);
    sk.scale = normalize ? 1.0 / std::sqrt(static_cast<double>(ell)) : 1.0;
    sk.seed_tilde = seed_tilde;
    sk.seed_hat = seed_hat;
    return sk;
  }
};

inline constexpr std::int64_t kDefaultDenseCap = 10'000'000;

/// Explicit n x ell Khatri-Rao matrix. Desk-scale verification only.
inline MatD khatri_rao_dense(const KhatriRaoSketch& sk, std::int64_t cap = kDefaultDenseCap) {
  if (sk.tilde.cols() != sk.hat.cols()) throw DimensionMismatch("Khatri-Rao factors differ in column count");
  const Index n = sk.n();
  if (static_cast<std::int64_t>(n) * sk.ell() > cap) {
    throw SizeOverflow("dense Khatri-Rao expansion exceeds " + std::to_string(cap) + " entries");
  }
  MatD out(n, sk.ell());
  const Index nh = sk.n_hat();
  for (Index j = 0; j < sk.ell(); ++j) {
    for (Index i = 0; i < sk.n_tilde(); ++i) {
      out.col(j).segment(i * nh, nh) = (sk.scale * sk.tilde(i, j)) * sk.hat.col(j);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sample-size bounds

/// log(1/delta) given delta.
inline double log_inv(double delta) { return -std::log(delta); }

struct JlBound {
  std::uint64_t ell = 0;
  std::uint64_t p = 0;
};

/// C = 128 e^4.
inline long double jl_constant() { return 128.0L * std::exp(4.0L); }
/// C = (2000 e^4)^2.
inline long double ose_constant() {
  const long double c = 2000.0L * std::exp(4.0L);
  return c * c;
}

namespace detail {
inline std::uint64_t checked_ceil(long double value) {
  if (!(value >= 0) || value > 9.2e18L) throw OutOfRange("sample bound does not fit in 64 bits");
  return static_cast<std::uint64_t>(std::ceil(value));
}
}  // namespace detail

/// JL moment bound for the normalized Khatri-Rao sketch: moment order
/// p = ceil(L/2) and ell = ceil(C^2 L eps^-2 + C L^2 eps^-1), L = log(1/delta).
/// Takes L directly so that delta = e^-8 can be passed exactly.
inline JlBound jl_moment_sample_bound(double epsilon, double log_inv_delta) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw OutOfRange("epsilon must lie in (0, 1]");
  if (!(log_inv_delta >= 8.0) || !std::isfinite(log_inv_delta)) {
    throw OutOfRange("delta must lie in (0, e^-8]");
  }
  const long double C = jl_constant();
  const long double L = log_inv_delta;
  const long double e = epsilon;
  JlBound out;
  out.p = detail::checked_ceil(0.5L * L);
  out.ell = detail::checked_ceil(C * C * L / (e * e) + C * L * L / e);
  return out;
}

struct OseBoundParams {
  double epsilon = 0.5;
  double log_inv_delta = 1.0;  // log(1/delta), delta in (0, 1/2)
  std::int64_t k = 1;

  static OseBoundParams from_delta(double epsilon, double delta, std::int64_t k) {
    return OseBoundParams{epsilon, log_inv(delta), k};
  }
};

/// ell = ceil(C (k^{3/2} eps^-2 + k L eps^-2 + k^{1/2} L^2 eps^-1)),
/// C = (2000 e^4)^2.
inline std::uint64_t ose_sample_bound(const OseBoundParams& p) {
  if (!(p.epsilon > 0.0 && p.epsilon <= 1.0)) throw OutOfRange("epsilon must lie in (0, 1]");
  if (!(p.log_inv_delta > std::log(2.0)) || !std::isfinite(p.log_inv_delta)) {
    throw OutOfRange("delta must lie in (0, 1/2)");
  }
  if (p.k < 1) throw OutOfRange("subspace dimension k must be >= 1");
  const long double C = ose_constant();
  const long double k = static_cast<long double>(p.k);
  const long double L = p.log_inv_delta;
  const long double e = p.epsilon;
  const long double value =
      C * (std::pow(k, 1.5L) / (e * e) + k * L / (e * e) + std::sqrt(k) * L * L / e);
  return detail::checked_ceil(value);
}

// ---------------------------------------------------------------------------
// Embedding diagnostics

/// ||(Omega^T U)^T (Omega^T U) - I||_2 for U with orthonormal columns.
inline double embedding_distortion(const MatD& Omega, const MatD& U) {
  if (Omega.rows() != U.rows()) throw DimensionMismatch("Omega and U must have the same number of rows");
  const MatD S = Omega.transpose() * U;
  MatD G = S.transpose() * S;
  G.diagonal().array() -= 1.0;
  if (G.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatD> es(G, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// ||M^+||_2 = 1 / sigma_min(M) for an ell x k matrix, +inf when M is
/// numerically rank deficient or has fewer rows than columns.
inline double pinv_norm(const MatD& M) {
  if (M.cols() == 0) return 0.0;
  if (M.rows() < M.cols()) return std::numeric_limits<double>::infinity();
  const VecD s = svd_thin(M, false).S;
  const double smin = s(s.size() - 1);
  const double tol = std::numeric_limits<double>::epsilon() * s(0) * static_cast<double>(M.rows());
  if (!(smin > tol)) return std::numeric_limits<double>::infinity();
  return 1.0 / smin;
}

// ---------------------------------------------------------------------------
// Subspace embedding experiments

enum class SketchFamily { gaussian, khatri_rao };
enum class UMode { random_orthonormal, rank_one };

inline const char* to_string(SketchFamily f) {
  return f == SketchFamily::gaussian ? "gaussian" : "khatri_rao";
}
inline const char* to_string(UMode m) { return m == UMode::random_orthonormal ? "random" : "rank_one"; }

struct OseSweepConfig {
  Index n_tilde = 20;
  Index n_hat = 20;
  std::vector<Index> ks{8};
  /// ell values for which full statistics are tabulated (may be empty).
  std::vector<Index> ells;
  /// Search the smallest ell with P[pinv_norm >= threshold] < target.
  bool frontier = false;
  Index frontier_ell_max = 400;
  std::int64_t trials = 1000;
  double threshold = 5.0;
  double target_probability = 1.0 / 50.0;
  std::vector<SketchFamily> families{SketchFamily::gaussian, SketchFamily::khatri_rao};
  std::vector<UMode> modes{UMode::random_orthonormal, UMode::rank_one};
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct OseCell {
  SketchFamily family;
  UMode mode;
  Index n = 0;
  Index k = 0;
  Index ell = 0;
  std::int64_t trials = 0;
  double threshold = 0.0;
  double p_exceed = 0.0;
  double max = 0.0;
  double p95 = 0.0;
  double median = 0.0;
};

struct FrontierPoint {
  SketchFamily family;
  UMode mode;
  Index n = 0;
  Index k = 0;
  /// Smallest ell meeting the target, or nullopt if none up to the cap.
  std::optional<Index> ell;
  /// Statistics at the reported ell.
  std::optional<OseCell> cell;
};

struct OseSweepResult {
  std::vector<OseCell> cells;
  std::vector<FrontierPoint> frontier;
};

/// Linear-interpolation quantile of sorted data (q in [0, 1]).
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (std::isinf(sorted[lo]) || std::isinf(sorted[hi])) return frac == 0.0 ? sorted[lo] : sorted[hi];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Fixed orthonormal test basis U (n x k) for one U mode.
inline MatD test_subspace(UMode mode, Index n_tilde, Index n_hat, Index k, std::uint64_t seed) {
  const Index n = n_tilde * n_hat;
  if (k < 1 || k > n) throw OutOfRange("subspace dimension out of range");
  if (mode == UMode::random_orthonormal) return orth(gaussian(n, k, seed));
  // columns u (x) v_j: u a random unit vector on the tilde side, v_j the
  // columns of a random orthogonal matrix on the hat side
  if (k > n_hat) throw OutOfRange("rank-one mode needs k <= n_hat");
  const MatD V = orth(gaussian(n_hat, n_hat, derive_seed(seed, 1)));
  VecD u = gaussian(n_tilde, 1, derive_seed(seed, 2)).col(0);
  u.normalize();
  MatD U(n, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < n_tilde; ++i) U.col(j).segment(i * n_hat, n_hat) = u(i) * V.col(j);
  }
  return U;
}

/// One scaled sketch (columns divided by sqrt(ell)) for the experiments.
inline MatD draw_sketch(SketchFamily family, Index n_tilde, Index n_hat, Index ell, std::uint64_t seed) {
  if (family == SketchFamily::gaussian) {
    return gaussian(n_tilde * n_hat, ell, seed) / std::sqrt(static_cast<double>(ell));
  }
  auto sk = KhatriRaoSketch::draw(n_tilde, n_hat, ell, derive_seed(seed, 11), derive_seed(seed, 12), true);
  return khatri_rao_dense(sk);
}

/// pinv_norm(Omega^T U) over `trials` independent sketches; trial t uses the
/// sub-stream derive_seed(seed, ell, t).
inline OseCell ose_cell(SketchFamily family, UMode mode, const MatD& U, Index n_tilde, Index n_hat, Index ell,
                        std::int64_t trials, double threshold, std::uint64_t seed, unsigned threads) {
  if (trials < 1) throw OutOfRange("trials must be >= 1");
  std::vector<double> values(static_cast<std::size_t>(trials));
  parallel_for(values.size(), threads, [&](std::size_t t) {
    const MatD Omega = draw_sketch(family, n_tilde, n_hat, ell, derive_seed(seed, static_cast<std::uint64_t>(ell), t));
    values[t] = pinv_norm(Omega.transpose() * U);
  });
  OseCell cell{family, mode, n_tilde * n_hat, U.cols(), ell, trials, threshold};
  std::int64_t exceed = 0;
  for (double v : values) exceed += (v >= threshold) ? 1 : 0;
  std::sort(values.begin(), values.end());
  cell.p_exceed = static_cast<double>(exceed) / static_cast<double>(trials);
  cell.max = values.back();
  cell.p95 = sorted_quantile(values, 0.95);
  cell.median = sorted_quantile(values, 0.5);
  return cell;
}

/// Monte Carlo study of ||(Omega^T U)^+||_2 for each (family, U mode, k).
/// Every (family, mode, k) uses one fixed U; the frontier search scans
/// ell = k, k+1, k+3, k+7, ... until the empirical exceedance probability
/// drops below the target and then bisects the last bracket. Each ell is
/// evaluated on its own deterministic sub-streams, so the table does not
/// depend on the search path or on the thread count.
inline OseSweepResult ose_trial_sweep(const OseSweepConfig& cfg) {
  if (cfg.trials < 1) throw OutOfRange("trials must be >= 1");
  OseSweepResult result;
  for (std::size_t fi = 0; fi < cfg.families.size(); ++fi) {
    const SketchFamily family = cfg.families[fi];
    for (UMode mode : cfg.modes) {
      for (Index k : cfg.ks) {
        const std::uint64_t useed = derive_seed(cfg.seed, static_cast<std::uint64_t>(mode) + 100, static_cast<std::uint64_t>(k));
        const MatD U = test_subspace(mode, cfg.n_tilde, cfg.n_hat, k, useed);
        const std::uint64_t sseed =
            derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(family) * 10 + static_cast<std::uint64_t>(mode),
                        static_cast<std::uint64_t>(k));
        auto eval = [&](Index ell) {
          return ose_cell(family, mode, U, cfg.n_tilde, cfg.n_hat, ell, cfg.trials, cfg.threshold, sseed, cfg.threads);
        };
        for (Index ell : cfg.ells) result.cells.push_back(eval(ell));
        if (!cfg.frontier) continue;

        FrontierPoint fp{family, mode, cfg.n_tilde * cfg.n_hat, k, std::nullopt, std::nullopt};
        Index lo = k - 1;  // largest ell known to fail
        std::optional<OseCell> hi_cell;
        Index step = 1;
        Index ell = k;
        while (ell <= cfg.frontier_ell_max) {
          OseCell c = eval(ell);
          if (c.p_exceed < cfg.target_probability) {
            hi_cell = c;
            break;
          }
          lo = ell;
          ell = std::min(ell + step, cfg.frontier_ell_max + (ell == cfg.frontier_ell_max ? 1 : 0));
          step *= 2;
        }
        if (hi_cell) {
          Index hi = hi_cell->ell;
          while (hi - lo > 1) {
            const Index mid = lo + (hi - lo) / 2;
            OseCell c = eval(mid);
            if (c.p_exceed < cfg.target_probability) {
              hi = mid;
              hi_cell = c;
            } else {
              lo = mid;
            }
          }
          fp.ell = hi;
          fp.cell = hi_cell;
        }
        result.frontier.push_back(fp);
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Moment estimates

enum class InnerSampler { gaussian_inner, kr_inner };

/// Shape of the vector a for kr_inner: a = vec(A) with A of size n_hat x n_tilde.
struct InnerShape {
  Index n_tilde = 0;
  Index n_hat = 0;
};

/// Monte Carlo ||X||_{L^s} = (mean |X|^s)^{1/s} for every s in `orders`,
/// where X = <Z, a> (gaussian_inner) or X = <w_tilde (x) w_hat, a>
/// (kr_inner), all orders estimated from the same samples.
inline std::vector<double> lp_moment_estimates(InnerSampler sampler, const VecD& a, InnerShape shape,
                                               std::span<const double> orders, std::int64_t nsamples,
                                               std::uint64_t seed) {
  if (nsamples < 1000) throw OutOfRange("lp_moment_estimate needs at least 1000 samples");
  for (double s : orders) {
    if (!(s >= 1.0)) throw OutOfRange("moment order must be >= 1");
  }
  MatD A;
  if (sampler == InnerSampler::kr_inner) {
    if (shape.n_tilde * shape.n_hat != a.size()) throw DimensionMismatch("a does not match the Khatri-Rao shape");
    A = Eigen::Map<const MatD>(a.data(), shape.n_hat, shape.n_tilde);
  }
  std::vector<double> sums(orders.size(), 0.0);
  CounterRng rng(seed);
  std::uint64_t ctr = 0;
  VecD z(a.size());
  VecD wt(shape.n_tilde), wh(shape.n_hat);
  for (std::int64_t t = 0; t < nsamples; ++t) {
    double x;
    if (sampler == InnerSampler::gaussian_inner) {
      for (Index i = 0; i < a.size(); ++i) z(i) = rng.normal(ctr++);
      x = z.dot(a);
    } else {
      for (Index i = 0; i < wt.size(); ++i) wt(i) = rng.normal(ctr++);
      for (Index i = 0; i < wh.size(); ++i) wh(i) = rng.normal(ctr++);
      x = wh.dot(A * wt);
    }
    const double ax = std::abs(x);
    for (std::size_t q = 0; q < orders.size(); ++q) sums[q] += std::pow(ax, orders[q]);
  }
  std::vector<double> out(orders.size());
  for (std::size_t q = 0; q < orders.size(); ++q) {
    out[q] = std::pow(sums[q] / static_cast<double>(nsamples), 1.0 / orders[q]);
  }
  return out;
}

inline double lp_moment_estimate(InnerSampler sampler, const VecD& a, InnerShape shape, double s,
                                 std::int64_t nsamples, std::uint64_t seed) {
  const double orders[1] = {s};
  return lp_moment_estimates(sampler, a, shape, orders, nsamples, seed)[0];
}

/// Monte Carlo mean of ||Omega^T x||_2^2 over normalized Khatri-Rao sketches.
inline double mean_sketched_norm2(const VecD& x, Index n_tilde, Index n_hat, Index ell, std::int64_t trials,
                                  std::uint64_t seed) {
  if (x.size() != n_tilde * n_hat) throw DimensionMismatch("x does not match n_tilde * n_hat");
  const MatD X = Eigen::Map<const MatD>(x.data(), n_hat, n_tilde);
  double acc = 0.0;
  for (std::int64_t t = 0; t < trials; ++t) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(t));
    const MatD Wt = gaussian(n_tilde, ell, derive_seed(s, 1));
    const MatD Wh = gaussian(n_hat, ell, derive_seed(s, 2));
    // (w_tilde (x) w_hat)^T x = w_hat^T mat(x) w_tilde
    const MatD XW = X * Wt;
    double sum = 0.0;
    for (Index j = 0; j < ell; ++j) {
      const double v = Wh.col(j).dot(XW.col(j));
      sum += v * v;
    }
    acc += sum / static_cast<double>(ell);
  }
  return acc / static_cast<double>(trials);
}

}  // namespace krembed
