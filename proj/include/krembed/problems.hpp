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

// Finite-difference Schroedinger operators on [a, b]^2 with Dirichlet
// boundary conditions and separable-plus-product potentials
//
//   V(x, y) = f(x) + f(y) + sign * g(x) g(y),
//
// discretized on the interior grid x_i = a + h i, i = 1..n, h = (b-a)/(n+1):
//
//   A = I (x) K + K (x) I + Vt (x) Vh,   K = -T + diag(f(x_i)),
//   Vt = sign * diag(g(x_i)),            Vh = diag(g(x_i)).

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "krembed/kron.hpp"

namespace krembed {

struct SchrodingerSpec {
  double a = -1.0;
  double b = 1.0;
  Index n = 100;
  std::function<double(double)> f = [](double) { return 0.0; };
  std::function<double(double)> g = [](double) { return 0.0; };
  double sign = 1.0;
  std::string name = "zero";

  double h() const { return (b - a) / static_cast<double>(n + 1); }
  double x(Index i) const { return a + h() * static_cast<double>(i + 1); }  // 0-based i
  double potential(double xv, double yv) const { return f(xv) + f(yv) + sign * g(xv) * g(yv); }
};

/// T = tridiag(1, -2, 1) / h^2.
inline Factor laplacian_1d(const SchrodingerSpec& spec) {
  if (spec.n < 2) throw OutOfRange("grid needs n >= 2");
  const double h2 = spec.h() * spec.h();
  return Factor::tridiagonal(VecD::Constant(spec.n, -2.0 / h2), VecD::Constant(spec.n - 1, 1.0 / h2));
}

/// K = -T + diag(f(x_i)).
inline Factor schrodinger_k(const SchrodingerSpec& spec) {
  const double h2 = spec.h() * spec.h();
  VecD d(spec.n);
  for (Index i = 0; i < spec.n; ++i) d(i) = 2.0 / h2 + spec.f(spec.x(i));
  return Factor::tridiagonal(d, VecD::Constant(spec.n - 1, -1.0 / h2));
}

inline VecD grid_values(const SchrodingerSpec& spec, const std::function<double(double)>& fn) {
  VecD v(spec.n);
  for (Index i = 0; i < spec.n; ++i) v(i) = fn(spec.x(i));
  return v;
}

/// Terms [(I, K), (K, I), (Vt, Vh)]; the coupling term is omitted when g
/// vanishes on the grid.
inline KroneckerSumOperator schrodinger_kron(const SchrodingerSpec& spec) {
  const Factor K = schrodinger_k(spec);
  const Factor I = Factor::identity(spec.n);
  std::vector<KronTerm> terms{{I, K}, {K, I}};
  const VecD gv = grid_values(spec, spec.g);
  if (gv.cwiseAbs().maxCoeff() > 0.0) {
    terms.push_back({Factor::diagonal(spec.sign * gv), Factor::diagonal(gv)});
  }
  return KroneckerSumOperator(std::move(terms));
}

/// Closed-form eigenvalues of -T, ascending: (4/h^2) sin^2(k pi / (2(n+1))).
inline VecD fd_laplacian_eigenvalues(Index n, double h) {
  VecD mu(n);
  for (Index k = 1; k <= n; ++k) {
    const double s = std::sin(static_cast<double>(k) * M_PI / (2.0 * static_cast<double>(n + 1)));
    mu(k - 1) = 4.0 / (h * h) * s * s;
  }
  return mu;
}

/// The `count` smallest values of mu_i + mu_j (with multiplicity).
inline std::vector<double> fd_laplacian_2d_smallest(Index n, double h, Index count) {
  const VecD mu = fd_laplacian_eigenvalues(n, h);
  std::vector<double> all;
  const Index lim = std::min<Index>(n, count + 1);
  for (Index i = 0; i < lim; ++i) {
    for (Index j = 0; j < lim; ++j) all.push_back(mu(i) + mu(j));
  }
  std::sort(all.begin(), all.end());
  all.resize(static_cast<std::size_t>(std::min<Index>(count, static_cast<Index>(all.size()))));
  return all;
}

// ---------------------------------------------------------------------------
// Registered potentials

/// V = (x^2 + y^2 - xy)/2 on [-1, 1]^2: f = x^2/2, g = x/sqrt(2), sign -1.
inline SchrodingerSpec sum_of_squares(Index n) {
  SchrodingerSpec s;
  s.a = -1.0;
  s.b = 1.0;
  s.n = n;
  s.f = [](double x) { return 0.5 * x * x; };
  s.g = [](double x) { return x / std::sqrt(2.0); };
  s.sign = -1.0;
  s.name = "sum-of-squares";
  return s;
}

/// V = -50 exp(-x^2 - y^2) on [-5, 5]^2: f = 0, g = sqrt(50) exp(-x^2), sign -1.
inline SchrodingerSpec gaussian_well(Index n) {
  SchrodingerSpec s;
  s.a = -5.0;
  s.b = 5.0;
  s.n = n;
  s.f = [](double) { return 0.0; };
  s.g = [](double x) { return std::sqrt(50.0) * std::exp(-x * x); };
  s.sign = -1.0;
  s.name = "gaussian-well";
  return s;
}

/// V = cos x + cos y - 6 exp(-x^2 - y^2) on [-25, 25]^2: f = cos,
/// g = sqrt(6) exp(-x^2), sign -1.
inline SchrodingerSpec mathieu(Index n) {
  SchrodingerSpec s;
  s.a = -25.0;
  s.b = 25.0;
  s.n = n;
  s.f = [](double x) { return std::cos(x); };
  s.g = [](double x) { return std::sqrt(6.0) * std::exp(-x * x); };
  s.sign = -1.0;
  s.name = "mathieu";
  return s;
}

/// V = 0 on [-1, 1]^2.
inline SchrodingerSpec zero_potential(Index n) {
  SchrodingerSpec s;
  s.n = n;
  s.name = "zero";
  return s;
}

inline std::vector<std::string> registered_potentials() {
  return {"sum-of-squares", "gaussian-well", "mathieu", "zero"};
}

/// Looks up a registered potential; throws OutOfRange for unknown names.
inline SchrodingerSpec potential_by_name(const std::string& name, Index n) {
  if (name == "sum-of-squares") return sum_of_squares(n);
  if (name == "gaussian-well") return gaussian_well(n);
  if (name == "mathieu") return mathieu(n);
  if (name == "zero") return zero_potential(n);
  std::string known;
  for (const auto& k : registered_potentials()) known += (known.empty() ? "" : ", ") + k;
  throw OutOfRange("unknown potential '" + name + "'; registered: " + known);
}

// ---------------------------------------------------------------------------
// Operator transformations

namespace detail {
/// Index pair (i, j) with terms i = (I, K) and j = (K, I) for the same K.
inline std::pair<int, int> find_laplacian_pair(const KroneckerSumOperator& A) {
  const auto& t = A.terms();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!t[i].tilde.is_identity() || t[i].hat.is_identity()) continue;
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (i == j || !t[j].hat.is_identity() || t[j].tilde.is_identity()) continue;
      if (t[i].hat.same_as(t[j].tilde)) return {static_cast<int>(i), static_cast<int>(j)};
    }
  }
  return {-1, -1};
}
}  // namespace detail

/// A + sigma I, by replacing K with K + (sigma/2) I in the (I, K) and
/// (K, I) terms. Throws StructureMismatch when no such pair exists and
/// `fallback` is false; with `fallback` the term (I, sigma I) is appended.
inline KroneckerSumOperator shift_operator(const KroneckerSumOperator& A, double sigma, bool fallback = false) {
  if (sigma == 0.0) return A;
  auto [i, j] = detail::find_laplacian_pair(A);
  std::vector<KronTerm> terms = A.terms();
  if (i < 0) {
    if (!fallback) throw StructureMismatch("operator has no (I, K), (K, I) pair to shift");
    terms.push_back({Factor::identity(A.n_tilde()), Factor::diagonal(VecD::Constant(A.n_hat(), sigma))});
    return KroneckerSumOperator(std::move(terms));
  }
  terms[static_cast<std::size_t>(i)].hat = terms[static_cast<std::size_t>(i)].hat.plus_identity(0.5 * sigma);
  terms[static_cast<std::size_t>(j)].tilde = terms[static_cast<std::size_t>(j)].tilde.plus_identity(0.5 * sigma);
  return KroneckerSumOperator(std::move(terms));
}

/// A^2 expanded symbolically as sum_{i,i'} (tilde_i tilde_i') (x) (hat_i hat_i'),
/// merging terms whose tilde factors coincide (hat factors add) or whose hat
/// factors coincide (tilde factors add).
inline KroneckerSumOperator square_operator(const KroneckerSumOperator& A) {
  std::vector<KronTerm> raw;
  for (const auto& t1 : A.terms()) {
    for (const auto& t2 : A.terms()) raw.push_back({t1.tilde * t2.tilde, t1.hat * t2.hat});
  }
  std::vector<KronTerm> merged;
  for (auto& t : raw) {
    bool done = false;
    for (auto& m : merged) {
      if (m.tilde.same_as(t.tilde)) {
        m.hat = m.hat + t.hat;
        done = true;
        break;
      }
      if (m.hat.same_as(t.hat)) {
        m.tilde = m.tilde + t.tilde;
        done = true;
        break;
      }
    }
    if (!done) merged.push_back(std::move(t));
  }
  return KroneckerSumOperator(std::move(merged));
}

}  // namespace krembed
