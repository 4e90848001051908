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


// Walk-through: build a Schroedinger operator in Kronecker form, compute
// the eigenvalues inside a circle with the filtered-subspace solver, then
// the smallest ones with low-rank LOBPCG, and compare both with a modal
// reference.

#include <cstdio>

#include "krembed/contour.hpp"
#include "krembed/lobpcg.hpp"
#include "krembed/problems.hpp"

using namespace krembed;

int main() {
  const Index n = 60;
  const auto A = schrodinger_kron(sum_of_squares(n));
  std::printf("operator: %td terms, n_tilde = n_hat = %td (vector length %td)\n",
              static_cast<std::ptrdiff_t>(A.terms().size()), static_cast<std::ptrdiff_t>(n),
              static_cast<std::ptrdiff_t>(n * n));

  // Exact eigenvalues for comparison (n^2 = 3600 is still fine densely).
  Eigen::SelfAdjointEigenSolver<MatD> es(assemble_dense(A), Eigen::EigenvaluesOnly);

  const auto sk = KhatriRaoSketch::draw(n, n, 6, derive_seed(7, 1), derive_seed(7, 2));
  const auto filter = trapezoid_circle(12.606, 9.0, 40);
  ContourConfig ccfg;
  ccfg.solver.tol = 1e-10;
  const auto cres = contour_eigensolve(A, filter, sk, ccfg);
  std::printf("\ncontour (center 12.606, radius 9, 40 nodes): %td inside, factor ranks %td/%td\n",
              static_cast<std::ptrdiff_t>(cres.inside_count), static_cast<std::ptrdiff_t>(cres.r_hat),
              static_cast<std::ptrdiff_t>(cres.r_tilde));
  for (Index i = 0; i < cres.ritz_values.size(); ++i) {
    if (!cres.inside[static_cast<std::size_t>(i)]) continue;
    const double ref = (es.eigenvalues().array() - cres.ritz_values(i)).abs().minCoeff();
    std::printf("  lambda = %.12f  residual %.2e  |error| %.2e\n", cres.ritz_values(i), cres.residual_norms(i), ref);
  }
  std::printf("  storage: %lld scalars vs %lld dense\n", static_cast<long long>(cres.factor_storage),
              static_cast<long long>(n * n * sk.ell()));

  LobpcgConfig lcfg;
  lcfg.k = 4;
  lcfg.ell = 6;
  lcfg.conv_mode = ConvergenceMode::absolute;
  lcfg.conv_tol = 1e-6;
  const auto lres = lobpcg_lowrank(A, lcfg, BlrD::from_khatri_rao(sk));
  std::printf("\nlobpcg (eps 1e-7, r_max 50): %s after %d iterations\n", lres.converged ? "converged" : "stopped",
              lres.iterations);
  for (Index i = 0; i < lres.values.size(); ++i) {
    std::printf("  lambda = %.12f  residual %.2e  |error| %.2e\n", lres.values(i), lres.residuals(i),
                std::abs(lres.values(i) - es.eigenvalues()(i)));
  }
  Index peak = 0;
  for (const auto& h : lres.history) peak = std::max(peak, h.rank_x);
  std::printf("  rank of X: peak %td, final %td\n", static_cast<std::ptrdiff_t>(peak),
              static_cast<std::ptrdiff_t>(lres.history.back().rank_x));
  return 0;
}
