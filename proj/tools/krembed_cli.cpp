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


// krembed_cli: batch experiments with CSV/JSON output.
//
//   krembed_cli ose-stats       [--config FILE] [options]
//   krembed_cli contour         [--config FILE] [options]
//   krembed_cli lobpcg          [--config FILE] [options]
//   krembed_cli sylvester-bench [--config FILE] [options]
//
// A config file holds `option = value` lines using the long option names
// without dashes; options given on the command line win. Every run writes
// a JSON summary with a "schema" field, the resolved configuration and a
// separate "timing" object. CSV columns ending in "_seconds" hold timings.
// Exit codes: 0 success, 1 solver failure, 2 invalid configuration.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "krembed/contour.hpp"
#include "krembed/io.hpp"
#include "krembed/lobpcg.hpp"
#include "krembed/problems.hpp"
#include "krembed/sketch.hpp"
#include "krembed/sylvester.hpp"

using namespace krembed;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kSchema = "krembed/1";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string out = "krembed_out";
  unsigned threads = 0;
  std::uint64_t seed = 1;
  std::string config;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key=value config file");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker threads (0 = all cores)")->capture_default_str();
  sub->add_option("--seed", c.seed, "master seed")->capture_default_str();
}

json common_json(const Common& c) { return json{{"seed", c.seed}}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::filesystem::path prepare_out(const Common& c) {
  std::filesystem::path p(c.out);
  std::filesystem::create_directories(p);
  return p;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path);
  f << j.dump(2) << "\n";
}

SchrodingerSpec resolve_potential(const std::string& name, Index n) {
  try {
    return potential_by_name(name, n);
  } catch (const OutOfRange& e) {
    throw ConfigError(e.what());
  }
}

json vec_json(const VecD& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v(i)) ? json(v(i)) : json(io::format_double(v(i))));
  return a;
}

// ---------------------------------------------------------------------------
// ose-stats

struct OseOpts {
  Index n_tilde = 20, n_hat = 20;
  Index k_min = 4, k_max = 20, k_step = 4;
  std::int64_t trials = 1000;
  double threshold = 5.0;
  double probability = 1.0 / 50.0;
  Index panel_k = 8;
  std::vector<Index> ells{8, 10, 12, 16, 20, 24, 32};
  Index ell_max = 400;
};

int cmd_ose_stats(const Common& c, const OseOpts& o) {
  if (o.k_min < 1 || o.k_max < o.k_min || o.k_step < 1) throw ConfigError("k range must satisfy 1 <= k-min <= k-max, k-step >= 1");
  if (o.trials < 1) throw ConfigError("trials must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = prepare_out(c);

  OseSweepConfig fc;
  fc.n_tilde = o.n_tilde;
  fc.n_hat = o.n_hat;
  fc.ks.clear();
  for (Index k = o.k_min; k <= o.k_max; k += o.k_step) fc.ks.push_back(k);
  fc.frontier = true;
  fc.frontier_ell_max = o.ell_max;
  fc.trials = o.trials;
  fc.threshold = o.threshold;
  fc.target_probability = o.probability;
  fc.seed = c.seed;
  fc.threads = c.threads;
  const auto front = ose_trial_sweep(fc);

  OseSweepConfig pc = fc;
  pc.frontier = false;
  pc.ks = {o.panel_k};
  pc.ells.clear();
  for (Index l : o.ells) {
    if (l >= o.panel_k) pc.ells.push_back(l);
  }
  const auto perc = ose_trial_sweep(pc);

  {
    std::ofstream f(dir / "ose_frontier.csv");
    io::CsvWriter w(f);
    w.row({"family", "u_mode", "n", "k", "ell", "p_exceed", "median", "p95", "max"});
    for (const auto& fp : front.frontier) {
      w.field(to_string(fp.family)).field(to_string(fp.mode)).field(static_cast<long long>(fp.n)).field(static_cast<long long>(fp.k));
      if (fp.ell) {
        w.field(static_cast<long long>(*fp.ell)).field(fp.cell->p_exceed).field(fp.cell->median).field(fp.cell->p95).field(fp.cell->max);
      } else {
        w.field("").field("").field("").field("").field("");
      }
      w.end_row();
    }
  }
  {
    std::ofstream f(dir / "ose_percentiles.csv");
    io::CsvWriter w(f);
    w.row({"family", "u_mode", "n", "k", "ell", "trials", "p_exceed", "median", "p95", "max"});
    for (const auto& cell : perc.cells) {
      w.field(to_string(cell.family)).field(to_string(cell.mode)).field(static_cast<long long>(cell.n))
          .field(static_cast<long long>(cell.k)).field(static_cast<long long>(cell.ell)).field(static_cast<long long>(cell.trials))
          .field(cell.p_exceed).field(cell.median).field(cell.p95).field(cell.max);
      w.end_row();
    }
  }
  json j;
  j["schema"] = kSchema;
  j["command"] = "ose-stats";
  j["config"] = common_json(c);
  j["config"].update(json{{"n_tilde", o.n_tilde}, {"n_hat", o.n_hat}, {"k_min", o.k_min}, {"k_max", o.k_max},
                          {"k_step", o.k_step}, {"trials", o.trials}, {"threshold", o.threshold},
                          {"probability", o.probability}, {"panel_k", o.panel_k}, {"ells", o.ells}, {"ell_max", o.ell_max}});
  j["outputs"] = {"ose_frontier.csv", "ose_percentiles.csv"};
  j["timing"] = {{"total_seconds", seconds_since(t0)}};
  write_json(dir / "ose_stats.json", j);
  return 0;
}

// ---------------------------------------------------------------------------
// contour

struct ContourOpts {
  std::string potential = "sum-of-squares";
  Index n = 300;
  Index ell = 6;
  int q = 40;
  double center = 12.606;
  double radius = 9.0;
  double tol = 1e-10;
  int max_iter = 200;
  Index rank_cap = 90;
  int precond_iter = 55;
  double precond_tol = 1e-5;
  double recompress_eps = -1.0;  // < 0: 1e-2 * tol
  double assembly_eps = -1.0;
  Index assembly_cap = 2000;
  bool oracle = false;
};

int cmd_contour(const Common& c, const ContourOpts& o) {
  const SchrodingerSpec spec = resolve_potential(o.potential, o.n);
  if (o.ell < 1 || o.q < 2 || !(o.radius > 0)) throw ConfigError("need ell >= 1, q >= 2, radius > 0");
  if (o.oracle && o.n > 40) throw ConfigError("--oracle is limited to n <= 40");
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = prepare_out(c);
  const auto A = schrodinger_kron(spec);
  const auto filter = trapezoid_circle(o.center, o.radius, o.q);
  const auto sk = KhatriRaoSketch::draw(o.n, o.n, o.ell, derive_seed(c.seed, 1), derive_seed(c.seed, 2));
  ContourConfig cfg;
  cfg.solver.tol = o.tol;
  cfg.solver.max_iter = o.max_iter;
  cfg.solver.rank_cap = o.rank_cap;
  cfg.solver.precond_iter = o.precond_iter;
  cfg.solver.precond_tol = o.precond_tol;
  cfg.recompress_eps = o.recompress_eps;
  cfg.recompress_rank = o.rank_cap;
  cfg.assembly_eps = o.assembly_eps;
  cfg.assembly_rank_cap = o.assembly_cap;
  cfg.threads = c.threads;
  const auto res = contour_eigensolve(A, filter, sk, cfg);

  std::size_t failed = 0;
  {
    std::ofstream f(dir / "contour_nodes.csv");
    io::CsvWriter w(f);
    w.row({"node", "column", "z_re", "z_im", "iterations", "residual", "converged", "breakdown", "restarts", "rank",
           "failed", "message"});
    for (const auto& r : res.reports) {
      failed += r.failed ? 1 : 0;
      w.field(r.node).field(r.column).field(r.z.real()).field(r.z.imag()).field(r.iterations).field(r.residual)
          .field(r.converged).field(r.breakdown).field(r.restarts).field(static_cast<long long>(r.rank)).field(r.failed)
          .field(r.message);
      w.end_row();
    }
  }
  json j;
  j["schema"] = kSchema;
  j["command"] = "contour";
  j["config"] = common_json(c);
  j["config"].update(json{{"potential", o.potential}, {"n", o.n}, {"ell", o.ell}, {"q", o.q}, {"center", o.center},
                          {"radius", o.radius}, {"tol", o.tol}, {"max_iter", o.max_iter}, {"rank_cap", o.rank_cap},
                          {"precond_iter", o.precond_iter}, {"precond_tol", o.precond_tol},
                          {"recompress_eps", cfg.effective_recompress_eps()},
                          {"assembly_eps", cfg.effective_assembly_eps()},
                          {"assembly_cap", o.assembly_cap}, {"oracle", o.oracle}});
  json ritz = json::array();
  for (Index i = 0; i < res.ritz_values.size(); ++i) {
    ritz.push_back({{"value", res.ritz_values(i)}, {"residual", res.residual_norms(i)},
                    {"inside", static_cast<bool>(res.inside[static_cast<std::size_t>(i)])}});
  }
  j["ritz"] = ritz;
  j["inside_count"] = res.inside_count;
  j["subspace_dim"] = res.subspace_dim;
  j["r_hat"] = res.r_hat;
  j["r_tilde"] = res.r_tilde;
  j["factor_storage"] = res.factor_storage;
  j["dense_subspace_storage"] = static_cast<std::int64_t>(o.n) * o.n * o.ell;
  j["failed_solves"] = failed;
  std::size_t nonconv = 0;
  for (const auto& r : res.reports) nonconv += r.converged ? 0 : 1;
  j["unconverged_solves"] = nonconv;
  j["accumulated_ranks"] = res.accumulated_ranks;
  if (o.oracle) {
    Eigen::SelfAdjointEigenSolver<MatD> es(assemble_dense(A), Eigen::EigenvaluesOnly);
    double max_err = 0.0;
    int dense_inside = 0;
    for (Index i = 0; i < es.eigenvalues().size(); ++i) dense_inside += inside_circle(filter, es.eigenvalues()(i)) ? 1 : 0;
    for (Index i = 0; i < res.ritz_values.size(); ++i) {
      if (!res.inside[static_cast<std::size_t>(i)]) continue;
      const double err = (es.eigenvalues().array() - res.ritz_values(i)).abs().minCoeff();
      max_err = std::max(max_err, err);
    }
    j["oracle"] = {{"dense_inside_count", dense_inside}, {"max_eigenvalue_error", max_err}};
  }
  j["timing"] = {{"solve_seconds", res.solve_seconds}, {"extract_seconds", res.extract_seconds},
                 {"total_seconds", seconds_since(t0)}};
  write_json(dir / "contour.json", j);
  return 2 * failed > res.reports.size() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// lobpcg

struct LobpcgOpts {
  std::string potential = "sum-of-squares";
  Index n = 300;
  Index k = 4;
  Index ell = 6;
  double trunc_eps = 1e-7;
  Index rmax = 50;
  int adi = 8;
  int max_iter = 200;
  double conv_tol = 1e-7;
  std::string conv_mode = "relative";
  double shift = 0.0;
  bool square = false;
  bool reference = false;
  double ref_eps = 1e-10;
  int ref_iter = 140;
};

KroneckerSumOperator squared_laplace_precond(const KroneckerSumOperator& B) {
  const auto [i, j] = detail::find_laplacian_pair(B);
  if (i < 0) throw StructureMismatch("operator lacks the I (x) K + K (x) I pair");
  const Factor K = B.terms()[static_cast<std::size_t>(i)].hat;
  const Factor K2 = K * K;
  const Factor I = Factor::identity(K.size());
  return KroneckerSumOperator({{I, K2}, {K2, I}});
}

int cmd_lobpcg(const Common& c, const LobpcgOpts& o) {
  const SchrodingerSpec spec = resolve_potential(o.potential, o.n);
  if (o.conv_mode != "relative" && o.conv_mode != "absolute") throw ConfigError("conv-mode must be relative or absolute");
  if (o.k < 1 || o.ell < o.k) throw ConfigError("need 1 <= k <= ell");
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = prepare_out(c);
  const auto A = schrodinger_kron(spec);

  LobpcgConfig cfg;
  cfg.k = o.k;
  cfg.ell = o.ell;
  cfg.trunc_eps = o.trunc_eps;
  cfg.r_max = o.rmax;
  cfg.adi_iterations = o.adi;
  cfg.max_iter = o.max_iter;
  cfg.conv_tol = o.conv_tol;
  cfg.conv_mode = o.conv_mode == "relative" ? ConvergenceMode::relative : ConvergenceMode::absolute;
  cfg.threads = c.threads;
  KroneckerSumOperator op = A;
  if (o.square) {
    const KroneckerSumOperator B = shift_operator(A, o.shift, true);
    cfg.precond = squared_laplace_precond(B);
    op = square_operator(B);
  } else {
    cfg.shift = o.shift;
  }
  const auto sk = KhatriRaoSketch::draw(o.n, o.n, o.ell, derive_seed(c.seed, 1), derive_seed(c.seed, 2));
  const BlrD X0 = BlrD::from_khatri_rao(sk);
  const auto res = lobpcg_lowrank(op, cfg, X0);

  std::optional<LobpcgResult> ref;
  if (o.reference) {
    LobpcgConfig rc = cfg;
    rc.trunc_eps = o.ref_eps;
    rc.r_max = o.n;
    rc.max_iter = o.ref_iter;
    rc.conv_mode = ConvergenceMode::absolute;
    rc.conv_tol = 0.0;
    ref = lobpcg_lowrank(op, rc, X0);
  }

  {
    std::ofstream f(dir / "lobpcg_history.csv");
    io::CsvWriter w(f);
    std::vector<std::string> head{"iter"};
    for (Index j = 1; j <= o.ell; ++j) head.push_back("ritz_" + std::to_string(j));
    for (Index j = 1; j <= o.ell; ++j) head.push_back("resid_" + std::to_string(j));
    for (const char* s : {"rank_x", "rank_x_pre", "rank_r", "rank_p", "orth_error", "fallback"}) head.push_back(s);
    if (ref) {
      for (Index j = 1; j <= o.k; ++j) head.push_back("err_" + std::to_string(j));
    }
    w.row(head);
    for (const auto& h : res.history) {
      w.field(h.iter);
      for (Index j = 0; j < o.ell; ++j) w.field(h.ritz(j) - cfg.shift);
      for (Index j = 0; j < o.ell; ++j) w.field(h.residuals(j));
      w.field(static_cast<long long>(h.rank_x)).field(static_cast<long long>(h.rank_x_pre))
          .field(static_cast<long long>(h.rank_r)).field(static_cast<long long>(h.rank_p)).field(h.orth_error)
          .field(h.fallback);
      if (ref) {
        for (Index j = 0; j < o.k; ++j) w.field(std::abs(h.ritz(j) - cfg.shift - ref->values(j)));
      }
      w.end_row();
    }
  }

  json j;
  j["schema"] = kSchema;
  j["command"] = "lobpcg";
  j["config"] = common_json(c);
  j["config"].update(json{{"potential", o.potential}, {"n", o.n}, {"k", o.k}, {"ell", o.ell},
                          {"trunc_eps", o.trunc_eps}, {"rmax", o.rmax}, {"adi", o.adi}, {"max_iter", o.max_iter},
                          {"conv_tol", o.conv_tol}, {"conv_mode", o.conv_mode}, {"shift", o.shift},
                          {"square", o.square}, {"reference", o.reference}, {"ref_eps", o.ref_eps},
                          {"ref_iter", o.ref_iter}});
  j["values"] = vec_json(res.values);
  j["residuals"] = vec_json(res.residuals);
  j["converged"] = res.converged;
  j["iterations"] = res.iterations;
  j["norm_estimate"] = res.norm_estimate;
  j["threshold"] = res.threshold;
  j["drift_violations"] = res.drift_violations;
  if (o.square) {
    // Rayleigh quotients with the original operator pick the root of
    // (lambda + shift)^2 = theta.
    const BlrD AX = apply_operator(A, res.vectors);
    const MatD num = block_inner(res.vectors, AX);
    const MatD den = block_inner(res.vectors, res.vectors);
    VecD lam(o.k), roots(o.k);
    for (Index i = 0; i < o.k; ++i) {
      lam(i) = num(i, i) / den(i, i);
      const double r = std::sqrt(std::max(0.0, res.values(i)));
      roots(i) = std::abs(-o.shift + r - lam(i)) < std::abs(-o.shift - r - lam(i)) ? -o.shift + r : -o.shift - r;
    }
    j["original_rayleigh"] = vec_json(lam);
    j["original_values"] = vec_json(roots);
  }
  if (ref) {
    j["reference"] = {{"values", vec_json(ref->values)}, {"residuals", vec_json(ref->residuals)},
                      {"iterations", ref->iterations}};
  }
  j["timing"] = {{"solver_seconds", res.seconds}, {"reference_seconds", ref ? ref->seconds : 0.0},
                 {"total_seconds", seconds_since(t0)}};
  write_json(dir / "lobpcg.json", j);
  return 0;
}

// ---------------------------------------------------------------------------
// sylvester-bench

struct BenchOpts {
  std::string potential = "sum-of-squares";
  std::vector<Index> ns{300, 1000};
  std::vector<double> tols{1e-6, 1e-10};
  Index ell = 6;
  int q = 40;
  int nodes = 4;
  double center = 12.606;
  double radius = 9.0;
  int max_iter = 200;
  Index rank_cap = 90;
  int precond_iter = 55;
  double precond_tol = 1e-5;
  Index decay_n = 300;
  Index decay_count = 60;
};

/// Right-preconditioned BiCGstab on full n_hat x n_tilde matrices with the
/// two-term part inverted exactly in the eigenbases of the factors.
MatC dense_multiterm_solve(const MultitermSylvester& p, const MatC& rhs, double tol, int max_iter) {
  Eigen::SelfAdjointEigenSolver<MatD> eh(p.Acoef.F.to_dense()), et(p.Bcoef.F.to_dense());
  const MatC Sh = eh.eigenvectors().cast<Complex>(), St = et.eigenvectors().cast<Complex>();
  MatC D(eh.eigenvalues().size(), et.eigenvalues().size());
  for (Index i = 0; i < D.rows(); ++i) {
    for (Index j = 0; j < D.cols(); ++j) {
      D(i, j) = p.Acoef.a * eh.eigenvalues()(i) + p.Acoef.c + p.Bcoef.a * et.eigenvalues()(j) + p.Bcoef.c;
    }
  }
  auto Minv = [&](const MatC& Y) -> MatC {
    const MatC T = (Sh.adjoint() * Y * St.conjugate()).cwiseQuotient(D);
    return Sh * T * St.transpose();
  };
  auto dot = [](const MatC& a, const MatC& b) { return a.cwiseProduct(b.conjugate()).sum(); };
  MatC x = MatC::Zero(rhs.rows(), rhs.cols());
  MatC r = rhs, rhat = rhs, v = MatC::Zero(rhs.rows(), rhs.cols()), pd = v;
  Complex rho_old(1.0), alpha(1.0), omega(1.0);
  const double bn = rhs.norm();
  for (int it = 0; it < max_iter; ++it) {
    const Complex rho = dot(r, rhat);
    const Complex beta = (rho / rho_old) * (alpha / omega);
    pd = r + beta * (pd - omega * v);
    const MatC ph = Minv(pd);
    v = p.apply_dense(ph);
    alpha = rho / dot(v, rhat);
    const MatC s = r - alpha * v;
    x += alpha * ph;
    if (s.norm() <= tol * bn) break;
    const MatC sh = Minv(s);
    const MatC t = p.apply_dense(sh);
    omega = dot(s, t) / dot(t, t);
    x += omega * sh;
    r = s - omega * t;
    if (r.norm() <= tol * bn) break;
    rho_old = rho;
  }
  return x;
}

VecD factored_singular_values(const MatC& L, const MatC& R) {
  if (L.cols() == 0) return VecD::Zero(0);
  const auto ql = qr_econ(L), qr = qr_econ(R);
  return svd_thin(MatC(ql.R * qr.R.transpose()), false).S;
}

int cmd_sylvester_bench(const Common& c, const BenchOpts& o) {
  resolve_potential(o.potential, 4);
  if (o.nodes < 1 || o.nodes > o.q / 2) throw ConfigError("nodes must lie in [1, q/2]");
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = prepare_out(c);
  const auto filter = trapezoid_circle(o.center, o.radius, o.q);
  // evenly spaced nodes of the upper half plane
  std::vector<Complex> zs;
  const int half = o.q / 2;
  for (int i = 0; i < o.nodes; ++i) zs.push_back(filter.nodes[static_cast<std::size_t>(i * half / o.nodes)]);

  json rows = json::array();
  {
    std::ofstream f(dir / "sylvester_bench.csv");
    io::CsvWriter w(f);
    w.row({"n", "tol", "nodes", "columns", "worst_residual", "unconverged", "max_rank", "factor_bytes",
           "mean_node_seconds"});
    for (Index n : o.ns) {
      const auto A = schrodinger_kron(resolve_potential(o.potential, n));
      const auto parts = resolvent_parts(A);
      const auto sk = KhatriRaoSketch::draw(n, n, o.ell, derive_seed(c.seed, 1, static_cast<std::uint64_t>(n)),
                                            derive_seed(c.seed, 2, static_cast<std::uint64_t>(n)));
      for (double tol : o.tols) {
        BicgstabConfig bc;
        bc.tol = tol;
        bc.max_iter = o.max_iter;
        bc.rank_cap = o.rank_cap;
        bc.precond_iter = o.precond_iter;
        bc.precond_tol = o.precond_tol;
        double worst = 0.0, total = 0.0;
        Index max_rank = 0;
        std::int64_t bytes = 0;
        int unconverged = 0;
        for (const Complex z : zs) {
          const auto ts = std::chrono::steady_clock::now();
          const auto p0 = resolvent_equation(parts, z, MatC(), MatC());
          const AdiPreconditioner M(p0.Acoef, p0.Bcoef, bc.precond_iter, bc.precond_tol);
          std::vector<FactoredSolution> sols(static_cast<std::size_t>(o.ell));
          parallel_for(sols.size(), c.threads, [&](std::size_t jc) {
            const Index j = static_cast<Index>(jc);
            const auto p = resolvent_equation(parts, z, (sk.scale * sk.hat.col(j)).cast<Complex>(),
                                              sk.tilde.col(j).cast<Complex>());
            sols[jc] = bicgstab_multiterm(p, M, bc);
          });
          total += seconds_since(ts);
          std::int64_t node_bytes = 0;
          for (const auto& s : sols) {
            worst = std::max(worst, s.achieved_residual);
            unconverged += s.converged ? 0 : 1;
            max_rank = std::max(max_rank, s.rank());
            node_bytes += static_cast<std::int64_t>(2 * n * s.rank()) * 16;
          }
          bytes = std::max(bytes, node_bytes);
        }
        const double mean = total / static_cast<double>(zs.size());
        w.field(static_cast<long long>(n)).field(tol).field(static_cast<int>(zs.size())).field(static_cast<long long>(o.ell))
            .field(worst).field(unconverged).field(static_cast<long long>(max_rank)).field(static_cast<long long>(bytes))
            .field(mean);
        w.end_row();
        rows.push_back({{"n", n}, {"tol", tol}, {"worst_residual", worst}, {"unconverged", unconverged},
                        {"max_rank", max_rank}, {"factor_bytes", bytes}});
      }
    }
  }

  // singular value decay of one solution: Khatri-Rao (rank-one) versus
  // unstructured right-hand side, at z = center + radius e^{i pi/4}
  const Index n = o.decay_n;
  const auto A = schrodinger_kron(resolve_potential(o.potential, n));
  const auto parts = resolvent_parts(A);
  const Complex z = o.center + o.radius * std::exp(Complex(0.0, M_PI / 4.0));
  const auto sk = KhatriRaoSketch::draw(n, n, 1, derive_seed(c.seed, 3), derive_seed(c.seed, 4));
  BicgstabConfig bc;
  bc.tol = 1e-10;
  bc.max_iter = o.max_iter;
  bc.rank_cap = o.rank_cap;
  bc.precond_iter = o.precond_iter;
  bc.precond_tol = o.precond_tol;
  const auto prk = resolvent_equation(parts, z, (sk.scale * sk.hat.col(0)).cast<Complex>(), sk.tilde.col(0).cast<Complex>());
  const auto srk = bicgstab_multiterm(prk, bc);
  const VecD s1 = factored_singular_values(srk.Xhat, srk.Xtil);
  const MatD Wd = gaussian(n, n, derive_seed(c.seed, 5));
  const auto pd = resolvent_equation(parts, z, MatC(), MatC());
  const MatC Xd = dense_multiterm_solve(pd, Wd.cast<Complex>(), 1e-12, 500);
  const VecD s2 = svd_thin(Xd, false).S;
  {
    std::ofstream f(dir / "sylvester_decay.csv");
    io::CsvWriter w(f);
    w.row({"index", "khatri_rao", "unstructured"});
    for (Index i = 0; i < o.decay_count && i < n; ++i) {
      w.field(static_cast<long long>(i + 1)).field(i < s1.size() ? s1(i) / s1(0) : 0.0).field(s2(i) / s2(0));
      w.end_row();
    }
  }
  json j;
  j["schema"] = kSchema;
  j["command"] = "sylvester-bench";
  j["config"] = common_json(c);
  j["config"].update(json{{"potential", o.potential}, {"ns", o.ns}, {"tols", o.tols}, {"ell", o.ell}, {"q", o.q},
                          {"nodes", o.nodes}, {"center", o.center}, {"radius", o.radius}, {"max_iter", o.max_iter},
                          {"rank_cap", o.rank_cap}, {"precond_iter", o.precond_iter},
                          {"precond_tol", o.precond_tol}, {"decay_n", o.decay_n}, {"decay_count", o.decay_count}});
  j["bench"] = rows;
  j["decay"] = {{"khatri_rao_rank", s1.size()},
                {"khatri_rao_residual", srk.achieved_residual},
                {"ratio_30_khatri_rao", s1.size() >= 30 ? s1(29) / s1(0) : 0.0},
                {"ratio_30_unstructured", n >= 30 ? s2(29) / s2(0) : 0.0}};
  j["timing"] = {{"total_seconds", seconds_since(t0)}};
  write_json(dir / "sylvester_bench.json", j);
  return 0;
}

/// Moves `--config FILE` entries in front of the command-line flags so that
/// later (command-line) occurrences win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.size() < 2) return args;
  std::vector<std::string> out{args[0], args[1]};
  for (const auto& [k, v] : io::read_config_file(path)) out.push_back("--" + k + "=" + v);
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized Kronecker-structured eigensolvers: experiments"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  OseOpts ose;
  auto* s_ose = app.add_subcommand("ose-stats", "sketch embedding statistics (frontier and percentiles)");
  add_common(s_ose, common);
  s_ose->add_option("--n-tilde", ose.n_tilde)->capture_default_str();
  s_ose->add_option("--n-hat", ose.n_hat)->capture_default_str();
  s_ose->add_option("--k-min", ose.k_min)->capture_default_str();
  s_ose->add_option("--k-max", ose.k_max)->capture_default_str();
  s_ose->add_option("--k-step", ose.k_step)->capture_default_str();
  s_ose->add_option("--trials", ose.trials)->capture_default_str();
  s_ose->add_option("--threshold", ose.threshold)->capture_default_str();
  s_ose->add_option("--probability", ose.probability)->capture_default_str();
  s_ose->add_option("--panel-k", ose.panel_k)->capture_default_str();
  s_ose->add_option("--ells", ose.ells)->delimiter(',')->capture_default_str();
  s_ose->add_option("--ell-max", ose.ell_max)->capture_default_str();

  ContourOpts con;
  auto* s_con = app.add_subcommand("contour", "filtered-subspace eigensolver");
  add_common(s_con, common);
  s_con->add_option("--potential", con.potential)->capture_default_str();
  s_con->add_option("--n", con.n)->capture_default_str();
  s_con->add_option("--ell", con.ell)->capture_default_str();
  s_con->add_option("--q", con.q)->capture_default_str();
  s_con->add_option("--center", con.center)->capture_default_str();
  s_con->add_option("--radius", con.radius)->capture_default_str();
  s_con->add_option("--tol", con.tol)->capture_default_str();
  s_con->add_option("--max-iter", con.max_iter)->capture_default_str();
  s_con->add_option("--rank-cap", con.rank_cap)->capture_default_str();
  s_con->add_option("--precond-iter", con.precond_iter)->capture_default_str();
  s_con->add_option("--precond-tol", con.precond_tol)->capture_default_str();
  s_con->add_option("--recompress-eps", con.recompress_eps, "negative: 1e-2 * tol")->capture_default_str();
  s_con->add_option("--assembly-eps", con.assembly_eps, "negative: 1e-2 * tol")->capture_default_str();
  s_con->add_option("--assembly-cap", con.assembly_cap)->capture_default_str();
  s_con->add_flag("--oracle", con.oracle, "compare with a dense eigensolver (n <= 40)");

  LobpcgOpts lob;
  auto* s_lob = app.add_subcommand("lobpcg", "low-rank block LOBPCG");
  add_common(s_lob, common);
  s_lob->add_option("--potential", lob.potential)->capture_default_str();
  s_lob->add_option("--n", lob.n)->capture_default_str();
  s_lob->add_option("--k", lob.k)->capture_default_str();
  s_lob->add_option("--ell", lob.ell)->capture_default_str();
  s_lob->add_option("--trunc-eps", lob.trunc_eps)->capture_default_str();
  s_lob->add_option("--rmax", lob.rmax)->capture_default_str();
  s_lob->add_option("--adi", lob.adi)->capture_default_str();
  s_lob->add_option("--max-iter", lob.max_iter)->capture_default_str();
  s_lob->add_option("--conv-tol", lob.conv_tol)->capture_default_str();
  s_lob->add_option("--conv-mode", lob.conv_mode, "relative or absolute")->capture_default_str();
  s_lob->add_option("--shift", lob.shift)->capture_default_str();
  s_lob->add_flag("--square", lob.square, "iterate on (A + shift I)^2");
  s_lob->add_flag("--reference", lob.reference, "also run a tight-tolerance reference");
  s_lob->add_option("--ref-eps", lob.ref_eps)->capture_default_str();
  s_lob->add_option("--ref-iter", lob.ref_iter)->capture_default_str();

  BenchOpts ben;
  auto* s_ben = app.add_subcommand("sylvester-bench", "timing of the shifted multiterm solver");
  add_common(s_ben, common);
  s_ben->add_option("--potential", ben.potential)->capture_default_str();
  s_ben->add_option("--ns", ben.ns)->delimiter(',')->capture_default_str();
  s_ben->add_option("--tols", ben.tols)->delimiter(',')->capture_default_str();
  s_ben->add_option("--ell", ben.ell)->capture_default_str();
  s_ben->add_option("--q", ben.q)->capture_default_str();
  s_ben->add_option("--nodes", ben.nodes)->capture_default_str();
  s_ben->add_option("--center", ben.center)->capture_default_str();
  s_ben->add_option("--radius", ben.radius)->capture_default_str();
  s_ben->add_option("--max-iter", ben.max_iter)->capture_default_str();
  s_ben->add_option("--rank-cap", ben.rank_cap)->capture_default_str();
  s_ben->add_option("--precond-iter", ben.precond_iter)->capture_default_str();
  s_ben->add_option("--precond-tol", ben.precond_tol)->capture_default_str();
  s_ben->add_option("--decay-n", ben.decay_n)->capture_default_str();
  s_ben->add_option("--decay-count", ben.decay_count)->capture_default_str();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (s_ose->parsed()) return cmd_ose_stats(common, ose);
    if (s_con->parsed()) return cmd_contour(common, con);
    if (s_lob->parsed()) return cmd_lobpcg(common, lob);
    if (s_ben->parsed()) return cmd_sylvester_bench(common, ben);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
