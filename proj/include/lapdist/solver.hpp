// Copyright 2026 The lapdist Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LAPDIST_SOLVER_HPP_
#define LAPDIST_SOLVER_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lapdist/dense.hpp"
#include "lapdist/eliminate.hpp"
#include "lapdist/graph.hpp"
#include "lapdist/linear.hpp"
#include "lapdist/minors.hpp"
#include "lapdist/service.hpp"
#include "lapdist/ultrasparsify.hpp"

namespace lapdist {

/// Failure inside the solver pipeline; `stage` names the step.
class solver_error : public std::runtime_error {
 public:
  solver_error(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

using LinearOp = std::function<Vector(const Vector&)>;

inline Vector project_ones(const Vector& b) {
  if (b.size() == 0) return b;
  return (b.array() - b.mean()).matrix();
}

// ---------------------------------------------------------------------------
// Schur complement chain

struct ChainOptions {
  NodeId base_size = 0;  // stop at this many nodes; 0 means k
  int max_links = 64;
  EliminateOptions elim;
};

struct ChainLink {
  MinorDistribution dist;                        // G_i
  std::shared_ptr<ComposedReduction> reduction;  // Z_{i,1}, Z_{i,2} on G_i's nodes
  std::vector<NodeId> terminals;                 // T_i, ids of G_i; node j of G_{i+1} is terminals[j]
  EliminateResult summary;                       // per-round info of the eliminate call
};

struct SchurChain {
  std::vector<ChainLink> links;
  MinorDistribution base;  // G_t
  LaplacianPinv base_pinv;
  double eps = 0.0;
  int d = 0;
  NodeId k = 0;
  std::vector<NodeId> sizes;  // |V(G_i)|, base last
  std::vector<std::size_t> edges;
  bool stalled = false;       // eliminate stopped shrinking before the base size
  std::int64_t rounds = 0;
  int max_rho = 1;
};

/// G_1 = dist; G_{i+1} = graph returned by eliminate(G_i, d, eps) until
/// |V| <= base size. The bottom level is solved densely.
inline SchurChain build_chain(const MinorDistribution& dist, int d, double eps, NodeId k, std::uint64_t seed,
                              AggregationService& service, const ChainOptions& opt = {}) {
  SchurChain chain;
  chain.eps = eps;
  chain.d = d;
  chain.k = k;
  const NodeId base = opt.base_size > 0 ? opt.base_size : k;
  const std::int64_t start = service.charged_rounds();
  MinorDistribution cur = dist;
  chain.max_rho = dist.rho;
  while (cur.minor.num_nodes() > base && static_cast<int>(chain.links.size()) < opt.max_links) {
    const std::size_t idx = chain.links.size();
    EliminateResult er;
    try {
      er = eliminate(cur, d, eps, seed * 2654435761ULL + idx, service, opt.elim);
    } catch (const std::exception& e) {
      throw solver_error("build_chain link " + std::to_string(idx), e.what());
    }
    if (er.graph.num_nodes() >= cur.minor.num_nodes()) {
      chain.stalled = true;
      break;
    }
    chain.sizes.push_back(cur.minor.num_nodes());
    chain.edges.push_back(cur.minor.num_edges());
    chain.max_rho = std::max(chain.max_rho, er.max_rho);
    ChainLink link;
    link.dist = cur;
    link.reduction = er.reduction;
    link.terminals = er.terminals;
    cur = er.dist;
    link.summary = std::move(er);
    chain.links.push_back(std::move(link));
  }
  chain.sizes.push_back(cur.minor.num_nodes());
  chain.edges.push_back(cur.minor.num_edges());
  chain.base = std::move(cur);
  chain.base_pinv.reset(laplacian(chain.base.minor));
  chain.rounds = service.charged_rounds() - start;
  return chain;
}

namespace detail {

inline Vector chain_apply_from(const SchurChain& chain, std::size_t level, const Vector& b, AggregationService* service) {
  if (level == chain.links.size()) {
    // Gather to one leader, solve, broadcast back.
    if (service) service->charge(chain.base, 2);
    return chain.base_pinv.solve(project_ones(b));
  }
  const auto& link = chain.links[level];
  if (service) service->charge(link.dist, link.reduction->aggregations_per_apply());
  return link.reduction->apply(b, [&](const Vector& bc) { return chain_apply_from(chain, level + 1, bc, service); });
}

}  // namespace detail

/// y = W_1 b with W_i = Z_{i,1}^T diag(Z_{i,2}, W_{i+1}) Z_{i,1}, W_t = L(G_t)^+.
inline Vector chain_preconditioner_apply(const SchurChain& chain, const Vector& b, AggregationService* service = nullptr) {
  const NodeId n = chain.sizes.front();
  if (b.size() != n) {
    throw solver_error("chain_preconditioner_apply",
                       "dimension mismatch: got " + std::to_string(b.size()) + ", level 1 has " + std::to_string(n));
  }
  return project_ones(detail::chain_apply_from(chain, 0, project_ones(b), service));
}

// ---------------------------------------------------------------------------
// Preconditioned iterations

struct SpectrumBounds {
  double lambda_min = 1.0;  // Ritz estimates of the spectrum of P L on range(L)
  double lambda_max = 1.0;
  int steps = 0;
  bool invariant = false;  // Krylov space exhausted: the Ritz values are exact
};

/// Lanczos through preconditioned CG coefficients on a random right-hand
/// side: the Ritz values of the CG tridiagonal estimate the spectrum of P L.
inline SpectrumBounds estimate_spectrum(const LinearOp& l_apply, const LinearOp& p_apply, NodeId n, int steps,
                                        std::uint64_t seed) {
  SpectrumBounds out;
  if (n <= 1) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Vector b(n);
  for (NodeId i = 0; i < n; ++i) b[i] = gauss(rng);
  b = project_ones(b);
  Vector x = Vector::Zero(n), r = b, z = project_ones(p_apply(r)), p = z;
  double rz = r.dot(z);
  const double rz0 = rz;
  std::vector<double> alpha, beta;
  for (int j = 0; j < steps && rz > 1e-28 * rz0; ++j) {
    const Vector lp = project_ones(l_apply(p));
    const double plp = p.dot(lp);
    if (!(plp > 0.0)) break;
    const double a = rz / plp;
    x += a * p;
    r -= a * lp;
    z = project_ones(p_apply(r));
    const double rz_new = r.dot(z);
    alpha.push_back(a);
    beta.push_back(rz_new / rz);
    rz = rz_new;
    p = z + beta.back() * p;
  }
  const auto m = static_cast<Eigen::Index>(alpha.size());
  if (m == 0) return out;
  DenseMatrix t = DenseMatrix::Zero(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto js = static_cast<std::size_t>(j);
    t(j, j) = 1.0 / alpha[js] + (j > 0 ? beta[js - 1] / alpha[js - 1] : 0.0);
    if (j + 1 < m) t(j, j + 1) = t(j + 1, j) = std::sqrt(std::max(0.0, beta[js])) / alpha[js];
  }
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(t, Eigen::EigenvaluesOnly);
  out.lambda_min = es.eigenvalues().minCoeff();
  out.lambda_max = es.eigenvalues().maxCoeff();
  out.steps = static_cast<int>(m);
  out.invariant = rz <= 1e-24 * rz0;
  return out;
}

struct ChebyshevResult {
  Vector x;
  int iterations = 0;
  int budget = 0;          // ceil(sqrt(kappa) ln(2/eps')) + 1
  double kappa = 1.0;
  double error_bound = 0;  // sqrt(r^T P r / lambda_min) >= ||x - L^+ b||_L
  double target = 0;       // eps ||b||_L
  bool converged = false;
};

inline int chebyshev_budget(double kappa, double eps) {
  return static_cast<int>(std::ceil(std::sqrt(std::max(1.0, kappa)) * std::log(2.0 / eps))) + 1;
}

/// Preconditioned Chebyshev iteration for L x = b with the spectrum of P L
/// inside [lmin, lmax]. Stops once the certified bound
/// sqrt(r^T P r / lmin) <= eps ||b||_L holds; fails past 4x the budget.
inline ChebyshevResult chebyshev_solve(const LinearOp& l_apply, const LinearOp& p_apply, const Vector& b_in, double eps,
                                       double lmin, double lmax, std::function<void()> on_iteration = {}) {
  if (!(lmin > 0.0) || !(lmax >= lmin)) throw solver_error("chebyshev", "invalid spectrum bounds");
  ChebyshevResult res;
  const Vector b = project_ones(b_in);
  const auto n = b.size();
  res.x = Vector::Zero(n);
  const double b_l = std::sqrt(std::max(0.0, b.dot(project_ones(l_apply(b)))));
  res.target = eps * b_l;
  if (b_l == 0.0) {
    res.converged = true;
    return res;
  }
  if (lmax < lmin * (1.0 + 1e-9)) lmax = lmin * (1.0 + 1e-9);
  res.kappa = lmax / lmin;
  Vector r = b;
  Vector z = project_ones(p_apply(r));
  // The budget accounts for converting the L^+-norm contraction into the
  // L-norm target: eps' = eps ||b||_L / ||b||_{L^+}.
  const double b_pinv = std::sqrt(std::max(0.0, r.dot(z)) / lmin);
  const double eps_eff = std::min(eps, eps * b_l / std::max(b_pinv, 1e-300));
  res.budget = chebyshev_budget(res.kappa, eps_eff);
  const double theta = 0.5 * (lmax + lmin), delta = 0.5 * (lmax - lmin);
  const double sigma = theta / delta;
  double rho = 1.0 / sigma;
  Vector dir = z / theta;
  const int cap = 4 * res.budget;
  for (int it = 1; it <= cap; ++it) {
    res.x += dir;
    r -= project_ones(l_apply(dir));
    z = project_ones(p_apply(r));
    if (on_iteration) on_iteration();
    res.iterations = it;
    res.error_bound = std::sqrt(std::max(0.0, r.dot(z)) / lmin);
    if (res.error_bound <= res.target) {
      res.converged = true;
      break;
    }
    const double rho_new = 1.0 / (2.0 * sigma - rho);
    dir = rho_new * rho * dir + (2.0 * rho_new / delta) * z;
    rho = rho_new;
  }
  res.x = project_ones(res.x);
  if (!res.converged) {
    throw solver_error("chebyshev", "no convergence within " + std::to_string(cap) + " iterations (bound " +
                                        std::to_string(res.error_bound) + " vs target " + std::to_string(res.target) + ")");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Full pipeline

struct SolverParams {
  int k = 8;
  int d = 2;
  double chain_eps = 0.0;  // 0: default_chain_eps(n, c_eps)
  double c_eps = 0.5;
  bool asymptotic = false;  // k, d, eps from the n-bar formulas
  bool sparsify_input = true;
  SparsifyOptions sparsifier;
  double sparsify_eps = 0.5;
  UltrasparsifyOptions ultra;
  ChainOptions chain;
  int lanczos_steps = 30;
  double bound_slack = 1.25;  // widening applied to the Ritz estimates
  std::uint64_t seed = 1;
};

/// min(cap, 1 / (c_eps ceil(log2 n))).
inline double default_chain_eps(NodeId n, double c_eps = 0.5, double cap = 0.25) {
  const double lg = std::ceil(std::log2(std::max<double>(2.0, n)));
  return std::min(cap, 1.0 / (c_eps * lg));
}

struct AsymptoticParams {
  int k = 2;
  int d = 1;
  double eps = 0.5;
};

/// k = 2^{(log n)^{2/3}}, d = 2^{(log log n)^2}, eps = 1/(log n)^2 (base 2).
inline AsymptoticParams asymptotic_params(NodeId n_bar) {
  const double lg = std::log2(std::max<double>(4.0, n_bar));
  AsymptoticParams p;
  p.k = std::max(2, static_cast<int>(std::round(std::pow(2.0, std::pow(lg, 2.0 / 3.0)))));
  p.d = std::max(1, static_cast<int>(std::round(std::pow(2.0, std::pow(std::log2(lg), 2.0)))));
  p.eps = 1.0 / (lg * lg);
  return p;
}

struct StageRounds {
  std::int64_t sparsify = 0;
  std::int64_t ultrasparsify = 0;
  std::int64_t chain = 0;
  std::int64_t bounds = 0;
  std::int64_t iterations = 0;

  std::int64_t setup() const { return sparsify + ultrasparsify + chain; }
  std::int64_t total() const { return setup() + bounds + iterations; }
};

struct SolverResult {
  Vector x;
  double removed_component = 0.0;  // |mean(b)| * sqrt(n), projected away
  int k = 0, d = 0;
  double chain_eps = 0.0;
  std::size_t sparsified_edges = 0;
  NodeId ultra_nodes = 0;          // |V(G_2)|
  std::vector<NodeId> chain_sizes;
  bool chain_stalled = false;
  int max_rho = 1;
  SpectrumBounds ritz;
  double lambda_min = 1.0, lambda_max = 1.0;  // bounds used by the iteration
  ChebyshevResult cheb;
  std::int64_t preconditioner_calls = 0;
  StageRounds rounds;
  AggregationCost totals;
};

/// Preconditioner for one graph: SpecSpars, UltraSparsify(k), chain on the
/// reduced graph; P = Z^T diag(Z2, W_chain) Z from the degree-1/2
/// elimination, approximating L(H)^+ for the ultra-sparsifier H.
struct SolverSetup {
  MinorDistribution g_dist;
  MinorDistribution sparsified;
  UltrasparsifyResult ultra;
  SchurChain chain;
  int k = 0, d = 0;
  double chain_eps = 0.0;
  SpectrumBounds ritz;
  double lambda_min = 1.0, lambda_max = 1.0;  // Ritz values widened by bound_slack
  StageRounds rounds;
  AggregationCost setup_cost;  // service totals spent building
  std::int64_t preconditioner_calls = 0;

  Vector apply(const Vector& b, AggregationService* service = nullptr) const {
    if (service) service->charge(ultra.h_dist, ultra.elim.ops->aggregations_per_apply());
    const Vector y = ultra.elim.ops->apply(project_ones(b), [&](const Vector& bc) {
      if (chain.sizes.front() <= 1) return Vector(Vector::Zero(bc.size()));
      return chain_preconditioner_apply(chain, bc, service);
    });
    return project_ones(y);
  }
};

inline SolverSetup build_solver(const WeightedGraph& g, AggregationService& service, const SolverParams& params = {}) {
  SolverSetup s;
  const NodeId n = g.num_nodes();
  s.k = params.k;
  s.d = params.d;
  s.chain_eps = params.chain_eps > 0.0 ? params.chain_eps : default_chain_eps(n, params.c_eps);
  if (params.asymptotic) {
    const auto a = asymptotic_params(n);
    s.k = a.k;
    s.d = a.d;
    s.chain_eps = a.eps;
  }
  s.g_dist = identity_minor(g);
  const AggregationCost before = service.totals();
  std::int64_t mark = service.charged_rounds();
  s.sparsified = s.g_dist;
  if (params.sparsify_input) {
    try {
      SparsifyOptions so = params.sparsifier;
      so.seed = params.seed * 17ULL + 1;
      s.sparsified = spectral_sparsify(s.g_dist, params.sparsify_eps, service, so).dist;
    } catch (const std::exception& e) {
      throw solver_error("sparsify", e.what());
    }
  }
  s.rounds.sparsify = service.charged_rounds() - mark;
  mark = service.charged_rounds();
  try {
    UltrasparsifyOptions uo = params.ultra;
    uo.seed = params.seed * 31ULL + 7;
    s.ultra = ultrasparsify(s.sparsified, static_cast<double>(s.k), service, uo);
  } catch (const std::exception& e) {
    throw solver_error("ultrasparsify", e.what());
  }
  s.rounds.ultrasparsify = service.charged_rounds() - mark;
  mark = service.charged_rounds();
  s.chain = build_chain(s.ultra.ghat_dist, s.d, s.chain_eps, static_cast<NodeId>(s.k), params.seed, service, params.chain);
  s.rounds.chain = service.charged_rounds() - mark;
  mark = service.charged_rounds();
  const auto lop = laplacian_operator(g);
  const LinearOp l_apply = [&](const Vector& x) {
    service.charge(s.g_dist, 2);
    return apply_edge_operator(g, lop, x);
  };
  const LinearOp p_apply = [&](const Vector& r) { return s.apply(r, &service); };
  s.ritz = estimate_spectrum(l_apply, p_apply, n, std::min<int>(params.lanczos_steps, n - 1), params.seed * 7ULL + 3);
  const double slack = s.ritz.invariant ? 1.0 : params.bound_slack;
  s.lambda_min = s.ritz.lambda_min / slack;
  s.lambda_max = s.ritz.lambda_max * slack;
  s.preconditioner_calls = s.ritz.steps + 1;
  s.rounds.bounds = service.charged_rounds() - mark;
  const AggregationCost& after = service.totals();
  s.setup_cost = {after.rounds - before.rounds, after.local_messages - before.local_messages,
                  after.global_messages - before.global_messages, after.global_rounds - before.global_rounds};
  return s;
}

/// Chebyshev solve with a prepared preconditioner.
inline SolverResult solve_with(const SolverSetup& s, const Vector& b_in, double eps, AggregationService& service) {
  const WeightedGraph& g = s.g_dist.minor;
  const NodeId n = g.num_nodes();
  if (b_in.size() != n) throw solver_error("input", "b has the wrong dimension");
  if (!(eps > 0.0)) throw solver_error("input", "eps must be positive");
  SolverResult res;
  const Vector b = project_ones(b_in);
  res.removed_component = std::abs(b_in.sum()) / std::sqrt(std::max<double>(1.0, n));
  res.x = Vector::Zero(n);
  res.k = s.k;
  res.d = s.d;
  res.chain_eps = s.chain_eps;
  res.sparsified_edges = s.sparsified.minor.num_edges();
  res.ultra_nodes = s.ultra.elim.reduced.num_nodes();
  res.chain_sizes = s.chain.sizes;
  res.chain_stalled = s.chain.stalled;
  res.max_rho = std::max({s.chain.max_rho, s.ultra.ghat_dist.rho, s.sparsified.rho});
  res.ritz = s.ritz;
  res.lambda_min = s.lambda_min;
  res.lambda_max = s.lambda_max;
  res.rounds = s.rounds;
  if (n <= 1 || b.squaredNorm() == 0.0) {
    res.cheb.converged = true;
    return res;
  }
  const auto start = service.totals();
  const auto lop = laplacian_operator(g);
  const LinearOp l_apply = [&](const Vector& x) {
    service.charge(s.g_dist, 2);  // broadcast along super-nodes, sum back
    return apply_edge_operator(g, lop, x);
  };
  const LinearOp p_apply = [&](const Vector& r) {
    ++res.preconditioner_calls;
    return s.apply(r, &service);
  };
  try {
    res.cheb = chebyshev_solve(l_apply, p_apply, b, eps, s.lambda_min, s.lambda_max);
  } catch (const solver_error& e) {
    throw solver_error("solve", e.what());
  }
  res.x = res.cheb.x;
  const auto& end = service.totals();
  res.rounds.iterations = end.rounds - start.rounds;
  res.totals = s.setup_cost;
  res.totals += AggregationCost{end.rounds - start.rounds, end.local_messages - start.local_messages,
                                end.global_messages - start.global_messages, end.global_rounds - start.global_rounds};
  return res;
}

/// Solves L(G) x = b to ||x - L^+ b||_L <= eps ||b||_L.
inline SolverResult solve(const WeightedGraph& g, const Vector& b, double eps, AggregationService& service,
                          const SolverParams& params = {}) {
  if (b.size() != g.num_nodes()) throw solver_error("input", "b has the wrong dimension");
  if (!is_connected(g)) throw solver_error("input", "graph is disconnected");
  if (g.num_nodes() <= 1) {
    SolverResult res;
    res.x = Vector::Zero(g.num_nodes());
    res.cheb.converged = true;
    return res;
  }
  const SolverSetup s = build_solver(g, service, params);
  return solve_with(s, b, eps, service);
}

/// LaplacianSolver backed by a prepared chain; rounds go to its own service.
class ChainSolver final : public LaplacianSolver {
 public:
  ChainSolver(const WeightedGraph& g, double eps, const SolverParams& params, Model model = Model::sequential)
      : service_(model), eps_(eps), n_(g.num_nodes()) {
    if (!is_connected(g)) throw solver_error("input", "graph is disconnected");
    if (n_ > 1) setup_ = std::make_unique<SolverSetup>(build_solver(g, service_, params));
  }

  const AggregationService& service() const { return service_; }

 protected:
  Vector do_solve(const Vector& b) override {
    if (!setup_) return Vector::Zero(n_);
    return solve_with(*setup_, b, eps_, service_).x;
  }

 private:
  AggregationService service_;
  double eps_;
  NodeId n_;
  std::unique_ptr<SolverSetup> setup_;
};

inline SolverFactory chain_solver_factory(double eps, const SolverParams& params = {}) {
  return [eps, params](const WeightedGraph& g) -> std::unique_ptr<LaplacianSolver> {
    return std::make_unique<ChainSolver>(g, eps, params);
  };
}

}  // namespace lapdist

#endif  // LAPDIST_SOLVER_HPP_
