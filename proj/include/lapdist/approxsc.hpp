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

#ifndef LAPDIST_APPROXSC_HPP_
#define LAPDIST_APPROXSC_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lapdist/dense.hpp"
#include "lapdist/graph.hpp"
#include "lapdist/linear.hpp"
#include "lapdist/minors.hpp"
#include "lapdist/service.hpp"

namespace lapdist {

class approxsc_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solver calls and aggregation batches spent by the estimators.
struct EstimatorStats {
  std::int64_t solver_calls = 0;
  std::int64_t aggregations = 0;

  EstimatorStats& operator+=(const EstimatorStats& o) {
    solver_calls += o.solver_calls;
    aggregations += o.aggregations;
    return *this;
  }
};

namespace detail {

inline double lg_nodes(NodeId n) { return std::log(std::max<double>(2.0, n)); }

/// Columns sqrt(w_e) b_e of W^{1/2} B^T, contracted with `coef` (rows x m):
/// out(:, i) = sum_e coef(i, e) sqrt(w_e) (chi_u - chi_v).
inline DenseMatrix edge_combination(const WeightedGraph& g, const DenseMatrix& coef, const std::vector<EdgeId>& edges) {
  DenseMatrix out = DenseMatrix::Zero(g.num_nodes(), coef.rows());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = g.edge(edges[k]);
    if (e.is_self_loop()) continue;
    const double s = std::sqrt(e.weight);
    out.row(e.u) += s * coef.col(static_cast<Eigen::Index>(k)).transpose();
    out.row(e.v) -= s * coef.col(static_cast<Eigen::Index>(k)).transpose();
  }
  return out;
}

inline DenseMatrix rademacher(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  DenseMatrix q(rows, cols);
  const double s = 1.0 / std::sqrt(static_cast<double>(rows));
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) q(i, j) = coin(rng) ? s : -s;
  }
  return q;
}

inline std::vector<EdgeId> all_edges(const WeightedGraph& g) {
  std::vector<EdgeId> out(g.num_edges());
  std::iota(out.begin(), out.end(), 0);
  return out;
}

/// Minimiser of sum_j |y_j - a c_j| over a (weighted median of y_j / c_j).
inline double lad_slope(const std::vector<double>& y, const std::vector<double>& c) {
  std::vector<std::pair<double, double>> r;
  double total = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (c[j] == 0.0) continue;
    r.emplace_back(y[j] / c[j], std::abs(c[j]));
    total += std::abs(c[j]);
  }
  if (r.empty()) return 0.0;
  std::sort(r.begin(), r.end());
  double acc = 0.0;
  for (const auto& [x, w] : r) {
    acc += w;
    if (acc >= 0.5 * total) return x;
  }
  return r.back().first;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Estimators

struct LeverageEstimates {
  std::vector<double> lev;  // per edge (0 for self-loops)
  double delta = 0.1;
  int rows = 0;
};

inline int leverage_rows(NodeId n, double delta) {
  return static_cast<int>(std::ceil(9.0 * detail::lg_nodes(n) / (delta * delta)));
}

/// lev(e) ~ w_e ||Q W^{1/2} B L^+ (chi_u - chi_v)||^2 with Q a +-1/sqrt(k)
/// matrix, k = ceil(9 ln n / delta^2).
inline LeverageEstimates approx_leverage_scores(const WeightedGraph& g, double delta, LaplacianSolver& solver,
                                                std::uint64_t seed, EstimatorStats* stats = nullptr) {
  LeverageEstimates out;
  out.delta = delta;
  out.rows = leverage_rows(g.num_nodes(), delta);
  std::mt19937_64 rng(seed);
  const auto edges = detail::all_edges(g);
  const DenseMatrix q = detail::rademacher(out.rows, static_cast<Eigen::Index>(edges.size()), rng);
  const std::int64_t before = solver.calls();
  const DenseMatrix z = solver.solve_many(detail::edge_combination(g, q, edges));
  out.lev.assign(g.num_edges(), 0.0);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    out.lev[static_cast<std::size_t>(e.id)] = e.weight * (z.row(e.u) - z.row(e.v)).squaredNorm();
  }
  if (stats) {
    stats->solver_calls += solver.calls() - before;
    stats->aggregations += out.rows;
  }
  return out;
}

/// ceil(16 ln^2 n), at least 128: below that the factor-2 audit fails on
/// small dense graphs (K5 loses about 7% of seeds at 42 rows).
inline int cauchy_rows(NodeId n) {
  const double l = detail::lg_nodes(n);
  return std::max(128, static_cast<int>(std::ceil(16.0 * l * l)));
}

/// For each e in W: sum_{f in W, f != e} |b_e^T L^+ b_f| / sqrt(r_e r_f).
/// Row e of M = U^T L^+ U (U = sqrt(w) b columns over W) is sketched with a
/// Cauchy matrix; the self term M_ee is fitted out by least absolute
/// deviations and the median absolute residual estimates the l1 mass left.
inline std::vector<double> approx_column_sums(const WeightedGraph& g, const std::vector<EdgeId>& w, LaplacianSolver& solver,
                                              std::uint64_t seed, EstimatorStats* stats = nullptr, int rows = 0) {
  std::vector<double> out(w.size(), 0.0);
  if (w.size() <= 1) return out;
  const int r = rows > 0 ? rows : cauchy_rows(g.num_nodes());
  std::mt19937_64 rng(seed);
  std::cauchy_distribution<double> cauchy(0.0, 1.0);
  DenseMatrix c(r, static_cast<Eigen::Index>(w.size()));
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    for (Eigen::Index i = 0; i < r; ++i) c(i, j) = cauchy(rng);
  }
  const std::int64_t before = solver.calls();
  const DenseMatrix y = solver.solve_many(detail::edge_combination(g, c, w));
  std::vector<double> ye(static_cast<std::size_t>(r)), ce(static_cast<std::size_t>(r)), res(static_cast<std::size_t>(r));
  for (std::size_t k = 0; k < w.size(); ++k) {
    const auto& e = g.edge(w[k]);
    if (e.is_self_loop()) continue;
    const double s = std::sqrt(e.weight);
    for (int i = 0; i < r; ++i) {
      ye[static_cast<std::size_t>(i)] = s * (y(e.u, i) - y(e.v, i));
      ce[static_cast<std::size_t>(i)] = c(i, static_cast<Eigen::Index>(k));
    }
    const double a = detail::lad_slope(ye, ce);
    for (int i = 0; i < r; ++i) res[static_cast<std::size_t>(i)] = std::abs(ye[static_cast<std::size_t>(i)] - a * ce[static_cast<std::size_t>(i)]);
    out[k] = detail::median(res);
  }
  if (stats) {
    stats->solver_calls += solver.calls() - before;
    stats->aggregations += r;
  }
  return out;
}

/// Solver for L_FF (F = V \ T) through the graph with T identified to one node.
class GroundedSolver {
 public:
  GroundedSolver(const WeightedGraph& g, const std::vector<NodeId>& t, const SolverFactory& factory)
      : n_(g.num_nodes()), index_(static_cast<std::size_t>(g.num_nodes()), kNoNode) {
    std::vector<char> is_t(static_cast<std::size_t>(n_), 0);
    for (NodeId v : t) is_t[static_cast<std::size_t>(v)] = 1;
    for (NodeId v = 0; v < n_; ++v) {
      if (!is_t[static_cast<std::size_t>(v)]) {
        index_[static_cast<std::size_t>(v)] = static_cast<NodeId>(f_.size());
        f_.push_back(v);
      }
    }
    const auto ground = static_cast<NodeId>(f_.size());
    WeightedGraph c(ground + 1);
    for (const auto& e : g.edges()) {
      if (e.is_self_loop()) continue;
      const NodeId a = is_t[static_cast<std::size_t>(e.u)] ? ground : index_[static_cast<std::size_t>(e.u)];
      const NodeId b = is_t[static_cast<std::size_t>(e.v)] ? ground : index_[static_cast<std::size_t>(e.v)];
      if (a != b) c.add_edge(a, b, e.weight);
    }
    if (!f_.empty()) solver_ = factory(c);
  }

  const std::vector<NodeId>& f() const { return f_; }
  NodeId local(NodeId v) const { return index_[static_cast<std::size_t>(v)]; }
  std::int64_t calls() const { return solver_ ? solver_->calls() : 0; }

  /// L_FF^{-1} Y for Y with |F| rows.
  DenseMatrix solve(const DenseMatrix& y) {
    if (f_.empty()) return y;
    const auto k = static_cast<Eigen::Index>(f_.size());
    DenseMatrix rhs(k + 1, y.cols());
    rhs.topRows(k) = y;
    rhs.row(k) = -y.colwise().sum();
    const DenseMatrix x = solver_->solve_many(rhs);
    DenseMatrix out = x.topRows(k);
    for (Eigen::Index j = 0; j < y.cols(); ++j) out.col(j).array() -= x(k, j);
    return out;
  }

 private:
  NodeId n_;
  std::vector<NodeId> index_;
  std::vector<NodeId> f_;
  std::unique_ptr<LaplacianSolver> solver_;
};

/// Per edge: r_e^{-1} b_e^T L^+ [SC(G,T) 0; 0 0] L^+ b_e. With x = L^+ b_e
/// and H the harmonic extension of x_T, the quantity is w_e ||W^{1/2} B H x_T||^2;
/// it is sketched through z_i = L^+ P_T^T H^T B^T W^{1/2} q_i, where
/// H^T y = y_T - L_TF L_FF^{-1} y_F.
inline std::vector<double> sc_energy_estimates(const WeightedGraph& g, const std::vector<NodeId>& t, LaplacianSolver& solver,
                                               const SolverFactory& factory, std::uint64_t seed, double delta = 0.5,
                                               EstimatorStats* stats = nullptr) {
  if (t.empty()) throw std::invalid_argument("sc_energy_estimates: empty terminal set");
  const NodeId n = g.num_nodes();
  const int rows = leverage_rows(n, delta);
  std::mt19937_64 rng(seed);
  const auto edges = detail::all_edges(g);
  const DenseMatrix q = detail::rademacher(rows, static_cast<Eigen::Index>(edges.size()), rng);
  DenseMatrix y = detail::edge_combination(g, q, edges);  // n x rows
  GroundedSolver ground(g, t, factory);
  const auto& f = ground.f();
  DenseMatrix yf(static_cast<Eigen::Index>(f.size()), rows);
  for (std::size_t i = 0; i < f.size(); ++i) yf.row(static_cast<Eigen::Index>(i)) = y.row(f[i]);
  const DenseMatrix s = ground.solve(yf);
  // H^T y on T: y_T - L_TF s, with L_TF(t, f) = -w(t, f).
  DenseMatrix ht = DenseMatrix::Zero(n, rows);
  for (NodeId v : t) ht.row(v) = y.row(v);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    const NodeId fu = ground.local(e.u), fv = ground.local(e.v);
    if (fu == kNoNode && fv != kNoNode) ht.row(e.u) += e.weight * s.row(fv);
    if (fv == kNoNode && fu != kNoNode) ht.row(e.v) += e.weight * s.row(fu);
  }
  const std::int64_t before = solver.calls();
  const DenseMatrix z = solver.solve_many(ht);
  std::vector<double> out(g.num_edges(), 0.0);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    out[static_cast<std::size_t>(e.id)] = e.weight * (z.row(e.u) - z.row(e.v)).squaredNorm();
  }
  if (stats) {
    stats->solver_calls += solver.calls() - before + ground.calls();
    stats->aggregations += 2 * rows;
  }
  return out;
}

inline double sc_energy_estimate(const WeightedGraph& g, const std::vector<NodeId>& t, EdgeId e, LaplacianSolver& solver,
                                 const SolverFactory& factory, std::uint64_t seed, double delta = 0.5) {
  return sc_energy_estimates(g, t, solver, factory, seed, delta).at(static_cast<std::size_t>(e));
}

// ---------------------------------------------------------------------------
// Minor rebuilding

namespace detail {

/// New minor from `d`: node u goes to group[u] (kNoNode drops it); groups
/// merge super-nodes, stitched with their trees plus `glue` host edges.
/// Edges are given explicitly with their images.
struct MinorEdge {
  NodeId u, v;
  double w;
  EdgeImage image;
};

inline MinorDistribution rebuild_minor(const MinorDistribution& d, const std::vector<NodeId>& group, NodeId groups,
                                       const std::vector<EdgeId>& glue, const std::vector<MinorEdge>& edges) {
  MinorDistribution out;
  out.host = d.host;
  out.minor = WeightedGraph(groups);
  out.super_node.assign(static_cast<std::size_t>(groups), {});
  out.leader.assign(static_cast<std::size_t>(groups), kNoNode);
  out.tree.assign(static_cast<std::size_t>(groups), {});
  std::vector<std::vector<EdgeId>> cand(static_cast<std::size_t>(groups));
  for (NodeId u = 0; u < d.minor.num_nodes(); ++u) {
    const NodeId c = group[static_cast<std::size_t>(u)];
    if (c == kNoNode) continue;
    auto& s = out.super_node[static_cast<std::size_t>(c)];
    s.insert(s.end(), d.super_node[static_cast<std::size_t>(u)].begin(), d.super_node[static_cast<std::size_t>(u)].end());
    const auto& t = d.tree[static_cast<std::size_t>(u)];
    cand[static_cast<std::size_t>(c)].insert(cand[static_cast<std::size_t>(c)].end(), t.begin(), t.end());
    auto& l = out.leader[static_cast<std::size_t>(c)];
    if (l == kNoNode || d.leader[static_cast<std::size_t>(u)] < l) l = d.leader[static_cast<std::size_t>(u)];
  }
  for (NodeId c = 0; c < groups; ++c) {
    auto& s = out.super_node[static_cast<std::size_t>(c)];
    s = sorted_union(std::move(s));
    auto& cc = cand[static_cast<std::size_t>(c)];
    cc.insert(cc.end(), glue.begin(), glue.end());
    out.tree[static_cast<std::size_t>(c)] = stitch_tree(*d.host, s, cc, out.leader[static_cast<std::size_t>(c)]);
  }
  for (const auto& e : edges) {
    out.minor.add_edge(e.u, e.v, e.w);
    out.edge_image.push_back(e.image);
  }
  out.rho = std::max(1, measure_minor(out).rho());
  return out;
}

}  // namespace detail

struct MinorWithTerminals {
  MinorDistribution dist;
  std::vector<NodeId> terminals;  // ids in dist.minor, same order as the input terminals
};

/// Drops self-loops, merges parallel edges, removes non-terminal leaves and
/// replaces non-terminal degree-2 nodes by a series edge (the node merges
/// into one neighbour's super-node). SC onto the terminals is unchanged.
inline MinorWithTerminals collapse_degenerate(const MinorDistribution& d, const std::vector<NodeId>& t) {
  const WeightedGraph& g = d.minor;
  const NodeId n = g.num_nodes();
  std::vector<char> is_t(static_cast<std::size_t>(n), 0);
  for (NodeId v : t) is_t[static_cast<std::size_t>(v)] = 1;
  // Working adjacency: pair -> (weight, image), one entry per neighbour.
  std::vector<std::map<NodeId, std::pair<double, EdgeImage>>> adj(static_cast<std::size_t>(n));
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    auto add = [&](NodeId a, NodeId b) {
      auto [it, fresh] = adj[static_cast<std::size_t>(a)].try_emplace(b, e.weight, d.edge_image[static_cast<std::size_t>(e.id)]);
      if (!fresh) it->second.first += e.weight;
    };
    add(e.u, e.v);
    add(e.v, e.u);
  }
  std::vector<NodeId> owner(static_cast<std::size_t>(n));  // absorbed into (or itself)
  std::iota(owner.begin(), owner.end(), 0);
  std::vector<char> alive(static_cast<std::size_t>(n), 1);
  std::vector<EdgeId> glue;
  std::vector<NodeId> work(static_cast<std::size_t>(n));
  std::iota(work.begin(), work.end(), 0);
  while (!work.empty()) {
    const NodeId x = work.back();
    work.pop_back();
    const auto xi = static_cast<std::size_t>(x);
    if (!alive[xi] || is_t[xi]) continue;
    auto& ax = adj[xi];
    if (ax.size() <= 1) {
      if (!ax.empty()) {
        const NodeId a = ax.begin()->first;
        adj[static_cast<std::size_t>(a)].erase(x);
        work.push_back(a);
      }
      ax.clear();
      alive[xi] = 0;
      owner[xi] = kNoNode;
    } else if (ax.size() == 2) {
      auto it = ax.begin();
      const auto [a, ea] = *it++;
      const auto [b, eb] = *it;
      const double w = 1.0 / (1.0 / ea.first + 1.0 / eb.first);
      // x joins a; the new edge a-b carries the image of x-b.
      if (!ea.second.is_self_loop()) glue.push_back(ea.second.host_edge);
      adj[static_cast<std::size_t>(a)].erase(x);
      adj[static_cast<std::size_t>(b)].erase(x);
      ax.clear();
      alive[xi] = 0;
      owner[xi] = a;
      auto [ia, fa] = adj[static_cast<std::size_t>(a)].try_emplace(b, w, eb.second);
      if (!fa) ia->second.first += w;
      auto [ib, fb] = adj[static_cast<std::size_t>(b)].try_emplace(a, w, eb.second);
      if (!fb) ib->second.first += w;
      work.push_back(a);
      work.push_back(b);
    }
  }
  auto root = [&](NodeId x) {
    while (x != kNoNode && !alive[static_cast<std::size_t>(x)]) x = owner[static_cast<std::size_t>(x)];
    return x;
  };
  std::vector<NodeId> id(static_cast<std::size_t>(n), kNoNode);
  NodeId next = 0;
  for (NodeId v = 0; v < n; ++v) {
    if (alive[static_cast<std::size_t>(v)]) id[static_cast<std::size_t>(v)] = next++;
  }
  std::vector<NodeId> group(static_cast<std::size_t>(n), kNoNode);
  for (NodeId v = 0; v < n; ++v) {
    const NodeId r = root(v);
    if (r != kNoNode) group[static_cast<std::size_t>(v)] = id[static_cast<std::size_t>(r)];
  }
  std::vector<detail::MinorEdge> edges;
  for (NodeId a = 0; a < n; ++a) {
    for (const auto& [b, wi] : adj[static_cast<std::size_t>(a)]) {
      if (a < b) edges.push_back({id[static_cast<std::size_t>(a)], id[static_cast<std::size_t>(b)], wi.first, wi.second});
    }
  }
  MinorWithTerminals out;
  out.dist = detail::rebuild_minor(d, group, next, glue, edges);
  for (NodeId v : t) out.terminals.push_back(id[static_cast<std::size_t>(v)]);
  return out;
}

struct SplitReport {
  int parallel = 0;  // high leverage: two copies of weight w/2
  int series = 0;    // low leverage: two edges of weight 2w through a new node
};

/// High-leverage edges (estimate > 13/16 / 1.1) are split into two parallel
/// copies, low-leverage ones (estimate < 3/16 * 1.1) into a series pair of
/// weight 2w each. The midpoint lives on one host endpoint of the edge image.
/// Existing node ids are kept; midpoints are appended.
inline MinorDistribution split_by_leverage(const MinorDistribution& d, const std::vector<double>& lev,
                                           SplitReport* report = nullptr) {
  const WeightedGraph& g = d.minor;
  const double hi = 13.0 / 16.0 / 1.1, lo = 3.0 / 16.0 * 1.1;
  MinorDistribution out;
  out.host = d.host;
  out.super_node = d.super_node;
  out.leader = d.leader;
  out.tree = d.tree;
  NodeId n = g.num_nodes();
  std::vector<detail::MinorEdge> edges;
  SplitReport rep;
  for (const auto& e : g.edges()) {
    const auto& img = d.edge_image[static_cast<std::size_t>(e.id)];
    const double l = lev[static_cast<std::size_t>(e.id)];
    if (e.is_self_loop() || (l >= lo && l <= hi)) {
      edges.push_back({e.u, e.v, e.weight, img});
    } else if (l > hi) {
      edges.push_back({e.u, e.v, e.weight / 2.0, img});
      edges.push_back({e.u, e.v, e.weight / 2.0, img});
      ++rep.parallel;
    } else {
      // Host node on u's side of the image.
      NodeId x = img.host_node;
      if (!img.is_self_loop()) {
        const auto& he = d.host->edge(img.host_edge);
        const auto& su = d.super_node[static_cast<std::size_t>(e.u)];
        x = std::binary_search(su.begin(), su.end(), he.u) ? he.u : he.v;
      }
      const NodeId m = n++;
      out.super_node.push_back({x});
      out.leader.push_back(x);
      out.tree.emplace_back();
      edges.push_back({e.u, m, 2.0 * e.weight, EdgeImage::loop(x)});
      edges.push_back({m, e.v, 2.0 * e.weight, img});
      ++rep.series;
    }
  }
  out.minor = WeightedGraph(n);
  for (const auto& e : edges) {
    out.minor.add_edge(e.u, e.v, e.w);
    out.edge_image.push_back(e.image);
  }
  out.rho = std::max(1, measure_minor(out).rho());
  if (report) *report = rep;
  return out;
}

/// Non-terminal leaves are removed, then edges are split by leverage. The
/// estimates refer to the edges of `d`; leaf removal only drops bridges, so
/// the remaining estimates stay valid.
inline MinorWithTerminals split_and_collapse(const MinorDistribution& d, const std::vector<NodeId>& t,
                                             const std::vector<double>& lev, SplitReport* report = nullptr) {
  const WeightedGraph& g = d.minor;
  const NodeId n = g.num_nodes();
  std::vector<char> is_t(static_cast<std::size_t>(n), 0);
  for (NodeId v : t) is_t[static_cast<std::size_t>(v)] = 1;
  std::vector<int> deg(static_cast<std::size_t>(n), 0);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    ++deg[static_cast<std::size_t>(e.u)];
    ++deg[static_cast<std::size_t>(e.v)];
  }
  std::vector<char> alive(static_cast<std::size_t>(n), 1), edge_alive(g.num_edges(), 1);
  std::vector<NodeId> work;
  for (NodeId v = 0; v < n; ++v) {
    if (!is_t[static_cast<std::size_t>(v)] && deg[static_cast<std::size_t>(v)] <= 1) work.push_back(v);
  }
  while (!work.empty()) {
    const NodeId x = work.back();
    work.pop_back();
    if (!alive[static_cast<std::size_t>(x)] || deg[static_cast<std::size_t>(x)] > 1) continue;
    alive[static_cast<std::size_t>(x)] = 0;
    for (const auto& inc : g.incident(x)) {
      if (!edge_alive[static_cast<std::size_t>(inc.edge)]) continue;
      edge_alive[static_cast<std::size_t>(inc.edge)] = 0;
      if (inc.other == x) continue;
      const NodeId y = inc.other;
      if (--deg[static_cast<std::size_t>(y)] <= 1 && !is_t[static_cast<std::size_t>(y)]) work.push_back(y);
    }
  }
  std::vector<NodeId> id(static_cast<std::size_t>(n), kNoNode);
  NodeId next = 0;
  for (NodeId v = 0; v < n; ++v) {
    if (alive[static_cast<std::size_t>(v)]) id[static_cast<std::size_t>(v)] = next++;
  }
  std::vector<detail::MinorEdge> edges;
  std::vector<double> kept_lev;
  for (const auto& e : g.edges()) {
    if (!edge_alive[static_cast<std::size_t>(e.id)]) continue;
    edges.push_back({id[static_cast<std::size_t>(e.u)], id[static_cast<std::size_t>(e.v)], e.weight,
                     d.edge_image[static_cast<std::size_t>(e.id)]});
    kept_lev.push_back(lev[static_cast<std::size_t>(e.id)]);
  }
  const MinorDistribution pruned = next == n ? d : detail::rebuild_minor(d, id, next, {}, edges);
  MinorWithTerminals out;
  out.dist = split_by_leverage(pruned, next == n ? lev : kept_lev, report);
  for (NodeId v : t) out.terminals.push_back(id[static_cast<std::size_t>(v)]);
  return out;
}

// ---------------------------------------------------------------------------
// Steady edges

struct SteadyOptions {
  double delta = 0.5;         // localization bound
  double sample_prob = 0.0;   // 0: derived from delta and m
  double steady_scale = 1.0;  // C
  bool strict_thresholds = false;
  double energy_delta = 0.5;  // sketch accuracy for the variance certificate
  int max_attempts = 10;
};

struct SteadySet {
  std::vector<EdgeId> z;             // ascending
  double alpha = 0.0;                // per-edge inclusion probability bound
  double delta = 0.0;
  std::vector<double> localization;  // per member: sketched sum over the filtered candidates
  std::vector<double> variance;      // per member: sketched SC energy
  double variance_bound = 0.0;       // 32 |T| / m
  int attempts = 0;
  EstimatorStats stats;
};

/// Inclusion probability: strict mode delta / (1000 C log2^2 m); otherwise
/// delta / (C log2 m), capped at 1/2.
inline double steady_sample_prob(std::size_t m, const SteadyOptions& opt) {
  if (opt.sample_prob > 0.0) return std::min(1.0, opt.sample_prob);
  const double lm = std::log2(std::max<double>(2.0, static_cast<double>(m)));
  if (opt.strict_thresholds) return opt.delta / (1000.0 * opt.steady_scale * lm * lm);
  return std::min(0.5, opt.delta / (opt.steady_scale * lm));
}

/// Sample edges (never terminal-terminal) with probability alpha, keep those
/// whose sketched SC energy is at most 16 |T| / m and whose sketched
/// localization sum is at most delta / 2 (both sketches are within a factor
/// 2), then thin to a matching so contractions never merge two terminals.
inline SteadySet find_steady(const WeightedGraph& g, const std::vector<NodeId>& t, LaplacianSolver& solver,
                             const SolverFactory& factory, std::uint64_t seed, const SteadyOptions& opt = {}) {
  const NodeId n = g.num_nodes();
  std::vector<char> is_t(static_cast<std::size_t>(n), 0);
  for (NodeId v : t) is_t[static_cast<std::size_t>(v)] = 1;
  std::size_t m = 0;
  for (const auto& e : g.edges()) m += e.is_self_loop() ? 0 : 1;
  SteadySet s;
  s.delta = opt.delta;
  s.alpha = steady_sample_prob(m, opt);
  s.variance_bound = 32.0 * static_cast<double>(t.size()) / static_cast<double>(std::max<std::size_t>(1, m));
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    s.attempts = attempt + 1;
    std::mt19937_64 rng(seed + 0x51ED27ULL * static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<EdgeId> w;
    for (const auto& e : g.edges()) {
      if (e.is_self_loop() || (is_t[static_cast<std::size_t>(e.u)] && is_t[static_cast<std::size_t>(e.v)])) continue;
      if (unif(rng) < s.alpha) w.push_back(e.id);
    }
    if (w.empty()) continue;
    const auto energy = sc_energy_estimates(g, t, solver, factory, rng(), opt.energy_delta, &s.stats);
    std::vector<EdgeId> w2;
    for (EdgeId e : w) {
      if (energy[static_cast<std::size_t>(e)] <= 0.5 * s.variance_bound) w2.push_back(e);
    }
    if (w2.empty()) continue;
    const auto loc = approx_column_sums(g, w2, solver, rng(), &s.stats);
    std::vector<std::size_t> order;
    for (std::size_t k = 0; k < w2.size(); ++k) {
      if (loc[k] <= 0.5 * opt.delta) order.push_back(k);
    }
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    std::vector<std::pair<EdgeId, std::size_t>> picked;
    for (std::size_t k : order) {
      const auto& e = g.edge(w2[k]);
      if (used[static_cast<std::size_t>(e.u)] || used[static_cast<std::size_t>(e.v)]) continue;
      used[static_cast<std::size_t>(e.u)] = used[static_cast<std::size_t>(e.v)] = 1;
      picked.emplace_back(w2[k], k);
    }
    if (picked.empty()) continue;
    std::sort(picked.begin(), picked.end());
    s.z.clear();
    s.localization.clear();
    s.variance.clear();
    for (const auto& [e, k] : picked) {
      s.z.push_back(e);
      s.localization.push_back(loc[k]);
      s.variance.push_back(energy[static_cast<std::size_t>(e)]);
    }
    return s;
  }
  throw approxsc_error("find_steady: empty steady set after " + std::to_string(opt.max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Contraction loop

struct ContractStep {
  MinorWithTerminals next;
  int contracted = 0;
  int deleted = 0;
};

/// Each edge of Z is contracted with probability min(1, lev_e), otherwise
/// deleted. Z must not merge two terminals.
inline ContractStep contract_or_delete(const MinorDistribution& d, const std::vector<NodeId>& t, const std::vector<EdgeId>& z,
                                       const std::vector<double>& lev, std::mt19937_64& rng) {
  const WeightedGraph& g = d.minor;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<char> drop(g.num_edges(), 0);
  std::vector<EdgeId> contract;
  ContractStep out;
  for (EdgeId e : z) {
    if (unif(rng) < std::min(1.0, lev[static_cast<std::size_t>(e)])) {
      contract.push_back(e);
      ++out.contracted;
    } else {
      drop[static_cast<std::size_t>(e)] = 1;
      ++out.deleted;
    }
  }
  // Delete first (ids shift), then contract on the survivors.
  WeightedGraph kept(g.num_nodes());
  std::vector<EdgeId> source, remap(g.num_edges(), kNoEdge);
  for (const auto& e : g.edges()) {
    if (drop[static_cast<std::size_t>(e.id)]) continue;
    remap[static_cast<std::size_t>(e.id)] = kept.add_edge(e.u, e.v, e.weight);
    source.push_back(e.id);
  }
  MinorDistribution pruned;
  pruned.minor = kept;
  pruned.host = d.host;
  pruned.super_node = d.super_node;
  pruned.leader = d.leader;
  pruned.tree = d.tree;
  pruned.rho = d.rho;
  for (EdgeId e : source) pruned.edge_image.push_back(d.edge_image[static_cast<std::size_t>(e)]);
  for (EdgeId& e : contract) e = remap[static_cast<std::size_t>(e)];
  auto cr = contract_edges(pruned, contract);
  out.next.dist = std::move(cr.dist);
  for (NodeId v : t) out.next.terminals.push_back(cr.node_map[static_cast<std::size_t>(v)]);
  std::vector<NodeId> check = out.next.terminals;
  std::sort(check.begin(), check.end());
  if (std::adjacent_find(check.begin(), check.end()) != check.end()) {
    throw approxsc_error("contract_or_delete merged two terminals");
  }
  return out;
}

struct ApproxScOptions {
  double threshold_scale = 1.0;  // edge threshold = scale * |T| * ceil(log2 n)^2 / eps^2
  double lev_delta = 0.1;        // 1.1-approximate scores for splitting and contraction
  SteadyOptions steady;
  int max_iterations = 500;
};

struct ApproxScResult {
  MinorDistribution dist;         // H
  std::vector<NodeId> terminals;  // ids in H, input order
  double edge_threshold = 0.0;
  double edge_bound = 0.0;        // |T| log2^2 n / eps^2
  int iterations = 0;
  int contracted = 0;
  int deleted = 0;
  SplitReport splits;
  std::vector<std::size_t> edge_history;
  EstimatorStats stats;
  std::int64_t rounds = 0;
};

inline std::size_t live_edges(const WeightedGraph& g) {
  std::size_t m = 0;
  for (const auto& e : g.edges()) m += e.is_self_loop() ? 0 : 1;
  return m;
}

/// Minor H with T kept and SC(H, T) ~ SC(G, T): repeat {collapse, estimate
/// leverage, split, steady set, contract-or-delete} until the edge count is
/// at most the threshold.
inline ApproxScResult approx_sc(const MinorDistribution& dist, const std::vector<NodeId>& t, double eps,
                                const SolverFactory& factory, std::uint64_t seed, AggregationService& service,
                                const ApproxScOptions& opt = {}) {
  if (t.empty()) throw std::invalid_argument("approx_sc: empty terminal set");
  const NodeId n0 = dist.minor.num_nodes();
  const double lg = std::ceil(std::log2(std::max<double>(2.0, n0)));
  ApproxScResult res;
  res.edge_bound = static_cast<double>(t.size()) * lg * lg / (eps * eps);
  res.edge_threshold = opt.threshold_scale * res.edge_bound;
  MinorWithTerminals cur{dist, t};
  std::mt19937_64 rng(seed);
  const std::int64_t start = service.charged_rounds();
  res.edge_history.push_back(live_edges(cur.dist.minor));
  while (static_cast<double>(live_edges(cur.dist.minor)) > res.edge_threshold) {
    if (res.iterations >= opt.max_iterations) throw approxsc_error("approx_sc: iteration budget exceeded");
    ++res.iterations;
    cur = collapse_degenerate(cur.dist, cur.terminals);
    if (static_cast<double>(live_edges(cur.dist.minor)) <= res.edge_threshold) break;
    if (cur.dist.minor.num_nodes() == static_cast<NodeId>(cur.terminals.size())) break;  // only T-T edges left
    EstimatorStats st;
    {
      auto solver = factory(cur.dist.minor);
      const auto lev = approx_leverage_scores(cur.dist.minor, opt.lev_delta, *solver, rng(), &st);
      SplitReport rep;
      cur = split_and_collapse(cur.dist, cur.terminals, lev.lev, &rep);
      res.splits.parallel += rep.parallel;
      res.splits.series += rep.series;
    }
    auto solver = factory(cur.dist.minor);
    SteadySet z;
    try {
      z = find_steady(cur.dist.minor, cur.terminals, *solver, factory, rng(), opt.steady);
    } catch (const approxsc_error&) {
      res.stats += st;
      service.charge(cur.dist, st.aggregations);
      continue;
    }
    st += z.stats;
    const auto lev = approx_leverage_scores(cur.dist.minor, opt.lev_delta, *solver, rng(), &st);
    auto step = contract_or_delete(cur.dist, cur.terminals, z.z, lev.lev, rng);
    res.contracted += step.contracted;
    res.deleted += step.deleted;
    st.aggregations += 2;
    service.charge(cur.dist, st.aggregations);
    res.stats += st;
    cur = std::move(step.next);
    res.edge_history.push_back(live_edges(cur.dist.minor));
  }
  res.dist = std::move(cur.dist);
  res.terminals = std::move(cur.terminals);
  res.rounds = service.charged_rounds() - start;
  return res;
}

}  // namespace lapdist

#endif  // LAPDIST_APPROXSC_HPP_
