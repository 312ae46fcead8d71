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

#ifndef LAPDIST_ULTRASPARSIFY_HPP_
#define LAPDIST_ULTRASPARSIFY_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <queue>
#include <random>
#include <vector>

#include "lapdist/graph.hpp"
#include "lapdist/linear.hpp"
#include "lapdist/minors.hpp"
#include "lapdist/service.hpp"

namespace lapdist {

// ---------------------------------------------------------------------------
// Spanning trees and stretch

struct StretchTree {
  std::vector<EdgeId> tree_edges;  // ascending
  std::vector<char> in_tree;       // per edge of G
  std::vector<double> stretch;     // per edge; tree edges 1, self-loops 0
  double total_stretch = 0.0;      // sum over off-tree edges
};

namespace detail {

/// Rooted view of a spanning tree given by edge ids.
struct RootedTree {
  std::vector<NodeId> parent;
  std::vector<EdgeId> parent_edge;
  std::vector<int> depth;
  std::vector<double> resistance;  // to the root along tree edges
};

inline RootedTree root_tree(const WeightedGraph& g, const std::vector<char>& in_tree, NodeId root = 0) {
  const NodeId n = g.num_nodes();
  RootedTree t;
  t.parent.assign(static_cast<std::size_t>(n), kNoNode);
  t.parent_edge.assign(static_cast<std::size_t>(n), kNoEdge);
  t.depth.assign(static_cast<std::size_t>(n), -1);
  t.resistance.assign(static_cast<std::size_t>(n), 0.0);
  if (n == 0) return t;
  std::queue<NodeId> q;
  q.push(root);
  t.depth[static_cast<std::size_t>(root)] = 0;
  NodeId seen = 1;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (const auto& inc : g.incident(u)) {
      if (!in_tree[static_cast<std::size_t>(inc.edge)] || inc.other == u) continue;
      auto& d = t.depth[static_cast<std::size_t>(inc.other)];
      if (d >= 0) continue;
      d = t.depth[static_cast<std::size_t>(u)] + 1;
      t.parent[static_cast<std::size_t>(inc.other)] = u;
      t.parent_edge[static_cast<std::size_t>(inc.other)] = inc.edge;
      t.resistance[static_cast<std::size_t>(inc.other)] =
          t.resistance[static_cast<std::size_t>(u)] + g.edge(inc.edge).resistance();
      ++seen;
      q.push(inc.other);
    }
  }
  if (seen != n) throw graph_error(graph_error::Kind::not_a_tree, "tree edges do not span the graph");
  return t;
}

inline NodeId tree_lca(const RootedTree& t, NodeId u, NodeId v) {
  while (t.depth[static_cast<std::size_t>(u)] > t.depth[static_cast<std::size_t>(v)]) u = t.parent[static_cast<std::size_t>(u)];
  while (t.depth[static_cast<std::size_t>(v)] > t.depth[static_cast<std::size_t>(u)]) v = t.parent[static_cast<std::size_t>(v)];
  while (u != v) {
    u = t.parent[static_cast<std::size_t>(u)];
    v = t.parent[static_cast<std::size_t>(v)];
  }
  return u;
}

/// Tree edges on the path between u and v.
inline std::vector<EdgeId> tree_path(const RootedTree& t, NodeId u, NodeId v) {
  std::vector<EdgeId> out;
  const NodeId a = tree_lca(t, u, v);
  for (NodeId x = u; x != a; x = t.parent[static_cast<std::size_t>(x)]) out.push_back(t.parent_edge[static_cast<std::size_t>(x)]);
  for (NodeId x = v; x != a; x = t.parent[static_cast<std::size_t>(x)]) out.push_back(t.parent_edge[static_cast<std::size_t>(x)]);
  return out;
}

/// Shortest-path tree under resistance lengths; returns tree edge flags.
inline std::vector<char> shortest_path_tree(const WeightedGraph& g, NodeId root, std::vector<double>* dist_out = nullptr) {
  const NodeId n = g.num_nodes();
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<EdgeId> via(static_cast<std::size_t>(n), kNoEdge);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[static_cast<std::size_t>(root)] = 0.0;
  pq.push({0.0, root});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (const auto& inc : g.incident(u)) {
      if (inc.other == u) continue;
      const double nd = d + g.edge(inc.edge).resistance();
      auto& cur = dist[static_cast<std::size_t>(inc.other)];
      // Ties go to the smaller edge id so the tree is deterministic.
      if (nd < cur - 1e-12 || (std::abs(nd - cur) <= 1e-12 && inc.edge < via[static_cast<std::size_t>(inc.other)])) {
        cur = std::min(cur, nd);
        via[static_cast<std::size_t>(inc.other)] = inc.edge;
        pq.push({cur, inc.other});
      }
    }
  }
  std::vector<char> in_tree(g.num_edges(), 0);
  for (NodeId v = 0; v < n; ++v) {
    if (v != root && via[static_cast<std::size_t>(v)] != kNoEdge) in_tree[static_cast<std::size_t>(via[static_cast<std::size_t>(v)])] = 1;
  }
  if (dist_out != nullptr) *dist_out = std::move(dist);
  return in_tree;
}

inline double off_tree_total(const WeightedGraph& g, const std::vector<char>& in_tree) {
  const RootedTree t = root_tree(g, in_tree);
  double total = 0.0;
  for (const auto& e : g.edges()) {
    if (in_tree[static_cast<std::size_t>(e.id)] || e.is_self_loop()) continue;
    const NodeId a = tree_lca(t, e.u, e.v);
    total += e.weight * (t.resistance[static_cast<std::size_t>(e.u)] + t.resistance[static_cast<std::size_t>(e.v)] -
                         2.0 * t.resistance[static_cast<std::size_t>(a)]);
  }
  return total;
}

}  // namespace detail

/// Exact stretches of every edge with respect to the spanning tree `tree_edges`.
inline StretchTree compute_stretch(const WeightedGraph& g, const std::vector<EdgeId>& tree_edges) {
  StretchTree st;
  st.in_tree.assign(g.num_edges(), 0);
  for (EdgeId e : tree_edges) st.in_tree[static_cast<std::size_t>(e)] = 1;
  if (g.num_nodes() > 0 && static_cast<NodeId>(tree_edges.size()) != g.num_nodes() - 1) {
    throw graph_error(graph_error::Kind::not_a_tree, "a spanning tree needs n-1 edges");
  }
  const auto t = detail::root_tree(g, st.in_tree);
  st.tree_edges = tree_edges;
  std::sort(st.tree_edges.begin(), st.tree_edges.end());
  st.stretch.assign(g.num_edges(), 0.0);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    if (st.in_tree[static_cast<std::size_t>(e.id)]) {
      st.stretch[static_cast<std::size_t>(e.id)] = 1.0;
      continue;
    }
    const NodeId a = detail::tree_lca(t, e.u, e.v);
    const double s = e.weight * (t.resistance[static_cast<std::size_t>(e.u)] + t.resistance[static_cast<std::size_t>(e.v)] -
                                 2.0 * t.resistance[static_cast<std::size_t>(a)]);
    st.stretch[static_cast<std::size_t>(e.id)] = s;
    st.total_stretch += s;
  }
  return st;
}

struct LowStretchOptions {
  int candidate_roots = 5;
  int swap_passes = 4;
  int swap_edges = 8;  // highest-stretch off-tree edges tried per pass
};

struct LowStretchReport {
  int candidates = 0;
  int swaps = 0;
  int max_depth = 0;  // hop depth of the chosen tree
};

/// Shortest-path trees from the most central roots, the best one refined by
/// single edge swaps while the total off-tree stretch decreases.
inline StretchTree low_stretch_tree(const WeightedGraph& g, const LowStretchOptions& opt = {},
                                    LowStretchReport* report = nullptr) {
  const NodeId n = g.num_nodes();
  if (!is_connected(g)) throw graph_error(graph_error::Kind::disconnected, "low_stretch_tree needs a connected graph");
  LowStretchReport rep;
  if (n <= 1) {
    if (report != nullptr) *report = rep;
    return compute_stretch(g, {});
  }
  // Rank roots by total resistive distance (1-median first).
  std::vector<std::pair<double, NodeId>> score;
  for (NodeId r = 0; r < n; ++r) {
    std::vector<double> dist;
    detail::shortest_path_tree(g, r, &dist);
    score.push_back({std::accumulate(dist.begin(), dist.end(), 0.0), r});
  }
  std::sort(score.begin(), score.end());
  std::vector<char> best;
  double best_total = std::numeric_limits<double>::infinity();
  const int roots = std::min<int>(opt.candidate_roots, n);
  for (int i = 0; i < roots; ++i) {
    auto in_tree = detail::shortest_path_tree(g, score[static_cast<std::size_t>(i)].second);
    const double total = detail::off_tree_total(g, in_tree);
    ++rep.candidates;
    if (total < best_total - 1e-12) {
      best_total = total;
      best = std::move(in_tree);
    }
  }
  for (int pass = 0; pass < opt.swap_passes; ++pass) {
    const auto t = detail::root_tree(g, best);
    std::vector<std::pair<double, EdgeId>> off;
    for (const auto& e : g.edges()) {
      if (best[static_cast<std::size_t>(e.id)] || e.is_self_loop()) continue;
      const NodeId a = detail::tree_lca(t, e.u, e.v);
      off.push_back({e.weight * (t.resistance[static_cast<std::size_t>(e.u)] + t.resistance[static_cast<std::size_t>(e.v)] -
                                 2.0 * t.resistance[static_cast<std::size_t>(a)]),
                     e.id});
    }
    std::sort(off.begin(), off.end(), [](const auto& x, const auto& y) { return x.first > y.first || (x.first == y.first && x.second < y.second); });
    double pass_best = best_total;
    std::pair<EdgeId, EdgeId> swap{kNoEdge, kNoEdge};
    const int tries = std::min<int>(opt.swap_edges, static_cast<int>(off.size()));
    for (int i = 0; i < tries; ++i) {
      const EdgeId e = off[static_cast<std::size_t>(i)].second;
      for (EdgeId f : detail::tree_path(t, g.edge(e).u, g.edge(e).v)) {
        best[static_cast<std::size_t>(f)] = 0;
        best[static_cast<std::size_t>(e)] = 1;
        const double total = detail::off_tree_total(g, best);
        best[static_cast<std::size_t>(f)] = 1;
        best[static_cast<std::size_t>(e)] = 0;
        if (total < pass_best - 1e-9) {
          pass_best = total;
          swap = {e, f};
        }
      }
    }
    if (swap.first == kNoEdge) break;
    best[static_cast<std::size_t>(swap.first)] = 1;
    best[static_cast<std::size_t>(swap.second)] = 0;
    best_total = pass_best;
    ++rep.swaps;
  }
  std::vector<EdgeId> edges;
  for (EdgeId e = 0; e < static_cast<EdgeId>(g.num_edges()); ++e) {
    if (best[static_cast<std::size_t>(e)]) edges.push_back(e);
  }
  auto st = compute_stretch(g, edges);
  const auto t = detail::root_tree(g, st.in_tree);
  rep.max_depth = *std::max_element(t.depth.begin(), t.depth.end());
  if (report != nullptr) *report = rep;
  return st;
}

// ---------------------------------------------------------------------------
// Stretch sampling

struct SampledSparsifier {
  WeightedGraph h;                  // same node set as G
  std::vector<EdgeId> source_edge;  // per H edge: edge of G
  std::vector<char> off_tree;       // per H edge
  int off_tree_kept = 0;
  double expected_off_tree = 0.0;   // sum of p_e
  double variance_off_tree = 0.0;   // sum of p_e (1 - p_e)
};

/// H = k * T plus each off-tree edge kept with p = min(1, c_s stretch ln n / k)
/// at weight w / p.
inline SampledSparsifier sample_by_stretch(const WeightedGraph& g, const StretchTree& t, double k, std::uint64_t seed,
                                           double c_s = 2.0) {
  if (!(k >= 1.0)) throw std::invalid_argument("sample_by_stretch: k must be at least 1");
  SampledSparsifier out;
  out.h = WeightedGraph(g.num_nodes());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double logn = std::log(std::max<double>(2.0, g.num_nodes()));
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    if (t.in_tree[static_cast<std::size_t>(e.id)]) {
      out.h.add_edge(e.u, e.v, k * e.weight);
      out.source_edge.push_back(e.id);
      out.off_tree.push_back(0);
      continue;
    }
    const double p = std::min(1.0, c_s * t.stretch[static_cast<std::size_t>(e.id)] * logn / k);
    out.expected_off_tree += p;
    out.variance_off_tree += p * (1.0 - p);
    const double draw = unif(rng);
    if (p <= 0.0 || draw >= p) continue;
    out.h.add_edge(e.u, e.v, e.weight / p);
    out.source_edge.push_back(e.id);
    out.off_tree.push_back(1);
    ++out.off_tree_kept;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Degree-1/2 elimination

/// Eliminations of degree-1 and degree-2 nodes in order. Exact: with the
/// pseudoinverse of the reduced graph as the inner operator the result is a
/// pseudo-solution for the original Laplacian.
class Degree12Reduction : public SchurReduction {
 public:
  struct Op {
    NodeId v = kNoNode;
    int count = 0;  // neighbours at elimination time (0, 1 or 2)
    NodeId nbr[2] = {kNoNode, kNoNode};
    double w[2] = {0.0, 0.0};
    double degree = 0.0;
  };

  Degree12Reduction(NodeId n, std::vector<Op> ops, std::vector<NodeId> kept, int sweeps)
      : n_(n), ops_(std::move(ops)), kept_(std::move(kept)), sweeps_(sweeps) {}

  NodeId size() const override { return n_; }
  const std::vector<NodeId>& kept() const override { return kept_; }
  const std::vector<Op>& ops() const { return ops_; }
  int sweeps() const { return sweeps_; }
  int aggregations_per_apply() const override { return 2 * sweeps_; }

  Vector reduce(const Vector& b, std::vector<Vector>& carry) const override {
    Vector work = b;
    Vector held(static_cast<Eigen::Index>(ops_.size()));
    for (std::size_t i = 0; i < ops_.size(); ++i) {
      const Op& op = ops_[i];
      const double bv = work[op.v];
      held[static_cast<Eigen::Index>(i)] = bv;
      for (int j = 0; j < op.count; ++j) work[op.nbr[j]] += op.w[j] / op.degree * bv;
      work[op.v] = 0.0;
    }
    carry.push_back(std::move(held));
    Vector out(static_cast<Eigen::Index>(kept_.size()));
    for (std::size_t i = 0; i < kept_.size(); ++i) out[static_cast<Eigen::Index>(i)] = work[kept_[i]];
    return out;
  }

  Vector lift(std::vector<Vector>& carry, const Vector& x_kept) const override {
    const Vector held = std::move(carry.back());
    carry.pop_back();
    Vector x = Vector::Zero(n_);
    for (std::size_t i = 0; i < kept_.size(); ++i) x[kept_[i]] = x_kept[static_cast<Eigen::Index>(i)];
    for (std::size_t i = ops_.size(); i-- > 0;) {
      const Op& op = ops_[i];
      if (op.count == 0) continue;
      double s = held[static_cast<Eigen::Index>(i)];
      for (int j = 0; j < op.count; ++j) s += op.w[j] * x[op.nbr[j]];
      x[op.v] = s / op.degree;
    }
    return x;
  }

 private:
  NodeId n_;
  std::vector<Op> ops_;
  std::vector<NodeId> kept_;
  int sweeps_;
};

struct DegreeElimination {
  WeightedGraph reduced;                       // node i is kept[i] of H
  std::vector<NodeId> kept;                    // ascending ids of H
  std::shared_ptr<const Degree12Reduction> ops;
  MinorDistribution dist;                      // reduced graph into H, congestion 1
  int sweeps = 0;
};

/// Repeatedly removes non-terminal nodes with at most two distinct
/// neighbours: leaves are dropped, degree-2 nodes are spliced into a series
/// edge. Parallel edges are merged. Sweeps eliminate an independent set,
/// leaves first, then degree-2 nodes, each in ascending id order.
inline DegreeElimination eliminate_degree12(std::shared_ptr<const WeightedGraph> hp, const std::vector<NodeId>& keep) {
  const WeightedGraph& h = *hp;
  const NodeId n = h.num_nodes();
  struct Link {
    double w = 0.0;
    EdgeId image = kNoEdge;
  };
  std::vector<std::map<NodeId, Link>> adj(static_cast<std::size_t>(n));
  for (const auto& e : h.edges()) {
    if (e.is_self_loop()) continue;
    auto& a = adj[static_cast<std::size_t>(e.u)][e.v];
    auto& b = adj[static_cast<std::size_t>(e.v)][e.u];
    a.w += e.weight;
    b.w += e.weight;
    if (a.image == kNoEdge) a.image = b.image = e.id;
  }
  std::vector<char> terminal(static_cast<std::size_t>(n), 0), alive(static_cast<std::size_t>(n), 1);
  for (NodeId t : keep) {
    if (!h.contains(t)) throw graph_error(graph_error::Kind::invalid_node, "terminal out of range");
    terminal[static_cast<std::size_t>(t)] = 1;
  }
  std::vector<std::vector<NodeId>> members(static_cast<std::size_t>(n));
  std::vector<std::vector<EdgeId>> group_tree(static_cast<std::size_t>(n));
  for (NodeId v = 0; v < n; ++v) members[static_cast<std::size_t>(v)] = {v};
  auto absorb = [&](NodeId into, NodeId v, EdgeId via) {
    auto& m = members[static_cast<std::size_t>(into)];
    auto& src = members[static_cast<std::size_t>(v)];
    m.insert(m.end(), src.begin(), src.end());
    auto& t = group_tree[static_cast<std::size_t>(into)];
    const auto& ts = group_tree[static_cast<std::size_t>(v)];
    t.insert(t.end(), ts.begin(), ts.end());
    t.push_back(via);
    src.clear();
    group_tree[static_cast<std::size_t>(v)].clear();
  };

  std::vector<Degree12Reduction::Op> ops;
  NodeId remaining = n;
  int sweeps = 0;
  for (;;) {
    std::vector<char> blocked(static_cast<std::size_t>(n), 0);
    int eliminated = 0;
    for (std::size_t want = 1; want <= 2; ++want) {
      for (NodeId v = 0; v < n; ++v) {
        const auto vi = static_cast<std::size_t>(v);
        if (!alive[vi] || terminal[vi] || blocked[vi] || remaining <= 1) continue;
        auto& nb = adj[vi];
        if (nb.size() != want) continue;
        Degree12Reduction::Op op;
        op.v = v;
        op.count = static_cast<int>(nb.size());
        int j = 0;
        for (const auto& [u, link] : nb) {
          op.nbr[j] = u;
          op.w[j] = link.w;
          op.degree += link.w;
          blocked[static_cast<std::size_t>(u)] = 1;
          ++j;
        }
        if (op.count == 1) {
          const NodeId u = op.nbr[0];
          absorb(u, v, nb.begin()->second.image);
          adj[static_cast<std::size_t>(u)].erase(v);
        } else {
          const NodeId a = op.nbr[0], b = op.nbr[1];  // a < b
          const Link la = nb.at(a), lb = nb.at(b);
          absorb(a, v, la.image);
          adj[static_cast<std::size_t>(a)].erase(v);
          adj[static_cast<std::size_t>(b)].erase(v);
          const double w = la.w * lb.w / (la.w + lb.w);
          auto& ab = adj[static_cast<std::size_t>(a)][b];
          auto& ba = adj[static_cast<std::size_t>(b)][a];
          ab.w += w;
          ba.w += w;
          if (ab.image == kNoEdge) ab.image = ba.image = lb.image;
        }
        nb.clear();
        alive[vi] = 0;
        --remaining;
        ++eliminated;
        ops.push_back(op);
      }
    }
    if (eliminated == 0) break;
    ++sweeps;
  }

  DegreeElimination out;
  std::vector<NodeId> index(static_cast<std::size_t>(n), kNoNode);
  for (NodeId v = 0; v < n; ++v) {
    if (!alive[static_cast<std::size_t>(v)]) continue;
    index[static_cast<std::size_t>(v)] = static_cast<NodeId>(out.kept.size());
    out.kept.push_back(v);
  }
  const auto k = static_cast<NodeId>(out.kept.size());
  out.reduced = WeightedGraph(k);
  MinorDistribution& d = out.dist;
  d.host = hp;
  d.super_node.resize(static_cast<std::size_t>(k));
  d.leader = out.kept;
  d.tree.resize(static_cast<std::size_t>(k));
  for (NodeId i = 0; i < k; ++i) {
    const NodeId v = out.kept[static_cast<std::size_t>(i)];
    auto nodes = members[static_cast<std::size_t>(v)];
    std::sort(nodes.begin(), nodes.end());
    d.tree[static_cast<std::size_t>(i)] = detail::stitch_tree(h, nodes, group_tree[static_cast<std::size_t>(v)], v);
    d.super_node[static_cast<std::size_t>(i)] = std::move(nodes);
  }
  for (NodeId i = 0; i < k; ++i) {
    const NodeId v = out.kept[static_cast<std::size_t>(i)];
    for (const auto& [u, link] : adj[static_cast<std::size_t>(v)]) {
      if (u < v) continue;
      out.reduced.add_edge(i, index[static_cast<std::size_t>(u)], link.w);
      d.edge_image.push_back(EdgeImage::edge(link.image));
    }
  }
  d.minor = out.reduced;
  d.rho = 1;
  out.sweeps = sweeps;
  out.ops = std::make_shared<Degree12Reduction>(n, std::move(ops), out.kept, sweeps);
  return out;
}

inline DegreeElimination eliminate_degree12(const WeightedGraph& h, const std::vector<NodeId>& keep) {
  return eliminate_degree12(std::make_shared<const WeightedGraph>(h), keep);
}

// ---------------------------------------------------------------------------
// Pipeline

struct UltrasparsifyOptions {
  double c_s = 2.0;
  std::uint64_t seed = 1;
  LowStretchOptions tree;
};

struct UltrasparsifyResult {
  StretchTree tree;
  SampledSparsifier sampled;     // H over the nodes of G
  MinorDistribution h_dist;      // H into the host
  DegreeElimination elim;        // reduced graph into H
  MinorDistribution ghat_dist;   // reduced graph into the host
  std::vector<NodeId> terminals; // C: endpoints of kept off-tree edges (ids of G)
  std::int64_t rounds = 0;
  std::int64_t aggregations = 0;
};

/// Minor distribution of a reweighted edge subset of d.minor.
inline MinorDistribution restrict_edges(const MinorDistribution& d, const WeightedGraph& sub,
                                        const std::vector<EdgeId>& source_edge) {
  MinorDistribution out;
  out.minor = sub;
  out.host = d.host;
  out.super_node = d.super_node;
  out.leader = d.leader;
  out.tree = d.tree;
  out.rho = d.rho;
  for (EdgeId e : source_edge) out.edge_image.push_back(d.edge_image[static_cast<std::size_t>(e)]);
  return out;
}

inline UltrasparsifyResult ultrasparsify(const MinorDistribution& dist, double k, AggregationService& service,
                                         const UltrasparsifyOptions& opt = {}) {
  const WeightedGraph& g = dist.minor;
  UltrasparsifyResult res;
  LowStretchReport rep;
  res.tree = low_stretch_tree(g, opt.tree, &rep);
  res.sampled = sample_by_stretch(g, res.tree, k, opt.seed, opt.c_s);
  res.h_dist = restrict_edges(dist, res.sampled.h, res.sampled.source_edge);
  std::vector<NodeId> keep;
  for (const auto& e : res.sampled.h.edges()) {
    if (!res.sampled.off_tree[static_cast<std::size_t>(e.id)]) continue;
    keep.push_back(e.u);
    keep.push_back(e.v);
  }
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  res.elim = eliminate_degree12(std::make_shared<const WeightedGraph>(res.sampled.h), keep);
  res.terminals = res.elim.kept;
  res.ghat_dist = compose_minors(res.elim.dist, res.h_dist);
  const auto lg = static_cast<std::int64_t>(std::ceil(std::log2(std::max<double>(2.0, g.num_nodes()))));
  // Tree growth: one min-aggregation per hop level per candidate, one
  // stretch evaluation per swap pass; sampling needs path sums; one batch
  // per elimination sweep.
  res.aggregations = static_cast<std::int64_t>(rep.candidates) * (rep.max_depth + 1) + (rep.swaps + 1) * lg + lg +
                     res.elim.sweeps;
  res.rounds = service.charge(dist, res.aggregations);
  return res;
}

}  // namespace lapdist

#endif  // LAPDIST_ULTRASPARSIFY_HPP_
