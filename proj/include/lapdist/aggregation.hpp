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

// Part-wise aggregation in CONGEST: aggregate operators, shortcut sets, the
// copy-augmented graph, a multi-task tree aggregation node program and the
// wrapper that runs augmented-graph programs on the host.

#ifndef LAPDIST_AGGREGATION_HPP_
#define LAPDIST_AGGREGATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "lapdist/graph.hpp"
#include "lapdist/netsim.hpp"

namespace lapdist {

// ---------------------------------------------------------------------------
// Aggregate operators

struct AggValue {
  double x = 0.0;
  std::int64_t id = -1;
  bool empty = true;

  static AggValue of(double x, std::int64_t id = -1) { return {x, id, false}; }
  friend bool operator==(const AggValue& a, const AggValue& b) {
    if (a.empty || b.empty) return a.empty == b.empty;
    return a.x == b.x && a.id == b.id;
  }
};

/// A commutative, associative combine. Empty values act as identity.
class AggregateOp {
 public:
  using Fn = std::function<AggValue(const AggValue&, const AggValue&)>;

  AggregateOp() = default;
  AggregateOp(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  const std::string& name() const { return name_; }

  AggValue operator()(const AggValue& a, const AggValue& b) const {
    if (a.empty) return b;
    if (b.empty) return a;
    AggValue r = fn_(a, b);
    r.empty = false;
    return r;
  }

  AggValue fold(const std::vector<AggValue>& values) const {
    AggValue acc;
    for (const auto& v : values) acc = (*this)(acc, v);
    return acc;
  }

 private:
  std::string name_;
  Fn fn_;
};

class aggregation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace ops {

inline AggregateOp min() {
  return {"min", [](const AggValue& a, const AggValue& b) {
            if (a.x != b.x) return a.x < b.x ? a : b;
            return a.id <= b.id ? a : b;
          }};
}
inline AggregateOp max() {
  return {"max", [](const AggValue& a, const AggValue& b) {
            if (a.x != b.x) return a.x > b.x ? a : b;
            return a.id <= b.id ? a : b;
          }};
}
inline AggregateOp sum() {
  return {"sum", [](const AggValue& a, const AggValue& b) {
            const double s = a.x + b.x;
            if (!std::isfinite(s)) throw aggregation_error("sum overflowed the word width");
            return AggValue::of(s);
          }};
}
/// min with the answer being the id. min and max also break ties by id, so
/// every registered operator is exactly commutative on (x, id).
inline AggregateOp id_of_min() {
  return {"id-of-min", [](const AggValue& a, const AggValue& b) {
            if (a.x != b.x) return a.x < b.x ? a : b;
            return a.id <= b.id ? a : b;
          }};
}

}  // namespace ops

/// Registry of distributive operators. Custom operators are probed for
/// commutativity and associativity on random samples before acceptance.
class OpRegistry {
 public:
  OpRegistry() {
    for (auto op : {ops::min(), ops::max(), ops::sum(), ops::id_of_min()}) ops_.emplace(op.name(), op);
  }

  static OpRegistry& global() {
    static OpRegistry r;
    return r;
  }

  void add(const AggregateOp& op, int probes = 200, std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> small(-50, 50);
    auto draw = [&] { return AggValue::of(small(rng), small(rng)); };
    for (int i = 0; i < probes; ++i) {
      const auto a = draw(), b = draw(), c = draw();
      if (!(op(a, b) == op(b, a))) throw aggregation_error("operator '" + op.name() + "' is not commutative");
      if (!(op(op(a, b), c) == op(a, op(b, c)))) {
        throw aggregation_error("operator '" + op.name() + "' is not associative");
      }
    }
    ops_[op.name()] = op;
  }

  const AggregateOp& get(const std::string& name) const {
    auto it = ops_.find(name);
    if (it == ops_.end()) throw aggregation_error("unknown aggregate operator '" + name + "'");
    return it->second;
  }

 private:
  std::map<std::string, AggregateOp> ops_;
};

/// Per part, per member position: the input each member contributes.
using PartInputs = std::vector<std::vector<AggValue>>;

inline PartInputs inputs_from_node_values(const Partition& p, const std::vector<double>& values) {
  PartInputs in(p.parts.size());
  for (std::size_t i = 0; i < p.parts.size(); ++i) {
    for (NodeId u : p.parts[i]) in[i].push_back(AggValue::of(values[static_cast<std::size_t>(u)], u));
  }
  return in;
}

/// The sequential per-part fold every distributed run is checked against.
inline std::vector<AggValue> sequential_part_fold(const PartInputs& inputs, const AggregateOp& op) {
  std::vector<AggValue> out;
  out.reserve(inputs.size());
  for (const auto& part : inputs) out.push_back(op.fold(part));
  return out;
}

// ---------------------------------------------------------------------------
// Shortcuts

struct ShortcutSet {
  std::vector<std::vector<EdgeId>> edges;  // H_i per part
  int congestion = 0;
  int dilation = 0;
  int quality() const { return congestion + dilation; }
};

namespace detail {

/// Nodes and adjacency of G[P] plus the edges in `extra`.
struct PartView {
  std::vector<NodeId> nodes;
  std::map<NodeId, std::vector<std::pair<EdgeId, NodeId>>> adj;
};

inline PartView part_view(const WeightedGraph& g, const std::vector<NodeId>& part, const std::vector<EdgeId>& extra) {
  PartView v;
  std::vector<char> in(static_cast<std::size_t>(g.num_nodes()), 0);
  for (NodeId x : part) in[static_cast<std::size_t>(x)] = 1;
  std::vector<char> used(g.num_edges(), 0);
  auto add = [&](EdgeId e) {
    if (used[static_cast<std::size_t>(e)]) return;
    used[static_cast<std::size_t>(e)] = 1;
    const auto& he = g.edge(e);
    if (he.is_self_loop()) return;
    v.adj[he.u].emplace_back(e, he.v);
    v.adj[he.v].emplace_back(e, he.u);
  };
  for (NodeId x : part) {
    v.adj[x];
    for (const auto& inc : g.incident(x)) {
      if (in[static_cast<std::size_t>(inc.other)]) add(inc.edge);
    }
  }
  for (EdgeId e : extra) add(e);
  for (auto& [x, list] : v.adj) {
    std::sort(list.begin(), list.end());
    v.nodes.push_back(x);
  }
  return v;
}

inline std::map<NodeId, int> view_bfs(const PartView& v, NodeId root, std::map<NodeId, EdgeId>* parent = nullptr) {
  std::map<NodeId, int> dist;
  std::queue<NodeId> q;
  dist[root] = 0;
  if (parent) (*parent)[root] = kNoEdge;
  q.push(root);
  while (!q.empty()) {
    const NodeId x = q.front();
    q.pop();
    for (const auto& [e, y] : v.adj.at(x)) {
      if (dist.count(y)) continue;
      dist[y] = dist[x] + 1;
      if (parent) (*parent)[y] = e;
      q.push(y);
    }
  }
  return dist;
}

/// Exact hop diameter of the view (iFUB: double sweep to a central node,
/// then eccentricities by decreasing BFS level until the bounds meet).
inline int view_diameter(const PartView& v, std::size_t part) {
  const auto k = v.nodes.size();
  if (k <= 1) return 0;
  std::vector<std::vector<std::size_t>> adj(k);
  for (std::size_t a = 0; a < k; ++a) {
    for (const auto& [e, y] : v.adj.at(v.nodes[a])) {
      adj[a].push_back(static_cast<std::size_t>(std::lower_bound(v.nodes.begin(), v.nodes.end(), y) - v.nodes.begin()));
    }
  }
  std::vector<int> dist(k);
  std::vector<std::size_t> q(k), parent(k);
  auto bfs = [&](std::size_t r) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[r] = 0;
    parent[r] = r;
    std::size_t head = 0, tail = 0;
    q[tail++] = r;
    while (head < tail) {
      const std::size_t x = q[head++];
      for (std::size_t y : adj[x]) {
        if (dist[y] >= 0) continue;
        dist[y] = dist[x] + 1;
        parent[y] = x;
        q[tail++] = y;
      }
    }
    if (tail != k) throw aggregation_error("part " + std::to_string(part) + " plus its shortcut is disconnected");
    return q[k - 1];  // a farthest node
  };
  const std::size_t a = bfs(0);
  const std::size_t b = bfs(a);
  int lb = dist[b];
  std::size_t u = b;
  for (int s = 0; s < lb / 2; ++s) u = parent[u];
  bfs(u);
  const std::vector<int> from_u = dist;
  const int ecc_u = *std::max_element(from_u.begin(), from_u.end());
  lb = std::max(lb, ecc_u);
  std::vector<std::vector<std::size_t>> level(static_cast<std::size_t>(ecc_u) + 1);
  for (std::size_t x = 0; x < k; ++x) level[static_cast<std::size_t>(from_u[x])].push_back(x);
  int ub = 2 * ecc_u;
  for (int i = ecc_u; ub > lb && i > 0; --i) {
    for (std::size_t x : level[static_cast<std::size_t>(i)]) {
      bfs(x);
      lb = std::max(lb, dist[q[k - 1]]);
    }
    if (lb > 2 * (i - 1)) return lb;
    ub = 2 * (i - 1);
  }
  return lb;
}

}  // namespace detail

/// Recomputes congestion and dilation from content.
inline void measure_shortcut(const WeightedGraph& g, const Partition& p, ShortcutSet& s) {
  if (s.edges.size() != p.parts.size()) s.edges.resize(p.parts.size());
  std::vector<int> count(g.num_edges(), 0);
  for (auto& h : s.edges) {
    std::sort(h.begin(), h.end());
    h.erase(std::unique(h.begin(), h.end()), h.end());
    for (EdgeId e : h) ++count[static_cast<std::size_t>(e)];
  }
  s.congestion = count.empty() ? 0 : *std::max_element(count.begin(), count.end());
  s.dilation = 0;
  for (std::size_t i = 0; i < p.parts.size(); ++i) {
    const auto view = detail::part_view(g, p.parts[i], s.edges[i]);
    s.dilation = std::max(s.dilation, detail::view_diameter(view, i));
  }
}

struct ShortcutQuality {
  int c = 0;
  int d = 0;
  int q = 0;
};

inline ShortcutQuality shortcut_quality(const WeightedGraph& g, const Partition& p, ShortcutSet s) {
  measure_shortcut(g, p, s);
  return {s.congestion, s.dilation, s.quality()};
}

/// BFS parent edges of the whole graph from `root`.
inline std::vector<EdgeId> bfs_parent_edges(const WeightedGraph& g, NodeId root) {
  std::vector<EdgeId> parent(static_cast<std::size_t>(g.num_nodes()), kNoEdge);
  std::vector<char> seen(static_cast<std::size_t>(g.num_nodes()), 0);
  std::queue<NodeId> q;
  q.push(root);
  seen[static_cast<std::size_t>(root)] = 1;
  while (!q.empty()) {
    const NodeId x = q.front();
    q.pop();
    for (const auto& inc : g.incident(x)) {
      if (seen[static_cast<std::size_t>(inc.other)]) continue;
      seen[static_cast<std::size_t>(inc.other)] = 1;
      parent[static_cast<std::size_t>(inc.other)] = inc.edge;
      q.push(inc.other);
    }
  }
  return parent;
}

/// Node minimising eccentricity (first on ties). Candidates are evaluated
/// in order of eccentricity lower bounds max(d(s,x), ecc(s) - d(s,x)) from
/// earlier BFS sources; stops once no candidate can beat the best.
inline NodeId graph_center(const WeightedGraph& g) {
  const NodeId n = g.num_nodes();
  if (n == 0) return 0;
  std::vector<int> lo(static_cast<std::size_t>(n), 0);
  std::vector<char> done(static_cast<std::size_t>(n), 0);
  NodeId best = 0;
  int best_ecc = std::numeric_limits<int>::max();
  for (;;) {
    NodeId pick = kNoNode;
    for (NodeId x = 0; x < n; ++x) {
      if (done[static_cast<std::size_t>(x)]) continue;
      if (pick == kNoNode || lo[static_cast<std::size_t>(x)] < lo[static_cast<std::size_t>(pick)]) pick = x;
    }
    if (pick == kNoNode) break;
    const int bound = lo[static_cast<std::size_t>(pick)];
    if (bound > best_ecc || (bound == best_ecc && pick > best)) {
      // Remaining candidates at this bound with a smaller id could still tie.
      bool open = false;
      for (NodeId x = 0; x < best && !open; ++x) {
        open = !done[static_cast<std::size_t>(x)] && lo[static_cast<std::size_t>(x)] <= best_ecc;
      }
      if (!open) break;
      for (NodeId x = 0; x < best; ++x) {
        if (!done[static_cast<std::size_t>(x)] && lo[static_cast<std::size_t>(x)] <= best_ecc) {
          pick = x;
          break;
        }
      }
    }
    const auto dist = bfs_distances(g, pick);
    const int ecc = *std::max_element(dist.begin(), dist.end());
    done[static_cast<std::size_t>(pick)] = 1;
    if (ecc < best_ecc || (ecc == best_ecc && pick < best)) {
      best_ecc = ecc;
      best = pick;
    }
    for (NodeId x = 0; x < n; ++x) {
      const int d = dist[static_cast<std::size_t>(x)];
      lo[static_cast<std::size_t>(x)] = std::max({lo[static_cast<std::size_t>(x)], d, ecc - d});
    }
  }
  return best;
}

enum class ShortcutProvider { empty, baseline, treedec };

inline ShortcutProvider parse_provider(const std::string& s) {
  if (s == "empty") return ShortcutProvider::empty;
  if (s == "baseline") return ShortcutProvider::baseline;
  if (s == "treedec") return ShortcutProvider::treedec;
  throw std::invalid_argument("unknown shortcut provider '" + s + "'");
}

inline const char* to_string(ShortcutProvider p) {
  switch (p) {
    case ShortcutProvider::empty: return "empty";
    case ShortcutProvider::baseline: return "baseline";
    case ShortcutProvider::treedec: return "treedec";
  }
  return "?";
}

/// Parts larger than sqrt(n) take every edge of a BFS tree of G.
inline ShortcutSet baseline_shortcut(const WeightedGraph& g, const Partition& p) {
  ShortcutSet s;
  s.edges.resize(p.parts.size());
  const double threshold = std::sqrt(static_cast<double>(g.num_nodes()));
  std::vector<EdgeId> tree;
  for (std::size_t i = 0; i < p.parts.size(); ++i) {
    if (static_cast<double>(p.parts[i].size()) <= threshold) continue;
    if (tree.empty()) {
      for (EdgeId e : bfs_parent_edges(g, graph_center(g))) {
        if (e != kNoEdge) tree.push_back(e);
      }
    }
    s.edges[i] = tree;
  }
  measure_shortcut(g, p, s);
  return s;
}

/// Tree-restricted shortcut on a BFS tree: a tree edge is given to every part
/// with a member below it, unless more than `cap` parts want it.
inline ShortcutSet tree_restricted_shortcut(const WeightedGraph& g, const Partition& p, int cap) {
  const NodeId n = g.num_nodes();
  const NodeId root = graph_center(g);
  const auto parent = bfs_parent_edges(g, root);
  const auto depth = bfs_distances(g, root);
  std::vector<NodeId> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
    return depth[static_cast<std::size_t>(a)] > depth[static_cast<std::size_t>(b)];
  });
  // Parts wanting the parent edge of x = parts with a member in x's subtree.
  std::vector<std::vector<int>> below(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < p.parts.size(); ++i) {
    for (NodeId x : p.parts[i]) below[static_cast<std::size_t>(x)].push_back(static_cast<int>(i));
  }
  ShortcutSet s;
  s.edges.resize(p.parts.size());
  for (NodeId x : order) {
    auto& mine = below[static_cast<std::size_t>(x)];
    std::sort(mine.begin(), mine.end());
    mine.erase(std::unique(mine.begin(), mine.end()), mine.end());
    const EdgeId e = parent[static_cast<std::size_t>(x)];
    if (e == kNoEdge) continue;
    if (static_cast<int>(mine.size()) <= cap) {
      for (int i : mine) s.edges[static_cast<std::size_t>(i)].push_back(e);
    }
    const NodeId up = g.edge(e).other(x);
    auto& dst = below[static_cast<std::size_t>(up)];
    dst.insert(dst.end(), mine.begin(), mine.end());
    std::vector<int>().swap(mine);
  }
  measure_shortcut(g, p, s);
  return s;
}

/// Treewidth-guided provider: tree-restricted shortcut capped at
/// (w+1) * ceil(log2 n), with w the width of the supplied decomposition.
inline ShortcutSet treedec_shortcut(const WeightedGraph& g, const Partition& p, int width) {
  const int cap = (width + 1) * ceil_log2(std::max<NodeId>(g.num_nodes(), 2));
  return tree_restricted_shortcut(g, p, cap);
}

inline ShortcutSet empty_shortcut(const WeightedGraph& g, const Partition& p) {
  ShortcutSet s;
  s.edges.resize(p.parts.size());
  measure_shortcut(g, p, s);
  return s;
}

// ---------------------------------------------------------------------------
// Copy-augmented graph

struct AugmentedGraph {
  WeightedGraph graph;
  std::vector<NodeId> host_of;                 // copy -> host node
  std::vector<int> part_of;                    // copy -> part id, -1 unlabeled
  std::vector<EdgeId> host_edge_of;            // augmented edge -> host edge
  std::vector<std::vector<NodeId>> copies;     // host node -> copies
  std::vector<int> rho;                        // per host node: number of copies
  Partition parts;                             // partition of copies
  /// Copy of host node `u` labelled with part `i`.
  std::map<std::pair<NodeId, int>, NodeId> copy_for;

  int max_rho() const { return rho.empty() ? 0 : *std::max_element(rho.begin(), rho.end()); }
};

/// Every host node u in rho(u) parts becomes copies u_1..u_rho(u), one per
/// part; copies of u and v are joined for every host edge {u, v}. Nodes in no
/// part keep one unlabelled copy.
inline AugmentedGraph build_ghat(const WeightedGraph& host, const Partition& parts) {
  AugmentedGraph ag;
  const NodeId n = host.num_nodes();
  ag.copies.resize(static_cast<std::size_t>(n));
  ag.rho.assign(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<int>> parts_of(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < parts.parts.size(); ++i) {
    for (NodeId u : parts.parts[i]) parts_of[static_cast<std::size_t>(u)].push_back(static_cast<int>(i));
  }
  NodeId next = 0;
  for (NodeId u = 0; u < n; ++u) {
    auto& labels = parts_of[static_cast<std::size_t>(u)];
    if (labels.empty()) labels.push_back(-1);
    for (int label : labels) {
      ag.copies[static_cast<std::size_t>(u)].push_back(next);
      ag.host_of.push_back(u);
      ag.part_of.push_back(label);
      if (label >= 0) ag.copy_for[{u, label}] = next;
      ++next;
    }
    ag.rho[static_cast<std::size_t>(u)] = static_cast<int>(labels.size());
  }
  ag.graph = WeightedGraph(next);
  for (const auto& e : host.edges()) {
    if (e.is_self_loop()) continue;
    for (NodeId a : ag.copies[static_cast<std::size_t>(e.u)]) {
      for (NodeId b : ag.copies[static_cast<std::size_t>(e.v)]) {
        ag.graph.add_edge(a, b, e.weight);
        ag.host_edge_of.push_back(e.id);
      }
    }
  }
  ag.parts.parts.resize(parts.parts.size());
  for (std::size_t i = 0; i < parts.parts.size(); ++i) {
    for (NodeId u : parts.parts[i]) ag.parts.parts[i].push_back(ag.copy_for.at({u, static_cast<int>(i)}));
  }
  return ag;
}

/// D(augmented) <= D(host) + 1.
inline bool check_diameter_claim(const WeightedGraph& host, const AugmentedGraph& ag) {
  return hop_diameter(ag.graph) <= hop_diameter(host) + 1;
}

/// Bag j becomes all copies of the nodes in bag j.
inline TreeDecomposition lift_tree_decomposition(const WeightedGraph& host, const TreeDecomposition& td,
                                                 const AugmentedGraph& ag) {
  validate_tree_decomposition(host, td);
  TreeDecomposition out;
  out.tree_edges = td.tree_edges;
  for (const auto& bag : td.bags) {
    std::vector<NodeId> lifted;
    for (NodeId u : bag) {
      const auto& c = ag.copies[static_cast<std::size_t>(u)];
      lifted.insert(lifted.end(), c.begin(), c.end());
    }
    std::sort(lifted.begin(), lifted.end());
    out.bags.push_back(std::move(lifted));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-task tree aggregation

/// One rooted aggregation tree in a network.
struct TaskTree {
  NodeId root = kNoNode;
  std::vector<NodeId> nodes;
  std::vector<EdgeId> parent_edge;   // parallel to nodes; kNoEdge at the root
  std::vector<AggValue> input;       // parallel to nodes; empty for relays
  int delay = 0;
};

/// Per-network plan: the trees and per-node membership.
struct AggregationPlan {
  std::vector<TaskTree> tasks;
  int congestion = 0;  // max tasks sharing a network edge
  int dilation = 0;    // max tree depth
};

/// Tree of G[P] plus shortcut edges, grown by BFS from `root` and pruned to the
/// Steiner tree of the members.
inline TaskTree part_tree(const WeightedGraph& g, const std::vector<NodeId>& part,
                          const std::vector<EdgeId>& shortcut, NodeId root) {
  const auto view = detail::part_view(g, part, shortcut);
  std::map<NodeId, EdgeId> parent;
  const auto dist = detail::view_bfs(view, root, &parent);
  if (dist.size() != view.nodes.size()) throw aggregation_error("part tree: subgraph disconnected");
  std::map<NodeId, int> children;
  for (const auto& [x, e] : parent) {
    if (e != kNoEdge) ++children[g.edge(e).other(x)];
  }
  std::vector<char> member(static_cast<std::size_t>(g.num_nodes()), 0);
  for (NodeId x : part) member[static_cast<std::size_t>(x)] = 1;
  // Prune non-member leaves.
  std::vector<NodeId> stack;
  std::map<NodeId, char> removed;
  for (NodeId x : view.nodes) {
    if (!member[static_cast<std::size_t>(x)] && children[x] == 0) stack.push_back(x);
  }
  while (!stack.empty()) {
    const NodeId x = stack.back();
    stack.pop_back();
    if (x == root) continue;
    removed[x] = 1;
    const NodeId up = g.edge(parent.at(x)).other(x);
    if (--children[up] == 0 && !member[static_cast<std::size_t>(up)]) stack.push_back(up);
  }
  TaskTree t;
  t.root = root;
  for (NodeId x : view.nodes) {
    if (removed.count(x)) continue;
    t.nodes.push_back(x);
    t.parent_edge.push_back(parent.at(x));
    t.input.emplace_back();
  }
  return t;
}

inline void finalize_plan(const WeightedGraph& g, AggregationPlan& plan) {
  std::vector<int> count(g.num_edges(), 0);
  plan.dilation = 0;
  for (const auto& t : plan.tasks) {
    std::map<NodeId, EdgeId> up;
    for (std::size_t j = 0; j < t.nodes.size(); ++j) {
      up[t.nodes[j]] = t.parent_edge[j];
      if (t.parent_edge[j] != kNoEdge) ++count[static_cast<std::size_t>(t.parent_edge[j])];
    }
    for (NodeId x : t.nodes) {
      int d = 0;
      for (NodeId y = x; up.at(y) != kNoEdge; y = g.edge(up.at(y)).other(y)) ++d;
      plan.dilation = std::max(plan.dilation, d);
    }
  }
  plan.congestion = count.empty() ? 0 : *std::max_element(count.begin(), count.end());
}

/// Node program: for every task the node belongs to, convergecast the
/// aggregate to the task root, then broadcast it back. Each directed edge
/// carries one message per round; contention is resolved by (delay, task).
class TreeAggregationProgram {
 public:
  struct Slot {
    int task = 0;
    int delay = 0;
    EdgeId parent_edge = kNoEdge;
    std::vector<EdgeId> child_edges;
    int pending = 0;
    AggValue acc;
    std::optional<AggValue> result;
    bool sent_up = false;
  };

  TreeAggregationProgram() = default;
  TreeAggregationProgram(std::vector<Slot> slots, AggregateOp op) : slots_(std::move(slots)), op_(std::move(op)) {
    for (std::size_t i = 0; i < slots_.size(); ++i) index_[slots_[i].task] = i;
  }

  void step(NodeContext& ctx) {
    if (ctx.round() == 0) {
      for (auto& s : slots_) s.pending = static_cast<int>(s.child_edges.size());
    }
    for (const auto& env : ctx.inbox()) {
      const Word head = env.msg[0];
      const int task = static_cast<int>(head >> 2);
      const int kind = static_cast<int>(head & 3);
      AggValue v;
      if (kind & 1) v = AggValue::of(env.msg.real(1), env.msg[2]);
      Slot& s = slots_[index_.at(task)];
      if (kind & 2) {
        s.result = v;
        for (EdgeId e : s.child_edges) enqueue(ctx, e, s, 2);
      } else {
        s.acc = op_(s.acc, v);
        --s.pending;
      }
    }
    for (auto& s : slots_) {
      if (s.pending == 0 && !s.sent_up) {
        s.sent_up = true;
        if (s.parent_edge == kNoEdge) {
          s.result = s.acc;
          for (EdgeId e : s.child_edges) enqueue(ctx, e, s, 2);
        } else {
          enqueue(ctx, s.parent_edge, s, 0);
        }
      }
    }
    bool idle = true;
    for (auto& [edge, q] : queues_) {
      if (q.empty()) continue;
      const auto& top = q.top();
      if (top.delay <= ctx.round()) {
        ctx.send_local(edge, top.msg);
        q.pop();
      }
      if (!q.empty()) idle = false;
    }
    if (idle) ctx.halt();
  }

  const std::vector<Slot>& slots() const { return slots_; }

  std::optional<AggValue> result(int task) const {
    auto it = index_.find(task);
    if (it == index_.end()) return std::nullopt;
    return slots_[it->second].result;
  }

 private:
  struct Pending {
    int delay;
    int task;
    Message msg;
    bool operator<(const Pending& o) const {
      // priority_queue is a max-heap: invert.
      return std::tie(delay, task) > std::tie(o.delay, o.task);
    }
  };

  void enqueue(NodeContext&, EdgeId e, const Slot& s, int phase) {
    const AggValue& v = phase == 2 ? *s.result : s.acc;
    Message m;
    m.push((static_cast<Word>(s.task) << 2) | phase | (v.empty ? 0 : 1));
    m.push_real(v.x);
    m.push(v.id);
    queues_[e].push({s.delay, s.task, m});
  }

  std::vector<Slot> slots_;
  AggregateOp op_;
  std::map<int, std::size_t> index_;
  std::map<EdgeId, std::priority_queue<Pending>> queues_;
};

/// Builds one program per network node from a plan.
inline std::vector<TreeAggregationProgram> make_tree_programs(const WeightedGraph& g, const AggregationPlan& plan,
                                                              const AggregateOp& op) {
  std::vector<std::vector<TreeAggregationProgram::Slot>> slots(static_cast<std::size_t>(g.num_nodes()));
  for (std::size_t t = 0; t < plan.tasks.size(); ++t) {
    const auto& tree = plan.tasks[t];
    std::map<NodeId, std::size_t> where;
    for (std::size_t j = 0; j < tree.nodes.size(); ++j) {
      TreeAggregationProgram::Slot s;
      s.task = static_cast<int>(t);
      s.delay = tree.delay;
      s.parent_edge = tree.parent_edge[j];
      s.acc = tree.input[j];
      where[tree.nodes[j]] = slots[static_cast<std::size_t>(tree.nodes[j])].size();
      slots[static_cast<std::size_t>(tree.nodes[j])].push_back(s);
    }
    for (std::size_t j = 0; j < tree.nodes.size(); ++j) {
      const EdgeId e = tree.parent_edge[j];
      if (e == kNoEdge) continue;
      const NodeId up = g.edge(e).other(tree.nodes[j]);
      slots[static_cast<std::size_t>(up)][where.at(up)].child_edges.push_back(e);
    }
  }
  std::vector<TreeAggregationProgram> programs;
  programs.reserve(slots.size());
  for (auto& s : slots) programs.emplace_back(std::move(s), op);
  return programs;
}

// ---------------------------------------------------------------------------
// Running augmented-graph programs on the host

/// Frame length: the most augmented edges sharing one host edge.
inline int ghat_frame_length(const WeightedGraph& host, const AugmentedGraph& ag) {
  int s = 1;
  for (const auto& e : host.edges()) {
    if (e.is_self_loop()) continue;
    s = std::max(s, ag.rho[static_cast<std::size_t>(e.u)] * ag.rho[static_cast<std::size_t>(e.v)]);
  }
  return s;
}

namespace detail {

/// Host-side multiplexer: host node u serially runs its copies. Augmented
/// round f occupies host rounds [fS, (f+1)S); copy messages queue on their
/// host edge and drain one per round.
template <class Program>
class GhatFabric final : public ContextBackend {
 public:
  GhatFabric(const WeightedGraph& host, const AugmentedGraph& ag, std::vector<Program>& programs, int host_words,
             std::uint64_t seed)
      : host_(host), ag_(ag), programs_(programs), frame_(ghat_frame_length(host, ag)), inner_words_(host_words - 1) {
    const auto copies = static_cast<std::size_t>(ag.graph.num_nodes());
    inbox_.resize(copies);
    pending_.resize(copies);
    halted_.assign(copies, 0);
    stamp_.assign(2 * ag.graph.num_edges(), -1);
    queues_.resize(2 * host.num_edges());
    for (std::size_t c = 0; c < copies; ++c) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(c), 0x51ed27u};
      rngs_.emplace_back(seq);
    }
  }

  int frame() const { return frame_; }

  void host_step(NodeId u, NodeContext& ctx) {
    for (const auto& env : ctx.inbox()) {
      const auto ge = static_cast<EdgeId>(env.msg[0]);
      const auto& edge = ag_.graph.edge(ge);
      const NodeId target = ag_.host_of[static_cast<std::size_t>(edge.u)] == u ? edge.u : edge.v;
      Message inner;
      for (int i = 1; i < env.msg.size(); ++i) inner.push(env.msg[i]);
      pending_[static_cast<std::size_t>(target)].push_back({edge.other(target), ge, inner});
    }
    const auto& my_copies = ag_.copies[static_cast<std::size_t>(u)];
    if (ctx.round() % frame_ == 0) {
      const int f = ctx.round() / frame_;
      for (NodeId c : my_copies) {
        auto& box = inbox_[static_cast<std::size_t>(c)];
        box.swap(pending_[static_cast<std::size_t>(c)]);
        pending_[static_cast<std::size_t>(c)].clear();
        std::stable_sort(box.begin(), box.end(),
                         [](const Envelope& a, const Envelope& b) { return a.from < b.from; });
        if (f > 0 && halted_[static_cast<std::size_t>(c)] && box.empty()) continue;
        round_ = f;
        NodeContext inner(this, f, c, box);
        programs_[static_cast<std::size_t>(c)].step(inner);
        halted_[static_cast<std::size_t>(c)] = inner.halted() ? 1 : 0;
        box.clear();
      }
    }
    bool queued = false;
    for (const auto& inc : host_.incident(u)) {
      if (inc.other == u) continue;
      const int dir = host_.edge(inc.edge).u == u ? 0 : 1;
      auto& q = queues_[2 * static_cast<std::size_t>(inc.edge) + static_cast<std::size_t>(dir)];
      if (q.empty()) continue;
      ctx.send_local(inc.edge, q.front());
      q.pop_front();
      if (!q.empty()) queued = true;
    }
    bool done = !queued;
    for (NodeId c : my_copies) {
      done = done && halted_[static_cast<std::size_t>(c)] && pending_[static_cast<std::size_t>(c)].empty();
    }
    if (done) ctx.halt();
  }

  NodeId backend_size() const override { return ag_.graph.num_nodes(); }
  std::span<const Incidence> backend_neighbors(NodeId c) const override { return ag_.graph.incident(c); }
  int backend_max_words() const override { return inner_words_; }
  int backend_global_cap() const override { return 0; }
  std::mt19937_64& backend_rng(NodeId c) override { return rngs_[static_cast<std::size_t>(c)]; }

  void backend_send_local(NodeId c, EdgeId ge, const Message& m) override {
    if (m.size() > inner_words_) {
      throw netsim_error(netsim_error::Kind::payload_overflow, "augmented-graph payload exceeds B");
    }
    const auto& edge = ag_.graph.edge(ge);
    if (edge.u != c && edge.v != c) throw netsim_error(netsim_error::Kind::bad_target, "copy does not own edge");
    const int gdir = edge.u == c ? 0 : 1;
    auto& st = stamp_[2 * static_cast<std::size_t>(ge) + static_cast<std::size_t>(gdir)];
    if (st == round_) throw netsim_error(netsim_error::Kind::duplicate_edge_send, "second message on augmented edge");
    st = round_;
    const EdgeId he = ag_.host_edge_of[static_cast<std::size_t>(ge)];
    const NodeId hu = ag_.host_of[static_cast<std::size_t>(c)];
    const int hdir = host_.edge(he).u == hu ? 0 : 1;
    Message wrapped;
    wrapped.push(ge);
    for (int i = 0; i < m.size(); ++i) wrapped.push(m[i]);
    queues_[2 * static_cast<std::size_t>(he) + static_cast<std::size_t>(hdir)].push_back(wrapped);
  }

  void backend_send_global(NodeId, NodeId, const Message&) override {
    throw netsim_error(netsim_error::Kind::wrong_channel, "augmented graph has no global edges");
  }

 private:
  const WeightedGraph& host_;
  const AugmentedGraph& ag_;
  std::vector<Program>& programs_;
  int frame_;
  int inner_words_;
  int round_ = 0;
  std::vector<std::vector<Envelope>> inbox_;
  std::vector<std::vector<Envelope>> pending_;
  std::vector<char> halted_;
  std::vector<int> stamp_;
  std::vector<std::deque<Message>> queues_;
  std::vector<std::mt19937_64> rngs_;
};

template <class Program>
struct GhatHostProgram {
  GhatFabric<Program>* fabric;
  NodeId u;
  void step(NodeContext& ctx) { fabric->host_step(u, ctx); }
};

}  // namespace detail

struct GhatRun {
  RoundLedger ledger;
  int frame = 1;
};

/// Runs programs written against the augmented graph on the host network.
/// Host rounds equal frame * (augmented rounds) with frame <= rho^2.
template <class Program>
GhatRun simulate_on_ghat(const WeightedGraph& host, const AugmentedGraph& ag, std::vector<Program>& programs,
                         const SimOptions& opt = {}) {
  if (static_cast<NodeId>(programs.size()) != ag.graph.num_nodes()) {
    throw std::invalid_argument("one program per augmented node required");
  }
  detail::GhatFabric<Program> fabric(host, ag, programs, opt.msg_factor, opt.seed);
  std::vector<detail::GhatHostProgram<Program>> hosts;
  hosts.reserve(static_cast<std::size_t>(host.num_nodes()));
  for (NodeId u = 0; u < host.num_nodes(); ++u) hosts.push_back({&fabric, u});
  GhatRun run;
  run.frame = fabric.frame();
  SimOptions host_opt = opt;
  if (host_opt.max_rounds < std::numeric_limits<int>::max() / run.frame) host_opt.max_rounds *= run.frame;
  run.ledger = run_congest(host, hosts, host_opt);
  return run;
}

// ---------------------------------------------------------------------------
// Part-wise aggregation drivers

struct AggregationResult {
  std::vector<std::vector<AggValue>> learned;  // per part, per member position
  RoundLedger ledger;
  ShortcutQuality shortcut;
  ShortcutProvider provider = ShortcutProvider::baseline;
  bool fell_back = false;
  int sched_congestion = 0;
  int sched_dilation = 0;
  int frame = 1;
  int ghat_rounds = 0;
  int rho = 1;

  /// The aggregate of part i if every member agrees; throws otherwise.
  AggValue part_value(std::size_t i) const {
    const auto& v = learned.at(i);
    if (v.empty()) return {};
    for (const auto& x : v) {
      if (!(x == v.front())) throw aggregation_error("members of part " + std::to_string(i) + " disagree");
    }
    return v.front();
  }
};

namespace detail {

inline void draw_delays(AggregationPlan& plan, std::uint64_t seed) {
  const int c = plan.congestion;
  const int d = std::max(1, plan.dilation);
  const int span = ((c + d - 1) / d) * d;
  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
  std::uniform_int_distribution<int> pick(0, std::max(0, span));
  for (auto& t : plan.tasks) t.delay = pick(rng);
}

inline std::vector<std::vector<AggValue>> collect(const AggregationPlan& plan, const Partition& parts,
                                                  const std::vector<TreeAggregationProgram>& programs,
                                                  const std::function<NodeId(std::size_t, NodeId)>& where) {
  std::vector<std::vector<AggValue>> out(parts.parts.size());
  for (std::size_t i = 0; i < parts.parts.size(); ++i) {
    for (NodeId u : parts.parts[i]) {
      const auto r = programs[static_cast<std::size_t>(where(i, u))].result(static_cast<int>(i));
      if (!r) throw aggregation_error("member of part " + std::to_string(i) + " never learned the aggregate");
      out[i].push_back(*r);
    }
  }
  (void)plan;
  return out;
}

}  // namespace detail

/// The simple scheme: parts of size <= sqrt(n) aggregate over their own BFS
/// tree, larger parts over a global BFS tree; pipelining through per-edge
/// queues. Runs directly on the host.
inline AggregationResult baseline_congested_aggregation(const WeightedGraph& g, const Partition& parts,
                                                        const PartInputs& inputs, const AggregateOp& op,
                                                        const SimOptions& opt = {}) {
  AggregationResult res;
  res.rho = validate_partition(g, parts, std::numeric_limits<int>::max());
  const ShortcutSet s = baseline_shortcut(g, parts);
  res.shortcut = {s.congestion, s.dilation, s.quality()};
  AggregationPlan plan;
  for (std::size_t i = 0; i < parts.parts.size(); ++i) {
    const auto& part = parts.parts[i];
    const NodeId root = *std::min_element(part.begin(), part.end());
    TaskTree t = part_tree(g, part, s.edges[i], root);
    std::map<NodeId, std::size_t> pos;
    for (std::size_t j = 0; j < t.nodes.size(); ++j) pos[t.nodes[j]] = j;
    for (std::size_t j = 0; j < part.size(); ++j) t.input[pos.at(part[j])] = inputs[i][j];
    plan.tasks.push_back(std::move(t));
  }
  finalize_plan(g, plan);
  res.sched_congestion = plan.congestion;
  res.sched_dilation = plan.dilation;
  auto programs = make_tree_programs(g, plan, op);
  res.ledger = run_congest(g, programs, opt);
  res.learned = detail::collect(plan, parts, programs, [](std::size_t, NodeId u) { return u; });
  return res;
}

struct CongestAggregationOptions {
  ShortcutProvider provider = ShortcutProvider::baseline;
  std::optional<TreeDecomposition> decomposition;  // of the host, for treedec
  bool random_delays = true;
};

/// Congested part-wise aggregation through the augmented graph: build the
/// copies, take shortcuts on them, schedule all parts with random delays and
/// run the result on the host, rho^2 host rounds per augmented round.
inline AggregationResult congested_aggregation_congest(const WeightedGraph& g, const Partition& parts,
                                                       const PartInputs& inputs, const AggregateOp& op,
                                                       const CongestAggregationOptions& copt = {},
                                                       const SimOptions& opt = {}) {
  AggregationResult res;
  res.rho = validate_partition(g, parts, std::numeric_limits<int>::max());
  const AugmentedGraph ag = build_ghat(g, parts);
  const ShortcutSet base = baseline_shortcut(ag.graph, ag.parts);
  ShortcutSet chosen = base;
  res.provider = copt.provider;
  if (copt.provider == ShortcutProvider::empty) {
    chosen = empty_shortcut(ag.graph, ag.parts);
  } else if (copt.provider == ShortcutProvider::treedec) {
    int width = 0;
    if (copt.decomposition) {
      width = validate_tree_decomposition(ag.graph, lift_tree_decomposition(g, *copt.decomposition, ag));
    } else {
      width = std::max(1, res.rho);
    }
    chosen = treedec_shortcut(ag.graph, ag.parts, width);
  }
  if (chosen.quality() > base.quality()) {
    chosen = base;
    res.fell_back = true;
  }
  res.shortcut = {chosen.congestion, chosen.dilation, chosen.quality()};
  AggregationPlan plan;
  for (std::size_t i = 0; i < ag.parts.parts.size(); ++i) {
    const auto& part = ag.parts.parts[i];
    const NodeId root = *std::min_element(part.begin(), part.end());
    TaskTree t = part_tree(ag.graph, part, chosen.edges[i], root);
    std::map<NodeId, std::size_t> pos;
    for (std::size_t j = 0; j < t.nodes.size(); ++j) pos[t.nodes[j]] = j;
    for (std::size_t j = 0; j < part.size(); ++j) t.input[pos.at(part[j])] = inputs[i][j];
    plan.tasks.push_back(std::move(t));
  }
  finalize_plan(ag.graph, plan);
  if (copt.random_delays) detail::draw_delays(plan, opt.seed);
  res.sched_congestion = plan.congestion;
  res.sched_dilation = plan.dilation;
  auto programs = make_tree_programs(ag.graph, plan, op);
  auto run = simulate_on_ghat(g, ag, programs, opt);
  res.frame = run.frame;
  res.ledger = std::move(run.ledger);
  res.ghat_rounds = (res.ledger.rounds + res.frame - 1) / res.frame;
  res.learned = detail::collect(plan, parts, programs,
                                [&](std::size_t i, NodeId u) { return ag.copy_for.at({u, static_cast<int>(i)}); });
  return res;
}

// ---------------------------------------------------------------------------
// NCC: aggregation and multicast over a butterfly overlay

/// Columns 0..2^dim-1 of a butterfly; column c is hosted by node c, or by
/// c - n_bar when c >= n_bar.
struct ButterflyLayout {
  NodeId n_bar = 1;
  int dim = 1;

  explicit ButterflyLayout(NodeId n) : n_bar(n), dim(ceil_log2(std::max<NodeId>(n, 2))) {}
  int columns() const { return 1 << dim; }
  NodeId host(int column) const { return column < n_bar ? column : column - n_bar; }
  bool has_secondary() const { return columns() > n_bar; }
};

struct NccGroups {
  std::vector<std::vector<NodeId>> members;
  std::vector<NodeId> target;

  /// Max number of groups containing one node.
  int local_load(NodeId n_bar) const {
    std::vector<int> load(static_cast<std::size_t>(n_bar), 0);
    int best = 0;
    for (const auto& c : members) {
      for (NodeId u : c) best = std::max(best, ++load[static_cast<std::size_t>(u)]);
    }
    return best;
  }
  std::int64_t global_load() const {
    std::int64_t l = 0;
    for (const auto& c : members) l += static_cast<std::int64_t>(c.size());
    return l;
  }
};

/// Routes recorded while aggregating towards each group's target. joins
/// [column][phase] maps group -> mask (1: from own column, 2: from partner).
struct MulticastTrees {
  NodeId n_bar = 1;
  std::vector<std::vector<std::map<int, int>>> joins;
  std::vector<NodeId> source;
  std::vector<std::vector<NodeId>> members;
  int congestion = 0;
};

namespace detail {

struct ButterflyShared {
  ButterflyLayout layout{1};
  bool multicast = false;
  const AggregateOp* op = nullptr;
  const std::vector<NodeId>* target = nullptr;
  int rate = 1;
};

/// One node of the overlay: hosts one or two columns. Phase j packets cross
/// bit j and may only be sent in rounds t with t mod dim == j, so every
/// column receives from a single partner per round.
class ButterflyProgram {
 public:
  struct Column {
    int id = 0;
    int phase = 0;
    bool sending = false;
    bool finished = false;
    bool sent_any = false;
    std::map<int, AggValue> held;
    std::map<int, AggValue> next;
    std::deque<std::pair<int, AggValue>> out;
    std::map<int, std::vector<std::pair<int, AggValue>>> incoming;
    std::set<int> done;
    std::vector<std::map<int, int>> joins;
  };

  ButterflyProgram() = default;
  ButterflyProgram(const ButterflyShared* shared, std::vector<Column> columns)
      : shared_(shared), columns_(std::move(columns)) {}

  void step(NodeContext& ctx) {
    const int dim = shared_->layout.dim;
    if (ctx.round() == 0) {
      for (auto& c : columns_) {
        c.phase = shared_->multicast ? dim - 1 : 0;
        begin_phase(c);
      }
    }
    for (const auto& env : ctx.inbox()) {
      const Word meta = env.msg[3];
      Column& c = column(static_cast<int>(meta >> 9));
      const int phase = static_cast<int>((meta >> 3) & 63);
      if (!(meta & 1)) {
        AggValue v;
        if (!(meta & 4)) v = AggValue::of(env.msg.real(1), env.msg[2]);
        c.incoming[phase].emplace_back(static_cast<int>(env.msg[0]), v);
      }
      if (meta & 3) c.done.insert(phase);
    }
    for (auto& c : columns_) advance(c);
    const int slot = ctx.round() % dim;
    for (auto& c : columns_) {
      if (!c.sending || c.phase != slot) continue;
      const int partner = c.id ^ (1 << c.phase);
      const NodeId to = shared_->layout.host(partner);
      int budget = shared_->rate;
      if (c.out.empty()) {
        ctx.send_global(to, packet(partner, c.phase, 0, {}, true, true));
      }
      while (budget > 0 && !c.out.empty()) {
        const auto [g, v] = c.out.front();
        c.out.pop_front();
        ctx.send_global(to, packet(partner, c.phase, g, v, false, c.out.empty()));
        --budget;
      }
      if (c.out.empty()) c.sending = false;
      advance(c);
    }
    bool busy = false;
    for (const auto& c : columns_) busy = busy || c.sending;
    if (!busy) ctx.halt();
  }

  const std::vector<Column>& columns() const { return columns_; }
  std::vector<Column>& columns() { return columns_; }

 private:
  Column& column(int id) {
    for (auto& c : columns_) {
      if (c.id == id) return c;
    }
    throw aggregation_error("butterfly packet addressed to a column this node does not host");
  }

  static Message packet(int column, int phase, int group, const AggValue& v, bool marker, bool last) {
    Message m;
    m.push(group);
    m.push_real(v.x);
    m.push(v.id);
    m.push((static_cast<Word>(column) << 9) | (phase << 3) | (v.empty ? 4 : 0) | (last ? 2 : 0) | (marker ? 1 : 0));
    return m;
  }

  void begin_phase(Column& c) {
    c.next.clear();
    const int j = c.phase;
    const int bit = (c.id >> j) & 1;
    for (const auto& [g, v] : c.held) {
      if (shared_->multicast) {
        const auto it = c.joins[static_cast<std::size_t>(j)].find(g);
        if (it == c.joins[static_cast<std::size_t>(j)].end()) continue;
        if (it->second & 1) c.next[g] = v;
        if (it->second & 2) c.out.emplace_back(g, v);
      } else {
        const NodeId t = (*shared_->target)[static_cast<std::size_t>(g)];
        if (((t >> j) & 1) == bit) {
          c.next[g] = (*shared_->op)(c.next[g], v);
          c.joins[static_cast<std::size_t>(j)][g] |= 1;
        } else {
          c.out.emplace_back(g, v);
        }
      }
    }
    c.sending = true;
  }

  void advance(Column& c) {
    while (!c.finished && !c.sending && c.done.count(c.phase)) {
      const int j = c.phase;
      for (const auto& [g, v] : c.incoming[j]) {
        if (shared_->multicast) {
          c.next[g] = v;
        } else {
          c.next[g] = (*shared_->op)(c.next[g], v);
          c.joins[static_cast<std::size_t>(j)][g] |= 2;
        }
      }
      c.incoming.erase(j);
      c.held.swap(c.next);
      c.next.clear();
      const bool last = shared_->multicast ? j == 0 : j == shared_->layout.dim - 1;
      if (last) {
        c.finished = true;
        return;
      }
      c.phase += shared_->multicast ? -1 : 1;
      begin_phase(c);
    }
  }

  const ButterflyShared* shared_ = nullptr;
  std::vector<Column> columns_;
};

inline int butterfly_rate(const ButterflyLayout& layout, int cap) {
  return layout.has_secondary() ? std::max(1, cap / 2) : std::max(1, cap);
}

inline std::vector<ButterflyProgram> butterfly_programs(const ButterflyShared& shared) {
  const ButterflyLayout& layout = shared.layout;
  std::vector<std::vector<ButterflyProgram::Column>> cols(static_cast<std::size_t>(layout.n_bar));
  for (int c = 0; c < layout.columns(); ++c) {
    ButterflyProgram::Column col;
    col.id = c;
    col.joins.resize(static_cast<std::size_t>(layout.dim));
    cols[static_cast<std::size_t>(layout.host(c))].push_back(std::move(col));
  }
  std::vector<ButterflyProgram> out;
  for (auto& c : cols) out.emplace_back(&shared, std::move(c));
  return out;
}

template <class Program>
RoundLedger run_global(std::vector<Program>& programs, const WeightedGraph* local, const SimOptions& opt) {
  return local ? run_hybrid(*local, programs, opt) : run_ncc(programs, opt);
}

inline int global_cap_for(NodeId n_bar, const SimOptions& opt) {
  const NodeId nb = opt.n_bar > 0 ? opt.n_bar : n_bar;
  return opt.ncc_cap_factor * ceil_log2(nb);
}

}  // namespace detail

struct NccAggregateResult {
  std::vector<AggValue> value;  // per group, held by its target
  RoundLedger ledger;
  int local_load = 0;
  std::int64_t global_load = 0;
  MulticastTrees trees;
};

/// Aggregates each group at its target through the overlay, combining
/// packets of the same group wherever they meet. Passing `local` runs the
/// same programs under HYBRID.
inline NccAggregateResult ncc_aggregate(NodeId n_bar, const NccGroups& groups, const PartInputs& inputs,
                                        const AggregateOp& op, const SimOptions& opt = {},
                                        const WeightedGraph* local = nullptr) {
  NccAggregateResult res;
  res.local_load = groups.local_load(n_bar);
  res.global_load = groups.global_load();
  res.trees.n_bar = n_bar;
  res.trees.source = groups.target;
  res.trees.members = groups.members;
  bool trivial = true;
  for (std::size_t i = 0; i < groups.members.size(); ++i) {
    const auto& m = groups.members[i];
    if (std::find(m.begin(), m.end(), groups.target[i]) == m.end()) {
      throw aggregation_error("target of group " + std::to_string(i) + " is not a member");
    }
    trivial = trivial && m.size() == 1;
  }
  if (trivial) {
    for (const auto& in : inputs) res.value.push_back(in.front());
    res.trees.congestion = groups.members.empty() ? 0 : 1;
    return res;
  }
  detail::ButterflyShared shared;
  shared.layout = ButterflyLayout(n_bar);
  shared.op = &op;
  shared.target = &groups.target;
  shared.rate = detail::butterfly_rate(shared.layout, detail::global_cap_for(n_bar, opt));
  auto programs = detail::butterfly_programs(shared);
  for (std::size_t i = 0; i < groups.members.size(); ++i) {
    for (std::size_t j = 0; j < groups.members[i].size(); ++j) {
      const NodeId u = groups.members[i][j];
      auto& col = programs[static_cast<std::size_t>(u)].columns().front();
      col.held[static_cast<int>(i)] = op(col.held[static_cast<int>(i)], inputs[i][j]);
    }
  }
  res.ledger = detail::run_global(programs, local, opt);
  if (res.ledger.status != RunStatus::completed) throw aggregation_error("NCC aggregation did not terminate");
  if (!res.ledger.dropped.empty()) throw aggregation_error("NCC aggregation lost messages to the receive cap");
  res.value.resize(groups.members.size());
  const int columns = shared.layout.columns();
  res.trees.joins.resize(static_cast<std::size_t>(columns));
  std::map<std::pair<int, int>, int> per_node;
  for (const auto& prog : programs) {
    for (const auto& c : prog.columns()) {
      res.trees.joins[static_cast<std::size_t>(c.id)] = c.joins;
      for (std::size_t j = 0; j < c.joins.size(); ++j) {
        per_node[{c.id, static_cast<int>(j)}] = static_cast<int>(c.joins[j].size());
      }
      if (c.id < n_bar) {
        for (const auto& [g, v] : c.held) {
          if (groups.target[static_cast<std::size_t>(g)] == c.id) res.value[static_cast<std::size_t>(g)] = v;
        }
      }
    }
  }
  res.trees.congestion = res.local_load;
  for (const auto& [key, count] : per_node) res.trees.congestion = std::max(res.trees.congestion, count);
  return res;
}

/// Trees are the aggregation routes towards each source; every node may be
/// the source of at most one group per invocation.
inline std::pair<MulticastTrees, RoundLedger> ncc_build_multicast_trees(NodeId n_bar, const NccGroups& groups,
                                                                        const SimOptions& opt = {},
                                                                        const WeightedGraph* local = nullptr) {
  std::vector<int> sources(static_cast<std::size_t>(n_bar), 0);
  for (NodeId s : groups.target) {
    if (++sources[static_cast<std::size_t>(s)] > 1) {
      throw aggregation_error("node " + std::to_string(s) + " is the source of more than one group");
    }
  }
  PartInputs zeros(groups.members.size());
  for (std::size_t i = 0; i < groups.members.size(); ++i) zeros[i].assign(groups.members[i].size(), AggValue::of(0));
  auto res = ncc_aggregate(n_bar, groups, zeros, ops::sum(), opt, local);
  return {std::move(res.trees), std::move(res.ledger)};
}

struct MulticastResult {
  std::vector<std::vector<AggValue>> received;  // per group, per member position
  RoundLedger ledger;
};

/// Sends message[i] from the source of group i down its tree to every member.
inline MulticastResult ncc_multicast(const MulticastTrees& trees, const std::vector<AggValue>& message,
                                     const SimOptions& opt = {}, const WeightedGraph* local = nullptr) {
  MulticastResult res;
  res.received.resize(trees.members.size());
  bool trivial = true;
  for (const auto& m : trees.members) trivial = trivial && m.size() <= 1;
  if (!trivial) {
    detail::ButterflyShared shared;
    shared.layout = ButterflyLayout(trees.n_bar);
    shared.multicast = true;
    shared.rate = detail::butterfly_rate(shared.layout, detail::global_cap_for(trees.n_bar, opt));
    auto programs = detail::butterfly_programs(shared);
    for (auto& prog : programs) {
      for (auto& c : prog.columns()) {
        c.joins = trees.joins[static_cast<std::size_t>(c.id)];
      }
    }
    for (std::size_t i = 0; i < trees.members.size(); ++i) {
      auto& col = programs[static_cast<std::size_t>(trees.source[i])].columns().front();
      col.held[static_cast<int>(i)] = message[i];
    }
    res.ledger = detail::run_global(programs, local, opt);
    if (res.ledger.status != RunStatus::completed) throw aggregation_error("NCC multicast did not terminate");
    if (!res.ledger.dropped.empty()) throw aggregation_error("NCC multicast lost messages to the receive cap");
    for (std::size_t i = 0; i < trees.members.size(); ++i) {
      for (NodeId u : trees.members[i]) {
        const auto& held = programs[static_cast<std::size_t>(u)].columns().front().held;
        const auto it = held.find(static_cast<int>(i));
        res.received[i].push_back(u == trees.source[i] ? message[i] : it == held.end() ? AggValue{} : it->second);
      }
    }
    return res;
  }
  for (std::size_t i = 0; i < trees.members.size(); ++i) {
    res.received[i].assign(trees.members[i].size(), message[i]);
  }
  return res;
}

/// Congested aggregation in NCC: aggregate every part at its leader, then
/// deliver the result back in at most rho batches, each node leading at most
/// one part per batch. `leaders` defaults to the minimum member.
inline AggregationResult congested_aggregation_ncc(NodeId n_bar, const Partition& parts, const PartInputs& inputs,
                                                   const AggregateOp& op, const SimOptions& opt = {},
                                                   std::vector<NodeId> leaders = {},
                                                   const WeightedGraph* local = nullptr) {
  AggregationResult res;
  const auto mult = parts.multiplicity(n_bar);
  res.rho = mult.empty() ? 0 : std::max(1, *std::max_element(mult.begin(), mult.end()));
  if (leaders.empty()) {
    for (const auto& p : parts.parts) leaders.push_back(*std::min_element(p.begin(), p.end()));
  }
  std::map<NodeId, int> led;
  std::vector<int> batch(parts.parts.size());
  int batches = 0;
  for (std::size_t i = 0; i < parts.parts.size(); ++i) {
    batch[i] = led[leaders[i]]++;
    batches = std::max(batches, batch[i] + 1);
  }
  res.learned.resize(parts.parts.size());
  res.ledger.global_cap = detail::global_cap_for(n_bar, opt);
  for (int b = 0; b < batches; ++b) {
    NccGroups groups;
    PartInputs in;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < parts.parts.size(); ++i) {
      if (batch[i] != b) continue;
      groups.members.push_back(parts.parts[i]);
      groups.target.push_back(leaders[i]);
      in.push_back(inputs[i]);
      index.push_back(i);
    }
    auto agg = ncc_aggregate(n_bar, groups, in, op, opt, local);
    res.sched_congestion = std::max(res.sched_congestion, agg.trees.congestion);
    const auto mc = ncc_multicast(agg.trees, agg.value, opt, local);
    res.ledger.append(agg.ledger);
    res.ledger.append(mc.ledger);
    for (std::size_t k = 0; k < index.size(); ++k) res.learned[index[k]] = mc.received[k];
  }
  return res;
}

}  // namespace lapdist

#endif  // LAPDIST_AGGREGATION_HPP_
