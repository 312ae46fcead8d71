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

#ifndef LAPDIST_GRAPH_HPP_
#define LAPDIST_GRAPH_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace lapdist {

using NodeId = std::int32_t;
using EdgeId = std::int32_t;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;

inline constexpr NodeId kNoNode = -1;
inline constexpr EdgeId kNoEdge = -1;

/// Structural errors raised by graph-core validators. `kind()` names the
/// first violated condition so callers and tests can branch on it.
class graph_error : public std::runtime_error {
 public:
  enum class Kind {
    invalid_node,
    invalid_weight,
    disconnected,
    not_a_tree,
    node_coverage,
    subtree_connectivity,
    edge_coverage,
    part_disconnected,
    multiplicity_overflow,
    empty_part,
    cap_exceeded,
    parse,
  };

  graph_error(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct Edge {
  NodeId u = kNoNode;
  NodeId v = kNoNode;
  double weight = 1.0;
  EdgeId id = kNoEdge;

  bool is_self_loop() const noexcept { return u == v; }
  NodeId other(NodeId x) const noexcept { return x == u ? v : u; }
  double resistance() const noexcept { return 1.0 / weight; }
};

struct Incidence {
  EdgeId edge;
  NodeId other;
};

/// Undirected weighted multigraph over dense node ids 0..n-1. Edge ids are
/// dense insertion indices. Self-loops are stored (contraction produces them)
/// but carry no Laplacian mass.
class WeightedGraph {
 public:
  WeightedGraph() = default;
  explicit WeightedGraph(NodeId n) : adjacency_(static_cast<std::size_t>(n)) {
    if (n < 0) throw graph_error(graph_error::Kind::invalid_node, "negative node count");
  }

  NodeId num_nodes() const noexcept { return static_cast<NodeId>(adjacency_.size()); }
  std::size_t num_edges() const noexcept { return edges_.size(); }

  NodeId add_node() {
    adjacency_.emplace_back();
    return num_nodes() - 1;
  }

  EdgeId add_edge(NodeId u, NodeId v, double weight = 1.0) {
    check_node(u);
    check_node(v);
    if (!(weight > 0.0) || !std::isfinite(weight)) {
      throw graph_error(graph_error::Kind::invalid_weight,
                        "edge weight must be positive and finite");
    }
    const auto id = static_cast<EdgeId>(edges_.size());
    edges_.push_back(Edge{u, v, weight, id});
    adjacency_[static_cast<std::size_t>(u)].push_back({id, v});
    if (u != v) adjacency_[static_cast<std::size_t>(v)].push_back({id, u});
    return id;
  }

  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const Edge& edge(EdgeId e) const { return edges_.at(static_cast<std::size_t>(e)); }

  std::span<const Incidence> incident(NodeId u) const {
    check_node(u);
    return adjacency_[static_cast<std::size_t>(u)];
  }

  /// Number of incident non-loop edge endpoints (multi-edges counted).
  std::size_t degree(NodeId u) const {
    std::size_t d = 0;
    for (const auto& inc : incident(u)) d += (inc.other != u) ? 1 : 0;
    return d;
  }

  double weighted_degree(NodeId u) const {
    double d = 0.0;
    for (const auto& inc : incident(u)) {
      if (inc.other != u) d += edges_[static_cast<std::size_t>(inc.edge)].weight;
    }
    return d;
  }

  /// Largest edge weight, rounded up; the W of an integral input graph.
  std::int64_t weight_cap() const {
    double w = 1.0;
    for (const auto& e : edges_) w = std::max(w, e.weight);
    return static_cast<std::int64_t>(std::ceil(w));
  }

  bool has_integral_weights() const {
    return std::all_of(edges_.begin(), edges_.end(), [](const Edge& e) {
      return e.weight >= 1.0 && std::floor(e.weight) == e.weight;
    });
  }

  bool contains(NodeId u) const noexcept { return u >= 0 && u < num_nodes(); }

 private:
  void check_node(NodeId u) const {
    if (!contains(u)) {
      throw graph_error(graph_error::Kind::invalid_node,
                        "node id " + std::to_string(u) + " out of range");
    }
  }

  std::vector<std::vector<Incidence>> adjacency_;
  std::vector<Edge> edges_;
};

/// Checks that an input graph has integer weights in {1..cap}.
inline void validate_input_weights(const WeightedGraph& g, std::int64_t cap) {
  for (const auto& e : g.edges()) {
    if (e.weight < 1.0 || std::floor(e.weight) != e.weight ||
        e.weight > static_cast<double>(cap)) {
      throw graph_error(graph_error::Kind::invalid_weight,
                        "edge " + std::to_string(e.id) + " weight outside {1..W}");
    }
  }
}

struct TreeDecomposition {
  std::vector<std::vector<NodeId>> bags;
  std::vector<std::pair<int, int>> tree_edges;

  int max_bag_size() const {
    std::size_t best = 0;
    for (const auto& b : bags) best = std::max(best, b.size());
    return static_cast<int>(best);
  }
};

/// Node subsets; `multiplicity()` counts containing parts per node.
struct Partition {
  std::vector<std::vector<NodeId>> parts;

  std::vector<int> multiplicity(NodeId n) const {
    std::vector<int> mult(static_cast<std::size_t>(n), 0);
    for (const auto& p : parts) {
      for (NodeId u : p) {
        if (u < 0 || u >= n) {
          throw graph_error(graph_error::Kind::invalid_node, "part references unknown node");
        }
        ++mult[static_cast<std::size_t>(u)];
      }
    }
    return mult;
  }
};

// ---------------------------------------------------------------------------
// Traversal helpers

/// Unweighted BFS distances from `source`; unreachable nodes get -1.
inline std::vector<int> bfs_distances(const WeightedGraph& g, NodeId source) {
  std::vector<int> dist(static_cast<std::size_t>(g.num_nodes()), -1);
  std::queue<NodeId> queue;
  dist[static_cast<std::size_t>(source)] = 0;
  queue.push(source);
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop();
    for (const auto& inc : g.incident(u)) {
      auto& d = dist[static_cast<std::size_t>(inc.other)];
      if (d < 0) {
        d = dist[static_cast<std::size_t>(u)] + 1;
        queue.push(inc.other);
      }
    }
  }
  return dist;
}

/// Component label per node, labels dense from 0 in order of lowest member.
inline std::vector<int> connected_components(const WeightedGraph& g, int* count = nullptr) {
  std::vector<int> label(static_cast<std::size_t>(g.num_nodes()), -1);
  int next = 0;
  std::vector<NodeId> stack;
  for (NodeId s = 0; s < g.num_nodes(); ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    label[static_cast<std::size_t>(s)] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (const auto& inc : g.incident(u)) {
        auto& l = label[static_cast<std::size_t>(inc.other)];
        if (l < 0) {
          l = next;
          stack.push_back(inc.other);
        }
      }
    }
    ++next;
  }
  if (count != nullptr) *count = next;
  return label;
}

inline bool is_connected(const WeightedGraph& g) {
  if (g.num_nodes() <= 1) return true;
  int count = 0;
  connected_components(g, &count);
  return count == 1;
}

/// True iff the subgraph induced by `nodes` is connected (empty counts as not).
inline bool induced_connected(const WeightedGraph& g, std::span<const NodeId> nodes) {
  if (nodes.empty()) return false;
  std::vector<char> inside(static_cast<std::size_t>(g.num_nodes()), 0);
  for (NodeId u : nodes) inside[static_cast<std::size_t>(u)] = 1;
  std::vector<char> seen(inside.size(), 0);
  std::vector<NodeId> stack{nodes.front()};
  seen[static_cast<std::size_t>(nodes.front())] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    for (const auto& inc : g.incident(u)) {
      const auto w = static_cast<std::size_t>(inc.other);
      if (inside[w] && !seen[w]) {
        seen[w] = 1;
        ++reached;
        stack.push_back(inc.other);
      }
    }
  }
  std::size_t distinct = 0;
  for (char c : inside) distinct += c ? 1 : 0;
  return reached == distinct;
}

/// Hop diameter (unweighted). Throws on disconnected input.
inline int hop_diameter(const WeightedGraph& g) {
  if (g.num_nodes() == 0) return 0;
  int best = 0;
  for (NodeId s = 0; s < g.num_nodes(); ++s) {
    const auto dist = bfs_distances(g, s);
    for (int d : dist) {
      if (d < 0) throw graph_error(graph_error::Kind::disconnected, "hop_diameter: graph is disconnected");
      best = std::max(best, d);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Laplacian

/// Dense Laplacian. Multi-edges sum; self-loops are dropped.
inline DenseMatrix laplacian(const WeightedGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  DenseMatrix l = DenseMatrix::Zero(n, n);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    l(e.u, e.u) += e.weight;
    l(e.v, e.v) += e.weight;
    l(e.u, e.v) -= e.weight;
    l(e.v, e.u) -= e.weight;
  }
  return l;
}

/// y = L(G) x in O(m).
inline Vector laplacian_apply(const WeightedGraph& g, const Vector& x) {
  Vector y = Vector::Zero(x.size());
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    const double flow = e.weight * (x[e.u] - x[e.v]);
    y[e.u] += flow;
    y[e.v] -= flow;
  }
  return y;
}

/// x^T L(G) x.
inline double laplacian_energy(const WeightedGraph& g, const Vector& x) {
  double s = 0.0;
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    const double d = x[e.u] - x[e.v];
    s += e.weight * d * d;
  }
  return s;
}

/// Removes the all-ones component.
inline Vector project_out_constant(Vector x) {
  if (x.size() > 0) x.array() -= x.mean();
  return x;
}

// ---------------------------------------------------------------------------
// Structural validators

/// Returns the width of `td` if it is a valid tree decomposition of `g`;
/// otherwise throws naming the first violated condition.
inline int validate_tree_decomposition(const WeightedGraph& g, const TreeDecomposition& td) {
  using K = graph_error::Kind;
  const auto k = static_cast<int>(td.bags.size());
  const auto n = g.num_nodes();
  for (const auto& bag : td.bags) {
    for (NodeId u : bag) {
      if (u < 0 || u >= n) throw graph_error(K::invalid_node, "bag references unknown node");
    }
  }
  // Tree shape: k-1 edges and connected.
  if (k == 0) {
    if (n == 0) return -1;
    throw graph_error(K::node_coverage, "empty decomposition does not cover the nodes");
  }
  if (static_cast<int>(td.tree_edges.size()) != k - 1) {
    throw graph_error(K::not_a_tree, "decomposition tree must have exactly bags-1 edges");
  }
  std::vector<std::vector<int>> tadj(static_cast<std::size_t>(k));
  for (auto [a, b] : td.tree_edges) {
    if (a < 0 || b < 0 || a >= k || b >= k || a == b) {
      throw graph_error(K::not_a_tree, "decomposition tree edge references unknown bag");
    }
    tadj[static_cast<std::size_t>(a)].push_back(b);
    tadj[static_cast<std::size_t>(b)].push_back(a);
  }
  {
    std::vector<char> seen(static_cast<std::size_t>(k), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      for (int y : tadj[static_cast<std::size_t>(x)]) {
        if (!seen[static_cast<std::size_t>(y)]) {
          seen[static_cast<std::size_t>(y)] = 1;
          ++reached;
          stack.push_back(y);
        }
      }
    }
    if (reached != k) throw graph_error(K::not_a_tree, "decomposition tree is disconnected");
  }

  // Condition 1: coverage.
  std::vector<std::vector<int>> bags_of(static_cast<std::size_t>(n));
  for (int i = 0; i < k; ++i) {
    for (NodeId u : td.bags[static_cast<std::size_t>(i)]) bags_of[static_cast<std::size_t>(u)].push_back(i);
  }
  for (NodeId u = 0; u < n; ++u) {
    if (bags_of[static_cast<std::size_t>(u)].empty()) {
      throw graph_error(K::node_coverage, "node " + std::to_string(u) + " is in no bag");
    }
  }
  // Condition 2: each node's bags induce a connected subtree.
  std::vector<char> member(static_cast<std::size_t>(k), 0);
  std::vector<char> seen(static_cast<std::size_t>(k), 0);
  for (NodeId u = 0; u < n; ++u) {
    const auto& mine = bags_of[static_cast<std::size_t>(u)];
    for (int b : mine) member[static_cast<std::size_t>(b)] = 1;
    std::vector<int> stack{mine.front()};
    seen[static_cast<std::size_t>(mine.front())] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
      int x = stack.back();
      stack.pop_back();
      for (int y : tadj[static_cast<std::size_t>(x)]) {
        if (member[static_cast<std::size_t>(y)] && !seen[static_cast<std::size_t>(y)]) {
          seen[static_cast<std::size_t>(y)] = 1;
          ++reached;
          stack.push_back(y);
        }
      }
    }
    for (int b : mine) {
      member[static_cast<std::size_t>(b)] = 0;
      seen[static_cast<std::size_t>(b)] = 0;
    }
    // Duplicates within a bag would inflate `mine`; count distinct bags.
    std::vector<int> uniq = mine;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (reached != uniq.size()) {
      throw graph_error(K::subtree_connectivity,
                        "bags containing node " + std::to_string(u) + " are not a connected subtree");
    }
  }
  // Condition 3: edge coverage.
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    const auto& a = bags_of[static_cast<std::size_t>(e.u)];
    const auto& b = bags_of[static_cast<std::size_t>(e.v)];
    bool covered = false;
    for (int x : a) {
      if (std::find(b.begin(), b.end(), x) != b.end()) {
        covered = true;
        break;
      }
    }
    if (!covered) {
      throw graph_error(K::edge_coverage, "edge {" + std::to_string(e.u) + "," +
                                              std::to_string(e.v) + "} is not covered by any bag");
    }
  }
  return td.max_bag_size() - 1;
}

/// Checks connectivity of every induced part and multiplicity <= rho_cap.
/// Returns the realised maximum multiplicity.
inline int validate_partition(const WeightedGraph& g, const Partition& p, int rho_cap) {
  using K = graph_error::Kind;
  for (std::size_t i = 0; i < p.parts.size(); ++i) {
    const auto& part = p.parts[i];
    if (part.empty()) throw graph_error(K::empty_part, "part " + std::to_string(i) + " is empty");
    for (NodeId u : part) {
      if (!g.contains(u)) throw graph_error(K::invalid_node, "part references unknown node");
    }
    if (!induced_connected(g, part)) {
      throw graph_error(K::part_disconnected, "part " + std::to_string(i) + " induces a disconnected subgraph");
    }
  }
  const auto mult = p.multiplicity(g.num_nodes());
  const int rho = mult.empty() ? 0 : *std::max_element(mult.begin(), mult.end());
  if (rho > rho_cap) {
    throw graph_error(K::multiplicity_overflow,
                      "node multiplicity " + std::to_string(rho) + " exceeds cap " + std::to_string(rho_cap));
  }
  return rho;
}

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational& a, const Rational& b) { return a.num * b.den == b.num * a.den; }
  friend bool operator<(const Rational& a, const Rational& b) { return a.num * b.den < b.num * a.den; }
};

/// Minor density max |E'|/|V'| over all simple minors, by exhaustive
/// enumeration of branch-set assignments. Exponential; capped at `cap` nodes.
inline Rational minor_density_bruteforce(const WeightedGraph& g, NodeId cap = 10) {
  const NodeId n = g.num_nodes();
  if (n > cap) {
    throw graph_error(graph_error::Kind::cap_exceeded,
                      "minor_density_bruteforce: n=" + std::to_string(n) + " exceeds cap " + std::to_string(cap));
  }
  Rational best{0, 1};
  if (n == 0) return best;
  std::vector<std::vector<char>> adj(static_cast<std::size_t>(n), std::vector<char>(static_cast<std::size_t>(n), 0));
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    adj[static_cast<std::size_t>(e.u)][static_cast<std::size_t>(e.v)] = 1;
    adj[static_cast<std::size_t>(e.v)][static_cast<std::size_t>(e.u)] = 1;
  }
  // Restricted-growth labelling: 0 = deleted, 1..k = branch sets.
  std::vector<int> label(static_cast<std::size_t>(n), 0);
  std::vector<NodeId> members;
  auto evaluate = [&](int k) {
    if (k == 0) return;
    // Every branch set must be connected.
    for (int b = 1; b <= k; ++b) {
      members.clear();
      for (NodeId u = 0; u < n; ++u) {
        if (label[static_cast<std::size_t>(u)] == b) members.push_back(u);
      }
      std::vector<char> seen(static_cast<std::size_t>(n), 0);
      std::vector<NodeId> stack{members.front()};
      seen[static_cast<std::size_t>(members.front())] = 1;
      std::size_t reached = 1;
      while (!stack.empty()) {
        NodeId x = stack.back();
        stack.pop_back();
        for (NodeId y : members) {
          if (!seen[static_cast<std::size_t>(y)] && adj[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)]) {
            seen[static_cast<std::size_t>(y)] = 1;
            ++reached;
            stack.push_back(y);
          }
        }
      }
      if (reached != members.size()) return;
    }
    std::vector<char> pair(static_cast<std::size_t>((k + 1) * (k + 1)), 0);
    std::int64_t count = 0;
    for (NodeId u = 0; u < n; ++u) {
      const int a = label[static_cast<std::size_t>(u)];
      if (a == 0) continue;
      for (NodeId v = u + 1; v < n; ++v) {
        const int b = label[static_cast<std::size_t>(v)];
        if (b == 0 || a == b || !adj[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)]) continue;
        const int lo = std::min(a, b);
        const int hi = std::max(a, b);
        auto& seen = pair[static_cast<std::size_t>(lo * (k + 1) + hi)];
        if (!seen) {
          seen = 1;
          ++count;
        }
      }
    }
    Rational r{count, k};
    if (best < r) best = r;
  };
  // Enumerate restricted growth strings with an extra "deleted" symbol.
  auto recurse = [&](auto&& self, NodeId pos, int k) -> void {
    if (pos == n) {
      evaluate(k);
      return;
    }
    for (int l = 0; l <= k + 1; ++l) {
      label[static_cast<std::size_t>(pos)] = l;
      self(self, pos + 1, std::max(k, l));
    }
  };
  recurse(recurse, 0, 0);
  const std::int64_t g_ = std::gcd(best.num, best.den);
  if (g_ > 0) {
    best.num /= g_;
    best.den /= g_;
  }
  return best;
}

}  // namespace lapdist

#endif  // LAPDIST_GRAPH_HPP_
