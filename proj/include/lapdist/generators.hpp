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

#ifndef LAPDIST_GENERATORS_HPP_
#define LAPDIST_GENERATORS_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lapdist/graph.hpp"

namespace lapdist {

struct GeneratedGraph {
  WeightedGraph graph;
  std::optional<TreeDecomposition> decomposition;
};

struct GeneratorParams {
  NodeId n = 8;         // node count (path, cycle, complete, ktree, random)
  NodeId rows = 0;      // grid
  NodeId cols = 0;      // grid
  int k = 2;            // ktree / bounded-tw width
  double keep = 0.7;    // bounded-tw edge keep probability
  double extra = 1.0;   // random: extra edges per node beyond the spanning tree
  std::int64_t max_weight = 1;
};

namespace detail {

inline double draw_weight(std::mt19937_64& rng, std::int64_t w_max) {
  if (w_max <= 1) return 1.0;
  std::uniform_int_distribution<std::int64_t> dist(1, w_max);
  return static_cast<double>(dist(rng));
}

inline TreeDecomposition path_bags(NodeId n, NodeId window) {
  // Bags {i, ..., i+window} slid along the node order.
  TreeDecomposition td;
  if (n <= window + 1) {
    std::vector<NodeId> all(static_cast<std::size_t>(n));
    for (NodeId i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    td.bags.push_back(all);
    return td;
  }
  for (NodeId i = 0; i + window < n; ++i) {
    std::vector<NodeId> bag;
    for (NodeId j = i; j <= i + window; ++j) bag.push_back(j);
    td.bags.push_back(bag);
    if (i > 0) td.tree_edges.emplace_back(i - 1, i);
  }
  return td;
}

}  // namespace detail

inline GeneratedGraph make_path(NodeId n, std::int64_t w_max = 1, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  GeneratedGraph out{WeightedGraph(n), std::nullopt};
  for (NodeId i = 0; i + 1 < n; ++i) out.graph.add_edge(i, i + 1, detail::draw_weight(rng, w_max));
  out.decomposition = detail::path_bags(n, 1);
  return out;
}

inline GeneratedGraph make_cycle(NodeId n, std::int64_t w_max = 1, std::uint64_t seed = 0) {
  if (n < 3) throw std::invalid_argument("cycle needs at least 3 nodes");
  std::mt19937_64 rng(seed);
  GeneratedGraph out{WeightedGraph(n), std::nullopt};
  for (NodeId i = 0; i < n; ++i) out.graph.add_edge(i, (i + 1) % n, detail::draw_weight(rng, w_max));
  // Path decomposition of the path 1..n-1, with node 0 added to every bag.
  TreeDecomposition td;
  for (NodeId i = 1; i + 1 < n; ++i) {
    td.bags.push_back({0, i, i + 1});
    if (i > 1) td.tree_edges.emplace_back(i - 2, i - 1);
  }
  out.decomposition = td;
  return out;
}

inline GeneratedGraph make_grid(NodeId rows, NodeId cols, std::int64_t w_max = 1, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  GeneratedGraph out{WeightedGraph(rows * cols), std::nullopt};
  auto id = [cols](NodeId r, NodeId c) { return r * cols + c; };
  for (NodeId r = 0; r < rows; ++r) {
    for (NodeId c = 0; c < cols; ++c) {
      if (c + 1 < cols) out.graph.add_edge(id(r, c), id(r, c + 1), detail::draw_weight(rng, w_max));
      if (r + 1 < rows) out.graph.add_edge(id(r, c), id(r + 1, c), detail::draw_weight(rng, w_max));
    }
  }
  out.decomposition = detail::path_bags(rows * cols, cols);
  return out;
}

inline GeneratedGraph make_complete(NodeId n, std::int64_t w_max = 1, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  GeneratedGraph out{WeightedGraph(n), std::nullopt};
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) out.graph.add_edge(u, v, detail::draw_weight(rng, w_max));
  }
  TreeDecomposition td;
  std::vector<NodeId> all(static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  if (n > 0) td.bags.push_back(all);
  out.decomposition = td;
  return out;
}

inline GeneratedGraph make_star(NodeId leaves, std::int64_t w_max = 1, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  GeneratedGraph out{WeightedGraph(leaves + 1), std::nullopt};
  TreeDecomposition td;
  for (NodeId i = 1; i <= leaves; ++i) {
    out.graph.add_edge(0, i, detail::draw_weight(rng, w_max));
    td.bags.push_back({0, i});
    if (i > 1) td.tree_edges.emplace_back(i - 2, i - 1);
  }
  if (leaves == 0) td.bags.push_back({0});
  out.decomposition = td;
  return out;
}

/// Random k-tree on n >= k+1 nodes with its canonical width-k decomposition.
/// With keep < 1 non-clique edges are deleted at random while a spanning
/// backbone is retained, giving a connected partial k-tree.
inline GeneratedGraph make_ktree(NodeId n, int k, std::uint64_t seed, double keep = 1.0,
                                 std::int64_t w_max = 1) {
  if (k < 1 || n < k + 1) throw std::invalid_argument("ktree needs k >= 1 and n >= k+1");
  std::mt19937_64 rng(seed);
  TreeDecomposition td;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<char> backbone;
  std::vector<NodeId> first(static_cast<std::size_t>(k + 1));
  for (NodeId i = 0; i <= k; ++i) first[static_cast<std::size_t>(i)] = i;
  td.bags.push_back(first);
  for (NodeId u = 0; u <= k; ++u) {
    for (NodeId v = u + 1; v <= k; ++v) {
      edges.emplace_back(u, v);
      backbone.push_back(v == u + 1 ? 1 : 0);
    }
  }
  for (NodeId v = k + 1; v < n; ++v) {
    std::uniform_int_distribution<std::size_t> pick_bag(0, td.bags.size() - 1);
    const std::size_t parent = pick_bag(rng);
    std::vector<NodeId> clique = td.bags[parent];
    std::uniform_int_distribution<std::size_t> drop(0, clique.size() - 1);
    clique.erase(clique.begin() + static_cast<std::ptrdiff_t>(drop(rng)));
    std::uniform_int_distribution<std::size_t> pick_anchor(0, clique.size() - 1);
    const NodeId anchor = clique[pick_anchor(rng)];
    for (NodeId u : clique) {
      edges.emplace_back(u, v);
      backbone.push_back(u == anchor ? 1 : 0);
    }
    clique.push_back(v);
    std::sort(clique.begin(), clique.end());
    td.bags.push_back(clique);
    td.tree_edges.emplace_back(static_cast<int>(parent), static_cast<int>(td.bags.size() - 1));
  }
  GeneratedGraph out{WeightedGraph(n), td};
  std::bernoulli_distribution coin(std::clamp(keep, 0.0, 1.0));
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const bool take = backbone[i] || keep >= 1.0 || coin(rng);
    if (take) out.graph.add_edge(edges[i].first, edges[i].second, detail::draw_weight(rng, w_max));
  }
  return out;
}

/// Random connected graph: uniform random recursive tree plus extra*n random
/// non-loop edges (parallel edges avoided).
inline GeneratedGraph make_random_connected(NodeId n, double extra, std::uint64_t seed,
                                            std::int64_t w_max = 1) {
  std::mt19937_64 rng(seed);
  GeneratedGraph out{WeightedGraph(n), std::nullopt};
  std::set<std::pair<NodeId, NodeId>> present;
  for (NodeId v = 1; v < n; ++v) {
    std::uniform_int_distribution<NodeId> pick(0, v - 1);
    const NodeId u = pick(rng);
    present.emplace(u, v);
    out.graph.add_edge(u, v, detail::draw_weight(rng, w_max));
  }
  const auto max_edges = static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2;
  auto target = present.size() + static_cast<std::size_t>(extra * n);
  target = std::min(target, max_edges);
  std::uniform_int_distribution<NodeId> any(0, std::max<NodeId>(n - 1, 0));
  while (present.size() < target) {
    NodeId u = any(rng);
    NodeId v = any(rng);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (!present.emplace(u, v).second) continue;
    out.graph.add_edge(u, v, detail::draw_weight(rng, w_max));
  }
  return out;
}

/// Disjoint connected parts covering V: BFS regions grown from `k` random
/// centres in round-robin order.
inline Partition make_voronoi_partition(const WeightedGraph& g, int k, std::uint64_t seed) {
  const NodeId n = g.num_nodes();
  std::mt19937_64 rng(seed);
  std::vector<NodeId> order(static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  k = std::max(1, std::min<int>(k, n));
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  std::vector<std::vector<NodeId>> frontier(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    owner[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i;
    frontier[static_cast<std::size_t>(i)].push_back(order[static_cast<std::size_t>(i)]);
  }
  bool grew = true;
  while (grew) {
    grew = false;
    for (int i = 0; i < k; ++i) {
      std::vector<NodeId> next;
      for (NodeId x : frontier[static_cast<std::size_t>(i)]) {
        for (const auto& inc : g.incident(x)) {
          if (owner[static_cast<std::size_t>(inc.other)] >= 0) continue;
          owner[static_cast<std::size_t>(inc.other)] = i;
          next.push_back(inc.other);
        }
      }
      grew = grew || !next.empty();
      frontier[static_cast<std::size_t>(i)] = std::move(next);
    }
  }
  Partition p;
  p.parts.resize(static_cast<std::size_t>(k));
  for (NodeId x = 0; x < n; ++x) {
    if (owner[static_cast<std::size_t>(x)] >= 0) p.parts[static_cast<std::size_t>(owner[static_cast<std::size_t>(x)])].push_back(x);
  }
  return p;
}

/// `count` connected parts of at most `max_size` nodes, each grown by random
/// search from a random seed, with every node in at most `rho` parts.
inline Partition make_congested_partition(const WeightedGraph& g, int count, NodeId max_size, int rho,
                                          std::uint64_t seed) {
  const NodeId n = g.num_nodes();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<NodeId> any(0, n - 1);
  std::vector<int> load(static_cast<std::size_t>(n), 0);
  Partition p;
  for (int i = 0; i < count; ++i) {
    NodeId start = kNoNode;
    for (int tries = 0; tries < 4 * n && start == kNoNode; ++tries) {
      const NodeId c = any(rng);
      if (load[static_cast<std::size_t>(c)] < rho) start = c;
    }
    if (start == kNoNode) break;
    std::vector<NodeId> part{start};
    std::set<NodeId> in{start};
    std::vector<NodeId> boundary;
    auto push_boundary = [&](NodeId x) {
      for (const auto& inc : g.incident(x)) {
        if (!in.count(inc.other) && load[static_cast<std::size_t>(inc.other)] < rho) boundary.push_back(inc.other);
      }
    };
    push_boundary(start);
    while (static_cast<NodeId>(part.size()) < max_size && !boundary.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, boundary.size() - 1);
      const std::size_t j = pick(rng);
      const NodeId x = boundary[j];
      boundary[j] = boundary.back();
      boundary.pop_back();
      if (in.count(x)) continue;
      in.insert(x);
      part.push_back(x);
      push_boundary(x);
    }
    for (NodeId x : part) ++load[static_cast<std::size_t>(x)];
    std::sort(part.begin(), part.end());
    p.parts.push_back(std::move(part));
  }
  return p;
}

/// Family dispatch used by the CLI and the experiment harness.
inline GeneratedGraph generate_graph(const std::string& family, const GeneratorParams& p, std::uint64_t seed) {
  if (family == "path") return make_path(p.n, p.max_weight, seed);
  if (family == "cycle") return make_cycle(p.n, p.max_weight, seed);
  if (family == "grid") return make_grid(p.rows, p.cols, p.max_weight, seed);
  if (family == "complete") return make_complete(p.n, p.max_weight, seed);
  if (family == "star") return make_star(p.n - 1, p.max_weight, seed);
  if (family == "ktree") return make_ktree(p.n, p.k, seed, 1.0, p.max_weight);
  if (family == "bounded-tw") return make_ktree(p.n, p.k, seed, p.keep, p.max_weight);
  if (family == "random") return make_random_connected(p.n, p.extra, seed, p.max_weight);
  throw std::invalid_argument("unknown graph family '" + family + "'");
}

}  // namespace lapdist

#endif  // LAPDIST_GENERATORS_HPP_
