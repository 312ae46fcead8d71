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

#ifndef LAPDIST_MINORS_HPP_
#define LAPDIST_MINORS_HPP_

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "lapdist/graph.hpp"

namespace lapdist {

class minor_error : public std::runtime_error {
 public:
  enum class Kind {
    empty_super_node,
    leader_outside,
    tree_edge_missing,
    tree_not_spanning,
    bad_edge_image,
    congestion_understated,
    host_mismatch,
  };
  minor_error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Image of a minor edge: a host edge, or a self-loop at a host node that
/// lies in both endpoint super-nodes.
struct EdgeImage {
  EdgeId host_edge = kNoEdge;
  NodeId host_node = kNoNode;  // set when host_edge == kNoEdge

  bool is_self_loop() const noexcept { return host_edge == kNoEdge; }
  static EdgeImage edge(EdgeId e) { return {e, kNoNode}; }
  static EdgeImage loop(NodeId x) { return {kNoEdge, x}; }
};

/// Embedding of a minor G into a host graph via connected super-nodes.
struct MinorDistribution {
  WeightedGraph minor;
  std::shared_ptr<const WeightedGraph> host;
  std::vector<std::vector<NodeId>> super_node;  // sorted host ids per minor node
  std::vector<NodeId> leader;
  std::vector<std::vector<EdgeId>> tree;        // host edge ids spanning each super-node
  std::vector<EdgeImage> edge_image;            // per minor edge
  int rho = 1;

  NodeId num_minor_nodes() const { return minor.num_nodes(); }

  /// Super-nodes as a congested partition of the host.
  Partition as_partition() const { return Partition{super_node}; }

  /// Per host node: minor nodes whose super-node contains it.
  std::vector<std::vector<NodeId>> storage() const {
    std::vector<std::vector<NodeId>> out(static_cast<std::size_t>(host->num_nodes()));
    for (NodeId a = 0; a < minor.num_nodes(); ++a) {
      for (NodeId x : super_node[static_cast<std::size_t>(a)]) out[static_cast<std::size_t>(x)].push_back(a);
    }
    return out;
  }
};

struct CongestionReport {
  int node_congestion = 0;
  int edge_congestion = 0;
  int rho() const { return std::max(node_congestion, edge_congestion); }
};

/// Checks every structural condition and returns the measured congestion.
/// Throws if the stored rho understates it.
inline CongestionReport measure_minor(const MinorDistribution& d) {
  using K = minor_error::Kind;
  const WeightedGraph& host = *d.host;
  const NodeId k = d.minor.num_nodes();
  if (static_cast<NodeId>(d.super_node.size()) != k || static_cast<NodeId>(d.leader.size()) != k ||
      static_cast<NodeId>(d.tree.size()) != k || d.edge_image.size() != d.minor.num_edges()) {
    throw minor_error(K::host_mismatch, "minor distribution tables have inconsistent sizes");
  }
  CongestionReport rep;
  std::vector<int> node_count(static_cast<std::size_t>(host.num_nodes()), 0);
  std::vector<int> edge_count(host.num_edges(), 0);
  std::vector<int> member_stamp(static_cast<std::size_t>(host.num_nodes()), -1);
  for (NodeId a = 0; a < k; ++a) {
    const auto& s = d.super_node[static_cast<std::size_t>(a)];
    if (s.empty()) throw minor_error(K::empty_super_node, "super-node " + std::to_string(a) + " is empty");
    for (NodeId x : s) {
      if (!host.contains(x)) throw minor_error(K::host_mismatch, "super-node references unknown host node");
      ++node_count[static_cast<std::size_t>(x)];
      member_stamp[static_cast<std::size_t>(x)] = a;
    }
    const NodeId l = d.leader[static_cast<std::size_t>(a)];
    if (!host.contains(l) || member_stamp[static_cast<std::size_t>(l)] != a) {
      throw minor_error(K::leader_outside, "leader of super-node " + std::to_string(a) + " lies outside it");
    }
    const auto& t = d.tree[static_cast<std::size_t>(a)];
    if (t.size() + 1 != s.size()) {
      throw minor_error(K::tree_not_spanning, "tree of super-node " + std::to_string(a) + " has wrong edge count");
    }
    // Union-find over the super-node's host ids.
    std::map<NodeId, NodeId> parent;
    for (NodeId x : s) parent[x] = x;
    auto find = [&](NodeId x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (EdgeId e : t) {
      if (e < 0 || static_cast<std::size_t>(e) >= host.num_edges()) {
        throw minor_error(K::tree_edge_missing, "tree edge " + std::to_string(e) + " is not a host edge");
      }
      const auto& he = host.edge(e);
      if (member_stamp[static_cast<std::size_t>(he.u)] != a || member_stamp[static_cast<std::size_t>(he.v)] != a) {
        throw minor_error(K::tree_edge_missing, "tree edge leaves super-node " + std::to_string(a));
      }
      const NodeId ru = find(he.u), rv = find(he.v);
      if (ru == rv) throw minor_error(K::tree_not_spanning, "tree of super-node " + std::to_string(a) + " has a cycle");
      parent[ru] = rv;
      ++edge_count[static_cast<std::size_t>(e)];
    }
  }
  // Membership test for images (super-nodes are sorted).
  auto in_super = [&](NodeId a, NodeId x) {
    const auto& s = d.super_node[static_cast<std::size_t>(a)];
    return std::binary_search(s.begin(), s.end(), x);
  };
  for (const auto& e : d.minor.edges()) {
    const auto& img = d.edge_image[static_cast<std::size_t>(e.id)];
    if (img.is_self_loop()) {
      if (!host.contains(img.host_node) || !in_super(e.u, img.host_node) || !in_super(e.v, img.host_node)) {
        throw minor_error(K::bad_edge_image, "self-loop image of minor edge " + std::to_string(e.id) +
                                                 " is not shared by both super-nodes");
      }
      continue;
    }
    if (img.host_edge < 0 || static_cast<std::size_t>(img.host_edge) >= host.num_edges()) {
      throw minor_error(K::bad_edge_image, "image of minor edge " + std::to_string(e.id) + " is not a host edge");
    }
    const auto& he = host.edge(img.host_edge);
    const bool ok = (in_super(e.u, he.u) && in_super(e.v, he.v)) || (in_super(e.u, he.v) && in_super(e.v, he.u));
    if (!ok) {
      throw minor_error(K::bad_edge_image, "image of minor edge " + std::to_string(e.id) +
                                               " does not join its endpoint super-nodes");
    }
    ++edge_count[static_cast<std::size_t>(img.host_edge)];
  }
  rep.node_congestion = node_count.empty() ? 0 : *std::max_element(node_count.begin(), node_count.end());
  rep.edge_congestion = edge_count.empty() ? 0 : *std::max_element(edge_count.begin(), edge_count.end());
  return rep;
}

/// Returns the true congestion; throws on any structural violation or when
/// the stored rho is smaller than the measured one.
inline int validate_minor(const MinorDistribution& d) {
  const auto rep = measure_minor(d);
  if (rep.rho() > d.rho) {
    throw minor_error(minor_error::Kind::congestion_understated,
                      "stored rho " + std::to_string(d.rho) + " below measured " + std::to_string(rep.rho()));
  }
  return rep.rho();
}

/// 1-minor distribution of G into itself.
inline MinorDistribution identity_minor(std::shared_ptr<const WeightedGraph> g) {
  MinorDistribution d;
  d.minor = *g;
  d.host = g;
  const NodeId n = g->num_nodes();
  d.super_node.resize(static_cast<std::size_t>(n));
  d.leader.resize(static_cast<std::size_t>(n));
  d.tree.assign(static_cast<std::size_t>(n), {});
  for (NodeId u = 0; u < n; ++u) {
    d.super_node[static_cast<std::size_t>(u)] = {u};
    d.leader[static_cast<std::size_t>(u)] = u;
  }
  d.edge_image.reserve(g->num_edges());
  for (const auto& e : g->edges()) {
    d.edge_image.push_back(e.is_self_loop() ? EdgeImage::loop(e.u) : EdgeImage::edge(e.id));
  }
  d.rho = 1;
  return d;
}

inline MinorDistribution identity_minor(const WeightedGraph& g) {
  return identity_minor(std::make_shared<const WeightedGraph>(g));
}

namespace detail {

/// BFS spanning tree of the host subgraph on `nodes` using only `candidate`
/// edges, rooted at `root`. Throws if the union is disconnected.
inline std::vector<EdgeId> stitch_tree(const WeightedGraph& host, const std::vector<NodeId>& nodes,
                                       const std::vector<EdgeId>& candidate, NodeId root) {
  std::map<NodeId, std::vector<std::pair<EdgeId, NodeId>>> adj;
  for (NodeId x : nodes) adj[x];
  for (EdgeId e : candidate) {
    const auto& he = host.edge(e);
    if (he.is_self_loop()) continue;
    auto iu = adj.find(he.u);
    auto iv = adj.find(he.v);
    if (iu == adj.end() || iv == adj.end()) continue;
    iu->second.emplace_back(e, he.v);
    iv->second.emplace_back(e, he.u);
  }
  for (auto& [x, list] : adj) std::sort(list.begin(), list.end());
  std::map<NodeId, char> seen;
  std::vector<EdgeId> tree;
  std::queue<NodeId> q;
  q.push(root);
  seen[root] = 1;
  while (!q.empty()) {
    const NodeId x = q.front();
    q.pop();
    for (const auto& [e, y] : adj[x]) {
      if (seen.count(y)) continue;
      seen[y] = 1;
      tree.push_back(e);
      q.push(y);
    }
  }
  if (seen.size() != nodes.size()) {
    throw minor_error(minor_error::Kind::tree_not_spanning, "stitched super-node is disconnected");
  }
  return tree;
}

inline std::vector<NodeId> sorted_union(std::vector<NodeId> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace detail

/// Composition of d1 (G1 into G2) and d2 (G2 into host). The result's
/// congestion is at most rho1 * rho2.
inline MinorDistribution compose_minors(const MinorDistribution& d1, const MinorDistribution& d2) {
  if (d1.host->num_nodes() != d2.minor.num_nodes() || d1.host->num_edges() != d2.minor.num_edges()) {
    throw minor_error(minor_error::Kind::host_mismatch, "d1.host is not d2.minor");
  }
  const WeightedGraph& host = *d2.host;
  MinorDistribution out;
  out.minor = d1.minor;
  out.host = d2.host;
  const NodeId k = d1.minor.num_nodes();
  out.super_node.resize(static_cast<std::size_t>(k));
  out.leader.resize(static_cast<std::size_t>(k));
  out.tree.resize(static_cast<std::size_t>(k));
  for (NodeId a = 0; a < k; ++a) {
    std::vector<NodeId> nodes;
    std::vector<EdgeId> candidate;
    for (NodeId x : d1.super_node[static_cast<std::size_t>(a)]) {
      const auto& s = d2.super_node[static_cast<std::size_t>(x)];
      nodes.insert(nodes.end(), s.begin(), s.end());
      const auto& t = d2.tree[static_cast<std::size_t>(x)];
      candidate.insert(candidate.end(), t.begin(), t.end());
    }
    for (EdgeId e2 : d1.tree[static_cast<std::size_t>(a)]) {
      const auto& img = d2.edge_image[static_cast<std::size_t>(e2)];
      if (!img.is_self_loop()) candidate.push_back(img.host_edge);
    }
    nodes = detail::sorted_union(std::move(nodes));
    const NodeId lead = d2.leader[static_cast<std::size_t>(d1.leader[static_cast<std::size_t>(a)])];
    out.super_node[static_cast<std::size_t>(a)] = nodes;
    out.leader[static_cast<std::size_t>(a)] = lead;
    out.tree[static_cast<std::size_t>(a)] = detail::stitch_tree(host, nodes, candidate, lead);
  }
  out.edge_image.reserve(d1.minor.num_edges());
  for (const auto& e : d1.minor.edges()) {
    const auto& img1 = d1.edge_image[static_cast<std::size_t>(e.id)];
    if (img1.is_self_loop()) {
      out.edge_image.push_back(EdgeImage::loop(d2.leader[static_cast<std::size_t>(img1.host_node)]));
    } else {
      out.edge_image.push_back(d2.edge_image[static_cast<std::size_t>(img1.host_edge)]);
    }
  }
  out.rho = d1.rho * d2.rho;
  out.rho = std::max(1, measure_minor(out).rho());
  return out;
}

struct ContractionResult {
  MinorDistribution dist;
  std::vector<NodeId> node_map;   // old minor node -> new minor node
  std::vector<EdgeId> edge_map;   // old minor edge -> new edge, kNoEdge if contracted
};

/// Contracts the minor edges in `f`. Each connected component of (V, F)
/// becomes one super-node (union of members plus images of F), led by the
/// minimum member leader. Non-F edges are kept; those inside a component
/// become self-loops.
inline ContractionResult contract_edges(const MinorDistribution& d, const std::vector<EdgeId>& f) {
  const WeightedGraph& g = d.minor;
  const NodeId n = g.num_nodes();
  std::vector<NodeId> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](NodeId x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  std::vector<char> contracted(g.num_edges(), 0);
  for (EdgeId e : f) {
    contracted[static_cast<std::size_t>(e)] = 1;
    const auto& edge = g.edge(e);
    const NodeId a = find(edge.u), b = find(edge.v);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
  ContractionResult res;
  res.node_map.assign(static_cast<std::size_t>(n), kNoNode);
  NodeId next = 0;
  std::vector<NodeId> root_label(static_cast<std::size_t>(n), kNoNode);
  for (NodeId u = 0; u < n; ++u) {
    const NodeId r = find(u);
    if (root_label[static_cast<std::size_t>(r)] == kNoNode) root_label[static_cast<std::size_t>(r)] = next++;
    res.node_map[static_cast<std::size_t>(u)] = root_label[static_cast<std::size_t>(r)];
  }
  MinorDistribution& out = res.dist;
  out.host = d.host;
  out.minor = WeightedGraph(next);
  out.super_node.assign(static_cast<std::size_t>(next), {});
  out.leader.assign(static_cast<std::size_t>(next), kNoNode);
  out.tree.assign(static_cast<std::size_t>(next), {});
  std::vector<std::vector<EdgeId>> candidate(static_cast<std::size_t>(next));
  for (NodeId u = 0; u < n; ++u) {
    const NodeId c = res.node_map[static_cast<std::size_t>(u)];
    auto& s = out.super_node[static_cast<std::size_t>(c)];
    const auto& su = d.super_node[static_cast<std::size_t>(u)];
    s.insert(s.end(), su.begin(), su.end());
    const auto& tu = d.tree[static_cast<std::size_t>(u)];
    candidate[static_cast<std::size_t>(c)].insert(candidate[static_cast<std::size_t>(c)].end(), tu.begin(), tu.end());
    auto& l = out.leader[static_cast<std::size_t>(c)];
    const NodeId lu = d.leader[static_cast<std::size_t>(u)];
    if (l == kNoNode || lu < l) l = lu;
  }
  for (EdgeId e : f) {
    const auto& img = d.edge_image[static_cast<std::size_t>(e)];
    if (!img.is_self_loop()) {
      candidate[static_cast<std::size_t>(res.node_map[static_cast<std::size_t>(g.edge(e).u)])].push_back(img.host_edge);
    }
  }
  for (NodeId c = 0; c < next; ++c) {
    auto& s = out.super_node[static_cast<std::size_t>(c)];
    s = detail::sorted_union(std::move(s));
    out.tree[static_cast<std::size_t>(c)] =
        detail::stitch_tree(*d.host, s, candidate[static_cast<std::size_t>(c)], out.leader[static_cast<std::size_t>(c)]);
  }
  res.edge_map.assign(g.num_edges(), kNoEdge);
  for (const auto& e : g.edges()) {
    if (contracted[static_cast<std::size_t>(e.id)]) continue;
    const NodeId a = res.node_map[static_cast<std::size_t>(e.u)];
    const NodeId b = res.node_map[static_cast<std::size_t>(e.v)];
    res.edge_map[static_cast<std::size_t>(e.id)] = out.minor.add_edge(a, b, e.weight);
    const auto& img = d.edge_image[static_cast<std::size_t>(e.id)];
    if (a == b && !img.is_self_loop()) {
      out.edge_image.push_back(EdgeImage::loop(d.host->edge(img.host_edge).u));
    } else {
      out.edge_image.push_back(img);
    }
  }
  out.rho = d.rho;
  out.rho = std::max(1, measure_minor(out).rho());
  return res;
}

/// Minor distribution whose minor is `g` with super-nodes given explicitly;
/// trees are BFS trees of host[super-node], images are the first host edge
/// joining the two super-nodes (or a shared host node).
inline MinorDistribution make_minor_from_parts(const WeightedGraph& g, std::shared_ptr<const WeightedGraph> host,
                                               std::vector<std::vector<NodeId>> parts) {
  MinorDistribution d;
  d.minor = g;
  d.host = host;
  const NodeId k = g.num_nodes();
  if (static_cast<NodeId>(parts.size()) != k) {
    throw minor_error(minor_error::Kind::host_mismatch, "one super-node per minor node required");
  }
  d.super_node.resize(static_cast<std::size_t>(k));
  d.leader.resize(static_cast<std::size_t>(k));
  d.tree.resize(static_cast<std::size_t>(k));
  std::vector<EdgeId> all(host->num_edges());
  std::iota(all.begin(), all.end(), 0);
  for (NodeId a = 0; a < k; ++a) {
    auto s = detail::sorted_union(std::move(parts[static_cast<std::size_t>(a)]));
    if (s.empty()) throw minor_error(minor_error::Kind::empty_super_node, "empty super-node");
    std::vector<EdgeId> inner;
    for (NodeId x : s) {
      for (const auto& inc : host->incident(x)) {
        if (inc.other > x && std::binary_search(s.begin(), s.end(), inc.other)) inner.push_back(inc.edge);
      }
    }
    d.leader[static_cast<std::size_t>(a)] = s.front();
    d.tree[static_cast<std::size_t>(a)] = detail::stitch_tree(*host, s, inner, s.front());
    d.super_node[static_cast<std::size_t>(a)] = std::move(s);
  }
  for (const auto& e : g.edges()) {
    const auto& su = d.super_node[static_cast<std::size_t>(e.u)];
    const auto& sv = d.super_node[static_cast<std::size_t>(e.v)];
    EdgeImage img;
    bool found = false;
    for (NodeId x : su) {
      if (std::binary_search(sv.begin(), sv.end(), x)) {
        img = EdgeImage::loop(x);
        found = true;
        break;
      }
    }
    if (!found) {
      for (NodeId x : su) {
        for (const auto& inc : host->incident(x)) {
          if (std::binary_search(sv.begin(), sv.end(), inc.other)) {
            img = EdgeImage::edge(inc.edge);
            found = true;
            break;
          }
        }
        if (found) break;
      }
    }
    if (!found) {
      throw minor_error(minor_error::Kind::bad_edge_image,
                        "no host edge joins the super-nodes of minor edge " + std::to_string(e.id));
    }
    d.edge_image.push_back(img);
  }
  d.rho = std::max(1, measure_minor(d).rho());
  return d;
}

// JSON fixture form.

inline nlohmann::json graph_to_json(const WeightedGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges()) edges.push_back({e.u, e.v, e.weight});
  return {{"n", g.num_nodes()}, {"edges", edges}};
}

inline WeightedGraph graph_from_json(const nlohmann::json& j) {
  WeightedGraph g(j.at("n").get<NodeId>());
  for (const auto& e : j.at("edges")) g.add_edge(e.at(0).get<NodeId>(), e.at(1).get<NodeId>(), e.at(2).get<double>());
  return g;
}

inline nlohmann::json to_json(const MinorDistribution& d) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : d.edge_image) {
    images.push_back(img.is_self_loop() ? nlohmann::json{{"loop", img.host_node}} : nlohmann::json{{"edge", img.host_edge}});
  }
  return {{"minor", graph_to_json(d.minor)}, {"host", graph_to_json(*d.host)}, {"super_node", d.super_node},
          {"leader", d.leader},           {"tree", d.tree},                 {"edge_image", images},
          {"rho", d.rho}};
}

inline MinorDistribution minor_from_json(const nlohmann::json& j) {
  MinorDistribution d;
  d.minor = graph_from_json(j.at("minor"));
  d.host = std::make_shared<const WeightedGraph>(graph_from_json(j.at("host")));
  d.super_node = j.at("super_node").get<std::vector<std::vector<NodeId>>>();
  d.leader = j.at("leader").get<std::vector<NodeId>>();
  d.tree = j.at("tree").get<std::vector<std::vector<EdgeId>>>();
  for (const auto& img : j.at("edge_image")) {
    d.edge_image.push_back(img.contains("loop") ? EdgeImage::loop(img.at("loop").get<NodeId>())
                                                : EdgeImage::edge(img.at("edge").get<EdgeId>()));
  }
  d.rho = j.at("rho").get<int>();
  return d;
}

}  // namespace lapdist

#endif  // LAPDIST_MINORS_HPP_
