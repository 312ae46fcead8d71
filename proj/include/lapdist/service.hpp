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

// Model-independent aggregation entry point, the measured aggregation cost
// Q(rho) of a minor distribution, and matrix-vector products with operators
// supported on the edges of a distributed minor.

#ifndef LAPDIST_SERVICE_HPP_
#define LAPDIST_SERVICE_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "lapdist/aggregation.hpp"
#include "lapdist/graph.hpp"
#include "lapdist/minors.hpp"
#include "lapdist/netsim.hpp"

namespace lapdist {

struct AggregationConfig {
  CongestAggregationOptions congest;
  SimOptions sim;
};

/// Dispatches a congested part-wise aggregation to the model's algorithm.
/// `leaders` is used by the NCC path; the sequential model folds in memory.
inline AggregationResult aggregate(Model model, const WeightedGraph& host, const Partition& parts,
                                   const PartInputs& inputs, const AggregateOp& op,
                                   const AggregationConfig& cfg = {}, const std::vector<NodeId>& leaders = {}) {
  switch (model) {
    case Model::congest:
      return congested_aggregation_congest(host, parts, inputs, op, cfg.congest, cfg.sim);
    case Model::ncc:
      return congested_aggregation_ncc(host.num_nodes(), parts, inputs, op, cfg.sim, leaders);
    case Model::hybrid:
      return congested_aggregation_ncc(host.num_nodes(), parts, inputs, op, cfg.sim, leaders, &host);
    case Model::sequential:
      break;
  }
  AggregationResult res;
  const auto folded = sequential_part_fold(inputs, op);
  res.learned.resize(parts.parts.size());
  for (std::size_t i = 0; i < parts.parts.size(); ++i) res.learned[i].assign(parts.parts[i].size(), folded[i]);
  const auto mult = parts.multiplicity(host.num_nodes());
  res.rho = mult.empty() ? 0 : *std::max_element(mult.begin(), mult.end());
  return res;
}

/// Cost of one measured aggregation, or a running total of charges.
struct AggregationCost {
  std::int64_t rounds = 0;
  std::int64_t local_messages = 0;
  std::int64_t global_messages = 0;
  std::int64_t global_rounds = 0;  // rounds that carried a global message

  AggregationCost& operator+=(const AggregationCost& o) {
    rounds += o.rounds;
    local_messages += o.local_messages;
    global_messages += o.global_messages;
    global_rounds += o.global_rounds;
    return *this;
  }
};

/// Measures and caches Q(rho) for minor distributions: the rounds of one
/// sum aggregation over the super-nodes. Solver modules charge
/// `count * Q` for every batch of aggregations they would perform.
class AggregationService {
 public:
  explicit AggregationService(Model model = Model::sequential, AggregationConfig cfg = {})
      : model_(model), cfg_(std::move(cfg)) {}

  Model model() const { return model_; }
  const AggregationConfig& config() const { return cfg_; }

  /// One sum aggregation over the super-nodes of `d`, measured once.
  const AggregationCost& cost(const MinorDistribution& d) {
    static const AggregationCost kFree{};
    if (model_ == Model::sequential) return kFree;
    auto key = std::make_pair(d.host.get(), d.super_node);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const Partition parts = d.as_partition();
    PartInputs ones(parts.parts.size());
    for (std::size_t i = 0; i < parts.parts.size(); ++i) ones[i].assign(parts.parts[i].size(), AggValue::of(1));
    AggregationConfig cfg = cfg_;
    cfg.sim.record_messages = false;
    const auto r = aggregate(model_, *d.host, parts, ones, ops::sum(), cfg, d.leader);
    ++measurements_;
    pinned_.push_back(d.host);  // keeps the key's address from being reused
    // Singleton super-nodes aggregate in zero rounds, but every step still
    // exchanges one message across each minor edge.
    AggregationCost c{std::max(1, r.ledger.rounds), r.ledger.local_messages, r.ledger.global_messages,
                      r.ledger.rounds_with_global};
    return cache_.emplace(std::move(key), c).first->second;
  }

  int quality(const MinorDistribution& d) { return static_cast<int>(cost(d).rounds); }

  /// Adds `count` aggregations over `d` to the running totals.
  std::int64_t charge(const MinorDistribution& d, std::int64_t count) {
    const AggregationCost& c = cost(d);
    totals_ += AggregationCost{count * c.rounds, count * c.local_messages, count * c.global_messages,
                               count * c.global_rounds};
    return count * c.rounds;
  }

  std::int64_t charged_rounds() const { return totals_.rounds; }
  const AggregationCost& totals() const { return totals_; }
  int measurements() const { return measurements_; }
  void reset_charges() { totals_ = {}; }

 private:
  Model model_;
  AggregationConfig cfg_;
  std::map<std::pair<const WeightedGraph*, std::vector<std::vector<NodeId>>>, AggregationCost> cache_;
  std::vector<std::shared_ptr<const WeightedGraph>> pinned_;
  AggregationCost totals_;
  int measurements_ = 0;
};

// ---------------------------------------------------------------------------
// Matrix-vector products on a distributed minor

/// A = diag + sum over minor edges e = {u, v} of forward[e] at (u, v) and
/// backward[e] at (v, u), with u = e.u.
struct EdgeOperator {
  Vector diag;
  std::vector<double> forward;
  std::vector<double> backward;
};

inline EdgeOperator laplacian_operator(const WeightedGraph& g) {
  EdgeOperator a;
  a.diag = Vector::Zero(g.num_nodes());
  a.forward.assign(g.num_edges(), 0.0);
  a.backward.assign(g.num_edges(), 0.0);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    a.diag[e.u] += e.weight;
    a.diag[e.v] += e.weight;
    a.forward[static_cast<std::size_t>(e.id)] = -e.weight;
    a.backward[static_cast<std::size_t>(e.id)] = -e.weight;
  }
  return a;
}

/// Places each off-diagonal nonzero on the lowest-id edge joining its pair.
inline EdgeOperator edge_operator_from_dense(const WeightedGraph& g, const DenseMatrix& m) {
  const NodeId n = g.num_nodes();
  if (m.rows() != n || m.cols() != n) throw aggregation_error("operator dimension does not match the minor");
  EdgeOperator a;
  a.diag = m.diagonal();
  a.forward.assign(g.num_edges(), 0.0);
  a.backward.assign(g.num_edges(), 0.0);
  std::map<std::pair<NodeId, NodeId>, EdgeId> first;
  for (const auto& e : g.edges()) {
    if (!e.is_self_loop()) first.emplace(std::minmax(e.u, e.v), e.id);
  }
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = 0; j < n; ++j) {
      if (i == j || m(i, j) == 0.0) continue;
      const auto it = first.find(std::minmax(i, j));
      if (it == first.end()) {
        throw aggregation_error("operator entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") is not supported on a minor edge");
      }
      const auto& e = g.edge(it->second);
      (e.u == i ? a.forward : a.backward)[static_cast<std::size_t>(e.id)] = m(i, j);
    }
  }
  return a;
}

inline Vector apply_edge_operator(const WeightedGraph& g, const EdgeOperator& a, const Vector& x) {
  Vector y = a.diag.cwiseProduct(x);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    y[e.u] += a.forward[static_cast<std::size_t>(e.id)] * x[e.v];
    y[e.v] += a.backward[static_cast<std::size_t>(e.id)] * x[e.u];
  }
  return y;
}

namespace detail {

struct ScheduledSend {
  int round = 0;
  EdgeId edge = kNoEdge;  // local edge, or kNoEdge for a global message
  NodeId target = kNoNode;
  std::int64_t tag = 0;
  double value = 0.0;
};

/// Sends a precomputed schedule and records everything it receives.
class ExchangeProgram {
 public:
  std::vector<ScheduledSend> sends;
  std::vector<std::pair<std::int64_t, double>> received;

  void step(NodeContext& ctx) {
    for (const auto& env : ctx.inbox()) received.emplace_back(env.msg[0], env.msg.real(1));
    while (next_ < sends.size() && sends[next_].round == ctx.round()) {
      const auto& s = sends[next_++];
      Message m;
      m.push(s.tag);
      m.push_real(s.value);
      if (s.edge == kNoEdge) {
        ctx.send_global(s.target, m);
      } else {
        ctx.send_local(s.edge, m);
      }
    }
    if (next_ == sends.size()) ctx.halt();
  }

 private:
  std::size_t next_ = 0;
};

}  // namespace detail

struct MatvecResult {
  Vector y;
  RoundLedger ledger;
  int rounds_broadcast = 0;
  int rounds_exchange = 0;
  int rounds_collect = 0;
};

/// y = A x for x held at the leaders: broadcast x through each super-node,
/// evaluate every edge term at the host endpoints of its image, and sum the
/// terms of each row back through the super-node.
inline MatvecResult minor_matvec(const MinorDistribution& d, const EdgeOperator& a, const Vector& x, Model model,
                                 const AggregationConfig& cfg = {}) {
  validate_minor(d);
  const WeightedGraph& g = d.minor;
  const WeightedGraph& host = *d.host;
  const NodeId k = g.num_nodes();
  const Partition parts = d.as_partition();
  MatvecResult res;

  // Position of host node z inside super-node s.
  auto pos = [&](NodeId s, NodeId z) {
    const auto& sn = d.super_node[static_cast<std::size_t>(s)];
    return static_cast<std::size_t>(std::lower_bound(sn.begin(), sn.end(), z) - sn.begin());
  };

  PartInputs bcast(parts.parts.size());
  for (NodeId s = 0; s < k; ++s) {
    bcast[static_cast<std::size_t>(s)].assign(parts.parts[static_cast<std::size_t>(s)].size(), AggValue::of(0));
    bcast[static_cast<std::size_t>(s)][pos(s, d.leader[static_cast<std::size_t>(s)])] = AggValue::of(x[s]);
  }
  const auto b = aggregate(model, host, parts, bcast, ops::sum(), cfg, d.leader);
  res.rounds_broadcast = b.ledger.rounds;
  res.ledger = b.ledger;
  auto known = [&](NodeId s, NodeId z) { return b.learned[static_cast<std::size_t>(s)][pos(s, z)].x; };

  // partial[s][position] accumulates row s at each member.
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(k));
  for (NodeId s = 0; s < k; ++s) partial[static_cast<std::size_t>(s)].assign(parts.parts[static_cast<std::size_t>(s)].size(), 0.0);
  for (NodeId s = 0; s < k; ++s) {
    const NodeId l = d.leader[static_cast<std::size_t>(s)];
    partial[static_cast<std::size_t>(s)][pos(s, l)] += a.diag[s] * known(s, l);
  }

  std::vector<detail::ExchangeProgram> programs(static_cast<std::size_t>(host.num_nodes()));
  std::map<std::pair<EdgeId, int>, int> edge_slot;
  std::map<std::pair<int, NodeId>, int> ncc_send, ncc_recv;
  const int cap = std::max(1, detail::global_cap_for(host.num_nodes(), cfg.sim));
  auto in_super = [&](NodeId s, NodeId z) {
    const auto& sn = d.super_node[static_cast<std::size_t>(s)];
    return std::binary_search(sn.begin(), sn.end(), z);
  };
  auto schedule = [&](NodeId from, NodeId to, EdgeId he, std::int64_t tag, double value) {
    detail::ScheduledSend s;
    s.tag = tag;
    s.value = value;
    s.target = to;
    if (model == Model::ncc) {
      int r = 0;
      while (ncc_send[{r, from}] >= cap || ncc_recv[{r, to}] >= cap) ++r;
      ++ncc_send[{r, from}];
      ++ncc_recv[{r, to}];
      s.round = r;
    } else {
      const int dir = host.edge(he).u == from ? 0 : 1;
      s.round = edge_slot[{he, dir}]++;
      s.edge = he;
    }
    programs[static_cast<std::size_t>(from)].sends.push_back(s);
  };
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    const auto& img = d.edge_image[static_cast<std::size_t>(e.id)];
    const double fwd = a.forward[static_cast<std::size_t>(e.id)];
    const double bwd = a.backward[static_cast<std::size_t>(e.id)];
    if (img.is_self_loop()) {
      const NodeId z = img.host_node;
      partial[static_cast<std::size_t>(e.u)][pos(e.u, z)] += fwd * known(e.v, z);
      partial[static_cast<std::size_t>(e.v)][pos(e.v, z)] += bwd * known(e.u, z);
      continue;
    }
    // Host endpoints holding the u side and the v side of the image.
    const auto& he = host.edge(img.host_edge);
    struct {
      NodeId at_u, at_v;
    } sd{he.u, he.v};
    if (!(in_super(e.u, he.u) && in_super(e.v, he.v))) sd = {he.v, he.u};
    if (bwd != 0.0) schedule(sd.at_u, sd.at_v, img.host_edge, 2 * static_cast<std::int64_t>(e.id), known(e.u, sd.at_u));
    if (fwd != 0.0) {
      schedule(sd.at_v, sd.at_u, img.host_edge, 2 * static_cast<std::int64_t>(e.id) + 1, known(e.v, sd.at_v));
    }
  }
  for (auto& p : programs) {
    std::stable_sort(p.sends.begin(), p.sends.end(),
                     [](const detail::ScheduledSend& l, const detail::ScheduledSend& r) { return l.round < r.round; });
  }
  RoundLedger exchange;
  switch (model) {
    case Model::congest: exchange = run_congest(host, programs, cfg.sim); break;
    case Model::ncc: exchange = run_ncc(programs, cfg.sim); break;
    case Model::hybrid: exchange = run_hybrid(host, programs, cfg.sim); break;
    case Model::sequential:
      for (auto& p : programs) {
        for (const auto& s : p.sends) programs[static_cast<std::size_t>(s.target)].received.emplace_back(s.tag, s.value);
      }
      break;
  }
  if (!exchange.dropped.empty()) throw aggregation_error("matvec exchange lost messages");
  res.rounds_exchange = exchange.rounds;
  res.ledger.append(exchange);
  for (NodeId z = 0; z < host.num_nodes(); ++z) {
    for (const auto& [tag, value] : programs[static_cast<std::size_t>(z)].received) {
      const auto& e = g.edge(static_cast<EdgeId>(tag / 2));
      if (tag % 2 == 0) {
        partial[static_cast<std::size_t>(e.v)][pos(e.v, z)] += a.backward[static_cast<std::size_t>(e.id)] * value;
      } else {
        partial[static_cast<std::size_t>(e.u)][pos(e.u, z)] += a.forward[static_cast<std::size_t>(e.id)] * value;
      }
    }
  }

  PartInputs rows(parts.parts.size());
  for (NodeId s = 0; s < k; ++s) {
    for (double v : partial[static_cast<std::size_t>(s)]) rows[static_cast<std::size_t>(s)].push_back(AggValue::of(v));
  }
  const auto c = aggregate(model, host, parts, rows, ops::sum(), cfg, d.leader);
  res.rounds_collect = c.ledger.rounds;
  res.ledger.append(c.ledger);
  res.y = Vector::Zero(k);
  for (NodeId s = 0; s < k; ++s) {
    res.y[s] = c.learned[static_cast<std::size_t>(s)][pos(s, d.leader[static_cast<std::size_t>(s)])].x;
  }
  return res;
}

}  // namespace lapdist

#endif  // LAPDIST_SERVICE_HPP_
