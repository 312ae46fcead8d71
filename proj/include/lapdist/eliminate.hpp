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

#ifndef LAPDIST_ELIMINATE_HPP_
#define LAPDIST_ELIMINATE_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <memory>
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

class eliminate_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double ln_n(NodeId n) { return std::log(std::max<double>(2.0, n)); }

/// Per node: total weight of incident edges whose other endpoint is flagged.
inline std::vector<double> weight_into(const WeightedGraph& g, const std::vector<char>& flag) {
  std::vector<double> out(static_cast<std::size_t>(g.num_nodes()), 0.0);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    if (flag[static_cast<std::size_t>(e.v)]) out[static_cast<std::size_t>(e.u)] += e.weight;
    if (flag[static_cast<std::size_t>(e.u)]) out[static_cast<std::size_t>(e.v)] += e.weight;
  }
  return out;
}

inline std::vector<NodeId> complement(NodeId n, const std::vector<NodeId>& sorted) {
  std::vector<NodeId> out;
  for (NodeId v = 0; v < n; ++v) {
    if (!std::binary_search(sorted.begin(), sorted.end(), v)) out.push_back(v);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Diagonally dominant subsets

struct DDSubset {
  std::vector<NodeId> f;       // ascending
  double alpha = 4.0;
  std::vector<double> slack;   // per member: M_ii - (1 + alpha) sum_{j in F, j != i} |M_ij|
  int attempts = 1;            // 1 + failed size checks
  int extension_rounds = 0;
};

/// Row-wise certificate for F in L(G); negative entries are violations.
inline std::vector<double> dd_slack(const WeightedGraph& g, const std::vector<NodeId>& f, double alpha) {
  std::vector<char> in(static_cast<std::size_t>(g.num_nodes()), 0);
  for (NodeId v : f) in[static_cast<std::size_t>(v)] = 1;
  const auto inner = detail::weight_into(g, in);
  std::vector<double> out;
  for (NodeId v : f) out.push_back(g.weighted_degree(v) - (1.0 + alpha) * inner[static_cast<std::size_t>(v)]);
  return out;
}

/// Same certificate on an explicit symmetric matrix.
inline std::vector<double> dd_slack(const DenseMatrix& m, const std::vector<NodeId>& f, double alpha) {
  std::vector<double> out;
  for (NodeId i : f) {
    double s = 0.0;
    for (NodeId j : f) {
      if (j != i) s += std::abs(m(i, j));
    }
    out.push_back(m(i, i) - (1.0 + alpha) * s);
  }
  return out;
}

struct DDOptions {
  double sample_prob = 0.0;  // 0: 1 / (4 (1 + alpha))
  bool extend = true;
  int max_attempts = 10;
};

/// Random sample filtered to an alpha-DD set, then grown in independent
/// rounds: a candidate joins when it beats its candidate neighbours'
/// priorities and every affected row keeps non-negative slack.
inline DDSubset find_dd_subset(const WeightedGraph& g, double alpha, std::uint64_t seed, const DDOptions& opt = {}) {
  const NodeId n = g.num_nodes();
  const double p = opt.sample_prob > 0.0 ? opt.sample_prob : 1.0 / (4.0 * (1.0 + alpha));
  const double need = static_cast<double>(n) / (8.0 * (1.0 + alpha));
  std::vector<double> deg(static_cast<std::size_t>(n));
  for (NodeId v = 0; v < n; ++v) deg[static_cast<std::size_t>(v)] = g.weighted_degree(v);
  DDSubset best;
  best.alpha = alpha;
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<char> sampled(static_cast<std::size_t>(n), 0);
    for (NodeId v = 0; v < n; ++v) sampled[static_cast<std::size_t>(v)] = unif(rng) < p ? 1 : 0;
    const auto into_s = detail::weight_into(g, sampled);
    std::vector<char> in(static_cast<std::size_t>(n), 0);
    for (NodeId v = 0; v < n; ++v) {
      const auto vi = static_cast<std::size_t>(v);
      in[vi] = sampled[vi] && deg[vi] >= (1.0 + alpha) * into_s[vi] ? 1 : 0;
    }
    int rounds = 0;
    if (opt.extend) {
      const int max_rounds = 2 * static_cast<int>(std::ceil(std::log2(std::max<double>(2.0, n)))) + 2;
      for (; rounds < max_rounds; ++rounds) {
        const auto into_f = detail::weight_into(g, in);
        std::vector<double> slack(static_cast<std::size_t>(n), 0.0);
        for (NodeId v = 0; v < n; ++v) {
          slack[static_cast<std::size_t>(v)] = deg[static_cast<std::size_t>(v)] - (1.0 + alpha) * into_f[static_cast<std::size_t>(v)];
        }
        // Candidate: outside F and would itself be dominant.
        std::vector<double> prio(static_cast<std::size_t>(n), -1.0);
        for (NodeId v = 0; v < n; ++v) {
          const auto vi = static_cast<std::size_t>(v);
          if (in[vi] || slack[vi] < 0.0) continue;
          bool fits = true;
          for (const auto& inc : g.incident(v)) {
            if (inc.other == v || !in[static_cast<std::size_t>(inc.other)]) continue;
            if (slack[static_cast<std::size_t>(inc.other)] < (1.0 + alpha) * g.edge(inc.edge).weight) fits = false;
          }
          if (fits) prio[vi] = unif(rng);
        }
        std::vector<char> join(static_cast<std::size_t>(n), 0);
        bool any = false;
        for (NodeId v = 0; v < n; ++v) {
          const auto vi = static_cast<std::size_t>(v);
          if (prio[vi] < 0.0) continue;
          bool top = true;
          for (const auto& inc : g.incident(v)) {
            const NodeId u = inc.other;
            if (u != v && prio[static_cast<std::size_t>(u)] >= 0.0 &&
                (prio[static_cast<std::size_t>(u)] > prio[vi] || (prio[static_cast<std::size_t>(u)] == prio[vi] && u < v))) {
              top = false;
            }
          }
          join[vi] = top ? 1 : 0;
          any = any || top;
        }
        if (!any) break;
        // Members adjacent to several joiners: drop those joiners if the
        // combined load breaks the member's row.
        const auto into_join = detail::weight_into(g, join);
        for (NodeId u = 0; u < n; ++u) {
          const auto ui = static_cast<std::size_t>(u);
          if (!in[ui] || slack[ui] >= (1.0 + alpha) * into_join[ui]) continue;
          for (const auto& inc : g.incident(u)) join[static_cast<std::size_t>(inc.other)] = 0;
        }
        bool grew = false;
        for (NodeId v = 0; v < n; ++v) {
          if (join[static_cast<std::size_t>(v)]) {
            in[static_cast<std::size_t>(v)] = 1;
            grew = true;
          }
        }
        if (!grew) break;
      }
    }
    DDSubset cur;
    cur.alpha = alpha;
    for (NodeId v = 0; v < n; ++v) {
      if (in[static_cast<std::size_t>(v)]) cur.f.push_back(v);
    }
    cur.slack = dd_slack(g, cur.f, alpha);
    cur.attempts = attempt + 1;
    cur.extension_rounds = rounds;
    for (double s : cur.slack) {
      if (s < -1e-9 * (1.0 + std::abs(s))) throw eliminate_error("find_dd_subset produced a non-dominant row");
    }
    if (static_cast<double>(cur.f.size()) >= need) return cur;
    if (cur.f.size() >= best.f.size()) best = cur;
  }
  throw eliminate_error("find_dd_subset: size bound n/(8(1+alpha)) missed after " + std::to_string(opt.max_attempts) +
                        " attempts (best " + std::to_string(best.f.size()) + ")");
}

// ---------------------------------------------------------------------------
// Truncated Jacobi inverse

/// Odd number of series terms t = ceil(c_j log2(1/eps)) rounded up to odd.
inline int jacobi_terms(double eps, double c_j = 2.0) {
  if (!(eps > 0.0)) throw std::invalid_argument("jacobi_terms: eps must be positive");
  int t = eps >= 1.0 ? 1 : static_cast<int>(std::ceil(c_j * std::log2(1.0 / eps)));
  if (t % 2 == 0) ++t;
  return t;
}

/// Block elimination of F with Z = sum_{i=0}^{t} (D^-1 A)^i D^-1 standing
/// in for L_FF^-1, where L_FF = D - A.
class JacobiReduction : public SchurReduction {
 public:
  JacobiReduction(const WeightedGraph& g, std::vector<NodeId> f, int terms, double alpha = 4.0)
      : n_(g.num_nodes()), f_(std::move(f)), terms_(terms) {
    if (alpha < 4.0) throw std::invalid_argument("JacobiReduction: alpha must be at least 4");
    std::sort(f_.begin(), f_.end());
    kept_ = detail::complement(n_, f_);
    for (double s : dd_slack(g, f_, alpha)) {
      if (s < -1e-9 * (1.0 + std::abs(s))) throw std::invalid_argument("JacobiReduction: F is not alpha-DD");
    }
    std::vector<NodeId> fpos(static_cast<std::size_t>(n_), kNoNode), cpos(static_cast<std::size_t>(n_), kNoNode);
    for (std::size_t i = 0; i < f_.size(); ++i) fpos[static_cast<std::size_t>(f_[i])] = static_cast<NodeId>(i);
    for (std::size_t i = 0; i < kept_.size(); ++i) cpos[static_cast<std::size_t>(kept_[i])] = static_cast<NodeId>(i);
    diag_ = Vector::Zero(static_cast<Eigen::Index>(f_.size()));
    for (const auto& e : g.edges()) {
      if (e.is_self_loop()) continue;
      const NodeId fu = fpos[static_cast<std::size_t>(e.u)], fv = fpos[static_cast<std::size_t>(e.v)];
      if (fu != kNoNode) diag_[fu] += e.weight;
      if (fv != kNoNode) diag_[fv] += e.weight;
      if (fu != kNoNode && fv != kNoNode) {
        ff_.push_back({fu, fv, e.weight});
      } else if (fu != kNoNode) {
        cf_.push_back({cpos[static_cast<std::size_t>(e.v)], fu, e.weight});
      } else if (fv != kNoNode) {
        cf_.push_back({cpos[static_cast<std::size_t>(e.u)], fv, e.weight});
      }
    }
  }

  NodeId size() const override { return n_; }
  const std::vector<NodeId>& kept() const override { return kept_; }
  const std::vector<NodeId>& eliminated() const { return f_; }
  int terms() const { return terms_; }
  int aggregations_per_apply() const override { return 2 * (terms_ + 1) + 2; }

  /// Z b on the F block.
  Vector apply_z(const Vector& b) const {
    Vector y = b.cwiseQuotient(diag_);
    Vector acc = y;
    for (int i = 0; i < terms_; ++i) {
      Vector ay = Vector::Zero(y.size());
      for (const auto& [a, b2, w] : ff_) {
        ay[a] += w * y[b2];
        ay[b2] += w * y[a];
      }
      y = ay.cwiseQuotient(diag_);
      acc += y;
    }
    return acc;
  }

  Vector reduce(const Vector& b, std::vector<Vector>& carry) const override {
    Vector bf(static_cast<Eigen::Index>(f_.size())), bc(static_cast<Eigen::Index>(kept_.size()));
    for (std::size_t i = 0; i < f_.size(); ++i) bf[static_cast<Eigen::Index>(i)] = b[f_[i]];
    for (std::size_t i = 0; i < kept_.size(); ++i) bc[static_cast<Eigen::Index>(i)] = b[kept_[i]];
    if (!f_.empty()) {
      const Vector z = apply_z(bf);
      for (const auto& [c, f, w] : cf_) bc[c] += w * z[f];
    }
    carry.push_back(std::move(bf));
    return bc;
  }

  Vector lift(std::vector<Vector>& carry, const Vector& xc) const override {
    Vector r = std::move(carry.back());
    carry.pop_back();
    Vector x(n_);
    for (std::size_t i = 0; i < kept_.size(); ++i) x[kept_[i]] = xc[static_cast<Eigen::Index>(i)];
    if (!f_.empty()) {
      for (const auto& [c, f, w] : cf_) r[f] += w * xc[c];
      const Vector xf = apply_z(r);
      for (std::size_t i = 0; i < f_.size(); ++i) x[f_[i]] = xf[static_cast<Eigen::Index>(i)];
    }
    return x;
  }

 private:
  struct Entry {
    NodeId a, b;
    double w;
  };
  NodeId n_;
  std::vector<NodeId> f_, kept_;
  int terms_;
  Vector diag_;
  std::vector<Entry> ff_;  // F-F edges (local F indices)
  std::vector<Entry> cf_;  // (kept index, F index, weight)
};

/// Z b for the alpha-DD set F of L(G), Z the truncated Jacobi series.
inline Vector jacobi_apply(const WeightedGraph& g, const std::vector<NodeId>& f, double eps, const Vector& b,
                           double alpha = 4.0) {
  return JacobiReduction(g, f, jacobi_terms(eps), alpha).apply_z(b);
}

// ---------------------------------------------------------------------------
// Random walks to terminals

struct WalkRecord {
  EdgeId edge = kNoEdge;
  std::vector<NodeId> from_u, from_v;  // start at the endpoint, end at a terminal
  double res_u = 0.0, res_v = 0.0;     // resistance along each walk
};

struct WalkBundle {
  int mu = 0;
  std::vector<WalkRecord> walks;      // edges with a non-terminal endpoint, mu each
  std::vector<std::int64_t> congestion;  // occurrences per node over all walks
  std::int64_t restarts = 0;
  int max_length = 0;
};

namespace detail {

/// Neighbour sampler proportional to edge weight.
class StepSampler {
 public:
  explicit StepSampler(const WeightedGraph& g) : g_(&g), cum_(static_cast<std::size_t>(g.num_nodes())) {
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      double s = 0.0;
      for (const auto& inc : g.incident(v)) {
        if (inc.other != v) s += g.edge(inc.edge).weight;
        cum_[static_cast<std::size_t>(v)].push_back(s);
      }
    }
  }

  /// (next node, resistance of the edge taken).
  std::pair<NodeId, double> step(NodeId v, std::mt19937_64& rng) const {
    const auto& c = cum_[static_cast<std::size_t>(v)];
    if (c.empty() || c.back() <= 0.0) throw eliminate_error("random walk stuck at an isolated node");
    const double r = std::uniform_real_distribution<double>(0.0, c.back())(rng);
    auto idx = static_cast<std::size_t>(std::upper_bound(c.begin(), c.end(), r) - c.begin());
    idx = std::min(idx, c.size() - 1);
    const auto inc = g_->incident(v)[idx];
    if (inc.other == v) return step(v, rng);
    return {inc.other, g_->edge(inc.edge).resistance()};
  }

 private:
  const WeightedGraph* g_;
  std::vector<std::vector<double>> cum_;
};

struct WalkLimits {
  int cap_len = 1000;
  std::int64_t restart_budget = 0;  // 0: unlimited
};

/// Walk from `start` until a terminal; restarts when longer than the cap.
inline void walk_to_terminal(const StepSampler& s, const std::vector<char>& terminal, NodeId start, std::mt19937_64& rng,
                             const WalkLimits& lim, std::int64_t& restarts, std::vector<NodeId>& path, double& res) {
  for (;;) {
    path.assign(1, start);
    res = 0.0;
    NodeId v = start;
    bool ok = true;
    while (!terminal[static_cast<std::size_t>(v)]) {
      if (static_cast<int>(path.size()) > lim.cap_len) {
        ok = false;
        break;
      }
      auto [next, r] = s.step(v, rng);
      v = next;
      res += r;
      path.push_back(v);
    }
    if (ok) return;
    ++restarts;
    if (lim.restart_budget > 0 && restarts > lim.restart_budget) throw eliminate_error("random walk restart budget exhausted");
  }
}

/// Streams mu walk pairs for every edge with a non-terminal endpoint.
template <class Sink>
void for_each_walk(const WeightedGraph& g, const std::vector<char>& terminal, int mu, const WalkLimits& lim,
                   std::uint64_t seed, std::int64_t& restarts, Sink&& sink) {
  const StepSampler sampler(g);
  std::mt19937_64 rng(seed);
  WalkRecord rec;
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    if (terminal[static_cast<std::size_t>(e.u)] && terminal[static_cast<std::size_t>(e.v)]) continue;
    rec.edge = e.id;
    for (int r = 0; r < mu; ++r) {
      walk_to_terminal(sampler, terminal, e.u, rng, lim, restarts, rec.from_u, rec.res_u);
      walk_to_terminal(sampler, terminal, e.v, rng, lim, restarts, rec.from_v, rec.res_v);
      sink(static_cast<const WalkRecord&>(rec));
    }
  }
}

}  // namespace detail

inline std::vector<char> terminal_flags(NodeId n, const std::vector<NodeId>& t) {
  std::vector<char> out(static_cast<std::size_t>(n), 0);
  for (NodeId v : t) out[static_cast<std::size_t>(v)] = 1;
  return out;
}

inline WalkBundle simulate_hitting_walks(const WeightedGraph& g, const std::vector<NodeId>& t, int mu, int cap_len,
                                         std::uint64_t seed, std::int64_t restart_budget = 0) {
  if (t.empty()) throw std::invalid_argument("simulate_hitting_walks: empty terminal set");
  WalkBundle b;
  b.mu = mu;
  b.congestion.assign(static_cast<std::size_t>(g.num_nodes()), 0);
  const auto flags = terminal_flags(g.num_nodes(), t);
  detail::for_each_walk(g, flags, mu, {cap_len, restart_budget}, seed, b.restarts, [&](const WalkRecord& r) {
    for (NodeId x : r.from_u) ++b.congestion[static_cast<std::size_t>(x)];
    for (NodeId x : r.from_v) ++b.congestion[static_cast<std::size_t>(x)];
    b.max_length = std::max({b.max_length, static_cast<int>(r.from_u.size()) - 1, static_cast<int>(r.from_v.size()) - 1});
    b.walks.push_back(r);
  });
  return b;
}

namespace detail {

/// Accumulates walk estimates into pair weights on terminal indices.
struct PairWeights {
  std::map<std::pair<NodeId, NodeId>, double> w;

  void add(NodeId a, NodeId b, double x) {
    if (a == b) return;
    if (a > b) std::swap(a, b);
    w[{a, b}] += x;
  }

  WeightedGraph graph(NodeId k, double drop = 0.0) const {
    WeightedGraph h(k);
    for (const auto& [ab, x] : w) {
      if (x > drop) h.add_edge(ab.first, ab.second, x);
    }
    return h;
  }
};

inline void add_walk(PairWeights& pw, const std::vector<NodeId>& index, const WeightedGraph& g, const WalkRecord& r, int mu) {
  const double res = r.res_u + g.edge(r.edge).resistance() + r.res_v;
  pw.add(index[static_cast<std::size_t>(r.from_u.back())], index[static_cast<std::size_t>(r.from_v.back())],
         1.0 / (static_cast<double>(mu) * res));
}

inline void add_terminal_edges(PairWeights& pw, const std::vector<NodeId>& index, const WeightedGraph& g,
                               const std::vector<char>& terminal) {
  for (const auto& e : g.edges()) {
    if (e.is_self_loop() || !terminal[static_cast<std::size_t>(e.u)] || !terminal[static_cast<std::size_t>(e.v)]) continue;
    pw.add(index[static_cast<std::size_t>(e.u)], index[static_cast<std::size_t>(e.v)], e.weight);
  }
}

inline std::vector<NodeId> index_of(NodeId n, const std::vector<NodeId>& t) {
  std::vector<NodeId> idx(static_cast<std::size_t>(n), kNoNode);
  for (std::size_t i = 0; i < t.size(); ++i) idx[static_cast<std::size_t>(t[i])] = static_cast<NodeId>(i);
  return idx;
}

}  // namespace detail

/// Graph on the terminals (node i = t[i]) from a walk bundle: each walk
/// pair through edge e adds 1 / (mu * total resistance) between its two
/// terminals; terminal-terminal edges are copied.
inline WeightedGraph walk_schur_laplacian(const WeightedGraph& g, const std::vector<NodeId>& t, const WalkBundle& b) {
  const auto flags = terminal_flags(g.num_nodes(), t);
  const auto index = detail::index_of(g.num_nodes(), t);
  detail::PairWeights pw;
  detail::add_terminal_edges(pw, index, g, flags);
  for (const auto& r : b.walks) detail::add_walk(pw, index, g, r, b.mu);
  return pw.graph(static_cast<NodeId>(t.size()));
}

// ---------------------------------------------------------------------------
// Schur complement by random walks, with congestion capping

struct RandWalkOptions {
  double alpha = 4.0;
  double mu_boost = 1.0;
  double cap_factor = 8.0;  // cap_len = cap_factor / alpha * ln n
  std::int64_t restart_budget = 0;  // 0: 1 + walks / 100
};

struct RandWalkResult {
  WeightedGraph h;              // on t_hat (node i = t_hat[i])
  std::vector<NodeId> t_hat;    // ascending ids of the input minor
  std::vector<NodeId> augmented;  // members of F promoted for congestion
  MinorDistribution dist;       // h into the host
  MinorDistribution dist_in_g;  // h into the input minor
  int mu = 0;
  int cap_len = 0;
  std::int64_t restarts = 0;
  std::int64_t walks = 0;
  std::int64_t max_congestion = 0;  // over nodes outside t_hat
  std::vector<double> predicted;    // pre-estimated visits per node
  int max_length = 0;
  std::int64_t rounds = 0;
  std::int64_t aggregations = 0;
};

inline int walk_repetitions(NodeId n, double eps, double boost = 1.0) {
  return static_cast<int>(std::ceil(4.0 * detail::ln_n(n) / (eps * eps) * boost));
}

inline double default_gamma(NodeId n, double eps, double alpha = 4.0, double scale = 1.0) {
  return scale * 1000.0 / alpha * std::pow(detail::ln_n(n), 8) / std::pow(eps, 4);
}

/// SC(G, T-hat) estimate where T = V \ F and T-hat adds the nodes of F whose
/// expected walk load exceeds gamma. gamma <= 0 returns G itself on V.
inline RandWalkResult randwalk_schur(const MinorDistribution& dist, const std::vector<NodeId>& f_in, double eps,
                                     double gamma, std::uint64_t seed, AggregationService& service,
                                     const RandWalkOptions& opt = {}) {
  const WeightedGraph& g = dist.minor;
  const NodeId n = g.num_nodes();
  std::vector<NodeId> f = f_in;
  std::sort(f.begin(), f.end());
  RandWalkResult res;
  res.mu = walk_repetitions(n, eps, opt.mu_boost);
  res.cap_len = std::max(2, static_cast<int>(std::ceil(opt.cap_factor / opt.alpha * detail::ln_n(n))));
  std::vector<char> terminal(static_cast<std::size_t>(n), 1);
  for (NodeId v : f) terminal[static_cast<std::size_t>(v)] = 0;
  res.predicted.assign(static_cast<std::size_t>(n), 0.0);

  if (gamma <= 0.0) {
    res.augmented = f;
    std::fill(terminal.begin(), terminal.end(), 1);
  } else if (!f.empty()) {
    // Expected visits: mu walks leave each endpoint of every edge at an F
    // node; mass moves to F neighbours with the walk's step probabilities.
    std::vector<double> mass(static_cast<std::size_t>(n), 0.0);
    for (NodeId v : f) mass[static_cast<std::size_t>(v)] = static_cast<double>(res.mu) * static_cast<double>(g.degree(v));
    for (int step = 0; step <= res.cap_len; ++step) {
      std::vector<double> next(static_cast<std::size_t>(n), 0.0);
      for (NodeId v : f) {
        const auto vi = static_cast<std::size_t>(v);
        res.predicted[vi] += mass[vi];
        if (mass[vi] == 0.0) continue;
        const double d = g.weighted_degree(v);
        for (const auto& inc : g.incident(v)) {
          if (inc.other == v || terminal[static_cast<std::size_t>(inc.other)]) continue;
          next[static_cast<std::size_t>(inc.other)] += mass[vi] * g.edge(inc.edge).weight / d;
        }
      }
      mass.swap(next);
    }
    for (NodeId v : f) {
      if (res.predicted[static_cast<std::size_t>(v)] > gamma) {
        res.augmented.push_back(v);
        terminal[static_cast<std::size_t>(v)] = 1;
      }
    }
    res.aggregations += res.cap_len + 1;
  }
  for (NodeId v = 0; v < n; ++v) {
    if (terminal[static_cast<std::size_t>(v)]) res.t_hat.push_back(v);
  }
  if (res.t_hat.empty()) throw eliminate_error("randwalk_schur: no terminals left");
  const auto index = detail::index_of(n, res.t_hat);
  const auto k = static_cast<NodeId>(res.t_hat.size());

  detail::PairWeights pw;
  detail::add_terminal_edges(pw, index, g, terminal);
  std::vector<std::vector<char>> member(static_cast<std::size_t>(k), std::vector<char>(static_cast<std::size_t>(n), 0));
  for (NodeId i = 0; i < k; ++i) member[static_cast<std::size_t>(i)][static_cast<std::size_t>(res.t_hat[static_cast<std::size_t>(i)])] = 1;
  std::vector<std::int64_t> congestion(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<std::int64_t>> tokens;  // [step][node]
  std::int64_t walk_count = 0;
  for (const auto& e : g.edges()) {
    if (!e.is_self_loop() && !(terminal[static_cast<std::size_t>(e.u)] && terminal[static_cast<std::size_t>(e.v)])) walk_count += 2 * res.mu;
  }
  detail::WalkLimits lim{res.cap_len, opt.restart_budget > 0 ? opt.restart_budget : 1 + walk_count / 100};
  auto record = [&](const std::vector<NodeId>& path) {
    const NodeId t = index[static_cast<std::size_t>(path.back())];
    auto& m = member[static_cast<std::size_t>(t)];
    for (std::size_t s = 0; s < path.size(); ++s) {
      const auto x = static_cast<std::size_t>(path[s]);
      m[x] = 1;
      ++congestion[x];
      if (tokens.size() <= s) tokens.emplace_back(static_cast<std::size_t>(n), 0);
      ++tokens[s][x];
    }
    res.max_length = std::max(res.max_length, static_cast<int>(path.size()) - 1);
  };
  detail::for_each_walk(g, terminal, res.mu, lim, seed, res.restarts, [&](const WalkRecord& r) {
    detail::add_walk(pw, index, g, r, res.mu);
    record(r.from_u);
    record(r.from_v);
  });
  res.walks = walk_count;
  res.h = pw.graph(k);
  for (NodeId v = 0; v < n; ++v) {
    if (!terminal[static_cast<std::size_t>(v)]) res.max_congestion = std::max(res.max_congestion, congestion[static_cast<std::size_t>(v)]);
  }

  // Each terminal absorbs the nodes on walks that ended at it.
  std::vector<std::vector<NodeId>> parts(static_cast<std::size_t>(k));
  for (NodeId i = 0; i < k; ++i) {
    for (NodeId x = 0; x < n; ++x) {
      if (member[static_cast<std::size_t>(i)][static_cast<std::size_t>(x)]) parts[static_cast<std::size_t>(i)].push_back(x);
    }
  }
  auto gp = std::make_shared<const WeightedGraph>(g);
  res.dist_in_g = make_minor_from_parts(res.h, gp, std::move(parts));
  for (NodeId i = 0; i < k; ++i) res.dist_in_g.leader[static_cast<std::size_t>(i)] = res.t_hat[static_cast<std::size_t>(i)];
  for (NodeId i = 0; i < k; ++i) {
    res.dist_in_g.tree[static_cast<std::size_t>(i)] = detail::stitch_tree(
        *gp, res.dist_in_g.super_node[static_cast<std::size_t>(i)], res.dist_in_g.tree[static_cast<std::size_t>(i)],
        res.t_hat[static_cast<std::size_t>(i)]);
  }
  res.dist = compose_minors(res.dist_in_g, dist);

  // Each walk step moves every token once; a node holding c tokens needs c
  // aggregation batches in that step.
  for (const auto& row : tokens) res.aggregations += std::max<std::int64_t>(1, *std::max_element(row.begin(), row.end()));
  res.rounds = service.charge(dist, res.aggregations);
  return res;
}

// ---------------------------------------------------------------------------
// Spectral sparsification

enum class SparsifyEngine { spanner, resistance };

inline SparsifyEngine parse_sparsify_engine(const std::string& s) {
  if (s == "spanner") return SparsifyEngine::spanner;
  if (s == "resistance") return SparsifyEngine::resistance;
  throw std::invalid_argument("unknown sparsify engine '" + s + "'");
}

inline std::string to_string(SparsifyEngine e) { return e == SparsifyEngine::spanner ? "spanner" : "resistance"; }

struct SparsifyOptions {
  SparsifyEngine engine = SparsifyEngine::spanner;
  double scale = 1.0;  // multiplies the bundle size / oversampling
  std::uint64_t seed = 1;
};

struct SparsifyResult {
  WeightedGraph h;
  std::vector<EdgeId> source_edge;  // per edge of h
  MinorDistribution dist;
  double edge_bound = 0.0;          // n ln^6 n / eps^2
  int iterations = 0;
  int spanners = 0;
  std::int64_t rounds = 0;
};

namespace detail {

/// Baswana-Sen spanner (stretch 2k-1) of the edges flagged `alive`, with
/// lengths 1/w. Returns the chosen edge ids; `levels` counts cluster phases.
inline std::vector<EdgeId> baswana_sen(const WeightedGraph& g, const std::vector<char>& alive, int k, std::mt19937_64& rng) {
  const NodeId n = g.num_nodes();
  std::vector<NodeId> cluster(static_cast<std::size_t>(n));
  std::iota(cluster.begin(), cluster.end(), 0);
  std::vector<char> live = alive;
  std::vector<char> chosen(g.num_edges(), 0);
  const double p = std::pow(std::max<double>(2.0, n), -1.0 / k);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto length = [&](EdgeId e) { return g.edge(e).resistance(); };
  for (int level = 1; level < k; ++level) {
    std::map<NodeId, bool> sampled;
    for (NodeId v = 0; v < n; ++v) {
      const NodeId c = cluster[static_cast<std::size_t>(v)];
      if (c != kNoNode && !sampled.count(c)) sampled[c] = unif(rng) < p;
    }
    std::vector<NodeId> next(static_cast<std::size_t>(n), kNoNode);
    for (NodeId v = 0; v < n; ++v) {
      const NodeId c = cluster[static_cast<std::size_t>(v)];
      if (c != kNoNode && sampled[c]) next[static_cast<std::size_t>(v)] = c;
    }
    for (NodeId v = 0; v < n; ++v) {
      const NodeId cv = cluster[static_cast<std::size_t>(v)];
      if (cv == kNoNode || sampled[cv]) continue;
      // Lightest edge into each neighbouring cluster.
      std::map<NodeId, EdgeId> best;
      for (const auto& inc : g.incident(v)) {
        if (!live[static_cast<std::size_t>(inc.edge)] || inc.other == v) continue;
        const NodeId c = cluster[static_cast<std::size_t>(inc.other)];
        if (c == kNoNode || c == cv) continue;
        auto it = best.find(c);
        if (it == best.end() || length(inc.edge) < length(it->second)) best[c] = inc.edge;
      }
      NodeId star = kNoNode;
      for (const auto& [c, e] : best) {
        if (sampled[c] && (star == kNoNode || length(e) < length(best[star]))) star = c;
      }
      std::vector<NodeId> drop;
      if (star == kNoNode) {
        for (const auto& [c, e] : best) {
          chosen[static_cast<std::size_t>(e)] = 1;
          drop.push_back(c);
        }
      } else {
        const double ls = length(best[star]);
        chosen[static_cast<std::size_t>(best[star])] = 1;
        next[static_cast<std::size_t>(v)] = star;
        drop.push_back(star);
        for (const auto& [c, e] : best) {
          if (c != star && length(e) < ls) {
            chosen[static_cast<std::size_t>(e)] = 1;
            drop.push_back(c);
          }
        }
      }
      for (const auto& inc : g.incident(v)) {
        const NodeId c = cluster[static_cast<std::size_t>(inc.other)];
        if (std::find(drop.begin(), drop.end(), c) != drop.end()) live[static_cast<std::size_t>(inc.edge)] = 0;
      }
    }
    cluster.swap(next);
    // Edges inside a cluster are no longer needed.
    for (const auto& e : g.edges()) {
      const NodeId a = cluster[static_cast<std::size_t>(e.u)], b = cluster[static_cast<std::size_t>(e.v)];
      if (a != kNoNode && a == b) live[static_cast<std::size_t>(e.id)] = 0;
    }
  }
  for (NodeId v = 0; v < n; ++v) {
    std::map<NodeId, EdgeId> best;
    for (const auto& inc : g.incident(v)) {
      if (!live[static_cast<std::size_t>(inc.edge)] || inc.other == v) continue;
      const NodeId c = cluster[static_cast<std::size_t>(inc.other)];
      const NodeId key = c == kNoNode ? -1 - inc.other : c;
      auto it = best.find(key);
      if (it == best.end() || length(inc.edge) < length(it->second)) best[key] = inc.edge;
    }
    for (const auto& [c, e] : best) chosen[static_cast<std::size_t>(e)] = 1;
  }
  std::vector<EdgeId> out;
  for (EdgeId e = 0; e < static_cast<EdgeId>(g.num_edges()); ++e) {
    if (chosen[static_cast<std::size_t>(e)]) out.push_back(e);
  }
  return out;
}

}  // namespace detail

/// Reweighted edge subset of dist.minor spectrally close to it. The spanner
/// engine keeps a bundle of t spanners and samples the rest at rate 1/4
/// (weight x4), repeating on the sampled remainder; the resistance engine
/// keeps each edge with p = min(1, 4 scale lev ln n / eps^2) at weight w/p.
inline SparsifyResult spectral_sparsify(const MinorDistribution& dist, double eps, AggregationService& service,
                                        const SparsifyOptions& opt = {}) {
  const WeightedGraph& g = dist.minor;
  const NodeId n = g.num_nodes();
  const double logn = detail::ln_n(n);
  SparsifyResult res;
  res.edge_bound = static_cast<double>(n) * std::pow(logn, 6) / (eps * eps);
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> weight(g.num_edges(), 0.0);
  std::int64_t aggregations = 0;
  if (opt.engine == SparsifyEngine::resistance) {
    const auto lev = leverage_scores_exact(g);
    for (const auto& e : g.edges()) {
      if (e.is_self_loop()) continue;
      const double p = std::min(1.0, 4.0 * opt.scale * lev[static_cast<std::size_t>(e.id)] * logn / (eps * eps));
      if (p > 0.0 && unif(rng) < p) weight[static_cast<std::size_t>(e.id)] = e.weight / p;
    }
    res.iterations = 1;
    aggregations = static_cast<std::int64_t>(std::ceil(logn / (eps * eps)));
  } else {
    const int k = std::max(1, static_cast<int>(std::ceil(std::log2(std::max<double>(2.0, n)))));
    const int t = std::max(1, static_cast<int>(std::ceil(opt.scale * 24.0 * logn * logn / (eps * eps))));
    std::vector<double> scale(g.num_edges(), 1.0);
    std::vector<char> alive(g.num_edges(), 0);
    for (const auto& e : g.edges()) alive[static_cast<std::size_t>(e.id)] = e.is_self_loop() ? 0 : 1;
    const int max_iter = std::max(1, static_cast<int>(std::ceil(std::log2(std::max<double>(2.0, g.num_edges())))));
    for (int it = 0; it < max_iter; ++it) {
      ++res.iterations;
      std::vector<char> rest = alive;
      bool remaining = false;
      for (int s = 0; s < t; ++s) {
        bool any = false;
        for (char a : rest) any = any || a;
        if (!any) break;
        ++res.spanners;
        aggregations += k;
        for (EdgeId e : detail::baswana_sen(g, rest, k, rng)) {
          weight[static_cast<std::size_t>(e)] = g.edge(e).weight * scale[static_cast<std::size_t>(e)];
          rest[static_cast<std::size_t>(e)] = 0;
        }
      }
      for (char a : rest) remaining = remaining || a;
      if (!remaining) break;
      // Outside the bundle: keep with probability 1/4 at four times the weight.
      for (EdgeId e = 0; e < static_cast<EdgeId>(g.num_edges()); ++e) {
        alive[static_cast<std::size_t>(e)] = 0;
        if (!rest[static_cast<std::size_t>(e)]) continue;
        if (unif(rng) < 0.25) {
          scale[static_cast<std::size_t>(e)] *= 4.0;
          alive[static_cast<std::size_t>(e)] = 1;
        }
      }
      if (it + 1 == max_iter) {
        for (EdgeId e = 0; e < static_cast<EdgeId>(g.num_edges()); ++e) {
          if (alive[static_cast<std::size_t>(e)]) weight[static_cast<std::size_t>(e)] = g.edge(e).weight * scale[static_cast<std::size_t>(e)];
        }
      }
    }
  }
  res.h = WeightedGraph(n);
  for (const auto& e : g.edges()) {
    if (weight[static_cast<std::size_t>(e.id)] <= 0.0) continue;
    res.h.add_edge(e.u, e.v, weight[static_cast<std::size_t>(e.id)]);
    res.source_edge.push_back(e.id);
  }
  res.dist.minor = res.h;
  res.dist.host = dist.host;
  res.dist.super_node = dist.super_node;
  res.dist.leader = dist.leader;
  res.dist.tree = dist.tree;
  res.dist.rho = dist.rho;
  for (EdgeId e : res.source_edge) res.dist.edge_image.push_back(dist.edge_image[static_cast<std::size_t>(e)]);
  res.rounds = service.charge(dist, aggregations);
  return res;
}

// ---------------------------------------------------------------------------
// Eliminate

struct EliminateOptions {
  double alpha = 4.0;
  double gamma_scale = 1.0;
  double gamma = -1.0;        // explicit gamma when >= 0; otherwise the default formula
  double walk_eps_share = 0.5;
  double jacobi_eps_share = 0.25;
  double sparsify_eps_share = 0.25;
  bool sparsify = true;
  SparsifyOptions sparsifier;
  RandWalkOptions walks;
  int max_retries = 3;
};

struct EliminateRound {
  NodeId nodes_before = 0;
  NodeId nodes_after = 0;
  std::size_t dd_size = 0;
  std::size_t augmented = 0;
  std::int64_t max_congestion = 0;
  std::int64_t restarts = 0;
  int jacobi_terms = 0;
  int retries = 0;
  std::size_t edges_after = 0;
};

struct EliminateResult {
  std::shared_ptr<ComposedReduction> reduction;  // on the nodes of dist.minor
  std::vector<NodeId> terminals;                 // ids of dist.minor, in reduction order
  WeightedGraph graph;                           // on terminals (node i = terminals[i])
  MinorDistribution dist;                        // graph into the host
  std::vector<EliminateRound> rounds_info;
  std::int64_t rounds = 0;
  std::int64_t max_congestion = 0;
  int max_rho = 1;
};

/// d rounds of: alpha-DD subset, random-walk Schur complement onto the rest
/// (plus congested nodes), truncated Jacobi for the eliminated block, and
/// spectral sparsification of the new graph.
inline EliminateResult eliminate(const MinorDistribution& dist, int d, double eps, std::uint64_t seed,
                                 AggregationService& service, const EliminateOptions& opt = {}) {
  EliminateResult res;
  const NodeId n0 = dist.minor.num_nodes();
  res.reduction = std::make_shared<ComposedReduction>(n0);
  res.terminals.resize(static_cast<std::size_t>(n0));
  std::iota(res.terminals.begin(), res.terminals.end(), 0);
  res.graph = dist.minor;
  res.dist = dist;
  res.max_rho = dist.rho;
  const std::int64_t start = service.charged_rounds();
  for (int round = 0; round < d; ++round) {
    const WeightedGraph& g = res.dist.minor;
    const NodeId n = g.num_nodes();
    if (n <= 1) break;
    EliminateRound info;
    info.nodes_before = n;
    const double gamma = opt.gamma >= 0.0 ? opt.gamma : default_gamma(n, eps, opt.alpha, opt.gamma_scale);
    std::optional<RandWalkResult> rw;
    DDSubset dd;
    for (int attempt = 0;; ++attempt) {
      const std::uint64_t s = seed * 1000003ULL + static_cast<std::uint64_t>(round) * 7919ULL + static_cast<std::uint64_t>(attempt) * 104729ULL;
      try {
        dd = find_dd_subset(g, opt.alpha, s);
        service.charge(res.dist, 2 + 3 * dd.extension_rounds);
        RandWalkOptions wo = opt.walks;
        wo.alpha = opt.alpha;
        rw = randwalk_schur(res.dist, dd.f, eps * opt.walk_eps_share, gamma, s + 1, service, wo);
        break;
      } catch (const eliminate_error&) {
        if (attempt + 1 >= opt.max_retries) throw;
        info.retries = attempt + 1;
      }
    }
    info.dd_size = dd.f.size();
    info.augmented = rw->augmented.size();
    info.max_congestion = rw->max_congestion;
    info.restarts = rw->restarts;
    res.max_congestion = std::max(res.max_congestion, rw->max_congestion);
    const auto eliminated = detail::complement(n, rw->t_hat);
    const int terms = jacobi_terms(eps * opt.jacobi_eps_share);
    info.jacobi_terms = terms;
    res.reduction->push(std::make_shared<JacobiReduction>(g, eliminated, terms, opt.alpha));
    MinorDistribution next = rw->dist;
    if (opt.sparsify) {
      SparsifyOptions so = opt.sparsifier;
      so.seed = seed * 31ULL + static_cast<std::uint64_t>(round);
      next = spectral_sparsify(next, eps * opt.sparsify_eps_share, service, so).dist;
    }
    std::vector<NodeId> terms_next;
    for (NodeId j : rw->t_hat) terms_next.push_back(res.terminals[static_cast<std::size_t>(j)]);
    res.terminals = std::move(terms_next);
    res.dist = std::move(next);
    res.graph = res.dist.minor;
    res.max_rho = std::max(res.max_rho, res.dist.rho);
    info.nodes_after = res.graph.num_nodes();
    info.edges_after = res.graph.num_edges();
    res.rounds_info.push_back(info);
  }
  res.rounds = service.charged_rounds() - start;
  return res;
}

}  // namespace lapdist

#endif  // LAPDIST_ELIMINATE_HPP_
