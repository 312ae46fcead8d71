// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "lapdist/aggregation.hpp"
#include "lapdist/approxsc.hpp"
#include "lapdist/dense.hpp"
#include "lapdist/eliminate.hpp"
#include "lapdist/experiment.hpp"
#include "lapdist/generators.hpp"
#include "lapdist/linear.hpp"
#include "lapdist/service.hpp"
#include "lapdist/solver.hpp"
#include "lapdist/ultrasparsify.hpp"

using namespace lapdist;

namespace {

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// at least 95% of `total`
bool enough(int ok, int total) { return ok * 100 >= 95 * total; }

Vector gaussian(NodeId n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Vector b(n);
  for (NodeId i = 0; i < n; ++i) b[i] = g(rng);
  return b;
}

std::vector<NodeId> pick(NodeId n, std::size_t k, std::uint64_t seed) {
  std::vector<NodeId> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(k, all.size()));
  std::sort(all.begin(), all.end());
  return all;
}

bool within_factor(double est, double exact, double f, double abs_tol) {
  if (exact < abs_tol) return est < f * abs_tol + 1e-9;
  return est >= exact / f && est <= exact * f;
}

// Hop diameter by BFS from every node.
int bfs_diameter(const WeightedGraph& g) {
  const NodeId n = g.num_nodes();
  int best = 0;
  for (NodeId s = 0; s < n; ++s) {
    std::vector<int> dist(static_cast<std::size_t>(n), -1);
    std::queue<NodeId> q;
    dist[static_cast<std::size_t>(s)] = 0;
    q.push(s);
    while (!q.empty()) {
      const NodeId x = q.front();
      q.pop();
      for (const auto& inc : g.incident(x)) {
        if (dist[static_cast<std::size_t>(inc.other)] >= 0) continue;
        dist[static_cast<std::size_t>(inc.other)] = dist[static_cast<std::size_t>(x)] + 1;
        best = std::max(best, dist[static_cast<std::size_t>(inc.other)]);
        q.push(inc.other);
      }
    }
  }
  return best;
}

struct Fixture {
  std::string name;
  GeneratedGraph gen;
};

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Fixture> fx;
  for (NodeId n : {20, 60, 120, 200}) fx.push_back({"path" + std::to_string(n), make_path(n, 1 + n % 7, n)});
  for (NodeId n : {20, 60, 120, 200}) fx.push_back({"cycle" + std::to_string(n), make_cycle(n, 1 + n % 5, n)});
  for (NodeId r : {4, 7, 10, 14}) fx.push_back({"grid" + std::to_string(r), make_grid(r, r, r % 2 ? 9 : 1, r)});
  for (int k : {2, 3, 4}) {
    for (NodeId n : {40, 100, 180}) fx.push_back({fmt("ktree%d_%d", k, n), make_ktree(n, k, 10 * k + n, 1.0, 4)});
  }
  for (NodeId n : {80, 160}) fx.push_back({fmt("btw%d", n), make_ktree(n, 3, n, 0.6, 8)});
  for (NodeId n : {30, 60, 100, 150, 200}) {
    fx.push_back({fmt("rand%d_sparse", n), make_random_connected(n, 0.5, n, 1)});
    fx.push_back({fmt("rand%d_dense", n), make_random_connected(n, 3.0, n + 1, 16)});
  }
  int worst = 20;
  std::string worst_name;
  double worst_err = 0.0;
  int fixtures_ok = 0;
  for (const auto& f : fx) {
    const WeightedGraph& g = f.gen.graph;
    const DenseMatrix l = laplacian(g);
    const DenseMatrix pinv = pseudo_inverse(l);
    int ok[2] = {0, 0};
    const double eps_list[2] = {1e-2, 1e-3};
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      AggregationService svc(Model::sequential);
      SolverParams sp;
      sp.seed = seed;
      try {
        const auto setup = build_solver(g, svc, sp);
        const Vector b = gaussian(g.num_nodes(), 1000 + seed);
        const double bl = std::sqrt(b.dot(l * b));
        const Vector exact = pinv * b;
        for (int i = 0; i < 2; ++i) {
          const auto r = solve_with(setup, b, eps_list[i], svc);
          const Vector e = r.x - exact;
          const double err = std::sqrt(std::max(0.0, e.dot(l * e)));
          worst_err = std::max(worst_err, err / bl / eps_list[i]);
          ok[i] += err <= eps_list[i] * bl ? 1 : 0;
        }
      } catch (const std::exception&) {
      }
    }
    const int m = std::min(ok[0], ok[1]);
    if (m < worst) {
      worst = m;
      worst_name = f.name;
    }
    fixtures_ok += enough(ok[0], 20) && enough(ok[1], 20) ? 1 : 0;
  }
  const double secs = seconds_since(t0);
  const bool pass = fx.size() >= 30 && fixtures_ok == static_cast<int>(fx.size()) && secs < 600.0;
  report(1, "solver correctness", pass,
         fmt("%d/%zu fixtures (n<=200) at >=95%% of 20 seeds for eps in {1e-2,1e-3}; worst fixture %d/20%s%s; "
             "max err/(eps*||b||_L) = %.3g; %.0f s",
             fixtures_ok, fx.size(), worst, worst_name.empty() ? "" : " on ", worst_name.c_str(), worst_err, secs));
}

// ---------------------------------------------------------------------------

void criterion2() {
  int runs = 0, ok = 0;
  int id_runs = 0, id_ok = 0;
  double lo = std::numeric_limits<double>::infinity(), hi_ratio = 0.0, id_err = 0.0;
  for (double k : {2.0, 4.0, 8.0}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      std::vector<WeightedGraph> gs = {make_random_connected(100, 1.5, seed, 8).graph,
                                       make_grid(10, 10, 1, seed).graph,
                                       make_ktree(36, 2, seed, 0.7, 5).graph,
                                       make_random_connected(24, 1.0, 50 + seed, 3).graph};
      for (const auto& g : gs) {
        AggregationService svc(Model::sequential);
        UltrasparsifyOptions uo;
        uo.seed = seed;
        const auto r = ultrasparsify(identity_minor(g), k, svc, uo);
        GeneralizedRange range;
        const bool in = loewner_sandwich_check(laplacian(g), laplacian(r.sampled.h), 1.0 - 1e-9, 2.0 * k, 1e-9, &range);
        ++runs;
        ok += in ? 1 : 0;
        lo = std::min(lo, range.min);
        hi_ratio = std::max(hi_ratio, range.max / (2.0 * k));
        if (g.num_nodes() <= 40) {
          const DenseMatrix inner = pseudo_inverse(laplacian(r.elim.reduced));
          const DenseMatrix comp = project_kernel(materialize(*r.elim.ops, inner));
          const DenseMatrix pinv = pseudo_inverse(laplacian(r.sampled.h));
          const double err = (comp - pinv).cwiseAbs().maxCoeff() / std::max(1.0, detail::max_abs(pinv));
          id_err = std::max(id_err, err);
          ++id_runs;
          id_ok += err <= 1e-7 ? 1 : 0;
        }
      }
    }
  }
  report(2, "ultra-sparsifier sandwich", enough(ok, runs) && id_ok == id_runs,
         fmt("eigs of (L(H),L(G)) in [1-1e-9, 2k] on %d/%d runs (k in {2,4,8}, n<=100), min %.6g, max/(2k) %.3g; "
             "degree-1/2 identity %d/%d runs on n<=40, max rel err %.2g",
             ok, runs, lo, hi_ratio, id_ok, id_runs, id_err));
}

// ---------------------------------------------------------------------------

void criterion3() {
  int size_runs = 0, size_ok = 0;
  double worst_frac = 0.0;
  for (int d : {1, 2, 3}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      for (NodeId n : {50, 100, 200}) {
        const auto g = make_random_connected(n, 1.0, 31 * seed + n, 6).graph;
        AggregationService svc(Model::sequential);
        const auto r = eliminate(identity_minor(g), d, 0.5, seed, svc);
        const double bound = std::pow(49.0 / 50.0, d) * n;
        ++size_runs;
        size_ok += static_cast<double>(r.terminals.size()) <= bound ? 1 : 0;
        worst_frac = std::max(worst_frac, static_cast<double>(r.terminals.size()) / bound);
      }
    }
  }
  const double eps = 0.5;
  const int d = 2;
  int sw_runs = 0, sw_ok = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& g : {make_random_connected(32, 1.0, 700 + seed, 6).graph, make_grid(6, 6, 4, seed).graph,
                          make_ktree(40, 3, seed, 0.8, 3).graph}) {
      AggregationService svc(Model::sequential);
      const auto r = eliminate(identity_minor(g), d, eps, seed, svc);
      const DenseMatrix comp = project_kernel(materialize(*r.reduction, pseudo_inverse(laplacian(r.graph))));
      GeneralizedRange range;
      const bool in = loewner_sandwich_check(pseudo_inverse(laplacian(g)), comp, std::pow(1.0 - eps, d),
                                             std::pow(1.0 + eps, d), 1e-9, &range);
      ++sw_runs;
      sw_ok += in ? 1 : 0;
      lo = std::min(lo, range.min);
      hi = std::max(hi, range.max);
    }
  }
  report(3, "eliminate guarantees", size_ok == size_runs && enough(sw_ok, sw_runs),
         fmt("|T| <= (49/50)^d n on %d/%d runs (n>=50, d<=3), max |T|/bound %.3f; composite in "
             "[(1-eps)^d,(1+eps)^d] on %d/%d runs (n<=40, eps=0.5, d=2), range [%.4f, %.4f]",
             size_ok, size_runs, worst_frac, sw_ok, sw_runs, lo, hi));
}

// ---------------------------------------------------------------------------

void criterion4() {
  const double eps = 0.5;
  int runs = 0, ok = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& g : {make_random_connected(30, 1.0, 300 + seed, 4).graph, make_grid(5, 5, 1, seed).graph,
                          make_ktree(24, 2, seed, 1.0, 7).graph}) {
      AggregationService svc(Model::sequential);
      const auto dd = find_dd_subset(g, 4.0, seed);
      const auto r = randwalk_schur(identity_minor(g), dd.f, eps, default_gamma(g.num_nodes(), eps), seed, svc);
      ++runs;
      ok += spectral_approx_check(schur_complement(laplacian(g), r.t_hat), laplacian(r.h), eps).ok ? 1 : 0;
    }
  }
  // series reduction: unit path 0-1-2 onto {0, 2} is one edge of weight 1/2
  const auto path = make_path(3).graph;
  const int mu = walk_repetitions(3, eps);
  std::vector<double> w;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto b = simulate_hitting_walks(path, {0, 2}, mu, 50, seed);
    const auto h = walk_schur_laplacian(path, {0, 2}, b);
    double total = 0.0;
    for (const auto& e : h.edges()) {
      if (!e.is_self_loop()) total += e.weight;
    }
    w.push_back(total);
  }
  double mean = 0.0, var = 0.0;
  for (double x : w) mean += x / w.size();
  for (double x : w) var += (x - mean) * (x - mean) / (w.size() - 1);
  const double se = std::sqrt(var / w.size());
  const bool series = std::abs(mean - 0.5) <= 3.0 * se + 1e-12;
  report(4, "random-walk Schur complement", enough(ok, runs) && series,
         fmt("L(H) ~_0.5 SC(G,T) on %d/%d runs (n<=30, mu=ceil(4 ln n/eps^2)); path series case mean weight %.5f vs "
             "0.5, 3 sigma = %.5f (200 seeds, mu=%d)",
             ok, runs, mean, 3.0 * se, mu));
}

// ---------------------------------------------------------------------------

void criterion5() {
  const double eps = 0.1;
  int runs = 0, ok = 0, split_runs = 0, split_ok = 0, reduced = 0;
  double worst_edges = 0.0, worst_split = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::vector<std::pair<WeightedGraph, std::size_t>> cases = {
        {make_grid(6, 6, 1, seed).graph, 6},
        {make_cycle(40, 3, seed).graph, 4},
        {make_random_connected(50, 1.0, 900 + seed, 5).graph, 8},
        {make_ktree(60, 2, seed, 0.8, 2).graph, 5}};
    for (const auto& [g, tsize] : cases) {
      const auto t = pick(g.num_nodes(), tsize, seed);
      AggregationService svc(Model::sequential);
      const auto r = approx_sc(identity_minor(g), t, eps, oracle_solver_factory(), seed, svc);
      const DenseMatrix sg = schur_complement(laplacian(g), t);
      ++runs;
      ok += spectral_approx_check(sg, schur_complement(laplacian(r.dist.minor), r.terminals), eps).ok ? 1 : 0;
      reduced += r.iterations > 0 ? 1 : 0;
      worst_edges = std::max(worst_edges, static_cast<double>(live_edges(r.dist.minor)) / r.edge_threshold);
      // split_and_collapse with estimated leverage scores keeps SC(., T)
      OracleSolver s(g);
      const auto lev = approx_leverage_scores(g, 0.1, s, seed).lev;
      const auto sp = split_and_collapse(identity_minor(g), t, lev);
      const double err = (sg - schur_complement(laplacian(sp.dist.minor), sp.terminals)).cwiseAbs().maxCoeff() /
                         std::max(1.0, detail::max_abs(sg));
      worst_split = std::max(worst_split, err);
      ++split_runs;
      split_ok += err <= 1e-7 ? 1 : 0;
    }
  }
  // Above the edge threshold: 12x12 grid, |T| = 2, eps = 1.
  const auto big = make_grid(12, 12).graph;
  int big_ok = 0, big_iter = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = pick(144, 2, seed);
    AggregationService svc(Model::sequential);
    const auto r = approx_sc(identity_minor(big), t, 1.0, oracle_solver_factory(), seed, svc);
    big_iter += r.iterations > 0 ? 1 : 0;
    big_ok += spectral_approx_check(schur_complement(laplacian(big), t),
                                    schur_complement(laplacian(r.dist.minor), r.terminals), 1.0)
                  .ok
                  ? 1
                  : 0;
  }
  report(5, "ApproxSC", enough(ok, runs) && split_ok == split_runs,
         fmt("SC(H,T) ~_0.1 SC(G,T) on %d/%d runs (n<=60); %d of them ran the reduction loop, |E(H)| <= %.2f x "
             "|T| ceil(log2 n)^2/eps^2; split_and_collapse exact on %d/%d runs (max rel err %.1e); "
             "12x12 grid |T|=2 eps=1: %d/10 reduced, %d/10 within eps",
             ok, runs, reduced, worst_edges, split_ok, split_runs, worst_split, big_iter, big_ok));
}

// ---------------------------------------------------------------------------

void criterion6() {
  std::mt19937_64 rng(2026);
  int instances = 0, runs = 0, mismatched = 0, incomplete = 0;
  const std::vector<AggregateOp> op_list = {ops::min(), ops::max(), ops::sum(), ops::id_of_min()};
  for (int i = 0; i < 500; ++i) {
    const std::uint64_t seed = rng();
    const int family = static_cast<int>(seed % 4);
    const NodeId n = 10 + static_cast<NodeId>((seed >> 8) % 50);
    GeneratedGraph gen;
    switch (family) {
      case 0: gen = make_ktree(n, 1 + static_cast<int>((seed >> 16) % 4), seed, 0.7); break;
      case 1: gen = make_grid(3 + n / 20, 3 + n % 7, 1, seed); break;
      case 2: gen = make_random_connected(n, 1.0, seed); break;
      default: gen = make_cycle(n, 1, seed); break;
    }
    const WeightedGraph& g = gen.graph;
    const int rho = 1 + static_cast<int>((seed >> 24) % 3);
    const int count = 2 + static_cast<int>((seed >> 28) % 10);
    const NodeId size = 2 + static_cast<NodeId>((seed >> 32) % 10);
    const auto parts = make_congested_partition(g, count, size, rho, seed);
    PartInputs in(parts.parts.size());
    std::uniform_int_distribution<int> val(-1000, 1000);
    for (std::size_t p = 0; p < parts.parts.size(); ++p) {
      for (NodeId u : parts.parts[p]) in[p].push_back(AggValue::of(val(rng), u));
    }
    const auto& op = op_list[static_cast<std::size_t>((seed >> 40) % op_list.size())];
    const auto oracle = sequential_part_fold(in, op);
    ++instances;
    for (Model model : {Model::congest, Model::ncc, Model::hybrid}) {
      AggregationConfig cfg;
      cfg.sim.seed = seed;
      cfg.sim.record_messages = false;
      cfg.congest.provider = static_cast<ShortcutProvider>((seed >> 44) % 3);
      cfg.congest.decomposition = gen.decomposition;
      ++runs;
      try {
        const auto r = aggregate(model, g, parts, in, op, cfg);
        incomplete += r.ledger.status == RunStatus::completed ? 0 : 1;
        bool same = r.learned.size() == oracle.size();
        for (std::size_t p = 0; same && p < oracle.size(); ++p) {
          same = r.learned[p].size() == in[p].size();
          for (const auto& v : r.learned[p]) same = same && v == oracle[p];
        }
        mismatched += same ? 0 : 1;
      } catch (const std::exception&) {
        ++mismatched;
      }
    }
  }
  report(6, "congested aggregation correctness", instances >= 500 && mismatched == 0 && incomplete == 0,
         fmt("%d fuzzed instances, %d CONGEST/NCC/HYBRID runs, %d mismatches vs sequential per-part fold, %d incomplete",
             instances, runs, mismatched, incomplete));
}

// ---------------------------------------------------------------------------

void criterion7() {
  int diam_ok = 0, width_ok = 0, pairs = 0, pairs_ok = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const NodeId n = 15 + static_cast<NodeId>(seed % 36);
    const int k = 1 + static_cast<int>(seed % 4);
    const auto gen = make_ktree(n, k, seed, seed % 2 ? 0.6 : 1.0);
    const int rho = 1 + static_cast<int>(seed % 3);
    const auto parts = make_congested_partition(gen.graph, 3 + static_cast<int>(seed % 6), 4 + n / 6, rho, seed);
    const auto ag = build_ghat(gen.graph, parts);
    const int r = std::max(1, ag.max_rho());
    diam_ok += bfs_diameter(ag.graph) <= bfs_diameter(gen.graph) + 1 ? 1 : 0;
    const int w = validate_tree_decomposition(gen.graph, *gen.decomposition);
    const int lifted = validate_tree_decomposition(ag.graph, lift_tree_decomposition(gen.graph, *gen.decomposition, ag));
    width_ok += lifted <= r * (w + 1) - 1 ? 1 : 0;

    // the same aggregation plan run on the augmented graph and on the host
    AggregationPlan plan;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < ag.parts.parts.size(); ++i) {
      const auto& part = ag.parts.parts[i];
      TaskTree t = part_tree(ag.graph, part, {}, part.front());
      for (auto& v : t.input) v = AggValue::of(static_cast<double>(rng() % 100), 0);
      plan.tasks.push_back(std::move(t));
    }
    finalize_plan(ag.graph, plan);
    auto direct = make_tree_programs(ag.graph, plan, ops::sum());
    auto wrapped = make_tree_programs(ag.graph, plan, ops::sum());
    SimOptions opt;
    opt.seed = seed;
    opt.record_messages = false;
    const auto l1 = run_congest(ag.graph, direct, opt);
    const auto run = simulate_on_ghat(gen.graph, ag, wrapped, opt);
    ++pairs;
    const bool bound = run.ledger.status == RunStatus::completed &&
                       run.ledger.rounds <= static_cast<std::int64_t>(r) * r * std::max(1, l1.rounds);
    pairs_ok += bound ? 1 : 0;
    worst_ratio = std::max(worst_ratio, static_cast<double>(run.ledger.rounds) / (r * r * std::max(1, l1.rounds)));

    // and every congested aggregation ledger
    AggregationConfig cfg;
    cfg.sim = opt;
    PartInputs in(parts.parts.size());
    for (std::size_t p = 0; p < parts.parts.size(); ++p) in[p].assign(parts.parts[p].size(), AggValue::of(1.0, 0));
    const auto res = aggregate(Model::congest, gen.graph, parts, in, ops::sum(), cfg);
    ++pairs;
    const bool ledger_bound = res.ledger.rounds <= static_cast<std::int64_t>(res.rho) * res.rho * res.ghat_rounds;
    pairs_ok += ledger_bound ? 1 : 0;
  }
  report(7, "augmented-graph structure", diam_ok == 100 && width_ok == 100 && pairs_ok == pairs,
         fmt("D(G^) <= D+1 on %d/100; lifted width <= rho(w+1)-1 on %d/100; host rounds <= rho^2 x augmented rounds "
             "on %d/%d simulated pairs (max ratio %.3f)",
             diam_ok, width_ok, pairs_ok, pairs, worst_ratio));
}

// ---------------------------------------------------------------------------

double congest_rounds(const WeightedGraph& g, int count, NodeId size, int rho, std::uint64_t seed) {
  const auto parts = make_congested_partition(g, count, size, rho, seed);
  std::vector<double> v(static_cast<std::size_t>(g.num_nodes()), 1.0);
  AggregationConfig cfg;
  cfg.sim.seed = seed;
  cfg.sim.record_messages = false;
  return aggregate(Model::congest, g, parts, inputs_from_node_values(parts, v), ops::sum(), cfg).ledger.rounds;
}

bool non_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1]) return false;
  }
  return true;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + fmt("%.3g", x);
  return s;
}

void criterion8() {
  const int seeds = 10;
  // CONGEST k-tree sweep: rounds against rho^3 k D log2^2 n.
  std::vector<double> bound, rounds;
  for (int k : {1, 2, 3}) {
    for (int rho : {1, 2, 3}) {
      for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto g = make_ktree(60, k, seed).graph;
        const int d = bfs_diameter(g);
        const auto parts = make_congested_partition(g, 8, 15, rho, seed);
        const int measured = std::max(1, validate_partition(g, parts, std::numeric_limits<int>::max()));
        rounds.push_back(congest_rounds(g, 8, 15, rho, seed));
        bound.push_back(std::pow(measured, 3) * k * d * std::pow(std::log2(60.0), 2));
      }
    }
  }
  const auto congest_fit = fit_proportional(bound, rounds);
  double congest_max = 0.0;
  for (std::size_t i = 0; i < bound.size(); ++i) congest_max = std::max(congest_max, rounds[i] / bound[i]);

  // monotone in rho (8x8 grid) and in D (paths, parts of n/4 nodes)
  std::vector<double> by_rho, by_d;
  const auto grid = make_grid(8, 8).graph;
  for (int rho = 1; rho <= 4; ++rho) {
    double s = 0.0;
    for (int seed = 1; seed <= seeds; ++seed) s += congest_rounds(grid, 8, 16, rho, seed);
    by_rho.push_back(s / seeds);
  }
  for (NodeId n : {16, 32, 64, 128}) {
    const auto p = make_path(n).graph;
    double s = 0.0;
    for (int seed = 1; seed <= seeds; ++seed) s += congest_rounds(p, 8, n / 4, 1, seed);
    by_d.push_back(s / seeds);
  }
  // monotone in k at fixed n and D: bounded-treewidth graphs grouped by
  // diameter; D0 is the diameter with the most samples shared by every k.
  std::map<int, std::map<int, std::vector<double>>> by_kd;
  for (int k = 1; k <= 4; ++k) {
    for (std::uint64_t seed = 1; seed <= 400; ++seed) {
      for (double keep : {0.4, 0.6, 0.8, 1.0}) {
        const auto g = make_ktree(60, k, seed, keep).graph;
        if (!is_connected(g)) continue;
        by_kd[k][bfs_diameter(g)].push_back(congest_rounds(g, 8, 15, 1, seed));
      }
    }
  }
  int d0 = -1;
  std::size_t d0_count = 0;
  for (const auto& [d, cell] : by_kd[1]) {
    std::size_t c = cell.size();
    for (int k = 2; k <= 4; ++k) c = std::min(c, by_kd[k].count(d) ? by_kd[k][d].size() : std::size_t{0});
    if (c > d0_count) {
      d0 = d;
      d0_count = c;
    }
  }
  std::vector<double> by_k, by_k_se;
  for (int k = 1; k <= 4 && d0 >= 0; ++k) {
    const auto& v = by_kd[k][d0];
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x / v.size();
    for (double x : v) var += (x - mean) * (x - mean) / std::max<std::size_t>(1, v.size() - 1);
    by_k.push_back(mean);
    by_k_se.push_back(std::sqrt(var / v.size()));
  }

  // NCC: rounds against rho^2 + rho log2 n
  std::vector<double> nbound, nrounds;
  bool ncc_monotone = true;
  std::string ncc_text;
  for (NodeId n : {32, 64, 128}) {
    std::vector<double> row;
    const auto g = make_random_connected(n, 1.0, n).graph;
    for (int rho = 1; rho <= 4; ++rho) {
      double s = 0.0;
      for (int seed = 1; seed <= 4; ++seed) {
        const auto parts = make_congested_partition(g, n / 4, 8, rho, seed);
        std::vector<double> v(static_cast<std::size_t>(n), 1.0);
        SimOptions opt;
        opt.seed = seed;
        opt.record_messages = false;
        const auto r = congested_aggregation_ncc(n, parts, inputs_from_node_values(parts, v), ops::sum(), opt);
        const int measured = std::max(1, r.rho);
        s += r.ledger.rounds;
        nbound.push_back(measured * measured + measured * std::log2(static_cast<double>(n)));
        nrounds.push_back(r.ledger.rounds);
      }
      row.push_back(s / 4);
    }
    ncc_monotone = ncc_monotone && non_decreasing(row);
    ncc_text += fmt(" n=%d:[%s]", n, join(row).c_str());
  }
  const auto ncc_fit = fit_proportional(nbound, nrounds);

  // Solver eps sweep on a 10x10 grid (CONGEST), one setup per seed.
  // Points are per-eps means over seeds, so setup cost enters the intercept.
  const std::vector<double> eps_list = {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  std::vector<double> xs, ys(eps_list.size(), 0.0);
  const auto g = make_grid(10, 10, 1, 3).graph;
  for (double eps : eps_list) xs.push_back(std::log(1.0 / eps));
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    AggregationService svc(Model::congest);
    SolverParams sp;
    sp.seed = seed;
    const auto setup = build_solver(g, svc, sp);
    const Vector b = gaussian(g.num_nodes(), seed);
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
      ys[i] += static_cast<double>(solve_with(setup, b, eps_list[i], svc).totals.rounds) / 3.0;
    }
  }
  const auto eps_fit = fit_line(xs, ys);

  const bool pass = non_decreasing(by_rho) && non_decreasing(by_d) && !by_k.empty() && non_decreasing(by_k) &&
                    ncc_monotone && eps_fit.r2 >= 0.9 && eps_fit.slope > 0.0;
  report(8, "round-scaling reports", pass,
         fmt("CONGEST rounds = c rho^3 k D log2^2 n with c = %.3g (R2 %.2f, max ratio %.3g); rho sweep [%s]; D sweep "
             "[%s]; k sweep at D=%d (>= %zu samples each) [%s] se [%s]; NCC rounds = c (rho^2 + rho log2 n) with c = %.3g "
             "(R2 %.2f), by rho%s; solver rounds = %.4g + %.4g ln(1/eps), R2 %.3f",
             congest_fit.slope, congest_fit.r2, congest_max, join(by_rho).c_str(), join(by_d).c_str(), d0, d0_count,
             join(by_k).c_str(), join(by_k_se).c_str(), ncc_fit.slope, ncc_fit.r2, ncc_text.c_str(), eps_fit.intercept, eps_fit.slope,
             eps_fit.r2));
}

// ---------------------------------------------------------------------------

void criterion9() {
  int lev_runs = 0, lev_ok = 0, col_runs = 0, col_ok = 0, en_runs = 0, en_ok = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& g : {make_random_connected(60, 1.0, seed, 8).graph, make_grid(6, 6, 3, seed).graph}) {
      const NodeId n = g.num_nodes();
      const DenseMatrix pinv = pseudo_inverse(laplacian(g));
      OracleSolver s(g);

      const auto est = approx_leverage_scores(g, 0.1, s, seed + 100).lev;
      const auto exact = leverage_scores_exact(g);
      bool good = true;
      for (std::size_t e = 0; e < exact.size(); ++e) good = good && within_factor(est[e], exact[e], 1.1, 1e-9);
      ++lev_runs;
      lev_ok += good ? 1 : 0;

      std::vector<EdgeId> w;
      for (EdgeId e = static_cast<EdgeId>(seed % 3); e < static_cast<EdgeId>(g.num_edges()); e += 3) w.push_back(e);
      const auto cs = approx_column_sums(g, w, s, seed + 7);
      good = true;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const auto& e = g.edge(w[i]);
        double sum = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
          if (i == j) continue;
          const auto& f = g.edge(w[j]);
          sum += std::abs(pinv(e.u, f.u) - pinv(e.u, f.v) - pinv(e.v, f.u) + pinv(e.v, f.v)) *
                 std::sqrt(e.weight * f.weight);
        }
        good = good && within_factor(cs[i], sum, 2.0, 1e-6);
      }
      ++col_runs;
      col_ok += good ? 1 : 0;

      const auto t = pick(n, 8, seed);
      const DenseMatrix sc = schur_complement(laplacian(g), t);
      const auto en = sc_energy_estimates(g, t, s, oracle_solver_factory(), seed + 3);
      good = true;
      for (const auto& e : g.edges()) {
        if (e.is_self_loop()) continue;
        Vector x(static_cast<Eigen::Index>(t.size()));
        for (std::size_t i = 0; i < t.size(); ++i) x[static_cast<Eigen::Index>(i)] = pinv(t[i], e.u) - pinv(t[i], e.v);
        good = good && within_factor(en[static_cast<std::size_t>(e.id)], e.weight * x.dot(sc * x), 2.0, 1e-9);
      }
      ++en_runs;
      en_ok += good ? 1 : 0;
    }
  }
  // alpha-DD subsets
  int dd_runs = 0, dd_rows_ok = 0, dd_size_runs = 0, dd_size_ok = 0;
  const double alpha = 4.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (NodeId n : {30, 100, 150, 200}) {
      const auto g = make_random_connected(n, 1.0, 500 + seed + n, 9).graph;
      DDSubset dd;
      try {
        dd = find_dd_subset(g, alpha, seed);
      } catch (const eliminate_error&) {
        ++dd_runs;
        if (n >= 100) ++dd_size_runs;
        continue;
      }
      const DenseMatrix m = laplacian(g);
      bool rows = true;
      for (NodeId i : dd.f) {
        double off = 0.0;
        for (NodeId j : dd.f) {
          if (j != i) off += std::abs(m(i, j));
        }
        rows = rows && m(i, i) >= (1.0 + alpha) * off - 1e-9;
      }
      ++dd_runs;
      dd_rows_ok += rows ? 1 : 0;
      if (n >= 100) {
        ++dd_size_runs;
        dd_size_ok += static_cast<double>(dd.f.size()) >= n / (8.0 * (1.0 + alpha)) ? 1 : 0;
      }
    }
  }
  const bool pass = enough(lev_ok, lev_runs) && enough(col_ok, col_runs) && enough(en_ok, en_runs) &&
                    dd_rows_ok == dd_runs && enough(dd_size_ok, dd_size_runs);
  report(9, "estimator audits", pass,
         fmt("leverage within 1.1: %d/%d; column sums within 2: %d/%d; SC energy within 2: %d/%d (n<=60); alpha=4 DD "
             "rows revalidate %d/%d; |F| >= n/40 on %d/%d (n>=100)",
             lev_ok, lev_runs, col_ok, col_runs, en_ok, en_runs, dd_rows_ok, dd_runs, dd_size_ok, dd_size_runs));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<void()>> all = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                  criterion6, criterion7, criterion8, criterion9};
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  for (int i = 1; i <= 9; ++i) {
    if (!only.empty() && std::find(only.begin(), only.end(), i) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      all[static_cast<std::size_t>(i - 1)]();
    } catch (const std::exception& e) {
      report(i, "exception", false, e.what());
    }
    std::fprintf(stderr, "criterion %d: %.1f s\n", i, seconds_since(t0));
  }
  return failures == 0 ? 0 : 1;
}
