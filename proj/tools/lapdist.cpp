// lapdist command line: generators, simulator runs, module drivers and
// experiment sweeps. Every subcommand prints a JSON object on stdout.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lapdist/approxsc.hpp"
#include "lapdist/dense.hpp"
#include "lapdist/eliminate.hpp"
#include "lapdist/experiment.hpp"
#include "lapdist/generators.hpp"
#include "lapdist/io.hpp"
#include "lapdist/service.hpp"
#include "lapdist/solver.hpp"
#include "lapdist/ultrasparsify.hpp"

using namespace lapdist;
using nlohmann::json;

namespace {

json range_json(const GeneralizedRange& r) { return {{"min", r.min}, {"max", r.max}}; }

json cost_json(const AggregationCost& c) {
  return {{"rounds", c.rounds},
          {"global_rounds", c.global_rounds},
          {"local_messages", c.local_messages},
          {"global_messages", c.global_messages}};
}

json ledger_json(const RoundLedger& l) {
  return {{"rounds", l.rounds},
          {"status", l.status == RunStatus::completed ? "completed" : "max_rounds_exceeded"},
          {"word_bits", l.word_bits},
          {"message_bits", l.message_bits},
          {"global_cap", l.global_cap},
          {"local_messages", l.local_messages},
          {"global_messages", l.global_messages},
          {"rounds_with_local", l.rounds_with_local},
          {"rounds_with_global", l.rounds_with_global},
          {"max_local_per_edge_direction", l.max_local_per_edge_direction},
          {"max_global_sent_per_node", l.max_global_sent_per_node},
          {"max_global_received_per_node", l.max_global_received_per_node},
          {"dropped", l.dropped.size()}};
}

void write_ledger_csv(const std::string& path, const RoundLedger& l) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "round,channel,src,dst,bits\n";
  for (const auto& m : l.delivered) {
    out << m.round << ',' << (m.channel == Channel::local ? "local" : "global") << ',' << m.src << ',' << m.dst << ','
        << m.bits << '\n';
  }
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

struct SimFlags {
  std::string model = "congest";
  std::uint64_t seed = 1;
  int max_rounds = 100000;
  int msg_factor = 4;
  int ncc_cap_factor = 1;
  std::string drop_policy = "random";

  void add(CLI::App* app, bool sequential_ok) {
    auto* m = app->add_option("--model", model, "congest, ncc, hybrid" + std::string(sequential_ok ? ", sequential" : ""));
    m->check(sequential_ok ? CLI::IsMember({"congest", "ncc", "hybrid", "sequential"})
                           : CLI::IsMember({"congest", "ncc", "hybrid"}));
    app->add_option("--seed", seed);
    app->add_option("--max-rounds", max_rounds);
    app->add_option("--msg-factor", msg_factor);
    app->add_option("--ncc-cap-factor", ncc_cap_factor);
    app->add_option("--drop-policy", drop_policy)->check(CLI::IsMember({"random", "lowest-sender"}));
  }

  SimOptions options() const {
    SimOptions o;
    o.seed = seed;
    o.max_rounds = max_rounds;
    o.msg_factor = msg_factor;
    o.ncc_cap_factor = ncc_cap_factor;
    o.drop_policy = parse_drop_policy(drop_policy);
    return o;
  }
};

Vector dense_oracle_solve(const WeightedGraph& g, const Vector& b) {
  return pseudo_inverse(laplacian(g)) * project_ones(b);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lapdist: distributed Laplacian solver toolkit"};
  app.require_subcommand(1);

  // generate ----------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "write a graph from a generator family");
  std::string family = "path", out_path, td_path;
  GeneratorParams gp;
  std::uint64_t gen_seed = 1;
  gen->add_option("--family", family)
      ->check(CLI::IsMember({"path", "cycle", "grid", "complete", "star", "ktree", "bounded-tw", "random"}));
  gen->add_option("--n", gp.n);
  gen->add_option("--rows", gp.rows);
  gen->add_option("--cols", gp.cols);
  gen->add_option("--k", gp.k);
  gen->add_option("--keep", gp.keep);
  gen->add_option("--extra", gp.extra);
  gen->add_option("--max-weight", gp.max_weight);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", out_path, "graph file (stdout when omitted)");
  gen->add_option("--decomposition-out", td_path, "tree decomposition as JSON");

  // simulate ----------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "sum of node ids over one part per line (default: all of V)");
  std::string sim_graph, sim_parts, sim_csv;
  SimFlags sim_flags;
  sim->add_option("--graph", sim_graph)->required();
  sim->add_option("--parts", sim_parts);
  sim->add_option("--ledger-csv", sim_csv, "delivered messages as CSV");
  sim_flags.add(sim, false);

  // aggregate ---------------------------------------------------------------
  auto* agg = app.add_subcommand("aggregate", "congested part-wise aggregation");
  std::string agg_graph, agg_parts, agg_op = "sum", agg_provider = "baseline", agg_values;
  SimFlags agg_flags;
  agg->add_option("--graph", agg_graph)->required();
  agg->add_option("--parts", agg_parts)->required();
  agg->add_option("--op", agg_op)->check(CLI::IsMember({"min", "max", "sum", "id_of_min"}));
  agg->add_option("--provider", agg_provider)->check(CLI::IsMember({"empty", "baseline", "treedec"}));
  agg->add_option("--values", agg_values, "one value per node (default: node id)");
  agg_flags.add(agg, true);

  // ultrasparsify -----------------------------------------------------------
  auto* us = app.add_subcommand("ultrasparsify", "low-stretch sampling plus degree-1/2 elimination");
  std::string us_graph, us_model = "congest";
  double us_k = 4.0;
  std::uint64_t us_seed = 1;
  NodeId us_cap = 400;
  us->add_option("--graph", us_graph)->required();
  us->add_option("--k", us_k);
  us->add_option("--seed", us_seed);
  us->add_option("--model", us_model);
  us->add_option("--oracle-cap", us_cap);

  // eliminate ---------------------------------------------------------------
  auto* el = app.add_subcommand("eliminate", "d rounds of DD-subset elimination");
  std::string el_graph, el_model = "congest";
  int el_d = 1;
  double el_eps = 0.5, el_gamma_scale = 1.0;
  std::uint64_t el_seed = 1;
  NodeId el_cap = 400;
  el->add_option("--graph", el_graph)->required();
  el->add_option("--d", el_d);
  el->add_option("--eps", el_eps);
  el->add_option("--gamma-scale", el_gamma_scale);
  el->add_option("--seed", el_seed);
  el->add_option("--model", el_model);
  el->add_option("--oracle-cap", el_cap);

  // approxsc ----------------------------------------------------------------
  auto* sc = app.add_subcommand("approxsc", "approximate Schur complement onto a terminal set");
  std::string sc_graph, sc_terms, sc_model = "sequential";
  double sc_eps = 0.1, sc_scale = 1.0;
  std::uint64_t sc_seed = 1;
  bool sc_oracle = false;
  NodeId sc_cap = 400;
  sc->add_option("--graph", sc_graph)->required();
  sc->add_option("--terminals", sc_terms)->required();
  sc->add_option("--eps", sc_eps);
  sc->add_option("--seed", sc_seed);
  sc->add_option("--threshold-scale", sc_scale);
  sc->add_option("--model", sc_model);
  sc->add_flag("--use-oracle-solver", sc_oracle);
  sc->add_option("--oracle-cap", sc_cap);

  // solve -------------------------------------------------------------------
  auto* so = app.add_subcommand("solve", "solve L x = b");
  std::string so_graph, so_b, so_model = "congest", so_x;
  double so_eps = 1e-3;
  SolverParams sp;
  NodeId so_cap = 400;
  so->add_option("--graph", so_graph)->required();
  so->add_option("--b", so_b)->required();
  so->add_option("--eps", so_eps);
  so->add_option("--model", so_model)->check(CLI::IsMember({"congest", "ncc", "hybrid", "sequential"}));
  so->add_option("--seed", sp.seed);
  so->add_option("--k", sp.k);
  so->add_option("--d", sp.d);
  so->add_option("--chain-eps", sp.chain_eps);
  so->add_flag("--asymptotic", sp.asymptotic);
  so->add_option("--x-out", so_x, "solution as a text vector (embedded in the JSON when omitted)");
  so->add_option("--oracle-cap", so_cap);

  // experiment --------------------------------------------------------------
  auto* ex = app.add_subcommand("experiment", "run a configured sweep");
  std::string ex_config, ex_out;
  ex->add_option("--config", ex_config)->required();
  ex->add_option("--out", ex_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto g = generate_graph(family, gp, gen_seed);
      if (out_path.empty()) {
        write_graph(std::cout, g.graph);
        return 0;
      }
      write_graph_file(out_path, g.graph);
      json j = {{"family", family}, {"n", g.graph.num_nodes()}, {"m", g.graph.num_edges()}, {"D", hop_diameter(g.graph)}};
      if (g.decomposition) {
        j["tw"] = validate_tree_decomposition(g.graph, *g.decomposition);
        if (!td_path.empty()) {
          std::ofstream td(td_path);
          td << json{{"bags", g.decomposition->bags}, {"tree_edges", g.decomposition->tree_edges}}.dump() << '\n';
        }
      }
      print(j);
    } else if (*sim) {
      const auto g = read_graph_file(sim_graph);
      Partition parts;
      if (sim_parts.empty()) {
        std::vector<NodeId> all(static_cast<std::size_t>(g.num_nodes()));
        std::iota(all.begin(), all.end(), 0);
        parts.parts.push_back(all);
      } else {
        parts = read_partition_file(sim_parts);
      }
      std::vector<double> ids(static_cast<std::size_t>(g.num_nodes()));
      std::iota(ids.begin(), ids.end(), 0.0);
      const auto in = inputs_from_node_values(parts, ids);
      AggregationConfig cfg;
      cfg.sim = sim_flags.options();
      cfg.sim.record_messages = !sim_csv.empty();
      const auto r = aggregate(parse_model(sim_flags.model), g, parts, in, ops::sum(), cfg);
      if (!sim_csv.empty()) write_ledger_csv(sim_csv, r.ledger);
      print({{"model", sim_flags.model}, {"n", g.num_nodes()}, {"parts", parts.parts.size()}, {"ledger", ledger_json(r.ledger)}});
    } else if (*agg) {
      const auto g = read_graph_file(agg_graph);
      const auto parts = read_partition_file(agg_parts);
      std::vector<double> values(static_cast<std::size_t>(g.num_nodes()));
      if (agg_values.empty()) {
        std::iota(values.begin(), values.end(), 0.0);
      } else {
        const Vector v = read_vector_file(agg_values);
        if (v.size() != g.num_nodes()) throw std::invalid_argument("--values needs one entry per node");
        for (NodeId i = 0; i < g.num_nodes(); ++i) values[static_cast<std::size_t>(i)] = v[i];
      }
      const auto in = inputs_from_node_values(parts, values);
      const auto& op = OpRegistry::global().get(agg_op);
      AggregationConfig cfg;
      cfg.sim = agg_flags.options();
      cfg.sim.record_messages = false;
      cfg.congest.provider = parse_provider(agg_provider);
      const auto r = aggregate(parse_model(agg_flags.model), g, parts, in, op, cfg);
      json vals = json::array();
      for (std::size_t i = 0; i < parts.parts.size(); ++i) {
        const auto v = r.part_value(i);
        vals.push_back(v.empty ? json(nullptr) : json(v.x));
      }
      print({{"aggregates", vals},
             {"rounds", r.ledger.rounds},
             {"c", r.shortcut.c},
             {"d", r.shortcut.d},
             {"Q", r.shortcut.q},
             {"rho", r.rho},
             {"fell_back", r.fell_back},
             {"ledger", ledger_json(r.ledger)}});
    } else if (*us) {
      const auto g = read_graph_file(us_graph);
      AggregationService svc(parse_model(us_model));
      UltrasparsifyOptions uo;
      uo.seed = us_seed;
      const auto r = ultrasparsify(identity_minor(g), us_k, svc, uo);
      json j = {{"edges_h", r.sampled.h.num_edges()},
                {"terminals", r.terminals.size()},
                {"reduced_nodes", r.elim.reduced.num_nodes()},
                {"reduced_edges", r.elim.reduced.num_edges()},
                {"total_stretch", r.tree.total_stretch},
                {"rounds", r.rounds},
                {"cost", cost_json(svc.totals())}};
      if (g.num_nodes() <= us_cap) j["sandwich"] = range_json(generalized_range(laplacian(g), laplacian(r.sampled.h)));
      print(j);
    } else if (*el) {
      const auto g = read_graph_file(el_graph);
      AggregationService svc(parse_model(el_model));
      EliminateOptions eo;
      eo.gamma_scale = el_gamma_scale;
      const auto r = eliminate(identity_minor(g), el_d, el_eps, el_seed, svc, eo);
      json per_round = json::array();
      for (const auto& info : r.rounds_info) {
        per_round.push_back({{"nodes_before", info.nodes_before},
                             {"nodes_after", info.nodes_after},
                             {"dd_size", info.dd_size},
                             {"augmented", info.augmented},
                             {"jacobi_terms", info.jacobi_terms},
                             {"edges_after", info.edges_after},
                             {"max_congestion", info.max_congestion}});
      }
      json j = {{"terminals", r.terminals.size()},
                {"per_round", per_round},
                {"rounds", r.rounds},
                {"max_congestion", r.max_congestion},
                {"rho", r.max_rho},
                {"cost", cost_json(svc.totals())}};
      if (g.num_nodes() <= el_cap) {
        const DenseMatrix comp = project_kernel(materialize(*r.reduction, pseudo_inverse(laplacian(r.graph))));
        j["sandwich"] = range_json(generalized_range(pseudo_inverse(laplacian(g)), comp));
      }
      print(j);
    } else if (*sc) {
      const auto g = read_graph_file(sc_graph);
      auto t = read_node_set_file(sc_terms);
      std::sort(t.begin(), t.end());
      AggregationService svc(parse_model(sc_model));
      ApproxScOptions opt;
      opt.threshold_scale = sc_scale;
      const SolverFactory factory = sc_oracle ? oracle_solver_factory() : chain_solver_factory(1e-6);
      const auto r = approx_sc(identity_minor(g), t, sc_eps, factory, sc_seed, svc, opt);
      json j = {{"edges_h", live_edges(r.dist.minor)},
                {"edges_g", g.num_edges()},
                {"edge_threshold", r.edge_threshold},
                {"edge_bound", r.edge_bound},
                {"iterations", r.iterations},
                {"contracted", r.contracted},
                {"deleted", r.deleted},
                {"solver_calls", r.stats.solver_calls},
                {"aggregations", r.stats.aggregations},
                {"rounds", r.rounds},
                {"solver", sc_oracle ? "oracle" : "chain"}};
      if (g.num_nodes() <= sc_cap) {
        const auto range = generalized_range(schur_complement(laplacian(g), t),
                                             schur_complement(laplacian(r.dist.minor), r.terminals));
        j["approx_range"] = range_json(range);
        j["within_eps"] = range.min >= 1.0 - sc_eps - 1e-9 && range.max <= 1.0 + sc_eps + 1e-9;
      }
      print(j);
    } else if (*so) {
      const auto g = read_graph_file(so_graph);
      const Vector b = read_vector_file(so_b);
      AggregationService svc(parse_model(so_model));
      const auto r = solve(g, b, so_eps, svc, sp);
      json j = {{"n", g.num_nodes()},
                {"m", g.num_edges()},
                {"k", r.k},
                {"d", r.d},
                {"chain_eps", r.chain_eps},
                {"chain_sizes", r.chain_sizes},
                {"chain_stalled", r.chain_stalled},
                {"sparsified_edges", r.sparsified_edges},
                {"ultra_nodes", r.ultra_nodes},
                {"lambda", {r.lambda_min, r.lambda_max}},
                {"iterations", r.cheb.iterations},
                {"iteration_budget", r.cheb.budget},
                {"preconditioner_calls", r.preconditioner_calls},
                {"removed_component", r.removed_component},
                {"stage_rounds",
                 {{"sparsify", r.rounds.sparsify},
                  {"ultrasparsify", r.rounds.ultrasparsify},
                  {"chain", r.rounds.chain},
                  {"bounds", r.rounds.bounds},
                  {"iterations", r.rounds.iterations},
                  {"total", r.rounds.total()}}},
                {"cost", cost_json(r.totals)}};
      if (g.num_nodes() <= so_cap) {
        const DenseMatrix l = laplacian(g);
        const Vector e = r.x - dense_oracle_solve(g, b);
        const Vector bp = project_ones(b);
        const double bn = std::sqrt(bp.dot(l * bp));  // ||b||_L
        j["error_vs_oracle"] = bn > 0 ? std::sqrt(std::max(0.0, e.dot(l * e))) / bn : 0.0;
      }
      if (so_x.empty()) {
        j["x"] = std::vector<double>(r.x.data(), r.x.data() + r.x.size());
      } else {
        std::ofstream xo(so_x);
        write_vector(xo, r.x);
      }
      print(j);
    } else if (*ex) {
      std::ifstream in(ex_config);
      if (!in) throw std::runtime_error("cannot read " + ex_config);
      const auto cfg = ExperimentConfig::from_json(json::parse(in));
      std::filesystem::create_directories(ex_out);
      const auto rows = run_experiment(cfg);
      const std::string csv = cfg.output.empty() ? ex_out + "/results.csv" : ex_out + "/" + cfg.output;
      {
        std::ofstream out(csv);
        write_csv(out, rows);
      }
      const auto rep = emit_report(rows);
      {
        std::ofstream out(ex_out + "/report.txt");
        write_report_text(out, rep);
      }
      std::ofstream(ex_out + "/report.json") << report_to_json(rep).dump(2) << '\n';
      int failed = 0;
      for (const auto& r : rows) failed += r.status == "ok" ? 0 : 1;
      print({{"rows", rows.size()}, {"failed", failed}, {"csv", csv}, {"report", ex_out + "/report.json"}});
    }
  } catch (const solver_error& e) {
    std::cout << json{{"error", e.what()}, {"stage", e.stage()}}.dump(2) << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cout << json{{"error", e.what()}}.dump(2) << '\n';
    return 2;
  }
  return 0;
}
