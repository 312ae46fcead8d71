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

#ifndef LAPDIST_EXPERIMENT_HPP_
#define LAPDIST_EXPERIMENT_HPP_

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lapdist/approxsc.hpp"
#include "lapdist/dense.hpp"
#include "lapdist/eliminate.hpp"
#include "lapdist/generators.hpp"
#include "lapdist/service.hpp"
#include "lapdist/solver.hpp"
#include "lapdist/ultrasparsify.hpp"

namespace lapdist {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config

/// Sweep description. Array values in `graph` and `params` are swept as a
/// cartesian product; scalars are fixed. `sizes` sets n (rows = cols for
/// grids).
struct ExperimentConfig {
  std::string family = "path";
  std::vector<NodeId> sizes;
  json graph = json::object();   // generator parameters
  std::vector<std::string> models{"sequential"};
  std::string module = "aggregate";
  json params = json::object();  // module parameters
  std::vector<std::uint64_t> seeds{1};
  NodeId oracle_cap = 400;       // error_vs_oracle is computed up to this n
  std::string output;            // CSV path (the CLI writes into --out when empty)

  static ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    c.family = j.value("family", c.family);
    if (j.contains("sizes")) c.sizes = j.at("sizes").get<std::vector<NodeId>>();
    if (j.contains("graph")) c.graph = j.at("graph");
    if (j.contains("model")) c.models = {j.at("model").get<std::string>()};
    if (j.contains("models")) c.models = j.at("models").get<std::vector<std::string>>();
    c.module = j.value("module", c.module);
    if (j.contains("params")) c.params = j.at("params");
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      if (s.is_number_integer()) {
        c.seeds.clear();
        for (std::uint64_t i = 1; i <= s.get<std::uint64_t>(); ++i) c.seeds.push_back(i);
      } else {
        c.seeds = s.get<std::vector<std::uint64_t>>();
      }
    }
    c.oracle_cap = j.value("oracle_cap", c.oracle_cap);
    c.output = j.value("output", c.output);
    for (const auto& m : c.models) parse_model(m);
    return c;
  }

  json to_json() const {
    return {{"family", family}, {"sizes", sizes},   {"graph", graph}, {"models", models},          {"module", module},
            {"params", params}, {"seeds", seeds},   {"oracle_cap", oracle_cap}, {"output", output}};
  }
};

/// Every combination of the array-valued keys of `spec`, in key order.
inline std::vector<json> expand_grid(const json& spec) {
  std::vector<json> out{json::object()};
  for (const auto& [key, value] : spec.items()) {
    const std::vector<json> choices = value.is_array() ? value.get<std::vector<json>>() : std::vector<json>{value};
    std::vector<json> next;
    for (const auto& base : out) {
      for (const auto& v : choices) {
        json cell = base;
        cell[key] = v;
        next.push_back(std::move(cell));
      }
    }
    out = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rows

struct ExperimentRow {
  std::string family;
  NodeId n = 0;
  std::size_t m = 0;
  int diameter = 0;
  int tw = -1;  // width of the generator's decomposition, -1 if none
  std::string model;
  std::string module;
  json params = json::object();  // graph and module parameters of the cell
  std::uint64_t seed = 0;
  std::int64_t rounds_local = 0;   // all rounds
  std::int64_t rounds_global = 0;  // rounds carrying global messages
  std::int64_t msgs_local = 0;
  std::int64_t msgs_global = 0;
  double error_vs_oracle = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

inline const char* kCsvHeader =
    "family,n,m,D,tw,model,module,params-json,seed,rounds_local,rounds_global,msgs_local,msgs_global,error_vs_oracle,status";

namespace detail {

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

inline double log_range(const GeneralizedRange& r) {
  return std::max(std::abs(std::log(r.min)), std::abs(std::log(r.max)));
}

inline Vector rhs_for(NodeId n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Vector b(n);
  for (NodeId i = 0; i < n; ++i) b[i] = gauss(rng);
  return project_ones(b);
}

inline GeneratorParams generator_params(const std::string& family, NodeId n, const json& cell) {
  GeneratorParams p;
  p.n = n;
  p.rows = p.cols = n;
  if (family == "grid") {
    p.rows = cell.value("rows", n);
    p.cols = cell.value("cols", n);
  }
  p.k = cell.value("k", p.k);
  p.keep = cell.value("keep", p.keep);
  p.extra = cell.value("extra", p.extra);
  p.max_weight = cell.value("max_weight", p.max_weight);
  return p;
}

inline void record(ExperimentRow& row, const AggregationCost& c) {
  row.rounds_local = c.rounds;
  row.rounds_global = c.global_rounds;
  row.msgs_local = c.local_messages;
  row.msgs_global = c.global_messages;
}

inline void run_module(ExperimentRow& row, const WeightedGraph& g, const GeneratedGraph& gen, Model model,
                       const json& p, std::uint64_t seed, NodeId oracle_cap) {
  const NodeId n = g.num_nodes();
  const bool oracle = n <= oracle_cap;
  if (row.module == "aggregate") {
    const int count = p.value("parts", std::max(1, static_cast<int>(n) / 4));
    const NodeId size = p.value("part_size", std::max<NodeId>(2, n / 4));
    const int rho = p.value("rho", 1);
    const Partition parts = make_congested_partition(g, count, size, rho, seed);
    std::mt19937_64 rng(seed + 1);
    std::vector<double> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = static_cast<double>(rng() % 1000);
    const PartInputs inputs = inputs_from_node_values(parts, values);
    AggregationConfig cfg;
    cfg.sim.seed = seed;
    cfg.sim.record_messages = false;
    cfg.congest.provider = parse_provider(p.value("provider", std::string("baseline")));
    if (cfg.congest.provider == ShortcutProvider::treedec) cfg.congest.decomposition = gen.decomposition;
    const auto res = aggregate(model, g, parts, inputs, ops::sum(), cfg);
    const auto expect = sequential_part_fold(inputs, ops::sum());
    int wrong = 0;
    for (std::size_t i = 0; i < parts.parts.size(); ++i) {
      try {
        wrong += res.part_value(i) == expect[i] ? 0 : 1;
      } catch (const aggregation_error&) {
        ++wrong;
      }
    }
    row.rounds_local = res.ledger.rounds;
    row.rounds_global = res.ledger.rounds_with_global;
    row.msgs_local = res.ledger.local_messages;
    row.msgs_global = res.ledger.global_messages;
    row.error_vs_oracle = wrong;
    row.params["measured_rho"] = res.rho;
    if (res.ledger.status != RunStatus::completed) row.status = "aggregate:max_rounds";
  } else if (row.module == "solver") {
    SolverParams sp;
    sp.seed = seed;
    sp.k = p.value("k", sp.k);
    sp.d = p.value("d", sp.d);
    sp.chain_eps = p.value("chain_eps", sp.chain_eps);
    AggregationService svc(model);
    const Vector b = rhs_for(n, seed + 17);
    const double eps = p.value("eps", 1e-3);
    const auto r = solve(g, b, eps, svc, sp);
    record(row, r.totals);
    row.params["iterations"] = r.cheb.iterations;
    if (oracle) {
      const DenseMatrix l = laplacian(g);
      const Vector e = r.x - pseudo_inverse(l) * b;
      row.error_vs_oracle = std::sqrt(std::max(0.0, e.dot(l * e))) / std::sqrt(b.dot(l * b));
    }
  } else if (row.module == "eliminate") {
    AggregationService svc(model);
    const int d = p.value("d", 1);
    const double eps = p.value("eps", 0.5);
    const auto r = eliminate(identity_minor(g), d, eps, seed, svc);
    record(row, svc.totals());
    row.params["terminals"] = r.terminals.size();
    if (oracle) {
      const DenseMatrix comp = project_kernel(materialize(*r.reduction, pseudo_inverse(laplacian(r.graph))));
      row.error_vs_oracle = log_range(generalized_range(pseudo_inverse(laplacian(g)), comp));
    }
  } else if (row.module == "ultrasparsify") {
    AggregationService svc(model);
    UltrasparsifyOptions uo;
    uo.seed = seed;
    const double k = p.value("k", 4.0);
    const auto r = ultrasparsify(identity_minor(g), k, svc, uo);
    record(row, svc.totals());
    row.params["reduced_nodes"] = r.elim.reduced.num_nodes();
    if (oracle) row.error_vs_oracle = generalized_range(laplacian(g), laplacian(r.sampled.h)).max / (2.0 * k);
  } else if (row.module == "approxsc") {
    AggregationService svc(model);
    const auto count = static_cast<std::size_t>(p.value("terminals", 4));
    std::vector<NodeId> t(static_cast<std::size_t>(n));
    std::iota(t.begin(), t.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(t.begin(), t.end(), rng);
    t.resize(std::min(count, t.size()));
    std::sort(t.begin(), t.end());
    ApproxScOptions opt;
    opt.threshold_scale = p.value("threshold_scale", opt.threshold_scale);
    const double eps = p.value("eps", 0.1);
    const auto r = approx_sc(identity_minor(g), t, eps, oracle_solver_factory(), seed, svc, opt);
    record(row, svc.totals());
    row.params["edges_out"] = live_edges(r.dist.minor);
    if (oracle) {
      row.error_vs_oracle = log_range(generalized_range(schur_complement(laplacian(g), t),
                                                        schur_complement(laplacian(r.dist.minor), r.terminals)));
    }
  } else {
    throw std::invalid_argument("unknown module '" + row.module + "'");
  }
}

}  // namespace detail

/// Runs every (size, graph cell, model, module cell, seed) combination in
/// that nesting order. Failures are recorded with the stage in `status`.
inline std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg) {
  std::vector<ExperimentRow> rows;
  const auto graph_cells = expand_grid(cfg.graph);
  const auto module_cells = expand_grid(cfg.params);
  for (NodeId n : cfg.sizes) {
    for (const auto& gc : graph_cells) {
      for (const auto& model_name : cfg.models) {
        const Model model = parse_model(model_name);
        for (const auto& mc : module_cells) {
          for (std::uint64_t seed : cfg.seeds) {
            ExperimentRow row;
            row.family = cfg.family;
            row.model = model_name;
            row.module = cfg.module;
            row.seed = seed;
            row.params = gc;
            for (const auto& [k, v] : mc.items()) row.params[k] = v;
            try {
              const auto gen = generate_graph(cfg.family, detail::generator_params(cfg.family, n, gc), seed);
              const WeightedGraph& g = gen.graph;
              row.n = g.num_nodes();
              row.m = g.num_edges();
              row.diameter = hop_diameter(g);
              if (gen.decomposition) row.tw = validate_tree_decomposition(g, *gen.decomposition);
              detail::run_module(row, g, gen, model, mc, seed, cfg.oracle_cap);
            } catch (const solver_error& e) {
              row.status = "solver:" + e.stage();
            } catch (const std::exception& e) {
              row.status = cfg.module + ":error";
            }
            rows.push_back(std::move(row));
          }
        }
      }
    }
  }
  return rows;
}

inline void write_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.family << ',' << r.n << ',' << r.m << ',' << r.diameter << ',' << r.tw << ',' << r.model << ',' << r.module
        << ',' << detail::csv_quote(r.params.dump()) << ',' << r.seed << ',' << r.rounds_local << ',' << r.rounds_global
        << ',' << r.msgs_local << ',' << r.msgs_global << ',' << detail::fmt_double(r.error_vs_oracle) << ',' << r.status
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Reports

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 1.0;
  std::size_t points = 0;
};

/// Least squares y = intercept + slope x.
inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  f.points = x.size();
  if (x.empty()) return f;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r2 = (sxx > 0 && syy > 0) ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

/// Least squares y = c x through the origin; r2 is 1 - SSE / sum((y - mean y)^2).
inline LinearFit fit_proportional(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  f.points = x.size();
  double sxy = 0, sxx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    my += y[i] / static_cast<double>(x.size());
  }
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  double sse = 0, sst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sse += (y[i] - f.slope * x[i]) * (y[i] - f.slope * x[i]);
    sst += (y[i] - my) * (y[i] - my);
  }
  f.r2 = sst > 0 ? 1.0 - sse / sst : 1.0;
  return f;
}

struct ReportGroup {
  std::string family, model, module;
  NodeId n = 0;
  json params;  // cell parameters (measured fields removed)
  int runs = 0, failures = 0;
  double mean_rounds = 0.0;
  double mean_error = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> statuses;  // non-ok statuses, in row order
};

struct EpsFit {
  std::string family, model;
  NodeId n = 0;
  json params;
  LinearFit fit;  // mean rounds vs ln(1/eps)
};

struct SizeFit {
  std::string family, model, module;
  json params;
  LinearFit fit;  // ln(mean rounds) vs ln(n)
};

struct ExperimentReport {
  std::vector<ReportGroup> groups;
  std::vector<EpsFit> eps_fits;
  std::vector<SizeFit> size_fits;
};

namespace detail {

inline json cell_params(const json& p) {
  json out = p;
  for (const char* k : {"measured_rho", "iterations", "terminals", "reduced_nodes", "edges_out"}) out.erase(k);
  return out;
}

}  // namespace detail

/// One group per (family, n, model, module, params); eps sweeps of the
/// solver get a rounds-vs-ln(1/eps) fit, size sweeps a log-log fit.
inline ExperimentReport emit_report(const std::vector<ExperimentRow>& rows) {
  ExperimentReport rep;
  std::map<std::string, std::size_t> index;
  std::vector<int> ok_counts;
  std::vector<double> err_sums;
  std::vector<int> err_counts;
  for (const auto& r : rows) {
    const json cp = detail::cell_params(r.params);
    const std::string key = r.family + "|" + std::to_string(r.n) + "|" + r.model + "|" + r.module + "|" + cp.dump();
    auto [it, fresh] = index.emplace(key, rep.groups.size());
    if (fresh) {
      ReportGroup g;
      g.family = r.family;
      g.model = r.model;
      g.module = r.module;
      g.n = r.n;
      g.params = cp;
      rep.groups.push_back(g);
      ok_counts.push_back(0);
      err_sums.push_back(0.0);
      err_counts.push_back(0);
    }
    auto& g = rep.groups[it->second];
    ++g.runs;
    if (r.status != "ok") {
      ++g.failures;
      g.statuses.push_back(r.status);
      continue;
    }
    const auto i = it->second;
    ++ok_counts[i];
    g.mean_rounds += static_cast<double>(r.rounds_local);
    if (!std::isnan(r.error_vs_oracle)) {
      err_sums[i] += r.error_vs_oracle;
      ++err_counts[i];
    }
  }
  for (std::size_t i = 0; i < rep.groups.size(); ++i) {
    if (ok_counts[i] > 0) rep.groups[i].mean_rounds /= ok_counts[i];
    if (err_counts[i] > 0) rep.groups[i].mean_error = err_sums[i] / err_counts[i];
  }
  // Eps sweeps: same everything but eps.
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> eps_pts;
  std::map<std::string, EpsFit> eps_meta;
  // Size sweeps: same everything but n.
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> size_pts;
  std::map<std::string, SizeFit> size_meta;
  for (const auto& g : rep.groups) {
    if (g.runs == g.failures) continue;
    if (g.module == "solver" && g.params.contains("eps")) {
      json rest = g.params;
      const double eps = rest.at("eps").get<double>();
      rest.erase("eps");
      const std::string key = g.family + "|" + std::to_string(g.n) + "|" + g.model + "|" + rest.dump();
      eps_pts[key].first.push_back(std::log(1.0 / eps));
      eps_pts[key].second.push_back(g.mean_rounds);
      eps_meta[key] = {g.family, g.model, g.n, rest, {}};
    }
    if (g.mean_rounds > 0) {
      const std::string key = g.family + "|" + g.model + "|" + g.module + "|" + g.params.dump();
      size_pts[key].first.push_back(std::log(static_cast<double>(g.n)));
      size_pts[key].second.push_back(std::log(g.mean_rounds));
      size_meta[key] = {g.family, g.model, g.module, g.params, {}};
    }
  }
  for (auto& [key, pts] : eps_pts) {
    if (pts.first.size() < 2) continue;
    auto meta = eps_meta[key];
    meta.fit = fit_line(pts.first, pts.second);
    rep.eps_fits.push_back(meta);
  }
  for (auto& [key, pts] : size_pts) {
    std::vector<double> xs = pts.first;
    std::sort(xs.begin(), xs.end());
    if (std::unique(xs.begin(), xs.end()) - xs.begin() < 2) continue;
    auto meta = size_meta[key];
    meta.fit = fit_line(pts.first, pts.second);
    rep.size_fits.push_back(meta);
  }
  return rep;
}

inline json report_to_json(const ExperimentReport& rep) {
  json j;
  j["groups"] = json::array();
  for (const auto& g : rep.groups) {
    j["groups"].push_back({{"family", g.family},
                           {"n", g.n},
                           {"model", g.model},
                           {"module", g.module},
                           {"params", g.params},
                           {"runs", g.runs},
                           {"failures", g.failures},
                           {"statuses", g.statuses},
                           {"mean_rounds", g.mean_rounds},
                           {"mean_error", std::isnan(g.mean_error) ? json(nullptr) : json(g.mean_error)}});
  }
  j["eps_fits"] = json::array();
  for (const auto& f : rep.eps_fits) {
    j["eps_fits"].push_back({{"family", f.family},
                             {"n", f.n},
                             {"model", f.model},
                             {"params", f.params},
                             {"intercept", f.fit.intercept},
                             {"slope", f.fit.slope},
                             {"r2", f.fit.r2},
                             {"points", f.fit.points}});
  }
  j["size_fits"] = json::array();
  for (const auto& f : rep.size_fits) {
    j["size_fits"].push_back({{"family", f.family},
                              {"model", f.model},
                              {"module", f.module},
                              {"params", f.params},
                              {"loglog_slope", f.fit.slope},
                              {"r2", f.fit.r2},
                              {"points", f.fit.points}});
  }
  return j;
}

/// Plain-text tables of the report.
inline void write_report_text(std::ostream& out, const ExperimentReport& rep) {
  out << "family\tn\tmodel\tmodule\tparams\truns\tfailures\tmean_rounds\tmean_error\n";
  for (const auto& g : rep.groups) {
    out << g.family << '\t' << g.n << '\t' << g.model << '\t' << g.module << '\t' << g.params.dump() << '\t' << g.runs
        << '\t' << g.failures << '\t' << detail::fmt_double(g.mean_rounds) << '\t' << detail::fmt_double(g.mean_error)
        << '\n';
  }
  if (!rep.eps_fits.empty()) {
    out << "\nrounds = a + b ln(1/eps)\nfamily\tn\tmodel\ta\tb\tR2\n";
    for (const auto& f : rep.eps_fits) {
      out << f.family << '\t' << f.n << '\t' << f.model << '\t' << detail::fmt_double(f.fit.intercept) << '\t'
          << detail::fmt_double(f.fit.slope) << '\t' << detail::fmt_double(f.fit.r2) << '\n';
    }
  }
  if (!rep.size_fits.empty()) {
    out << "\nln rounds = a + b ln n\nfamily\tmodel\tmodule\tparams\tb\tR2\n";
    for (const auto& f : rep.size_fits) {
      out << f.family << '\t' << f.model << '\t' << f.module << '\t' << f.params.dump() << '\t'
          << detail::fmt_double(f.fit.slope) << '\t' << detail::fmt_double(f.fit.r2) << '\n';
    }
  }
}

}  // namespace lapdist

#endif  // LAPDIST_EXPERIMENT_HPP_
