#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lapdist/dense.hpp"
#include "lapdist/generators.hpp"
#include "lapdist/solver.hpp"

using namespace lapdist;

namespace {

Vector random_rhs(NodeId n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Vector b(n);
  for (NodeId i = 0; i < n; ++i) b[i] = gauss(rng);
  return project_ones(b);
}

double l_norm(const DenseMatrix& l, const Vector& x) { return std::sqrt(std::max(0.0, x.dot(l * x))); }

// ||x - L^+ b||_L / ||b||_L with the dense oracle.
double relative_error(const WeightedGraph& g, const Vector& b, const Vector& x) {
  const DenseMatrix l = laplacian(g);
  const Vector exact = pseudo_inverse(l) * project_ones(b);
  return l_norm(l, x - exact) / l_norm(l, project_ones(b));
}

DenseMatrix preconditioner_matrix(const SchurChain& c) {
  const NodeId n = c.sizes.front();
  DenseMatrix m(n, n);
  for (NodeId j = 0; j < n; ++j) {
    Vector e = Vector::Zero(n);
    e[j] = 1.0;
    m.col(j) = chain_preconditioner_apply(c, e);
  }
  return project_kernel(m);
}

// Least-squares fit y = a + b x; returns {a, b, r2}.
std::array<double, 3> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double b = sxy / sxx;
  return {my - b * mx, b, syy == 0 ? 1.0 : sxy * sxy / (sxx * syy)};
}

}  // namespace

// --- chain ------------------------------------------------------------------

TEST(Chain, SmallGraphIsEmptyChain) {
  const auto g = make_cycle(6).graph;
  AggregationService svc(Model::sequential);
  const auto c = build_chain(identity_minor(g), 2, 0.3, 8, 1, svc);
  EXPECT_TRUE(c.links.empty());
  EXPECT_EQ(c.sizes, std::vector<NodeId>{6});
  const Vector b = random_rhs(6, 2);
  EXPECT_LT((chain_preconditioner_apply(c, b) - pseudo_inverse(laplacian(g)) * b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Chain, CycleEightLinksPassOracle) {
  const auto g = make_cycle(8).graph;
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AggregationService svc(Model::sequential);
    const double eps = 0.3;
    const auto c = build_chain(identity_minor(g), 1, eps, 4, seed, svc);
    ASSERT_GE(c.links.size(), 1u);
    bool good = true;
    for (std::size_t i = 0; i < c.links.size(); ++i) {
      const auto& link = c.links[i];
      const WeightedGraph& next = i + 1 < c.links.size() ? c.links[i + 1].dist.minor : c.base.minor;
      const DenseMatrix sc = schur_complement(laplacian(link.dist.minor), link.terminals);
      good = good && loewner_sandwich_check(sc, laplacian(next), 1.0 - eps, 1.0 + eps);
    }
    ok += good;
  }
  EXPECT_GE(ok, 19);
}

TEST(Chain, NodeCountsStrictlyDecrease) {
  const auto g = make_grid(8, 8).graph;
  AggregationService svc(Model::sequential);
  const auto c = build_chain(identity_minor(g), 2, 0.25, 8, 3, svc);
  EXPECT_GE(c.links.size(), 2u);
  for (std::size_t i = 0; i + 1 < c.sizes.size(); ++i) EXPECT_LT(c.sizes[i + 1], c.sizes[i]);
  EXPECT_FALSE(c.stalled);
  EXPECT_LE(c.sizes.back(), 8);
  for (const auto& link : c.links) {
    // T_i is a set of distinct nodes of G_i.
    auto t = link.terminals;
    std::sort(t.begin(), t.end());
    EXPECT_EQ(std::adjacent_find(t.begin(), t.end()), t.end());
    EXPECT_LT(t.back(), link.dist.minor.num_nodes());
  }
}

TEST(Chain, CompositeSandwichOnRandomGraphs) {
  const double eps = 0.25;
  const int d = 2;
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = make_random_connected(30 + static_cast<NodeId>(seed % 4) * 10, 1.0, 40 + seed, 5).graph;
    AggregationService svc(Model::sequential);
    const auto c = build_chain(identity_minor(g), d, eps, 8, seed, svc);
    const double t = static_cast<double>(c.links.size());
    ok += loewner_sandwich_check(pseudo_inverse(laplacian(g)), preconditioner_matrix(c), std::pow(1.0 - eps, d * t),
                                 std::pow(1.0 + eps, d * t));
  }
  EXPECT_GE(ok, 19);
}

// --- preconditioner ---------------------------------------------------------

TEST(Preconditioner, LinearZeroAndDimension) {
  const auto g = make_grid(6, 6).graph;
  AggregationService svc(Model::sequential);
  const auto c = build_chain(identity_minor(g), 2, 0.25, 8, 4, svc);
  const Vector b1 = random_rhs(36, 1), b2 = random_rhs(36, 2);
  const Vector lhs = chain_preconditioner_apply(c, 2.5 * b1 + b2);
  const Vector rhs = 2.5 * chain_preconditioner_apply(c, b1) + chain_preconditioner_apply(c, b2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(chain_preconditioner_apply(c, Vector::Zero(36)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(chain_preconditioner_apply(c, Vector::Zero(35)), solver_error);
}

TEST(Preconditioner, ErrorAgainstOracleOnCycle) {
  const auto g = make_cycle(8).graph;
  const DenseMatrix l = laplacian(g), pinv = pseudo_inverse(l);
  const double eps = 0.2;
  const int d = 1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    AggregationService svc(Model::sequential);
    const auto c = build_chain(identity_minor(g), d, eps, 4, seed, svc);
    const double t = static_cast<double>(c.links.size());
    const Vector b = random_rhs(8, seed);
    const Vector y = chain_preconditioner_apply(c, b);
    const double bound = (std::pow(1.0 + eps, d * t) - 1.0) * std::sqrt(b.dot(pinv * b));
    EXPECT_LE(l_norm(l, y - pinv * b), bound + 1e-12) << "seed " << seed;
  }
}

// --- Chebyshev --------------------------------------------------------------

TEST(Chebyshev, ExactPreconditionerOneIteration) {
  const auto g = make_grid(5, 5).graph;
  const DenseMatrix l = laplacian(g), pinv = pseudo_inverse(l);
  const LinearOp la = [&](const Vector& x) { return Vector(l * x); };
  const LinearOp pa = [&](const Vector& x) { return Vector(pinv * x); };
  const auto r = chebyshev_solve(la, pa, random_rhs(25, 3), 1e-8, 1.0, 1.0);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_TRUE(r.converged);
}

TEST(Chebyshev, UnitEdge) {
  WeightedGraph g(2);
  g.add_edge(0, 1, 1.0);
  const DenseMatrix l = laplacian(g);
  const LinearOp la = [&](const Vector& x) { return Vector(l * x); };
  const LinearOp pa = [&](const Vector& x) { return Vector(0.5 * x); };  // spectrum of P L is {1}
  Vector b(2);
  b << 1.0, -1.0;
  const auto r = chebyshev_solve(la, pa, b, 1e-6, 0.9, 1.1);
  EXPECT_NEAR(r.x[0], 0.5, 1e-6);
  EXPECT_NEAR(r.x[1], -0.5, 1e-6);
}

TEST(Chebyshev, GridWithJacobiPreconditioner) {
  const auto g = make_grid(8, 8).graph;
  const DenseMatrix l = laplacian(g);
  const Vector dinv = l.diagonal().cwiseInverse();
  const LinearOp la = [&](const Vector& x) { return Vector(l * x); };
  const LinearOp pa = [&](const Vector& x) { return Vector(dinv.cwiseProduct(x)); };
  // Spectrum of D^{-1} L on range(L), from the oracle.
  const DenseMatrix dh = dinv.cwiseSqrt().asDiagonal();
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(dh * l * dh);
  const double lmin = es.eigenvalues()[1], lmax = es.eigenvalues().maxCoeff();
  const Vector b = random_rhs(64, 8);
  const auto r = chebyshev_solve(la, pa, b, 1e-4, lmin, lmax);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, r.budget);
  EXPECT_LE(relative_error(g, b, r.x), 1e-4);
  EXPECT_GE(r.error_bound, relative_error(g, b, r.x) * l_norm(l, b) * (1 - 1e-9));
}

TEST(Chebyshev, UnderestimatedSpectrumFails) {
  const auto g = make_grid(8, 8).graph;
  const DenseMatrix l = laplacian(g);
  const LinearOp la = [&](const Vector& x) { return Vector(l * x); };
  const LinearOp pa = [&](const Vector& x) { return x; };
  try {
    chebyshev_solve(la, pa, random_rhs(64, 1), 1e-6, 0.5, 1.0);  // true range reaches 8
    FAIL() << "expected divergence";
  } catch (const solver_error& e) {
    EXPECT_EQ(e.stage(), "chebyshev");
  }
  EXPECT_THROW(chebyshev_solve(la, pa, random_rhs(64, 1), 1e-6, 0.0, 1.0), solver_error);
}

TEST(Chebyshev, BudgetFormula) {
  EXPECT_EQ(chebyshev_budget(1.0, 0.5), static_cast<int>(std::ceil(std::log(4.0))) + 1);
  EXPECT_EQ(chebyshev_budget(16.0, 1e-3), static_cast<int>(std::ceil(4.0 * std::log(2000.0))) + 1);
}

// --- full solver ------------------------------------------------------------

TEST(Solve, SingleEdge) {
  WeightedGraph g(2);
  g.add_edge(0, 1, 2.0);
  Vector b(2);
  b << 1.0, -1.0;
  for (double eps : {1e-1, 1e-6}) {
    AggregationService svc(Model::sequential);
    const auto r = solve(g, b, eps, svc);
    EXPECT_NEAR(r.x[0], 0.25, 1e-6);
    EXPECT_NEAR(r.x[1], -0.25, 1e-6);
  }
}

TEST(Solve, CycleEightSequential) {
  const auto g = make_cycle(8).graph;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    AggregationService svc(Model::sequential);
    SolverParams p;
    p.seed = seed;
    const Vector b = random_rhs(8, seed);
    const auto r = solve(g, b, 1e-3, svc, p);
    EXPECT_LE(relative_error(g, b, r.x), 1e-3);
  }
}

TEST(Solve, RandomGraphsBothTolerances) {
  int ok = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = make_random_connected(40 + static_cast<NodeId>(seed) * 5, 1.0, 900 + seed, 10).graph;
    AggregationService svc(Model::sequential);
    SolverParams p;
    p.seed = seed;
    const auto setup = build_solver(g, svc, p);
    for (double eps : {1e-2, 1e-3}) {
      const Vector b = random_rhs(g.num_nodes(), seed + 50);
      const auto r = solve_with(setup, b, eps, svc);
      ok += relative_error(g, b, r.x) <= eps;
      ++total;
    }
  }
  EXPECT_GE(ok, total * 19 / 20);
}

TEST(Solve, ProjectsRhsAndReportsComponent) {
  const auto g = make_path(10).graph;
  Vector b = random_rhs(10, 3);
  b.array() += 1.0;
  AggregationService svc(Model::sequential);
  const auto r = solve(g, b, 1e-6, svc);
  EXPECT_NEAR(r.removed_component, std::sqrt(10.0), 1e-9);
  EXPECT_LE(relative_error(g, b, r.x), 1e-6);
}

TEST(Solve, Deterministic) {
  const auto g = make_random_connected(50, 1.5, 4, 5).graph;
  const Vector b = random_rhs(50, 1);
  AggregationService s1(Model::congest), s2(Model::congest);
  const auto r1 = solve(g, b, 1e-3, s1);
  const auto r2 = solve(g, b, 1e-3, s2);
  EXPECT_EQ((r1.x - r2.x).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r1.totals.rounds, r2.totals.rounds);
  EXPECT_EQ(r1.cheb.iterations, r2.cheb.iterations);
  EXPECT_EQ(r1.chain_sizes, r2.chain_sizes);
}

TEST(Solve, RejectsBadInput) {
  WeightedGraph g(3);
  g.add_edge(0, 1, 1.0);
  AggregationService svc(Model::sequential);
  try {
    solve(g, Vector::Zero(3), 1e-3, svc);
    FAIL();
  } catch (const solver_error& e) {
    EXPECT_EQ(e.stage(), "input");
  }
  EXPECT_THROW(solve(make_path(4).graph, Vector::Zero(3), 1e-3, svc), solver_error);
}

TEST(Solve, AsymptoticParamsDegenerateAtDeskScale) {
  const auto p = asymptotic_params(1000);
  EXPECT_GE(p.k, 2);
  EXPECT_GE(p.d, 1);
  EXPECT_NEAR(p.eps, 1.0 / std::pow(std::log2(1000.0), 2), 1e-12);
  EXPECT_NEAR(default_chain_eps(200), 0.25, 1e-12);
  EXPECT_NEAR(default_chain_eps(1 << 20, 1.0), 0.05, 1e-12);
}

TEST(Solve, GridRoundsLinearInLogInverseEps) {
  const auto g = make_grid(8, 8).graph;
  AggregationService svc(Model::congest);
  SolverParams p;
  p.seed = 2;
  const auto setup = build_solver(g, svc, p);
  std::vector<double> x, y;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const Vector b = random_rhs(64, 11);
    const auto r = solve_with(setup, b, eps, svc);
    EXPECT_LE(relative_error(g, b, r.x), eps);
    x.push_back(std::log(1.0 / eps));
    y.push_back(static_cast<double>(r.totals.rounds));
  }
  const auto [a, slope, r2] = linear_fit(x, y);
  EXPECT_GT(slope, 0.0);
  EXPECT_GE(r2, 0.9);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], a + slope * x[i], 0.25 * y[i]);
}

TEST(ChainSolver, FactoryMatchesOracle) {
  const auto g = make_random_connected(40, 1.0, 9, 5).graph;
  const auto s = chain_solver_factory(1e-8)(g);
  const DenseMatrix l = laplacian(g);
  const DenseMatrix pinv = pseudo_inverse(l);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Vector b(40);
    for (auto& x : b) x = gauss(rng);
    const Vector e = s->solve(b) - pinv * b;
    EXPECT_LE(std::sqrt(e.dot(l * e)), 1e-8 * std::sqrt(b.dot(l * b)));
  }
  EXPECT_EQ(s->calls(), 3);
  // one node: zero solution, no setup
  EXPECT_EQ(chain_solver_factory(1e-3)(WeightedGraph(1))->solve(Vector::Ones(1)).norm(), 0.0);
  WeightedGraph split(3);
  split.add_edge(0, 1, 1.0);
  EXPECT_THROW(chain_solver_factory(1e-3)(split), solver_error);
}
