#include <gtest/gtest.h>

#include <functional>
#include <sstream>

#include "lapdist/dense.hpp"
#include "lapdist/generators.hpp"
#include "lapdist/graph.hpp"
#include "lapdist/io.hpp"

using namespace lapdist;

namespace {

WeightedGraph triangle() {
  WeightedGraph g(3);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.add_edge(2, 0);
  return g;
}

graph_error::Kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const graph_error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected graph_error";
  return graph_error::Kind::parse;
}

}  // namespace

TEST(Laplacian, UnitTriangle) {
  const DenseMatrix l = laplacian(triangle());
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(l(i, j), i == j ? 2.0 : -1.0);
  }
}

TEST(Laplacian, SingleWeightedEdge) {
  WeightedGraph g(2);
  g.add_edge(0, 1, 3);
  const DenseMatrix l = laplacian(g);
  EXPECT_DOUBLE_EQ(l(0, 0), 3);
  EXPECT_DOUBLE_EQ(l(0, 1), -3);
  EXPECT_DOUBLE_EQ(l(1, 0), -3);
  EXPECT_DOUBLE_EQ(l(1, 1), 3);
}

TEST(Laplacian, WeightedPath) {
  WeightedGraph g(3);
  g.add_edge(0, 1, 1);
  g.add_edge(1, 2, 2);
  const DenseMatrix l = laplacian(g);
  EXPECT_DOUBLE_EQ(l(0, 0), 1);
  EXPECT_DOUBLE_EQ(l(1, 1), 3);
  EXPECT_DOUBLE_EQ(l(2, 2), 2);
  EXPECT_DOUBLE_EQ(l(0, 1), -1);
  EXPECT_DOUBLE_EQ(l(1, 2), -2);
  EXPECT_DOUBLE_EQ(l(0, 2), 0);
}

TEST(Laplacian, SelfLoopsAndMultiEdges) {
  WeightedGraph g(2);
  g.add_edge(0, 1, 1);
  g.add_edge(0, 1, 2);
  g.add_edge(0, 0, 5);
  const DenseMatrix l = laplacian(g);
  EXPECT_DOUBLE_EQ(l(0, 0), 3);
  EXPECT_DOUBLE_EQ(l(0, 1), -3);
  Vector x(2);
  x << 1.0, -2.0;
  EXPECT_NEAR(laplacian_energy(g, x), x.dot(l * x), 1e-12);
  EXPECT_NEAR((laplacian_apply(g, x) - l * x).norm(), 0.0, 1e-12);
}

TEST(Laplacian, PropertiesOnRandomGraphs) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = make_random_connected(30 + static_cast<NodeId>(seed) * 15, 1.5, seed, 5).graph;
    const DenseMatrix l = laplacian(g);
    EXPECT_NEAR((l - l.transpose()).cwiseAbs().maxCoeff(), 0.0, 0.0);
    EXPECT_LT(l.rowwise().sum().cwiseAbs().maxCoeff(), 1e-9);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(l);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
    // Connected: exactly one zero eigenvalue.
    EXPECT_LT(std::abs(es.eigenvalues()[0]), 1e-9);
    EXPECT_GT(es.eigenvalues()[1], 1e-9);
  }
}

TEST(TreeDecomposition, PathOfThree) {
  WeightedGraph g(3);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  TreeDecomposition td{{{0, 1}, {1, 2}}, {{0, 1}}};
  EXPECT_EQ(validate_tree_decomposition(g, td), 1);
}

TEST(TreeDecomposition, TriangleSingleBag) {
  TreeDecomposition td{{{0, 1, 2}}, {}};
  EXPECT_EQ(validate_tree_decomposition(triangle(), td), 2);
}

TEST(TreeDecomposition, TriangleUncoveredEdge) {
  TreeDecomposition td{{{0, 1}, {1, 2}}, {{0, 1}}};
  EXPECT_EQ(kind_of([&] { validate_tree_decomposition(triangle(), td); }), graph_error::Kind::edge_coverage);
}

TEST(TreeDecomposition, CoverageAndConnectivityErrors) {
  WeightedGraph g(3);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  TreeDecomposition missing{{{0, 1}}, {}};
  EXPECT_EQ(kind_of([&] { validate_tree_decomposition(g, missing); }), graph_error::Kind::node_coverage);
  TreeDecomposition broken{{{0, 1}, {2}, {1, 2}}, {{0, 1}, {1, 2}}};
  EXPECT_EQ(kind_of([&] { validate_tree_decomposition(g, broken); }), graph_error::Kind::subtree_connectivity);
  TreeDecomposition cyclic{{{0, 1}, {1, 2}}, {{0, 1}, {1, 0}}};
  EXPECT_EQ(kind_of([&] { validate_tree_decomposition(g, cyclic); }), graph_error::Kind::not_a_tree);
}

TEST(TreeDecomposition, GeneratedKTreesHaveWidthK) {
  for (int k = 1; k <= 4; ++k) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto gen = make_ktree(25, k, seed);
      ASSERT_TRUE(gen.decomposition.has_value());
      EXPECT_EQ(validate_tree_decomposition(gen.graph, *gen.decomposition), k);
      const auto partial = make_ktree(25, k, seed, 0.5);
      EXPECT_TRUE(is_connected(partial.graph));
      EXPECT_LE(validate_tree_decomposition(partial.graph, *partial.decomposition), k);
    }
  }
}

TEST(TreeDecomposition, GeneratorFamilies) {
  const auto p = make_path(5);
  EXPECT_EQ(validate_tree_decomposition(p.graph, *p.decomposition), 1);
  const auto c = make_cycle(7);
  EXPECT_EQ(validate_tree_decomposition(c.graph, *c.decomposition), 2);
  const auto g = make_grid(6, 6);
  EXPECT_EQ(g.graph.num_nodes(), 36);
  EXPECT_EQ(g.graph.num_edges(), 60u);
  EXPECT_EQ(validate_tree_decomposition(g.graph, *g.decomposition), 6);
  const auto s = make_star(5);
  EXPECT_EQ(validate_tree_decomposition(s.graph, *s.decomposition), 1);
}

TEST(HopDiameter, Examples) {
  EXPECT_EQ(hop_diameter(WeightedGraph(1)), 0);
  EXPECT_EQ(hop_diameter(make_path(4).graph), 3);
  EXPECT_EQ(hop_diameter(make_cycle(6).graph), 3);
  EXPECT_EQ(kind_of([] { hop_diameter(WeightedGraph(2)); }), graph_error::Kind::disconnected);
}

TEST(MinorDensity, SmallGraphs) {
  EXPECT_EQ(minor_density_bruteforce(triangle()), (Rational{1, 1}));
  EXPECT_EQ(minor_density_bruteforce(make_path(2).graph), (Rational{1, 2}));
  EXPECT_EQ(minor_density_bruteforce(make_complete(4).graph), (Rational{3, 2}));
  EXPECT_EQ(minor_density_bruteforce(make_path(3).graph), (Rational{2, 3}));
  EXPECT_EQ(minor_density_bruteforce(make_cycle(5).graph), (Rational{1, 1}));
  WeightedGraph k23(5);
  for (NodeId a = 0; a < 2; ++a) {
    for (NodeId b = 2; b < 5; ++b) k23.add_edge(a, b);
  }
  EXPECT_EQ(minor_density_bruteforce(k23), (Rational{5, 4}));
}

TEST(MinorDensity, CapExceeded) {
  EXPECT_EQ(kind_of([] { minor_density_bruteforce(make_path(11).graph); }), graph_error::Kind::cap_exceeded);
}

TEST(Partition, Examples) {
  const auto g = make_path(4).graph;
  EXPECT_EQ(validate_partition(g, Partition{{{0, 1, 2, 3}}}, 1), 1);
  EXPECT_EQ(validate_partition(g, Partition{{{0, 1, 2}, {2, 3}}}, 2), 2);
  EXPECT_EQ(kind_of([&] { validate_partition(g, Partition{{{0, 2}}}, 1); }), graph_error::Kind::part_disconnected);
  EXPECT_EQ(kind_of([&] { validate_partition(g, Partition{{{0, 1}, {1, 2}}}, 1); }),
            graph_error::Kind::multiplicity_overflow);
}

TEST(GraphIO, RoundTrip) {
  const auto g = make_grid(3, 4, 7, 3).graph;
  std::stringstream buf;
  write_graph(buf, g);
  const auto h = read_graph(buf);
  ASSERT_EQ(h.num_nodes(), g.num_nodes());
  ASSERT_EQ(h.num_edges(), g.num_edges());
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    EXPECT_EQ(h.edges()[i].u, g.edges()[i].u);
    EXPECT_EQ(h.edges()[i].v, g.edges()[i].v);
    EXPECT_EQ(h.edges()[i].weight, g.edges()[i].weight);
  }
}

TEST(GraphIO, RejectsBadInput) {
  std::stringstream over("2 1 3\n0 1 4\n");
  EXPECT_EQ(kind_of([&] { read_graph(over); }), graph_error::Kind::invalid_weight);
  std::stringstream short_file("3 2 1\n0 1 1\n");
  EXPECT_EQ(kind_of([&] { read_graph(short_file); }), graph_error::Kind::parse);
  std::stringstream parts("0 1 2\n# comment\n3 4\n");
  const auto p = read_partition(parts);
  ASSERT_EQ(p.parts.size(), 2u);
  EXPECT_EQ(p.parts[1], (std::vector<NodeId>{3, 4}));
}
