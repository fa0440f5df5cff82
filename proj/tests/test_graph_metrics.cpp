#include <gtest/gtest.h>

#include "oracles.hpp"
#include "taugraph/graph_metrics.hpp"
#include "taugraph/random.hpp"

using namespace taugraph;

namespace {

/// Random connected graph: a random spanning tree plus extra edges. Small
/// integer lengths make equal-length shortest paths common.
PathologyGraph random_connected(Rng& rng, std::size_t n, int max_len) {
  PathologyGraph g;
  for (std::size_t i = 0; i < n; ++i) g.nodes.push_back({"n" + std::to_string(i), 0, 0, Layer::L1});
  std::set<std::pair<std::size_t, std::size_t>> have;
  auto add = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    if (a == b || !have.insert({a, b}).second) return;
    const double len = 1.0 + static_cast<double>(rng.index(static_cast<std::size_t>(max_len)));
    g.edges.push_back({a, b, len, len, 1.0 / std::sqrt(len)});
  };
  for (std::size_t i = 1; i < n; ++i) add(i, rng.index(i));
  const std::size_t extra = rng.index(n * 2);
  for (std::size_t k = 0; k < extra; ++k) add(rng.index(n), rng.index(n));
  return g;
}

PathologyGraph path_graph(std::size_t n) {
  PathologyGraph g;
  for (std::size_t i = 0; i < n; ++i) g.nodes.push_back({"p" + std::to_string(i), double(i), 0});
  for (std::size_t i = 0; i + 1 < n; ++i) g.edges.push_back({i, i + 1, 1.0, 1.0, 1.0});
  return g;
}

}  // namespace

TEST(Centralities, MatchExhaustiveOracleOnSmallConnectedGraphs) {
  Rng rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(7);
    const auto g = random_connected(rng, n, trial % 2 ? 3 : 50);
    const auto c = centralities(g);
    const auto o = oracle::exhaustive_centrality(g);
    for (std::size_t v = 0; v < n; ++v) {
      EXPECT_NEAR(c.betweenness[v], o.betweenness[v], 1e-9) << "trial " << trial << " node " << v;
      EXPECT_NEAR(c.closeness[v], o.closeness[v], 1e-9) << "trial " << trial << " node " << v;
    }
  }
}

TEST(Centralities, PathGraphClosedForm) {
  // Path a-b-c: b lies on the single a..c path.
  const auto g = path_graph(3);
  const auto c = centralities(g);
  EXPECT_DOUBLE_EQ(c.betweenness[0], 0.0);
  EXPECT_DOUBLE_EQ(c.betweenness[1], 1.0);
  EXPECT_DOUBLE_EQ(c.closeness[1], 1.0);
  EXPECT_DOUBLE_EQ(c.closeness[0], 2.0 / 3.0);
}

TEST(Centralities, DisconnectedScalesClosenessByReach) {
  auto g = path_graph(2);
  g.nodes.push_back({"iso", 5, 5});
  const auto c = centralities(g);
  // Reach 2 of 3 nodes: (1/1) * (1/2).
  EXPECT_DOUBLE_EQ(c.closeness[0], 0.5);
  EXPECT_DOUBLE_EQ(c.closeness[2], 0.0);
  EXPECT_DOUBLE_EQ(c.betweenness[2], 0.0);
}

TEST(ClusteringCoefficient, TriangleWithPendant) {
  PathologyGraph g;
  for (int i = 0; i < 4; ++i) g.nodes.push_back({std::to_string(i), 0, 0});
  g.edges = {{0, 1, 1, 1, 1}, {1, 2, 1, 1, 1}, {0, 2, 1, 1, 1}, {2, 3, 1, 1, 1}};
  const auto cc = clustering_coefficients(g);
  EXPECT_DOUBLE_EQ(cc[0], 1.0);
  EXPECT_DOUBLE_EQ(cc[2], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(cc[3], 0.0);
}

TEST(NodeFeatures, LayoutAndOneHot) {
  auto g = path_graph(3);
  g.nodes[0].layer = Layer::L2;
  g.nodes[1].layer = Layer::L6;
  const auto f = node_features(g);
  ASSERT_EQ(f.cols(), kNodeFeatureCount);
  ASSERT_EQ(node_feature_names().size(), static_cast<std::size_t>(kNodeFeatureCount));
  EXPECT_EQ(f(1, 0), 2.0);
  EXPECT_EQ(f(0, 5), 1.0);
  EXPECT_EQ(f(1, 9), 1.0);
  EXPECT_EQ(f.row(2).tail(6).sum(), 0.0);  // unassigned layer
  EXPECT_EQ(f(1, 2), 1.0);
}

TEST(ComponentLabels, OrderedByLowestNode) {
  std::vector<GraphEdge> e = {{2, 4, 1, 1, 1}, {0, 3, 1, 1, 1}};
  EXPECT_EQ(component_labels(5, e), (std::vector<int>{0, 1, 2, 0, 2}));
}

TEST(GraphSummary, CountsAndNormalizations) {
  auto g = path_graph(4);
  g.nodes.push_back({"iso", 0, 0});
  g.alpha_optimal_um = 2.0;
  const auto m = graph_summary(g, 0.5);
  EXPECT_EQ(m.n_nodes, 5);
  EXPECT_EQ(m.n_edges, 3);
  EXPECT_EQ(m.n_components, 2);
  EXPECT_DOUBLE_EQ(m.largest_component_frac, 0.8);
  EXPECT_DOUBLE_EQ(m.n_nodes_per_mm2, 10.0);
  EXPECT_DOUBLE_EQ(m.total_edge_length_per_alpha, 1.5);
  EXPECT_EQ(m.alpha_optimal_um, 2.0);
  EXPECT_EQ(m.values().size(), GraphMetrics::names().size());
  EXPECT_THROW(graph_summary(g, 0.0), Error);
}

TEST(GraphSummary, EmptyGraphIsAllZeros) {
  const auto m = graph_summary(PathologyGraph{}, 1.0);
  for (double v : m.values()) EXPECT_EQ(v, 0.0);
}
