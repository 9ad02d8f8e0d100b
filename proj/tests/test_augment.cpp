#include <gtest/gtest.h>

#include "engage/augment.hpp"
#include "engage/errors.hpp"
#include "mask_laws.hpp"
#include "support.hpp"

using namespace engage;
using namespace engage::testing;

namespace {

using Mask = std::vector<std::uint8_t>;

double keep_rate(const Mask& m) {
  return static_cast<double>(std::count(m.begin(), m.end(), 1)) / static_cast<double>(m.size());
}

}  // namespace

TEST(Threshold, Examples) {
  const std::vector<double> phi{0.2, 0.4, 0.9};
  EXPECT_DOUBLE_EQ(edge_threshold(phi, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(edge_threshold(std::vector<double>{0, 1}, 2.0), 1.5);
  EXPECT_EQ(edge_threshold(std::vector<double>{}, 1.0), kNoThreshold);
  EXPECT_DOUBLE_EQ(feature_threshold(std::vector<double>{0, 1}, 2.0), 1.5);
  EXPECT_DOUBLE_EQ(feature_threshold(phi, 0.0), 0.5);
}

TEST(Threshold, ConstantScoresProtectNothing) {
  const std::vector<double> phi(6, 0.7), probs(6, 0.5);
  for (double lambda : {0.0, 1.0, 3.0}) {
    const double t = edge_threshold(phi, lambda);
    EXPECT_GE(t, 0.7);
    Rng rng(1);
    const auto [m1, m2] = make_edge_masks(phi, probs, t, rng);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(m1[k] + m2[k], 1);
  }
}

TEST(EdgeMasks, AllAboveThresholdKeepsEverything) {
  const std::vector<double> phi{1, 2, 3}, probs{0, 0, 0};
  Rng rng(2);
  const auto [m1, m2] = make_edge_masks(phi, probs, 0.5, rng);
  EXPECT_EQ(m1, Mask(3, 1));
  EXPECT_EQ(m2, Mask(3, 1));
}

TEST(EdgeMasks, CertainKeepGoesToViewOne) {
  const std::vector<double> phi{1, 2, 3}, probs{1, 1, 1};
  Rng rng(3);
  const auto [m1, m2] = make_edge_masks(phi, probs, 10.0, rng);
  EXPECT_EQ(m1, Mask(3, 1));
  EXPECT_EQ(m2, Mask(3, 0));
}

TEST(EdgeMasks, MonteCarloKeepRate) {
  const std::size_t n = 100000;
  const std::vector<double> phi(n, 0.0), probs(n, 0.3);
  Rng rng(4);
  const auto [m1, m2] = make_edge_masks(phi, probs, 1.0, rng);
  EXPECT_NEAR(keep_rate(m1), 0.3, 0.01);
  EXPECT_NEAR(keep_rate(m2), 0.7, 0.01);
}

TEST(EdgeMasks, ArityMismatch) {
  Rng rng(5);
  EXPECT_THROW(make_edge_masks(std::vector<double>{1, 2}, std::vector<double>{1}, 0.0, rng), ShapeError);
}

TEST(FeatureMasks, AllAboveThresholdKeepsFeatures) {
  const std::vector<double> psi{2, 3}, p01{0, 1};
  Rng rng(6);
  const auto [m1, m2] = make_feature_masks(psi, p01, 1.0, rng);
  EXPECT_EQ(m1, Mask(2, 1));
  EXPECT_EQ(m2, Mask(2, 1));
}

TEST(FeatureMasks, ZeroProbabilityGoesToViewTwo) {
  auto g = path_graph(2, 3);
  const std::vector<double> psi{0.0, 5.0}, p01{0.0, 1.0};
  Rng rng(7);
  MaskPair m;
  std::tie(m.feat1, m.feat2) = make_feature_masks(psi, p01, 1.0, rng);
  m.edge1 = m.edge2 = Mask(1, 1);
  const auto [g1, g2] = apply(g, m);
  EXPECT_TRUE(g1.features.row(0).isZero(0.0));
  EXPECT_EQ(g2.features.row(0), g.features.row(0));
  EXPECT_EQ(g1.features.row(1), g.features.row(1));
  EXPECT_EQ(g2.features.row(1), g.features.row(1));
}

TEST(FeatureMasks, MonteCarloKeepRate) {
  const std::size_t n = 100000;
  const std::vector<double> psi(n, 0.0), p01(n, 0.3);
  Rng rng(8);
  const auto [m1, m2] = make_feature_masks(psi, p01, 0.5, rng);
  EXPECT_NEAR(keep_rate(m1), 0.3, 0.01);
}

TEST(EdgeKeepProbs, AverageOfEndpoints) {
  const std::vector<double> p01{0.0, 0.5, 1.0};
  const std::vector<Edge> edges{{0, 1}, {0, 2}, {1, 2}};
  EXPECT_EQ(edge_keep_probs(p01, edges), (std::vector<double>{0.25, 0.5, 0.75}));
}

TEST(Apply, AllOnesIsIdentity) {
  Rng rng(9);
  auto g = random_graph(10, 0.4, 3, rng);
  MaskPair m{Mask(g.edges.size(), 1), Mask(g.edges.size(), 1), Mask(10, 1), Mask(10, 1)};
  const auto [g1, g2] = apply(g, m);
  for (const auto* v : {&g1, &g2}) {
    EXPECT_EQ(v->edges, g.edges);
    EXPECT_EQ(v->features, g.features);
    EXPECT_EQ(v->num_nodes, g.num_nodes);
  }
}

TEST(Apply, ComplementaryMasksPartitionEdges) {
  Rng rng(10);
  auto g = random_graph(12, 0.5, 1, rng);
  MaskPair m;
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    m.edge1.push_back(rng.bernoulli(0.5));
    m.edge2.push_back(1 - m.edge1.back());
  }
  m.feat1 = m.feat2 = Mask(12, 1);
  const auto [g1, g2] = apply(g, m);
  std::vector<Edge> both = g1.edges;
  both.insert(both.end(), g2.edges.begin(), g2.edges.end());
  std::sort(both.begin(), both.end());
  EXPECT_EQ(both, g.edges);
  for (const auto& e : g1.edges) EXPECT_FALSE(has_edge(g2, e));
}

TEST(Apply, GoldenFixture) {
  // 4-cycle plus a chord: edges (0,1) (0,2) (0,3) (1,2) (2,3).
  auto g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}},
                      (Matrix<double>(4, 2) << 1, 2, 3, 4, 5, 6, 7, 8).finished());
  MaskPair m{{1, 0, 1, 1, 0}, {0, 1, 1, 0, 1}, {1, 0, 1, 1}, {1, 1, 0, 1}};
  const auto [g1, g2] = apply(g, m);
  EXPECT_EQ(g1.edges, (std::vector<Edge>{{0, 1}, {0, 3}, {1, 2}}));
  EXPECT_EQ(g2.edges, (std::vector<Edge>{{0, 2}, {0, 3}, {2, 3}}));
  EXPECT_EQ(g1.features, (Matrix<double>(4, 2) << 1, 2, 0, 0, 5, 6, 7, 8).finished());
  EXPECT_EQ(g2.features, (Matrix<double>(4, 2) << 1, 2, 3, 4, 0, 0, 7, 8).finished());
}

TEST(Apply, ArityMismatch) {
  auto g = path_graph(3);
  MaskPair m{Mask(2, 1), Mask(2, 1), Mask(3, 1), Mask(2, 1)};
  EXPECT_THROW(apply(g, m), ShapeError);
  m.feat2 = Mask(3, 1);
  m.edge1 = Mask(1, 1);
  EXPECT_THROW(apply(g, m), ShapeError);
}

TEST(RandomMasks, CertainKeepIsIdentity) {
  Rng rng(11);
  auto g = random_graph(15, 0.3, 2, rng);
  const auto [g1, g2] = apply(g, random_masks(g, 1.0, 1.0, rng));
  EXPECT_EQ(g1.edges, g.edges);
  EXPECT_EQ(g2.features, g.features);
}

TEST(RandomMasks, ZeroKeepEmptiesViews) {
  Rng rng(12);
  auto g = random_graph(15, 0.3, 2, rng);
  const auto [g1, g2] = apply(g, random_masks(g, 0.0, 0.0, rng));
  EXPECT_TRUE(g1.edges.empty());
  EXPECT_TRUE(g2.edges.empty());
  EXPECT_TRUE(g1.features.isZero(0.0));
  EXPECT_TRUE(g2.features.isZero(0.0));
}

TEST(RandomMasks, MonteCarloKeepRate) {
  Graph g;
  g.num_nodes = 100000;
  g.features = Matrix<double>::Zero(g.num_nodes, 1);
  for (int i = 0; i + 1 < g.num_nodes; ++i) g.edges.push_back({i, i + 1});
  Rng rng(13);
  const auto m = random_masks(g, 0.8, 0.8, rng);
  EXPECT_NEAR(keep_rate(m.edge1), 0.8, 0.01);
  EXPECT_NEAR(keep_rate(m.edge2), 0.8, 0.01);
  EXPECT_NEAR(keep_rate(m.feat1), 0.8, 0.01);
  EXPECT_NEAR(keep_rate(m.feat2), 0.8, 0.01);
}

TEST(AugmentConfig, Validation) {
  AugmentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.p_edge = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.p_edge = 0.5;
  c.lambda_f = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MaskLaws, RandomInstances) {
  Rng rng(14);
  for (int t = 0; t < 1000; ++t) {
    const auto why = check_mask_laws(rng);
    ASSERT_TRUE(why.empty()) << "instance " << t << ": " << why;
  }
}
