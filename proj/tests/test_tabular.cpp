#include <gtest/gtest.h>

#include "taugraph/tabular.hpp"

using namespace taugraph;

namespace {

FeatureTable make_table(std::size_t m) {
  FeatureTable t;
  for (std::size_t j = 0; j < m; ++j) t.columns.push_back("f" + std::to_string(j));
  return t;
}

void add_row(FeatureTable& t, std::vector<double> f, Diagnosis d, std::string group) {
  t.rows.push_back({std::move(f), d, std::move(group), RowKind::cluster, "r" + std::to_string(t.rows.size())});
}

/// 1 informative feature (class mean +-1, unit noise) plus `noise` pure-noise
/// features; each group holds 4 rows of one class.
FeatureTable informative_plus_noise(Rng& rng, std::size_t n, std::size_t noise, double margin) {
  auto t = make_table(1 + noise);
  for (std::size_t i = 0; i < n; ++i) {
    const Diagnosis d = (i / 4) % 2 ? Diagnosis::rpAD : Diagnosis::cAD;
    std::vector<double> f{(d == Diagnosis::rpAD ? margin : -margin) + rng.normal() * 0.5};
    for (std::size_t j = 0; j < noise; ++j) f.push_back(rng.normal());
    add_row(t, f, d, "g" + std::to_string(i / 4));
  }
  return t;
}

/// Brute-force Shapley values by enumerating all M! orderings.
std::vector<double> shapley_by_orderings(const RFModel& m, const std::vector<std::vector<double>>& bg,
                                         const std::vector<double>& x) {
  const std::size_t M = x.size();
  auto value = [&](const std::vector<bool>& in) {
    double s = 0.0;
    for (const auto& b : bg) {
      std::vector<double> z(M);
      for (std::size_t j = 0; j < M; ++j) z[j] = in[j] ? x[j] : b[j];
      s += m.predict_rpad(z.data());
    }
    return s / static_cast<double>(bg.size());
  };
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(M, 0.0);
  double count = 0.0;
  do {
    std::vector<bool> in(M, false);
    double prev = value(in);
    for (std::size_t j : order) {
      in[j] = true;
      const double cur = value(in);
      phi[j] += cur - prev;
      prev = cur;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& p : phi) p /= count;
  return phi;
}

}  // namespace

TEST(AssembleFeatures, RowsPerClusterAndGroups) {
  std::vector<ClusterStats> a(3), b(2);
  const auto t = assemble_features({rows_from_cluster_stats(a, "A", Diagnosis::cAD),
                                    rows_from_cluster_stats(b, "B", Diagnosis::rpAD)});
  ASSERT_EQ(t.size(), 5u);
  EXPECT_EQ(t.rows[2].group_id, "A");
  EXPECT_EQ(t.rows[3].group_id, "B");
  EXPECT_EQ(t.rows[4].label, Diagnosis::rpAD);
  EXPECT_EQ(t.n_features(), ClusterStats::feature_names().size());
}

TEST(AssembleFeatures, SchemaMismatchAndEmpty) {
  std::vector<ClusterStats> a(1);
  try {
    assemble_features({rows_from_cluster_stats(a, "A", Diagnosis::cAD), rows_from_graph_metrics({}, "B", Diagnosis::cAD)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaMismatch);
  }
  EXPECT_TRUE(assemble_features({}).empty());
}

TEST(GroupedKFold, SixGroupsThreeFolds) {
  auto t = make_table(1);
  for (int g = 0; g < 6; ++g) {
    for (int r = 0; r < 3; ++r) add_row(t, {double(g)}, g % 2 ? Diagnosis::rpAD : Diagnosis::cAD, "g" + std::to_string(g));
  }
  const auto splits = grouped_kfold(t, 3, 1);
  ASSERT_EQ(splits.size(), 3u);
  for (const auto& s : splits) {
    std::set<std::string> test;
    for (auto i : s.test) test.insert(t.rows[i].group_id);
    EXPECT_EQ(test.size(), 2u);
    EXPECT_EQ(s.test.size() + s.train.size(), t.size());
  }
  try {
    grouped_kfold(t, 7, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewGroups);
  }
}

TEST(GroupedKFold, NoLeakageProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 10 + rng.index(200);
    const std::size_t ng = 5 + rng.index(30);
    std::vector<std::string> groups;
    std::vector<Diagnosis> labels;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t g = rng.index(ng);
      groups.push_back("g" + std::to_string(g));
      labels.push_back(g % 3 ? Diagnosis::cAD : Diagnosis::rpAD);
    }
    const std::size_t distinct = std::set<std::string>(groups.begin(), groups.end()).size();
    const int k = 2 + static_cast<int>(rng.index(std::min<std::size_t>(distinct, 8) - 1));
    const auto splits = grouped_kfold(groups, labels, k, rng.index(1000));
    EXPECT_TRUE(splits_group_disjoint(splits, groups));
  }
}

TEST(GroupedKFold, LeakageDetectorFlagsSharedGroup) {
  const std::vector<std::string> groups{"a", "a", "b", "b"};
  EXPECT_FALSE(splits_group_disjoint({{{0, 2}, {1, 3}}, {{1, 3}, {0, 2}}}, groups));
  EXPECT_TRUE(splits_group_disjoint({{{0, 1}, {2, 3}}, {{2, 3}, {0, 1}}}, groups));
}

TEST(GroupedKFold, StratifiesGroupsByClass) {
  std::vector<std::string> groups;
  std::vector<Diagnosis> labels;
  for (int g = 0; g < 20; ++g) {
    groups.push_back("s" + std::to_string(g));
    labels.push_back(g < 10 ? Diagnosis::cAD : Diagnosis::rpAD);
  }
  for (const auto& s : grouped_kfold(groups, labels, 5, 42)) {
    int rp = 0;
    for (auto i : s.test) rp += labels[i] == Diagnosis::rpAD;
    EXPECT_EQ(s.test.size(), 4u);
    EXPECT_EQ(rp, 2);
  }
}

TEST(RandomForest, XorIsMemorized) {
  Rng rng(1);
  auto t = make_table(2);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    add_row(t, {a, b}, (a > 0) != (b > 0) ? Diagnosis::rpAD : Diagnosis::cAD, "g" + std::to_string(i));
  }
  RfConfig cfg;
  cfg.n_trees = 50;
  cfg.seed = 3;
  const auto m = train_random_forest(t, cfg);
  const auto p = rf_predict(m, t);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < t.size(); ++i) correct += p[i].predicted() == t.rows[i].label;
  EXPECT_EQ(correct, t.size());
  for (const auto& tree : m.trees) {
    for (const auto& n : tree.nodes) {
      if (n.feature < 0) EXPECT_DOUBLE_EQ(n.proba[0] + n.proba[1], 1.0);
    }
  }
}

TEST(RandomForest, DeterministicForSeed) {
  Rng rng(2);
  const auto t = informative_plus_noise(rng, 120, 3, 1.0);
  RfConfig cfg;
  cfg.n_trees = 30;
  cfg.seed = 9;
  EXPECT_EQ(dump_model(train_random_forest(t, cfg)), dump_model(train_random_forest(t, cfg)));
  cfg.seed = 10;
  const auto a = rf_predict(train_random_forest(t, cfg), t);
  EXPECT_EQ(a.size(), t.size());
}

TEST(RandomForest, SingleClassAndDimensionErrors) {
  auto t = make_table(2);
  add_row(t, {0, 1}, Diagnosis::cAD, "a");
  add_row(t, {1, 0}, Diagnosis::cAD, "b");
  EXPECT_THROW(train_random_forest(t), Error);
  t.rows[1].label = Diagnosis::rpAD;
  RfConfig cfg;
  cfg.n_trees = 3;
  const auto m = train_random_forest(t, cfg);
  try {
    rf_predict(m, std::vector<std::vector<double>>{{1.0, 2.0, 3.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(RandomForest, SingleTreeReturnsLeafDistribution) {
  Rng rng(4);
  const auto t = informative_plus_noise(rng, 80, 1, 0.3);
  RfConfig cfg;
  cfg.n_trees = 1;
  cfg.max_depth = 2;
  const auto m = train_random_forest(t, cfg);
  const auto p = rf_predict(m, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& leaf = m.trees[0].leaf(t.rows[i].features.data());
    EXPECT_EQ(p[i].cad, leaf.proba[0]);
    EXPECT_EQ(p[i].rpad, leaf.proba[1]);
  }
}

TEST(RandomForest, PureLeafGivesCertainty) {
  auto t = make_table(1);
  for (int i = 0; i < 10; ++i) add_row(t, {double(i)}, i < 5 ? Diagnosis::cAD : Diagnosis::rpAD, "g" + std::to_string(i));
  RfConfig cfg;
  cfg.n_trees = 20;
  const auto p = rf_predict(train_random_forest(t, cfg), std::vector<std::vector<double>>{{-5.0}, {50.0}});
  EXPECT_EQ(p[0].cad, 1.0);
  EXPECT_EQ(p[1].rpad, 1.0);
}

TEST(RandomForest, TiesGoToCad) {
  EXPECT_EQ((ClassProba{0.5, 0.5}).predicted(), Diagnosis::cAD);
}

TEST(RandomForest, SeparableDataUnderGroupedCv) {
  Rng rng(6);
  auto t = make_table(2);
  for (int i = 0; i < 200; ++i) {
    const Diagnosis d = i % 2 ? Diagnosis::rpAD : Diagnosis::cAD;
    // Classes separated by a margin of 1.0 along the first axis.
    const double x = d == Diagnosis::rpAD ? rng.uniform(0.5, 3) : rng.uniform(-3, -0.5);
    add_row(t, {x, rng.uniform(-3, 3)}, d, "g" + std::to_string(i / 2 * 2 + (i % 2)));
  }
  RfConfig cfg;
  cfg.n_trees = 50;
  const auto cv = cross_validate(t, grouped_kfold(t, 5, 1), cfg);
  EXPECT_GE(cv.row_accuracy, 0.95);
}

TEST(RandomForest, ModelTextRoundTrip) {
  Rng rng(7);
  const auto t = informative_plus_noise(rng, 60, 2, 1.0);
  RfConfig cfg;
  cfg.n_trees = 7;
  cfg.seed = 1;
  const auto m = train_random_forest(t, cfg);
  const auto back = load_model(dump_model(m));
  EXPECT_EQ(dump_model(back), dump_model(m));
  const auto a = rf_predict(m, t), b = rf_predict(back, t);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].rpad, b[i].rpad);
  EXPECT_THROW(load_model("taugraph-rf v1\nn_trees 1"), Error);
}

TEST(Rfe, TwoFeaturesOneRound) {
  Rng rng(8);
  const auto t = informative_plus_noise(rng, 80, 1, 1.0);
  RfConfig cfg;
  cfg.n_trees = 15;
  const auto r = recursive_feature_elimination(t, cfg, 4, 1);
  EXPECT_EQ(r.elimination_order.size(), 1u);
  EXPECT_EQ(r.accuracy_by_size.size(), 2u);
  EXPECT_EQ(r.elimination_order[0], "f1");
  EXPECT_EQ(r.rank.at("f0"), 1);
}

TEST(Rfe, InformativeFeatureSurvivesToFinalPair) {
  int survived = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const auto t = informative_plus_noise(rng, 120, 4, 1.0);
    RfConfig cfg;
    cfg.n_trees = 25;
    cfg.seed = seed;
    const auto r = recursive_feature_elimination(t, cfg, 3, seed);
    EXPECT_EQ(r.accuracy_by_size.size(), 5u);
    if (r.rank.at("f0") <= 2) ++survived;
  }
  EXPECT_GE(survived, 18);
}

TEST(Shapley, ExactMatchesOrderingEnumeration) {
  Rng rng(9);
  const auto t = informative_plus_noise(rng, 60, 3, 0.7);
  RfConfig cfg;
  cfg.n_trees = 20;
  const auto m = train_random_forest(t, cfg);
  const auto bg = shapley_background(t, 12, 1);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto a = shapley_attribution(m, bg, t.rows[r].features);
    const auto o = shapley_by_orderings(m, bg, t.rows[r].features);
    for (std::size_t j = 0; j < o.size(); ++j) EXPECT_NEAR(a.phi[j], o[j], 1e-12);
  }
}

TEST(Shapley, EfficiencyAndNullPlayer) {
  Rng rng(10);
  auto t = informative_plus_noise(rng, 80, 3, 0.7);
  for (auto& r : t.rows) r.features[2] = 4.0;  // constant: never split on
  RfConfig cfg;
  cfg.n_trees = 40;
  const auto m = train_random_forest(t, cfg);
  const auto bg = shapley_background(t, 0, 0);
  for (std::size_t r = 0; r < 10; ++r) {
    auto x = t.rows[r].features;
    x[2] = rng.uniform(-10, 10);
    const auto a = shapley_attribution(m, bg, x);
    const double sum = std::accumulate(a.phi.begin(), a.phi.end(), a.base_value);
    EXPECT_NEAR(sum, rf_predict(m, std::vector<std::vector<double>>{x})[0].rpad, 1e-9);
    EXPECT_EQ(a.phi[2], 0.0);
  }
}

TEST(Shapley, DuplicatedFeatureSymmetry) {
  Rng rng(11);
  auto t = informative_plus_noise(rng, 80, 2, 0.8);
  t.columns.push_back("f0_copy");
  for (auto& r : t.rows) r.features.push_back(r.features[0]);
  RfConfig cfg;
  cfg.n_trees = 20;
  auto m = train_random_forest(t, cfg);
  // Mirror every tree with the two copies swapped so the forest treats them
  // symmetrically.
  const std::size_t n = m.trees.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto mirror = m.trees[i];
    for (auto& node : mirror.nodes) {
      if (node.feature == 0) node.feature = 3;
      else if (node.feature == 3) node.feature = 0;
    }
    m.trees.push_back(mirror);
  }
  const auto bg = shapley_background(t, 30, 2);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto a = shapley_attribution(m, bg, t.rows[r].features);
    EXPECT_NEAR(a.phi[0], a.phi[3], 1e-9);
  }
}

TEST(Shapley, SampledModeConvergesAndIsSeeded) {
  Rng rng(12);
  const auto t = informative_plus_noise(rng, 60, 2, 0.7);
  RfConfig cfg;
  cfg.n_trees = 20;
  const auto m = train_random_forest(t, cfg);
  const auto bg = shapley_background(t, 0, 0);
  const auto exact = shapley_attribution(m, bg, t.rows[0].features);
  ShapleyConfig sc;
  sc.mode = ShapleyMode::sampled;
  sc.n_permutations = 4000;
  sc.seed = 3;
  const auto s1 = shapley_attribution(m, bg, t.rows[0].features, sc);
  const auto s2 = shapley_attribution(m, bg, t.rows[0].features, sc);
  EXPECT_EQ(s1.phi, s2.phi);
  for (std::size_t j = 0; j < exact.phi.size(); ++j) EXPECT_NEAR(s1.phi[j], exact.phi[j], 0.05);
}

TEST(Shapley, TooManyFeaturesForExact) {
  auto t = make_table(16);
  add_row(t, std::vector<double>(16, 0.0), Diagnosis::cAD, "a");
  add_row(t, std::vector<double>(16, 1.0), Diagnosis::rpAD, "b");
  RfConfig cfg;
  cfg.n_trees = 2;
  const auto m = train_random_forest(t, cfg);
  try {
    shapley_attribution(m, shapley_background(t, 0, 0), t.rows[0].features);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooManyFeaturesForExact);
  }
}
