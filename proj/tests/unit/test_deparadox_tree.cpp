#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "deparadox/deparadox_tree.hpp"
#include "deparadox/error.hpp"
#include "support.hpp"

using namespace deparadox;

namespace {

TreeNode make_node(std::string id, std::vector<std::string> children = {},
                   std::optional<Split> split = std::nullopt) {
  TreeNode n;
  n.id = std::move(id);
  n.children = std::move(children);
  n.split = split;
  n.n_treated = 1;
  n.n_control = 1;
  return n;
}

// Treatment confounded by w; effect +1 for v < 0 and -1 otherwise.
Dataset paradox(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  std::vector<int> t(n);
  std::vector<double> y(n), z(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = normal(rng), v = normal(rng);
    z[2 * i] = w;
    z[2 * i + 1] = v;
    t[i] = unif(rng) < (w > 0 ? 0.8 : 0.2) ? 1 : 0;
    y[i] = (v < 0 ? 1.0 : -1.0) * t[i] + w + normal(rng);
  }
  return Dataset(t, y, z, {"w", "v"});
}

}  // namespace

TEST(EffectRegression, MatchesOrdinaryLeastSquares) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset ds = testing_support::random_dataset(rng, 30 + rng() % 50, 1 + rng() % 3);
    const std::size_t n = ds.size(), k = ds.num_features();
    Eigen::MatrixXd x(n, k + 2);
    Eigen::VectorXd y(n);
    for (UnitIndex i = 0; i < n; ++i) {
      x(i, 0) = 1;
      x(i, 1) = ds.treatment(i);
      for (std::size_t j = 0; j < k; ++j) x(i, 2 + j) = ds.covariate(i, j);
      y(i) = ds.outcome(i);
    }
    const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
    const Eigen::VectorXd beta = xtx_inv * x.transpose() * y;
    const double s2 = (y - x * beta).squaredNorm() / static_cast<double>(n - k - 2);
    const double se = std::sqrt(s2 * xtx_inv(1, 1));

    const EffectEstimate e = effect_regression(ds, UnitSubset::all(ds));
    EXPECT_NEAR(e.rho, beta(1), 1e-9);
    ASSERT_TRUE(e.se.has_value());
    EXPECT_NEAR(*e.se, se, 1e-9);
    EXPECT_NEAR(*e.ci_low, beta(1) - 1.96 * se, 1e-9);
    EXPECT_NEAR(*e.ci_high, beta(1) + 1.96 * se, 1e-9);
  }
}

TEST(EffectRegression, ConstantCovariatesReduceToDifferenceInMeans) {
  const Dataset ds({1, 1, 1, 0, 0, 0}, {5, 6, 7, 1, 2, 3}, {4, 4, 4, 4, 4, 4}, {"c"});
  const EffectEstimate e = effect_regression(ds, UnitSubset::all(ds));
  EXPECT_NEAR(e.rho, 4.0, 1e-12);
  // Pooled variance 1 over 4 degrees of freedom: se = sqrt(1 * (1/3 + 1/3)).
  ASSERT_TRUE(e.se.has_value());
  EXPECT_NEAR(*e.se, std::sqrt(2.0 / 3.0), 1e-12);
}

TEST(EffectRegression, RankDeficientDesignHasNoInterval) {
  // b duplicates a, so the covariate block is collinear.
  std::vector<double> z;
  std::vector<int> t;
  std::vector<double> y;
  for (int i = 0; i < 12; ++i) {
    z.push_back(i);
    z.push_back(2.0 * i);
    t.push_back(i % 2);
    y.push_back(3.0 * (i % 2) + 0.5 * i);
  }
  const Dataset ds(t, y, z, {"a", "b"});
  const EffectEstimate e = effect_regression(ds, UnitSubset::all(ds));
  EXPECT_NEAR(e.rho, 3.0, 1e-9);
  EXPECT_FALSE(e.se.has_value());
  EXPECT_FALSE(e.ci_low.has_value());
}

TEST(EffectRegression, NeedsBothArms) {
  const Dataset ds({1, 1, 0}, {1, 2, 3}, {1, 2, 3}, {"a"});
  EXPECT_THROW(effect_regression(ds, UnitSubset::from_indices(ds, {0, 1})), DegenerateArmError);
}

TEST(Stage, RoundTrips) {
  EXPECT_EQ(parse_stage(to_string(Stage::kBalance)), Stage::kBalance);
  EXPECT_EQ(parse_stage(to_string(Stage::kPolicy)), Stage::kPolicy);
  EXPECT_THROW(parse_stage("leaf"), ValidationError);
}

TEST(DeparadoxTree, ValidatesStructure) {
  const std::vector<std::string> f{"a"};
  EXPECT_THROW(DeparadoxTree({}, f, 1.0), ValidationError);
  EXPECT_THROW(DeparadoxTree({make_node("1")}, f, 1.0), ValidationError);
  EXPECT_THROW(DeparadoxTree({make_node("0"), make_node("0")}, f, 1.0), ValidationError);
  EXPECT_THROW(DeparadoxTree({make_node("0", {"00"}, Split{0, 1})}, f, 1.0), ValidationError);
  EXPECT_THROW(DeparadoxTree({make_node("0", {"00", "01"}, Split{0, 1}), make_node("00")}, f, 1.0),
               ValidationError);
  EXPECT_THROW(DeparadoxTree({make_node("0", {"00", "01"}), make_node("00"), make_node("01")}, f, 1.0),
               ValidationError);
  EXPECT_THROW(DeparadoxTree({make_node("0", {"00", "01"}, Split{3, 1}), make_node("00"),
                              make_node("01")}, f, 1.0),
               ValidationError);
}

TEST(DeparadoxTree, SortsByIdAndRoutes) {
  const DeparadoxTree tree({make_node("01"), make_node("0", {"00", "01"}, Split{0, 1.0}),
                            make_node("00", {"000", "001"}, Split{0, 0.0}), make_node("001"),
                            make_node("000")},
                           {"a"}, 1.0);
  std::vector<std::string> ids;
  for (const auto& n : tree.nodes()) ids.push_back(n.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"0", "00", "000", "001", "01"}));
  const std::vector<double> r1{-1.0}, r2{0.5}, r3{2.0}, edge{1.0};
  EXPECT_EQ(tree.route(r1).id, "000");
  EXPECT_EQ(tree.route(r2).id, "001");
  EXPECT_EQ(tree.route(r3).id, "01");
  EXPECT_EQ(tree.route(edge).id, "001");
  EXPECT_EQ(tree.leaves().size(), 3u);
  EXPECT_THROW(tree.node("0000"), ValidationError);
}

TEST(FitDeparadox, RandomizedHomogeneousDataGivesOneNode) {
  std::mt19937_64 rng(32);
  int single = 0;
  for (int rep = 0; rep < 5; ++rep) {
    const Dataset ds = testing_support::random_dataset(rng, 600, 2);
    const DeparadoxTree tree = fit_deparadox(ds, DeparadoxConfig{});
    single += tree.nodes().size() == 1 ? 1 : 0;
    EXPECT_TRUE(tree.root().balanced_leaf);
  }
  EXPECT_GE(single, 4);
}

TEST(FitDeparadox, BalancesThenSeparatesOppositeEffects) {
  const Dataset ds = paradox(2000, 33);
  DeparadoxConfig c;
  const DeparadoxTree tree = fit_deparadox(ds, c);
  const TreeNode& root = tree.root();
  ASSERT_EQ(root.stage, Stage::kBalance);
  ASSERT_TRUE(root.split.has_value());
  EXPECT_EQ(root.split->feature, 0u);

  std::size_t policy_splits_on_v = 0;
  for (const TreeNode& n : tree.nodes()) {
    if (n.stage == Stage::kPolicy && n.split) {
      policy_splits_on_v += n.split->feature == 1 ? 1 : 0;
      EXPECT_LT(std::abs(n.split->cutoff), 0.3);
    }
    if (n.recommended_action) {
      const auto& leaf_effect = n.effect;
      ASSERT_TRUE(leaf_effect.has_value());
      EXPECT_EQ(*n.recommended_action, leaf_effect->rho > 0 ? 1 : 0) << n.id;
    }
    if (n.is_leaf()) {
      EXPECT_GE(n.n_treated + n.n_control, c.balance.min_leaf);
    }
  }
  EXPECT_GE(policy_splits_on_v, 1u);
  for (const TreeNode* b : tree.balanced_leaves()) EXPECT_FALSE(b->note.empty());
}

TEST(FitDeparadox, DepthOnePolicyMeansBalanceOnly) {
  const Dataset ds = paradox(800, 34);
  DeparadoxConfig c;
  c.policy_depth = 1;
  const DeparadoxTree tree = fit_deparadox(ds, c);
  for (const TreeNode& n : tree.nodes()) EXPECT_EQ(n.stage, Stage::kBalance);
}

TEST(FitDeparadox, IsDeterministic) {
  const Dataset ds = paradox(700, 35);
  EXPECT_EQ(fit_deparadox(ds, DeparadoxConfig{}), fit_deparadox(ds, DeparadoxConfig{}));
}

TEST(DeparadoxConfig, Validates) {
  DeparadoxConfig c;
  c.policy_depth = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = DeparadoxConfig{};
  c.bandwidth = Bandwidth::fixed(-2);
  EXPECT_THROW(c.validate(), ValidationError);
  c = DeparadoxConfig{};
  c.policy_significance = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
}
