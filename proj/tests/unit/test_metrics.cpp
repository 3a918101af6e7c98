#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "deparadox/error.hpp"
#include "deparadox/kernel.hpp"
#include "deparadox/metrics.hpp"

using namespace deparadox;

namespace {

TreeNode node(std::string id, double rho, std::optional<int> action = std::nullopt) {
  TreeNode n;
  n.id = std::move(id);
  n.effect = EffectEstimate{rho, 0.1, rho - 0.196, rho + 0.196};
  n.recommended_action = action;
  return n;
}

// Root split on V1 at 0 with a given action on each side.
DeparadoxTree split_tree(const Dataset& ds, int left_action, int right_action) {
  TreeNode root = node("0", 0.0);
  root.balanced_leaf = true;
  root.stage = Stage::kPolicy;
  root.split = Split{ds.feature_index("V1"), 0.0};
  root.children = {"00", "01"};
  TreeNode l = node("00", left_action ? 1.0 : -1.0, left_action);
  TreeNode r = node("01", right_action ? 1.0 : -1.0, right_action);
  l.stage = r.stage = Stage::kPolicy;
  return DeparadoxTree({root, l, r}, ds.feature_names(), 1.0);
}

DeparadoxTree root_only(const Dataset& ds, double rho, std::optional<double> kd = std::nullopt) {
  TreeNode root = node("0", rho);
  root.balanced_leaf = true;
  root.kernel_distance = kd;
  return DeparadoxTree({root}, ds.feature_names(), 1.0);
}

SimulatedData design(int g, std::uint64_t seed, double beta0) {
  SimulationSpec spec = SimulationSpec::draw(0, g, 2000, 2, 2, seed);
  spec.beta[0] = beta0;
  return generate(spec);
}

}  // namespace

TEST(Metrics, OptimalTreeHasNoErrorOrRegret) {
  const auto sim = design(1, 1, 0.8);
  const EvaluationReport r = evaluate(split_tree(sim.data, 0, 1), sim.data, &sim.truth);
  EXPECT_EQ(r.n_leaves, 2u);
  EXPECT_EQ(*r.error_rate, 0.0);
  EXPECT_EQ(*r.regret, 0.0);
  EXPECT_FALSE(r.regret_flagged);
}

TEST(Metrics, SingleRootOnSymmetricEffectsMisassignsHalf) {
  const auto sim = design(1, 2, 0.8);
  const EvaluationReport r = evaluate(root_only(sim.data, 0.3), sim.data, &sim.truth);
  // Treat-all is wrong exactly where V1 < 0, which carries effect -0.8.
  double wrong = 0.0, lost = 0.0;
  for (UnitIndex i = 0; i < sim.data.size(); ++i) {
    if (sim.truth.optimal_action[i] == 0) {
      ++wrong;
      lost += std::abs(sim.truth.effect[i]);
    }
  }
  const double n = static_cast<double>(sim.data.size());
  EXPECT_DOUBLE_EQ(*r.error_rate, wrong / n);
  EXPECT_NEAR(*r.error_rate, 0.5, 0.05);
  EXPECT_NEAR(*r.regret, lost / n, 1e-12);
  EXPECT_NEAR(*r.regret, 0.8 * wrong / n, 1e-12);
}

TEST(Metrics, HomogeneousPositiveEffectTreatAllHasNoRegret) {
  const auto sim = design(0, 3, 0.0);
  const EvaluationReport r = evaluate(root_only(sim.data, 0.9), sim.data, &sim.truth);
  EXPECT_EQ(*r.regret, 0.0);
  EXPECT_EQ(*r.error_rate, 0.0);
  const EvaluationReport bad = evaluate(root_only(sim.data, -0.9), sim.data, &sim.truth);
  EXPECT_DOUBLE_EQ(*bad.regret, 1.0);
  EXPECT_EQ(*bad.error_rate, 1.0);
}

TEST(Metrics, RegretIdentityHoldsForAnyTree) {
  for (int g = 1; g <= 2; ++g) {
    const auto sim = design(g, 10 + g, 0.6);
    for (auto [la, ra] : {std::pair{0, 0}, std::pair{0, 1}, std::pair{1, 0}, std::pair{1, 1}}) {
      const DeparadoxTree tree = split_tree(sim.data, la, ra);
      const EvaluationReport r = evaluate(tree, sim.data, &sim.truth);
      double misassigned = 0.0;
      std::size_t errors = 0;
      for (UnitIndex i = 0; i < sim.data.size(); ++i) {
        if (tree_action(tree, sim.data.row(i)) != sim.truth.optimal_action[i]) {
          misassigned += std::abs(sim.truth.effect[i]);
          ++errors;
        }
      }
      EXPECT_NEAR(*r.regret, misassigned / sim.data.size(), 1e-12);
      EXPECT_EQ(*r.error_rate == 0.0, *r.regret == 0.0);
      EXPECT_EQ(errors == 0, *r.error_rate == 0.0);
    }
  }
}

TEST(Metrics, EffectErrorAndCoverageUseLeafTruth) {
  const auto sim = design(1, 4, 0.8);
  const DeparadoxTree tree = split_tree(sim.data, 0, 1);
  const EvaluationReport r = evaluate(tree, sim.data, &sim.truth);
  // Leaf rho is exactly -1 / +1, the true means are -0.8 / +0.8, and the CIs
  // are +-0.196, so neither leaf is covered.
  EXPECT_NEAR(*r.effect_mse, 0.04, 1e-12);
  EXPECT_EQ(*r.coverage, 0.0);

  TreeNode wide = node("0", 0.0);
  wide.effect->ci_low = -5;
  wide.effect->ci_high = 5;
  const DeparadoxTree covered({wide}, sim.data.feature_names(), 1.0);
  EXPECT_EQ(*evaluate(covered, sim.data, &sim.truth).coverage, 1.0);

  TreeNode no_ci = node("0", 0.0);
  no_ci.effect->se.reset();
  no_ci.effect->ci_low.reset();
  no_ci.effect->ci_high.reset();
  const DeparadoxTree uncovered({no_ci}, sim.data.feature_names(), 1.0);
  EXPECT_EQ(*evaluate(uncovered, sim.data, &sim.truth).coverage, 0.0);
}

TEST(Metrics, BalanceSummariesCoverBalancedLeaves) {
  const auto sim = design(0, 5, 1.0);
  const Dataset& ds = sim.data;
  TreeNode root = node("0", 0.0);
  root.split = Split{0, 0.0};
  root.children = {"00", "01"};
  root.kernel_distance = 0.5;
  TreeNode l = node("00", 0.0);
  l.balanced_leaf = true;
  l.kernel_distance = 0.02;
  TreeNode r = node("01", 0.0);
  r.balanced_leaf = true;
  r.kernel_distance = -0.01;
  const DeparadoxTree tree({root, l, r}, ds.feature_names(), 1.0);

  std::vector<UnitIndex> left, right;
  for (UnitIndex i = 0; i < ds.size(); ++i) (ds.covariate(i, 0) <= 0.0 ? left : right).push_back(i);
  const double nl = left.size(), nr = right.size(), n = ds.size();
  const EvaluationReport rep = evaluate(tree, ds);
  EXPECT_NEAR(*rep.kernel_balance, nl * 0.02 / n, 1e-15);
  EXPECT_NEAR(*rep.kernel_balance_unweighted, 0.01, 1e-15);
  const double ks = (nl * ks_statistic(ds, UnitSubset::from_indices(ds, left)) +
                     nr * ks_statistic(ds, UnitSubset::from_indices(ds, right))) / n;
  EXPECT_NEAR(*rep.ks_mean, ks, 1e-12);
  EXPECT_FALSE(rep.regret.has_value());
  EXPECT_FALSE(rep.coverage.has_value());
  EXPECT_EQ(rep.n_leaves, 2u);
}

TEST(Metrics, RejectsMismatchedInputs) {
  const auto sim = design(0, 6, 1.0);
  const Dataset other({1, 0}, {0, 0}, {1, 2}, {"a"});
  EXPECT_THROW(evaluate(root_only(sim.data, 1.0), other), SchemaError);
  GroundTruth short_truth = sim.truth;
  short_truth.effect.pop_back();
  short_truth.propensity.pop_back();
  short_truth.optimal_action.pop_back();
  EXPECT_THROW(evaluate(root_only(sim.data, 1.0), sim.data, &short_truth), SchemaError);
}

TEST(BatchCsv, AppendsMeanAndNormalInterval) {
  EvaluationReport a, b;
  a.n_leaves = 1;
  a.regret = 0.1;
  a.error_rate = 0.2;
  b.n_leaves = 3;
  b.regret = 0.3;
  b.error_rate = 0.4;
  std::ostringstream out;
  write_batch_csv({a, b}, out);
  std::istringstream in(out.str());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0], "dataset,n_leaves,kernel_balance,ks_mean,effect_mse,coverage,regret,error_rate");
  EXPECT_EQ(lines[1], "0,1,,,,,0.1,0.2");
  EXPECT_EQ(lines[3], "mean,2,,,,,0.2,0.3");
  // sd of {1, 3} is sqrt(2); half width 1.96 * sqrt(2) / sqrt(2) = 1.96.
  EXPECT_EQ(lines[4].substr(0, 10), "ci_low,0.0");
  EXPECT_EQ(lines[5].substr(0, 14), "ci_high,3.96,,");
}
