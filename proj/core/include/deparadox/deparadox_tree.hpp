#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deparadox/balance_tree.hpp"
#include "deparadox/dataset.hpp"
#include "deparadox/kernel.hpp"
#include "deparadox/nuisance.hpp"

namespace deparadox {

// Treatment coefficient of Y ~ 1 + X + Z fitted by least squares.
struct EffectEstimate {
  double rho = 0.0;
  std::optional<double> se;  // empty when the design is rank deficient
  std::optional<double> ci_low;
  std::optional<double> ci_high;

  bool operator==(const EffectEstimate&) const = default;
};

// Constant covariate columns are dropped first. Throws DegenerateArmError
// when the subset lacks one of the arms.
EffectEstimate effect_regression(const Dataset& ds, const UnitSubset& s);

enum class Stage { kBalance, kPolicy };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

struct TreeNode {
  std::string id;  // path from the root: "0", then one digit per level
  Stage stage = Stage::kBalance;
  bool balanced_leaf = false;  // terminal node of the balance stage
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  std::optional<double> kernel_distance;  // raw unbiased estimate
  std::optional<EffectEstimate> effect;
  std::optional<Split> split;
  std::optional<int> recommended_action;
  std::vector<std::string> children;  // left then right
  std::string note;

  bool is_leaf() const noexcept { return children.empty(); }
  bool operator==(const TreeNode&) const = default;
};

// Two-stage tree: balance nodes on top, opposite-effects policy subtrees
// hanging off balanced leaves. Nodes are kept in id order, which is a
// preorder traversal.
class DeparadoxTree {
 public:
  DeparadoxTree() = default;
  DeparadoxTree(std::vector<TreeNode> nodes, std::vector<std::string> feature_names,
                double bandwidth);

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  double bandwidth() const noexcept { return bandwidth_; }

  const TreeNode& root() const { return nodes_.front(); }
  const TreeNode& node(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;

  // Terminal node reached by a covariate row.
  const TreeNode& route(std::span<const double> row) const;
  std::vector<const TreeNode*> leaves() const;
  std::vector<const TreeNode*> balanced_leaves() const;

  bool operator==(const DeparadoxTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::string> feature_names_;
  double bandwidth_ = 0.0;
};

struct DeparadoxConfig {
  BalanceConfig balance;
  Bandwidth bandwidth = Bandwidth::automatic();
  int policy_depth = 2;
  NuisanceConfig nuisance;
  Estimator estimator = Estimator::kDoublyRobust;
  // A policy subtree is kept only when its cross-validated gain over the
  // best single action is significant at this level. 1.0 disables the test.
  double policy_significance = 0.05;

  void validate() const;
};

DeparadoxTree fit_deparadox(const Dataset& ds, const DeparadoxConfig& config);

}  // namespace deparadox
