#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "deparadox/balance_tree.hpp"
#include "deparadox/dataset.hpp"
#include "deparadox/nuisance.hpp"

namespace deparadox {

// Leaf-size requirements for policy trees. The defaults impose nothing.
struct PolicyConstraints {
  std::size_t min_leaf = 1;
  std::size_t min_treated = 0;
  std::size_t min_control = 0;
};

struct PolicyNode {
  UnitSubset subset;
  std::optional<Split> split;
  std::unique_ptr<PolicyNode> left;
  std::unique_ptr<PolicyNode> right;
  std::optional<int> action;  // present iff leaf
  double welfare = 0.0;       // sum of gamma over the subset under this subtree

  bool is_leaf() const noexcept { return action.has_value(); }
  PolicyNode clone() const;
};

struct PolicySolution {
  PolicyNode root;
  double welfare = 0.0;
};

// Exact search for the welfare-maximizing tree with at most `depth` levels
// (depth 1 is a single leaf). Leaf actions break ties toward 0. Candidate
// splits are visited by feature, then by cutoff, and must strictly beat both
// the unsplit leaf and every earlier candidate.
PolicySolution solve_policy_tree(const Dataset& ds, const UnitSubset& s, const DrScores& scores,
                                 int depth, const PolicyConstraints& constraints = {});

// Collapses every subtree whose leaves share one action into a single leaf.
PolicyNode prune_uniform(PolicyNode root);

int assign_action(const PolicyNode& root, std::span<const double> row);

// Mean of gamma[i][policy(Z_i)] over the scored units.
double evaluate_policy(const Dataset& ds, const DrScores& scores, const PolicyNode& policy);

std::vector<const PolicyNode*> policy_leaves(const PolicyNode& root);

struct PolicyGainTest {
  double mean_gain = 0.0;  // held-out per-unit gain over the best single action
  double t_statistic = 0.0;
  double p_value = 1.0;
};

// Cross-validated check that a depth-limited policy tree beats the best
// single action out of sample: for each fold, the tree and the baseline
// action are learned on the other folds and compared on the held-out units.
// One-sided normal p-value on the per-unit gains.
PolicyGainTest heldout_policy_gain(const Dataset& ds, const UnitSubset& s, const DrScores& scores,
                                   int depth, const PolicyConstraints& constraints, int folds,
                                   std::uint64_t seed);

}  // namespace deparadox
