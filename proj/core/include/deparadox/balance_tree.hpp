#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "deparadox/dataset.hpp"
#include "deparadox/kernel.hpp"

namespace deparadox {

// Threshold split: units with value <= cutoff go left.
struct Split {
  std::size_t feature = 0;
  double cutoff = 0.0;

  bool goes_left(std::span<const double> row) const { return row[feature] <= cutoff; }
  bool operator==(const Split&) const = default;
};

// Stage-1 stopping rules. Depth counts tree levels: the root sits at depth 1,
// so max_depth = 1 means the root is always a leaf.
struct BalanceConfig {
  int max_depth = 4;
  std::size_t min_leaf = 30;
  std::size_t min_treated = 15;
  std::size_t min_control = 15;
  // A node splits only when the weighted child distance is at least this
  // fraction below the node's own distance.
  double min_relative_improvement = 0.05;
  // A node splits only when a label-permutation test rejects "arms already
  // balanced" at this level. 1.0 disables the test.
  double significance = 0.05;
  int permutations = 199;
  std::uint64_t seed = 42;

  void validate() const;
};

struct SplitCandidate {
  Split split;
  double objective = 0.0;  // (N_l * D_l + N_r * D_r) / N
};

struct BalanceNode {
  UnitSubset subset;
  int depth = 1;
  std::optional<double> kernel_distance;  // empty when an arm has < 2 units
  std::optional<Split> split;
  std::unique_ptr<BalanceNode> left;
  std::unique_ptr<BalanceNode> right;
  // Permutation p-value, when it was computed for this node.
  std::optional<double> balance_pvalue;

  bool is_leaf() const noexcept { return !split.has_value(); }
};

// Exhaustive search over (feature, midpoint cutoff) candidates whose children
// both satisfy the size constraints. Minimizes the size-weighted child kernel
// distance; ties go to the lower feature index, then the lower cutoff.
std::optional<SplitCandidate> best_balance_split(const Dataset& ds, const KernelGram& gram,
                                                 const UnitSubset& node,
                                                 const BalanceConfig& config);

BalanceNode grow_balance_tree(const Dataset& ds, const KernelGram& gram,
                              const UnitSubset& root, const BalanceConfig& config);

// Leaves in left-to-right order.
std::vector<const BalanceNode*> balance_leaves(const BalanceNode& root);

// Splits a subset by a threshold rule into (left, right).
std::pair<UnitSubset, UnitSubset> partition(const Dataset& ds, const UnitSubset& s,
                                            const Split& split);

}  // namespace deparadox
