#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "deparadox/dataset.hpp"
#include "deparadox/deparadox_tree.hpp"
#include "deparadox/simulate.hpp"

namespace deparadox {

struct EvaluationReport {
  std::size_t n_leaves = 0;
  // Size-weighted mean kernel distance over balanced leaves, clamped at 0.
  std::optional<double> kernel_balance;
  std::optional<double> kernel_balance_unweighted;
  // Size-weighted mean KS statistic over balanced leaves.
  std::optional<double> ks_mean;
  // Fields below need ground truth.
  std::optional<double> effect_mse;
  std::optional<double> coverage;
  std::optional<double> regret;
  std::optional<double> error_rate;
  bool regret_flagged = false;  // regret below -0.01
};

// Action the tree assigns to a unit: the policy leaf's recommendation, or the
// sign of the leaf effect estimate for leaves without one.
int tree_action(const DeparadoxTree& tree, std::span<const double> row);

// Units are routed through the tree's splits, so the tree may come from a
// serialized document.
EvaluationReport evaluate(const DeparadoxTree& tree, const Dataset& ds,
                          const GroundTruth* truth = nullptr);

// One row per dataset, then mean and normal-approximation 95% CI rows.
void write_batch_csv(const std::vector<EvaluationReport>& reports, std::ostream& out);

}  // namespace deparadox
