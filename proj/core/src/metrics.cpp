#include "deparadox/metrics.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "deparadox/error.hpp"
#include "deparadox/kernel.hpp"

namespace deparadox {

int tree_action(const DeparadoxTree& tree, std::span<const double> row) {
  const TreeNode& leaf = tree.route(row);
  if (leaf.recommended_action) return *leaf.recommended_action;
  return leaf.effect && leaf.effect->rho > 0.0 ? 1 : 0;
}

EvaluationReport evaluate(const DeparadoxTree& tree, const Dataset& ds, const GroundTruth* truth) {
  if (tree.feature_names() != ds.feature_names()) {
    throw SchemaError("tree features do not match the dataset columns");
  }
  if (truth && truth->size() != ds.size()) {
    throw SchemaError("ground truth has " + std::to_string(truth->size()) + " rows, dataset has " +
                      std::to_string(ds.size()));
  }

  // Membership of every node, by routing.
  std::vector<std::vector<UnitIndex>> members(tree.nodes().size());
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    const auto row = ds.row(i);
    std::size_t at = 0;
    while (true) {
      members[at].push_back(i);
      const TreeNode& n = tree.nodes()[at];
      if (n.is_leaf()) break;
      at = tree.index_of(n.split->goes_left(row) ? n.children[0] : n.children[1]);
    }
  }

  EvaluationReport report;
  const double total = static_cast<double>(ds.size());

  double kb_weighted = 0.0;
  double kb_plain = 0.0;
  double kb_weight = 0.0;
  std::size_t kb_count = 0;
  double ks_weighted = 0.0;
  double ks_weight = 0.0;
  for (std::size_t a = 0; a < tree.nodes().size(); ++a) {
    const TreeNode& n = tree.nodes()[a];
    if (n.is_leaf()) ++report.n_leaves;
    if (!n.balanced_leaf || members[a].empty()) continue;
    const double w = static_cast<double>(members[a].size());
    if (n.kernel_distance) {
      const double d = std::max(0.0, *n.kernel_distance);
      kb_weighted += w * d;
      kb_weight += w;
      kb_plain += d;
      ++kb_count;
    }
    const UnitSubset s = UnitSubset::from_indices(ds, members[a]);
    if (s.n_treated > 0 && s.n_control > 0) {
      ks_weighted += w * ks_statistic(ds, s);
      ks_weight += w;
    }
  }
  if (kb_weight > 0.0) {
    report.kernel_balance = kb_weighted / kb_weight;
    report.kernel_balance_unweighted = kb_plain / static_cast<double>(kb_count);
  }
  if (ks_weight > 0.0) report.ks_mean = ks_weighted / ks_weight;

  if (!truth) return report;

  double mse = 0.0;
  double mse_weight = 0.0;
  std::size_t covered = 0;
  std::size_t scored_leaves = 0;
  for (std::size_t a = 0; a < tree.nodes().size(); ++a) {
    const TreeNode& n = tree.nodes()[a];
    if (!n.is_leaf() || members[a].empty()) continue;
    double true_effect = 0.0;
    for (UnitIndex i : members[a]) true_effect += truth->effect[i];
    true_effect /= static_cast<double>(members[a].size());
    ++scored_leaves;
    if (!n.effect) continue;
    const double w = static_cast<double>(members[a].size());
    const double err = n.effect->rho - true_effect;
    mse += w * err * err;
    mse_weight += w;
    if (n.effect->ci_low && *n.effect->ci_low <= true_effect && true_effect <= *n.effect->ci_high) {
      ++covered;
    }
  }
  if (mse_weight > 0.0) report.effect_mse = mse / mse_weight;
  if (scored_leaves > 0) {
    report.coverage = static_cast<double>(covered) / static_cast<double>(scored_leaves);
  }

  double regret = 0.0;
  std::size_t errors = 0;
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    const int assigned = tree_action(tree, ds.row(i));
    const int optimal = truth->optimal_action[i];
    const double g = truth->effect[i];
    regret += g * optimal - g * assigned;
    if (assigned != optimal) ++errors;
  }
  report.regret = regret / total;
  report.error_rate = static_cast<double>(errors) / total;
  report.regret_flagged = *report.regret < -0.01;
  return report;
}

namespace {

void write_cell(std::ostream& out, const std::optional<double>& v) {
  if (v) out << *v;
}

}  // namespace

void write_batch_csv(const std::vector<EvaluationReport>& reports, std::ostream& out) {
  out << "dataset,n_leaves,kernel_balance,ks_mean,effect_mse,coverage,regret,error_rate\n";
  auto fields = [](const EvaluationReport& r) -> std::array<std::optional<double>, 7> {
    return {static_cast<double>(r.n_leaves), r.kernel_balance, r.ks_mean, r.effect_mse,
            r.coverage, r.regret, r.error_rate};
  };
  out.precision(10);
  for (std::size_t d = 0; d < reports.size(); ++d) {
    out << d;
    for (const auto& v : fields(reports[d])) {
      out << ',';
      write_cell(out, v);
    }
    out << '\n';
  }

  std::array<std::optional<double>, 7> mean{};
  std::array<std::optional<double>, 7> half_width{};
  for (std::size_t c = 0; c < 7; ++c) {
    std::vector<double> xs;
    for (const auto& r : reports) {
      if (const auto v = fields(r)[c]) xs.push_back(*v);
    }
    if (xs.empty()) continue;
    const double n = static_cast<double>(xs.size());
    double m = 0.0;
    for (double x : xs) m += x;
    m /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    const double sd = xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    mean[c] = m;
    half_width[c] = 1.96 * sd / std::sqrt(n);
  }
  auto emit = [&](const char* label, auto value_of) {
    out << label;
    for (std::size_t c = 0; c < 7; ++c) {
      out << ',';
      write_cell(out, value_of(c));
    }
    out << '\n';
  };
  emit("mean", [&](std::size_t c) { return mean[c]; });
  emit("ci_low", [&](std::size_t c) -> std::optional<double> {
    if (!mean[c]) return std::nullopt;
    return *mean[c] - *half_width[c];
  });
  emit("ci_high", [&](std::size_t c) -> std::optional<double> {
    if (!mean[c]) return std::nullopt;
    return *mean[c] + *half_width[c];
  });
}

}  // namespace deparadox
