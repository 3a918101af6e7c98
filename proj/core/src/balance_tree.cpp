#include "deparadox/balance_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deparadox/error.hpp"

namespace deparadox {
namespace {

constexpr double kTieTolerance = 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Ordered-pair kernel sums (self-pairs excluded) of one side of a split.
struct PairSums {
  double tt = 0.0;
  double cc = 0.0;
  double tc = 0.0;
  double n1 = 0.0;
  double n0 = 0.0;

  double distance() const {
    return tt / (n1 * (n1 - 1.0)) + cc / (n0 * (n0 - 1.0)) - 2.0 * tc / (n1 * n0);
  }
};

bool feasible(double n1, double n0, const BalanceConfig& c) {
  return n1 + n0 >= static_cast<double>(c.min_leaf) && n1 >= static_cast<double>(c.min_treated) &&
         n0 >= static_cast<double>(c.min_control) && n1 >= 2.0 && n0 >= 2.0;
}

double midpoint(double lo, double hi) {
  const double mid = lo + 0.5 * (hi - lo);
  return mid < hi ? mid : lo;
}

}  // namespace

void BalanceConfig::validate() const {
  if (max_depth < 1) throw ValidationError("max depth d1 must be at least 1");
  if (min_leaf < 1 || min_treated < 1 || min_control < 1) {
    throw ValidationError("minimum leaf and arm sizes must be positive");
  }
  if (!(min_relative_improvement >= 0.0 && min_relative_improvement < 1.0)) {
    throw ValidationError("relative improvement threshold must lie in [0, 1)");
  }
  if (!(significance > 0.0 && significance <= 1.0)) {
    throw ValidationError("balance significance level must lie in (0, 1]");
  }
  if (permutations < 1) throw ValidationError("permutation count must be positive");
}

std::pair<UnitSubset, UnitSubset> partition(const Dataset& ds, const UnitSubset& s,
                                            const Split& split) {
  std::pair<UnitSubset, UnitSubset> out;
  for (UnitIndex i : s.indices) {
    UnitSubset& side = split.goes_left(ds.row(i)) ? out.first : out.second;
    side.indices.push_back(i);
    if (ds.treatment(i) == 1) {
      ++side.n_treated;
    } else {
      ++side.n_control;
    }
  }
  return out;
}

std::optional<SplitCandidate> best_balance_split(const Dataset& ds, const KernelGram& gram,
                                                 const UnitSubset& node,
                                                 const BalanceConfig& config) {
  if (node.n_treated < 2 || node.n_control < 2) {
    throw DegenerateArmError("balance split search needs at least two units per arm");
  }
  const std::size_t n = node.size();
  const auto& idx = node.indices;

  std::vector<std::ptrdiff_t> position(ds.size(), -1);
  for (std::size_t p = 0; p < n; ++p) position[idx[p]] = static_cast<std::ptrdiff_t>(p);
  std::vector<int> arm(n);
  for (std::size_t p = 0; p < n; ++p) arm[p] = ds.treatment(idx[p]);

  // full[x][p]: kernel mass between p and the arm-x units of the node, self excluded.
  std::vector<double> full_t(n, 0.0);
  std::vector<double> full_c(n, 0.0);
  PairSums whole;
  whole.n1 = static_cast<double>(node.n_treated);
  whole.n0 = static_cast<double>(node.n_control);
  for (std::size_t p = 0; p < n; ++p) {
    const auto row = gram.row(idx[p]);
    double st = 0.0;
    double sc = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
      if (q == p) continue;
      (arm[q] == 1 ? st : sc) += row[idx[q]];
    }
    full_t[p] = st;
    full_c[p] = sc;
    if (arm[p] == 1) {
      whole.tt += st;
      whole.tc += sc;
    } else {
      whole.cc += sc;
    }
  }

  std::optional<SplitCandidate> best;
  std::vector<std::size_t> order;
  order.reserve(n);
  std::vector<double> left_t(n);
  std::vector<double> left_c(n);
  const double total = static_cast<double>(n);

  for (std::size_t k = 0; k < ds.num_features(); ++k) {
    order.clear();
    for (UnitIndex u : ds.sorted_index(k)) {
      if (position[u] >= 0) order.push_back(static_cast<std::size_t>(position[u]));
    }
    std::fill(left_t.begin(), left_t.end(), 0.0);
    std::fill(left_c.begin(), left_c.end(), 0.0);
    PairSums left;
    PairSums right = whole;

    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t u = order[i];
      const double to_right_t = full_t[u] - left_t[u];
      const double to_right_c = full_c[u] - left_c[u];
      if (arm[u] == 1) {
        left.tt += 2.0 * left_t[u];
        left.tc += left_c[u];
        left.n1 += 1.0;
        right.tt -= 2.0 * to_right_t;
        right.tc -= to_right_c;
        right.n1 -= 1.0;
      } else {
        left.cc += 2.0 * left_c[u];
        left.tc += left_t[u];
        left.n0 += 1.0;
        right.cc -= 2.0 * to_right_c;
        right.tc -= to_right_t;
        right.n0 -= 1.0;
      }
      const auto row = gram.row(idx[u]);
      std::vector<double>& target = arm[u] == 1 ? left_t : left_c;
      for (std::size_t q = 0; q < n; ++q) {
        if (q != u) target[q] += row[idx[q]];
      }

      const double lo = ds.covariate(idx[u], k);
      const double hi = ds.covariate(idx[order[i + 1]], k);
      if (!(lo < hi)) continue;
      if (!feasible(left.n1, left.n0, config) || !feasible(right.n1, right.n0, config)) continue;

      const double objective =
          ((left.n1 + left.n0) * left.distance() + (right.n1 + right.n0) * right.distance()) / total;
      if (!best || objective < best->objective - kTieTolerance * std::max(1.0, std::abs(best->objective))) {
        best = SplitCandidate{Split{k, midpoint(lo, hi)}, objective};
      }
    }
  }
  return best;
}

namespace {

BalanceNode grow(const Dataset& ds, const KernelGram& gram, UnitSubset subset, int depth,
                 std::uint64_t path_seed, const BalanceConfig& config) {
  BalanceNode node;
  node.depth = depth;
  node.kernel_distance = try_mmd_unbiased(gram, ds, subset);
  node.subset = std::move(subset);
  if (depth >= config.max_depth || !node.kernel_distance) return node;

  const auto candidate = best_balance_split(ds, gram, node.subset, config);
  if (!candidate) return node;
  const double parent = *node.kernel_distance;
  const double improvement = (parent - candidate->objective) / std::max(parent, 1e-12);
  if (improvement < config.min_relative_improvement) return node;

  if (config.significance < 1.0) {
    node.balance_pvalue = mmd_permutation_pvalue(gram, ds, node.subset, config.permutations,
                                                 splitmix64(config.seed ^ path_seed),
                                                 config.significance);
    if (*node.balance_pvalue > config.significance) return node;
  }

  auto [l, r] = partition(ds, node.subset, candidate->split);
  node.split = candidate->split;
  node.left = std::make_unique<BalanceNode>(
      grow(ds, gram, std::move(l), depth + 1, splitmix64(path_seed * 2 + 0), config));
  node.right = std::make_unique<BalanceNode>(
      grow(ds, gram, std::move(r), depth + 1, splitmix64(path_seed * 2 + 1), config));
  return node;
}

void collect_leaves(const BalanceNode& node, std::vector<const BalanceNode*>& out) {
  if (node.is_leaf()) {
    out.push_back(&node);
    return;
  }
  collect_leaves(*node.left, out);
  collect_leaves(*node.right, out);
}

}  // namespace

BalanceNode grow_balance_tree(const Dataset& ds, const KernelGram& gram,
                              const UnitSubset& root, const BalanceConfig& config) {
  config.validate();
  if (gram.size() != ds.size()) {
    throw ContractViolation("Gram matrix was built for a different dataset");
  }
  return grow(ds, gram, root, 1, 1, config);
}

std::vector<const BalanceNode*> balance_leaves(const BalanceNode& root) {
  std::vector<const BalanceNode*> out;
  collect_leaves(root, out);
  return out;
}

}  // namespace deparadox
