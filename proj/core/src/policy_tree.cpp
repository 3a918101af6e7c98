#include "deparadox/policy_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>

#include "deparadox/error.hpp"

namespace deparadox {
namespace {

constexpr double kTieTolerance = 1e-10;

bool strictly_better(double candidate, double incumbent) {
  return candidate > incumbent + kTieTolerance * std::max(1.0, std::abs(incumbent));
}

double midpoint(double lo, double hi) {
  const double mid = lo + 0.5 * (hi - lo);
  return mid < hi ? mid : lo;
}

// Score rows for arbitrary units, looked up by global index.
class ScoreLookup {
 public:
  explicit ScoreLookup(const DrScores& scores) : scores_(scores) {
    sorted_ = std::is_sorted(scores.units.begin(), scores.units.end());
    if (!sorted_) {
      for (std::size_t r = 0; r < scores.units.size(); ++r) map_.emplace(scores.units[r], r);
    }
  }

  const std::array<double, 2>& operator[](UnitIndex i) const {
    std::size_t r;
    if (sorted_) {
      const auto it = std::lower_bound(scores_.units.begin(), scores_.units.end(), i);
      if (it == scores_.units.end() || *it != i) missing(i);
      r = static_cast<std::size_t>(it - scores_.units.begin());
    } else {
      const auto it = map_.find(i);
      if (it == map_.end()) missing(i);
      r = it->second;
    }
    return scores_.gamma[r];
  }

 private:
  [[noreturn]] static void missing(UnitIndex i) {
    throw ContractViolation("no welfare score for unit " + std::to_string(i));
  }

  const DrScores& scores_;
  bool sorted_ = true;
  std::unordered_map<UnitIndex, std::size_t> map_;
};

struct LocalTree {
  std::size_t feature = 0;
  double cutoff = 0.0;
  int action = 0;
  double welfare = 0.0;
  std::unique_ptr<LocalTree> left;
  std::unique_ptr<LocalTree> right;

  bool is_leaf() const noexcept { return !left; }
};

using Order = std::vector<std::uint32_t>;

class Solver {
 public:
  Solver(const Dataset& ds, const UnitSubset& s, const DrScores& scores,
         const PolicyConstraints& c)
      : ds_(ds), c_(c), k_(ds.num_features()) {
    const ScoreLookup lookup(scores);
    const std::size_t n = s.size();
    units_ = s.indices;
    g0_.resize(n);
    g1_.resize(n);
    arm_.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      const auto& g = lookup[units_[p]];
      g0_[p] = g[0];
      g1_[p] = g[1];
      arm_[p] = ds.treatment(units_[p]);
    }
    std::vector<std::ptrdiff_t> position(ds.size(), -1);
    for (std::size_t p = 0; p < n; ++p) position[units_[p]] = static_cast<std::ptrdiff_t>(p);
    root_orders_.resize(k_);
    for (std::size_t f = 0; f < k_; ++f) {
      root_orders_[f].reserve(n);
      for (UnitIndex u : ds.sorted_index(f)) {
        if (position[u] >= 0) root_orders_[f].push_back(static_cast<std::uint32_t>(position[u]));
      }
    }
  }

  std::unique_ptr<LocalTree> solve(int depth) { return solve(root_orders_, depth); }

 private:
  struct Tally {
    double s0 = 0.0;
    double s1 = 0.0;
    std::size_t n = 0;
    std::size_t treated = 0;

    void add(double a, double b, int arm) {
      s0 += a;
      s1 += b;
      ++n;
      treated += static_cast<std::size_t>(arm);
    }
    Tally minus(const Tally& o) const {
      return {s0 - o.s0, s1 - o.s1, n - o.n, treated - o.treated};
    }
    double best() const { return s1 > s0 ? s1 : s0; }
    int action() const { return s1 > s0 ? 1 : 0; }
  };

  bool feasible(const Tally& t) const {
    return t.n >= c_.min_leaf && t.treated >= c_.min_treated && t.n - t.treated >= c_.min_control;
  }

  double value(std::uint32_t p, std::size_t f) const { return ds_.covariate(units_[p], f); }

  static std::unique_ptr<LocalTree> leaf(const Tally& t) {
    auto node = std::make_unique<LocalTree>();
    node->action = t.action();
    node->welfare = t.best();
    return node;
  }

  std::unique_ptr<LocalTree> solve(const std::vector<Order>& orders, int depth) {
    Tally total;
    for (std::uint32_t p : orders[0]) total.add(g0_[p], g1_[p], arm_[p]);
    auto best = leaf(total);
    if (depth <= 1 || total.n < 2) return best;
    if (depth == 2) return solve_single_split(orders, total, std::move(best));

    std::vector<Order> left_orders(k_);
    std::vector<Order> right_orders(k_);
    std::vector<char> in_left(units_.size(), 0);
    for (std::size_t f = 0; f < k_; ++f) {
      const Order& o = orders[f];
      Tally prefix;
      for (std::size_t i = 0; i + 1 < o.size(); ++i) {
        prefix.add(g0_[o[i]], g1_[o[i]], arm_[o[i]]);
        in_left[o[i]] = 1;
        const double lo = value(o[i], f);
        const double hi = value(o[i + 1], f);
        if (!(lo < hi)) continue;
        if (!feasible(prefix) || !feasible(total.minus(prefix))) continue;

        for (std::size_t j = 0; j < k_; ++j) {
          left_orders[j].clear();
          right_orders[j].clear();
          for (std::uint32_t p : orders[j]) (in_left[p] ? left_orders[j] : right_orders[j]).push_back(p);
        }
        auto l = solve(left_orders, depth - 1);
        auto r = solve(right_orders, depth - 1);
        const double w = l->welfare + r->welfare;
        if (strictly_better(w, best->welfare)) {
          auto node = std::make_unique<LocalTree>();
          node->feature = f;
          node->cutoff = midpoint(lo, hi);
          node->welfare = w;
          node->left = std::move(l);
          node->right = std::move(r);
          best = std::move(node);
        }
      }
      for (std::uint32_t p : o) in_left[p] = 0;
    }
    return best;
  }

  std::unique_ptr<LocalTree> solve_single_split(const std::vector<Order>& orders, const Tally& total,
                                                std::unique_ptr<LocalTree> best) {
    bool found = false;
    std::size_t best_f = 0;
    double best_cut = 0.0;
    Tally best_left;
    double best_w = best->welfare;
    for (std::size_t f = 0; f < k_; ++f) {
      const Order& o = orders[f];
      Tally prefix;
      for (std::size_t i = 0; i + 1 < o.size(); ++i) {
        prefix.add(g0_[o[i]], g1_[o[i]], arm_[o[i]]);
        const double lo = value(o[i], f);
        const double hi = value(o[i + 1], f);
        if (!(lo < hi)) continue;
        const Tally rest = total.minus(prefix);
        if (!feasible(prefix) || !feasible(rest)) continue;
        const double w = prefix.best() + rest.best();
        if (strictly_better(w, best_w)) {
          found = true;
          best_w = w;
          best_f = f;
          best_cut = midpoint(lo, hi);
          best_left = prefix;
        }
      }
    }
    if (!found) return best;
    auto node = std::make_unique<LocalTree>();
    node->feature = best_f;
    node->cutoff = best_cut;
    node->welfare = best_w;
    node->left = leaf(best_left);
    node->right = leaf(total.minus(best_left));
    return node;
  }

  const Dataset& ds_;
  PolicyConstraints c_;
  std::size_t k_;
  std::vector<UnitIndex> units_;
  std::vector<double> g0_;
  std::vector<double> g1_;
  std::vector<int> arm_;
  std::vector<Order> root_orders_;
};

PolicyNode materialize(const Dataset& ds, const LocalTree& local, UnitSubset subset) {
  PolicyNode node;
  node.welfare = local.welfare;
  if (local.is_leaf()) {
    node.action = local.action;
    node.subset = std::move(subset);
    return node;
  }
  node.split = Split{local.feature, local.cutoff};
  auto [l, r] = partition(ds, subset, *node.split);
  node.subset = std::move(subset);
  node.left = std::make_unique<PolicyNode>(materialize(ds, *local.left, std::move(l)));
  node.right = std::make_unique<PolicyNode>(materialize(ds, *local.right, std::move(r)));
  return node;
}

void collect_actions(const PolicyNode& node, std::vector<int>& out) {
  if (node.is_leaf()) {
    out.push_back(*node.action);
    return;
  }
  collect_actions(*node.left, out);
  collect_actions(*node.right, out);
}

void collect_leaves(const PolicyNode& node, std::vector<const PolicyNode*>& out) {
  if (node.is_leaf()) {
    out.push_back(&node);
    return;
  }
  collect_leaves(*node.left, out);
  collect_leaves(*node.right, out);
}

}  // namespace

PolicyNode PolicyNode::clone() const {
  PolicyNode copy;
  copy.subset = subset;
  copy.split = split;
  copy.action = action;
  copy.welfare = welfare;
  if (left) copy.left = std::make_unique<PolicyNode>(left->clone());
  if (right) copy.right = std::make_unique<PolicyNode>(right->clone());
  return copy;
}

PolicySolution solve_policy_tree(const Dataset& ds, const UnitSubset& s, const DrScores& scores,
                                 int depth, const PolicyConstraints& constraints) {
  if (s.empty()) throw ContractViolation("policy tree needs a nonempty subset");
  if (depth < 1) throw ContractViolation("policy tree depth must be at least 1");
  Solver solver(ds, s, scores, constraints);
  const auto local = solver.solve(depth);
  PolicySolution out;
  out.root = materialize(ds, *local, s);
  out.welfare = local->welfare;
  return out;
}

PolicyNode prune_uniform(PolicyNode root) {
  if (root.is_leaf()) return root;
  root.left = std::make_unique<PolicyNode>(prune_uniform(std::move(*root.left)));
  root.right = std::make_unique<PolicyNode>(prune_uniform(std::move(*root.right)));
  if (root.left->is_leaf() && root.right->is_leaf() && *root.left->action == *root.right->action) {
    root.action = root.left->action;
    root.welfare = root.left->welfare + root.right->welfare;
    root.split.reset();
    root.left.reset();
    root.right.reset();
  }
  return root;
}

int assign_action(const PolicyNode& root, std::span<const double> row) {
  const PolicyNode* node = &root;
  while (!node->is_leaf()) node = node->split->goes_left(row) ? node->left.get() : node->right.get();
  return *node->action;
}

double evaluate_policy(const Dataset& ds, const DrScores& scores, const PolicyNode& policy) {
  if (scores.size() == 0) throw ContractViolation("no scored units to evaluate");
  double total = 0.0;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    total += scores.gamma[r][assign_action(policy, ds.row(scores.units[r]))];
  }
  return total / static_cast<double>(scores.size());
}

std::vector<const PolicyNode*> policy_leaves(const PolicyNode& root) {
  std::vector<const PolicyNode*> out;
  collect_leaves(root, out);
  return out;
}

PolicyGainTest heldout_policy_gain(const Dataset& ds, const UnitSubset& s, const DrScores& scores,
                                   int depth, const PolicyConstraints& constraints, int folds,
                                   std::uint64_t seed) {
  if (folds < 2) throw ValidationError("held-out policy test needs at least two folds");
  const ScoreLookup lookup(scores);
  const std::vector<int> fold_of = assign_folds(ds, s, folds, seed);

  std::vector<double> gains;
  gains.reserve(s.size());
  for (int c = 0; c < folds; ++c) {
    std::vector<UnitIndex> train;
    std::vector<UnitIndex> held;
    for (std::size_t p = 0; p < s.size(); ++p) {
      (fold_of[p] == c ? held : train).push_back(s.indices[p]);
    }
    if (train.empty() || held.empty()) continue;
    const UnitSubset train_set = UnitSubset::from_indices(ds, std::move(train));
    const PolicySolution sol = solve_policy_tree(ds, train_set, scores, depth, constraints);
    double s0 = 0.0;
    double s1 = 0.0;
    for (UnitIndex i : train_set.indices) {
      s0 += lookup[i][0];
      s1 += lookup[i][1];
    }
    const int baseline = s1 > s0 ? 1 : 0;
    for (UnitIndex i : held) {
      const auto& g = lookup[i];
      gains.push_back(g[assign_action(sol.root, ds.row(i))] - g[baseline]);
    }
  }

  PolicyGainTest out;
  if (gains.empty()) return out;
  const double n = static_cast<double>(gains.size());
  const double mean = std::accumulate(gains.begin(), gains.end(), 0.0) / n;
  double ss = 0.0;
  for (double g : gains) ss += (g - mean) * (g - mean);
  const double sd = gains.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  out.mean_gain = mean;
  if (sd <= 0.0) {
    out.t_statistic = mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    out.p_value = mean > 0.0 ? 0.0 : 1.0;
    return out;
  }
  out.t_statistic = mean / (sd / std::sqrt(n));
  out.p_value = 0.5 * std::erfc(out.t_statistic / std::sqrt(2.0));
  return out;
}

}  // namespace deparadox
