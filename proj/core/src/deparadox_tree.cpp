#include "deparadox/deparadox_tree.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "deparadox/error.hpp"
#include "deparadox/policy_tree.hpp"

namespace deparadox {
namespace {

constexpr double kZ95 = 1.96;

std::uint64_t mix_seed(std::uint64_t seed, std::string_view id) {
  // FNV-1a over the node id, folded into the base seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : id) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t x = seed ^ h;
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string format_p(double p) {
  std::ostringstream os;
  os.precision(3);
  os << p;
  return os.str();
}

class Builder {
 public:
  Builder(const Dataset& ds, const KernelGram& gram, const DeparadoxConfig& config)
      : ds_(ds), gram_(gram), config_(config) {}

  void add_balance(const BalanceNode& node, const std::string& id) {
    TreeNode& out = annotate(node.subset, id, Stage::kBalance);
    if (!node.is_leaf()) {
      out.split = node.split;
      out.children = {id + "0", id + "1"};
      add_balance(*node.left, id + "0");
      add_balance(*node.right, id + "1");
      return;
    }
    out.balanced_leaf = true;
    attach_policy(node.subset, id);
  }

  std::vector<TreeNode> take() {
    std::sort(nodes_.begin(), nodes_.end(),
              [](const TreeNode& a, const TreeNode& b) { return a.id < b.id; });
    return std::move(nodes_);
  }

 private:
  TreeNode& annotate(const UnitSubset& s, const std::string& id, Stage stage) {
    TreeNode node;
    node.id = id;
    node.stage = stage;
    node.n_treated = s.n_treated;
    node.n_control = s.n_control;
    node.kernel_distance = try_mmd_unbiased(gram_, ds_, s);
    if (s.n_treated > 0 && s.n_control > 0) node.effect = effect_regression(ds_, s);
    nodes_.push_back(std::move(node));
    return nodes_.back();
  }

  TreeNode& find(const std::string& id) {
    return *std::find_if(nodes_.begin(), nodes_.end(), [&](const TreeNode& n) { return n.id == id; });
  }

  void attach_policy(const UnitSubset& s, const std::string& id) {
    if (config_.policy_depth <= 1) return;
    NuisanceConfig nc = config_.nuisance;
    nc.seed = mix_seed(config_.nuisance.seed, id);
    NuisanceModels models;
    try {
      models = fit_nuisance(ds_, s, nc);
    } catch (const FoldDegeneracyError& e) {
      find(id).note = std::string("policy stage skipped: ") + e.what();
      return;
    }
    const DrScores scores = compute_scores(config_.estimator, ds_, models, nc.clip);
    const PolicyConstraints constraints{config_.balance.min_leaf, config_.balance.min_treated,
                                        config_.balance.min_control};
    PolicyNode tree = prune_uniform(
        solve_policy_tree(ds_, s, scores, config_.policy_depth, constraints).root);
    if (tree.is_leaf()) {
      find(id).note = "no opposite effects";
      return;
    }
    if (config_.policy_significance < 1.0) {
      const PolicyGainTest test = heldout_policy_gain(ds_, s, scores, config_.policy_depth,
                                                      constraints, nc.folds, mix_seed(nc.seed, "gain"));
      if (test.p_value > config_.policy_significance) {
        find(id).note = "opposite effects not confirmed out of sample (p=" + format_p(test.p_value) + ")";
        return;
      }
      find(id).note = "opposite effects confirmed out of sample (p=" + format_p(test.p_value) + ")";
    }
    TreeNode& root = find(id);
    root.stage = Stage::kPolicy;
    root.split = tree.split;
    root.children = {id + "0", id + "1"};
    add_policy(*tree.left, id + "0");
    add_policy(*tree.right, id + "1");
  }

  void add_policy(const PolicyNode& node, const std::string& id) {
    TreeNode& out = annotate(node.subset, id, Stage::kPolicy);
    if (node.is_leaf()) {
      out.recommended_action = node.action;
      return;
    }
    out.split = node.split;
    out.children = {id + "0", id + "1"};
    add_policy(*node.left, id + "0");
    add_policy(*node.right, id + "1");
  }

  const Dataset& ds_;
  const KernelGram& gram_;
  const DeparadoxConfig& config_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

EffectEstimate effect_regression(const Dataset& ds, const UnitSubset& s) {
  if (s.n_treated == 0 || s.n_control == 0) {
    throw DegenerateArmError("effect regression needs both arms in the subset");
  }
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < ds.num_features(); ++k) {
    const double first = ds.covariate(s.indices.front(), k);
    for (UnitIndex i : s.indices) {
      if (ds.covariate(i, k) != first) {
        kept.push_back(k);
        break;
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(s.size());
  const auto p = static_cast<Eigen::Index>(kept.size() + 2);
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const UnitIndex i = s.indices[static_cast<std::size_t>(r)];
    x(r, 0) = 1.0;
    x(r, 1) = ds.treatment(i);
    for (std::size_t c = 0; c < kept.size(); ++c) {
      x(r, static_cast<Eigen::Index>(c + 2)) = ds.covariate(i, kept[c]);
    }
    y(r) = ds.outcome(i);
  }

  EffectEstimate out;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) {
    const Eigen::VectorXd beta = x.completeOrthogonalDecomposition().solve(y);
    out.rho = beta(1);
    return out;
  }
  const Eigen::VectorXd beta = qr.solve(y);
  out.rho = beta(1);
  const Eigen::Index dof = n - p;
  if (dof <= 0) return out;
  const double rss = (y - x * beta).squaredNorm();
  const double sigma2 = rss / static_cast<double>(dof);
  Eigen::VectorXd unit = Eigen::VectorXd::Zero(p);
  unit(1) = 1.0;
  const Eigen::MatrixXd gram = x.transpose() * x;
  const double v = gram.ldlt().solve(unit)(1);
  const double se = std::sqrt(std::max(0.0, sigma2 * v));
  out.se = se;
  out.ci_low = out.rho - kZ95 * se;
  out.ci_high = out.rho + kZ95 * se;
  return out;
}

std::string_view to_string(Stage stage) {
  return stage == Stage::kBalance ? "balance" : "policy";
}

Stage parse_stage(std::string_view name) {
  if (name == "balance") return Stage::kBalance;
  if (name == "policy") return Stage::kPolicy;
  throw ValidationError("unknown node stage '" + std::string(name) + "'");
}

DeparadoxTree::DeparadoxTree(std::vector<TreeNode> nodes, std::vector<std::string> feature_names,
                             double bandwidth)
    : nodes_(std::move(nodes)), feature_names_(std::move(feature_names)), bandwidth_(bandwidth) {
  if (nodes_.empty()) throw ValidationError("tree has no nodes");
  std::sort(nodes_.begin(), nodes_.end(),
            [](const TreeNode& a, const TreeNode& b) { return a.id < b.id; });
  if (nodes_.front().id != "0") throw ValidationError("tree root must have id \"0\"");
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (nodes_[i].id == nodes_[i - 1].id) {
      throw ValidationError("duplicate node id '" + nodes_[i].id + "'");
    }
  }
  for (const TreeNode& n : nodes_) {
    if (!n.children.empty() && n.children.size() != 2) {
      throw ValidationError("node '" + n.id + "' must have zero or two children");
    }
    if (n.children.empty() == n.split.has_value()) {
      throw ValidationError("node '" + n.id + "' must carry a split iff it has children");
    }
    if (n.split && n.split->feature >= feature_names_.size()) {
      throw ValidationError("node '" + n.id + "' splits on an unknown feature");
    }
    for (const auto& c : n.children) index_of(c);
  }
}

std::size_t DeparadoxTree::index_of(std::string_view id) const {
  const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                                   [](const TreeNode& n, std::string_view v) { return n.id < v; });
  if (it == nodes_.end() || it->id != id) {
    throw ValidationError("unknown node id '" + std::string(id) + "'");
  }
  return static_cast<std::size_t>(it - nodes_.begin());
}

const TreeNode& DeparadoxTree::node(std::string_view id) const { return nodes_[index_of(id)]; }

const TreeNode& DeparadoxTree::route(std::span<const double> row) const {
  const TreeNode* n = &nodes_.front();
  while (!n->is_leaf()) {
    n = &node(n->split->goes_left(row) ? n->children[0] : n->children[1]);
  }
  return *n;
}

std::vector<const TreeNode*> DeparadoxTree::leaves() const {
  std::vector<const TreeNode*> out;
  for (const auto& n : nodes_)
    if (n.is_leaf()) out.push_back(&n);
  return out;
}

std::vector<const TreeNode*> DeparadoxTree::balanced_leaves() const {
  std::vector<const TreeNode*> out;
  for (const auto& n : nodes_)
    if (n.balanced_leaf) out.push_back(&n);
  return out;
}

void DeparadoxConfig::validate() const {
  balance.validate();
  nuisance.validate();
  if (policy_depth < 1) throw ValidationError("policy depth d2 must be at least 1");
  if (!(policy_significance > 0.0 && policy_significance <= 1.0)) {
    throw ValidationError("policy significance level must lie in (0, 1]");
  }
  if (bandwidth.sigma && !(*bandwidth.sigma > 0.0)) {
    throw ValidationError("bandwidth must be positive");
  }
}

DeparadoxTree fit_deparadox(const Dataset& ds, const DeparadoxConfig& config) {
  config.validate();
  const KernelGram gram = build_gram(ds, config.bandwidth);
  const BalanceNode balance = grow_balance_tree(ds, gram, UnitSubset::all(ds), config.balance);
  Builder builder(ds, gram, config);
  builder.add_balance(balance, "0");
  return DeparadoxTree(builder.take(), ds.feature_names(), gram.bandwidth());
}

}  // namespace deparadox
