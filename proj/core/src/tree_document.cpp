#include "deparadox/tree_document.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "deparadox/error.hpp"

namespace deparadox {
namespace {

using json = nlohmann::ordered_json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string compact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string split_text(const TreeDocument& doc, const TreeNode& n) {
  if (!n.split) return "";
  return doc.tree.feature_names()[n.split->feature] + " <= " + compact(n.split->cutoff);
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string kernel_text(const TreeNode& n) {
  return n.kernel_distance ? fixed(std::max(0.0, *n.kernel_distance), 3) : std::string("n/a");
}

std::string effect_text(const TreeNode& n) {
  if (!n.effect) return "n/a";
  std::string s = fixed(n.effect->rho, 3);
  if (n.effect->ci_low) {
    s += " [" + fixed(*n.effect->ci_low, 3) + ", " + fixed(*n.effect->ci_high, 3) + "]";
  }
  return s;
}

}  // namespace

json config_to_json(const DeparadoxConfig& c) {
  json j;
  j["d1"] = c.balance.max_depth;
  j["d2"] = c.policy_depth;
  j["min_leaf"] = c.balance.min_leaf;
  j["min_treated"] = c.balance.min_treated;
  j["min_control"] = c.balance.min_control;
  j["eps_rel"] = c.balance.min_relative_improvement;
  j["balance_alpha"] = c.balance.significance;
  j["permutations"] = c.balance.permutations;
  j["bandwidth"] = c.bandwidth.sigma ? json(*c.bandwidth.sigma) : json("auto");
  j["folds"] = c.nuisance.folds;
  j["clip"] = c.nuisance.clip;
  j["lambda"] = c.nuisance.lambda;
  j["estimator"] = std::string(to_string(c.estimator));
  j["policy_alpha"] = c.policy_significance;
  j["seed"] = c.balance.seed;
  return j;
}

DeparadoxConfig config_from_json(const json& j) {
  DeparadoxConfig c;
  c.balance.max_depth = j.value("d1", c.balance.max_depth);
  c.policy_depth = j.value("d2", c.policy_depth);
  c.balance.min_leaf = j.value("min_leaf", c.balance.min_leaf);
  c.balance.min_treated = j.value("min_treated", c.balance.min_treated);
  c.balance.min_control = j.value("min_control", c.balance.min_control);
  c.balance.min_relative_improvement = j.value("eps_rel", c.balance.min_relative_improvement);
  c.balance.significance = j.value("balance_alpha", c.balance.significance);
  c.balance.permutations = j.value("permutations", c.balance.permutations);
  if (j.contains("bandwidth") && j.at("bandwidth").is_number()) {
    c.bandwidth = Bandwidth::fixed(j.at("bandwidth").get<double>());
  }
  c.nuisance.folds = j.value("folds", c.nuisance.folds);
  c.nuisance.clip = j.value("clip", c.nuisance.clip);
  c.nuisance.lambda = j.value("lambda", c.nuisance.lambda);
  if (j.contains("estimator")) c.estimator = parse_estimator(j.at("estimator").get<std::string>());
  c.policy_significance = j.value("policy_alpha", c.policy_significance);
  c.balance.seed = j.value("seed", c.balance.seed);
  c.nuisance.seed = c.balance.seed;
  return c;
}

json to_json(const TreeDocument& doc) {
  json j;
  j["format_version"] = doc.format_version;
  j["config"] = doc.config;
  j["feature_names"] = doc.tree.feature_names();
  j["bandwidth"] = doc.tree.bandwidth();
  json nodes = json::array();
  for (const TreeNode& n : doc.tree.nodes()) {
    json o;
    o["id"] = n.id;
    o["stage"] = std::string(to_string(n.stage));
    o["balanced_leaf"] = n.balanced_leaf;
    o["feature_index"] = n.split ? json(n.split->feature) : json(nullptr);
    o["feature_name"] = n.split ? json(doc.tree.feature_names()[n.split->feature]) : json(nullptr);
    o["cutoff"] = n.split ? json(n.split->cutoff) : json(nullptr);
    o["kernel_distance"] =
        n.kernel_distance ? json(std::max(0.0, *n.kernel_distance)) : json(nullptr);
    o["kernel_distance_raw"] = optional_number(n.kernel_distance);
    o["rho"] = n.effect ? json(n.effect->rho) : json(nullptr);
    o["se"] = n.effect ? optional_number(n.effect->se) : json(nullptr);
    o["ci_low"] = n.effect ? optional_number(n.effect->ci_low) : json(nullptr);
    o["ci_high"] = n.effect ? optional_number(n.effect->ci_high) : json(nullptr);
    o["n_treated"] = n.n_treated;
    o["n_control"] = n.n_control;
    o["recommended_action"] = n.recommended_action ? json(*n.recommended_action) : json(nullptr);
    o["children"] = n.children;
    o["note"] = n.note;
    nodes.push_back(std::move(o));
  }
  j["nodes"] = std::move(nodes);
  return j;
}

TreeDocument document_from_json(const json& j) {
  try {
    TreeDocument doc;
    doc.format_version = j.at("format_version").get<std::string>();
    if (doc.format_version != kTreeFormatVersion) {
      throw ValidationError("unsupported tree format version '" + doc.format_version + "'");
    }
    doc.config = j.at("config");
    auto names = j.at("feature_names").get<std::vector<std::string>>();
    std::vector<TreeNode> nodes;
    for (const json& o : j.at("nodes")) {
      TreeNode n;
      n.id = o.at("id").get<std::string>();
      n.stage = parse_stage(o.at("stage").get<std::string>());
      n.balanced_leaf = o.value("balanced_leaf", false);
      if (!o.at("feature_index").is_null()) {
        n.split = Split{o.at("feature_index").get<std::size_t>(), o.at("cutoff").get<double>()};
      }
      n.kernel_distance = read_optional(o, "kernel_distance_raw");
      if (!o.at("rho").is_null()) {
        EffectEstimate e;
        e.rho = o.at("rho").get<double>();
        e.se = read_optional(o, "se");
        e.ci_low = read_optional(o, "ci_low");
        e.ci_high = read_optional(o, "ci_high");
        n.effect = e;
      }
      n.n_treated = o.at("n_treated").get<std::size_t>();
      n.n_control = o.at("n_control").get<std::size_t>();
      if (!o.at("recommended_action").is_null()) {
        n.recommended_action = o.at("recommended_action").get<int>();
      }
      n.children = o.at("children").get<std::vector<std::string>>();
      n.note = o.value("note", std::string());
      nodes.push_back(std::move(n));
    }
    doc.tree = DeparadoxTree(std::move(nodes), std::move(names), j.at("bandwidth").get<double>());
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed tree document: ") + e.what());
  }
}

std::string dump_document(const TreeDocument& doc) { return to_json(doc).dump(2) + "\n"; }

TreeDocument parse_document(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tree document is not valid JSON: ") + e.what());
  }
  return document_from_json(j);
}

TreeDocument load_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_document(buf.str());
}

void save_document(const TreeDocument& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  out << dump_document(doc);
}

std::string export_dot(const TreeDocument& doc) {
  std::ostringstream os;
  os << "digraph deparadox {\n";
  os << "  node [fontname=\"Helvetica\"];\n";
  for (const TreeNode& n : doc.tree.nodes()) {
    std::string label = "#" + n.id;
    if (n.split) label += "\\n" + dot_escape(split_text(doc, n));
    label += "\\nkernel: " + kernel_text(n);
    label += "\\nrho: " + effect_text(n);
    label += "\\nNT=" + std::to_string(n.n_treated) + " NC=" + std::to_string(n.n_control);
    if (n.recommended_action) label += "\\naction: " + std::to_string(*n.recommended_action);
    os << "  \"" << n.id << "\" [shape=" << (n.stage == Stage::kBalance ? "box" : "ellipse")
       << ", label=\"" << label << "\"];\n";
  }
  for (const TreeNode& n : doc.tree.nodes()) {
    for (std::size_t c = 0; c < n.children.size(); ++c) {
      os << "  \"" << n.id << "\" -> \"" << n.children[c] << "\" [label=\""
         << (c == 0 ? "yes" : "no") << "\"];\n";
    }
  }
  os << "}\n";
  return os.str();
}

std::string export_ascii(const TreeDocument& doc) {
  std::ostringstream os;
  for (const TreeNode& n : doc.tree.nodes()) {
    os << std::string(2 * (n.id.size() - 1), ' ');
    os << "[#" << n.id << "] " << (n.stage == Stage::kBalance ? "balance" : "policy");
    if (n.split) os << "  " << split_text(doc, n);
    os << "  kernel=" << kernel_text(n) << "  rho=" << effect_text(n) << "  NT=" << n.n_treated
       << " NC=" << n.n_control;
    if (n.recommended_action) os << "  action=" << *n.recommended_action;
    os << '\n';
  }
  return os.str();
}

}  // namespace deparadox
