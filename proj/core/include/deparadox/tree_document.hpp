#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "deparadox/deparadox_tree.hpp"

namespace deparadox {

inline constexpr const char* kTreeFormatVersion = "1.0";

// Canonical JSON form of a fitted tree plus an echo of the fit settings.
struct TreeDocument {
  std::string format_version = kTreeFormatVersion;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  DeparadoxTree tree;

  bool operator==(const TreeDocument&) const = default;
};

nlohmann::ordered_json config_to_json(const DeparadoxConfig& config);
// Reads the fields written by config_to_json; absent fields keep defaults.
DeparadoxConfig config_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json to_json(const TreeDocument& doc);
TreeDocument document_from_json(const nlohmann::ordered_json& j);

std::string dump_document(const TreeDocument& doc);
TreeDocument parse_document(const std::string& text);
TreeDocument load_document(const std::filesystem::path& path);
void save_document(const TreeDocument& doc, const std::filesystem::path& path);

// Graphviz view: balance nodes are boxes, policy nodes ellipses, nodes and
// edges emitted in id order.
std::string export_dot(const TreeDocument& doc);
// Indented text view, one node per line.
std::string export_ascii(const TreeDocument& doc);

}  // namespace deparadox
