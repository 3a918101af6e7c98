#include "deparadox/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "deparadox/error.hpp"

namespace deparadox {
namespace {

std::vector<std::vector<UnitIndex>> build_sorted_index(
    std::span<const double> cov, std::size_t n, std::size_t k) {
  std::vector<std::vector<UnitIndex>> out(k);
  for (std::size_t f = 0; f < k; ++f) {
    auto& order = out[f];
    order.resize(n);
    std::iota(order.begin(), order.end(), UnitIndex{0});
    std::stable_sort(order.begin(), order.end(), [&](UnitIndex a, UnitIndex b) {
      return cov[a * k + f] < cov[b * k + f];
    });
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.emplace_back(trim(cell));
  return cells;
}

double parse_real(std::string_view cell, std::size_t row,
                  const std::string& column) {
  if (cell.empty()) {
    throw ParseError("missing value at row " + std::to_string(row) +
                         ", column '" + column + "'",
                     row, column);
  }
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    throw ParseError("non-numeric value '" + std::string(cell) + "' at row " +
                         std::to_string(row) + ", column '" + column + "'",
                     row, column);
  }
  return value;
}

std::string format_real(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

Dataset::Dataset(std::vector<int> treatments, std::vector<double> outcomes,
                 std::vector<double> covariates_row_major,
                 std::vector<std::string> feature_names)
    : treatments_(std::move(treatments)),
      outcomes_(std::move(outcomes)),
      covariates_(std::move(covariates_row_major)),
      feature_names_(std::move(feature_names)) {
  const std::size_t n = treatments_.size();
  const std::size_t k = feature_names_.size();
  if (n == 0) throw ValidationError("dataset must contain at least one unit");
  if (k == 0) throw ValidationError("dataset must contain at least one covariate");
  if (outcomes_.size() != n) {
    throw ValidationError("outcome column length " + std::to_string(outcomes_.size()) +
                          " does not match treatment length " + std::to_string(n));
  }
  if (covariates_.size() != n * k) {
    throw ValidationError("covariate matrix has " + std::to_string(covariates_.size()) +
                          " entries, expected " + std::to_string(n * k));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (treatments_[i] != 0 && treatments_[i] != 1) {
      throw ValidationError("treatment of unit " + std::to_string(i) +
                            " is " + std::to_string(treatments_[i]) +
                            "; expected 0 or 1");
    }
    n_treated_ += static_cast<std::size_t>(treatments_[i]);
    if (!std::isfinite(outcomes_[i])) {
      throw NumericError("outcome of unit " + std::to_string(i) + " is not finite");
    }
  }
  for (std::size_t j = 0; j < covariates_.size(); ++j) {
    if (!std::isfinite(covariates_[j])) {
      throw NumericError("covariate '" + feature_names_[j % k] + "' of unit " +
                         std::to_string(j / k) + " is not finite");
    }
  }
  if (n_treated_ == 0 || n_treated_ == n) {
    throw ValidationError("both treatment arms must be nonempty (treated=" +
                          std::to_string(n_treated_) + ", control=" +
                          std::to_string(n - n_treated_) + ")");
  }
  sorted_index_ = build_sorted_index(covariates_, n, k);
}

std::size_t Dataset::feature_index(std::string_view name) const {
  const auto it = std::find(feature_names_.begin(), feature_names_.end(), name);
  if (it == feature_names_.end()) {
    throw SchemaError("unknown feature '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - feature_names_.begin());
}

Dataset Dataset::with_columns(std::vector<int> treatments,
                              std::vector<double> outcomes) const {
  return Dataset(std::move(treatments), std::move(outcomes), covariates_,
                 feature_names_);
}

Dataset read_csv(std::istream& in, std::string_view treatment_col,
                 std::string_view outcome_col) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("CSV input is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const std::vector<std::string> header = split_line(line);

  auto locate = [&](std::string_view name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw SchemaError("missing column '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t t_col = locate(treatment_col);
  const std::size_t y_col = locate(outcome_col);
  if (t_col == y_col) {
    throw SchemaError("treatment and outcome columns must differ");
  }

  std::vector<std::size_t> feature_cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == t_col || c == y_col) continue;
    feature_cols.push_back(c);
    names.push_back(header[c]);
  }
  if (names.empty()) throw SchemaError("CSV has no covariate columns");

  std::vector<int> t;
  std::vector<double> y;
  std::vector<double> cov;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(header.size()),
                       row, "");
    }
    const double tv = parse_real(cells[t_col], row, header[t_col]);
    if (tv != 0.0 && tv != 1.0) {
      throw ValidationError("treatment value '" + cells[t_col] + "' at row " +
                            std::to_string(row) + " is not 0 or 1");
    }
    t.push_back(static_cast<int>(tv));
    y.push_back(parse_real(cells[y_col], row, header[y_col]));
    for (std::size_t c : feature_cols) cov.push_back(parse_real(cells[c], row, header[c]));
  }
  return Dataset(std::move(t), std::move(y), std::move(cov), std::move(names));
}

Dataset load_csv(const std::filesystem::path& path, std::string_view treatment_col,
                 std::string_view outcome_col) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path.string() + "'");
  return read_csv(in, treatment_col, outcome_col);
}

void write_csv(const Dataset& ds, std::ostream& out, std::string_view treatment_col,
               std::string_view outcome_col) {
  out << treatment_col << ',' << outcome_col;
  for (const auto& name : ds.feature_names()) out << ',' << name;
  out << '\n';
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    out << ds.treatment(i) << ',' << format_real(ds.outcome(i));
    for (double v : ds.row(i)) out << ',' << format_real(v);
    out << '\n';
  }
}

void save_csv(const Dataset& ds, const std::filesystem::path& path,
              std::string_view treatment_col, std::string_view outcome_col) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  write_csv(ds, out, treatment_col, outcome_col);
}

UnitSubset UnitSubset::all(const Dataset& ds) {
  UnitSubset s;
  s.indices.resize(ds.size());
  std::iota(s.indices.begin(), s.indices.end(), UnitIndex{0});
  s.n_treated = ds.n_treated();
  s.n_control = ds.n_control();
  return s;
}

UnitSubset UnitSubset::from_indices(const Dataset& ds, std::vector<UnitIndex> indices) {
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
    throw ContractViolation("subset indices must be unique");
  }
  if (!indices.empty() && indices.back() >= ds.size()) {
    throw ContractViolation("subset index out of range");
  }
  UnitSubset s;
  s.indices = std::move(indices);
  for (UnitIndex i : s.indices) s.n_treated += static_cast<std::size_t>(ds.treatment(i));
  s.n_control = s.indices.size() - s.n_treated;
  return s;
}

UnitSubset subset(const Dataset& ds, const std::function<bool(UnitIndex)>& predicate) {
  UnitSubset s;
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    if (!predicate(i)) continue;
    s.indices.push_back(i);
    if (ds.treatment(i) == 1) {
      ++s.n_treated;
    } else {
      ++s.n_control;
    }
  }
  return s;
}

std::vector<UnitIndex> treated_units(const Dataset& ds, const UnitSubset& s) {
  std::vector<UnitIndex> out;
  out.reserve(s.n_treated);
  for (UnitIndex i : s.indices)
    if (ds.treatment(i) == 1) out.push_back(i);
  return out;
}

std::vector<UnitIndex> control_units(const Dataset& ds, const UnitSubset& s) {
  std::vector<UnitIndex> out;
  out.reserve(s.n_control);
  for (UnitIndex i : s.indices)
    if (ds.treatment(i) == 0) out.push_back(i);
  return out;
}

}  // namespace deparadox
