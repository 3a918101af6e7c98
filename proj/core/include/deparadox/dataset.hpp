#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deparadox {

using UnitIndex = std::size_t;

// Immutable table of (treatment, outcome, covariates) triplets.
//
// Covariates are stored row-major. For every feature a permutation of the
// units sorted ascending by that feature (ties broken by unit index) is
// computed once at construction and shared by both tree-building stages.
class Dataset {
 public:
  Dataset(std::vector<int> treatments, std::vector<double> outcomes,
          std::vector<double> covariates_row_major,
          std::vector<std::string> feature_names);

  std::size_t size() const noexcept { return treatments_.size(); }
  std::size_t num_features() const noexcept { return feature_names_.size(); }

  int treatment(UnitIndex i) const { return treatments_[i]; }
  double outcome(UnitIndex i) const { return outcomes_[i]; }
  double covariate(UnitIndex i, std::size_t k) const {
    return covariates_[i * num_features() + k];
  }
  std::span<const double> row(UnitIndex i) const {
    return {covariates_.data() + i * num_features(), num_features()};
  }

  std::span<const int> treatments() const noexcept { return treatments_; }
  std::span<const double> outcomes() const noexcept { return outcomes_; }
  std::span<const double> covariates() const noexcept { return covariates_; }
  const std::vector<std::string>& feature_names() const noexcept {
    return feature_names_;
  }
  // Index of the named feature; throws SchemaError if absent.
  std::size_t feature_index(std::string_view name) const;

  std::span<const UnitIndex> sorted_index(std::size_t k) const {
    return sorted_index_[k];
  }

  std::size_t n_treated() const noexcept { return n_treated_; }
  std::size_t n_control() const noexcept { return size() - n_treated_; }

  // Copies with replaced treatment/outcome columns; covariates and the sorted
  // index are shared by value.
  Dataset with_columns(std::vector<int> treatments,
                       std::vector<double> outcomes) const;

 private:
  std::vector<int> treatments_;
  std::vector<double> outcomes_;
  std::vector<double> covariates_;
  std::vector<std::string> feature_names_;
  std::vector<std::vector<UnitIndex>> sorted_index_;
  std::size_t n_treated_ = 0;
};

// Reads a header-first CSV. Every column other than the treatment and outcome
// columns becomes a covariate, in file order.
Dataset load_csv(const std::filesystem::path& path,
                 std::string_view treatment_col, std::string_view outcome_col);
Dataset read_csv(std::istream& in, std::string_view treatment_col,
                 std::string_view outcome_col);

// Writes the treatment and outcome columns first, then the covariates. Reals
// are printed with max_digits10 so that reloading is bit-exact.
void write_csv(const Dataset& ds, std::ostream& out,
               std::string_view treatment_col = "treatment",
               std::string_view outcome_col = "outcome");
void save_csv(const Dataset& ds, const std::filesystem::path& path,
              std::string_view treatment_col = "treatment",
              std::string_view outcome_col = "outcome");

// Ordered set of unit indices into a Dataset, with per-arm counts.
struct UnitSubset {
  std::vector<UnitIndex> indices;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }

  static UnitSubset all(const Dataset& ds);
  // Sorts the indices; throws ContractViolation on duplicates or
  // out-of-range entries.
  static UnitSubset from_indices(const Dataset& ds,
                                 std::vector<UnitIndex> indices);

  bool operator==(const UnitSubset&) const = default;
};

UnitSubset subset(const Dataset& ds,
                  const std::function<bool(UnitIndex)>& predicate);

// Indices of the treated (resp. control) units of a subset, ascending.
std::vector<UnitIndex> treated_units(const Dataset& ds, const UnitSubset& s);
std::vector<UnitIndex> control_units(const Dataset& ds, const UnitSubset& s);

}  // namespace deparadox
