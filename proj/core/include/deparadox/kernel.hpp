#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "deparadox/dataset.hpp"

namespace deparadox {

// RBF bandwidth: either a fixed positive sigma or the median heuristic.
struct Bandwidth {
  std::optional<double> sigma;

  static Bandwidth automatic() { return {}; }
  static Bandwidth fixed(double s) { return {s}; }
  bool is_auto() const noexcept { return !sigma.has_value(); }
};

// Dense N x N RBF Gram matrix, exp(-|z_i - z_j|^2 / (2 sigma^2)).
class KernelGram {
 public:
  KernelGram(std::vector<double> matrix, std::size_t n, double bandwidth);

  std::size_t size() const noexcept { return n_; }
  double bandwidth() const noexcept { return bandwidth_; }
  double operator()(UnitIndex i, UnitIndex j) const { return matrix_[i * n_ + j]; }
  std::span<const double> row(UnitIndex i) const {
    return {matrix_.data() + i * n_, n_};
  }

 private:
  std::vector<double> matrix_;
  std::size_t n_;
  double bandwidth_;
};

inline constexpr std::size_t kDefaultGramByteLimit = std::size_t{4} << 30;

// Median of pairwise Euclidean distances over a deterministic sample of at
// most 1000 units; 1.0 when that median is zero.
double median_heuristic_bandwidth(const Dataset& ds);

KernelGram build_gram(const Dataset& ds, Bandwidth bandwidth,
                      std::size_t max_bytes = kDefaultGramByteLimit);

// Unbiased MMD^2 estimate between the treated and control index sets. Can be
// slightly negative. Both sets need at least two units.
double mmd_unbiased(const KernelGram& gram, std::span<const UnitIndex> treated,
                    std::span<const UnitIndex> control);

// Same estimate with the arms taken from a subset's treatment labels.
double mmd_unbiased(const KernelGram& gram, const Dataset& ds, const UnitSubset& s);

// Empty optional when an arm has fewer than two units.
std::optional<double> try_mmd_unbiased(const KernelGram& gram, const Dataset& ds,
                                       const UnitSubset& s);

// Mean over features of the two-sample Kolmogorov-Smirnov statistic between
// the treated and control arms of the subset.
double ks_statistic(const Dataset& ds, const UnitSubset& s);

// Permutation p-value for the hypothesis that the subset's arms share one
// covariate distribution, using the unbiased MMD as statistic. Permutes
// treatment labels within the subset. Stops early once the p-value is known
// to exceed `stop_above` (pass 1.0 to always run every permutation).
double mmd_permutation_pvalue(const KernelGram& gram, const Dataset& ds,
                              const UnitSubset& s, int permutations,
                              std::uint64_t seed, double stop_above = 1.0);

}  // namespace deparadox
