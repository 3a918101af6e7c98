#include "deparadox/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "deparadox/error.hpp"

namespace deparadox {
namespace {

constexpr std::uint64_t kBandwidthSampleSeed = 0x6d6d645f73656564ULL;
constexpr std::size_t kBandwidthSampleSize = 1000;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    d += diff * diff;
  }
  return d;
}

double within_sum(const KernelGram& gram, std::span<const UnitIndex> units) {
  double s = 0.0;
  for (std::size_t p = 0; p < units.size(); ++p) {
    const auto row = gram.row(units[p]);
    for (std::size_t q = 0; q < units.size(); ++q) {
      if (p != q) s += row[units[q]];
    }
  }
  return s;
}

}  // namespace

KernelGram::KernelGram(std::vector<double> matrix, std::size_t n, double bandwidth)
    : matrix_(std::move(matrix)), n_(n), bandwidth_(bandwidth) {
  if (matrix_.size() != n_ * n_) {
    throw ContractViolation("Gram storage does not match its dimension");
  }
}

double median_heuristic_bandwidth(const Dataset& ds) {
  std::vector<UnitIndex> sample(ds.size());
  std::iota(sample.begin(), sample.end(), UnitIndex{0});
  if (sample.size() > kBandwidthSampleSize) {
    std::mt19937_64 rng(kBandwidthSampleSeed);
    std::shuffle(sample.begin(), sample.end(), rng);
    sample.resize(kBandwidthSampleSize);
    std::sort(sample.begin(), sample.end());
  }
  if (sample.size() < 2) return 1.0;

  std::vector<double> dist;
  dist.reserve(sample.size() * (sample.size() - 1) / 2);
  for (std::size_t a = 0; a < sample.size(); ++a) {
    for (std::size_t b = a + 1; b < sample.size(); ++b) {
      dist.push_back(std::sqrt(squared_distance(ds.row(sample[a]), ds.row(sample[b]))));
    }
  }
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
  double median = dist[mid];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + mid);
    median = 0.5 * (median + lower);
  }
  return median > 0.0 ? median : 1.0;
}

KernelGram build_gram(const Dataset& ds, Bandwidth bandwidth, std::size_t max_bytes) {
  const std::size_t n = ds.size();
  const double required = static_cast<double>(n) * static_cast<double>(n) * sizeof(double);
  if (required > static_cast<double>(max_bytes)) {
    throw CapacityError("Gram matrix for " + std::to_string(n) + " units needs " +
                            std::to_string(static_cast<std::size_t>(required)) +
                            " bytes, above the limit of " + std::to_string(max_bytes),
                        static_cast<std::size_t>(required));
  }
  const double sigma = bandwidth.is_auto() ? median_heuristic_bandwidth(ds) : *bandwidth.sigma;
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("bandwidth must be a positive finite number");
  }
  const double scale = -1.0 / (2.0 * sigma * sigma);

  std::vector<double> m(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto zi = ds.row(i);
    m[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::exp(scale * squared_distance(zi, ds.row(j)));
      if (!std::isfinite(v)) throw NumericError("non-finite kernel entry");
      m[i * n + j] = v;
      m[j * n + i] = v;
    }
  }
  return KernelGram(std::move(m), n, sigma);
}

double mmd_unbiased(const KernelGram& gram, std::span<const UnitIndex> treated,
                    std::span<const UnitIndex> control) {
  const double n1 = static_cast<double>(treated.size());
  const double n0 = static_cast<double>(control.size());
  if (treated.size() < 2 || control.size() < 2) {
    throw DegenerateArmError("kernel distance needs at least two units per arm (treated=" +
                             std::to_string(treated.size()) + ", control=" +
                             std::to_string(control.size()) + ")");
  }
  double cross = 0.0;
  for (UnitIndex i : treated) {
    const auto row = gram.row(i);
    for (UnitIndex j : control) cross += row[j];
  }
  return within_sum(gram, treated) / (n1 * (n1 - 1.0)) +
         within_sum(gram, control) / (n0 * (n0 - 1.0)) - 2.0 * cross / (n1 * n0);
}

double mmd_unbiased(const KernelGram& gram, const Dataset& ds, const UnitSubset& s) {
  return mmd_unbiased(gram, treated_units(ds, s), control_units(ds, s));
}

std::optional<double> try_mmd_unbiased(const KernelGram& gram, const Dataset& ds,
                                       const UnitSubset& s) {
  if (s.n_treated < 2 || s.n_control < 2) return std::nullopt;
  return mmd_unbiased(gram, ds, s);
}

double ks_statistic(const Dataset& ds, const UnitSubset& s) {
  if (s.n_treated == 0 || s.n_control == 0) {
    throw DegenerateArmError("KS statistic needs both arms nonempty");
  }
  const auto treated = treated_units(ds, s);
  const auto control = control_units(ds, s);
  const double n1 = static_cast<double>(treated.size());
  const double n0 = static_cast<double>(control.size());

  std::vector<double> a(treated.size());
  std::vector<double> b(control.size());
  double total = 0.0;
  for (std::size_t k = 0; k < ds.num_features(); ++k) {
    for (std::size_t p = 0; p < treated.size(); ++p) a[p] = ds.covariate(treated[p], k);
    for (std::size_t p = 0; p < control.size(); ++p) b[p] = ds.covariate(control[p], k);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t ia = 0;
    std::size_t ib = 0;
    double sup = 0.0;
    while (ia < a.size() || ib < b.size()) {
      double x;
      if (ib == b.size() || (ia < a.size() && a[ia] <= b[ib])) {
        x = a[ia];
      } else {
        x = b[ib];
      }
      while (ia < a.size() && a[ia] == x) ++ia;
      while (ib < b.size() && b[ib] == x) ++ib;
      sup = std::max(sup, std::abs(static_cast<double>(ia) / n1 - static_cast<double>(ib) / n0));
    }
    total += sup;
  }
  return total / static_cast<double>(ds.num_features());
}

double mmd_permutation_pvalue(const KernelGram& gram, const Dataset& ds,
                              const UnitSubset& s, int permutations, std::uint64_t seed,
                              double stop_above) {
  if (s.n_treated < 2 || s.n_control < 2) {
    throw DegenerateArmError("permutation test needs at least two units per arm");
  }
  if (permutations < 1) throw ValidationError("permutation count must be positive");

  const std::size_t n = s.size();
  const auto& idx = s.indices;
  std::vector<double> row_sum(n, 0.0);
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const auto row = gram.row(idx[p]);
    double r = 0.0;
    for (std::size_t q = 0; q < n; ++q) r += row[idx[q]];
    row_sum[p] = r;
    total += r;
  }

  // Work with whichever arm is smaller; the other block sums follow from the
  // row sums and the grand total.
  const bool small_is_treated = s.n_treated <= s.n_control;
  const double n1 = static_cast<double>(s.n_treated);
  const double n0 = static_cast<double>(s.n_control);
  std::vector<int> labels(n);
  for (std::size_t p = 0; p < n; ++p) labels[p] = ds.treatment(idx[p]);
  const int small_label = small_is_treated ? 1 : 0;

  std::vector<std::size_t> members;
  auto statistic = [&]() {
    members.clear();
    for (std::size_t p = 0; p < n; ++p)
      if (labels[p] == small_label) members.push_back(p);
    double s_small = 0.0;
    double r_small = 0.0;
    for (std::size_t p : members) {
      const auto row = gram.row(idx[p]);
      r_small += row_sum[p];
      for (std::size_t q : members) s_small += row[idx[q]];
    }
    const double s_cross = r_small - s_small;
    const double s_large = total - s_small - 2.0 * s_cross;
    const double s_tt = small_is_treated ? s_small : s_large;
    const double s_cc = small_is_treated ? s_large : s_small;
    return (s_tt - n1) / (n1 * (n1 - 1.0)) + (s_cc - n0) / (n0 * (n0 - 1.0)) -
           2.0 * s_cross / (n1 * n0);
  };

  const double observed = statistic();
  std::mt19937_64 rng(seed);
  int exceed = 0;
  const double denom = static_cast<double>(permutations) + 1.0;
  for (int b = 0; b < permutations; ++b) {
    std::shuffle(labels.begin(), labels.end(), rng);
    if (statistic() >= observed) ++exceed;
    if ((1.0 + exceed) / denom > stop_above) break;
  }
  return (1.0 + exceed) / denom;
}

}  // namespace deparadox
