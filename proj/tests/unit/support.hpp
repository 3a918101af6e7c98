#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "deparadox/dataset.hpp"

namespace testing_support {

// Random dataset with both arms present. When `grid` > 0 covariates are drawn
// from {0, ..., grid - 1} so that ties occur.
inline deparadox::Dataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t k,
                                         int grid = 0, std::size_t min_per_arm = 1) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> cell(0, grid > 0 ? grid - 1 : 0);
  std::vector<int> t(n);
  for (;;) {
    std::size_t treated = 0;
    for (auto& v : t) {
      v = static_cast<int>(rng() & 1U);
      treated += static_cast<std::size_t>(v);
    }
    if (treated >= min_per_arm && n - treated >= min_per_arm) break;
  }
  std::vector<double> y(n);
  for (auto& v : y) v = normal(rng);
  std::vector<double> z(n * k);
  for (auto& v : z) v = grid > 0 ? static_cast<double>(cell(rng)) : normal(rng);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < k; ++j) names.push_back("z" + std::to_string(j));
  return deparadox::Dataset(std::move(t), std::move(y), std::move(z), std::move(names));
}

}  // namespace testing_support
