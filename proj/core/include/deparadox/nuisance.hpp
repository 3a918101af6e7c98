#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "deparadox/dataset.hpp"

namespace deparadox {

struct NuisanceConfig {
  int folds = 3;
  double lambda = 0.01;  // L1 penalty of the response model, standardized scale
  double clip = 0.01;    // propensity clipping to [clip, 1 - clip]
  std::uint64_t seed = 42;
  int logistic_max_iter = 200;
  double logistic_tol = 1e-6;
  // Small ridge term keeping the logistic fit finite on separable data.
  double logistic_ridge = 1e-4;
  int lasso_max_iter = 10000;
  double lasso_tol = 1e-6;

  void validate() const;
};

// Per-feature centering and scaling learned on a training set. Constant
// features map to 0.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 0 marks a constant feature

  static Standardizer fit(const Dataset& ds, std::span<const UnitIndex> units);
  double apply(std::size_t k, double value) const {
    return scale[k] > 0.0 ? (value - mean[k]) / scale[k] : 0.0;
  }
};

// P(X = 1 | Z) via L2-stabilized logistic regression on standardized features.
struct LogisticModel {
  Standardizer standardizer;
  std::vector<double> weights;
  double intercept = 0.0;
  int iterations = 0;
  bool converged = false;

  double predict(std::span<const double> z) const;
};

LogisticModel fit_logistic(const Dataset& ds, std::span<const UnitIndex> units,
                           const NuisanceConfig& config);

// E[Y | X, Z] via L1-penalized least squares on [X, standardized Z] with an
// unpenalized intercept. Objective: (1/2n)|y - b0 - Aw|^2 + lambda |w|_1.
struct LassoModel {
  Standardizer standardizer;
  double treatment_weight = 0.0;
  std::vector<double> weights;
  double intercept = 0.0;
  int iterations = 0;

  double predict(int action, std::span<const double> z) const;
};

LassoModel fit_lasso(const Dataset& ds, std::span<const UnitIndex> units, double lambda,
                     int max_iter, double tol);

// One cross-fitting fold's nuisance pair, plus the units it was trained on.
struct FoldModels {
  std::function<double(std::span<const double>)> propensity;
  std::function<double(int, std::span<const double>)> response;
  std::vector<UnitIndex> training_units;  // ascending
};

struct NuisanceModels {
  UnitSubset subset;
  std::vector<int> fold_of;  // parallel to subset.indices, values in [0, folds)
  std::vector<FoldModels> folds;

  int fold_count() const noexcept { return static_cast<int>(folds.size()); }
};

// Seeded fold assignment, stratified by treatment arm; parallel to s.indices.
std::vector<int> assign_folds(const Dataset& ds, const UnitSubset& s, int folds,
                              std::uint64_t seed);

NuisanceModels fit_nuisance(const Dataset& ds, const UnitSubset& s,
                            const NuisanceConfig& config);

// Per-unit welfare scores for both actions, parallel to `units`.
struct DrScores {
  std::vector<UnitIndex> units;
  std::vector<std::array<double, 2>> gamma;
  std::vector<int> provenance;  // fold whose models produced each row

  std::size_t size() const noexcept { return units.size(); }
};

enum class Estimator { kDoublyRobust, kDirect, kInverseWeighting };

Estimator parse_estimator(std::string_view name);
std::string_view to_string(Estimator e);

DrScores dr_scores(const Dataset& ds, const NuisanceModels& models, double clip);
DrScores dm_scores(const Dataset& ds, const NuisanceModels& models);
DrScores ips_scores(const Dataset& ds, const NuisanceModels& models, double clip);
DrScores compute_scores(Estimator e, const Dataset& ds, const NuisanceModels& models,
                        double clip);

}  // namespace deparadox
