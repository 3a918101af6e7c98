#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "deparadox/dataset.hpp"

namespace deparadox {

// Parameters of the synthetic confounding/heterogeneity designs.
//
//   X ~ Bernoulli(h(W)),  h(W) = 1 / (1 + exp(-f(W) . alpha))
//   Y = g(V) X + W . phi + eps,  eps ~ N(0, 1)
//
// f design 0: f = 1 (index alpha[0]); 1: sign of W[0] times alpha[0];
// 2: W . alpha. g design 0: g = 1; 1: sign of V[0] times beta[0];
// 2: V . beta. Signs treat 0 as positive.
struct SimulationSpec {
  int f_design = 0;
  int g_design = 0;
  std::size_t dim_w = 2;
  std::size_t dim_v = 2;
  std::vector<double> alpha;  // length dim_w
  std::vector<double> beta;   // length dim_v
  std::vector<double> phi;    // length dim_w
  std::size_t n = 2000;
  std::uint64_t seed = 42;

  void validate() const;

  // Draws alpha, beta and phi i.i.d. N(0, 1) from a stream derived from `seed`.
  static SimulationSpec draw(int f_design, int g_design, std::size_t n, std::size_t dim_w,
                             std::size_t dim_v, std::uint64_t seed);
};

struct GroundTruth {
  std::vector<double> propensity;   // h(W_i)
  std::vector<double> effect;       // g(V_i)
  std::vector<int> optimal_action;  // 1 iff g(V_i) > 0

  std::size_t size() const noexcept { return effect.size(); }
};

struct SimulatedData {
  Dataset data;
  GroundTruth truth;
};

// Covariates are exposed as [W_1..W_dw, V_1..V_dv].
SimulatedData generate(const SimulationSpec& spec);

void write_truth_csv(const GroundTruth& truth, std::ostream& out);
void save_truth_csv(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth read_truth_csv(std::istream& in);
GroundTruth load_truth_csv(const std::filesystem::path& path);

// Feature names of the voting schema, in column order.
const std::vector<std::string>& voting_features();

// Synthetic households following the eight-feature voting schema: average
// birth year, share of women, household size, and per-election household
// turnout shares. Treatment is a fair coin; the outcome is a turnout
// indicator with a small homogeneous treatment effect.
Dataset generate_voting(std::size_t n, std::uint64_t seed);

struct InjectionSpec {
  double p_x_flip = 0.0;
  double p_y_flip = 0.0;
  std::uint64_t seed = 42;

  void validate() const;
};

// Per-unit injection targets derived from sample medians.
struct InjectionRules {
  double yob_median = 0.0;
  double hh_size_median = 0.0;
  double p2004_median = 0.0;
  double sex_median = 0.0;

  static InjectionRules from_data(const Dataset& ds);
  // 1 for young (birth year above the median) small households.
  int likely_treatment(const Dataset& ds, UnitIndex i) const;
  // 1 for low 2004 primary turnout and a low share of women.
  int preferred_treatment(const Dataset& ds, UnitIndex i) const;
};

// Injects confounding through treatment flips toward the likely treatment,
// then effect heterogeneity through outcome flips toward the preferred
// treatment. Covariates are untouched. Outcomes must be 0/1.
Dataset inject_hybrid(const Dataset& ds, const InjectionSpec& spec);

}  // namespace deparadox
