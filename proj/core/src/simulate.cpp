#include "deparadox/simulate.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "deparadox/error.hpp"

namespace deparadox {
namespace {

constexpr std::uint64_t kParameterStream = 0x706172616d73ULL;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double median_of(const Dataset& ds, std::size_t k) {
  const auto order = ds.sorted_index(k);
  const std::size_t n = order.size();
  const double hi = ds.covariate(order[n / 2], k);
  if (n % 2 == 1) return hi;
  return 0.5 * (ds.covariate(order[n / 2 - 1], k) + hi);
}

std::string format_real(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

void SimulationSpec::validate() const {
  if (f_design < 0 || f_design > 2) throw ValidationError("f design must be 0, 1 or 2");
  if (g_design < 0 || g_design > 2) throw ValidationError("g design must be 0, 1 or 2");
  if (dim_w < 1 || dim_v < 1) throw ValidationError("W and V need at least one dimension");
  if (alpha.size() != dim_w || phi.size() != dim_w) {
    throw ValidationError("alpha and phi must have length dim_w");
  }
  if (beta.size() != dim_v) throw ValidationError("beta must have length dim_v");
  if (n < 1) throw ValidationError("sample size must be positive");
}

SimulationSpec SimulationSpec::draw(int f_design, int g_design, std::size_t n, std::size_t dim_w,
                                    std::size_t dim_v, std::uint64_t seed) {
  SimulationSpec spec;
  spec.f_design = f_design;
  spec.g_design = g_design;
  spec.n = n;
  spec.dim_w = dim_w;
  spec.dim_v = dim_v;
  spec.seed = seed;
  std::mt19937_64 rng(seed ^ kParameterStream);
  std::normal_distribution<double> normal(0.0, 1.0);
  spec.alpha.resize(dim_w);
  spec.beta.resize(dim_v);
  spec.phi.resize(dim_w);
  for (double& a : spec.alpha) a = normal(rng);
  for (double& b : spec.beta) b = normal(rng);
  for (double& p : spec.phi) p = normal(rng);
  return spec;
}

SimulatedData generate(const SimulationSpec& spec) {
  spec.validate();
  const std::size_t k = spec.dim_w + spec.dim_v;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::vector<int> t(spec.n);
  std::vector<double> y(spec.n);
  std::vector<double> cov(spec.n * k);
  GroundTruth truth;
  truth.propensity.resize(spec.n);
  truth.effect.resize(spec.n);
  truth.optimal_action.resize(spec.n);

  for (std::size_t i = 0; i < spec.n; ++i) {
    double* row = &cov[i * k];
    for (std::size_t j = 0; j < k; ++j) row[j] = normal(rng);
    const std::span<const double> w(row, spec.dim_w);
    const std::span<const double> v(row + spec.dim_w, spec.dim_v);

    double index = 0.0;
    switch (spec.f_design) {
      case 0: index = spec.alpha[0]; break;
      case 1: index = sign_of(w[0]) * spec.alpha[0]; break;
      default: index = dot(w, spec.alpha); break;
    }
    double effect = 1.0;
    switch (spec.g_design) {
      case 0: effect = 1.0; break;
      case 1: effect = sign_of(v[0]) * spec.beta[0]; break;
      default: effect = dot(v, spec.beta); break;
    }
    const double h = logistic(index);
    const int x = uniform(rng) < h ? 1 : 0;
    const double eps = normal(rng);
    t[i] = x;
    y[i] = effect * x + dot(w, spec.phi) + eps;
    truth.propensity[i] = h;
    truth.effect[i] = effect;
    truth.optimal_action[i] = effect > 0.0 ? 1 : 0;
  }

  std::vector<std::string> names;
  for (std::size_t j = 0; j < spec.dim_w; ++j) names.push_back("W" + std::to_string(j + 1));
  for (std::size_t j = 0; j < spec.dim_v; ++j) names.push_back("V" + std::to_string(j + 1));
  return {Dataset(std::move(t), std::move(y), std::move(cov), std::move(names)), std::move(truth)};
}

void write_truth_csv(const GroundTruth& truth, std::ostream& out) {
  out << "h_true,g_true,optimal_action\n";
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out << format_real(truth.propensity[i]) << ',' << format_real(truth.effect[i]) << ','
        << truth.optimal_action[i] << '\n';
  }
}

void save_truth_csv(const GroundTruth& truth, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  write_truth_csv(truth, out);
}

GroundTruth read_truth_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("truth CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "h_true,g_true,optimal_action") {
    throw SchemaError("truth CSV header must be 'h_true,g_true,optimal_action'");
  }
  GroundTruth truth;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 3> v{};
    std::size_t start = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t end = c < 2 ? line.find(',', start) : line.size();
      if (end == std::string::npos) {
        throw ParseError("truth row " + std::to_string(row) + " has too few cells", row, "");
      }
      const char* first = line.data() + start;
      const char* last = line.data() + end;
      const auto [ptr, ec] = std::from_chars(first, last, v[c]);
      if (ec != std::errc{} || ptr != last) {
        throw ParseError("non-numeric truth value at row " + std::to_string(row), row,
                         c == 0 ? "h_true" : c == 1 ? "g_true" : "optimal_action");
      }
      start = end + 1;
    }
    if (v[2] != 0.0 && v[2] != 1.0) {
      throw ValidationError("optimal_action at row " + std::to_string(row) + " is not 0 or 1");
    }
    truth.propensity.push_back(v[0]);
    truth.effect.push_back(v[1]);
    truth.optimal_action.push_back(static_cast<int>(v[2]));
  }
  return truth;
}

GroundTruth load_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path.string() + "'");
  return read_truth_csv(in);
}

const std::vector<std::string>& voting_features() {
  static const std::vector<std::string> names = {"yob",   "sex",   "hh_size", "g2000",
                                                 "g2002", "p2000", "p2002",   "p2004"};
  return names;
}

Dataset generate_voting(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ValidationError("voting data needs at least two households");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::discrete_distribution<int> size_dist({0.25, 0.45, 0.15, 0.10, 0.05});

  // Base turnout rates for g2000, g2002, p2000, p2002, p2004.
  constexpr std::array<double, 5> kRates = {0.80, 0.65, 0.25, 0.38, 0.40};
  constexpr double kTreatmentEffect = 0.02;

  const std::size_t k = voting_features().size();
  std::vector<int> t(n);
  std::vector<double> y(n);
  std::vector<double> cov(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const int members = size_dist(rng) + 1;
    const double base_year = 1956.0 + 13.0 * normal(rng);
    const double civic = normal(rng);
    double year_sum = 0.0;
    int women = 0;
    for (int m = 0; m < members; ++m) {
      year_sum += std::round(base_year + 4.0 * normal(rng));
      women += uniform(rng) < 0.52 ? 1 : 0;
    }
    double* row = &cov[i * k];
    row[0] = year_sum / members;
    row[1] = static_cast<double>(women) / members;
    row[2] = members;
    for (std::size_t e = 0; e < kRates.size(); ++e) {
      const double p = logistic(std::log(kRates[e] / (1.0 - kRates[e])) + 1.5 * civic);
      int voters = 0;
      for (int m = 0; m < members; ++m) voters += uniform(rng) < p ? 1 : 0;
      row[3 + e] = static_cast<double>(voters) / members;
    }
    t[i] = uniform(rng) < 0.5 ? 1 : 0;
    const double p_vote = std::clamp(logistic(-1.1 + 1.2 * civic) + kTreatmentEffect * t[i], 0.0, 1.0);
    y[i] = uniform(rng) < p_vote ? 1.0 : 0.0;
  }
  return Dataset(std::move(t), std::move(y), std::move(cov), voting_features());
}

void InjectionSpec::validate() const {
  if (!(p_x_flip >= 0.0 && p_x_flip <= 1.0) || !(p_y_flip >= 0.0 && p_y_flip <= 1.0)) {
    throw ValidationError("flip probabilities must lie in [0, 1]");
  }
}

InjectionRules InjectionRules::from_data(const Dataset& ds) {
  InjectionRules r;
  r.yob_median = median_of(ds, ds.feature_index("yob"));
  r.hh_size_median = median_of(ds, ds.feature_index("hh_size"));
  r.p2004_median = median_of(ds, ds.feature_index("p2004"));
  r.sex_median = median_of(ds, ds.feature_index("sex"));
  return r;
}

int InjectionRules::likely_treatment(const Dataset& ds, UnitIndex i) const {
  const bool young = ds.covariate(i, ds.feature_index("yob")) > yob_median;
  const bool small = ds.covariate(i, ds.feature_index("hh_size")) < hh_size_median;
  return young && small ? 1 : 0;
}

int InjectionRules::preferred_treatment(const Dataset& ds, UnitIndex i) const {
  const bool low_turnout = ds.covariate(i, ds.feature_index("p2004")) < p2004_median;
  const bool few_women = ds.covariate(i, ds.feature_index("sex")) < sex_median;
  return low_turnout && few_women ? 1 : 0;
}

Dataset inject_hybrid(const Dataset& ds, const InjectionSpec& spec) {
  spec.validate();
  for (const auto& name : voting_features()) ds.feature_index(name);
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    if (ds.outcome(i) != 0.0 && ds.outcome(i) != 1.0) {
      throw ValidationError("hybrid injection needs a binary outcome; unit " + std::to_string(i) +
                            " has " + format_real(ds.outcome(i)));
    }
  }
  const InjectionRules rules = InjectionRules::from_data(ds);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::vector<int> t(ds.treatments().begin(), ds.treatments().end());
  std::vector<double> y(ds.outcomes().begin(), ds.outcomes().end());
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    const double ux = uniform(rng);
    const double uy = uniform(rng);
    const int likely = rules.likely_treatment(ds, i);
    if (t[i] != likely && ux < spec.p_x_flip) t[i] = likely;
    const int preferred = rules.preferred_treatment(ds, i);
    if (t[i] == preferred && y[i] == 0.0 && uy < spec.p_y_flip) {
      y[i] = 1.0;
    } else if (t[i] != preferred && y[i] == 1.0 && uy < spec.p_y_flip) {
      y[i] = 0.0;
    }
  }
  return ds.with_columns(std::move(t), std::move(y));
}

}  // namespace deparadox
