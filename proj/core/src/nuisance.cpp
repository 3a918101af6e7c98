#include "deparadox/nuisance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <string>

#include "deparadox/error.hpp"

namespace deparadox {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

Eigen::MatrixXd standardized_design(const Dataset& ds, std::span<const UnitIndex> units,
                                    const Standardizer& st) {
  const std::size_t k = ds.num_features();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(units.size()), static_cast<Eigen::Index>(k + 1));
  for (std::size_t r = 0; r < units.size(); ++r) {
    x(static_cast<Eigen::Index>(r), 0) = 1.0;
    for (std::size_t f = 0; f < k; ++f) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f + 1)) =
          st.apply(f, ds.covariate(units[r], f));
    }
  }
  return x;
}

}  // namespace

void NuisanceConfig::validate() const {
  if (folds < 2) throw ValidationError("cross-fitting needs at least two folds");
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be non-negative");
  if (!(clip > 0.0 && clip < 0.5)) throw ValidationError("clip must lie in (0, 0.5)");
}

Standardizer Standardizer::fit(const Dataset& ds, std::span<const UnitIndex> units) {
  const std::size_t k = ds.num_features();
  Standardizer st;
  st.mean.assign(k, 0.0);
  st.scale.assign(k, 0.0);
  if (units.empty()) return st;
  const double n = static_cast<double>(units.size());
  for (std::size_t f = 0; f < k; ++f) {
    double m = 0.0;
    for (UnitIndex i : units) m += ds.covariate(i, f);
    m /= n;
    double ss = 0.0;
    for (UnitIndex i : units) {
      const double d = ds.covariate(i, f) - m;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    st.mean[f] = m;
    st.scale[f] = sd > 1e-12 * std::max(1.0, std::abs(m)) ? sd : 0.0;
  }
  return st;
}

double LogisticModel::predict(std::span<const double> z) const {
  double eta = intercept;
  for (std::size_t k = 0; k < weights.size(); ++k) eta += weights[k] * standardizer.apply(k, z[k]);
  return sigmoid(eta);
}

LogisticModel fit_logistic(const Dataset& ds, std::span<const UnitIndex> units,
                           const NuisanceConfig& config) {
  LogisticModel model;
  model.standardizer = Standardizer::fit(ds, units);
  const Eigen::MatrixXd x = standardized_design(ds, units, model.standardizer);
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) y(r) = ds.treatment(units[static_cast<std::size_t>(r)]);

  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, config.logistic_ridge);
  penalty(0) = 0.0;

  auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = x * beta;
    double loss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) loss += softplus(eta(r)) - y(r) * eta(r);
    return loss * inv_n + 0.5 * beta.cwiseProduct(penalty).dot(beta);
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double current = objective(beta);
  for (int it = 0; it < config.logistic_max_iter; ++it) {
    const Eigen::VectorXd eta = x * beta;
    Eigen::VectorXd prob(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      prob(r) = sigmoid(eta(r));
      w(r) = prob(r) * (1.0 - prob(r));
    }
    const Eigen::VectorXd grad = x.transpose() * (prob - y) * inv_n + penalty.cwiseProduct(beta);
    model.iterations = it;
    if (grad.lpNorm<Eigen::Infinity>() < config.logistic_tol) {
      model.converged = true;
      break;
    }
    Eigen::MatrixXd hess = x.transpose() * w.asDiagonal() * x * inv_n;
    hess.diagonal() += penalty;
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);

    double t = 1.0;
    Eigen::VectorXd next = beta - step;
    double value = objective(next);
    while (value > current && t > 1e-10) {
      t *= 0.5;
      next = beta - t * step;
      value = objective(next);
    }
    if (value > current) break;
    beta = next;
    current = value;
  }

  model.intercept = beta(0);
  model.weights.assign(beta.data() + 1, beta.data() + p);
  return model;
}

double LassoModel::predict(int action, std::span<const double> z) const {
  double out = intercept + treatment_weight * action;
  for (std::size_t k = 0; k < weights.size(); ++k) out += weights[k] * standardizer.apply(k, z[k]);
  return out;
}

LassoModel fit_lasso(const Dataset& ds, std::span<const UnitIndex> units, double lambda,
                     int max_iter, double tol) {
  LassoModel model;
  model.standardizer = Standardizer::fit(ds, units);
  const std::size_t k = ds.num_features();
  const std::size_t n = units.size();
  const std::size_t p = k + 1;  // column 0 is the treatment indicator
  const double nd = static_cast<double>(n);

  // Column-major centered design.
  std::vector<double> a(n * p);
  std::vector<double> col_mean(p, 0.0);
  std::vector<double> col_sq(p, 0.0);
  double y_mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const UnitIndex i = units[r];
    a[r] = ds.treatment(i);
    for (std::size_t f = 0; f < k; ++f) {
      a[(f + 1) * n + r] = model.standardizer.apply(f, ds.covariate(i, f));
    }
    y_mean += ds.outcome(i);
  }
  y_mean /= nd;
  for (std::size_t j = 0; j < p; ++j) {
    double m = 0.0;
    for (std::size_t r = 0; r < n; ++r) m += a[j * n + r];
    m /= nd;
    col_mean[j] = m;
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      a[j * n + r] -= m;
      ss += a[j * n + r] * a[j * n + r];
    }
    col_sq[j] = ss / nd;
  }

  std::vector<double> resid(n);
  for (std::size_t r = 0; r < n; ++r) resid[r] = ds.outcome(units[r]) - y_mean;
  std::vector<double> w(p, 0.0);

  int it = 0;
  for (; it < max_iter; ++it) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (col_sq[j] <= 1e-14) continue;
      const double* col = &a[j * n];
      double rho = 0.0;
      for (std::size_t r = 0; r < n; ++r) rho += col[r] * resid[r];
      rho = rho / nd + col_sq[j] * w[j];
      const double updated = soft_threshold(rho, lambda) / col_sq[j];
      const double delta = updated - w[j];
      if (delta != 0.0) {
        for (std::size_t r = 0; r < n; ++r) resid[r] -= delta * col[r];
        w[j] = updated;
        max_change = std::max(max_change, std::abs(delta) * std::sqrt(col_sq[j]));
      }
    }
    if (max_change < tol) break;
  }
  model.iterations = it;
  model.treatment_weight = w[0];
  model.weights.assign(w.begin() + 1, w.end());
  double b0 = y_mean;
  for (std::size_t j = 0; j < p; ++j) b0 -= col_mean[j] * w[j];
  model.intercept = b0;
  return model;
}

std::vector<int> assign_folds(const Dataset& ds, const UnitSubset& s, int folds,
                              std::uint64_t seed) {
  std::vector<std::size_t> treated;
  std::vector<std::size_t> control;
  for (std::size_t p = 0; p < s.size(); ++p) {
    (ds.treatment(s.indices[p]) == 1 ? treated : control).push_back(p);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(treated.begin(), treated.end(), rng);
  std::shuffle(control.begin(), control.end(), rng);

  std::vector<int> fold_of(s.size(), 0);
  std::size_t next = 0;
  for (const auto* arm : {&treated, &control}) {
    for (std::size_t p : *arm) {
      fold_of[p] = static_cast<int>(next % static_cast<std::size_t>(folds));
      ++next;
    }
  }
  return fold_of;
}

NuisanceModels fit_nuisance(const Dataset& ds, const UnitSubset& s,
                            const NuisanceConfig& config) {
  config.validate();
  const auto folds = static_cast<std::size_t>(config.folds);
  if (s.size() < 2 * folds) {
    throw FoldDegeneracyError("cross-fitting with " + std::to_string(folds) + " folds needs at least " +
                              std::to_string(2 * folds) + " units, got " + std::to_string(s.size()));
  }

  NuisanceModels models;
  models.subset = s;
  models.fold_of = assign_folds(ds, s, config.folds, config.seed);
  models.folds.resize(folds);

  for (std::size_t c = 0; c < folds; ++c) {
    std::vector<UnitIndex> train;
    std::size_t treated = 0;
    for (std::size_t p = 0; p < s.size(); ++p) {
      if (models.fold_of[p] == static_cast<int>(c)) continue;
      train.push_back(s.indices[p]);
      treated += static_cast<std::size_t>(ds.treatment(s.indices[p]));
    }
    if (treated == 0 || treated == train.size()) {
      throw FoldDegeneracyError("training complement of fold " + std::to_string(c) +
                                " contains a single treatment class; use fewer folds");
    }
    auto logit = std::make_shared<LogisticModel>(fit_logistic(ds, train, config));
    auto lasso = std::make_shared<LassoModel>(
        fit_lasso(ds, train, config.lambda, config.lasso_max_iter, config.lasso_tol));
    FoldModels& fm = models.folds[c];
    fm.propensity = [logit](std::span<const double> z) { return logit->predict(z); };
    fm.response = [lasso](int a, std::span<const double> z) { return lasso->predict(a, z); };
    fm.training_units = std::move(train);
  }
  return models;
}

Estimator parse_estimator(std::string_view name) {
  if (name == "dr") return Estimator::kDoublyRobust;
  if (name == "dm") return Estimator::kDirect;
  if (name == "ips") return Estimator::kInverseWeighting;
  throw ValidationError("unknown estimator '" + std::string(name) + "' (expected dr, dm or ips)");
}

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::kDoublyRobust: return "dr";
    case Estimator::kDirect: return "dm";
    case Estimator::kInverseWeighting: return "ips";
  }
  return "dr";
}

namespace {

enum class Terms { kResponse, kWeighting, kBoth };

DrScores score(const Dataset& ds, const NuisanceModels& models, double clip, Terms terms) {
  const UnitSubset& s = models.subset;
  if (models.fold_of.size() != s.size()) {
    throw ContractViolation("fold assignment does not cover the subset");
  }
  DrScores out;
  out.units = s.indices;
  out.gamma.resize(s.size());
  out.provenance = models.fold_of;

  for (std::size_t p = 0; p < s.size(); ++p) {
    const UnitIndex i = s.indices[p];
    const auto fold = static_cast<std::size_t>(models.fold_of[p]);
    const FoldModels& fm = models.folds.at(fold);
    const auto z = ds.row(i);
    const int x = ds.treatment(i);
    const double y = ds.outcome(i);

    double e = 0.5;
    if (terms != Terms::kResponse) e = std::clamp(fm.propensity(z), clip, 1.0 - clip);
    std::array<double, 2> m{0.0, 0.0};
    if (terms != Terms::kWeighting) m = {fm.response(0, z), fm.response(1, z)};

    for (int a = 0; a < 2; ++a) {
      const double pa = a == 1 ? e : 1.0 - e;
      double g = 0.0;
      switch (terms) {
        case Terms::kResponse: g = m[a]; break;
        case Terms::kWeighting: g = x == a ? y / pa : 0.0; break;
        case Terms::kBoth: g = m[a] + (x == a ? (y - m[x]) / pa : 0.0); break;
      }
      out.gamma[p][a] = g;
    }
  }
  return out;
}

}  // namespace

DrScores dr_scores(const Dataset& ds, const NuisanceModels& models, double clip) {
  return score(ds, models, clip, Terms::kBoth);
}

DrScores dm_scores(const Dataset& ds, const NuisanceModels& models) {
  return score(ds, models, 0.0, Terms::kResponse);
}

DrScores ips_scores(const Dataset& ds, const NuisanceModels& models, double clip) {
  return score(ds, models, clip, Terms::kWeighting);
}

DrScores compute_scores(Estimator e, const Dataset& ds, const NuisanceModels& models,
                        double clip) {
  switch (e) {
    case Estimator::kDoublyRobust: return dr_scores(ds, models, clip);
    case Estimator::kDirect: return dm_scores(ds, models);
    case Estimator::kInverseWeighting: return ips_scores(ds, models, clip);
  }
  return dr_scores(ds, models, clip);
}

}  // namespace deparadox
