#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deparadox/error.hpp"
#include "deparadox/simulate.hpp"

using namespace deparadox;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double sgn(double x) { return x < 0 ? -1.0 : 1.0; }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> column(const Dataset& ds, const std::string& name) {
  const std::size_t k = ds.feature_index(name);
  std::vector<double> out(ds.size());
  for (UnitIndex i = 0; i < ds.size(); ++i) out[i] = ds.covariate(i, k);
  return out;
}

}  // namespace

class Designs : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(Designs, TruthFollowsTheDesignFormulas) {
  const auto [f, g] = GetParam();
  const SimulationSpec spec = SimulationSpec::draw(f, g, 500, 2, 3, 17);
  const SimulatedData sim = generate(spec);
  const Dataset& ds = sim.data;
  ASSERT_EQ(ds.feature_names(), (std::vector<std::string>{"W1", "W2", "V1", "V2", "V3"}));
  ASSERT_EQ(sim.truth.size(), 500u);
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    const double w1 = ds.covariate(i, 0), w2 = ds.covariate(i, 1);
    const double v1 = ds.covariate(i, 2), v2 = ds.covariate(i, 3), v3 = ds.covariate(i, 4);
    const double index = f == 0 ? spec.alpha[0]
                       : f == 1 ? sgn(w1) * spec.alpha[0]
                                : spec.alpha[0] * w1 + spec.alpha[1] * w2;
    const double effect = g == 0 ? 1.0
                        : g == 1 ? sgn(v1) * spec.beta[0]
                                 : spec.beta[0] * v1 + spec.beta[1] * v2 + spec.beta[2] * v3;
    EXPECT_NEAR(sim.truth.propensity[i], logistic(index), 1e-15);
    EXPECT_NEAR(sim.truth.effect[i], effect, 1e-15);
    EXPECT_EQ(sim.truth.optimal_action[i], effect > 0 ? 1 : 0);
  }
}

INSTANTIATE_TEST_SUITE_P(AllPairs, Designs,
                         ::testing::Values(std::pair{0, 0}, std::pair{0, 1}, std::pair{0, 2},
                                           std::pair{1, 0}, std::pair{1, 1}, std::pair{1, 2},
                                           std::pair{2, 0}, std::pair{2, 1}, std::pair{2, 2}));

TEST(Simulate, NoiseAndAssignmentMatchTheModel) {
  const SimulationSpec spec = SimulationSpec::draw(2, 2, 40000, 2, 2, 5);
  const SimulatedData sim = generate(spec);
  const Dataset& ds = sim.data;
  double resid_sum = 0, resid_sq = 0, assign_gap = 0;
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    const double wphi = spec.phi[0] * ds.covariate(i, 0) + spec.phi[1] * ds.covariate(i, 1);
    const double e = ds.outcome(i) - sim.truth.effect[i] * ds.treatment(i) - wphi;
    resid_sum += e;
    resid_sq += e * e;
    assign_gap += ds.treatment(i) - sim.truth.propensity[i];
  }
  const double n = static_cast<double>(ds.size());
  EXPECT_NEAR(resid_sum / n, 0.0, 0.02);
  EXPECT_NEAR(resid_sq / n, 1.0, 0.03);
  EXPECT_NEAR(assign_gap / n, 0.0, 0.01);
}

TEST(Simulate, SeedsControlEverything) {
  const auto a = generate(SimulationSpec::draw(1, 1, 50, 2, 2, 3));
  const auto b = generate(SimulationSpec::draw(1, 1, 50, 2, 2, 3));
  const auto c = generate(SimulationSpec::draw(1, 1, 50, 2, 2, 4));
  EXPECT_TRUE(std::equal(a.data.outcomes().begin(), a.data.outcomes().end(), b.data.outcomes().begin()));
  EXPECT_FALSE(std::equal(a.data.outcomes().begin(), a.data.outcomes().end(), c.data.outcomes().begin()));
  EXPECT_NE(SimulationSpec::draw(0, 0, 10, 2, 2, 1).alpha, SimulationSpec::draw(0, 0, 10, 2, 2, 2).alpha);
}

TEST(Simulate, ValidatesSpec) {
  SimulationSpec s = SimulationSpec::draw(0, 0, 10, 2, 2, 1);
  s.f_design = 3;
  EXPECT_THROW(s.validate(), ValidationError);
  s = SimulationSpec::draw(0, 0, 10, 2, 2, 1);
  s.beta.pop_back();
  EXPECT_THROW(generate(s), ValidationError);
  s = SimulationSpec::draw(0, 0, 10, 2, 2, 1);
  s.n = 0;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Truth, CsvRoundTrip) {
  const auto sim = generate(SimulationSpec::draw(2, 2, 30, 2, 2, 8));
  std::stringstream buf;
  write_truth_csv(sim.truth, buf);
  const GroundTruth back = read_truth_csv(buf);
  EXPECT_EQ(back.propensity, sim.truth.propensity);
  EXPECT_EQ(back.effect, sim.truth.effect);
  EXPECT_EQ(back.optimal_action, sim.truth.optimal_action);

  std::istringstream bad_header("h,g,a\n0.5,1,1\n");
  EXPECT_THROW(read_truth_csv(bad_header), SchemaError);
  std::istringstream bad_action("h_true,g_true,optimal_action\n0.5,1,2\n");
  EXPECT_THROW(read_truth_csv(bad_action), ValidationError);
}

TEST(Voting, FollowsTheSchema) {
  const Dataset ds = generate_voting(3000, 4);
  ASSERT_EQ(ds.feature_names(), voting_features());
  EXPECT_EQ(ds.feature_names().size(), 8u);
  const auto hh = column(ds, "hh_size");
  const auto sex = column(ds, "sex");
  const auto yob = column(ds, "yob");
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    EXPECT_TRUE(ds.outcome(i) == 0.0 || ds.outcome(i) == 1.0);
    EXPECT_GE(hh[i], 1.0);
    EXPECT_LE(hh[i], 5.0);
    EXPECT_EQ(hh[i], std::round(hh[i]));
    EXPECT_GE(sex[i], 0.0);
    EXPECT_LE(sex[i], 1.0);
    EXPECT_NEAR(sex[i] * hh[i], std::round(sex[i] * hh[i]), 1e-9);
    for (const char* e : {"g2000", "g2002", "p2000", "p2002", "p2004"}) {
      const double share = ds.covariate(i, ds.feature_index(e));
      EXPECT_GE(share, 0.0);
      EXPECT_LE(share, 1.0);
    }
  }
  EXPECT_NEAR(static_cast<double>(ds.n_treated()) / ds.size(), 0.5, 0.03);
  EXPECT_NEAR(median(yob), 1956.0, 2.0);
  EXPECT_EQ(generate_voting(100, 9).outcomes()[5], generate_voting(100, 9).outcomes()[5]);
}

TEST(Injection, ZeroProbabilityIsIdentity) {
  const Dataset ds = generate_voting(500, 1);
  const Dataset out = inject_hybrid(ds, InjectionSpec{0.0, 0.0, 3});
  EXPECT_TRUE(std::equal(ds.treatments().begin(), ds.treatments().end(), out.treatments().begin()));
  EXPECT_TRUE(std::equal(ds.outcomes().begin(), ds.outcomes().end(), out.outcomes().begin()));
}

TEST(Injection, CertainFlipsHitTheirTargets) {
  const Dataset ds = generate_voting(801, 2);
  const Dataset out = inject_hybrid(ds, InjectionSpec{1.0, 1.0, 3});
  const double yob_m = median(column(ds, "yob")), hh_m = median(column(ds, "hh_size"));
  const double p04_m = median(column(ds, "p2004")), sex_m = median(column(ds, "sex"));
  const auto yob = column(ds, "yob"), hh = column(ds, "hh_size");
  const auto p04 = column(ds, "p2004"), sex = column(ds, "sex");
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    const int likely = (yob[i] > yob_m && hh[i] < hh_m) ? 1 : 0;
    const int preferred = (p04[i] < p04_m && sex[i] < sex_m) ? 1 : 0;
    EXPECT_EQ(out.treatment(i), likely);
    EXPECT_EQ(out.outcome(i), out.treatment(i) == preferred ? 1.0 : 0.0);
    EXPECT_EQ(out.covariate(i, 0), ds.covariate(i, 0));
  }
  const InjectionRules r = InjectionRules::from_data(ds);
  EXPECT_EQ(r.yob_median, yob_m);
  EXPECT_EQ(r.hh_size_median, hh_m);
}

TEST(Injection, PartialFlipRateIsRespected) {
  const Dataset ds = generate_voting(20000, 3);
  const Dataset out = inject_hybrid(ds, InjectionSpec{0.3, 0.0, 1});
  const InjectionRules r = InjectionRules::from_data(ds);
  std::size_t candidates = 0, flipped = 0;
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    if (ds.treatment(i) == r.likely_treatment(ds, i)) continue;
    ++candidates;
    flipped += out.treatment(i) != ds.treatment(i);
  }
  EXPECT_NEAR(static_cast<double>(flipped) / candidates, 0.3, 0.02);
}

TEST(Injection, RejectsUnsuitableData) {
  const Dataset ds = generate_voting(50, 1);
  EXPECT_THROW(inject_hybrid(ds, InjectionSpec{1.5, 0.0, 1}), ValidationError);
  const Dataset cont = ds.with_columns({ds.treatments().begin(), ds.treatments().end()},
                                       std::vector<double>(50, 0.5));
  EXPECT_THROW(inject_hybrid(cont, InjectionSpec{0.5, 0.5, 1}), ValidationError);
  const Dataset other({1, 0}, {0, 1}, {1, 2}, {"a"});
  EXPECT_THROW(inject_hybrid(other, InjectionSpec{0.5, 0.5, 1}), SchemaError);
}
