#include <benchmark/benchmark.h>

#include "deparadox/balance_tree.hpp"
#include "deparadox/deparadox_tree.hpp"
#include "deparadox/kernel.hpp"
#include "deparadox/policy_tree.hpp"
#include "deparadox/simulate.hpp"

using namespace deparadox;

namespace {

SimulatedData sample(std::size_t n) { return generate(SimulationSpec::draw(1, 1, n, 2, 2, 7)); }

DrScores synthetic_scores(const Dataset& ds) {
  DrScores s;
  for (UnitIndex i = 0; i < ds.size(); ++i) {
    s.units.push_back(i);
    const double v = ds.covariate(i, 2);
    s.gamma.push_back({ds.outcome(i), ds.outcome(i) + (v < 0 ? -1.0 : 1.0)});
    s.provenance.push_back(0);
  }
  return s;
}

}  // namespace

static void BM_BuildGram(benchmark::State& state) {
  const auto sim = sample(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_gram(sim.data, Bandwidth::automatic()));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BuildGram)->RangeMultiplier(2)->Range(250, 4000)->Complexity(benchmark::oNSquared);

static void BM_MmdUnbiased(benchmark::State& state) {
  const auto sim = sample(static_cast<std::size_t>(state.range(0)));
  const KernelGram g = build_gram(sim.data, Bandwidth::automatic());
  const UnitSubset all = UnitSubset::all(sim.data);
  for (auto _ : state) benchmark::DoNotOptimize(mmd_unbiased(g, sim.data, all));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MmdUnbiased)->RangeMultiplier(2)->Range(250, 4000)->Complexity(benchmark::oNSquared);

static void BM_BalanceSplit(benchmark::State& state) {
  const auto sim = sample(static_cast<std::size_t>(state.range(0)));
  const KernelGram g = build_gram(sim.data, Bandwidth::automatic());
  const UnitSubset all = UnitSubset::all(sim.data);
  const BalanceConfig c;
  for (auto _ : state) benchmark::DoNotOptimize(best_balance_split(sim.data, g, all, c));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BalanceSplit)->RangeMultiplier(2)->Range(250, 2000)->Complexity(benchmark::oNSquared);

static void BM_PermutationTest(benchmark::State& state) {
  const auto sim = sample(static_cast<std::size_t>(state.range(0)));
  const KernelGram g = build_gram(sim.data, Bandwidth::automatic());
  const UnitSubset all = UnitSubset::all(sim.data);
  for (auto _ : state) benchmark::DoNotOptimize(mmd_permutation_pvalue(g, sim.data, all, 199, 1));
}
BENCHMARK(BM_PermutationTest)->Arg(500)->Arg(2000);

static void BM_PolicyTree(benchmark::State& state) {
  const auto sim = sample(static_cast<std::size_t>(state.range(0)));
  const DrScores s = synthetic_scores(sim.data);
  const UnitSubset all = UnitSubset::all(sim.data);
  const int depth = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(solve_policy_tree(sim.data, all, s, depth));
}
BENCHMARK(BM_PolicyTree)->Args({2000, 2})->Args({8000, 2})->Args({500, 3})->Args({1000, 3});

static void BM_FitDeparadox(benchmark::State& state) {
  const auto sim = sample(static_cast<std::size_t>(state.range(0)));
  const DeparadoxConfig c;
  for (auto _ : state) benchmark::DoNotOptimize(fit_deparadox(sim.data, c));
}
BENCHMARK(BM_FitDeparadox)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
