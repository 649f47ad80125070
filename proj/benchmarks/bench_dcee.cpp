#include <benchmark/benchmark.h>

#include "dcee/estimator.hpp"
#include "dcee/simulator.hpp"

namespace {

void BM_Simulate(benchmark::State& state) {
  const auto params = dcee::default_paper_params();
  const auto n = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(dcee::simulate_dataset(params, n, seed++));
  state.SetItemsProcessed(state.iterations() * state.range(0) * params.T);
}
BENCHMARK(BM_Simulate)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Estimate(benchmark::State& state) {
  const auto ds = dcee::simulate_dataset(dcee::default_paper_params(), static_cast<std::size_t>(state.range(0)), 7);
  dcee::EstimationConfig cfg;
  cfg.estimand = dcee::EstimandSpec::moderated_by("Z");
  cfg.crossfit_K = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(dcee::estimate_dcee(ds, cfg));
}
BENCHMARK(BM_Estimate)->Args({300, 0})->Args({300, 5})->Args({3000, 0})->Unit(benchmark::kMillisecond);

void BM_Oracle(benchmark::State& state) {
  const auto params = dcee::default_paper_params(10);
  const auto spec = dcee::EstimandSpec::moderated_by("Z");
  for (auto _ : state) benchmark::DoNotOptimize(dcee::compute_oracle_beta(params, spec, dcee::kMinOracleSize, 1, {false, 1}));
}
BENCHMARK(BM_Oracle)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
