// Micro-benchmarks for the per-iteration pieces of boosting on synthetic
// data. Sizes follow a letter-like shape (12000 rows, 16 features) with the
// class count as the benchmark argument.

#include <benchmark/benchmark.h>

#include <string>

#include "fmcb/boost.h"
#include "fmcb/error.h"
#include "fmcb/factorize.h"
#include "fmcb/mlr.h"
#include "fmcb/random.h"
#include "fmcb/tree.h"

namespace fmcb {
namespace {

constexpr std::size_t kRows = 12000;
constexpr std::size_t kFeatures = 16;

Dataset blobs(std::size_t n, int k, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix centres(static_cast<std::size_t>(k), d);
  for (double& x : centres.data()) x = 2.0 * rng.normal();
  Matrix x(n, d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    for (std::size_t j = 0; j < d; ++j) x(i, j) = centres(static_cast<std::size_t>(labels[i]), j) + rng.normal();
  }
  std::vector<std::string> names;
  for (int c = 0; c < k; ++c) names.push_back(std::to_string(c));
  return Dataset(std::move(x), std::move(labels), std::move(names));
}

Cursor random_cursor(std::size_t n, int k) {
  Rng rng(3);
  Cursor c(n, k);
  for (double& x : c.values.data()) x = rng.normal();
  return c;
}

void BM_Gradient(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const Dataset ds = blobs(kRows, k, kFeatures, 1);
  const Cursor cursor = random_cursor(kRows, k);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_gradient(ds.labels(), cursor));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(kRows));
}
BENCHMARK(BM_Gradient)->Arg(10)->Arg(26)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_Sals(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const Dataset ds = blobs(kRows, k, kFeatures, 1);
  const GradientMatrix g = gradient_matrix(ds.labels(), random_cursor(kRows, k));
  SalsConfig cfg;
  cfg.max_epochs = static_cast<int>(state.range(1));
  cfg.tolerance = 1e-300;
  for (auto _ : state) benchmark::DoNotOptimize(sals_rank_one(g.values, cfg));
}
BENCHMARK(BM_Sals)->Args({26, 1})->Args({26, 5})->Args({50, 5})->Unit(benchmark::kMillisecond);

void BM_Oracle(benchmark::State& state) {
  const Dataset ds = blobs(kRows, 26, kFeatures, 1);
  const GradientMatrix g = gradient_matrix(ds.labels(), random_cursor(kRows, 26));
  for (auto _ : state) {
    try {
      benchmark::DoNotOptimize(exact_rank_one_oracle(g.values, 1e-8, 2000));
    } catch (const NonConvergenceError&) {
    }
  }
}
BENCHMARK(BM_Oracle)->Unit(benchmark::kMillisecond);

void BM_BuildBins(benchmark::State& state) {
  const Dataset ds = blobs(kRows, 26, kFeatures, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_bins(ds.features(), 255));
}
BENCHMARK(BM_BuildBins)->Unit(benchmark::kMillisecond);

void BM_TreeFit(benchmark::State& state) {
  const Dataset ds = blobs(kRows, 26, kFeatures, 1);
  const BinMap bins = build_bins(ds.features(), 255);
  Rng rng(5);
  std::vector<double> targets(kRows);
  for (double& t : targets) t = rng.normal();
  TreeConfig cfg;
  cfg.max_depth = static_cast<int>(state.range(0));
  cfg.min_leaf_samples = 10;
  for (auto _ : state) benchmark::DoNotOptimize(fit_regression_tree(bins, targets, cfg));
}
BENCHMARK(BM_TreeFit)->Arg(4)->Arg(6)->Arg(10)->Unit(benchmark::kMillisecond);

// Whole boosting steps: one FMCB step fits one tree, one MLR step K - 1.
void BM_TrainStep(benchmark::State& state) {
  const auto algo = static_cast<Algorithm>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const Dataset ds = blobs(kRows, k, kFeatures, 1);
  BoostConfig cfg;
  cfg.algorithm = algo;
  cfg.iterations = 10;
  cfg.tree.max_depth = 6;
  cfg.sals.max_epochs = 2;
  for (auto _ : state) benchmark::DoNotOptimize(train(ds, cfg));
  state.SetItemsProcessed(state.iterations() * cfg.iterations);
  state.SetLabel(std::string(algorithm_name(algo)));
}
BENCHMARK(BM_TrainStep)
    ->Args({static_cast<int>(Algorithm::kFmcb), 10})
    ->Args({static_cast<int>(Algorithm::kFmcb), 26})
    ->Args({static_cast<int>(Algorithm::kMlr), 10})
    ->Args({static_cast<int>(Algorithm::kMlr), 26})
    ->Unit(benchmark::kMillisecond);

void BM_PredictRow(benchmark::State& state) {
  const auto algo = static_cast<Algorithm>(state.range(0));
  const Dataset ds = blobs(kRows, 26, kFeatures, 1);
  BoostConfig cfg;
  cfg.algorithm = algo;
  cfg.iterations = algo == Algorithm::kFmcb ? 500 : 20;
  cfg.sals.max_epochs = 2;
  const Model model = train(ds, cfg).model;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict_class_index(model, ds.features().row(i)));
    i = (i + 1) % kRows;
  }
  state.SetLabel(std::string(algorithm_name(algo)) + ", " + std::to_string(weak_model_count(model)) +
                 " trees");
}
BENCHMARK(BM_PredictRow)
    ->Arg(static_cast<int>(Algorithm::kFmcb))
    ->Arg(static_cast<int>(Algorithm::kMlr));

}  // namespace
}  // namespace fmcb

BENCHMARK_MAIN();
