#include "experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "fmcb/error.h"
#include "fmcb/model_io.h"

namespace fmcb::tools {

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

std::string format_mean_std(const MeanStd& m, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", digits, m.mean, digits, m.std);
  return buf;
}

int trees_per_step(Algorithm algorithm, int num_classes) {
  switch (algorithm) {
    case Algorithm::kFmcb:
      return 1;
    case Algorithm::kMlr:
      return num_classes - 1;
    case Algorithm::kOvr:
      return num_classes;
  }
  return 1;
}

int budget_iterations(Algorithm algorithm, int num_classes, long long budget_trees) {
  if (budget_trees <= 0) throw Error("tree budget must be positive");
  const long long per = trees_per_step(algorithm, num_classes);
  const long long steps = budget_trees / per;
  if (steps < 1) {
    throw Error("tree budget " + std::to_string(budget_trees) + " is below one " +
                std::string(algorithm_name(algorithm)) + " step (" + std::to_string(per) +
                " trees)");
  }
  return static_cast<int>(std::min<long long>(steps, 1'000'000'000));
}

std::size_t serialized_size(const Model& model) { return serialize_model({model, {}}).size(); }

double decision_latency_ms(const Model& model, const Matrix& rows, std::size_t min_samples) {
  if (rows.rows() == 0) throw Error("latency needs at least one row");
  using Clock = std::chrono::steady_clock;
  volatile int sink = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(rows.rows(), 1000); ++i) {
    sink = sink + predict_class_index(model, rows.row(i));
  }
  const std::size_t samples = std::max(min_samples, rows.rows());
  std::vector<double> times(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto row = rows.row(s % rows.rows());
    const auto t0 = Clock::now();
    sink = sink + predict_class_index(model, row);
    times[s] = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }
  auto mid = times.begin() + static_cast<std::ptrdiff_t>(samples / 2);
  std::nth_element(times.begin(), mid, times.end());
  return *mid;
}

std::vector<RunResult> run_protocol(const Dataset& ds, std::span<const BoostConfig> configs,
                                    const ProtocolOptions& options) {
  const auto splits = monte_carlo_split_indices(ds.labels(), ds.num_classes(), options.split);
  std::vector<RunResult> results;
  for (std::size_t r = 0; r < splits.size(); ++r) {
    const Dataset train_set = ds.subset(splits[r].train);
    const Dataset validation = ds.subset(splits[r].validation);
    const Dataset test = ds.subset(splits[r].test);
    for (const BoostConfig& config : configs) {
      const TrainResult trained =
          train(train_set, config, options.use_validation ? &validation : nullptr);
      RunResult out;
      out.algorithm = config.algorithm;
      out.repeat = static_cast<int>(r);
      out.test_accuracy = accuracy(trained.model, test);
      out.train_seconds = trained.train_seconds;
      out.boosting_steps = boosting_steps(trained.model);
      out.weak_models = weak_model_count(trained.model);
      out.model_bytes = serialized_size(trained.model);
      out.stop = trained.stop;
      if (options.measure_latency) out.decision_ms = decision_latency_ms(trained.model, test.features());
      if (options.on_result) options.on_result(out);
      results.push_back(out);
    }
  }
  return results;
}

}  // namespace fmcb::tools
