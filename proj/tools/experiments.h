#ifndef FMCB_TOOLS_EXPERIMENTS_H_
#define FMCB_TOOLS_EXPERIMENTS_H_

// Evaluation protocols shared by the CLI and the acceptance checks.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmcb/boost.h"
#include "fmcb/dataset.h"

namespace fmcb::tools {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(std::span<const double> values);
// "0.947 ± 0.002"
std::string format_mean_std(const MeanStd& m, int digits = 3);

// Weak models added per boosting step: 1 for fmcb, K - 1 for mlr, K for ovr.
int trees_per_step(Algorithm algorithm, int num_classes);
// Largest step count whose tree total fits in the budget. Throws when the
// budget cannot hold a single step.
int budget_iterations(Algorithm algorithm, int num_classes, long long budget_trees);

struct RunResult {
  Algorithm algorithm = Algorithm::kFmcb;
  int repeat = 0;
  double test_accuracy = 0.0;
  double train_seconds = 0.0;
  std::size_t boosting_steps = 0;
  std::size_t weak_models = 0;
  std::size_t model_bytes = 0;
  StopReason stop = StopReason::kIterations;
  std::optional<double> decision_ms;
};

struct ProtocolOptions {
  SplitSpec split;
  // Hand the validation part to the trainer (early stopping, target mode).
  bool use_validation = false;
  bool measure_latency = false;
  // Called after each finished run, e.g. to print progress.
  std::function<void(const RunResult&)> on_result;
};

// Monte Carlo protocol: for each repeat, train on the train part and score
// the test part, once per config.
std::vector<RunResult> run_protocol(const Dataset& ds, std::span<const BoostConfig> configs,
                                    const ProtocolOptions& options);

// Median wall time of single-row class predictions, in milliseconds, over at
// least min_samples calls after one warm-up pass.
double decision_latency_ms(const Model& model, const Matrix& rows,
                           std::size_t min_samples = 10000);

std::size_t serialized_size(const Model& model);

}  // namespace fmcb::tools

#endif  // FMCB_TOOLS_EXPERIMENTS_H_
