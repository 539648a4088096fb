#ifndef FMCB_BOOST_H_
#define FMCB_BOOST_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fmcb/dataset.h"
#include "fmcb/factorize.h"
#include "fmcb/matrix.h"
#include "fmcb/tree.h"

namespace fmcb {

enum class Algorithm {
  kFmcb,  // one shared tree per step, weighted per class by a unit vector
  kMlr,   // K - 1 trees per step, one per gradient column
  kOvr,   // K independent binary logistic chains
};

std::string_view algorithm_name(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);

struct BoostConfig {
  Algorithm algorithm = Algorithm::kFmcb;
  double step = 0.1;
  int iterations = 100;
  TreeConfig tree;
  SalsConfig sals;
  // Start each SALS run from the previous step's class weights.
  bool sals_warm_start = true;
  std::uint64_t seed = 0;
  // Record factorization quality per step (FMCB only; costs a Gram matrix).
  bool diagnostics = false;
  // Stop when validation accuracy has not improved for this many
  // iterations and keep the best prefix. 0 disables.
  int early_stopping_patience = 0;
  // Stop as soon as validation accuracy reaches this value.
  std::optional<double> target_accuracy;
};

void validate(const BoostConfig& config);

// What every model needs to map rows to original labels.
struct ModelInfo {
  int num_classes = 0;
  double step = 0.0;
  std::vector<std::string> class_names;
  std::size_t num_features = 0;
  std::vector<std::string> feature_names;

  friend bool operator==(const ModelInfo&, const ModelInfo&) = default;
};

// One weak learner and its class weights (length K - 1, unit norm).
struct FmcbComponent {
  RegressionTree tree;
  std::vector<double> weights;

  friend bool operator==(const FmcbComponent&, const FmcbComponent&) = default;
};

// H_c(x) = step * sum_t weights_t[c] * tree_t(x), for c < K - 1.
struct FmcbModel {
  ModelInfo info;
  std::vector<FmcbComponent> components;

  friend bool operator==(const FmcbModel&, const FmcbModel&) = default;
};

// chains[c][t] is the t-th tree of output c. MLR has K - 1 outputs (class
// scores against the reference class); OvR has K binary chains.
struct BaselineModel {
  Algorithm algorithm = Algorithm::kMlr;
  ModelInfo info;
  std::vector<std::vector<RegressionTree>> chains;

  friend bool operator==(const BaselineModel&, const BaselineModel&) = default;
};

using Model = std::variant<FmcbModel, BaselineModel>;

Algorithm model_algorithm(const Model& model);
const ModelInfo& model_info(const Model& model);
std::size_t weak_model_count(const Model& model);
// Boosting steps represented in the model.
std::size_t boosting_steps(const Model& model);
// K - 1 for fmcb and mlr, K for ovr.
std::size_t score_width(const Model& model);

void predict_scores(const Model& model, std::span<const double> row, std::span<double> out);
std::vector<double> predict_scores(const Model& model, std::span<const double> row);
Matrix predict_scores_batch(const Model& model, const Matrix& rows);

// Argmax over K classes, ties to the lowest index. fmcb and mlr include the
// reference class with score 0.
int class_from_scores(Algorithm algorithm, std::span<const double> scores);
int predict_class_index(const Model& model, std::span<const double> row);
std::string predict_class(const Model& model, std::span<const double> row);

// K class probabilities: the MLR form for fmcb/mlr; normalized per-class
// sigmoids for ovr.
std::vector<double> predict_probabilities(const Model& model, std::span<const double> row);

double accuracy(const Model& model, const Dataset& ds);

struct IterationRecord {
  int iteration = 0;  // 1-based: the record after this many boosting steps
  double train_log_likelihood = 0.0;
  std::optional<double> validation_accuracy;
  double elapsed_ms = 0.0;
  std::size_t weak_models = 0;
  double gradient_norm = 0.0;  // Frobenius norm of the gradient fitted at this step
  std::optional<FactorizationQuality> quality;
};

enum class StopReason { kIterations, kConverged, kTargetReached, kEarlyStopping };

std::string_view stop_reason_name(StopReason reason);

struct TrainResult {
  Model model;
  std::vector<IterationRecord> log;
  StopReason stop = StopReason::kIterations;
  double train_seconds = 0.0;
  // Scores on the training rows maintained incrementally during training
  // (N x score_width).
  Matrix train_scores;
};

TrainResult train_fmcb(const Dataset& train, const BoostConfig& config,
                       const Dataset* validation = nullptr);
TrainResult train_mlr_boost(const Dataset& train, const BoostConfig& config,
                            const Dataset* validation = nullptr);
TrainResult train_ovr(const Dataset& train, const BoostConfig& config,
                      const Dataset* validation = nullptr);

// Dispatches on config.algorithm.
TrainResult train(const Dataset& train, const BoostConfig& config,
                  const Dataset* validation = nullptr);

}  // namespace fmcb

#endif  // FMCB_BOOST_H_
