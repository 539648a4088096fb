#include "fmcb/boost.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "fmcb/error.h"
#include "fmcb/mlr.h"
#include "fmcb/parallel.h"
#include "fmcb/random.h"

namespace fmcb {
namespace {

using Clock = std::chrono::steady_clock;

double millis_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

ModelInfo make_info(const Dataset& ds, double step) {
  return ModelInfo{ds.num_classes(), step, ds.class_names(), ds.num_features(),
                   ds.feature_names()};
}

void check_validation(const Dataset& train, const Dataset* validation, const BoostConfig& config) {
  if (validation) {
    if (validation->num_features() != train.num_features()) {
      throw DimensionError("validation set has " + std::to_string(validation->num_features()) +
                           " features, training set has " + std::to_string(train.num_features()));
    }
    if (validation->class_names() != train.class_names()) {
      throw DimensionError("validation set uses a different label mapping");
    }
  } else if (config.early_stopping_patience > 0 || config.target_accuracy) {
    throw Error("early stopping and target accuracy need a validation set");
  }
}

double sigmoid_log_likelihood(double score, bool positive) {
  // log sigma(s) = -log1p(exp(-s)); log(1 - sigma(s)) = log sigma(-s).
  const double s = std::clamp(positive ? score : -score, -kScoreCap, kScoreCap);
  return s > 0 ? -std::log1p(std::exp(-s)) : s - std::log1p(std::exp(s));
}

double sigmoid(double score) {
  const double s = std::clamp(score, -kScoreClip, kScoreClip);
  return 1.0 / (1.0 + std::exp(-s));
}

double scores_accuracy(Algorithm algorithm, const Matrix& scores, std::span<const int> labels) {
  const double hits = ordered_sum(labels.size(), kRowChunk, [&](std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      if (class_from_scores(algorithm, scores.row(i)) == labels[i]) s += 1.0;
    }
    return s;
  });
  return hits / static_cast<double>(labels.size());
}

void check_finite_rows(const Matrix& m, int iteration) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) {
      throw Error("non-finite training scores at iteration " + std::to_string(iteration));
    }
  }
}

// Validation tracking shared by the three trainers.
class StopMonitor {
 public:
  explicit StopMonitor(const BoostConfig& config) : config_(config) {}

  std::optional<StopReason> update(int iteration, double accuracy) {
    if (accuracy > best_accuracy_) {
      best_accuracy_ = accuracy;
      best_iteration_ = iteration;
    }
    if (config_.target_accuracy && accuracy >= *config_.target_accuracy) {
      return StopReason::kTargetReached;
    }
    if (config_.early_stopping_patience > 0 &&
        iteration - best_iteration_ >= config_.early_stopping_patience) {
      return StopReason::kEarlyStopping;
    }
    return std::nullopt;
  }

  int best_iteration() const { return best_iteration_; }

 private:
  const BoostConfig& config_;
  double best_accuracy_ = -1.0;
  int best_iteration_ = 0;
};

// Common loop bookkeeping: timing, log records, deferred log-likelihood.
class TrainingLog {
 public:
  TrainingLog() : start_(Clock::now()) {}

  // The log-likelihood of the scores after step t is only known when the
  // gradient of step t + 1 is evaluated, so it is filled in one step late.
  void set_previous_likelihood(double ll) {
    if (!records_.empty()) records_.back().train_log_likelihood = ll;
    pending_ = false;
  }

  IterationRecord& add(int iteration, std::size_t weak_models, double gradient_norm) {
    IterationRecord r;
    r.iteration = iteration;
    r.weak_models = weak_models;
    r.gradient_norm = gradient_norm;
    records_.push_back(r);
    pending_ = true;
    return records_.back();
  }

  void stamp() { records_.back().elapsed_ms = millis_since(start_); }
  bool pending() const { return pending_; }
  double seconds() const { return millis_since(start_) / 1000.0; }
  std::vector<IterationRecord> take() { return std::move(records_); }

 private:
  Clock::time_point start_;
  std::vector<IterationRecord> records_;
  bool pending_ = false;
};

void truncate_model(Model& model, std::size_t steps) {
  if (auto* f = std::get_if<FmcbModel>(&model)) {
    f->components.resize(std::min(steps, f->components.size()));
  } else {
    for (auto& chain : std::get<BaselineModel>(model).chains) {
      chain.resize(std::min(steps, chain.size()));
    }
  }
}

void finish(TrainResult& result, TrainingLog& log, const StopMonitor& monitor,
            const Dataset& train) {
  if (result.stop == StopReason::kEarlyStopping) {
    truncate_model(result.model, static_cast<std::size_t>(monitor.best_iteration()));
    result.train_scores = predict_scores_batch(result.model, train.features());
  }
  result.log = log.take();
  result.train_seconds = log.seconds();
}

}  // namespace

std::string_view algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kFmcb:
      return "fmcb";
    case Algorithm::kMlr:
      return "mlr";
    case Algorithm::kOvr:
      return "ovr";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "fmcb") return Algorithm::kFmcb;
  if (name == "mlr") return Algorithm::kMlr;
  if (name == "ovr") return Algorithm::kOvr;
  throw Error("unknown algorithm '" + std::string(name) + "' (expected fmcb, mlr or ovr)");
}

std::string_view stop_reason_name(StopReason reason) {
  switch (reason) {
    case StopReason::kIterations:
      return "iterations";
    case StopReason::kConverged:
      return "converged";
    case StopReason::kTargetReached:
      return "target-reached";
    case StopReason::kEarlyStopping:
      return "early-stopping";
  }
  return "?";
}

void validate(const BoostConfig& config) {
  if (!(config.step > 0.0)) throw Error("step must be > 0");
  if (config.iterations < 1) throw Error("iterations must be >= 1");
  if (config.early_stopping_patience < 0) throw Error("patience must be >= 0");
  validate(config.tree);
}

Algorithm model_algorithm(const Model& model) {
  if (std::holds_alternative<FmcbModel>(model)) return Algorithm::kFmcb;
  return std::get<BaselineModel>(model).algorithm;
}

const ModelInfo& model_info(const Model& model) {
  return std::visit([](const auto& m) -> const ModelInfo& { return m.info; }, model);
}

std::size_t weak_model_count(const Model& model) {
  if (const auto* f = std::get_if<FmcbModel>(&model)) return f->components.size();
  std::size_t total = 0;
  for (const auto& chain : std::get<BaselineModel>(model).chains) total += chain.size();
  return total;
}

std::size_t boosting_steps(const Model& model) {
  if (const auto* f = std::get_if<FmcbModel>(&model)) return f->components.size();
  const auto& chains = std::get<BaselineModel>(model).chains;
  return chains.empty() ? 0 : chains.front().size();
}

std::size_t score_width(const Model& model) {
  const int k = model_info(model).num_classes;
  return model_algorithm(model) == Algorithm::kOvr ? static_cast<std::size_t>(k)
                                                   : static_cast<std::size_t>(k - 1);
}

void predict_scores(const Model& model, std::span<const double> row, std::span<double> out) {
  const ModelInfo& info = model_info(model);
  if (row.size() != info.num_features) {
    throw DimensionError("row has " + std::to_string(row.size()) + " features, model expects " +
                         std::to_string(info.num_features));
  }
  if (out.size() != score_width(model)) throw DimensionError("score buffer has the wrong width");
  std::fill(out.begin(), out.end(), 0.0);
  if (const auto* f = std::get_if<FmcbModel>(&model)) {
    for (const auto& comp : f->components) {
      const auto& nodes = comp.tree.nodes();
      const double h = info.step * nodes[static_cast<std::size_t>(comp.tree.leaf_index(row))].value;
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += h * comp.weights[c];
    }
    return;
  }
  const auto& chains = std::get<BaselineModel>(model).chains;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    double s = 0.0;
    for (const auto& tree : chains[c]) {
      s += info.step * tree.nodes()[static_cast<std::size_t>(tree.leaf_index(row))].value;
    }
    out[c] = s;
  }
}

std::vector<double> predict_scores(const Model& model, std::span<const double> row) {
  std::vector<double> out(score_width(model));
  predict_scores(model, row, out);
  return out;
}

Matrix predict_scores_batch(const Model& model, const Matrix& rows) {
  Matrix out(rows.rows(), score_width(model));
  parallel_chunks(rows.rows(), kRowChunk, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) predict_scores(model, rows.row(i), out.row(i));
  });
  return out;
}

int class_from_scores(Algorithm algorithm, std::span<const double> scores) {
  int best = 0;
  double best_score = scores.empty() ? 0.0 : scores[0];
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > best_score) {
      best_score = scores[c];
      best = static_cast<int>(c);
    }
  }
  if (algorithm != Algorithm::kOvr && 0.0 > best_score) best = static_cast<int>(scores.size());
  return best;
}

int predict_class_index(const Model& model, std::span<const double> row) {
  return class_from_scores(model_algorithm(model), predict_scores(model, row));
}

std::string predict_class(const Model& model, std::span<const double> row) {
  return model_info(model).class_names[static_cast<std::size_t>(predict_class_index(model, row))];
}

std::vector<double> predict_probabilities(const Model& model, std::span<const double> row) {
  const auto scores = predict_scores(model, row);
  if (model_algorithm(model) != Algorithm::kOvr) return class_probabilities(scores);
  std::vector<double> p(scores.size());
  double total = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) total += p[c] = sigmoid(scores[c]);
  for (double& x : p) x /= total;
  return p;
}

double accuracy(const Model& model, const Dataset& ds) {
  const ModelInfo& info = model_info(model);
  if (ds.num_rows() == 0) throw Error("accuracy of an empty dataset");
  std::vector<int> labels(ds.labels().begin(), ds.labels().end());
  if (ds.class_names() != info.class_names) {
    std::vector<std::string> names(ds.num_rows());
    for (std::size_t i = 0; i < ds.num_rows(); ++i) {
      names[i] = ds.class_names()[static_cast<std::size_t>(ds.labels()[i])];
    }
    labels = map_labels(names, info.class_names);
  }
  if (ds.num_features() != info.num_features) {
    throw DimensionError("dataset has " + std::to_string(ds.num_features()) +
                         " features, model expects " + std::to_string(info.num_features));
  }
  return scores_accuracy(model_algorithm(model), predict_scores_batch(model, ds.features()), labels);
}

TrainResult train_fmcb(const Dataset& train, const BoostConfig& config,
                       const Dataset* validation) {
  validate(config);
  check_validation(train, validation, config);
  TrainingLog log;
  const std::size_t n = train.num_rows();
  const int k = train.num_classes();
  const std::size_t width = static_cast<std::size_t>(k - 1);
  const double alpha = config.step;

  const BinMap bins = build_bins(train.features(), config.tree.max_bins);
  Cursor cursor(n, k);
  Matrix valid_scores(validation ? validation->num_rows() : 0, width);
  FmcbModel model{make_info(train, alpha), {}};
  StopMonitor monitor(config);
  TrainResult result;
  std::vector<double> warm;

  for (int t = 0; t < config.iterations; ++t) {
    GradientEvaluation eval = evaluate_gradient(train.labels(), cursor);
    log.set_previous_likelihood(eval.log_likelihood);
    const Matrix& g = eval.gradient.values;
    if (eval.gradient.frobenius_norm == 0.0) {
      result.stop = StopReason::kConverged;
      break;
    }
    SalsConfig sals = config.sals;
    sals.seed = derive_seed(config.seed, static_cast<std::uint64_t>(t));
    SalsResult factor;
    try {
      factor = warm.empty() ? sals_rank_one(g, sals) : sals_rank_one(g, sals, std::span(warm));
    } catch (const ZeroMatrixError&) {
      result.stop = StopReason::kConverged;
      break;
    }
    const std::vector<double>& b = factor.factors.b;
    TreeFit fit = fit_regression_tree(bins, factor.factors.r, config.tree);

    for (std::size_t i = 0; i < n; ++i) {
      const double h = alpha * fit.fitted[i];
      auto row = cursor.values.row(i);
      for (std::size_t c = 0; c < width; ++c) row[c] += h * b[c];
    }
    check_finite_rows(cursor.values, t + 1);

    IterationRecord& rec = log.add(t + 1, model.components.size() + 1, eval.gradient.frobenius_norm);
    if (config.diagnostics) rec.quality = factorization_quality(g, factor.factors);
    std::optional<StopReason> stop;
    if (validation) {
      const auto h = fit.tree.predict_batch(validation->features());
      for (std::size_t i = 0; i < h.size(); ++i) {
        const double a = alpha * h[i];
        auto row = valid_scores.row(i);
        for (std::size_t c = 0; c < width; ++c) row[c] += a * b[c];
      }
      rec.validation_accuracy = scores_accuracy(Algorithm::kFmcb, valid_scores, validation->labels());
      stop = monitor.update(t + 1, *rec.validation_accuracy);
    }
    if (config.sals_warm_start) warm = b;
    model.components.push_back({std::move(fit.tree), b});
    log.stamp();
    if (stop) {
      result.stop = *stop;
      break;
    }
  }
  if (log.pending()) log.set_previous_likelihood(log_likelihood(train.labels(), cursor));
  result.model = std::move(model);
  result.train_scores = std::move(cursor.values);
  finish(result, log, monitor, train);
  return result;
}

TrainResult train_mlr_boost(const Dataset& train, const BoostConfig& config,
                            const Dataset* validation) {
  validate(config);
  check_validation(train, validation, config);
  TrainingLog log;
  const std::size_t n = train.num_rows();
  const int k = train.num_classes();
  const std::size_t width = static_cast<std::size_t>(k - 1);
  const double alpha = config.step;

  const BinMap bins = build_bins(train.features(), config.tree.max_bins);
  Cursor cursor(n, k);
  Matrix valid_scores(validation ? validation->num_rows() : 0, width);
  BaselineModel model{Algorithm::kMlr, make_info(train, alpha), {}};
  model.chains.resize(width);
  StopMonitor monitor(config);
  TrainResult result;

  for (int t = 0; t < config.iterations; ++t) {
    GradientEvaluation eval = evaluate_gradient(train.labels(), cursor);
    log.set_previous_likelihood(eval.log_likelihood);
    if (eval.gradient.frobenius_norm == 0.0) {
      result.stop = StopReason::kConverged;
      break;
    }
    for (std::size_t c = 0; c < width; ++c) {
      const std::vector<double> targets = eval.gradient.values.column(c);
      TreeFit fit = fit_regression_tree(bins, targets, config.tree);
      for (std::size_t i = 0; i < n; ++i) cursor.values(i, c) += alpha * fit.fitted[i];
      if (validation) {
        const auto h = fit.tree.predict_batch(validation->features());
        for (std::size_t i = 0; i < h.size(); ++i) valid_scores(i, c) += alpha * h[i];
      }
      model.chains[c].push_back(std::move(fit.tree));
    }
    check_finite_rows(cursor.values, t + 1);
    IterationRecord& rec = log.add(t + 1, (t + 1) * width, eval.gradient.frobenius_norm);
    std::optional<StopReason> stop;
    if (validation) {
      rec.validation_accuracy = scores_accuracy(Algorithm::kMlr, valid_scores, validation->labels());
      stop = monitor.update(t + 1, *rec.validation_accuracy);
    }
    log.stamp();
    if (stop) {
      result.stop = *stop;
      break;
    }
  }
  if (log.pending()) log.set_previous_likelihood(log_likelihood(train.labels(), cursor));
  result.model = std::move(model);
  result.train_scores = std::move(cursor.values);
  finish(result, log, monitor, train);
  return result;
}

TrainResult train_ovr(const Dataset& train, const BoostConfig& config, const Dataset* validation) {
  validate(config);
  check_validation(train, validation, config);
  TrainingLog log;
  const std::size_t n = train.num_rows();
  const int k = train.num_classes();
  const std::size_t width = static_cast<std::size_t>(k);
  const double alpha = config.step;
  const auto counts = train.class_counts();
  for (std::size_t c = 0; c < width; ++c) {
    if (counts[c] == 0) {
      throw Error("class '" + train.class_names()[c] + "' is absent from the training data");
    }
  }

  const BinMap bins = build_bins(train.features(), config.tree.max_bins);
  Matrix scores(n, width);
  Matrix valid_scores(validation ? validation->num_rows() : 0, width);
  BaselineModel model{Algorithm::kOvr, make_info(train, alpha), {}};
  model.chains.resize(width);
  StopMonitor monitor(config);
  TrainResult result;
  const auto labels = train.labels();

  // Sum over chains of the binary log-likelihoods.
  auto total_likelihood = [&] {
    return ordered_sum(n, kRowChunk, [&](std::size_t b, std::size_t e) {
      double s = 0.0;
      for (std::size_t i = b; i < e; ++i) {
        for (std::size_t c = 0; c < width; ++c) {
          s += sigmoid_log_likelihood(scores(i, c), labels[i] == static_cast<int>(c));
        }
      }
      return s;
    });
  };

  std::vector<double> targets(n);
  for (int t = 0; t < config.iterations; ++t) {
    log.set_previous_likelihood(total_likelihood());
    double grad_sq = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double y = labels[i] == static_cast<int>(c) ? 1.0 : 0.0;
        targets[i] = y - sigmoid(scores(i, c));
        grad_sq += targets[i] * targets[i];
      }
      TreeFit fit = fit_regression_tree(bins, targets, config.tree);
      for (std::size_t i = 0; i < n; ++i) scores(i, c) += alpha * fit.fitted[i];
      if (validation) {
        const auto h = fit.tree.predict_batch(validation->features());
        for (std::size_t i = 0; i < h.size(); ++i) valid_scores(i, c) += alpha * h[i];
      }
      model.chains[c].push_back(std::move(fit.tree));
    }
    check_finite_rows(scores, t + 1);
    IterationRecord& rec = log.add(t + 1, (t + 1) * width, std::sqrt(grad_sq));
    std::optional<StopReason> stop;
    if (validation) {
      rec.validation_accuracy = scores_accuracy(Algorithm::kOvr, valid_scores, validation->labels());
      stop = monitor.update(t + 1, *rec.validation_accuracy);
    }
    log.stamp();
    if (stop) {
      result.stop = *stop;
      break;
    }
  }
  if (log.pending()) log.set_previous_likelihood(total_likelihood());
  result.model = std::move(model);
  result.train_scores = std::move(scores);
  finish(result, log, monitor, train);
  return result;
}

TrainResult train(const Dataset& train_set, const BoostConfig& config, const Dataset* validation) {
  switch (config.algorithm) {
    case Algorithm::kFmcb:
      return train_fmcb(train_set, config, validation);
    case Algorithm::kMlr:
      return train_mlr_boost(train_set, config, validation);
    case Algorithm::kOvr:
      return train_ovr(train_set, config, validation);
  }
  throw Error("unknown algorithm");
}

}  // namespace fmcb
