#include "cli.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "experiments.h"
#include "fmcb/boost.h"
#include "fmcb/dataset.h"
#include "fmcb/error.h"
#include "fmcb/factorize.h"
#include "fmcb/model_io.h"
#include "fmcb/parallel.h"
#include "fmcb/random.h"

namespace fmcb::tools {
namespace {

using json = nlohmann::json;

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  return f;
}

struct DataFlags {
  std::string path;
  std::string format = "csv";
  bool header = false;
  std::string label_column;
  std::string delimiter = ",";

  char delim() const {
    if (delimiter == "\\t" || delimiter == "tab") return '\t';
    if (delimiter.size() != 1) throw Error("delimiter must be a single character");
    return delimiter[0];
  }
};

void add_data_flags(CLI::App* sub, DataFlags& f, bool required, const std::string& what) {
  auto* opt = sub->add_option("--data", f.path, what);
  if (required) opt->required();
  sub->add_option("--format", f.format, "Input format")
      ->check(CLI::IsMember({"csv", "libsvm"}))
      ->capture_default_str();
  sub->add_flag("--header", f.header, "CSV input has a header row");
  sub->add_option("--label-column", f.label_column,
                  "CSV label column: name (with --header) or zero-based index; default last");
  sub->add_option("--delimiter", f.delimiter, "CSV delimiter (use \\t for tab)")
      ->capture_default_str();
}

Dataset load_dataset(const DataFlags& f, std::ostream& err) {
  if (f.format == "libsvm") return parse_libsvm_dataset(f.path);
  CsvOptions opts;
  opts.delimiter = f.delim();
  opts.has_header = f.header;
  if (!f.label_column.empty()) {
    int index = 0;
    const char* b = f.label_column.data();
    const char* e = b + f.label_column.size();
    const auto [p, ec] = std::from_chars(b, e, index);
    if (ec == std::errc() && p == e) {
      opts.label_column = index;
    } else {
      opts.label_column = f.label_column;
    }
  }
  ParsedDataset parsed = parse_csv_dataset(f.path, opts);
  if (parsed.rejected_rows > 0) {
    err << "warning: " << parsed.rejected_rows << " rows with non-numeric features rejected\n";
  }
  return std::move(parsed.dataset);
}

// Re-expresses `ds` under another label mapping (validation files may not
// contain every class).
Dataset remap_to(const Dataset& ds, const std::vector<std::string>& class_names) {
  std::vector<std::string> names(ds.num_rows());
  for (std::size_t i = 0; i < names.size(); ++i) {
    names[i] = ds.class_names()[static_cast<std::size_t>(ds.labels()[i])];
  }
  std::vector<int> labels = map_labels(names, class_names);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw Error("label '" + names[i] + "' does not occur in the training data");
  }
  return Dataset(ds.features(), std::move(labels), class_names, ds.feature_names());
}

struct TrainFlags {
  std::string algo = "fmcb";
  int iterations = 100;
  double step = 0.1;
  int depth = 6;
  int min_leaf = 1;
  int bins = 255;
  double sals_step = 0.01;
  int sals_epochs = 50;
  double sals_sample = 1.0;
  double sals_tol = 1e-6;
  bool no_warm_start = false;
  int patience = 0;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--algo", f.algo, "Algorithm")
      ->check(CLI::IsMember({"fmcb", "mlr", "ovr"}))
      ->capture_default_str();
  sub->add_option("--iterations", f.iterations, "Boosting steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--step", f.step, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--depth", f.depth, "Maximum tree depth")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--min-leaf", f.min_leaf, "Minimum rows per leaf")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--bins", f.bins, "Histogram bins per feature")
      ->check(CLI::Range(2, BinMap::kMaxSupportedBins))
      ->capture_default_str();
  sub->add_option("--sals-step", f.sals_step, "SALS relative step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--sals-epochs", f.sals_epochs, "SALS epochs per factorization")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--sals-sample", f.sals_sample, "SALS row sample fraction per epoch")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_option("--sals-tol", f.sals_tol, "SALS convergence tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_flag("--no-warm-start", f.no_warm_start, "Start every SALS run from a random direction");
  sub->add_option("--patience", f.patience, "Early-stopping patience on validation accuracy (0 = off)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

BoostConfig make_config(const TrainFlags& f, std::uint64_t seed) {
  BoostConfig c;
  c.algorithm = parse_algorithm(f.algo);
  c.iterations = f.iterations;
  c.step = f.step;
  c.tree.max_depth = f.depth;
  c.tree.min_leaf_samples = f.min_leaf;
  c.tree.max_bins = f.bins;
  c.sals.step = f.sals_step;
  c.sals.max_epochs = f.sals_epochs;
  c.sals.row_sample_fraction = f.sals_sample;
  c.sals.tolerance = f.sals_tol;
  c.sals_warm_start = !f.no_warm_start;
  c.seed = seed;
  c.early_stopping_patience = f.patience;
  return c;
}

struct Common {
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)")
      ->envname("FMCB_THREADS")
      ->check(CLI::NonNegativeNumber);
}

void write_log(const std::string& path, const std::vector<IterationRecord>& log, bool reproducible) {
  auto f = open_out(path);
  f << "iter,train_ll,valid_acc,elapsed_ms\n";
  for (const auto& r : log) {
    f << r.iteration << ',' << num(r.train_log_likelihood) << ','
      << (r.validation_accuracy ? num(*r.validation_accuracy) : "") << ','
      << (reproducible ? "0" : fixed(r.elapsed_ms, 3)) << '\n';
  }
}

void write_diag(const std::string& path, const std::vector<IterationRecord>& log) {
  auto f = open_out(path);
  f << "step,residual_ratio,energy_fraction,sigma_ratio,grad_fro_norm\n";
  for (const auto& r : log) {
    if (!r.quality) continue;
    f << r.iteration << ',' << num(r.quality->residual_ratio) << ','
      << num(r.quality->energy_fraction) << ',' << num(r.quality->sigma_ratio) << ','
      << num(r.gradient_norm) << '\n';
  }
}

// --- train -----------------------------------------------------------------

struct TrainCmd {
  Common common;
  DataFlags data;
  TrainFlags train;
  std::string valid_path;
  std::string model_out;
  std::string log_path;
  std::string diag_path;
  std::optional<double> target;
  bool reproducible = false;
};

int cmd_train(const TrainCmd& c, std::ostream& out, std::ostream& err) {
  const Dataset ds = load_dataset(c.data, err);
  BoostConfig config = make_config(c.train, c.common.seed);
  config.diagnostics = !c.diag_path.empty();
  config.target_accuracy = c.target;
  std::optional<Dataset> validation;
  if (!c.valid_path.empty()) {
    DataFlags vf = c.data;
    vf.path = c.valid_path;
    validation = remap_to(load_dataset(vf, err), ds.class_names());
  }
  if (config.diagnostics && config.algorithm != Algorithm::kFmcb) {
    err << "warning: --diag only applies to fmcb\n";
  }
  const TrainResult result = train(ds, config, validation ? &*validation : nullptr);

  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(dataset_fingerprint(ds)));
  json provenance{{"seed", c.common.seed},
                  {"config", config_to_json(config)},
                  {"dataset", {{"rows", ds.num_rows()},
                               {"features", ds.num_features()},
                               {"classes", ds.num_classes()},
                               {"fnv1a", hash}}},
                  {"stop", std::string(stop_reason_name(result.stop))}};
  if (!c.reproducible) provenance["train_seconds"] = result.train_seconds;
  save_model(c.model_out, ModelFile{result.model, provenance});
  if (!c.log_path.empty()) write_log(c.log_path, result.log, c.reproducible);
  if (!c.diag_path.empty()) write_diag(c.diag_path, result.log);

  out << "algorithm: " << algorithm_name(config.algorithm) << '\n'
      << "boosting steps: " << boosting_steps(result.model) << '\n'
      << "weak models: " << weak_model_count(result.model) << '\n'
      << "stop: " << stop_reason_name(result.stop) << '\n';
  if (!result.log.empty()) {
    out << "final train log-likelihood: " << num(result.log.back().train_log_likelihood) << '\n';
    if (result.log.back().validation_accuracy) {
      out << "final validation accuracy: " << fixed(*result.log.back().validation_accuracy, 4)
          << '\n';
    }
  }
  if (!c.reproducible) out << "train seconds: " << fixed(result.train_seconds, 3) << '\n';
  return 0;
}

// --- predict ---------------------------------------------------------------

struct PredictCmd {
  Common common;
  DataFlags data;
  std::string model_path;
  std::string out_path;
  bool probs = false;
};

int cmd_predict(const PredictCmd& c, std::ostream& out, std::ostream&) {
  const ModelFile file = load_model(c.model_path);
  const Model& model = file.model;
  const ModelInfo& info = model_info(model);
  Matrix rows;
  if (c.data.format == "libsvm") {
    rows = parse_libsvm_dataset(c.data.path, static_cast<int>(info.num_features)).features();
  } else {
    rows = parse_csv_matrix(c.data.path, c.data.delim(), c.data.header);
  }
  if (rows.cols() != info.num_features) {
    throw DimensionError("input has " + std::to_string(rows.cols()) + " features, model expects " +
                         std::to_string(info.num_features));
  }
  std::ofstream file_out;
  if (!c.out_path.empty()) file_out = open_out(c.out_path);
  std::ostream& o = c.out_path.empty() ? out : file_out;
  const Matrix scores = predict_scores_batch(model, rows);
  const Algorithm algorithm = model_algorithm(model);
  std::vector<double> p(static_cast<std::size_t>(info.num_classes));
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const int k = class_from_scores(algorithm, scores.row(i));
    o << info.class_names[static_cast<std::size_t>(k)];
    if (c.probs) {
      p = predict_probabilities(model, rows.row(i));
      for (double x : p) o << ',' << num(x);
    }
    o << '\n';
  }
  return 0;
}

// --- evaluate --------------------------------------------------------------

struct EvaluateCmd {
  Common common;
  DataFlags data;
  TrainFlags train;
  std::string model_path;
  int repeats = 5;
  bool stratify = false;
  double imbalance = 0.0;
  std::string csv_path;
};

int cmd_evaluate(const EvaluateCmd& c, std::ostream& out, std::ostream& err) {
  Dataset ds = load_dataset(c.data, err);
  if (!c.model_path.empty()) {
    const ModelFile file = load_model(c.model_path);
    const double acc = accuracy(file.model, ds);
    out << "accuracy: " << fixed(acc, 4) << " (" << ds.num_rows() << " rows)\n";
    return 0;
  }
  if (c.imbalance > 0.0) {
    ds = imbalance_subsample(ds, c.imbalance, derive_seed(c.common.seed, 0x1b));
    out << "imbalanced subsample: " << ds.num_rows() << " rows\n";
  }
  const BoostConfig config = make_config(c.train, c.common.seed);
  ProtocolOptions opts;
  opts.split.num_repeats = c.repeats;
  opts.split.seed = c.common.seed;
  opts.split.stratify = c.stratify;
  opts.use_validation = config.early_stopping_patience > 0;
  opts.on_result = [&](const RunResult& r) {
    out << "repeat " << r.repeat + 1 << '/' << c.repeats << ": accuracy " << num(r.test_accuracy)
        << " steps " << r.boosting_steps << " train_s " << fixed(r.train_seconds, 3) << '\n'
        << std::flush;
  };
  const auto results = run_protocol(ds, std::span(&config, 1), opts);
  std::vector<double> accs;
  for (const auto& r : results) accs.push_back(r.test_accuracy);
  const MeanStd m = mean_std(accs);
  out << "accuracy: " << format_mean_std(m) << " (" << algorithm_name(config.algorithm) << ", "
      << results.size() << " repeats, mean " << num(m.mean) << ")\n";
  if (!c.csv_path.empty()) {
    auto f = open_out(c.csv_path);
    f << "repeat,test_accuracy,boosting_steps,weak_models,train_seconds\n";
    for (const auto& r : results) {
      f << r.repeat + 1 << ',' << num(r.test_accuracy) << ',' << r.boosting_steps << ','
        << r.weak_models << ',' << fixed(r.train_seconds, 3) << '\n';
    }
  }
  return 0;
}

// --- bench -----------------------------------------------------------------

struct BenchCmd {
  Common common;
  DataFlags data;
  TrainFlags train;
  std::vector<std::string> algos{"fmcb", "mlr", "ovr"};
  std::map<std::string, double> steps;
  long long budget = 0;
  double target = 0.0;
  int repeats = 1;
  bool stratify = false;
  std::string csv_path;
};

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

int cmd_bench(const BenchCmd& c, bool budget_mode, std::ostream& out, std::ostream& err) {
  const Dataset ds = load_dataset(c.data, err);
  const int k = ds.num_classes();
  std::vector<BoostConfig> configs;
  for (const auto& name : c.algos) {
    TrainFlags f = c.train;
    f.algo = name;
    if (auto it = c.steps.find(name); it != c.steps.end()) f.step = it->second;
    BoostConfig config = make_config(f, c.common.seed);
    if (budget_mode) {
      config.iterations = budget_iterations(config.algorithm, k, c.budget);
    } else {
      config.target_accuracy = c.target;
    }
    configs.push_back(config);
  }
  ProtocolOptions opts;
  opts.split.num_repeats = c.repeats;
  opts.split.seed = c.common.seed;
  opts.split.stratify = c.stratify;
  opts.use_validation = !budget_mode;
  opts.measure_latency = !budget_mode;
  opts.on_result = [&](const RunResult& r) {
    err << "  " << algorithm_name(r.algorithm) << " repeat " << r.repeat + 1 << ": accuracy "
        << fixed(r.test_accuracy, 4) << ", " << r.boosting_steps << " steps, "
        << fixed(r.train_seconds, 1) << " s\n";
  };
  const auto results = run_protocol(ds, configs, opts);

  const std::vector<std::string> head = {"algorithm", "steps",   "weak_models", "accuracy",
                                         "size_mb",   "train_s", "decision_ms", "status"};
  std::vector<std::vector<std::string>> table;
  bool all_reached = true;
  for (const auto& config : configs) {
    std::vector<double> acc, steps, weak, size, secs, lat;
    bool reached = true;
    for (const auto& r : results) {
      if (r.algorithm != config.algorithm) continue;
      acc.push_back(r.test_accuracy);
      steps.push_back(static_cast<double>(r.boosting_steps));
      weak.push_back(static_cast<double>(r.weak_models));
      size.push_back(static_cast<double>(r.model_bytes) / 1e6);
      secs.push_back(r.train_seconds);
      if (r.decision_ms) lat.push_back(*r.decision_ms);
      if (!budget_mode && r.stop != StopReason::kTargetReached) reached = false;
    }
    all_reached = all_reached && reached;
    table.push_back({std::string(algorithm_name(config.algorithm)),
                     fixed(mean_std(steps).mean, 0),
                     fixed(mean_std(weak).mean, 0),
                     format_mean_std(mean_std(acc)),
                     fixed(mean_std(size).mean, 3),
                     fixed(mean_std(secs).mean, 2),
                     lat.empty() ? "-" : fixed(mean_std(lat).mean, 4),
                     budget_mode ? "budget" : (reached ? "reached" : "unreached")});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t j = 0; j < head.size(); ++j) {
    width[j] = head[j].size();
    for (const auto& row : table) width[j] = std::max(width[j], row[j].size());
  }
  if (budget_mode) {
    out << "tree budget " << c.budget;
  } else {
    out << "target validation accuracy " << fixed(c.target, 4) << ", step cap "
        << c.train.iterations;
  }
  out << ", " << c.repeats << " repeat(s)\n";
  for (std::size_t j = 0; j < head.size(); ++j) out << (j ? "  " : "") << pad(head[j], width[j]);
  out << '\n';
  for (const auto& row : table) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "  " : "") << pad(row[j], width[j]);
    out << '\n';
  }
  if (!c.csv_path.empty()) {
    auto f = open_out(c.csv_path);
    f << "algorithm,repeat,boosting_steps,weak_models,test_accuracy,model_bytes,train_seconds,"
         "decision_ms,stop\n";
    for (const auto& r : results) {
      f << algorithm_name(r.algorithm) << ',' << r.repeat + 1 << ',' << r.boosting_steps << ','
        << r.weak_models << ',' << num(r.test_accuracy) << ',' << r.model_bytes << ','
        << fixed(r.train_seconds, 3) << ',' << (r.decision_ms ? num(*r.decision_ms) : "") << ','
        << stop_reason_name(r.stop) << '\n';
    }
  }
  if (!all_reached) {
    err << "error: target accuracy not reached within " << c.train.iterations
        << " steps by every algorithm\n";
    return 1;
  }
  return 0;
}

// --- factorize -------------------------------------------------------------

struct FactorizeCmd {
  Common common;
  std::string matrix_path;
  std::string delimiter = ",";
  bool header = false;
  double sals_step = 0.01;
  int sals_epochs = 50;
  double sals_sample = 1.0;
  double sals_tol = 1e-6;
  bool exact = false;
  std::string out_path;
};

int cmd_factorize(const FactorizeCmd& c, std::ostream& out, std::ostream&) {
  DataFlags d;
  d.delimiter = c.delimiter;
  const Matrix a = parse_csv_matrix(c.matrix_path, d.delim(), c.header);
  SalsConfig cfg;
  cfg.step = c.sals_step;
  cfg.max_epochs = c.sals_epochs;
  cfg.row_sample_fraction = c.sals_sample;
  cfg.tolerance = c.sals_tol;
  cfg.seed = c.common.seed;
  const SalsResult sals = sals_rank_one(a, cfg);
  const FactorizationQuality q = factorization_quality(a, sals.factors);
  out << "matrix: " << a.rows() << " x " << a.cols() << '\n'
      << "sals epochs: " << sals.epochs << (sals.converged ? " (converged)" : "") << '\n'
      << "residual_ratio: " << num(q.residual_ratio) << '\n'
      << "energy_fraction: " << num(q.energy_fraction) << '\n'
      << "sigma_ratio: " << num(q.sigma_ratio) << '\n';
  json j{{"r", sals.factors.r},
         {"b", sals.factors.b},
         {"quality",
          {{"residual_ratio", q.residual_ratio},
           {"energy_fraction", q.energy_fraction},
           {"sigma_ratio", std::isinf(q.sigma_ratio) ? json("inf") : json(q.sigma_ratio)}}},
         {"sals", {{"epochs", sals.epochs}, {"converged", sals.converged}}}};
  if (c.exact) {
    const OracleResult o = exact_rank_one_oracle(a);
    const double cos = std::abs(dot(o.b, sals.factors.b));
    const FactorizationQuality oq = factorization_quality(a, RankOneFactors{o.r, o.b});
    out << "exact sigma1: " << num(o.sigma1) << '\n'
        << "exact sigma2: " << num(o.sigma2) << '\n'
        << "exact residual_ratio: " << num(oq.residual_ratio) << '\n'
        << "cos(b_sals, b_exact): " << num(cos) << '\n';
    j["exact"] = {{"r", o.r},           {"b", o.b},
                  {"sigma1", o.sigma1}, {"sigma2", o.sigma2},
                  {"cos", cos},         {"residual_ratio", oq.residual_ratio}};
  }
  if (!c.out_path.empty()) open_out(c.out_path) << j.dump(1) << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiclass gradient boosting with factorized class weights", "fmcb"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  TrainCmd tc;
  auto* train = app.add_subcommand("train", "Train a model and write it to a file");
  add_common(train, tc.common);
  add_data_flags(train, tc.data, true, "Training data file");
  add_train_flags(train, tc.train);
  train->add_option("--valid", tc.valid_path, "Validation data file (same format)");
  train->add_option("--target-accuracy", tc.target, "Stop at this validation accuracy")
      ->check(CLI::Range(0.0, 1.0));
  train->add_option("--model-out", tc.model_out, "Model output path")->required();
  train->add_option("--log", tc.log_path, "Per-iteration training log (CSV)");
  train->add_option("--diag", tc.diag_path, "Per-step factorization diagnostics (CSV, fmcb)");
  train->add_flag("--reproducible", tc.reproducible,
                  "Leave wall-clock times out of the model file and log");

  PredictCmd pc;
  auto* predict = app.add_subcommand("predict", "Predict labels for a feature file");
  add_common(predict, pc.common);
  add_data_flags(predict, pc.data, true, "Feature file (no label column)");
  predict->add_option("--model", pc.model_path, "Model file")->required();
  predict->add_option("--out", pc.out_path, "Write predictions here instead of stdout");
  predict->add_flag("--probs", pc.probs, "Append K class probabilities per row");

  EvaluateCmd ec;
  auto* evaluate = app.add_subcommand(
      "evaluate", "Score a model file, or run the Monte Carlo train/validation/test protocol");
  add_common(evaluate, ec.common);
  add_data_flags(evaluate, ec.data, true, "Labeled data file");
  add_train_flags(evaluate, ec.train);
  evaluate->add_option("--model", ec.model_path, "Model file to score on the whole data file");
  evaluate->add_option("--repeats", ec.repeats, "Monte Carlo repeats")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  evaluate->add_flag("--stratify", ec.stratify, "Stratify splits by class");
  evaluate->add_option("--imbalance", ec.imbalance,
                       "Subsample each class to a random fraction in [x, 1] first")
      ->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--csv", ec.csv_path, "Per-repeat results (CSV)");

  BenchCmd bc;
  auto* bench = app.add_subcommand("bench", "Compare algorithms at a tree budget or accuracy target");
  add_common(bench, bc.common);
  add_data_flags(bench, bc.data, true, "Labeled data file");
  add_train_flags(bench, bc.train);
  bench->add_option("--algos", bc.algos, "Algorithms to compare")
      ->delimiter(',')
      ->check(CLI::IsMember({"fmcb", "mlr", "ovr"}))
      ->capture_default_str();
  auto* budget_opt = bench->add_option("--budget-trees", bc.budget, "Total weak models per algorithm");
  auto* target_opt = bench->add_option("--target-accuracy", bc.target,
                                       "Validation accuracy to reach; --iterations caps the steps")
                         ->check(CLI::Range(0.0, 1.0));
  budget_opt->excludes(target_opt);
  double step_fmcb = 0, step_mlr = 0, step_ovr = 0;
  auto* sf = bench->add_option("--step-fmcb", step_fmcb, "Learning rate for fmcb")->check(CLI::PositiveNumber);
  auto* sm = bench->add_option("--step-mlr", step_mlr, "Learning rate for mlr")->check(CLI::PositiveNumber);
  auto* so = bench->add_option("--step-ovr", step_ovr, "Learning rate for ovr")->check(CLI::PositiveNumber);
  bench->add_option("--repeats", bc.repeats, "Monte Carlo repeats")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench->add_flag("--stratify", bc.stratify, "Stratify splits by class");
  bench->add_option("--csv", bc.csv_path, "Per-run results (CSV)");

  FactorizeCmd fc;
  auto* factorize = app.add_subcommand("factorize", "Rank-one factorization of a CSV matrix");
  add_common(factorize, fc.common);
  factorize->add_option("--matrix,--data", fc.matrix_path, "Numeric CSV matrix")->required();
  factorize->add_option("--delimiter", fc.delimiter, "CSV delimiter")->capture_default_str();
  factorize->add_flag("--header", fc.header, "Skip a header row");
  factorize->add_option("--sals-step", fc.sals_step, "SALS relative step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  factorize->add_option("--sals-epochs", fc.sals_epochs, "SALS epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  factorize->add_option("--sals-sample", fc.sals_sample, "SALS row sample fraction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  factorize->add_option("--sals-tol", fc.sals_tol, "SALS tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  factorize->add_flag("--exact", fc.exact, "Also run the exact power-iteration oracle");
  factorize->add_option("--out", fc.out_path, "Write factors and quality as JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands()) sub = s;
    out << (sub ? sub->help() : app.help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    CLI::App* sub = nullptr;
    for (auto* s : app.get_subcommands()) sub = s;
    err << "error: " << e.what() << "\n\n" << (sub ? sub->help() : app.help());
    return 2;
  }

  try {
    const auto apply_threads = [](const Common& c) { set_thread_count(c.threads); };
    if (train->parsed()) {
      apply_threads(tc.common);
      return cmd_train(tc, out, err);
    }
    if (predict->parsed()) {
      apply_threads(pc.common);
      return cmd_predict(pc, out, err);
    }
    if (evaluate->parsed()) {
      apply_threads(ec.common);
      return cmd_evaluate(ec, out, err);
    }
    if (bench->parsed()) {
      if (budget_opt->count() == 0 && target_opt->count() == 0) {
        err << "error: bench needs --budget-trees or --target-accuracy\n\n" << bench->help();
        return 2;
      }
      if (sf->count()) bc.steps["fmcb"] = step_fmcb;
      if (sm->count()) bc.steps["mlr"] = step_mlr;
      if (so->count()) bc.steps["ovr"] = step_ovr;
      apply_threads(bc.common);
      return cmd_bench(bc, budget_opt->count() > 0, out, err);
    }
    if (factorize->parsed()) {
      apply_threads(fc.common);
      return cmd_factorize(fc, out, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace fmcb::tools
