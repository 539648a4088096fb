#include "fmcb/model_io.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fmcb/error.h"

namespace fmcb {
namespace {

using json = nlohmann::json;

constexpr std::string_view kFormatTag = "fmcb-model";

class Fnv1a {
 public:
  void add(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void add(std::string_view s) { add(s.data(), s.size()); }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string checksum(const json& model, const json& provenance) {
  Fnv1a h;
  h.add(model.dump());
  h.add("\n");
  h.add(provenance.dump());
  return hex64(h.value());
}

// Trees as parallel arrays, one entry per node.
json tree_to_json(const RegressionTree& tree) {
  json feature = json::array(), threshold = json::array(), left = json::array(),
       right = json::array(), value = json::array(), count = json::array();
  for (const TreeNode& n : tree.nodes()) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    count.push_back(n.count);
  }
  return json{{"feature", feature}, {"threshold", threshold}, {"left", left},
              {"right", right},     {"value", value},         {"count", count}};
}

RegressionTree tree_from_json(const json& j, std::size_t num_features) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const auto count = j.at("count").get<std::vector<std::uint32_t>>();
  const std::size_t n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n ||
      count.size() != n) {
    throw ParseError("tree arrays have different lengths");
  }
  std::vector<TreeNode> nodes(n);
  for (std::size_t k = 0; k < n; ++k) {
    nodes[k] = TreeNode{feature[k], threshold[k], left[k], right[k], value[k], count[k]};
  }
  return RegressionTree(num_features, std::move(nodes));
}

json info_to_json(const ModelInfo& info) {
  return json{{"num_classes", info.num_classes},   {"step", info.step},
              {"class_names", info.class_names},   {"num_features", info.num_features},
              {"feature_names", info.feature_names}};
}

ModelInfo info_from_json(const json& j) {
  ModelInfo info;
  info.num_classes = j.at("num_classes").get<int>();
  info.step = j.at("step").get<double>();
  info.class_names = j.at("class_names").get<std::vector<std::string>>();
  info.num_features = j.at("num_features").get<std::size_t>();
  info.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  if (info.num_classes < 2 || info.class_names.size() != static_cast<std::size_t>(info.num_classes)) {
    throw ParseError("class mapping does not match num_classes");
  }
  if (info.num_features < 1 ||
      (!info.feature_names.empty() && info.feature_names.size() != info.num_features)) {
    throw ParseError("feature metadata does not match num_features");
  }
  return info;
}

json model_to_json(const Model& model) {
  const Algorithm algorithm = model_algorithm(model);
  json j{{"algorithm", std::string(algorithm_name(algorithm))},
         {"info", info_to_json(model_info(model))}};
  if (const auto* f = std::get_if<FmcbModel>(&model)) {
    json comps = json::array();
    for (const auto& c : f->components) {
      comps.push_back(json{{"tree", tree_to_json(c.tree)}, {"b", c.weights}});
    }
    j["components"] = std::move(comps);
  } else {
    json chains = json::array();
    for (const auto& chain : std::get<BaselineModel>(model).chains) {
      json trees = json::array();
      for (const auto& t : chain) trees.push_back(tree_to_json(t));
      chains.push_back(std::move(trees));
    }
    j["chains"] = std::move(chains);
  }
  return j;
}

Model model_from_json(const json& j) {
  const Algorithm algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  ModelInfo info = info_from_json(j.at("info"));
  const std::size_t d = info.num_features;
  const auto k = static_cast<std::size_t>(info.num_classes);
  if (algorithm == Algorithm::kFmcb) {
    FmcbModel m{std::move(info), {}};
    for (const json& c : j.at("components")) {
      auto b = c.at("b").get<std::vector<double>>();
      if (b.size() != k - 1) throw ParseError("class weight vector has the wrong length");
      m.components.push_back({tree_from_json(c.at("tree"), d), std::move(b)});
    }
    return m;
  }
  BaselineModel m{algorithm, std::move(info), {}};
  const std::size_t width = algorithm == Algorithm::kOvr ? k : k - 1;
  const json& chains = j.at("chains");
  if (chains.size() != width) throw ParseError("wrong number of tree chains");
  for (const json& chain : chains) {
    std::vector<RegressionTree> trees;
    for (const json& t : chain) trees.push_back(tree_from_json(t, d));
    if (!m.chains.empty() && trees.size() != m.chains.front().size()) {
      throw ParseError("tree chains have different lengths");
    }
    m.chains.push_back(std::move(trees));
  }
  return m;
}

}  // namespace

std::string serialize_model(const ModelFile& file) {
  const json model = model_to_json(file.model);
  json out;
  out["format"] = kFormatTag;
  out["version"] = kModelFormatVersion;
  out["checksum"] = checksum(model, file.provenance);
  out["model"] = model;
  out["provenance"] = file.provenance;
  return out.dump() + "\n";
}

ModelFile deserialize_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed or truncated model file: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kFormatTag) {
      throw ParseError("not a model file (missing format tag)");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw ParseError("unsupported model version " + std::to_string(version) + " (expected " +
                       std::to_string(kModelFormatVersion) + ")");
    }
    ModelFile file;
    file.provenance = j.value("provenance", json::object());
    const json& model = j.at("model");
    if (checksum(model, file.provenance) != j.at("checksum").get<std::string>()) {
      throw ParseError("model checksum mismatch");
    }
    file.model = model_from_json(model);
    return file;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("invalid model file: ") + e.what());
  }
}

void save_model(const std::string& path, const ModelFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << serialize_model(file);
  if (!out.flush()) throw Error("failed writing '" + path + "'");
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

std::uint64_t dataset_fingerprint(const Dataset& ds) {
  Fnv1a h;
  const std::uint64_t shape[2] = {ds.num_rows(), ds.num_features()};
  h.add(shape, sizeof shape);
  const auto values = ds.features().data();
  h.add(values.data(), values.size() * sizeof(double));
  const auto labels = ds.labels();
  h.add(labels.data(), labels.size() * sizeof(int));
  for (const auto& name : ds.class_names()) {
    h.add(name);
    h.add("\0", 1);
  }
  return h.value();
}

nlohmann::json config_to_json(const BoostConfig& c) {
  json j{{"algorithm", std::string(algorithm_name(c.algorithm))},
         {"step", c.step},
         {"iterations", c.iterations},
         {"seed", c.seed},
         {"tree",
          {{"max_depth", c.tree.max_depth},
           {"min_leaf_samples", c.tree.min_leaf_samples},
           {"max_bins", c.tree.max_bins},
           {"min_gain", c.tree.min_gain}}},
         {"early_stopping_patience", c.early_stopping_patience}};
  if (c.algorithm == Algorithm::kFmcb) {
    j["sals"] = {{"step", c.sals.step},
                 {"max_epochs", c.sals.max_epochs},
                 {"tolerance", c.sals.tolerance},
                 {"row_sample_fraction", c.sals.row_sample_fraction},
                 {"warm_start", c.sals_warm_start}};
  }
  if (c.target_accuracy) j["target_accuracy"] = *c.target_accuracy;
  return j;
}

}  // namespace fmcb
