#include <gtest/gtest.h>

#include <map>
#include <random>
#include <string>

#include "fmcb/boost.h"
#include "fmcb/error.h"
#include "fmcb/model_io.h"
#include "support/oracles.h"

namespace fmcb {
namespace {

Dataset noisy_classes(std::size_t n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Matrix x(n, 3);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = labels[i] * (j + 1.0) / 3.0 + nd(rng) / 7.0;
  }
  std::vector<std::string> names;
  for (int c = 0; c < k; ++c) names.push_back(std::string(1, static_cast<char>('A' + c)));
  return Dataset(std::move(x), std::move(labels), std::move(names), {"u", "v", "w"});
}

ModelFile trained(Algorithm algo, std::uint64_t seed = 1) {
  BoostConfig cfg;
  cfg.algorithm = algo;
  cfg.iterations = 12;
  cfg.step = 0.37;
  cfg.tree.max_depth = 4;
  cfg.seed = seed;
  const Dataset ds = noisy_classes(400, 4, seed);
  ModelFile f{train(ds, cfg).model};
  f.provenance["seed"] = seed;
  f.provenance["config"] = config_to_json(cfg);
  return f;
}

TEST(ModelIoTest, RoundTripIsExact) {
  for (Algorithm algo : {Algorithm::kFmcb, Algorithm::kMlr, Algorithm::kOvr}) {
    const ModelFile f = trained(algo);
    const std::string text = serialize_model(f);
    const ModelFile back = deserialize_model(text);
    EXPECT_TRUE(back.model == f.model) << algorithm_name(algo);
    EXPECT_EQ(back.provenance, f.provenance);
    EXPECT_EQ(serialize_model(back), text);
  }
}

TEST(ModelIoTest, ReloadedModelPredictsIdentically) {
  const Dataset probe = noisy_classes(300, 4, 99);
  for (Algorithm algo : {Algorithm::kFmcb, Algorithm::kMlr, Algorithm::kOvr}) {
    const ModelFile f = trained(algo);
    oracle::TempDir dir;
    const std::string path = dir.file("m.json");
    save_model(path, f);
    const ModelFile back = load_model(path);
    EXPECT_EQ(predict_scores_batch(f.model, probe.features()),
              predict_scores_batch(back.model, probe.features()));
    for (std::size_t i = 0; i < probe.num_rows(); ++i) {
      EXPECT_EQ(predict_class(f.model, probe.features().row(i)),
                predict_class(back.model, probe.features().row(i)));
    }
  }
}

TEST(ModelIoTest, SerializationIsDeterministic) {
  EXPECT_EQ(serialize_model(trained(Algorithm::kFmcb, 5)), serialize_model(trained(Algorithm::kFmcb, 5)));
}

TEST(ModelIoTest, RejectsTruncatedText) {
  const std::string text = serialize_model(trained(Algorithm::kMlr));
  for (std::size_t cut : {std::size_t{0}, std::size_t{1}, text.size() / 2, text.size() - 2}) {
    EXPECT_THROW(deserialize_model(std::string_view(text).substr(0, cut)), ParseError) << cut;
  }
}

TEST(ModelIoTest, RejectsOtherVersions) {
  auto j = nlohmann::json::parse(serialize_model(trained(Algorithm::kFmcb)));
  j["version"] = 2;
  try {
    deserialize_model(j.dump());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos) << e.what();
  }
  j.erase("format");
  EXPECT_THROW(deserialize_model(j.dump()), ParseError);
  EXPECT_THROW(deserialize_model("[1, 2, 3]"), ParseError);
}

TEST(ModelIoTest, DetectsTampering) {
  const std::string text = serialize_model(trained(Algorithm::kOvr));
  auto j = nlohmann::json::parse(text);
  auto& value = j["model"]["chains"][0][0]["value"][0];
  value = value.get<double>() + 1.0;
  try {
    deserialize_model(j.dump(1));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
  auto p = nlohmann::json::parse(text);
  p["provenance"]["seed"] = 12345;
  EXPECT_THROW(deserialize_model(p.dump(1)), ParseError);
}

TEST(ModelIoTest, MissingFile) {
  EXPECT_THROW(load_model("/nonexistent/dir/model.json"), Error);
}

// Per boosting step FMCB stores one tree plus K - 1 weights, MLR K - 1 trees.
TEST(ModelIoTest, FmcbFileIsSmallPerStep) {
  const Dataset ds = noisy_classes(2600, 26, 4);
  BoostConfig cfg;
  cfg.iterations = 15;
  cfg.step = 0.5;
  cfg.tree.max_depth = 5;
  cfg.seed = 4;
  std::map<Algorithm, double> bytes;
  for (Algorithm algo : {Algorithm::kFmcb, Algorithm::kMlr}) {
    cfg.algorithm = algo;
    const TrainResult r = train(ds, cfg);
    ASSERT_EQ(boosting_steps(r.model), 15u);
    bytes[algo] = static_cast<double>(serialize_model(ModelFile{r.model}).size());
  }
  EXPECT_LE(bytes[Algorithm::kFmcb], 0.15 * bytes[Algorithm::kMlr])
      << bytes[Algorithm::kFmcb] << " vs " << bytes[Algorithm::kMlr];
}

TEST(FingerprintTest, SensitiveToEveryPart) {
  const Dataset a = noisy_classes(50, 3, 1);
  const auto base = dataset_fingerprint(a);
  EXPECT_EQ(base, dataset_fingerprint(noisy_classes(50, 3, 1)));
  Matrix x = a.features();
  x(7, 2) = std::nextafter(x(7, 2), 1e9);
  EXPECT_NE(base, dataset_fingerprint(Dataset(x, {a.labels().begin(), a.labels().end()}, a.class_names())));
  std::vector<int> labels(a.labels().begin(), a.labels().end());
  std::swap(labels[0], labels[1]);
  EXPECT_NE(base, dataset_fingerprint(Dataset(a.features(), labels, a.class_names())));
  EXPECT_NE(base, dataset_fingerprint(Dataset(a.features(), {a.labels().begin(), a.labels().end()},
                                              {"A", "B", "Z"})));
}

}  // namespace
}  // namespace fmcb
