#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fmcb/error.h"
#include "fmcb/parallel.h"
#include "fmcb/tree.h"
#include "support/oracles.h"

namespace fmcb {
namespace {

Matrix column_matrix(const std::vector<double>& values) {
  return Matrix(values.size(), 1, values);
}

Matrix random_matrix(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(n, d);
  for (double& x : m.data()) x = u(rng);
  return m;
}

oracle::Dense to_dense(const Matrix& m) {
  oracle::Dense out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i].assign(m.row(i).begin(), m.row(i).end());
  return out;
}

double training_sse(const TreeFit& fit, const std::vector<double>& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += (t[i] - fit.fitted[i]) * (t[i] - fit.fitted[i]);
  return s;
}

TEST(BinsTest, ConstantFeatureHasNoThresholds) {
  const auto bins = build_bins(column_matrix({1, 1, 1}));
  EXPECT_TRUE(bins.thresholds(0).empty());
  EXPECT_EQ(bins.num_bins(0), 1u);
}

TEST(BinsTest, FewDistinctValuesGetMidpoints) {
  const auto bins = build_bins(column_matrix({4, 1, 3, 2, 3}));
  EXPECT_EQ(bins.thresholds(0), (std::vector<double>{1.5, 2.5, 3.5}));
  EXPECT_EQ(bins.bin(0, 0), 3);
  EXPECT_EQ(bins.bin(1, 0), 0);
  EXPECT_EQ(bins.bin(2, 0), 2);
}

TEST(BinsTest, QuantileThresholdsMatchFullSort) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(10000);
  for (double& x : v) x = u(rng);
  const auto bins = build_bins(column_matrix(v), 16);
  const auto& thr = bins.thresholds(0);
  ASSERT_EQ(thr.size(), 15u);
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> counts(16, 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto below = static_cast<std::size_t>(std::lower_bound(thr.begin(), thr.end(), v[i]) - thr.begin());
    EXPECT_EQ(bins.bin(i, 0), below);
    ++counts[below];
  }
  for (std::size_t k = 0; k < 15; ++k) {
    // Threshold k sits between the sorted values at ranks (k+1)*N/16 - 1 and
    // (k+1)*N/16.
    const std::size_t rank = (k + 1) * 625;
    EXPECT_GE(thr[k], sorted[rank - 1]);
    EXPECT_LT(thr[k], sorted[rank]);
  }
  for (auto c : counts) EXPECT_NEAR(static_cast<double>(c), 625.0, 60.0);
}

TEST(BinsTest, EveryValueInExactlyOneBin) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> small(0, 400);
  Matrix m(3000, 3);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    m(i, 0) = small(rng);
    m(i, 1) = small(rng) % 7;
    m(i, 2) = std::ldexp(1.0, small(rng) % 60 - 30);
  }
  for (int max_bins : {2, 17, 255, 256}) {
    const auto bins = build_bins(m, max_bins);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto& t = bins.thresholds(j);
      EXPECT_LE(t.size(), static_cast<std::size_t>(max_bins - 1));
      EXPECT_TRUE(std::adjacent_find(t.begin(), t.end(), std::greater_equal<>()) == t.end());
      for (std::size_t i = 0; i < m.rows(); ++i) {
        const std::size_t b = bins.bin(i, j);
        ASSERT_LT(b, bins.num_bins(j));
        if (b > 0) EXPECT_GT(m(i, j), t[b - 1]);
        if (b < t.size()) EXPECT_LE(m(i, j), t[b]);
      }
    }
  }
}

TEST(BinsTest, RejectsBadArguments) {
  EXPECT_THROW(build_bins(Matrix(0, 2)), Error);
  EXPECT_THROW(build_bins(column_matrix({1, 2}), 1), Error);
  EXPECT_THROW(build_bins(column_matrix({1, 2}), 257), Error);
}

TEST(TreeFitTest, ConstantTargetsGiveSingleLeaf) {
  std::mt19937_64 rng(3);
  const auto bins = build_bins(random_matrix(100, 4, rng));
  const std::vector<double> t(100, 0.3);
  const auto fit = fit_regression_tree(bins, t, TreeConfig{});
  ASSERT_EQ(fit.tree.nodes().size(), 1u);
  EXPECT_NEAR(fit.tree.nodes()[0].value, 0.3, 1e-15);
  EXPECT_EQ(fit.root_gain, 0.0);
  EXPECT_EQ(fit.tree.depth(), 0);
}

TEST(TreeFitTest, StepFunctionIsLearnedExactly) {
  const std::vector<double> x{0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> t;
  for (double v : x) t.push_back(v > 0.5 ? 1.0 : 0.0);
  TreeConfig cfg;
  cfg.max_depth = 1;
  const auto fit = fit_regression_tree(build_bins(column_matrix(x)), t, cfg);
  const auto& nodes = fit.tree.nodes();
  ASSERT_EQ(nodes.size(), 3u);
  EXPECT_EQ(nodes[0].feature, 0);
  EXPECT_DOUBLE_EQ(nodes[0].threshold, 0.5);
  EXPECT_DOUBLE_EQ(nodes[static_cast<std::size_t>(nodes[0].left)].value, 0.0);
  EXPECT_DOUBLE_EQ(nodes[static_cast<std::size_t>(nodes[0].right)].value, 1.0);
  EXPECT_EQ(training_sse(fit, t), 0.0);
  EXPECT_DOUBLE_EQ(predict_tree(fit.tree, std::vector<double>{0.9}), 1.0);
  EXPECT_DOUBLE_EQ(predict_tree(fit.tree, std::vector<double>{0.5}), 0.0);
}

TEST(TreeFitTest, MatchesExhaustiveGreedyOnTinyInstances) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng() % 3;
    const Matrix x = random_matrix(8, d, rng);
    std::vector<double> t(8);
    for (double& v : t) v = nd(rng);
    const int depth = 1 + static_cast<int>(rng() % 2);
    TreeConfig cfg;
    cfg.max_depth = depth;
    const auto fit = fit_regression_tree(build_bins(x), t, cfg);
    std::vector<std::size_t> all(8);
    std::iota(all.begin(), all.end(), 0);
    const double expected = oracle::greedy_tree_sse(to_dense(x), t, all, depth, 1);
    EXPECT_NEAR(training_sse(fit, t), expected, 1e-9 * (1.0 + expected)) << "trial " << trial;
  }
}

TEST(TreeFitTest, RootGainIsTheBestSingleSplit) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 9;
    const std::size_t d = 1 + rng() % 3;
    const Matrix x = random_matrix(n, d, rng);
    std::vector<double> t(n);
    for (double& v : t) v = nd(rng);
    TreeConfig cfg;
    cfg.max_depth = 1 + static_cast<int>(rng() % 2);
    cfg.min_leaf_samples = 1 + static_cast<int>(rng() % 3);
    const auto fit = fit_regression_tree(build_bins(x), t, cfg);
    const double best = oracle::best_root_gain(to_dense(x), t, cfg.min_leaf_samples);
    EXPECT_NEAR(fit.root_gain, best, 1e-9 * (1.0 + best)) << "trial " << trial;
  }
}

TEST(TreeFitTest, FittedValuesAreLeafMeans) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  const Matrix x = random_matrix(500, 5, rng);
  std::vector<double> t(500);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = nd(rng) + 3.0 * x(i, 1);
  TreeConfig cfg;
  cfg.max_depth = 4;
  cfg.min_leaf_samples = 7;
  const auto fit = fit_regression_tree(build_bins(x), t, cfg);
  std::vector<double> sum(fit.tree.nodes().size(), 0.0), count(fit.tree.nodes().size(), 0.0);
  for (std::size_t i = 0; i < 500; ++i) {
    const auto leaf = static_cast<std::size_t>(fit.tree.leaf_index(x.row(i)));
    sum[leaf] += t[i];
    count[leaf] += 1.0;
    EXPECT_EQ(predict_tree(fit.tree, x.row(i)), fit.fitted[i]);
  }
  for (std::size_t k = 0; k < fit.tree.nodes().size(); ++k) {
    const auto& node = fit.tree.nodes()[k];
    if (!node.is_leaf()) continue;
    EXPECT_EQ(static_cast<double>(node.count), count[k]);
    EXPECT_GE(node.count, 7u);
    EXPECT_NEAR(node.value, sum[k] / count[k], 1e-12);
  }
  EXPECT_LE(fit.tree.depth(), 4);
}

TEST(TreeFitTest, MseNeverExceedsVarianceAndShrinksWithDepth) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(300, 4, rng);
    std::vector<double> t(300);
    for (double& v : t) v = nd(rng);
    const auto bins = build_bins(x, 32);
    double previous = oracle::sse(t);
    for (int depth = 1; depth <= 8; ++depth) {
      TreeConfig cfg;
      cfg.max_depth = depth;
      cfg.min_leaf_samples = 3;
      const double s = training_sse(fit_regression_tree(bins, t, cfg), t);
      EXPECT_LE(s, previous * (1.0 + 1e-12)) << "depth " << depth;
      previous = s;
    }
  }
}

TEST(TreeFitTest, MinGainStopsSplitting) {
  std::mt19937_64 rng(8);
  const Matrix x = random_matrix(200, 2, rng);
  std::vector<double> t(200);
  for (std::size_t i = 0; i < 200; ++i) t[i] = x(i, 0) > 0.5 ? 1.0 : 0.0;
  TreeConfig cfg;
  cfg.min_gain = 1e9;
  EXPECT_EQ(fit_regression_tree(build_bins(x), t, cfg).tree.nodes().size(), 1u);
}

TEST(TreeFitTest, DeterministicAcrossThreadCounts) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  const Matrix x = random_matrix(40000, 6, rng);
  std::vector<double> t(40000);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = nd(rng) + std::sin(6.0 * x(i, 2));
  TreeConfig cfg;
  cfg.max_depth = 8;
  set_thread_count(1);
  const auto bins1 = build_bins(x);
  const auto a = fit_regression_tree(bins1, t, cfg);
  set_thread_count(4);
  const auto b = fit_regression_tree(build_bins(x), t, cfg);
  const auto c = fit_regression_tree(bins1, t, cfg);
  set_thread_count(0);
  EXPECT_EQ(a.tree, b.tree);
  EXPECT_EQ(a.tree, c.tree);
  EXPECT_EQ(a.fitted, b.fitted);
}

TEST(TreeFitTest, RejectsBadInput) {
  const auto bins = build_bins(column_matrix({1, 2, 3}));
  EXPECT_THROW(fit_regression_tree(bins, std::vector<double>{1, 2}, TreeConfig{}), DimensionError);
  EXPECT_THROW(fit_regression_tree(bins, std::vector<double>{1, std::nan(""), 2}, TreeConfig{}),
               Error);
  TreeConfig cfg;
  cfg.max_depth = 0;
  EXPECT_THROW(fit_regression_tree(bins, std::vector<double>{1, 2, 3}, cfg), Error);
  cfg = TreeConfig{};
  cfg.min_leaf_samples = 0;
  EXPECT_THROW(validate(cfg), Error);
  cfg = TreeConfig{};
  cfg.min_gain = -1.0;
  EXPECT_THROW(validate(cfg), Error);
}

TEST(PredictTest, SingleLeafIsConstant) {
  const RegressionTree tree(2, {TreeNode{-1, 0.0, -1, -1, 3.5, 4}});
  EXPECT_EQ(predict_tree(tree, std::vector<double>{-1e9, 7}), 3.5);
  EXPECT_EQ(predict_tree(tree, std::vector<double>{0, 0}), 3.5);
}

TEST(PredictTest, BatchEqualsRowwise) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> nd;
  const Matrix x = random_matrix(3000, 5, rng);
  std::vector<double> t(3000);
  for (double& v : t) v = nd(rng);
  TreeConfig cfg;
  cfg.max_depth = 7;
  const auto fit = fit_regression_tree(build_bins(x), t, cfg);
  const Matrix probe = random_matrix(1000, 5, rng);
  const auto batch = predict_tree_batch(fit.tree, probe);
  ASSERT_EQ(batch.size(), 1000u);
  for (std::size_t i = 0; i < 1000; ++i) EXPECT_EQ(batch[i], predict_tree(fit.tree, probe.row(i)));
  EXPECT_TRUE(predict_tree_batch(fit.tree, Matrix(0, 5)).empty());
  const auto one = predict_tree_batch(fit.tree, probe.select_rows(std::vector<std::size_t>{3}));
  EXPECT_EQ(one, (std::vector<double>{predict_tree(fit.tree, probe.row(3))}));
}

TEST(PredictTest, DimensionMismatch) {
  const RegressionTree tree(2, {TreeNode{-1, 0.0, -1, -1, 1.0, 1}});
  EXPECT_THROW(predict_tree(tree, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(predict_tree_batch(tree, Matrix(4, 3)), DimensionError);
}

TEST(RegressionTreeTest, RejectsMalformedNodeArrays) {
  EXPECT_THROW(RegressionTree(1, {}), Error);
  // Child pointing back at the root.
  EXPECT_THROW(RegressionTree(1, {TreeNode{0, 0.5, 0, 1, 0, 0}, TreeNode{}}), Error);
  // Feature out of range.
  EXPECT_THROW(RegressionTree(1, {TreeNode{3, 0.5, 1, 2, 0, 0}, TreeNode{}, TreeNode{}}), Error);
  // Orphan node.
  EXPECT_THROW(RegressionTree(1, {TreeNode{}, TreeNode{}}), Error);
  TreeNode inf_leaf;
  inf_leaf.value = std::numeric_limits<double>::infinity();
  EXPECT_THROW(RegressionTree(1, {inf_leaf}), Error);
}

}  // namespace
}  // namespace fmcb
