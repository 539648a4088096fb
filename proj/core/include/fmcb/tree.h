#ifndef FMCB_TREE_H_
#define FMCB_TREE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "fmcb/matrix.h"

namespace fmcb {

// Candidate split thresholds per feature plus the binned training rows.
// A value x falls in bin k when thresholds[k-1] < x <= thresholds[k], so
// "bin <= k" and "x <= thresholds[k]" select the same rows.
class BinMap {
 public:
  static constexpr int kMaxSupportedBins = 256;

  BinMap() = default;
  BinMap(int max_bins, std::vector<std::vector<double>> thresholds, std::size_t rows,
         std::vector<std::uint8_t> bins);

  int max_bins() const { return max_bins_; }
  std::size_t num_rows() const { return rows_; }
  std::size_t num_features() const { return thresholds_.size(); }
  const std::vector<double>& thresholds(std::size_t feature) const { return thresholds_[feature]; }
  std::size_t num_bins(std::size_t feature) const { return thresholds_[feature].size() + 1; }
  std::uint8_t bin(std::size_t row, std::size_t feature) const {
    return bins_[row * thresholds_.size() + feature];
  }
  std::span<const std::uint8_t> row_bins(std::size_t row) const {
    return {bins_.data() + row * thresholds_.size(), thresholds_.size()};
  }

 private:
  int max_bins_ = 0;
  std::vector<std::vector<double>> thresholds_;
  std::size_t rows_ = 0;
  std::vector<std::uint8_t> bins_;  // row-major rows_ x num_features
};

// Features with at most max_bins distinct values get a threshold at every
// midpoint between consecutive distinct values; others get quantile
// thresholds (midpoints at roughly every N / max_bins sorted rows).
BinMap build_bins(const Matrix& features, int max_bins = 255);

enum class TreeStyle {
  kCart,  // axis-aligned, per-node split choice
};

struct TreeConfig {
  int max_depth = 6;
  int min_leaf_samples = 1;
  int max_bins = 255;
  double min_gain = 0.0;
  TreeStyle style = TreeStyle::kCart;
};

void validate(const TreeConfig& config);

// Leaf when feature < 0. Rows with x[feature] <= threshold go left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  std::uint32_t count = 0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class RegressionTree {
 public:
  RegressionTree() : RegressionTree(0, {TreeNode{}}) {}
  // Validates the node array: children in range, every node reachable once,
  // finite leaf values.
  RegressionTree(std::size_t num_features, std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t num_features() const { return num_features_; }
  std::size_t num_leaves() const;
  // Longest root-to-leaf path in edges; a single leaf has depth 0.
  int depth() const;

  double predict(std::span<const double> row) const;
  std::vector<double> predict_batch(const Matrix& rows) const;

  // Index of the leaf reached by a row; no dimension check.
  int leaf_index(std::span<const double> row) const {
    int k = 0;
    while (!nodes_[k].is_leaf()) {
      const TreeNode& node = nodes_[k];
      k = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return k;
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::size_t num_features_ = 0;
  std::vector<TreeNode> nodes_;
};

struct TreeFit {
  RegressionTree tree;
  // Leaf value reached by each training row.
  std::vector<double> fitted;
  // SSE reduction of the root split; 0 when the root is a leaf.
  double root_gain = 0.0;
};

// Greedy least-squares tree on binned rows. At each node the split maximizing
// sum(t - mean)^2 - [left SSE + right SSE] wins; ties keep the lowest
// feature, then the lowest threshold. Leaves hold the mean target.
TreeFit fit_regression_tree(const BinMap& bins, std::span<const double> targets,
                            const TreeConfig& config);

double predict_tree(const RegressionTree& tree, std::span<const double> row);
std::vector<double> predict_tree_batch(const RegressionTree& tree, const Matrix& rows);

}  // namespace fmcb

#endif  // FMCB_TREE_H_
