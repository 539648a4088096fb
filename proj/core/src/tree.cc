#include "fmcb/tree.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "fmcb/error.h"
#include "fmcb/parallel.h"

namespace fmcb {
namespace {

constexpr std::size_t kHistChunk = 8192;

double midpoint(double lo, double hi) {
  const double m = lo + (hi - lo) / 2.0;
  return m < hi ? m : lo;
}

std::vector<double> feature_thresholds(std::vector<double> values, int max_bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> distinct;
  std::vector<std::size_t> upto;  // rows with value <= distinct[k]
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (distinct.empty() || values[i] != distinct.back()) {
      distinct.push_back(values[i]);
      upto.push_back(0);
    }
    upto.back() = i + 1;
  }
  std::vector<double> out;
  if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
    for (std::size_t k = 0; k + 1 < distinct.size(); ++k) {
      out.push_back(midpoint(distinct[k], distinct[k + 1]));
    }
    return out;
  }
  const double n = static_cast<double>(values.size());
  int next = 1;
  for (std::size_t k = 0; k + 1 < distinct.size() && next < max_bins; ++k) {
    const double cumulative = static_cast<double>(upto[k]);
    if (cumulative >= next * n / max_bins) {
      out.push_back(midpoint(distinct[k], distinct[k + 1]));
      while (next < max_bins && cumulative >= next * n / max_bins) ++next;
    }
  }
  return out;
}

struct Bin {
  double sum = 0.0;
  double count = 0.0;
};

// Flat per-node histogram: feature j occupies [offset[j], offset[j + 1]).
using Histogram = std::vector<Bin>;

struct Layout {
  std::vector<std::size_t> offset;
  std::size_t total = 0;
};

void accumulate(const BinMap& bins, const Layout& layout, std::span<const double> targets,
                std::span<const std::uint32_t> rows, Histogram& hist) {
  const std::size_t d = bins.num_features();
  for (std::uint32_t r : rows) {
    const double t = targets[r];
    auto rb = bins.row_bins(r);
    for (std::size_t j = 0; j < d; ++j) {
      Bin& b = hist[layout.offset[j] + rb[j]];
      b.sum += t;
      b.count += 1.0;
    }
  }
}

Histogram build_histogram(const BinMap& bins, const Layout& layout,
                          std::span<const double> targets, std::span<const std::uint32_t> rows) {
  Histogram hist(layout.total);
  if (rows.size() <= kHistChunk) {
    accumulate(bins, layout, targets, rows, hist);
    return hist;
  }
  std::vector<Histogram> parts(chunk_count(rows.size(), kHistChunk));
  parallel_chunks(rows.size(), kHistChunk, [&](std::size_t c, std::size_t b, std::size_t e) {
    parts[c].assign(layout.total, Bin{});
    accumulate(bins, layout, targets, rows.subspan(b, e - b), parts[c]);
  });
  for (const auto& part : parts) {
    for (std::size_t k = 0; k < layout.total; ++k) {
      hist[k].sum += part[k].sum;
      hist[k].count += part[k].count;
    }
  }
  return hist;
}

struct Split {
  int feature = -1;
  int bin = -1;
  double gain = 0.0;
};

Split best_split(const BinMap& bins, const Layout& layout, const Histogram& hist, double node_sum,
                 double node_count, double min_leaf) {
  Split best;
  const double parent = node_sum * node_sum / node_count;
  for (std::size_t j = 0; j < bins.num_features(); ++j) {
    const std::size_t nb = bins.num_bins(j);
    double left_sum = 0.0;
    double left_count = 0.0;
    for (std::size_t b = 0; b + 1 < nb; ++b) {
      const Bin& h = hist[layout.offset[j] + b];
      left_sum += h.sum;
      left_count += h.count;
      const double right_count = node_count - left_count;
      if (left_count < min_leaf) continue;
      if (right_count < min_leaf) break;
      const double right_sum = node_sum - left_sum;
      const double gain =
          left_sum * left_sum / left_count + right_sum * right_sum / right_count - parent;
      if (gain > best.gain) best = {static_cast<int>(j), static_cast<int>(b), gain};
    }
  }
  return best;
}

struct Pending {
  int node;
  std::size_t begin;
  std::size_t end;
  int depth;
  Histogram hist;  // may be empty: built on demand
};

}  // namespace

BinMap::BinMap(int max_bins, std::vector<std::vector<double>> thresholds, std::size_t rows,
               std::vector<std::uint8_t> bins)
    : max_bins_(max_bins), thresholds_(std::move(thresholds)), rows_(rows), bins_(std::move(bins)) {
  if (bins_.size() != rows_ * thresholds_.size()) throw DimensionError("bin cache has wrong size");
}

BinMap build_bins(const Matrix& features, int max_bins) {
  if (max_bins < 2 || max_bins > BinMap::kMaxSupportedBins) {
    throw Error("max_bins must be in [2, " + std::to_string(BinMap::kMaxSupportedBins) + "]");
  }
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (n == 0) throw Error("cannot bin an empty feature matrix");
  std::vector<std::vector<double>> thresholds(d);
  std::vector<std::uint8_t> bins(n * d);
  parallel_chunks(d, 1, [&](std::size_t, std::size_t j, std::size_t) {
    thresholds[j] = feature_thresholds(features.column(j), max_bins);
    const auto& t = thresholds[j];
    for (std::size_t i = 0; i < n; ++i) {
      const auto pos = std::lower_bound(t.begin(), t.end(), features(i, j)) - t.begin();
      bins[i * d + j] = static_cast<std::uint8_t>(pos);
    }
  });
  return BinMap(max_bins, std::move(thresholds), n, std::move(bins));
}

void validate(const TreeConfig& config) {
  if (config.max_depth < 1) throw Error("max_depth must be >= 1");
  if (config.min_leaf_samples < 1) throw Error("min_leaf_samples must be >= 1");
  if (config.max_bins < 2 || config.max_bins > BinMap::kMaxSupportedBins) {
    throw Error("max_bins must be in [2, 256]");
  }
  if (!(config.min_gain >= 0.0)) throw Error("min_gain must be >= 0");
}

RegressionTree::RegressionTree(std::size_t num_features, std::vector<TreeNode> nodes)
    : num_features_(num_features), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw Error("tree has no nodes");
  std::vector<int> seen(nodes_.size(), 0);
  std::vector<int> stack{0};
  const int size = static_cast<int>(nodes_.size());
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    if (seen[k]++) throw Error("tree node " + std::to_string(k) + " reachable twice");
    const TreeNode& node = nodes_[k];
    if (node.is_leaf()) {
      if (!std::isfinite(node.value)) throw Error("non-finite leaf value");
      continue;
    }
    if (static_cast<std::size_t>(node.feature) >= num_features_) {
      throw Error("split feature " + std::to_string(node.feature) + " out of range");
    }
    // Children always follow their parent, so depth() can sweep in order.
    if (node.left <= k || node.left >= size || node.right <= k || node.right >= size) {
      throw Error("tree child index out of range");
    }
    stack.push_back(node.right);
    stack.push_back(node.left);
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw Error("unreachable tree node");
}

std::size_t RegressionTree::num_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int RegressionTree::depth() const {
  std::vector<int> depth(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const TreeNode& node = nodes_[k];
    deepest = std::max(deepest, depth[k]);
    if (!node.is_leaf()) {
      depth[static_cast<std::size_t>(node.left)] = depth[k] + 1;
      depth[static_cast<std::size_t>(node.right)] = depth[k] + 1;
    }
  }
  return deepest;
}

double RegressionTree::predict(std::span<const double> row) const {
  if (row.size() != num_features_) {
    throw DimensionError("row has " + std::to_string(row.size()) + " features, tree expects " +
                         std::to_string(num_features_));
  }
  return nodes_[static_cast<std::size_t>(leaf_index(row))].value;
}

std::vector<double> RegressionTree::predict_batch(const Matrix& rows) const {
  if (rows.rows() > 0 && rows.cols() != num_features_) {
    throw DimensionError("batch has " + std::to_string(rows.cols()) + " features, tree expects " +
                         std::to_string(num_features_));
  }
  std::vector<double> out(rows.rows());
  parallel_chunks(rows.rows(), kRowChunk, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      out[i] = nodes_[static_cast<std::size_t>(leaf_index(rows.row(i)))].value;
    }
  });
  return out;
}

double predict_tree(const RegressionTree& tree, std::span<const double> row) {
  return tree.predict(row);
}

std::vector<double> predict_tree_batch(const RegressionTree& tree, const Matrix& rows) {
  return tree.predict_batch(rows);
}

TreeFit fit_regression_tree(const BinMap& bins, std::span<const double> targets,
                            const TreeConfig& config) {
  validate(config);
  const std::size_t n = bins.num_rows();
  if (targets.size() != n) {
    throw DimensionError("target count " + std::to_string(targets.size()) +
                         " does not match binned rows " + std::to_string(n));
  }
  if (n == 0) throw Error("cannot fit a tree on zero rows");
  for (double t : targets) {
    if (!std::isfinite(t)) throw Error("non-finite regression target");
  }

  Layout layout;
  for (std::size_t j = 0; j < bins.num_features(); ++j) {
    layout.offset.push_back(layout.total);
    layout.total += bins.num_bins(j);
  }
  layout.offset.push_back(layout.total);

  std::vector<std::uint32_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(i);
  std::vector<std::uint32_t> scratch(n);

  TreeFit fit;
  fit.fitted.assign(n, 0.0);
  std::vector<TreeNode> nodes(1);
  const double min_leaf = static_cast<double>(config.min_leaf_samples);

  std::vector<Pending> stack;
  stack.push_back({0, 0, n, 0, {}});
  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    auto span = std::span<const std::uint32_t>(rows).subspan(cur.begin, cur.end - cur.begin);
    double sum = 0.0;
    double sq = 0.0;
    for (std::uint32_t r : span) {
      sum += targets[r];
      sq += targets[r] * targets[r];
    }
    const double count = static_cast<double>(span.size());
    TreeNode& node = nodes[static_cast<std::size_t>(cur.node)];
    node.value = sum / count;
    node.count = static_cast<std::uint32_t>(span.size());

    Split split;
    if (cur.depth < config.max_depth && count >= 2.0 * min_leaf) {
      if (cur.hist.empty()) cur.hist = build_histogram(bins, layout, targets, span);
      split = best_split(bins, layout, cur.hist, sum, count, min_leaf);
      // Rounding can leave a tiny positive gain on constant targets.
      const double noise = 1e-12 * sq;
      if (!(split.gain > config.min_gain && split.gain > noise)) split.feature = -1;
    }
    if (split.feature < 0) {
      for (std::uint32_t r : span) fit.fitted[r] = node.value;
      continue;
    }
    if (cur.node == 0) fit.root_gain = split.gain;

    const auto f = static_cast<std::size_t>(split.feature);
    std::size_t left_end = cur.begin;
    std::size_t right_pos = 0;
    for (std::size_t k = cur.begin; k < cur.end; ++k) {
      const std::uint32_t r = rows[k];
      if (bins.bin(r, f) <= split.bin) {
        rows[left_end++] = r;
      } else {
        scratch[right_pos++] = r;
      }
    }
    std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(right_pos),
              rows.begin() + static_cast<std::ptrdiff_t>(left_end));

    const int left = static_cast<int>(nodes.size());
    const int right = left + 1;
    node.feature = split.feature;
    node.threshold = bins.thresholds(f)[static_cast<std::size_t>(split.bin)];
    node.left = left;
    node.right = right;
    nodes.resize(nodes.size() + 2);  // invalidates `node`

    Pending lo{left, cur.begin, left_end, cur.depth + 1, {}};
    Pending hi{right, left_end, cur.end, cur.depth + 1, {}};
    const bool children_split = cur.depth + 1 < config.max_depth;
    if (children_split) {
      // Build the smaller child's histogram, derive the larger by subtraction.
      Pending& small = (lo.end - lo.begin) <= (hi.end - hi.begin) ? lo : hi;
      Pending& large = &small == &lo ? hi : lo;
      small.hist = build_histogram(
          bins, layout, targets,
          std::span<const std::uint32_t>(rows).subspan(small.begin, small.end - small.begin));
      large.hist = std::move(cur.hist);
      for (std::size_t k = 0; k < layout.total; ++k) {
        large.hist[k].sum -= small.hist[k].sum;
        large.hist[k].count -= small.hist[k].count;
      }
    }
    stack.push_back(std::move(hi));
    stack.push_back(std::move(lo));
  }
  fit.tree = RegressionTree(bins.num_features(), std::move(nodes));
  return fit;
}

}  // namespace fmcb
