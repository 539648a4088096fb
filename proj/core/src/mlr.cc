#include "fmcb/mlr.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "fmcb/error.h"
#include "fmcb/parallel.h"

namespace fmcb {
namespace {

double sanitize(double s) {
  if (std::isnan(s)) throw Error("NaN class score");
  return std::clamp(s, -kScoreCap, kScoreCap);
}

// Fills exps[0..K-1) with exp(shifted score), exps[K-1] with the reference
// term, and returns the log of the normalizer together with the shift.
struct Normalizer {
  double shift;
  double log_sum;
  double sum;
};

Normalizer exponentiate(std::span<const double> scores, std::span<double> exps) {
  double shift = 0.0;  // the reference score
  for (double s : scores) shift = std::max(shift, sanitize(s));
  double sum = 0.0;
  const std::size_t n = scores.size();
  for (std::size_t c = 0; c < n; ++c) {
    // NaN was rejected above.
    const double z = std::clamp(scores[c], -kScoreCap, kScoreCap) - shift;
    exps[c] = std::exp(std::clamp(z, -kScoreClip, kScoreClip));
    sum += exps[c];
  }
  exps[n] = std::exp(std::clamp(-shift, -kScoreClip, kScoreClip));
  sum += exps[n];
  return {shift, std::log(sum), sum};
}

double shifted(std::span<const double> scores, int label, double shift) {
  const double s = static_cast<std::size_t>(label) < scores.size()
                       ? sanitize(scores[static_cast<std::size_t>(label)])
                       : 0.0;
  return std::clamp(s - shift, -kScoreClip, kScoreClip);
}

void check_shapes(std::span<const int> labels, const Cursor& cursor) {
  if (cursor.num_classes < 2) throw DimensionError("cursor needs K >= 2");
  if (labels.size() != cursor.values.rows()) {
    throw DimensionError("label count " + std::to_string(labels.size()) +
                         " does not match cursor rows " + std::to_string(cursor.values.rows()));
  }
  if (cursor.values.cols() != static_cast<std::size_t>(cursor.num_classes - 1)) {
    throw DimensionError("cursor has " + std::to_string(cursor.values.cols()) +
                         " columns, expected K - 1 = " + std::to_string(cursor.num_classes - 1));
  }
  for (int l : labels) {
    if (l < 0 || l >= cursor.num_classes) {
      throw DimensionError("label " + std::to_string(l) + " outside [0, K)");
    }
  }
}

}  // namespace

void class_probabilities(std::span<const double> scores, std::span<double> out) {
  if (out.size() != scores.size() + 1) throw DimensionError("probability output must have K slots");
  const Normalizer norm = exponentiate(scores, out);
  for (double& p : out) p /= norm.sum;
}

std::vector<double> class_probabilities(std::span<const double> scores) {
  std::vector<double> out(scores.size() + 1);
  class_probabilities(scores, out);
  return out;
}

double log_probability(std::span<const double> scores, int label) {
  std::vector<double> exps(scores.size() + 1);
  const Normalizer norm = exponentiate(scores, exps);
  return shifted(scores, label, norm.shift) - norm.log_sum;
}

double log_likelihood(std::span<const int> labels, const Cursor& cursor) {
  check_shapes(labels, cursor);
  const std::size_t k = static_cast<std::size_t>(cursor.num_classes);
  return ordered_sum(labels.size(), kRowChunk, [&](std::size_t begin, std::size_t end) {
    std::vector<double> exps(k);
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      auto row = cursor.values.row(i);
      const Normalizer norm = exponentiate(row, exps);
      s += shifted(row, labels[i], norm.shift) - norm.log_sum;
    }
    return s;
  });
}

GradientMatrix gradient_matrix(std::span<const int> labels, const Cursor& cursor) {
  return evaluate_gradient(labels, cursor).gradient;
}

GradientEvaluation evaluate_gradient(std::span<const int> labels, const Cursor& cursor) {
  check_shapes(labels, cursor);
  const std::size_t n = labels.size();
  const std::size_t k = static_cast<std::size_t>(cursor.num_classes);
  GradientEvaluation result;
  result.gradient.values = Matrix(n, k - 1);
  const std::size_t chunks = chunk_count(n, kRowChunk);
  std::vector<double> ll_parts(chunks, 0.0);
  std::vector<double> sq_parts(chunks, 0.0);
  parallel_chunks(n, kRowChunk, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    std::vector<double> exps(k);
    double ll = 0.0;
    double sq = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      auto row = cursor.values.row(i);
      const Normalizer norm = exponentiate(row, exps);
      const int y = labels[i];
      ll += shifted(row, y, norm.shift) - norm.log_sum;
      auto g = result.gradient.values.row(i);
      const double inv = -1.0 / norm.sum;
      for (std::size_t c = 0; c + 1 < k; ++c) g[c] = exps[c] * inv;
      if (static_cast<std::size_t>(y) + 1 < k) g[static_cast<std::size_t>(y)] += 1.0;
      sq += dot(g, g);
    }
    ll_parts[chunk] = ll;
    sq_parts[chunk] = sq;
  });
  double sq = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    result.log_likelihood += ll_parts[c];
    sq += sq_parts[c];
  }
  result.gradient.frobenius_norm = std::sqrt(sq);
  return result;
}

}  // namespace fmcb
