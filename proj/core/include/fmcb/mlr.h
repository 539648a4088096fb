#ifndef FMCB_MLR_H_
#define FMCB_MLR_H_

#include <span>
#include <vector>

#include "fmcb/matrix.h"

namespace fmcb {

// Multinomial logistic regression over K classes with K - 1 free scores;
// class K - 1 (zero-based) is the reference with score fixed at 0:
//
//   P(c | x) = exp(H_c) / (1 + sum_j exp(H_j))   for c < K - 1
//   P(K - 1 | x) = 1 / (1 + sum_j exp(H_j))

// Scores are shifted by their maximum (reference score 0 included) and the
// shifted values are clipped to [-kScoreClip, kScoreClip] before exp.
inline constexpr double kScoreClip = 30.0;

// Infinite scores are replaced by this value before shifting.
inline constexpr double kScoreCap = 1e15;

// N x (K - 1) matrix of class scores H_c(x_i) on a fixed set of rows.
struct Cursor {
  Cursor() = default;
  Cursor(std::size_t rows, int num_classes)
      : values(rows, static_cast<std::size_t>(num_classes - 1)), num_classes(num_classes) {}

  Matrix values;
  int num_classes = 0;
};

// N x (K - 1) matrix of dL/dH_c(x_i) = 1{y_i = c} - P(c | x_i).
struct GradientMatrix {
  Matrix values;
  double frobenius_norm = 0.0;
};

// Writes K probabilities for one row of K - 1 scores. Throws on NaN.
void class_probabilities(std::span<const double> scores, std::span<double> out);
std::vector<double> class_probabilities(std::span<const double> scores);

// log P(label | scores) for one row.
double log_probability(std::span<const double> scores, int label);

// Sum over rows of log P(y_i | x_i). Always <= 0.
double log_likelihood(std::span<const int> labels, const Cursor& cursor);

GradientMatrix gradient_matrix(std::span<const int> labels, const Cursor& cursor);

struct GradientEvaluation {
  GradientMatrix gradient;
  double log_likelihood = 0.0;
};

// Gradient and log-likelihood in a single pass over the rows.
GradientEvaluation evaluate_gradient(std::span<const int> labels, const Cursor& cursor);

}  // namespace fmcb

#endif  // FMCB_MLR_H_
