#ifndef FMCB_FACTORIZE_H_
#define FMCB_FACTORIZE_H_

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "fmcb/matrix.h"

namespace fmcb {

// A ~= r b^T with ||b||_2 = 1; r carries the magnitude. The largest-magnitude
// component of b is positive (lowest index on ties).
struct RankOneFactors {
  std::vector<double> r;
  std::vector<double> b;
};

struct SalsConfig {
  // SGD step, relative to the mean squared row norm of the input, so that
  // scaling the matrix leaves the iterates unchanged.
  double step = 0.01;
  int max_epochs = 50;
  // Stop once an accepted epoch moves v by less than this (L2).
  double tolerance = 1e-6;
  // Rows visited per epoch, as a fraction of m (sampled without replacement).
  double row_sample_fraction = 1.0;
  std::uint64_t seed = 0;
};

struct SalsResult {
  RankOneFactors factors;
  int epochs = 0;           // epochs run, including rejected ones
  int step_halvings = 0;    // epochs rejected because the residual grew
  int restarts = 0;         // reseeded directions after a zero projection
  bool converged = false;   // tolerance reached before max_epochs
  double final_step = 0.0;  // relative step in use at the end
  // Matrix entries read by the SGD inner loop (sampled rows x n).
  std::uint64_t inner_entry_touches = 0;
};

// Stochastic ALS: SGD over rows on the unit sphere. For each sampled row a_i,
// u_i = <a_i, v>, v_j <- v_j - 2 w u_i (v_j u_i - a_ij), then v <- v / ||v||.
// Epochs whose running residual estimate increases are discarded and retried
// with half the step. Finally r = A v over all rows.
// `initial_direction`, when given, replaces the random start (warm start).
SalsResult sals_rank_one(const Matrix& a, const SalsConfig& config,
                         std::optional<std::span<const double>> initial_direction = {});

struct OracleResult {
  std::vector<double> r;
  std::vector<double> b;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  int iterations = 0;
};

// Power iteration on A^T A for (sigma1, b); sigma2 from the deflated Gram
// matrix A^T A - sigma1^2 b b^T. Throws NonConvergenceError after max_iters.
OracleResult exact_rank_one_oracle(const Matrix& a, double tolerance = 1e-12,
                                   int max_iters = 100000);

struct FactorizationQuality {
  double residual_ratio = 0.0;   // ||A - r b^T||_F / ||A||_F
  double energy_fraction = 0.0;  // 1 - residual_ratio^2
  // sigma1 / sigma2; +inf when sigma2 <= 1e-12 sigma1.
  double sigma_ratio = std::numeric_limits<double>::infinity();
};

FactorizationQuality factorization_quality(const Matrix& a, const RankOneFactors& factors);

// Flips (r, b) so that b's largest-magnitude entry is positive.
void canonicalize(RankOneFactors& factors);

}  // namespace fmcb

#endif  // FMCB_FACTORIZE_H_
