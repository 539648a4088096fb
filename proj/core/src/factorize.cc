#include "fmcb/factorize.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "fmcb/error.h"
#include "fmcb/parallel.h"
#include "fmcb/random.h"

namespace fmcb {
namespace {

constexpr int kMaxRestarts = 3;

std::vector<double> random_unit(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& x : v) x = rng.normal();
    norm = norm2(v);
  }
  for (double& x : v) x /= norm;
  return v;
}

// r = A v, row-parallel.
std::vector<double> project_rows(const Matrix& a, std::span<const double> v) {
  std::vector<double> r(a.rows());
  parallel_chunks(a.rows(), kRowChunk, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) r[i] = dot(a.row(i), v);
  });
  return r;
}

// Symmetric n x n Gram matrix of the rows a_i - r_i b (plain A^T A when r is
// empty) with a fixed reduction order. Deflating the rows rather than the
// Gram matrix keeps sigma2 accurate well below sqrt(eps) * sigma1.
std::vector<double> gram(const Matrix& a, std::span<const double> r = {},
                         std::span<const double> b = {}) {
  const std::size_t n = a.cols();
  const std::size_t chunks = chunk_count(a.rows(), kRowChunk);
  std::vector<std::vector<double>> parts(chunks);
  parallel_chunks(a.rows(), kRowChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
    std::vector<double> g(n * n, 0.0);
    std::vector<double> row(n);
    for (std::size_t i = begin; i < end; ++i) {
      auto src = a.row(i);
      for (std::size_t p = 0; p < n; ++p) row[p] = r.empty() ? src[p] : src[p] - r[i] * b[p];
      for (std::size_t p = 0; p < n; ++p) {
        const double x = row[p];
        if (x == 0.0) continue;
        for (std::size_t q = p; q < n; ++q) g[p * n + q] += x * row[q];
      }
    }
    parts[c] = std::move(g);
  });
  std::vector<double> g(n * n, 0.0);
  for (const auto& part : parts) {
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += part[k];
  }
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < p; ++q) g[p * n + q] = g[q * n + p];
  }
  return g;
}

struct Eigenpair {
  double value = 0.0;
  std::vector<double> vector;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Dominant eigenpair of a symmetric positive semi-definite matrix. Converged
// once ||G b - lambda b|| <= tolerance * scale.
Eigenpair power_iteration(const std::vector<double>& g, std::size_t n, double tolerance,
                          double scale, int max_iters) {
  Eigenpair out;
  std::size_t start = 0;
  for (std::size_t p = 1; p < n; ++p) {
    if (g[p * n + p] > g[start * n + start]) start = p;
  }
  std::vector<double> b(g.begin() + static_cast<std::ptrdiff_t>(start * n),
                        g.begin() + static_cast<std::ptrdiff_t>(start * n + n));
  double norm = norm2(b);
  if (norm == 0.0 || scale == 0.0) {
    out.vector.assign(n, 0.0);
    out.vector[start] = 1.0;
    out.converged = true;
    return out;
  }
  for (double& x : b) x /= norm;
  std::vector<double> y(n);
  const double threshold = tolerance * scale;
  for (int it = 1; it <= max_iters; ++it) {
    for (std::size_t p = 0; p < n; ++p) {
      y[p] = dot(std::span(g).subspan(p * n, n), b);
    }
    const double lambda = dot(y, b);
    double res = 0.0;
    for (std::size_t p = 0; p < n; ++p) res += (y[p] - lambda * b[p]) * (y[p] - lambda * b[p]);
    res = std::sqrt(res);
    out.value = lambda;
    out.residual = res;
    out.iterations = it;
    norm = norm2(y);
    if (norm == 0.0) {
      out.vector = b;
      out.converged = true;
      return out;
    }
    for (std::size_t p = 0; p < n; ++p) b[p] = y[p] / norm;
    if (res <= threshold) {
      out.converged = true;
      break;
    }
  }
  out.vector = b;
  return out;
}

struct Spectrum {
  Eigenpair top;
  Eigenpair second;
};

Spectrum top_two(const Matrix& a, double tolerance, int max_iters) {
  const std::size_t n = a.cols();
  std::vector<double> g = gram(a);
  double scale = 0.0;
  for (std::size_t p = 0; p < n; ++p) scale = std::max(scale, g[p * n + p]);
  Spectrum s;
  s.top = power_iteration(g, n, tolerance, scale, max_iters);
  const auto& b = s.top.vector;
  const std::vector<double> r = project_rows(a, b);
  s.second = power_iteration(gram(a, r, b), n, tolerance, scale, max_iters);
  return s;
}

void check_finite(const Matrix& a) {
  for (double x : a.data()) {
    if (!std::isfinite(x)) throw Error("matrix has non-finite entries");
  }
}

}  // namespace

void canonicalize(RankOneFactors& f) {
  if (f.b.empty()) return;
  std::size_t lead = 0;
  for (std::size_t j = 1; j < f.b.size(); ++j) {
    if (std::abs(f.b[j]) > std::abs(f.b[lead])) lead = j;
  }
  if (f.b[lead] < 0.0) {
    for (double& x : f.b) x = -x;
    for (double& x : f.r) x = -x;
  }
}

SalsResult sals_rank_one(const Matrix& a, const SalsConfig& config,
                         std::optional<std::span<const double>> initial_direction) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (m == 0 || n == 0) throw DimensionError("SALS needs a non-empty matrix");
  if (!(config.step > 0.0) || config.max_epochs < 1 || !(config.tolerance > 0.0) ||
      !(config.row_sample_fraction > 0.0 && config.row_sample_fraction <= 1.0)) {
    throw Error("invalid SALS configuration");
  }

  std::vector<double> row_sq(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = a.row(i);
    for (double x : row) {
      if (!std::isfinite(x)) throw Error("matrix has non-finite entries");
    }
    row_sq[i] = dot(row, row);
  }
  double total_sq = 0.0;
  for (double x : row_sq) total_sq += x;
  if (total_sq == 0.0) throw ZeroMatrixError("cannot factorize a zero matrix");

  Rng rng(config.seed);
  SalsResult result;
  std::vector<double> v;
  if (initial_direction && initial_direction->size() == n && norm2(*initial_direction) > 0.0) {
    v.assign(initial_direction->begin(), initial_direction->end());
    const double norm = norm2(v);
    for (double& x : v) x /= norm;
  } else if (initial_direction && !initial_direction->empty() && initial_direction->size() != n) {
    throw DimensionError("warm-start direction has the wrong length");
  } else {
    v = random_unit(rng, n);
  }

  const double mean_row_sq = total_sq / static_cast<double>(m);
  double step = config.step;
  const auto sample = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.row_sample_fraction * static_cast<double>(m))));
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;

  double previous_residual = std::numeric_limits<double>::infinity();
  std::vector<double> epoch_start(n);
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    ++result.epochs;
    // Partial Fisher-Yates: the first `sample` slots become this epoch's rows.
    for (std::size_t k = 0; k < sample; ++k) {
      std::swap(order[k], order[k + rng.below(m - k)]);
    }
    epoch_start = v;
    const double rate = 2.0 * step / mean_row_sq;
    double residual = 0.0;
    for (std::size_t k = 0; k < sample; ++k) {
      const std::size_t i = order[k];
      auto row = a.row(i);
      const double u = dot(row, v);
      residual += row_sq[i] - u * u;
      const double g = rate * u;
      for (std::size_t j = 0; j < n; ++j) v[j] -= g * (v[j] * u - row[j]);
      result.inner_entry_touches += n;
      const double norm = std::sqrt(dot(v, v));
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        if (++result.restarts > kMaxRestarts) {
          throw Error("SALS projection collapsed to zero after " + std::to_string(kMaxRestarts) +
                      " restarts");
        }
        v = random_unit(rng, n);
        continue;
      }
      const double inv = 1.0 / norm;
      for (double& x : v) x *= inv;
    }
    residual /= static_cast<double>(sample);
    // Compared against the previous epoch, accepted or not: the trajectory
    // average of an accepted epoch can undercut its own end point, and a
    // running minimum would then reject every later epoch.
    const double previous = previous_residual;
    previous_residual = residual;
    if (residual > previous) {
      v = epoch_start;
      step *= 0.5;
      ++result.step_halvings;
      continue;
    }
    double moved = 0.0;
    for (std::size_t j = 0; j < n; ++j) moved += (v[j] - epoch_start[j]) * (v[j] - epoch_start[j]);
    if (std::sqrt(moved) < config.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.final_step = step;
  result.factors.b = std::move(v);
  result.factors.r = project_rows(a, result.factors.b);
  canonicalize(result.factors);
  return result;
}

OracleResult exact_rank_one_oracle(const Matrix& a, double tolerance, int max_iters) {
  if (a.rows() == 0 || a.cols() == 0) throw DimensionError("oracle needs a non-empty matrix");
  check_finite(a);
  const Spectrum s = top_two(a, tolerance, max_iters);
  if (!s.top.converged || !s.second.converged) {
    const auto& failed = s.top.converged ? s.second : s.top;
    throw NonConvergenceError("power iteration did not converge in " + std::to_string(max_iters) +
                                  " iterations (residual " + std::to_string(failed.residual) + ")",
                              failed.residual);
  }
  OracleResult out;
  out.sigma1 = std::sqrt(std::max(0.0, s.top.value));
  out.sigma2 = std::sqrt(std::max(0.0, s.second.value));
  out.iterations = s.top.iterations + s.second.iterations;
  RankOneFactors f{project_rows(a, s.top.vector), s.top.vector};
  canonicalize(f);
  out.r = std::move(f.r);
  out.b = std::move(f.b);
  return out;
}

FactorizationQuality factorization_quality(const Matrix& a, const RankOneFactors& factors) {
  if (factors.r.size() != a.rows() || factors.b.size() != a.cols()) {
    throw DimensionError("factor lengths do not match the matrix shape");
  }
  const double total = ordered_sum(a.rows(), kRowChunk, [&](std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += dot(a.row(i), a.row(i));
    return s;
  });
  if (total == 0.0) throw ZeroMatrixError("quality of a zero matrix is undefined");
  const double resid = ordered_sum(a.rows(), kRowChunk, [&](std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      auto row = a.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double d = row[j] - factors.r[i] * factors.b[j];
        s += d * d;
      }
    }
    return s;
  });
  FactorizationQuality q;
  q.residual_ratio = std::sqrt(resid / total);
  q.energy_fraction = 1.0 - resid / total;
  const Spectrum s = top_two(a, 1e-10, 20000);
  const double s1 = std::sqrt(std::max(0.0, s.top.value));
  const double s2 = std::sqrt(std::max(0.0, s.second.value));
  q.sigma_ratio = s2 <= 1e-12 * s1 ? std::numeric_limits<double>::infinity() : s1 / s2;
  return q;
}

}  // namespace fmcb
