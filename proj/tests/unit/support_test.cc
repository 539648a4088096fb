#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <numeric>
#include <set>

#include "fmcb/matrix.h"
#include "fmcb/parallel.h"
#include "fmcb/random.h"

namespace fmcb {
namespace {

TEST(ParallelTest, ChunksCoverRangeOnce) {
  for (int threads : {1, 2, 5}) {
    set_thread_count(threads);
    for (std::size_t n : {0u, 1u, 7u, 2048u, 2049u, 10000u}) {
      std::vector<std::atomic<int>> hits(n);
      parallel_chunks(n, 100, [&](std::size_t chunk, std::size_t b, std::size_t e) {
        EXPECT_EQ(b, chunk * 100);
        EXPECT_EQ(e, std::min(n, b + 100));
        for (std::size_t i = b; i < e; ++i) ++hits[i];
      });
      for (auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
  }
  set_thread_count(0);
  EXPECT_GE(thread_count(), 1);
}

TEST(ParallelTest, OrderedSumIgnoresThreadCount) {
  std::vector<double> v(100003);
  Rng rng(1);
  for (double& x : v) x = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-8, 8));
  auto sum_with = [&](int threads) {
    set_thread_count(threads);
    return ordered_sum(v.size(), 977, [&](std::size_t b, std::size_t e) {
      double s = 0.0;
      for (std::size_t i = b; i < e; ++i) s += v[i];
      return s;
    });
  };
  const double one = sum_with(1);
  EXPECT_EQ(one, sum_with(3));
  EXPECT_EQ(one, sum_with(8));
  set_thread_count(0);
}

TEST(ParallelTest, ExceptionsPropagate) {
  set_thread_count(4);
  EXPECT_THROW(parallel_chunks(10000, 10,
                               [](std::size_t c, std::size_t, std::size_t) {
                                 if (c == 537) throw std::runtime_error("boom");
                               }),
               std::runtime_error);
  set_thread_count(0);
}

TEST(RandomTest, FixedStream) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
}

TEST(RandomTest, BelowIsInRangeAndRoughlyUniform) {
  Rng rng(7);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = rng.below(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(RandomTest, UniformAndNormalMoments) {
  Rng rng(8);
  double s = 0.0, sq = 0.0, us = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    sq += z * z;
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    us += u;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
  EXPECT_NEAR(us / n, 0.5, 0.005);
}

TEST(RandomTest, ShuffleIsPermutation) {
  Rng rng(9);
  std::vector<int> v(1000);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(std::span(v));
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
  std::sort(v.begin(), v.end());
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(v[static_cast<std::size_t>(i)], i);
}

TEST(RandomTest, DerivedSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t base = 0; base < 50; ++base)
    for (std::uint64_t stream = 0; stream < 50; ++stream) seen.insert(derive_seed(base, stream));
  EXPECT_EQ(seen.size(), 2500u);
}

TEST(MatrixTest, DotAndNorm) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{5, 4, 3, 2, 1};
  EXPECT_EQ(dot(a, b), 35.0);
  EXPECT_DOUBLE_EQ(norm2(a), std::sqrt(55.0));
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.column(1), (std::vector<double>{2, 5}));
  EXPECT_EQ(m.squared_norm(), 91.0);
  const std::vector<std::size_t> pick{1, 1, 0};
  const Matrix s = m.select_rows(pick);
  EXPECT_EQ(s.rows(), 3u);
  EXPECT_EQ(s(0, 2), 6.0);
  EXPECT_EQ(s(2, 0), 1.0);
}

}  // namespace
}  // namespace fmcb
