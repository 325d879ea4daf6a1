#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "multimax/multimax.hpp"

using namespace multimax;

namespace {

Matrix uniform(std::size_t t) { return Matrix(t, t, 1.0 / static_cast<double>(t)); }

Matrix random_stochastic(std::mt19937_64& g, std::size_t t) {
  Matrix m(t, t);
  std::normal_distribution<double> n(0.0, 2.0);
  for (std::size_t r = 0; r < t; ++r) {
    std::vector<double> x(t);
    for (auto& v : x) v = n(g);
    const auto p = softmax(Scores(x));
    for (std::size_t c = 0; c < t; ++c) m(r, c) = p[c];
  }
  return m;
}

}  // namespace

TEST(PatchSimilarity, Examples) {
  EXPECT_NEAR(patch_similarity(Matrix(3, 2, std::vector<double>{1, 2, 1, 2, 1, 2})), 1.0, 1e-15);
  EXPECT_NEAR(patch_similarity(Matrix(2, 2, std::vector<double>{1, 0, 0, 1})), 0.0, 1e-15);
  const double r = 1.0 / std::sqrt(2.0);
  const double expected = (0.0 + std::sqrt(2.0) / 2 + std::sqrt(2.0) / 2) / 3.0;
  EXPECT_NEAR(patch_similarity(Matrix(3, 2, std::vector<double>{1, 0, 0, 1, r, r})), expected, 1e-15);
  EXPECT_NEAR(expected, 0.4714, 5e-5);
  EXPECT_THROW(patch_similarity(Matrix(2, 2, std::vector<double>{1, 0, 0, 0})), InvalidInput);
  EXPECT_THROW(patch_similarity(Matrix(1, 2, 1.0)), InvalidInput);
}

TEST(Rollout, Examples) {
  const std::size_t t = 5;
  AttentionStack ids{{AttentionLayer{{Matrix::identity(t)}}, AttentionLayer{{Matrix::identity(t)}}}};
  const auto r = attention_rollout(ids);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r.data()[i], Matrix::identity(t).data()[i]);
  for (double d : rollout_discrepancy(ids)) EXPECT_EQ(d, 0.0);

  std::mt19937_64 g(1);
  const Matrix a = random_stochastic(g, t), b = random_stochastic(g, t);
  AttentionStack single{{AttentionLayer{{a, b}}}};
  const auto avg = attention_rollout(single);
  for (std::size_t i = 0; i < avg.size(); ++i) EXPECT_NEAR(avg.data()[i], 0.5 * (a.data()[i] + b.data()[i]), 1e-16);
  EXPECT_EQ(rollout_discrepancy(single), std::vector<double>{0.0});

  AttentionStack uni{{AttentionLayer{{uniform(t)}}, AttentionLayer{{uniform(t)}}}};
  const Matrix uni_roll = attention_rollout(uni);
  for (double v : uni_roll.data()) EXPECT_NEAR(v, 1.0 / t, 1e-16);

  AttentionStack ui{{AttentionLayer{{uniform(t)}}, AttentionLayer{{Matrix::identity(t)}}}};
  const auto disc = rollout_discrepancy(ui);
  ASSERT_EQ(disc.size(), 2u);
  EXPECT_EQ(disc[0], 0.0);
  EXPECT_NEAR(disc[1], 2.0 * (t - 1) / double(t * t), 1e-15);
}

TEST(Rollout, RowsStayStochasticAndIdentityOption) {
  std::mt19937_64 g(2);
  AttentionStack s;
  for (int l = 0; l < 6; ++l) s.layers.push_back(AttentionLayer{{random_stochastic(g, 7), random_stochastic(g, 7)}});
  for (const auto& opts : {RolloutOptions{false}, RolloutOptions{true}}) {
    for (const auto& r : partial_rollouts(s, opts)) {
      for (std::size_t i = 0; i < r.rows(); ++i) {
        double sum = 0.0;
        for (double v : r.row(i)) {
          EXPECT_GE(v, 0.0);
          sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    }
  }
  AttentionStack one{{AttentionLayer{{uniform(4)}}}};
  const auto r = attention_rollout(one, RolloutOptions{true});
  EXPECT_NEAR(r(0, 0), 0.5 * 0.25 + 0.5, 1e-16);
  EXPECT_NEAR(r(0, 1), 0.5 * 0.25, 1e-16);
}

TEST(Rollout, RejectsInconsistentStacks) {
  AttentionStack bad{{AttentionLayer{{uniform(3)}}, AttentionLayer{{uniform(4)}}}};
  EXPECT_THROW(attention_rollout(bad), InvalidInput);
  AttentionStack not_stochastic{{AttentionLayer{{Matrix(3, 3, 0.5)}}}};
  EXPECT_THROW(attention_rollout(not_stochastic), InvalidInput);
  EXPECT_THROW(attention_rollout(AttentionStack{}), InvalidInput);
}

TEST(Histogram, Examples) {
  const auto empty = score_histogram({}, {0.0, 0.5, 1.0});
  EXPECT_EQ(empty.counts, (std::vector<std::size_t>{0, 0}));
  const auto one = score_histogram({0.5}, {0.0, 0.1, 1.0});
  EXPECT_EQ(one.counts, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(one.cumulative, (std::vector<double>{0.0, 1.0}));

  std::mt19937_64 g(12345);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(1000);
  for (auto& v : scores) v = u(g);
  const auto h = score_histogram(scores, {0.0, 0.5, 1.0});
  const double sigma = std::sqrt(1000 * 0.25);
  EXPECT_LT(std::abs(double(h.counts[0]) - 500.0), 5 * sigma);
  EXPECT_EQ(h.counts[0] + h.counts[1], 1000u);

  EXPECT_THROW(score_histogram({1.5}, {0.0, 1.0}), InvalidInput);
  EXPECT_THROW(score_histogram({-0.1}, {0.0, 1.0}), InvalidInput);
  EXPECT_THROW(score_histogram({0.5}, {0.0, 0.0, 1.0}), InvalidInput);
}

TEST(Histogram, DefaultEdgesPartitionAndCumulate) {
  const auto edges = default_histogram_edges();
  ASSERT_EQ(edges.size(), 52u);
  EXPECT_EQ(edges[0], 0.0);
  EXPECT_DOUBLE_EQ(edges[1], 1e-8);
  EXPECT_EQ(edges.back(), 1.0);
  const auto h = score_histogram({0.0, 1e-9, 1e-8, 0.3, 1.0, 1.0}, edges);
  EXPECT_EQ(h.counts[0], 2u);
  EXPECT_EQ(h.counts[1], 1u);
  EXPECT_EQ(h.counts.back(), 2u);
  std::size_t total = 0;
  for (auto c : h.counts) total += c;
  EXPECT_EQ(total, 6u);
  for (std::size_t i = 1; i < h.cumulative.size(); ++i) EXPECT_GE(h.cumulative[i], h.cumulative[i - 1]);
  EXPECT_EQ(h.cumulative.back(), 1.0);
}
