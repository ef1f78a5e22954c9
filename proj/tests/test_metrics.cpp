#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "chgat/metrics.hpp"

using chgat::auc;
using chgat::ndcg;
using chgat::ndcg_group;

namespace {

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double credit = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!l[i] || l[j]) continue;
      pairs += 1;
      credit += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return credit / pairs;
}

}  // namespace

TEST(Auc, PerfectOrderingIsOne) {
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
}

TEST(Auc, AllEqualScoresIsHalf) {
  EXPECT_EQ(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 1, 0, 1}), 0.5);
}

TEST(Auc, SixSampleFixtureMatchesPairCount) {
  const std::vector<double> s{0.9, 0.4, 0.4, 0.7, 0.1, 0.4};
  const std::vector<int> l{1, 0, 1, 0, 0, 1};
  // Positives 0.9, 0.4, 0.4 vs negatives 0.4, 0.7, 0.1:
  // 0.9 beats all three (3); each 0.4 ties one, beats one (1.5 each).
  EXPECT_EQ(auc(s, l), 6.0 / 9.0);
  EXPECT_EQ(auc(s, l), pair_count_auc(s, l));
}

TEST(Auc, OneClassIsUndefined) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), chgat::MetricError);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), chgat::MetricError);
}

TEST(Auc, MatchesPairCountOnRandomInputs) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 7) / 7.0;  // coarse grid forces ties
      l[i] = static_cast<int>(rng() % 2);
    }
    l[0] = 1;
    l[1] = 0;
    EXPECT_EQ(auc(s, l), pair_count_auc(s, l));
  }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  std::vector<double> s(200), t(200);
  std::vector<int> l(200);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = g(rng);
    t[i] = std::exp(3 * s[i]) + 1;
    l[i] = g(rng) + s[i] > 0;
  }
  EXPECT_EQ(auc(s, l), auc(t, l));
}

TEST(Ndcg, SinglePositiveFirstIsOne) {
  EXPECT_EQ(ndcg_group(std::vector<double>{0.9, 0.1, 0.2}, std::vector<int>{1, 0, 0}), 1.0);
}

TEST(Ndcg, SinglePositiveSecondOfTwo) {
  EXPECT_NEAR(ndcg_group(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 1}), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(1.0 / std::log2(3.0), 0.6309, 1e-4);
}

TEST(Ndcg, ThreeGroupHandComputation) {
  // Group 7: positives ranked 1st and 3rd of 3 -> (1 + 1/2) / (1 + 1/log2 3).
  // Group 8: positive ranked 2nd of 2 -> 1/log2 3.
  // Group 9: positive ranked 1st -> 1.
  const std::vector<double> s{0.9, 0.5, 0.7, 0.3, 0.8, 0.6};
  const std::vector<int> l{1, 1, 0, 1, 0, 1};
  const std::vector<std::uint64_t> g{7, 7, 7, 8, 8, 9};
  const double g7 = 1.5 / (1.0 + 1.0 / std::log2(3.0));
  const double g8 = 1.0 / std::log2(3.0);
  const auto r = ndcg(s, l, g);
  EXPECT_EQ(r.groups, 3u);
  EXPECT_EQ(r.skipped, 0u);
  EXPECT_NEAR(r.mean, (g7 + g8 + 1.0) / 3.0, 1e-15);
}

TEST(Ndcg, GroupsWithoutPositivesAreSkippedAndCounted) {
  const auto r = ndcg(std::vector<double>{0.1, 0.2, 0.3}, std::vector<int>{0, 0, 1},
                      std::vector<std::uint64_t>{1, 1, 2});
  EXPECT_EQ(r.groups, 1u);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.mean, 1.0);
}

TEST(Ndcg, DepthTruncates) {
  // Positive at rank 3, cut at 2 -> 0.
  EXPECT_EQ(ndcg_group(std::vector<double>{0.9, 0.8, 0.7}, std::vector<int>{0, 0, 1}, 2), 0.0);
  EXPECT_GT(ndcg_group(std::vector<double>{0.9, 0.8, 0.7}, std::vector<int>{0, 0, 1}, 0), 0.0);
}

TEST(Ndcg, StaysInUnitInterval) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u(rng);
      l[i] = u(rng) < 0.3;
    }
    l[0] = 1;
    const double v = ndcg_group(s, l);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-15);
  }
}
