#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "chgat/error.hpp"

namespace chgat {

// Rank-statistic AUC; tied positive/negative pairs are credited 1/2.
// Counting is done in integers (twice the credited pairs) so the result is
// the exact ratio rounded once.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw MetricError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t pos = 0, neg = 0, twice_credit = 0;
  std::size_t i = 0;
  std::uint64_t neg_below = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t p = 0, n = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? p : n) += 1;
      ++j;
    }
    twice_credit += p * (2 * neg_below + n);
    neg_below += n;
    pos += p;
    neg += n;
    i = j;
  }
  if (pos == 0 || neg == 0) throw MetricError("auc: both classes must be present");
  return static_cast<double>(twice_credit) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

struct NdcgResult {
  double mean = 0.0;
  std::size_t groups = 0;
  std::size_t skipped = 0;  // groups without a positive
};

// Binary-gain DCG with log2 discount for one group, normalized by the ideal
// ordering. Equal scores keep input order. depth 0 means no truncation.
inline double ndcg_group(std::span<const double> scores, std::span<const int> labels, std::size_t depth = 0) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t cut = depth == 0 ? order.size() : std::min(depth, order.size());
  double dcg = 0.0;
  for (std::size_t r = 0; r < cut; ++r) {
    if (labels[order[r]]) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  const auto positives = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
  double ideal = 0.0;
  for (std::size_t r = 0; r < std::min(positives, cut); ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return ideal > 0.0 ? dcg / ideal : 0.0;
}

// Mean NDCG over groups keyed by `groups` (e.g. request ids). Groups
// without positives are skipped and counted.
inline NdcgResult ndcg(std::span<const double> scores, std::span<const int> labels,
                       std::span<const std::uint64_t> groups, std::size_t depth = 0) {
  if (scores.size() != labels.size() || scores.size() != groups.size()) {
    throw MetricError("ndcg: input lengths differ");
  }
  std::map<std::uint64_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);
  NdcgResult r;
  double total = 0.0;
  std::vector<double> s;
  std::vector<int> l;
  for (const auto& [g, idx] : members) {
    s.clear();
    l.clear();
    for (auto i : idx) {
      s.push_back(scores[i]);
      l.push_back(labels[i]);
    }
    if (std::none_of(l.begin(), l.end(), [](int v) { return v != 0; })) {
      ++r.skipped;
      continue;
    }
    total += ndcg_group(s, l, depth);
    ++r.groups;
  }
  r.mean = r.groups ? total / static_cast<double>(r.groups) : 0.0;
  return r;
}

}  // namespace chgat
