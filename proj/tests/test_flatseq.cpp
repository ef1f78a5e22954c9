#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "chgat/flatseq.hpp"
#include "chgat/world.hpp"
#include "support.hpp"

using namespace chgat;

namespace {

const VertexId u7 = VertexId::user(7);
const VertexId c1 = VertexId::context(1), c2 = VertexId::context(2);
const VertexId q1 = VertexId::query(1), q2 = VertexId::query(2), q3 = VertexId::query(3);
const VertexId i1 = VertexId::item(1), i2 = VertexId::item(2), i3 = VertexId::item(3), i4 = VertexId::item(4);

std::vector<MetaPathTree> without_recency(std::vector<MetaPathTree> trees) {
  for (auto& t : trees) t.recency = 0;
  return trees;
}

// Two contexts: c1 with q1:[i1, i2] and q2:[i3]; c2 with q3:[i4].
std::vector<MetaPathTree> two_context_trees() {
  return {{MetaPathKind::ucqi_self, c1, {{q1, {i1, i2}}, {q2, {i3}}}, {}, 0},
          {MetaPathKind::ucqi_self, c2, {{q3, {i4}}}, {}, 0}};
}

}  // namespace

TEST(FlatLayout, TotalLengthForTwoTwoTwo) {
  EXPECT_EQ((FlatLayout{2, 2, 2}.total_len()), 15u);
  EXPECT_EQ((FlatLayout{2, 0, 2}.total_len()), 7u);
}

TEST(FlatLayout, KindsPickTheirCaps) {
  GraphConfig cfg;
  EXPECT_EQ(FlatLayout::for_kind(MetaPathKind::ucqi_self, cfg), (FlatLayout{4, 3, 5}));
  EXPECT_EQ(FlatLayout::for_kind(MetaPathKind::uci_self, cfg), (FlatLayout{4, 0, 5}));
  EXPECT_EQ(FlatLayout::for_kind(MetaPathKind::ucqi_sim, cfg), (FlatLayout{20, 3, 5}));
  EXPECT_EQ(FlatLayout::for_kind(MetaPathKind::uci_sim, cfg), (FlatLayout{20, 0, 5}));
}

TEST(FlatLayout, SlotsAreABijection) {
  for (FlatLayout l : {FlatLayout{4, 3, 5}, FlatLayout{2, 2, 2}, FlatLayout{3, 0, 4}}) {
    std::set<std::size_t> seen{0};
    for (std::size_t j = 1; j <= l.n1; ++j) {
      seen.insert(l.context_slot(j));
      if (l.has_queries()) {
        for (std::size_t k = 1; k <= l.n2; ++k) {
          seen.insert(l.query_slot(j, k));
          for (std::size_t m = 0; m < l.n3; ++m) seen.insert(l.item_slot(j, k, m));
        }
      } else {
        for (std::size_t m = 0; m < l.n3; ++m) seen.insert(l.direct_item_slot(j, m));
      }
    }
    EXPECT_EQ(seen.size(), l.total_len());
    EXPECT_EQ(*seen.rbegin(), l.total_len() - 1);
  }
}

TEST(FlatLayout, QueriesOfOneContextAreContiguous) {
  const FlatLayout l{4, 3, 5};
  for (std::size_t j = 1; j <= l.n1; ++j) {
    for (std::size_t k = 2; k <= l.n2; ++k) EXPECT_EQ(l.query_slot(j, k), l.query_slot(j, k - 1) + 1);
    for (std::size_t m = 1; m < l.n3; ++m) EXPECT_EQ(l.item_slot(j, 1, m), l.item_slot(j, 1, m - 1) + 1);
  }
}

TEST(Flatten, TwoContextFixtureLaysOutAsDocumented) {
  const FlatLayout l{2, 2, 2};
  const auto trees = two_context_trees();
  const auto s = flatten(u7, trees, l);
  ASSERT_EQ(s.slots.size(), 15u);
  const std::vector<VertexId> want{u7, c1, c2, q1, q2, q3, {}, i1, i2, i3, {}, i4, {}, {}, {}};
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(s.at(i), want[i]) << "slot " << i;
  EXPECT_EQ(without_recency(unflatten(s, MetaPathKind::ucqi_self)), without_recency(trees));
}

TEST(Flatten, EmptyGraphIsUserThenPadding) {
  const auto s = flatten(u7, {}, FlatLayout{2, 2, 2});
  EXPECT_EQ(s.at(0), u7);
  for (std::size_t i = 1; i < s.slots.size(); ++i) EXPECT_EQ(s.slots[i], 0u);
  EXPECT_TRUE(unflatten(s, MetaPathKind::ucqi_self).empty());
}

TEST(Flatten, IsIdempotentThroughUnflatten) {
  const FlatLayout l{2, 2, 2};
  const auto s = flatten(u7, two_context_trees(), l);
  EXPECT_EQ(flatten(u7, unflatten(s, MetaPathKind::ucqi_self), l), s);
}

TEST(Flatten, OverflowIsDroppedAndKindMustMatch) {
  const auto trees = two_context_trees();
  const auto s = flatten(u7, trees, FlatLayout{1, 1, 1});
  const auto back = unflatten(s, MetaPathKind::ucqi_self);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].queries, (std::vector<QueryChild>{{q1, {i1}}}));
  EXPECT_THROW(flatten(u7, trees, FlatLayout{2, 0, 2}), ConfigError);
  EXPECT_THROW(unflatten(s, MetaPathKind::uci_self), ConfigError);
}

TEST(Flatten, WrongLengthIsAFormatError) {
  auto s = flatten(u7, two_context_trees(), FlatLayout{2, 2, 2});
  s.slots.pop_back();
  EXPECT_THROW(unflatten(s, MetaPathKind::ucqi_self), FormatError);
}

TEST(Encode, FifteenSlotsTakeSeventySixBytes) {
  const auto s = flatten(u7, two_context_trees(), FlatLayout{2, 2, 2});
  const auto bytes = encode(s);
  EXPECT_EQ(bytes.size(), 76u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FSQ1");
  EXPECT_EQ(bytes[4], 2);  // n1, little-endian
  EXPECT_EQ(decode(bytes), s);
}

TEST(Encode, DecodeRejectsBadInput) {
  const FlatLayout l{2, 2, 2};
  auto bytes = encode(flatten(u7, two_context_trees(), l));
  const FlatLayout other{2, 0, 2};
  EXPECT_THROW(decode(bytes, &other), FormatError);
  EXPECT_NO_THROW(decode(bytes, &l));
  auto shorter = bytes;
  shorter.pop_back();
  EXPECT_THROW(decode(shorter), FormatError);
  auto bad_magic = bytes;
  bad_magic[3] = '2';
  EXPECT_THROW(decode(bad_magic), FormatError);
}

TEST(Render, OneLinePerSlotWithLayer) {
  std::ostringstream os;
  render(os, flatten(u7, two_context_trees(), FlatLayout{2, 2, 2}));
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 15);
  EXPECT_EQ(text.substr(0, text.find('\n')), "0\tuser\tu7");
  EXPECT_NE(text.find("3\tquery\tq1\n"), std::string::npos);
  EXPECT_NE(text.find("14\titem\t-\n"), std::string::npos);
}

TEST(FlatGraph, GeneratedGraphsRoundTrip) {
  const World w = generate_world(fixtures::tiny_world(3));
  const BehaviorStore store = w.store();
  GraphConfig cfg;
  for (const auto& imp : w.test) {
    const UserGraph g = store.build_graph(imp.user, imp.location, imp.timestamp, cfg);
    const auto f = flatten_graph(g, cfg);
    const UserGraph back = unflatten_graph(f);
    EXPECT_EQ(back.user, g.user);
    EXPECT_EQ(back.portrait, g.portrait);
    EXPECT_EQ(without_recency(back.self_paths), without_recency(g.self_paths));
    EXPECT_EQ(without_recency(back.sim_paths), without_recency(g.sim_paths));
  }
}

TEST(FlatGraph, ForeignUserSequenceIsRejected) {
  GraphConfig cfg;
  UserGraph g;
  g.user = u7;
  auto f = flatten_graph(g, cfg);
  f.kinds[2].slots[0] = VertexId::user(8).raw();
  EXPECT_THROW(unflatten_graph(f), FormatError);
}
