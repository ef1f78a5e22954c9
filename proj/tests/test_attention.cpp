#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "chgat/attention.hpp"
#include "chgat/model.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace chgat;
using fixtures::units;

namespace {

ChgatParams make_params(std::size_t vocab, std::size_t d, std::uint64_t seed, std::size_t hidden = 8) {
  ModelShape s;
  s.vocab = vocab;
  s.d = d;
  s.attr_width = 2;
  s.attr_hidden = 3;
  s.attention_hidden = hidden;
  s.tower_hidden = {4};
  return ChgatParams::init(s, 1.0, 0.0, seed);
}

std::vector<double> flat(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

std::vector<double> path_vector(const ChgatParams& p, const ResolvedPath& path, const OutsideContext& o) {
  RepresentationTape t;
  t.cache.reset(p.embedding, p.bank);
  prepare_outside(p.embedding, p.bank, o, t);
  PathTape pt;
  auto v = aggregate_path(p.embedding, p.bank, t.cache, path, pt);
  return {v.begin(), v.end()};
}

void expect_near(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(VertexAttention, IdenticalNeighborsSplitEvenly) {
  const auto p = make_params(4, 3, 1);
  std::mt19937_64 rng(1);
  const auto e = random_vec(rng, 3), o = random_vec(rng, 3);
  const auto w = vertex_attention(p.bank.item, flat({e, e}), o);
  EXPECT_EQ(w, (std::vector<double>{0.5, 0.5}));
}

TEST(VertexAttention, SingleNeighborGetsAllWeight) {
  const auto p = make_params(4, 3, 2);
  std::mt19937_64 rng(2);
  EXPECT_EQ(vertex_attention(p.bank.query, random_vec(rng, 3), random_vec(rng, 3)), std::vector<double>{1.0});
}

TEST(VertexAttention, MatchesScalarOracleForThreeNeighbors) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = make_params(4, 5, seed);
    std::mt19937_64 rng(seed);
    const std::vector<std::vector<double>> keys{random_vec(rng, 5), random_vec(rng, 5), random_vec(rng, 5)};
    const auto o = random_vec(rng, 5);
    expect_near(vertex_attention(p.bank.location, flat(keys), o), oracle::weights(p.bank.location, keys, o), 1e-12);
  }
}

TEST(VertexAttention, EmptyNeighborhoodThrows) {
  const auto p = make_params(4, 3, 1);
  EXPECT_THROW(vertex_attention(p.bank.item, {}, std::vector<double>(3, 0.0)), EmptyNeighborhoodError);
}

TEST(VertexAttention, PermutingNeighborsPermutesWeights) {
  const auto p = make_params(4, 4, 3);
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> keys;
  for (int i = 0; i < 6; ++i) keys.push_back(random_vec(rng, 4));
  const auto o = random_vec(rng, 4);
  const auto w = vertex_attention(p.bank.user, flat(keys), o);
  std::vector<std::size_t> perm(keys.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<double>> shuffled;
  for (auto i : perm) shuffled.push_back(keys[i]);
  const auto ws = vertex_attention(p.bank.user, flat(shuffled), o);
  for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_NEAR(ws[k], w[perm[k]], 1e-15);
}

TEST(VertexAttention, RaisingTheOutputBiasLeavesActiveWeightsUnchanged) {
  auto p = make_params(4, 4, 4);
  std::mt19937_64 rng(4);
  // Make every logit sit on the linear side of the relu, then shift them all.
  p.bank.item.biases[1](0, 0) = 50.0;
  const auto keys = flat({random_vec(rng, 4), random_vec(rng, 4), random_vec(rng, 4)});
  const auto o = random_vec(rng, 4);
  const auto before = vertex_attention(p.bank.item, keys, o);
  p.bank.item.biases[1](0, 0) += 7.25;
  expect_near(vertex_attention(p.bank.item, keys, o), before, 1e-12);
  EXPECT_NEAR(std::accumulate(before.begin(), before.end(), 0.0), 1.0, 1e-12);
}

TEST(AggregatePath, UciSingleItemIsThatItemsEmbedding) {
  const auto p = make_params(10, 4, 5);
  ResolvedPath path{MetaPathKind::uci_self, units({1}), {}, {units({3, 7})}};
  const OutsideContext o{units({2}), units({4}), units({1}), units({5})};
  expect_near(path_vector(p, path, o), embed_vertex(p.embedding, units({3, 7})), 1e-15);
}

TEST(AggregatePath, DuplicatedItemEqualsSingleItem) {
  const auto p = make_params(10, 4, 6);
  const OutsideContext o{units({2}), units({4}), units({1}), units({5})};
  ResolvedPath once{MetaPathKind::uci_sim, units({9}), {}, {units({6})}};
  ResolvedPath twice{MetaPathKind::uci_sim, units({9}), {}, {units({6}), units({6})}};
  expect_near(path_vector(p, twice, o), path_vector(p, once, o), 1e-15);
}

TEST(AggregatePath, UcqiTwoByTwoMatchesHandUnrolledComputation) {
  const auto p = make_params(12, 3, 7);
  const OutsideContext o{units({1, 2}), units({3}), units({4}), units({5})};
  ResolvedPath path;
  path.kind = MetaPathKind::ucqi_self;
  path.context = units({4});
  path.queries = {{units({6}), {units({7}), units({8, 9})}}, {units({10}), {units({11}), units({3})}}};

  const auto& E = p.embedding;
  auto e = [&](const UnitList& u) { return oracle::embed(E, u); };
  const auto eo_item = e(o.item), eo_query = e(o.query);
  std::vector<std::vector<double>> qvec;
  for (const auto& q : path.queries) {
    const auto a = e(q.items[0]), b = e(q.items[1]);
    const auto w = oracle::weights(p.bank.item, {a, b}, eo_item);
    const auto self = e(q.query);
    std::vector<double> v(3);
    for (int c = 0; c < 3; ++c) v[c] = 0.5 * (self[c] + w[0] * a[c] + w[1] * b[c]);
    qvec.push_back(v);
  }
  const auto wq = oracle::weights(p.bank.query, qvec, eo_query);
  std::vector<double> want(3);
  for (int c = 0; c < 3; ++c) want[c] = wq[0] * qvec[0][c] + wq[1] * qvec[1][c];
  expect_near(path_vector(p, path, o), want, 1e-12);
}

TEST(AggregatePath, RandomPathsMatchOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = make_params(20, 6, trial);
    const auto kind = static_cast<MetaPathKind>(trial % kMetaPathKinds);
    const auto path = fixtures::random_path(rng, 20, kind);
    const auto o = fixtures::random_outside(rng, 20);
    expect_near(path_vector(p, path, o),
                oracle::path(p.embedding, p.bank, path, oracle::embed(p.embedding, o.item),
                             oracle::embed(p.embedding, o.query)),
                1e-12);
  }
}

TEST(UserRepresentation, NoPathsMeansBothTowersAbsent) {
  const auto p = make_params(10, 4, 9);
  RepresentationTape t;
  user_representation(p.embedding, p.bank, ResolvedGraph{}, OutsideContext{units({1}), units({2}), units({3}), units({4})}, t);
  EXPECT_FALSE(t.self.present);
  EXPECT_FALSE(t.sim.present);
}

TEST(UserRepresentation, SingleSelfPathIsThePathVector) {
  const auto p = make_params(10, 4, 10);
  std::mt19937_64 rng(10);
  ResolvedGraph g;
  g.self_paths.push_back(fixtures::random_path(rng, 10, MetaPathKind::ucqi_self));
  const auto o = fixtures::random_outside(rng, 10);
  RepresentationTape t;
  user_representation(p.embedding, p.bank, g, o, t);
  ASSERT_TRUE(t.self.present);
  EXPECT_FALSE(t.sim.present);
  expect_near(t.self.rep, path_vector(p, g.self_paths[0], o), 1e-15);
}

TEST(UserRepresentation, IdenticalContextsAverageThePaths) {
  const auto p = make_params(10, 4, 11);
  std::mt19937_64 rng(11);
  ResolvedGraph g;
  for (int i = 0; i < 2; ++i) {
    auto path = fixtures::random_path(rng, 10, MetaPathKind::uci_self);
    path.context = units({3, 5});
    g.self_paths.push_back(path);
  }
  const auto o = fixtures::random_outside(rng, 10);
  RepresentationTape t;
  user_representation(p.embedding, p.bank, g, o, t);
  const auto a = path_vector(p, g.self_paths[0], o), b = path_vector(p, g.self_paths[1], o);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(t.self.rep[c], 0.5 * (a[c] + b[c]), 1e-15);
}

TEST(UserRepresentation, RandomGraphsMatchOracle) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const auto p = make_params(25, 5, 100 + trial);
    const auto g = fixtures::random_graph(rng, 25, trial % 5, (trial / 5) % 4);
    const auto o = fixtures::random_outside(rng, 25);
    RepresentationTape t;
    user_representation(p.embedding, p.bank, g, o, t);
    const auto want = oracle::represent(p.embedding, p.bank, g, o);
    ASSERT_EQ(t.self.present, want.self.has_value());
    ASSERT_EQ(t.sim.present, want.sim.has_value());
    if (want.self) expect_near(t.self.rep, *want.self, 1e-12);
    if (want.sim) expect_near(t.sim.rep, *want.sim, 1e-12);
  }
}

TEST(UserRepresentation, ReusedCacheGivesSameResult) {
  std::mt19937_64 rng(13);
  const auto p = make_params(25, 5, 13);
  RepresentationTape t;
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = fixtures::random_graph(rng, 25, 3, 2);
    const auto o = fixtures::random_outside(rng, 25);
    user_representation(p.embedding, p.bank, g, o, t, true, trial > 0);
    const auto want = oracle::represent(p.embedding, p.bank, g, o);
    expect_near(t.self.rep, *want.self, 1e-12);
    expect_near(t.sim.rep, *want.sim, 1e-12);
  }
}

TEST(UserRepresentation, ShufflingPathsDoesNotChangeTheRepresentation) {
  std::mt19937_64 rng(14);
  const auto p = make_params(25, 5, 14);
  auto g = fixtures::random_graph(rng, 25, 4, 3);
  const auto o = fixtures::random_outside(rng, 25);
  RepresentationTape a, b;
  user_representation(p.embedding, p.bank, g, o, a);
  std::reverse(g.self_paths.begin(), g.self_paths.end());
  std::rotate(g.sim_paths.begin(), g.sim_paths.begin() + 1, g.sim_paths.end());
  user_representation(p.embedding, p.bank, g, o, b);
  expect_near(a.self.rep, b.self.rep, 1e-14);
  expect_near(a.sim.rep, b.sim.rep, 1e-14);
}

class AttentionGradients : public ::testing::TestWithParam<int> {};

TEST_P(AttentionGradients, MatchFiniteDifferences) {
  const int seed = GetParam();
  auto p = make_params(14, 4, seed, 5);
  auto grads = p.zeros_like();
  std::mt19937_64 rng(seed);
  const auto g = fixtures::random_graph(rng, 14, 2, 2);
  const auto o = fixtures::random_outside(rng, 14);
  const auto r_self = random_vec(rng, 4), r_sim = random_vec(rng, 4);
  auto refs = p.bind(grads);
  std::erase_if(refs, [](const nn::ParamRef& r) {
    return !(r.name == "embedding" || r.name.starts_with("attention."));
  });
  auto loss = [&] {
    RepresentationTape t;
    user_representation(p.embedding, p.bank, g, o, t);
    double s = 0;
    for (int c = 0; c < 4; ++c) s += r_self[c] * t.self.rep[c] + r_sim[c] * t.sim.rep[c];
    return s;
  };
  auto compute = [&] {
    RepresentationTape t;
    user_representation(p.embedding, p.bank, g, o, t);
    user_representation_backward(p.embedding, p.bank, g, o, t, r_self, r_sim, grads.embedding, grads.bank);
  };
  const auto report = nn::check_gradients(loss, compute, refs);
  EXPECT_TRUE(report.passed) << report.worst_param << "[" << report.worst_index
                             << "] rel err " << report.max_relative_error;
  EXPECT_GT(report.checked, 100u);
}

INSTANTIATE_TEST_SUITE_P(Seeds, AttentionGradients, ::testing::Values(1, 2, 3));

TEST(AttentionBackward, ZeroUpstreamGivesZeroGradients) {
  const auto p = make_params(14, 4, 21);
  auto grads = p.zeros_like();
  std::mt19937_64 rng(21);
  const auto g = fixtures::random_graph(rng, 14, 2, 2);
  const auto o = fixtures::random_outside(rng, 14);
  RepresentationTape t;
  user_representation(p.embedding, p.bank, g, o, t);
  const std::vector<double> zero(4, 0.0);
  user_representation_backward(p.embedding, p.bank, g, o, t, zero, zero, grads.embedding, grads.bank);
  ChgatParams::visit(grads, [](const std::string& name, const nn::Matrix& m, bool, bool) {
    for (double v : m.values()) EXPECT_EQ(v, 0.0) << name;
  });
}

TEST(AttentionBackward, UnitsOutsideTheGraphGetNoGradient) {
  const auto p = make_params(30, 4, 22);
  auto grads = p.zeros_like();
  std::mt19937_64 rng(22);
  // Everything draws from units below 15; rows 15.. must stay untouched.
  const auto g = fixtures::random_graph(rng, 15, 3, 2);
  const auto o = fixtures::random_outside(rng, 15);
  RepresentationTape t;
  user_representation(p.embedding, p.bank, g, o, t);
  const auto r = random_vec(rng, 4);
  user_representation_backward(p.embedding, p.bank, g, o, t, r, r, grads.embedding, grads.bank);
  for (std::size_t k = 15; k < 30; ++k)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(grads.embedding(k, c), 0.0);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(grads.embedding(0, c), 0.0);
}
