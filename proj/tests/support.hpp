#pragma once

// Shared fixtures for the unit tests.

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "chgat/attention.hpp"
#include "chgat/model.hpp"
#include "chgat/world.hpp"

namespace chgat::fixtures {

// A world small enough to generate and train on in well under a second.
inline WorldConfig tiny_world(std::uint64_t seed = 5) {
  WorldConfig c;
  c.users = 40;
  c.queries = 24;
  c.items = 48;
  c.categories = 6;
  c.train_requests = 4;
  c.eval_requests = 2;
  c.seed = seed;
  return c;
}

inline UnitList units(std::initializer_list<KnowledgeId> ks, std::size_t k_max = 5) {
  UnitList u(ks);
  u.resize(k_max, kPaddingUnit);
  return u;
}

// Random unit list with 1..3 active units over [1, vocab).
inline UnitList random_units(std::mt19937_64& rng, std::size_t vocab, std::size_t k_max = 5) {
  std::uniform_int_distribution<std::size_t> n(1, 3);
  std::uniform_int_distribution<KnowledgeId> k(1, static_cast<KnowledgeId>(vocab - 1));
  UnitList u;
  const std::size_t count = n(rng);
  for (std::size_t i = 0; i < count; ++i) u.push_back(k(rng));
  u.resize(k_max, kPaddingUnit);
  return u;
}

inline ResolvedPath random_path(std::mt19937_64& rng, std::size_t vocab, MetaPathKind kind) {
  std::uniform_int_distribution<std::size_t> width(1, 3);
  ResolvedPath p;
  p.kind = kind;
  p.context = random_units(rng, vocab);
  if (has_query_layer(kind)) {
    const std::size_t nq = width(rng);
    for (std::size_t q = 0; q < nq; ++q) {
      ResolvedQuery rq;
      rq.query = random_units(rng, vocab);
      const std::size_t ni = width(rng);
      for (std::size_t i = 0; i < ni; ++i) rq.items.push_back(random_units(rng, vocab));
      p.queries.push_back(std::move(rq));
    }
  } else {
    const std::size_t ni = width(rng);
    for (std::size_t i = 0; i < ni; ++i) p.items.push_back(random_units(rng, vocab));
  }
  return p;
}

inline ResolvedGraph random_graph(std::mt19937_64& rng, std::size_t vocab, std::size_t self_paths,
                                  std::size_t sim_paths) {
  ResolvedGraph g;
  for (std::size_t i = 0; i < self_paths; ++i) {
    g.self_paths.push_back(random_path(rng, vocab, i % 2 ? MetaPathKind::uci_self : MetaPathKind::ucqi_self));
  }
  for (std::size_t i = 0; i < sim_paths; ++i) {
    g.sim_paths.push_back(random_path(rng, vocab, i % 2 ? MetaPathKind::uci_sim : MetaPathKind::ucqi_sim));
  }
  g.portrait = random_units(rng, vocab);
  return g;
}

inline OutsideContext random_outside(std::mt19937_64& rng, std::size_t vocab) {
  return {random_units(rng, vocab), random_units(rng, vocab), random_units(rng, vocab), random_units(rng, vocab)};
}

// The small gradient-check fixture: d=4, vocab 12, narrow layers, three
// examples covering both towers, a self-only graph and an empty graph.
struct SmallFixture {
  ModelShape shape;
  ChgatParams params;
  std::vector<Example> examples;
};

inline SmallFixture small_fixture(std::uint64_t seed = 1) {
  SmallFixture f;
  f.shape.vocab = 12;
  f.shape.d = 4;
  f.shape.attr_width = 3;
  f.shape.attr_hidden = 4;
  f.shape.attention_hidden = 5;
  f.shape.tower_hidden = {6, 3};
  f.params = ChgatParams::init(f.shape, 0.7, 0.05, seed);
  std::mt19937_64 rng(seed + 100);
  std::uniform_real_distribution<double> attr(-1.0, 1.0);
  const std::size_t self_counts[] = {3, 2, 0};
  const std::size_t sim_counts[] = {2, 0, 0};
  for (int i = 0; i < 3; ++i) {
    Example ex;
    if (self_counts[i] + sim_counts[i] > 0) {
      ex.graph = std::make_shared<const ResolvedGraph>(random_graph(rng, f.shape.vocab, self_counts[i], sim_counts[i]));
    }
    ex.outside = random_outside(rng, f.shape.vocab);
    for (std::size_t a = 0; a < f.shape.attr_width; ++a) ex.attributes.push_back(attr(rng));
    ex.label = i % 2;
    ex.group = 0;
    f.examples.push_back(std::move(ex));
  }
  return f;
}

}  // namespace chgat::fixtures
