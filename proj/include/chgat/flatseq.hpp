#pragma once

// Fixed-position flattening of one meta-path family, so a serving process
// can read "queries of context j" or "items of query (j, k)" by offset.
//
// UCQI layout (n1 contexts, n2 queries each, n3 items per query):
//   slot 0                                       user id
//   slot j                       (1 <= j <= n1)  context j
//   slot n1 + (j-1) n2 + k       (1 <= k <= n2)  query k of context j
//   slot 1 + n1 + n1 n2 + ((j-1) n2 + k-1) n3 + m   (0 <= m < n3)  items
// UCI kinds have no query layer; items of context j sit at
//   slot 1 + n1 + (j-1) n3 + m.
// Empty slots hold 0, which is also the knowledge padding unit.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "chgat/error.hpp"
#include "chgat/graph.hpp"
#include "chgat/ids.hpp"

namespace chgat {

struct FlatLayout {
  std::size_t n1 = 4;
  std::size_t n2 = 3;  // 0 for UCI kinds
  std::size_t n3 = 5;

  static FlatLayout for_kind(MetaPathKind kind, const GraphConfig& cfg) {
    const std::size_t contexts = is_sim(kind) ? cfg.sim_cap : cfg.n1;
    return {contexts, has_query_layer(kind) ? cfg.n2 : 0, cfg.n3};
  }

  bool has_queries() const { return n2 > 0; }

  std::size_t total_len() const {
    if (has_queries()) return 1 + n1 + n1 * n2 + n1 * n2 * n3;
    return 1 + n1 + n1 * n3;
  }

  void validate() const {
    if (n1 == 0 || n3 == 0) throw ConfigError("flat layout needs n1 > 0 and n3 > 0");
  }

  // 1-based j and k, 0-based m.
  std::size_t context_slot(std::size_t j) const { return j; }
  std::size_t query_slot(std::size_t j, std::size_t k) const { return n1 + (j - 1) * n2 + k; }
  std::size_t item_slot(std::size_t j, std::size_t k, std::size_t m) const {
    return 1 + n1 + n1 * n2 + ((j - 1) * n2 + (k - 1)) * n3 + m;
  }
  std::size_t direct_item_slot(std::size_t j, std::size_t m) const { return 1 + n1 + (j - 1) * n3 + m; }

  friend bool operator==(const FlatLayout&, const FlatLayout&) = default;
};

struct FlatSequence {
  FlatLayout layout;
  std::vector<std::uint32_t> slots;

  VertexId at(std::size_t i) const { return VertexId(slots.at(i)); }
  friend bool operator==(const FlatSequence&, const FlatSequence&) = default;
};

// Trees must all be of one kind and already sorted newest first; anything
// past the layout's capacity is dropped.
inline FlatSequence flatten(VertexId user, std::span<const MetaPathTree> trees, const FlatLayout& layout) {
  layout.validate();
  FlatSequence s;
  s.layout = layout;
  s.slots.assign(layout.total_len(), 0);
  s.slots[0] = user.raw();
  const std::size_t contexts = std::min(trees.size(), layout.n1);
  for (std::size_t j = 1; j <= contexts; ++j) {
    const MetaPathTree& t = trees[j - 1];
    if (has_query_layer(t.kind) != layout.has_queries()) throw ConfigError("tree kind does not match the flat layout");
    s.slots[layout.context_slot(j)] = t.context.raw();
    if (layout.has_queries()) {
      const std::size_t nq = std::min(t.queries.size(), layout.n2);
      for (std::size_t k = 1; k <= nq; ++k) {
        const QueryChild& q = t.queries[k - 1];
        s.slots[layout.query_slot(j, k)] = q.query.raw();
        const std::size_t ni = std::min(q.items.size(), layout.n3);
        for (std::size_t m = 0; m < ni; ++m) s.slots[layout.item_slot(j, k, m)] = q.items[m].raw();
      }
    } else {
      const std::size_t ni = std::min(t.items.size(), layout.n3);
      for (std::size_t m = 0; m < ni; ++m) s.slots[layout.direct_item_slot(j, m)] = t.items[m].raw();
    }
  }
  return s;
}

// Rebuilds the trees of `kind`, skipping padding. Recency is not stored;
// trees come back in slot order with recency counting down from n1.
inline std::vector<MetaPathTree> unflatten(const FlatSequence& s, MetaPathKind kind) {
  const FlatLayout& layout = s.layout;
  if (s.slots.size() != layout.total_len()) {
    throw FormatError("flat sequence has " + std::to_string(s.slots.size()) + " slots, layout needs " +
                      std::to_string(layout.total_len()));
  }
  if (has_query_layer(kind) != layout.has_queries()) throw ConfigError("kind does not match the flat layout");
  std::vector<MetaPathTree> trees;
  for (std::size_t j = 1; j <= layout.n1; ++j) {
    const VertexId ctx = s.at(layout.context_slot(j));
    if (ctx.is_padding()) continue;
    MetaPathTree t;
    t.kind = kind;
    t.context = ctx;
    t.recency = static_cast<std::int64_t>(layout.n1 - j);
    if (layout.has_queries()) {
      for (std::size_t k = 1; k <= layout.n2; ++k) {
        const VertexId q = s.at(layout.query_slot(j, k));
        if (q.is_padding()) continue;
        QueryChild child{q, {}};
        for (std::size_t m = 0; m < layout.n3; ++m) {
          const VertexId i = s.at(layout.item_slot(j, k, m));
          if (!i.is_padding()) child.items.push_back(i);
        }
        t.queries.push_back(std::move(child));
      }
    } else {
      for (std::size_t m = 0; m < layout.n3; ++m) {
        const VertexId i = s.at(layout.direct_item_slot(j, m));
        if (!i.is_padding()) t.items.push_back(i);
      }
    }
    trees.push_back(std::move(t));
  }
  return trees;
}

inline constexpr char kFlatMagic[4] = {'F', 'S', 'Q', '1'};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
  return v;
}

}  // namespace detail

// "FSQ1", n1, n2, n3, then total_len ids; all little-endian u32.
inline std::vector<std::uint8_t> encode(const FlatSequence& s) {
  std::vector<std::uint8_t> out(kFlatMagic, kFlatMagic + 4);
  out.reserve(16 + 4 * s.slots.size());
  detail::put_u32(out, static_cast<std::uint32_t>(s.layout.n1));
  detail::put_u32(out, static_cast<std::uint32_t>(s.layout.n2));
  detail::put_u32(out, static_cast<std::uint32_t>(s.layout.n3));
  for (auto v : s.slots) detail::put_u32(out, v);
  return out;
}

inline FlatSequence decode(std::span<const std::uint8_t> bytes, const FlatLayout* expected = nullptr) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kFlatMagic, 4) != 0) throw FormatError("not a flat sequence");
  FlatSequence s;
  s.layout = {detail::get_u32(bytes, 4), detail::get_u32(bytes, 8), detail::get_u32(bytes, 12)};
  if (expected && !(s.layout == *expected)) throw FormatError("flat sequence header does not match the layout");
  if (s.layout.n1 == 0 || s.layout.n3 == 0) throw FormatError("flat sequence header has an empty layer");
  const std::size_t n = s.layout.total_len();
  if (bytes.size() != 16 + 4 * n) throw FormatError("flat sequence length does not match its header");
  s.slots.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.slots[i] = detail::get_u32(bytes, 16 + 4 * i);
  return s;
}

// One slot per line: index, layer, id.
inline void render(std::ostream& os, const FlatSequence& s) {
  const FlatLayout& l = s.layout;
  const std::size_t query_end = l.n1 + l.n1 * l.n2;
  for (std::size_t i = 0; i < s.slots.size(); ++i) {
    const char* layer = i == 0 ? "user" : i <= l.n1 ? "context" : i <= query_end ? "query" : "item";
    os << i << '\t' << layer << '\t' << s.at(i).str() << '\n';
  }
}

// The four per-kind sequences of one user graph, plus the portrait the
// rank stage needs as the sim tower's outside context.
struct FlatGraph {
  VertexId user;
  VertexId portrait;
  std::array<FlatSequence, kMetaPathKinds> kinds;

  friend bool operator==(const FlatGraph&, const FlatGraph&) = default;
};

inline FlatGraph flatten_graph(const UserGraph& g, const GraphConfig& cfg) {
  FlatGraph f;
  f.user = g.user;
  f.portrait = g.portrait;
  for (int k = 0; k < kMetaPathKinds; ++k) {
    const auto kind = static_cast<MetaPathKind>(k);
    const auto& pool = is_sim(kind) ? g.sim_paths : g.self_paths;
    std::vector<MetaPathTree> trees;
    for (const auto& t : pool) {
      if (t.kind == kind) trees.push_back(t);
    }
    f.kinds[k] = flatten(g.user, trees, FlatLayout::for_kind(kind, cfg));
  }
  return f;
}

// Inverse of flatten_graph; kinds come back grouped in enum order, which is
// the order build_self_graph and build_sim_graph produce.
inline UserGraph unflatten_graph(const FlatGraph& f) {
  UserGraph g;
  g.user = f.user;
  g.portrait = f.portrait;
  for (int k = 0; k < kMetaPathKinds; ++k) {
    const auto kind = static_cast<MetaPathKind>(k);
    if (f.kinds[k].at(0) != f.user) throw FormatError("flat sequence belongs to another user");
    auto trees = unflatten(f.kinds[k], kind);
    auto& pool = is_sim(kind) ? g.sim_paths : g.self_paths;
    pool.insert(pool.end(), std::make_move_iterator(trees.begin()), std::make_move_iterator(trees.end()));
  }
  return g;
}

}  // namespace chgat
