#pragma once

// Unified knowledge representation: raw vertices map to short lists of
// shared knowledge units; a vertex embedding is the element-wise mean of
// its unit embeddings.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chgat/error.hpp"
#include "chgat/ids.hpp"
#include "chgat/nn.hpp"

namespace chgat {

using KnowledgeId = std::uint32_t;
using UnitList = std::vector<KnowledgeId>;  // padded with 0 to k_max

inline constexpr KnowledgeId kPaddingUnit = 0;
inline constexpr std::size_t kDefaultKMax = 5;

class KnowledgeTable {
 public:
  explicit KnowledgeTable(std::size_t k_max = kDefaultKMax) : k_max_(k_max) {
    if (k_max_ == 0) throw ConfigError("k_max must be positive");
  }

  std::size_t k_max() const { return k_max_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<VertexId, UnitList>& entries() const { return entries_; }

  // Units are deduplicated and truncated to k_max by ascending unit id.
  void add(VertexId raw, std::vector<KnowledgeId> units) {
    if (raw.is_padding()) throw DataError("cannot map the padding vertex");
    if (entries_.count(raw)) throw DataError("duplicate knowledge entry for " + raw.str());
    std::sort(units.begin(), units.end());
    units.erase(std::unique(units.begin(), units.end()), units.end());
    if (!units.empty() && units.front() == kPaddingUnit) units.erase(units.begin());
    if (units.empty()) throw DataError("knowledge entry for " + raw.str() + " has no units");
    if (units.size() > k_max_) units.resize(k_max_);
    vocab_size_ = std::max<std::size_t>(vocab_size_, units.back() + 1);
    entries_.emplace(raw, std::move(units));
  }

  // Raise the vocabulary to cover units that no vertex references yet.
  void reserve_vocab(std::size_t vocab) { vocab_size_ = std::max(vocab_size_, vocab); }

  bool contains(VertexId raw) const { return entries_.count(raw) != 0; }

  // Unknown vertices resolve to all padding (cold start).
  UnitList resolve(VertexId raw) const {
    UnitList out(k_max_, kPaddingUnit);
    auto it = entries_.find(raw);
    if (it != entries_.end()) std::copy(it->second.begin(), it->second.end(), out.begin());
    return out;
  }

  // Text format: one `raw_id<TAB>k1,k2,...` record per line.
  void save(std::ostream& os) const {
    for (const auto& [raw, units] : entries_) {
      os << raw.str() << '\t';
      for (std::size_t i = 0; i < units.size(); ++i) os << (i ? "," : "") << units[i];
      os << '\n';
    }
  }

  static KnowledgeTable load(std::istream& is, std::size_t k_max = kDefaultKMax) {
    KnowledgeTable table(k_max);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw DataError("knowledge line " + std::to_string(lineno) + ": missing tab");
      const VertexId raw = VertexId::parse(std::string_view(line).substr(0, tab));
      std::vector<KnowledgeId> units;
      std::stringstream ss(line.substr(tab + 1));
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        try {
          units.push_back(static_cast<KnowledgeId>(std::stoul(tok)));
        } catch (const std::exception&) {
          throw DataError("knowledge line " + std::to_string(lineno) + ": bad unit '" + tok + "'");
        }
      }
      if (table.contains(raw)) {
        throw DataError("knowledge line " + std::to_string(lineno) + ": duplicate raw id " + raw.str());
      }
      table.add(raw, std::move(units));
    }
    return table;
  }

 private:
  std::size_t k_max_;
  std::size_t vocab_size_ = 1;  // unit 0 always exists
  std::map<VertexId, UnitList> entries_;
};

// ---------------------------------------------------------------------------
// Embedding of units and vertices

inline nn::Matrix init_knowledge_embedding(std::size_t vocab, std::size_t d, std::mt19937_64& rng) {
  nn::Matrix table(vocab, d);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t r = 1; r < vocab; ++r) {
    for (double& v : table.row(r)) v = dist(rng);
  }
  return table;
}

inline std::size_t active_units(std::span<const KnowledgeId> units) {
  return static_cast<std::size_t>(std::count_if(units.begin(), units.end(), [](KnowledgeId k) { return k != 0; }));
}

// Element-wise mean over non-padding units; all-padding gives zeros.
inline void embed_vertex(const nn::Matrix& table, std::span<const KnowledgeId> units, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  std::size_t n = 0;
  for (KnowledgeId k : units) {
    if (k == kPaddingUnit) continue;
    if (k >= table.rows()) throw DataError("knowledge id " + std::to_string(k) + " outside the vocabulary");
    auto row = table.row(k);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
    ++n;
  }
  if (n > 1) {
    const double inv = 1.0 / static_cast<double>(n);
    for (double& v : out) v *= inv;
  }
}

inline std::vector<double> embed_vertex(const nn::Matrix& table, std::span<const KnowledgeId> units) {
  std::vector<double> out(table.cols());
  embed_vertex(table, units, out);
  return out;
}

// Scatters d(loss)/d(vertex embedding) into the unit rows, scaled by
// 1 / (non-padding count).
inline void embed_vertex_backward(nn::Matrix& table_grad, std::span<const KnowledgeId> units,
                                  std::span<const double> grad) {
  const std::size_t n = active_units(units);
  if (n == 0) return;
  const double inv = 1.0 / static_cast<double>(n);
  for (KnowledgeId k : units) {
    if (k == kPaddingUnit) continue;
    auto row = table_grad.row(k);
    for (std::size_t c = 0; c < grad.size(); ++c) row[c] += grad[c] * inv;
  }
}

// ---------------------------------------------------------------------------
// Synthetic knowledge extraction

// Semantic attributes of every raw vertex, standing in for knowledge-graph
// and query-understanding output.
struct Catalog {
  struct Item {
    VertexId id;
    int category = 0;
    int tag = 0;
  };
  struct Query {
    VertexId id;
    int intent = 0;  // category
    int tag = 0;
  };
  struct Context {
    VertexId id;
    int time_bucket = 0;  // 0..3, or 4 when time is not part of the key
    int zone = 0;
    int area = 0;
  };
  struct Portrait {
    VertexId id;
    int age_band = 0;
    int price_band = 0;
    int affinity = 0;
  };
  std::vector<Item> items;
  std::vector<Query> queries;
  std::vector<Context> contexts;
  std::vector<Portrait> portraits;
};

struct KnowledgeConfig {
  int categories = 12;
  int tags = 36;
  int zones = 2;
  int areas = 16;
  int age_bands = 4;
  int price_bands = 3;
  int affinities = 6;
  std::size_t k_max = kDefaultKMax;
  bool share = true;  // false: one private unit per raw vertex
};

// Unit id ranges of the shared vocabulary, in order after the padding unit.
struct UnitLayout {
  KnowledgeId category0, tag0, time0, zone0, area0, age0, price0, affinity0, end;

  explicit UnitLayout(const KnowledgeConfig& c) {
    category0 = 1;
    tag0 = category0 + c.categories;
    time0 = tag0 + c.tags;
    zone0 = time0 + kTimeBuckets;
    area0 = zone0 + c.zones;
    age0 = area0 + c.areas;
    price0 = age0 + c.age_bands;
    affinity0 = price0 + c.price_bands;
    end = affinity0 + c.affinities;
  }
};

// Closed-form vocabulary size of the shared table (padding included).
inline std::size_t synthetic_vocab_size(const KnowledgeConfig& c) { return UnitLayout(c).end; }

inline KnowledgeTable build_synthetic_table(const Catalog& catalog, const KnowledgeConfig& config) {
  KnowledgeTable table(config.k_max);
  if (!config.share) {
    std::vector<VertexId> all;
    for (const auto& v : catalog.items) all.push_back(v.id);
    for (const auto& v : catalog.queries) all.push_back(v.id);
    for (const auto& v : catalog.contexts) all.push_back(v.id);
    for (const auto& v : catalog.portraits) all.push_back(v.id);
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    KnowledgeId next = 1;
    for (VertexId v : all) table.add(v, {next++});
    return table;
  }
  const UnitLayout u(config);
  for (const auto& it : catalog.items) {
    table.add(it.id, {u.category0 + static_cast<KnowledgeId>(it.category), u.tag0 + static_cast<KnowledgeId>(it.tag)});
  }
  for (const auto& q : catalog.queries) {
    table.add(q.id, {u.category0 + static_cast<KnowledgeId>(q.intent), u.tag0 + static_cast<KnowledgeId>(q.tag)});
  }
  for (const auto& c : catalog.contexts) {
    std::vector<KnowledgeId> units{u.zone0 + static_cast<KnowledgeId>(c.zone),
                                   u.area0 + static_cast<KnowledgeId>(c.area)};
    if (c.time_bucket < kTimeBuckets) units.push_back(u.time0 + static_cast<KnowledgeId>(c.time_bucket));
    table.add(c.id, std::move(units));
  }
  for (const auto& p : catalog.portraits) {
    table.add(p.id, {u.age0 + static_cast<KnowledgeId>(p.age_band), u.price0 + static_cast<KnowledgeId>(p.price_band),
                     u.affinity0 + static_cast<KnowledgeId>(p.affinity)});
  }
  table.reserve_vocab(u.end);
  return table;
}

}  // namespace chgat
