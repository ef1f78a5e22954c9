#pragma once

// Planted-context synthetic world. Users belong to taste groups; each group
// prefers one category per context class (zone x time bucket), and a user
// keeps the group preference for a class with probability `loyalty`.
// History sessions and labeled ranking requests are drawn so that a
// candidate in the preferred category is clicked with probability p_hit and
// any other candidate with probability 1 - p_hit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "chgat/attention.hpp"
#include "chgat/error.hpp"
#include "chgat/graph.hpp"
#include "chgat/ids.hpp"
#include "chgat/knowledge.hpp"
#include "chgat/model.hpp"

namespace chgat {

struct WorldConfig {
  std::size_t users = 500;    // P
  std::size_t queries = 120;  // R
  std::size_t items = 300;    // M
  std::size_t contexts = 8;   // N context classes = zones x time buckets
  int categories = 12;
  int tags_per_category = 3;
  int taste_groups = 6;
  int age_bands = 4;
  int price_bands = 3;
  double p_hit = 0.85;
  double loyalty = 0.8;
  double cold_fraction = 0.5;
  double world_km = 20.0;
  int history_days = 28;
  int eval_days = 7;
  std::size_t train_requests = 12;  // per user
  std::size_t eval_requests = 2;   // per user
  std::size_t candidates = 20;
  double match_share = 0.3;
  double active_class_share = 0.7;
  std::size_t max_positives = 2;
  std::size_t negative_ratio = 4;
  double validation_share = 0.1;
  double hard_threshold = 1.5;  // mean self paths below this marks a hard user
  std::uint64_t seed = 7;
  Geography geo;

  int zones() const { return static_cast<int>(contexts / kTimeBuckets); }
  int blocks_per_side() const { return static_cast<int>(std::lround(world_km / geo.block_km)); }
  int areas() const { return blocks_per_side() * blocks_per_side(); }

  void validate() const {
    if (users == 0 || queries == 0 || items == 0) throw ConfigError("user, query and item counts must be positive");
    if (contexts == 0 || contexts % kTimeBuckets != 0) {
      throw ConfigError("context count must be a positive multiple of " + std::to_string(kTimeBuckets));
    }
    if (zones() != geo.zones) throw ConfigError("context count implies " + std::to_string(zones()) + " zones but geography has " + std::to_string(geo.zones));
    if (categories < 2 || tags_per_category < 1 || taste_groups < 1) throw ConfigError("bad category/tag/group counts");
    if (items < static_cast<std::size_t>(categories) || queries < static_cast<std::size_t>(categories)) {
      throw ConfigError("need at least one item and one query per category");
    }
    if (!(p_hit >= 0.5 && p_hit <= 1.0)) throw ConfigError("p_hit must lie in [0.5, 1]");
    if (!(loyalty >= 0.0 && loyalty <= 1.0) || !(cold_fraction >= 0.0 && cold_fraction <= 1.0)) {
      throw ConfigError("loyalty and cold_fraction must lie in [0, 1]");
    }
    if (blocks_per_side() < 2 || std::abs(blocks_per_side() * geo.block_km - world_km) > 1e-9) {
      throw ConfigError("world_km must be a multiple (>= 2) of the block size");
    }
    if (history_days <= 0 || eval_days <= 0 || candidates == 0 || max_positives == 0) {
      throw ConfigError("day and candidate counts must be positive");
    }
  }

  KnowledgeConfig knowledge(std::size_t k_max = kDefaultKMax, bool share = true) const {
    KnowledgeConfig k;
    k.categories = categories;
    k.tags = categories * tags_per_category;
    k.zones = zones();
    k.areas = areas();
    k.age_bands = age_bands;
    k.price_bands = price_bands;
    k.affinities = taste_groups;
    k.k_max = k_max;
    k.share = share;
    return k;
  }
};

struct UserProfile {
  VertexId id;
  VertexId portrait;
  int group = 0;
  int age_band = 0;
  int price_band = 0;
  bool cold = false;
  std::vector<Location> anchors;   // one per zone
  std::vector<int> preference;     // preferred category per context class
  std::vector<int> active_classes;
};

// One labeled (user, live query, candidate item, live context) record.
struct Impression {
  std::uint64_t request_id = 0;
  VertexId user;
  VertexId query;
  VertexId item;
  Location location;
  TimeBucket bucket = TimeBucket::morning;
  VertexId context;
  std::int64_t timestamp = 0;
  int label = 0;
  int day = 0;  // day index within the evaluation week
  std::vector<double> attributes;

  friend bool operator==(const Impression&, const Impression&) = default;
};

// Dense attribute encoding fed to the attribute tower: candidate category
// one-hot, live query intent one-hot, time bucket one-hot, zone one-hot and
// log1p(recent user events) / 4.
struct FeatureSpace {
  static constexpr double kActivityWindowDays = 30.0;  // span of the recent-events count

  int categories = 0;
  int zones = 0;
  std::vector<int> item_category;  // by item index
  std::vector<int> query_intent;   // by query index

  std::size_t width() const { return static_cast<std::size_t>(2 * categories + kTimeBuckets + zones + 1); }

  static FeatureSpace from_catalog(const Catalog& c, int categories, int zones) {
    FeatureSpace f;
    f.categories = categories;
    f.zones = zones;
    for (const auto& it : c.items) {
      if (f.item_category.size() <= it.id.index()) f.item_category.resize(it.id.index() + 1, -1);
      f.item_category[it.id.index()] = it.category;
    }
    for (const auto& q : c.queries) {
      if (f.query_intent.size() <= q.id.index()) f.query_intent.resize(q.id.index() + 1, -1);
      f.query_intent[q.id.index()] = q.intent;
    }
    return f;
  }

  int category_of(VertexId item) const {
    if (item.type() != VertexType::item || item.index() >= item_category.size()) return -1;
    return item_category[item.index()];
  }
  int intent_of(VertexId query) const {
    if (query.type() != VertexType::query || query.index() >= query_intent.size()) return -1;
    return query_intent[query.index()];
  }

  // Unknown ids and zones leave their block at zero.
  std::vector<double> encode(VertexId query, VertexId item, TimeBucket bucket, int zone, std::size_t user_events) const {
    std::vector<double> a(width(), 0.0);
    const int cat = category_of(item);
    if (cat >= 0 && cat < categories) a[static_cast<std::size_t>(cat)] = 1.0;
    const int intent = intent_of(query);
    if (intent >= 0 && intent < categories) a[static_cast<std::size_t>(categories + intent)] = 1.0;
    a[static_cast<std::size_t>(2 * categories) + static_cast<std::size_t>(bucket)] = 1.0;
    if (zone >= 0 && zone < zones) a[static_cast<std::size_t>(2 * categories + kTimeBuckets + zone)] = 1.0;
    a.back() = std::log1p(static_cast<double>(user_events)) / 4.0;
    return a;
  }
};

struct World {
  WorldConfig config;
  Catalog catalog;
  std::vector<UserProfile> users;
  std::vector<BehaviorEvent> events;
  PortraitLookup portraits;
  std::vector<Impression> train;
  std::vector<Impression> validation;
  std::vector<Impression> test;  // the evaluation week

  FeatureSpace features() const { return FeatureSpace::from_catalog(catalog, config.categories, config.zones()); }

  BehaviorStore store() const { return BehaviorStore(events, portraits, config.geo); }

  const UserProfile* profile(VertexId user) const {
    if (user.type() != VertexType::user || user.index() >= users.size()) return nullptr;
    return &users[user.index()];
  }
};

namespace detail {

inline std::int64_t draw_timestamp(int day, TimeBucket bucket, std::mt19937_64& rng) {
  static constexpr int kSpan[kTimeBuckets] = {6, 4, 6, 8};  // hours per bucket
  const int start = bucket_start_hour(bucket);
  const int hour = (start + std::uniform_int_distribution<int>(0, kSpan[static_cast<int>(bucket)] - 1)(rng)) % 24;
  // Night hours after midnight belong to the same night (next calendar day).
  const int day_offset = (bucket == TimeBucket::night && hour < start) ? 1 : 0;
  const int minute = std::uniform_int_distribution<int>(0, 59)(rng);
  const int second = std::uniform_int_distribution<int>(0, 59)(rng);
  return (static_cast<std::int64_t>(day) + day_offset) * kSecondsPerDay + hour * 3600 + minute * 60 + second;
}

inline Location jitter(Location anchor, double cell_km, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.4 * cell_km, 0.4 * cell_km);
  return {anchor.x + d(rng), anchor.y + d(rng)};
}

inline int other_category(int avoid, int categories, std::mt19937_64& rng) {
  int c = std::uniform_int_distribution<int>(0, categories - 2)(rng);
  return c >= avoid ? c + 1 : c;
}

inline Interaction draw_interaction(std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < 0.8) return Interaction::click;
  return u < 0.9 ? Interaction::add_cart : Interaction::purchase;
}

}  // namespace detail

inline VertexId portrait_id(int age_band, int price_band, int affinity, const WorldConfig& c) {
  return VertexId::portrait(static_cast<std::uint32_t>((age_band * c.price_bands + price_band) * c.taste_groups + affinity));
}

inline World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  World w;
  w.config = cfg;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int C = cfg.categories;
  const int Z = cfg.zones();
  const int B = cfg.blocks_per_side();
  const Geography& geo = cfg.geo;

  // Catalog: items and queries cycle through categories.
  std::vector<std::vector<VertexId>> items_of(static_cast<std::size_t>(C));
  std::vector<std::vector<VertexId>> queries_of(static_cast<std::size_t>(C));
  for (std::size_t j = 0; j < cfg.items; ++j) {
    const int cat = static_cast<int>(j % static_cast<std::size_t>(C));
    const int tag = cat * cfg.tags_per_category + std::uniform_int_distribution<int>(0, cfg.tags_per_category - 1)(rng);
    const auto id = VertexId::item(static_cast<std::uint32_t>(j));
    w.catalog.items.push_back({id, cat, tag});
    items_of[static_cast<std::size_t>(cat)].push_back(id);
  }
  for (std::size_t j = 0; j < cfg.queries; ++j) {
    const int cat = static_cast<int>(j % static_cast<std::size_t>(C));
    const int tag = cat * cfg.tags_per_category + std::uniform_int_distribution<int>(0, cfg.tags_per_category - 1)(rng);
    const auto id = VertexId::query(static_cast<std::uint32_t>(j));
    w.catalog.queries.push_back({id, cat, tag});
    queries_of[static_cast<std::size_t>(cat)].push_back(id);
  }
  for (int a = 0; a < cfg.age_bands; ++a) {
    for (int p = 0; p < cfg.price_bands; ++p) {
      for (int g = 0; g < cfg.taste_groups; ++g) w.catalog.portraits.push_back({portrait_id(a, p, g, cfg), a, p, g});
    }
  }
  auto pick = [&](const std::vector<VertexId>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };

  // Taste groups: a preferred category per context class.
  const auto classes = static_cast<int>(cfg.contexts);
  std::vector<std::vector<int>> group_pref(static_cast<std::size_t>(cfg.taste_groups));
  for (auto& g : group_pref) {
    for (int k = 0; k < classes; ++k) g.push_back(std::uniform_int_distribution<int>(0, C - 1)(rng));
  }

  // Blocks of each zone, for anchor placement.
  std::vector<std::vector<std::pair<int, int>>> blocks_of(static_cast<std::size_t>(Z));
  for (int bx = 0; bx < B; ++bx) {
    for (int by = 0; by < B; ++by) blocks_of[static_cast<std::size_t>((bx + by) % Z)].push_back({bx, by});
  }
  const int cells_per_block = static_cast<int>(std::lround(geo.block_km / geo.cell_km));

  for (std::size_t u = 0; u < cfg.users; ++u) {
    UserProfile p;
    p.id = VertexId::user(static_cast<std::uint32_t>(u));
    p.group = std::uniform_int_distribution<int>(0, cfg.taste_groups - 1)(rng);
    p.age_band = std::uniform_int_distribution<int>(0, cfg.age_bands - 1)(rng);
    p.price_band = std::uniform_int_distribution<int>(0, cfg.price_bands - 1)(rng);
    p.portrait = portrait_id(p.age_band, p.price_band, p.group, cfg);
    p.cold = unit(rng) < cfg.cold_fraction;
    for (int z = 0; z < Z; ++z) {
      const auto& bl = blocks_of[static_cast<std::size_t>(z)];
      const auto [bx, by] = bl[std::uniform_int_distribution<std::size_t>(0, bl.size() - 1)(rng)];
      const int cx = bx * cells_per_block + std::uniform_int_distribution<int>(1, cells_per_block - 2)(rng);
      const int cy = by * cells_per_block + std::uniform_int_distribution<int>(1, cells_per_block - 2)(rng);
      p.anchors.push_back(geo.cell_center({static_cast<std::uint32_t>(cx), static_cast<std::uint32_t>(cy)}));
    }
    for (int k = 0; k < classes; ++k) {
      const int g = group_pref[static_cast<std::size_t>(p.group)][static_cast<std::size_t>(k)];
      p.preference.push_back(unit(rng) < cfg.loyalty ? g : std::uniform_int_distribution<int>(0, C - 1)(rng));
    }
    std::vector<int> all(static_cast<std::size_t>(classes));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    const int active = std::min(classes, std::uniform_int_distribution<int>(3, 4)(rng));
    p.active_classes.assign(all.begin(), all.begin() + active);
    std::sort(p.active_classes.begin(), p.active_classes.end());
    w.portraits[p.id] = p.portrait;
    w.users.push_back(std::move(p));
  }

  // History sessions in days [0, history_days).
  auto session = [&](const UserProfile& p, int klass) {
    const int zone = klass / kTimeBuckets;
    const auto bucket = static_cast<TimeBucket>(klass % kTimeBuckets);
    const int day = std::uniform_int_distribution<int>(0, cfg.history_days - 1)(rng);
    std::int64_t ts = detail::draw_timestamp(day, bucket, rng);
    const Location loc = detail::jitter(p.anchors[static_cast<std::size_t>(zone)], geo.cell_km, rng);
    const VertexId ctx = geo.context_key(loc, bucket);
    const int pref = p.preference[static_cast<std::size_t>(klass)];
    const int target = unit(rng) < cfg.p_hit ? pref : detail::other_category(pref, C, rng);
    const bool searched = unit(rng) < 0.6;
    const VertexId query = searched ? pick(queries_of[static_cast<std::size_t>(target)]) : VertexId();
    const int clicks = searched ? std::uniform_int_distribution<int>(1, 3)(rng) : std::uniform_int_distribution<int>(1, 2)(rng);
    for (int c = 0; c < clicks; ++c) {
      w.events.push_back({p.id, ts, loc, ctx, query, pick(items_of[static_cast<std::size_t>(target)]),
                          detail::draw_interaction(rng)});
      ts += 60;
    }
  };
  for (const auto& p : w.users) {
    if (p.cold) {
      if (unit(rng) < 0.5) session(p, std::uniform_int_distribution<int>(0, classes - 1)(rng));
      continue;
    }
    for (int klass : p.active_classes) {
      const int n = std::uniform_int_distribution<int>(3, 6)(rng);
      for (int s = 0; s < n; ++s) session(p, klass);
    }
  }
  std::stable_sort(w.events.begin(), w.events.end(),
                   [](const BehaviorEvent& a, const BehaviorEvent& b) { return a.timestamp < b.timestamp; });

  // Ranking requests in the evaluation week.
  const FeatureSpace features = FeatureSpace::from_catalog(w.catalog, C, Z);
  std::unordered_map<VertexId, std::vector<std::int64_t>> user_times;
  for (const auto& e : w.events) user_times[e.user].push_back(e.timestamp);
  const double window_days = FeatureSpace::kActivityWindowDays;
  auto recent_events = [&](VertexId user, std::int64_t now) {
    std::size_t n = 0;
    for (auto t : user_times[user]) n += (t < now && t >= now - static_cast<std::int64_t>(window_days * kSecondsPerDay)) ? 1 : 0;
    return n;
  };
  std::uint64_t next_request = 0;
  auto request = [&](const UserProfile& p, std::vector<Impression>& out) {
    const int klass = (!p.cold && unit(rng) < cfg.active_class_share)
                          ? p.active_classes[std::uniform_int_distribution<std::size_t>(0, p.active_classes.size() - 1)(rng)]
                          : std::uniform_int_distribution<int>(0, classes - 1)(rng);
    const int zone = klass / kTimeBuckets;
    const auto bucket = static_cast<TimeBucket>(klass % kTimeBuckets);
    const int day = std::uniform_int_distribution<int>(0, cfg.eval_days - 1)(rng);
    const std::int64_t ts = detail::draw_timestamp(cfg.history_days + day, bucket, rng);
    const Location loc = detail::jitter(p.anchors[static_cast<std::size_t>(zone)], geo.cell_km, rng);
    const VertexId query = VertexId::query(std::uniform_int_distribution<std::uint32_t>(0, static_cast<std::uint32_t>(cfg.queries - 1))(rng));
    const int pref = p.preference[static_cast<std::size_t>(klass)];
    std::vector<VertexId> cands;
    std::vector<int> labels;
    std::set<VertexId> used;
    while (cands.size() < cfg.candidates && used.size() < cfg.items) {
      const bool match = unit(rng) < cfg.match_share;
      const int cat = match ? pref : detail::other_category(pref, C, rng);
      const VertexId item = pick(items_of[static_cast<std::size_t>(cat)]);
      if (!used.insert(item).second) continue;
      cands.push_back(item);
      labels.push_back(unit(rng) < (match ? cfg.p_hit : 1.0 - cfg.p_hit) ? 1 : 0);
    }
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < cands.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    if (pos.size() > cfg.max_positives) pos.resize(cfg.max_positives);
    if (neg.size() > cfg.negative_ratio * pos.size()) neg.resize(cfg.negative_ratio * pos.size());
    if (pos.empty()) return;
    std::vector<std::size_t> keep(pos);
    keep.insert(keep.end(), neg.begin(), neg.end());
    std::sort(keep.begin(), keep.end());
    const std::uint64_t rid = next_request++;
    const std::size_t n_events = recent_events(p.id, ts);
    const VertexId ctx = geo.context_key(loc, bucket);
    for (auto i : keep) {
      Impression imp;
      imp.request_id = rid;
      imp.user = p.id;
      imp.query = query;
      imp.item = cands[i];
      imp.location = loc;
      imp.bucket = bucket;
      imp.context = ctx;
      imp.timestamp = ts;
      imp.label = labels[i];
      imp.day = day;
      imp.attributes = features.encode(query, cands[i], bucket, geo.zone_of(loc), n_events);
      out.push_back(std::move(imp));
    }
  };
  std::vector<Impression> train_all;
  for (const auto& p : w.users) {
    for (std::size_t r = 0; r < cfg.train_requests; ++r) request(p, train_all);
  }
  for (const auto& p : w.users) {
    for (std::size_t r = 0; r < cfg.eval_requests; ++r) request(p, w.test);
  }

  // Validation carve-out by request.
  std::set<std::uint64_t> train_ids;
  for (const auto& imp : train_all) train_ids.insert(imp.request_id);
  std::vector<std::uint64_t> ids(train_ids.begin(), train_ids.end());
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_share * static_cast<double>(ids.size())));
  const std::set<std::uint64_t> val_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  for (auto& imp : train_all) (val_ids.count(imp.request_id) ? w.validation : w.train).push_back(std::move(imp));

  // Context vertices seen anywhere.
  std::set<VertexId> contexts;
  for (const auto& e : w.events) contexts.insert(e.context);
  for (const auto* set : {&w.train, &w.validation, &w.test}) {
    for (const auto& imp : *set) contexts.insert(imp.context);
  }
  for (VertexId c : contexts) {
    const auto cell = Geography::context_cell(c);
    const Location center = geo.cell_center(cell);
    const auto t = Geography::context_time(c);
    const int bx = std::clamp(static_cast<int>(center.x / geo.block_km), 0, B - 1);
    const int by = std::clamp(static_cast<int>(center.y / geo.block_km), 0, B - 1);
    w.catalog.contexts.push_back({c, t ? static_cast<int>(*t) : kTimeBuckets, geo.zone_of(center), by * B + bx});
  }
  return w;
}

// ---------------------------------------------------------------------------
// Examples: impressions joined with their knowledge-resolved graphs

inline OutsideContext outside_context(const KnowledgeTable& table, VertexId query, VertexId item, VertexId context,
                                      VertexId portrait) {
  OutsideContext o;
  o.query = table.resolve(query);
  o.item = table.resolve(item);
  o.context = table.resolve(context);
  o.portrait = portrait.is_padding() ? UnitList(table.k_max(), kPaddingUnit) : table.resolve(portrait);
  return o;
}

// Builds one graph per ranking request (shared by its candidates); the
// graph sees only the user, live location and request time.
inline std::vector<Example> make_examples(std::span<const Impression> impressions, const BehaviorStore& store,
                                          const KnowledgeTable& table, const GraphConfig& graph) {
  std::vector<Example> out;
  out.reserve(impressions.size());
  std::shared_ptr<const ResolvedGraph> current;
  std::uint64_t current_request = UINT64_MAX;
  for (const auto& imp : impressions) {
    if (!current || imp.request_id != current_request) {
      const UserGraph g = store.build_graph(imp.user, imp.location, imp.timestamp, graph);
      current = std::make_shared<const ResolvedGraph>(resolve_graph(table, g));
      current_request = imp.request_id;
    }
    Example ex;
    ex.graph = current;
    ex.outside = outside_context(table, imp.query, imp.item, imp.context, store.portrait(imp.user));
    ex.attributes = imp.attributes;
    ex.label = imp.label;
    ex.group = imp.request_id;
    out.push_back(std::move(ex));
  }
  return out;
}

inline double mean_self_paths(std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : examples) total += static_cast<double>(e.self_paths());
  return total / static_cast<double>(examples.size());
}

// Named evaluation splits over the evaluation week.
struct EvalSplits {
  std::vector<Impression> full_day;
  std::vector<Impression> full_week;
  std::vector<Impression> full_week_hard;
};

// full_week_hard keeps users whose mean self-path count over their
// evaluation requests is below the configured threshold.
inline EvalSplits split_evaluation(const World& w, const BehaviorStore& store, const GraphConfig& graph) {
  EvalSplits s;
  std::map<VertexId, std::pair<double, std::size_t>> per_user;
  std::uint64_t last = UINT64_MAX;
  for (const auto& imp : w.test) {
    if (imp.request_id == last) continue;
    last = imp.request_id;
    const auto self = build_self_graph(store.user_events(imp.user), imp.timestamp, graph);
    auto& acc = per_user[imp.user];
    acc.first += static_cast<double>(self.size());
    ++acc.second;
  }
  for (const auto& imp : w.test) {
    s.full_week.push_back(imp);
    if (imp.day == 0) s.full_day.push_back(imp);
    const auto& acc = per_user[imp.user];
    if (acc.first / static_cast<double>(acc.second) < w.config.hard_threshold) s.full_week_hard.push_back(imp);
  }
  return s;
}

// Everything an experiment needs, resolved against one knowledge table.
struct Prepared {
  World world;
  BehaviorStore store;
  KnowledgeTable table;
  GraphConfig graph;
  ModelShape shape;
  std::vector<Example> train, validation, full_day, full_week, hard;
};

inline Prepared prepare(World world, KnowledgeTable table, const GraphConfig& graph, std::size_t d = 16) {
  Prepared p{std::move(world), {}, std::move(table), graph, {}, {}, {}, {}, {}, {}};
  p.store = p.world.store();
  p.shape.vocab = p.table.vocab_size();
  p.shape.d = d;
  p.shape.attr_width = p.world.features().width();
  const auto splits = split_evaluation(p.world, p.store, graph);
  p.train = make_examples(p.world.train, p.store, p.table, graph);
  p.validation = make_examples(p.world.validation, p.store, p.table, graph);
  p.full_day = make_examples(splits.full_day, p.store, p.table, graph);
  p.full_week = make_examples(splits.full_week, p.store, p.table, graph);
  p.hard = make_examples(splits.full_week_hard, p.store, p.table, graph);
  return p;
}

inline Prepared prepare(World world, const GraphConfig& graph, std::size_t d = 16, bool share_knowledge = true,
                        std::size_t k_max = kDefaultKMax) {
  KnowledgeTable table = build_synthetic_table(world.catalog, world.config.knowledge(k_max, share_knowledge));
  return prepare(std::move(world), std::move(table), graph, d);
}

// Trains the attribute-tower-only model on the same data.
inline TrainResult baseline_context_free(std::span<const Example> train_set, std::span<const Example> val_set,
                                         const ModelShape& shape, TrainConfig cfg) {
  cfg.variant = ModelVariant::context_free;
  cfg.beta = 0.0;
  return train(train_set, val_set, shape, cfg);
}

}  // namespace chgat
