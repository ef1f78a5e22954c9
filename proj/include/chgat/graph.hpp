#pragma once

// Rooted heterogeneous behavior graph: per-user meta-path trees built from
// the user's own history (self paths) and from nearby users (similar-crowd
// paths), all hanging off the user root.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "chgat/error.hpp"
#include "chgat/ids.hpp"

namespace chgat {

enum class Interaction : std::uint8_t { click, purchase, add_cart };

inline const char* interaction_name(Interaction i) {
  switch (i) {
    case Interaction::click: return "click";
    case Interaction::purchase: return "purchase";
    case Interaction::add_cart: return "add_cart";
  }
  return "?";
}

inline Interaction parse_interaction(std::string_view s) {
  if (s == "click") return Interaction::click;
  if (s == "purchase") return Interaction::purchase;
  if (s == "add_cart") return Interaction::add_cart;
  throw DataError("unknown interaction '" + std::string(s) + "'");
}

struct BehaviorEvent {
  VertexId user;
  std::int64_t timestamp = 0;  // seconds
  Location location;
  VertexId context;  // location cell x time bucket
  VertexId query;    // padding when the interaction did not follow a search
  VertexId item;
  Interaction interaction = Interaction::click;

  friend bool operator==(const BehaviorEvent&, const BehaviorEvent&) = default;
};

enum class MetaPathKind : std::uint8_t { ucqi_self = 0, uci_self = 1, ucqi_sim = 2, uci_sim = 3 };
inline constexpr int kMetaPathKinds = 4;

inline bool has_query_layer(MetaPathKind k) { return k == MetaPathKind::ucqi_self || k == MetaPathKind::ucqi_sim; }
inline bool is_sim(MetaPathKind k) { return k == MetaPathKind::ucqi_sim || k == MetaPathKind::uci_sim; }

inline const char* kind_name(MetaPathKind k) {
  switch (k) {
    case MetaPathKind::ucqi_self: return "UCQI_self";
    case MetaPathKind::uci_self: return "UCI_self";
    case MetaPathKind::ucqi_sim: return "UCQI_sim";
    case MetaPathKind::uci_sim: return "UCI_sim";
  }
  return "?";
}

struct QueryChild {
  VertexId query;
  std::vector<VertexId> items;
  friend bool operator==(const QueryChild&, const QueryChild&) = default;
};

struct MetaPathTree {
  MetaPathKind kind = MetaPathKind::ucqi_self;
  VertexId context;                  // location/time cell (self) or portrait bucket (sim)
  std::vector<QueryChild> queries;   // UCQI kinds
  std::vector<VertexId> items;       // UCI kinds
  std::int64_t recency = 0;

  // Structural equality; recency is bookkeeping and not compared.
  bool same_structure(const MetaPathTree& o) const {
    return kind == o.kind && context == o.context && queries == o.queries && items == o.items;
  }
  friend bool operator==(const MetaPathTree&, const MetaPathTree&) = default;
};

struct UserGraph {
  VertexId user;
  std::vector<MetaPathTree> self_paths;
  std::vector<MetaPathTree> sim_paths;
  VertexId portrait;  // padding when unknown

  std::size_t self_path_count() const { return self_paths.size(); }
  std::size_t total_paths() const { return self_paths.size() + sim_paths.size(); }
};

struct GraphConfig {
  double window_days = 30.0;
  std::size_t n1 = 4;         // self contexts kept per kind
  std::size_t n2 = 3;         // queries per context
  std::size_t n3 = 5;         // items per query (and per context on UCI paths)
  double radius_km = 3.0;
  std::size_t sim_cap = 20;   // sim trees kept per kind
};

namespace detail {

struct Stamped {
  std::int64_t ts;
  VertexId id;
};

// Newest first, raw-id ascending on ties.
inline bool newer(const Stamped& a, const Stamped& b) {
  if (a.ts != b.ts) return a.ts > b.ts;
  return a.id < b.id;
}

// Keeps the most recent occurrence of each id, ordered newest first.
inline std::vector<VertexId> dedup_recent(std::vector<Stamped> xs, std::size_t cap) {
  std::sort(xs.begin(), xs.end(), newer);
  std::vector<VertexId> out;
  for (const auto& x : xs) {
    if (out.size() >= cap) break;
    if (std::find(out.begin(), out.end(), x.id) == out.end()) out.push_back(x.id);
  }
  return out;
}

// Accumulates the events of one (kind, context) group into a tree.
struct TreeBuilder {
  std::map<VertexId, std::vector<Stamped>> query_items;
  std::vector<Stamped> direct_items;
  std::int64_t recency = INT64_MIN;

  void add(const BehaviorEvent& e) {
    recency = std::max(recency, e.timestamp);
    if (e.query.is_padding()) {
      direct_items.push_back({e.timestamp, e.item});
    } else {
      query_items[e.query].push_back({e.timestamp, e.item});
    }
  }

  MetaPathTree ucqi(MetaPathKind kind, VertexId context, const GraphConfig& cfg) const {
    MetaPathTree t;
    t.kind = kind;
    t.context = context;
    std::vector<Stamped> order;
    std::int64_t newest = INT64_MIN;
    for (const auto& [q, items] : query_items) {
      std::int64_t ts = INT64_MIN;
      for (const auto& s : items) ts = std::max(ts, s.ts);
      order.push_back({ts, q});
    }
    std::sort(order.begin(), order.end(), newer);
    for (const auto& q : order) {
      if (t.queries.size() >= cfg.n2) break;
      t.queries.push_back({q.id, dedup_recent(query_items.at(q.id), cfg.n3)});
      newest = std::max(newest, q.ts);
    }
    t.recency = newest;
    return t;
  }

  MetaPathTree uci(MetaPathKind kind, VertexId context, const GraphConfig& cfg) const {
    MetaPathTree t;
    t.kind = kind;
    t.context = context;
    t.items = dedup_recent(direct_items, cfg.n3);
    std::int64_t newest = INT64_MIN;
    for (const auto& s : direct_items) newest = std::max(newest, s.ts);
    t.recency = newest;
    return t;
  }
};

inline bool in_window(const BehaviorEvent& e, std::int64_t now, double window_days) {
  const auto window = static_cast<std::int64_t>(window_days * kSecondsPerDay);
  return e.timestamp < now && e.timestamp >= now - window;
}

// Sorts trees newest first (context ascending on ties) and keeps `cap`.
inline void keep_newest(std::vector<MetaPathTree>& trees, std::size_t cap) {
  std::sort(trees.begin(), trees.end(), [](const MetaPathTree& a, const MetaPathTree& b) {
    if (a.recency != b.recency) return a.recency > b.recency;
    return a.context < b.context;
  });
  if (trees.size() > cap) trees.resize(cap);
}

}  // namespace detail

// One tree per (kind, context) from the user's own history in the window
// before `now`. UCQI trees come first, each kind newest first.
inline std::vector<MetaPathTree> build_self_graph(std::span<const BehaviorEvent> events, std::int64_t now,
                                                  const GraphConfig& cfg) {
  std::map<VertexId, detail::TreeBuilder> by_context;
  for (const auto& e : events) {
    if (!detail::in_window(e, now, cfg.window_days)) continue;
    by_context[e.context].add(e);
  }
  std::vector<MetaPathTree> ucqi, uci;
  for (const auto& [ctx, b] : by_context) {
    if (!b.query_items.empty()) ucqi.push_back(b.ucqi(MetaPathKind::ucqi_self, ctx, cfg));
    if (!b.direct_items.empty()) uci.push_back(b.uci(MetaPathKind::uci_self, ctx, cfg));
  }
  detail::keep_newest(ucqi, cfg.n1);
  detail::keep_newest(uci, cfg.n1);
  ucqi.insert(ucqi.end(), std::make_move_iterator(uci.begin()), std::make_move_iterator(uci.end()));
  return ucqi;
}

using PortraitLookup = std::unordered_map<VertexId, VertexId>;

// Trees from other users' in-window events within `radius_km` of the
// search location, one tree per (kind, source user). The context vertex of
// each tree is the source user's portrait bucket. Sources without a known
// portrait are skipped.
inline std::vector<MetaPathTree> build_sim_graph(std::span<const BehaviorEvent* const> candidates, VertexId self_user,
                                                 Location search_location, std::int64_t now,
                                                 const PortraitLookup& portraits, const GraphConfig& cfg) {
  std::map<VertexId, detail::TreeBuilder> by_user;
  for (const BehaviorEvent* e : candidates) {
    if (e->user == self_user) continue;
    if (!detail::in_window(*e, now, cfg.window_days)) continue;
    if (distance_km(e->location, search_location) > cfg.radius_km) continue;
    by_user[e->user].add(*e);
  }
  std::vector<MetaPathTree> ucqi, uci;
  for (const auto& [user, b] : by_user) {
    auto it = portraits.find(user);
    if (it == portraits.end() || it->second.is_padding()) continue;
    if (!b.query_items.empty()) ucqi.push_back(b.ucqi(MetaPathKind::ucqi_sim, it->second, cfg));
    if (!b.direct_items.empty()) uci.push_back(b.uci(MetaPathKind::uci_sim, it->second, cfg));
  }
  // Ties on recency fall back to context (portrait) order, which is stable
  // because std::map iteration already ordered sources by user id.
  auto keep = [&](std::vector<MetaPathTree>& v) {
    std::stable_sort(v.begin(), v.end(),
                     [](const MetaPathTree& a, const MetaPathTree& b) { return a.recency > b.recency; });
    if (v.size() > cfg.sim_cap) v.resize(cfg.sim_cap);
  };
  keep(ucqi);
  keep(uci);
  ucqi.insert(ucqi.end(), std::make_move_iterator(uci.begin()), std::make_move_iterator(uci.end()));
  return ucqi;
}

inline std::vector<MetaPathTree> build_sim_graph(std::span<const BehaviorEvent> all_events, VertexId self_user,
                                                 Location search_location, std::int64_t now,
                                                 const PortraitLookup& portraits, const GraphConfig& cfg) {
  std::vector<const BehaviorEvent*> ptrs;
  ptrs.reserve(all_events.size());
  for (const auto& e : all_events) ptrs.push_back(&e);
  return build_sim_graph(ptrs, self_user, search_location, now, portraits, cfg);
}

inline void validate_tree(const MetaPathTree& t) {
  if (t.context.is_padding()) throw DataError("meta-path tree without a context vertex");
  const VertexType want_ctx = is_sim(t.kind) ? VertexType::portrait : VertexType::context;
  if (t.context.type() != want_ctx) throw DataError("context vertex of wrong type in " + std::string(kind_name(t.kind)));
  if (has_query_layer(t.kind)) {
    if (!t.items.empty()) throw DataError("UCQI tree carries direct items");
    if (t.queries.empty()) throw DataError("UCQI tree without queries");
    for (const auto& q : t.queries) {
      if (q.query.type() != VertexType::query) throw DataError("query slot holds a non-query vertex");
      if (q.items.empty()) throw DataError("query without items");
      for (auto i : q.items) {
        if (i.type() != VertexType::item) throw DataError("item slot holds a non-item vertex");
      }
    }
  } else {
    if (!t.queries.empty()) throw DataError("UCI tree has a query layer");
    if (t.items.empty()) throw DataError("UCI tree without items");
    for (auto i : t.items) {
      if (i.type() != VertexType::item) throw DataError("item slot holds a non-item vertex");
    }
  }
}

// Connects self and sim trees to the shared user root, validating tree
// shapes, caps and (kind, context) uniqueness of self trees.
inline UserGraph assemble(VertexId user, std::vector<MetaPathTree> self_paths, std::vector<MetaPathTree> sim_paths,
                          VertexId portrait, const GraphConfig& cfg) {
  std::size_t counts[kMetaPathKinds] = {0, 0, 0, 0};
  std::map<std::pair<int, VertexId>, int> seen;
  for (const auto& t : self_paths) {
    if (is_sim(t.kind)) throw DataError("sim tree in the self path list");
    validate_tree(t);
    if (seen[{static_cast<int>(t.kind), t.context}]++) throw DataError("duplicate (kind, context) self tree");
    ++counts[static_cast<int>(t.kind)];
  }
  for (const auto& t : sim_paths) {
    if (!is_sim(t.kind)) throw DataError("self tree in the sim path list");
    validate_tree(t);
    ++counts[static_cast<int>(t.kind)];
  }
  if (counts[0] > cfg.n1 || counts[1] > cfg.n1) throw DataError("self trees per kind exceed n1");
  if (counts[2] > cfg.sim_cap || counts[3] > cfg.sim_cap) throw DataError("sim trees per kind exceed the cap");
  UserGraph g;
  g.user = user;
  g.self_paths = std::move(self_paths);
  g.sim_paths = std::move(sim_paths);
  g.portrait = portrait;
  return g;
}

// ---------------------------------------------------------------------------
// Event log and behavior store

struct EventLogReport {
  std::vector<BehaviorEvent> events;
  std::size_t lines = 0;
  std::size_t malformed = 0;
  std::vector<std::size_t> malformed_lines;  // first few, 1-based
};

// user, timestamp, x, y, context, query ("-" if none), item, interaction
inline void write_event(std::ostream& os, const BehaviorEvent& e) {
  char buf[64];
  os << e.user.str() << '\t' << e.timestamp << '\t';
  std::snprintf(buf, sizeof buf, "%.17g\t%.17g", e.location.x, e.location.y);
  os << buf << '\t' << e.context.str() << '\t' << e.query.str() << '\t' << e.item.str() << '\t'
     << interaction_name(e.interaction) << '\n';
}

inline BehaviorEvent parse_event(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, '\t')) f.push_back(tok);
  if (f.size() != 8) throw DataError("expected 8 fields");
  BehaviorEvent e;
  e.user = VertexId::parse(f[0]);
  std::size_t pos = 0;
  e.timestamp = std::stoll(f[1], &pos);
  if (pos != f[1].size()) throw DataError("bad timestamp");
  e.location.x = std::stod(f[2]);
  e.location.y = std::stod(f[3]);
  e.context = VertexId::parse(f[4]);
  e.query = VertexId::parse(f[5]);
  e.item = VertexId::parse(f[6]);
  e.interaction = parse_interaction(f[7]);
  if (e.user.type() != VertexType::user) throw DataError("user field is not a user id");
  if (e.context.type() != VertexType::context) throw DataError("context field is not a context id");
  if (!e.query.is_padding() && e.query.type() != VertexType::query) throw DataError("query field is not a query id");
  if (e.item.type() != VertexType::item) throw DataError("every event needs an item");
  return e;
}

inline EventLogReport read_event_log(std::istream& is) {
  EventLogReport r;
  std::string line;
  while (std::getline(is, line)) {
    ++r.lines;
    if (line.empty()) continue;
    try {
      r.events.push_back(parse_event(line));
    } catch (const std::exception&) {
      ++r.malformed;
      if (r.malformed_lines.size() < 16) r.malformed_lines.push_back(r.lines);
    }
  }
  return r;
}

// Events indexed by user and by location cell. Immutable after construction;
// safe for concurrent readers.
class BehaviorStore {
 public:
  BehaviorStore() = default;
  BehaviorStore(std::vector<BehaviorEvent> events, PortraitLookup portraits, Geography geo = {})
      : events_(std::move(events)), portraits_(std::move(portraits)), geo_(geo) {
    std::stable_sort(events_.begin(), events_.end(), [](const BehaviorEvent& a, const BehaviorEvent& b) {
      if (a.user != b.user) return a.user < b.user;
      return a.timestamp < b.timestamp;
    });
    for (std::size_t i = 0; i < events_.size(); ++i) {
      const auto& e = events_[i];
      auto& range = by_user_[e.user];
      if (range.second == 0) range.first = i;
      ++range.second;
      by_cell_[index_cell(e.location)].push_back(i);
      reference_time_ = std::max(reference_time_, e.timestamp + 1);
    }
  }

  std::span<const BehaviorEvent> user_events(VertexId user) const {
    auto it = by_user_.find(user);
    if (it == by_user_.end()) return {};
    return {events_.data() + it->second.first, it->second.second};
  }

  std::size_t user_event_count(VertexId user, std::int64_t now, double window_days) const {
    std::size_t n = 0;
    for (const auto& e : user_events(user)) n += detail::in_window(e, now, window_days) ? 1 : 0;
    return n;
  }

  // Candidate events in index cells overlapping the radius bounding box.
  std::vector<const BehaviorEvent*> nearby(Location center, double radius_km) const {
    std::vector<const BehaviorEvent*> out;
    const auto lo = index_cell({center.x - radius_km, center.y - radius_km});
    const auto hi = index_cell({center.x + radius_km, center.y + radius_km});
    for (long cx = lo.first; cx <= hi.first; ++cx) {
      for (long cy = lo.second; cy <= hi.second; ++cy) {
        auto it = by_cell_.find({cx, cy});
        if (it == by_cell_.end()) continue;
        for (auto i : it->second) out.push_back(&events_[i]);
      }
    }
    return out;
  }

  VertexId portrait(VertexId user) const {
    auto it = portraits_.find(user);
    return it == portraits_.end() ? VertexId() : it->second;
  }

  const PortraitLookup& portraits() const { return portraits_; }
  const std::vector<BehaviorEvent>& events() const { return events_; }
  const Geography& geography() const { return geo_; }
  std::int64_t reference_time() const { return reference_time_; }
  bool knows_user(VertexId user) const { return by_user_.count(user) || portraits_.count(user); }

  UserGraph build_graph(VertexId user, Location search_location, std::int64_t now, const GraphConfig& cfg) const {
    auto self = build_self_graph(user_events(user), now, cfg);
    const auto near = nearby(search_location, cfg.radius_km);
    auto sim = build_sim_graph(near, user, search_location, now, portraits_, cfg);
    return assemble(user, std::move(self), std::move(sim), portrait(user), cfg);
  }

 private:
  static constexpr double kIndexCellKm = 1.0;
  static std::pair<long, long> index_cell(Location l) {
    return {static_cast<long>(std::floor(l.x / kIndexCellKm)), static_cast<long>(std::floor(l.y / kIndexCellKm))};
  }

  std::vector<BehaviorEvent> events_;
  PortraitLookup portraits_;
  Geography geo_;
  std::unordered_map<VertexId, std::pair<std::size_t, std::size_t>> by_user_;
  std::map<std::pair<long, long>, std::vector<std::size_t>> by_cell_;
  std::int64_t reference_time_ = 0;
};

}  // namespace chgat
