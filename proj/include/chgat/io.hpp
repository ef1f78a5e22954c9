#pragma once

// On-disk forms of a generated world. A world directory holds:
//   run.cfg          the RunConfig that produced it
//   catalog.tsv      semantic attributes of every raw vertex
//   knowledge.tsv    raw id -> knowledge units
//   events.tsv       behavior log
//   portraits.tsv    user -> portrait bucket
//   train.tsv, validation.tsv, test.tsv   impressions

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "chgat/config.hpp"
#include "chgat/error.hpp"
#include "chgat/graph.hpp"
#include "chgat/knowledge.hpp"
#include "chgat/world.hpp"

namespace chgat {

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> f;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return f;
}

inline std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T field_number(const std::string& s, const char* what) {
  return parse_number<T>(what, s);
}

inline double field_real(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError(std::string("bad ") + what + " '" + s + "'");
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Catalog: `kind<TAB>id<TAB>a<TAB>b[<TAB>c]`

inline void write_catalog(std::ostream& os, const Catalog& c) {
  for (const auto& i : c.items) os << "item\t" << i.id.str() << '\t' << i.category << '\t' << i.tag << '\n';
  for (const auto& q : c.queries) os << "query\t" << q.id.str() << '\t' << q.intent << '\t' << q.tag << '\n';
  for (const auto& x : c.contexts) {
    os << "context\t" << x.id.str() << '\t' << x.time_bucket << '\t' << x.zone << '\t' << x.area << '\n';
  }
  for (const auto& p : c.portraits) {
    os << "portrait\t" << p.id.str() << '\t' << p.age_band << '\t' << p.price_band << '\t' << p.affinity << '\n';
  }
}

inline Catalog read_catalog(std::istream& is) {
  Catalog c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_tabs(line);
    auto num = [&](std::size_t i) { return detail::field_number<int>(f.at(i), "catalog field"); };
    try {
      if (f[0] == "item" && f.size() == 4) {
        c.items.push_back({VertexId::parse(f[1]), num(2), num(3)});
      } else if (f[0] == "query" && f.size() == 4) {
        c.queries.push_back({VertexId::parse(f[1]), num(2), num(3)});
      } else if (f[0] == "context" && f.size() == 5) {
        c.contexts.push_back({VertexId::parse(f[1]), num(2), num(3), num(4)});
      } else if (f[0] == "portrait" && f.size() == 5) {
        c.portraits.push_back({VertexId::parse(f[1]), num(2), num(3), num(4)});
      } else {
        throw DataError("unknown record");
      }
    } catch (const Error& e) {
      throw DataError("catalog line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Portraits: `user<TAB>portrait`

inline void write_portraits(std::ostream& os, const PortraitLookup& p) {
  std::map<VertexId, VertexId> sorted(p.begin(), p.end());
  for (const auto& [u, b] : sorted) os << u.str() << '\t' << b.str() << '\n';
}

inline PortraitLookup read_portraits(std::istream& is) {
  PortraitLookup p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_tabs(line);
    if (f.size() != 2) throw DataError("portrait line " + std::to_string(lineno) + ": expected 2 fields");
    p[VertexId::parse(f[0])] = VertexId::parse(f[1]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Impressions: request, user, query, item, x, y, bucket, context, timestamp,
// label, day, attributes (comma-joined)

inline void write_impressions(std::ostream& os, std::span<const Impression> imps) {
  for (const auto& m : imps) {
    os << m.request_id << '\t' << m.user.str() << '\t' << m.query.str() << '\t' << m.item.str() << '\t'
       << detail::fmt_real(m.location.x) << '\t' << detail::fmt_real(m.location.y) << '\t'
       << static_cast<int>(m.bucket) << '\t' << m.context.str() << '\t' << m.timestamp << '\t' << m.label << '\t'
       << m.day << '\t';
    for (std::size_t i = 0; i < m.attributes.size(); ++i) os << (i ? "," : "") << detail::fmt_real(m.attributes[i]);
    os << '\n';
  }
}

inline std::vector<Impression> read_impressions(std::istream& is) {
  std::vector<Impression> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_tabs(line);
    try {
      if (f.size() != 12) throw DataError("expected 12 fields");
      Impression m;
      m.request_id = detail::field_number<std::uint64_t>(f[0], "request id");
      m.user = VertexId::parse(f[1]);
      m.query = VertexId::parse(f[2]);
      m.item = VertexId::parse(f[3]);
      m.location = {detail::field_real(f[4], "x"), detail::field_real(f[5], "y")};
      const int bucket = detail::field_number<int>(f[6], "time bucket");
      if (bucket < 0 || bucket >= kTimeBuckets) throw DataError("time bucket out of range");
      m.bucket = static_cast<TimeBucket>(bucket);
      m.context = VertexId::parse(f[7]);
      m.timestamp = detail::field_number<std::int64_t>(f[8], "timestamp");
      m.label = detail::field_number<int>(f[9], "label");
      if (m.label != 0 && m.label != 1) throw DataError("label must be 0 or 1");
      m.day = detail::field_number<int>(f[10], "day");
      std::stringstream ss(f[11]);
      std::string tok;
      while (std::getline(ss, tok, ',')) m.attributes.push_back(detail::field_real(tok, "attribute"));
      out.push_back(std::move(m));
    } catch (const Error& e) {
      throw DataError("impression line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph JSON

inline nlohmann::json tree_to_json(const MetaPathTree& t) {
  nlohmann::json j;
  j["kind"] = kind_name(t.kind);
  j["context"] = t.context.str();
  if (has_query_layer(t.kind)) {
    auto qs = nlohmann::json::array();
    for (const auto& q : t.queries) {
      auto items = nlohmann::json::array();
      for (auto i : q.items) items.push_back(i.str());
      qs.push_back({{"query", q.query.str()}, {"items", items}});
    }
    j["queries"] = qs;
  } else {
    auto items = nlohmann::json::array();
    for (auto i : t.items) items.push_back(i.str());
    j["items"] = items;
  }
  return j;
}

inline nlohmann::json graph_to_json(const UserGraph& g) {
  nlohmann::json j;
  j["user"] = g.user.str();
  j["portrait"] = g.portrait.str();
  j["self_paths"] = nlohmann::json::array();
  j["sim_paths"] = nlohmann::json::array();
  for (const auto& t : g.self_paths) j["self_paths"].push_back(tree_to_json(t));
  for (const auto& t : g.sim_paths) j["sim_paths"].push_back(tree_to_json(t));
  return j;
}

// ---------------------------------------------------------------------------
// World directory

inline void save_world(const std::filesystem::path& dir, const World& w, const KnowledgeTable& table,
                       const RunConfig& cfg) {
  std::filesystem::create_directories(dir);
  detail::open_out(dir / "run.cfg") << cfg.dump();
  {
    auto os = detail::open_out(dir / "catalog.tsv");
    write_catalog(os, w.catalog);
  }
  {
    auto os = detail::open_out(dir / "knowledge.tsv");
    table.save(os);
  }
  {
    auto os = detail::open_out(dir / "events.tsv");
    for (const auto& e : w.events) write_event(os, e);
  }
  {
    auto os = detail::open_out(dir / "portraits.tsv");
    write_portraits(os, w.portraits);
  }
  for (const auto& [name, set] : {std::pair{"train.tsv", &w.train}, std::pair{"validation.tsv", &w.validation},
                                  std::pair{"test.tsv", &w.test}}) {
    auto os = detail::open_out(dir / name);
    write_impressions(os, *set);
  }
}

struct LoadedWorld {
  RunConfig config;
  World world;
  KnowledgeTable table;
};

// User profiles are generator-internal and not persisted.
inline LoadedWorld load_world(const std::filesystem::path& dir) {
  LoadedWorld out{RunConfig::load((dir / "run.cfg").string()), {}, KnowledgeTable()};
  World& w = out.world;
  w.config = out.config.world;
  {
    auto is = detail::open_in(dir / "catalog.tsv");
    w.catalog = read_catalog(is);
  }
  {
    auto is = detail::open_in(dir / "knowledge.tsv");
    out.table = KnowledgeTable::load(is, out.config.k_max);
  }
  {
    auto is = detail::open_in(dir / "events.tsv");
    auto report = read_event_log(is);
    if (report.malformed) {
      throw DataError("events.tsv: " + std::to_string(report.malformed) + " malformed lines, first at line " +
                      std::to_string(report.malformed_lines.front()));
    }
    w.events = std::move(report.events);
  }
  {
    auto is = detail::open_in(dir / "portraits.tsv");
    w.portraits = read_portraits(is);
  }
  for (const auto& [name, set] : {std::pair{"train.tsv", &w.train}, std::pair{"validation.tsv", &w.validation},
                                  std::pair{"test.tsv", &w.test}}) {
    auto is = detail::open_in(dir / name);
    *set = read_impressions(is);
  }
  // A shared vocabulary may hold units no vertex references.
  if (out.config.share_knowledge) {
    out.table.reserve_vocab(synthetic_vocab_size(w.config.knowledge(out.config.k_max, true)));
  }
  return out;
}

}  // namespace chgat
