#pragma once

// Flat key=value run configuration. Blank lines and lines starting with '#'
// are ignored; unknown keys are errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "chgat/error.hpp"
#include "chgat/graph.hpp"
#include "chgat/knowledge.hpp"
#include "chgat/model.hpp"
#include "chgat/world.hpp"

namespace chgat {

struct RunConfig {
  WorldConfig world;
  GraphConfig graph;
  TrainConfig train;
  std::size_t d = 16;
  std::size_t k_max = kDefaultKMax;
  bool share_knowledge = true;
  std::size_t ndcg_depth = 0;  // 0 = whole group

  RunConfig() { train.seed = world.seed; }

  // Sets world and training seeds together.
  void set_seed(std::uint64_t seed) {
    world.seed = seed;
    train.seed = seed;
  }

  void set(std::string_view key, std::string_view value);
  std::string dump() const;
  void validate() const {
    world.validate();
    if (d == 0 || k_max == 0) throw ConfigError("d and k_max must be positive");
    if (graph.n1 == 0 || graph.n2 == 0 || graph.n3 == 0 || graph.sim_cap == 0) {
      throw ConfigError("n1, n2, n3 and sim_cap must be positive");
    }
    if (!(graph.radius_km > 0.0) || !(graph.window_days > 0.0)) throw ConfigError("radius_km and window_days must be positive");
    if (train.epochs == 0 || train.batch_size == 0 || !(train.learning_rate > 0.0)) {
      throw ConfigError("epochs, batch_size and learning_rate must be positive");
    }
    if (train.beta < 0.0 || train.lambda < 0.0) throw ConfigError("beta and lambda must be non-negative");
  }

  static RunConfig parse(std::istream& is);
  static RunConfig load(const std::string& path);
};

namespace detail {

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// key -> (setter, getter) over a RunConfig.
struct ConfigField {
  std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Shortest form that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

#define CHGAT_SIZE_FIELD(name, expr)                                                                       \
  {                                                                                                        \
    name, {                                                                                                \
      [](RunConfig& c, std::string_view k, std::string_view v) { c.expr = parse_number<std::size_t>(k, v); }, \
          [](const RunConfig& c) { return std::to_string(c.expr); }                                        \
    }                                                                                                      \
  }
#define CHGAT_INT_FIELD(name, expr)                                                                  \
  {                                                                                                  \
    name, {                                                                                          \
      [](RunConfig& c, std::string_view k, std::string_view v) { c.expr = parse_number<int>(k, v); }, \
          [](const RunConfig& c) { return std::to_string(c.expr); }                                  \
    }                                                                                                \
  }
#define CHGAT_REAL_FIELD(name, expr)                                                                    \
  {                                                                                                     \
    name, {                                                                                             \
      [](RunConfig& c, std::string_view k, std::string_view v) { c.expr = parse_number<double>(k, v); }, \
          [](const RunConfig& c) { return fmt_double(c.expr); }                                         \
    }                                                                                                   \
  }

inline const std::map<std::string, ConfigField, std::less<>>& config_fields() {
  static const std::map<std::string, ConfigField, std::less<>> fields = {
      CHGAT_SIZE_FIELD("users", world.users),
      CHGAT_SIZE_FIELD("queries", world.queries),
      CHGAT_SIZE_FIELD("items", world.items),
      CHGAT_SIZE_FIELD("contexts", world.contexts),
      CHGAT_INT_FIELD("categories", world.categories),
      CHGAT_INT_FIELD("tags_per_category", world.tags_per_category),
      CHGAT_INT_FIELD("taste_groups", world.taste_groups),
      CHGAT_REAL_FIELD("p_hit", world.p_hit),
      CHGAT_REAL_FIELD("loyalty", world.loyalty),
      CHGAT_REAL_FIELD("cold_fraction", world.cold_fraction),
      CHGAT_INT_FIELD("history_days", world.history_days),
      CHGAT_INT_FIELD("eval_days", world.eval_days),
      CHGAT_SIZE_FIELD("train_requests", world.train_requests),
      CHGAT_SIZE_FIELD("eval_requests", world.eval_requests),
      CHGAT_SIZE_FIELD("candidates", world.candidates),
      CHGAT_REAL_FIELD("hard_threshold", world.hard_threshold),
      CHGAT_REAL_FIELD("window_days", graph.window_days),
      CHGAT_SIZE_FIELD("n1", graph.n1),
      CHGAT_SIZE_FIELD("n2", graph.n2),
      CHGAT_SIZE_FIELD("n3", graph.n3),
      CHGAT_REAL_FIELD("radius_km", graph.radius_km),
      CHGAT_SIZE_FIELD("sim_cap", graph.sim_cap),
      CHGAT_SIZE_FIELD("epochs", train.epochs),
      CHGAT_SIZE_FIELD("batch_size", train.batch_size),
      CHGAT_REAL_FIELD("learning_rate", train.learning_rate),
      CHGAT_REAL_FIELD("beta", train.beta),
      CHGAT_REAL_FIELD("lambda", train.lambda),
      CHGAT_SIZE_FIELD("patience", train.patience),
      CHGAT_SIZE_FIELD("d", d),
      CHGAT_SIZE_FIELD("k_max", k_max),
      CHGAT_SIZE_FIELD("ndcg_depth", ndcg_depth),
      {"share_knowledge",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.share_knowledge = parse_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.share_knowledge ? "true" : "false"); }}},
      {"context_time",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.world.geo.context_includes_time = parse_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.world.geo.context_includes_time ? "true" : "false"); }}},
      {"seed",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.set_seed(parse_number<std::uint64_t>(k, v)); },
        [](const RunConfig& c) { return std::to_string(c.world.seed); }}},
      {"train_seed",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.train.seed = parse_number<std::uint64_t>(k, v); },
        [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
  };
  return fields;
}

#undef CHGAT_SIZE_FIELD
#undef CHGAT_INT_FIELD
#undef CHGAT_REAL_FIELD

}  // namespace detail

inline void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& fields = detail::config_fields();
  auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second.set(*this, key, value);
}

// Every key in sorted order; parse(dump()) reproduces the configuration.
inline std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [key, field] : detail::config_fields()) out += key + "=" + field.get(*this) + "\n";
  return out;
}

inline RunConfig RunConfig::parse(std::istream& is) {
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  // `seed` must not clobber an explicit train_seed that appears earlier.
  std::string train_seed;
  while (std::getline(is, line)) {
    ++lineno;
    const auto s = detail::trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const auto key = detail::trim(s.substr(0, eq));
    const auto value = detail::trim(s.substr(eq + 1));
    try {
      if (key == "train_seed") {
        train_seed = value;
      } else {
        c.set(key, value);
      }
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!train_seed.empty()) c.set("train_seed", train_seed);
  return c;
}

inline RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in);
}

}  // namespace chgat
