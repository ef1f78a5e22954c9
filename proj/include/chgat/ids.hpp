#pragma once

// Raw vertex identifiers. Every raw vertex (user, context, query, item,
// portrait bucket) lives in one 32-bit id space: the top 4 bits hold the
// vertex type and the low 28 bits hold index + 1. Id 0 is the padding
// sentinel shared with the knowledge padding unit.

#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "chgat/error.hpp"

namespace chgat {

enum class VertexType : std::uint8_t { none = 0, user = 1, context = 2, query = 3, item = 4, portrait = 5 };

inline char type_prefix(VertexType t) {
  switch (t) {
    case VertexType::user: return 'u';
    case VertexType::context: return 'c';
    case VertexType::query: return 'q';
    case VertexType::item: return 'i';
    case VertexType::portrait: return 'p';
    case VertexType::none: break;
  }
  return '-';
}

class VertexId {
 public:
  static constexpr std::uint32_t kIndexBits = 28;
  static constexpr std::uint32_t kIndexMask = (1u << kIndexBits) - 1;
  static constexpr std::uint32_t kMaxIndex = kIndexMask - 1;

  constexpr VertexId() = default;
  constexpr explicit VertexId(std::uint32_t raw) : raw_(raw) {}

  static VertexId make(VertexType type, std::uint32_t index) {
    if (type == VertexType::none) throw DataError("cannot make a vertex id without a type");
    if (index > kMaxIndex) throw DataError("vertex index out of range");
    return VertexId((static_cast<std::uint32_t>(type) << kIndexBits) | (index + 1));
  }
  static VertexId user(std::uint32_t i) { return make(VertexType::user, i); }
  static VertexId context(std::uint32_t i) { return make(VertexType::context, i); }
  static VertexId query(std::uint32_t i) { return make(VertexType::query, i); }
  static VertexId item(std::uint32_t i) { return make(VertexType::item, i); }
  static VertexId portrait(std::uint32_t i) { return make(VertexType::portrait, i); }

  constexpr std::uint32_t raw() const { return raw_; }
  constexpr bool is_padding() const { return raw_ == 0; }
  constexpr VertexType type() const { return static_cast<VertexType>(raw_ >> kIndexBits); }
  constexpr std::uint32_t index() const { return (raw_ & kIndexMask) - 1; }

  std::string str() const {
    if (is_padding()) return "-";
    return std::string(1, type_prefix(type())) + std::to_string(index());
  }

  // Accepts the "u12" / "i3" text form and "-" for padding.
  static VertexId parse(std::string_view s) {
    if (s == "-") return VertexId();
    if (s.size() < 2) throw DataError("malformed vertex id '" + std::string(s) + "'");
    VertexType t = VertexType::none;
    switch (s[0]) {
      case 'u': t = VertexType::user; break;
      case 'c': t = VertexType::context; break;
      case 'q': t = VertexType::query; break;
      case 'i': t = VertexType::item; break;
      case 'p': t = VertexType::portrait; break;
      default: throw DataError("unknown vertex type in '" + std::string(s) + "'");
    }
    std::uint32_t idx = 0;
    auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), idx);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw DataError("malformed vertex id '" + std::string(s) + "'");
    }
    return make(t, idx);
  }

  friend constexpr auto operator<=>(VertexId, VertexId) = default;

 private:
  std::uint32_t raw_ = 0;
};

// Time-of-day buckets used in context keys.
enum class TimeBucket : std::uint8_t { morning = 0, noon = 1, evening = 2, night = 3 };
inline constexpr int kTimeBuckets = 4;
inline constexpr std::int64_t kSecondsPerDay = 86400;

// morning [5h, 11h), noon [11h, 15h), evening [15h, 21h), night otherwise.
inline TimeBucket time_bucket_of(std::int64_t timestamp) {
  const std::int64_t hour = ((timestamp % kSecondsPerDay) + kSecondsPerDay) % kSecondsPerDay / 3600;
  if (hour >= 5 && hour < 11) return TimeBucket::morning;
  if (hour >= 11 && hour < 15) return TimeBucket::noon;
  if (hour >= 15 && hour < 21) return TimeBucket::evening;
  return TimeBucket::night;
}

// Representative hour of a bucket, used by the generator.
inline int bucket_start_hour(TimeBucket b) {
  switch (b) {
    case TimeBucket::morning: return 5;
    case TimeBucket::noon: return 11;
    case TimeBucket::evening: return 15;
    case TimeBucket::night: return 21;
  }
  return 0;
}

struct Location {
  double x = 0.0;  // km
  double y = 0.0;  // km
  friend bool operator==(const Location&, const Location&) = default;
};

inline double distance_km(Location a, Location b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Spatial layout: square grid cells for context keys, coarser checkerboard
// blocks for zone types.
struct Geography {
  double cell_km = 0.5;
  double block_km = 5.0;
  int zones = 2;
  bool context_includes_time = true;

  struct Cell {
    std::uint32_t cx = 0;
    std::uint32_t cy = 0;
    friend auto operator<=>(const Cell&, const Cell&) = default;
  };
  static constexpr std::uint32_t kCellLimit = 2048;
  static constexpr std::uint32_t kAnyTime = 4;

  Cell cell_of(Location loc) const {
    auto clamp = [](double v) {
      const double c = std::floor(v);
      if (c < 0) return 0u;
      if (c >= kCellLimit) return kCellLimit - 1;
      return static_cast<std::uint32_t>(c);
    };
    return {clamp(loc.x / cell_km), clamp(loc.y / cell_km)};
  }

  Location cell_center(Cell c) const {
    return {(c.cx + 0.5) * cell_km, (c.cy + 0.5) * cell_km};
  }

  int zone_of(Location loc) const {
    const auto bx = static_cast<long>(std::floor(loc.x / block_km));
    const auto by = static_cast<long>(std::floor(loc.y / block_km));
    return static_cast<int>(((bx + by) % zones + zones) % zones);
  }

  // Context key = location cell x time-of-day bucket (or cell only).
  VertexId context_key(Location loc, TimeBucket bucket) const {
    const Cell c = cell_of(loc);
    const std::uint32_t t = context_includes_time ? static_cast<std::uint32_t>(bucket) : kAnyTime;
    return VertexId::context((c.cx * kCellLimit + c.cy) * 8 + t);
  }

  static Cell context_cell(VertexId ctx) {
    const std::uint32_t packed = ctx.index() / 8;
    return {packed / kCellLimit, packed % kCellLimit};
  }

  static std::optional<TimeBucket> context_time(VertexId ctx) {
    const std::uint32_t t = ctx.index() % 8;
    if (t >= kTimeBuckets) return std::nullopt;
    return static_cast<TimeBucket>(t);
  }

  int context_zone(VertexId ctx) const { return zone_of(cell_center(context_cell(ctx))); }
};

}  // namespace chgat

template <>
struct std::hash<chgat::VertexId> {
  std::size_t operator()(chgat::VertexId v) const noexcept { return std::hash<std::uint32_t>{}(v.raw()); }
};
