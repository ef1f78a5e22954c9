#pragma once

// Scoring service. A request passes a feature stage (behavior store ->
// user graph -> flat sequences) and a rank stage (flat sequences -> trees
// -> knowledge units -> model). Frames on the wire are a 4-byte
// little-endian length followed by one JSON object.
//
// Request:  {"user_id":"u3","query_id":"q7","candidates":["i1","i9"],
//            "location":[x,y],"time_bucket":0,"timestamp":123}   (timestamp optional)
// Response: {"probabilities":[...],"latency_us":N,"model_version":"..."}
//           or {"error":"..."}

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "chgat/error.hpp"
#include "chgat/flatseq.hpp"
#include "chgat/graph.hpp"
#include "chgat/knowledge.hpp"
#include "chgat/model.hpp"
#include "chgat/world.hpp"

namespace chgat {

struct ScoreRequest {
  VertexId user;
  VertexId query;
  std::vector<VertexId> candidates;
  Location location;
  TimeBucket bucket = TimeBucket::morning;
  std::optional<std::int64_t> timestamp;
};

struct ScoreResponse {
  std::vector<double> probabilities;
  std::int64_t latency_us = 0;
  std::string model_version;
};

inline ScoreRequest parse_request(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("request must be a JSON object");
  auto id = [&](const char* key, VertexType want, bool allow_padding) {
    if (!j.contains(key) || !j[key].is_string()) throw DataError(std::string("missing string field ") + key);
    const VertexId v = VertexId::parse(j[key].get<std::string>());
    if (v.is_padding() ? !allow_padding : v.type() != want) throw DataError(std::string("wrong id type for ") + key);
    return v;
  };
  ScoreRequest r;
  r.user = id("user_id", VertexType::user, false);
  r.query = id("query_id", VertexType::query, true);
  if (!j.contains("candidates") || !j["candidates"].is_array() || j["candidates"].empty()) {
    throw DataError("candidates must be a non-empty array");
  }
  for (const auto& c : j["candidates"]) {
    if (!c.is_string()) throw DataError("candidate ids must be strings");
    const VertexId v = VertexId::parse(c.get<std::string>());
    if (v.type() != VertexType::item) throw DataError("candidate " + c.get<std::string>() + " is not an item");
    r.candidates.push_back(v);
  }
  const auto& loc = j.value("location", nlohmann::json());
  if (!loc.is_array() || loc.size() != 2 || !loc[0].is_number() || !loc[1].is_number()) {
    throw DataError("location must be [x, y]");
  }
  r.location = {loc[0].get<double>(), loc[1].get<double>()};
  if (!std::isfinite(r.location.x) || !std::isfinite(r.location.y)) throw DataError("location must be finite");
  if (!j.contains("time_bucket") || !j["time_bucket"].is_number_integer()) throw DataError("missing time_bucket");
  const int b = j["time_bucket"].get<int>();
  if (b < 0 || b >= kTimeBuckets) throw DataError("time_bucket out of range");
  r.bucket = static_cast<TimeBucket>(b);
  if (j.contains("timestamp")) {
    if (!j["timestamp"].is_number_integer()) throw DataError("timestamp must be an integer");
    r.timestamp = j["timestamp"].get<std::int64_t>();
  }
  return r;
}

inline nlohmann::json request_to_json(const ScoreRequest& r) {
  nlohmann::json j;
  j["user_id"] = r.user.str();
  j["query_id"] = r.query.str();
  auto c = nlohmann::json::array();
  for (auto v : r.candidates) c.push_back(v.str());
  j["candidates"] = c;
  j["location"] = {r.location.x, r.location.y};
  j["time_bucket"] = static_cast<int>(r.bucket);
  if (r.timestamp) j["timestamp"] = *r.timestamp;
  return j;
}

inline nlohmann::json response_to_json(const ScoreResponse& r) {
  return {{"probabilities", r.probabilities}, {"latency_us", r.latency_us}, {"model_version", r.model_version}};
}

// Frozen model plus the read-only data it scores against. Every method is
// const and safe to call from many threads.
class Scorer {
 public:
  Scorer(ChgatParams params, std::shared_ptr<const BehaviorStore> store, std::shared_ptr<const KnowledgeTable> table,
         FeatureSpace features, GraphConfig graph)
      : params_(std::move(params)),
        store_(std::move(store)),
        table_(std::move(table)),
        features_(std::move(features)),
        graph_(graph),
        version_(model_version(params_)) {
    if (table_->vocab_size() > params_.shape.vocab) throw ShapeError("knowledge table is larger than the model vocabulary");
    if (features_.width() != params_.shape.attr_width) throw ShapeError("attribute width differs from the model");
  }

  const ChgatParams& params() const { return params_; }
  const std::string& version() const { return version_; }
  const GraphConfig& graph_config() const { return graph_; }
  const BehaviorStore& store() const { return *store_; }
  const KnowledgeTable& table() const { return *table_; }
  const FeatureSpace& features() const { return features_; }

  std::int64_t request_time(const ScoreRequest& r) const { return r.timestamp.value_or(store_->reference_time()); }

  // Feature stage.
  FlatGraph features_for(const ScoreRequest& r) const {
    const UserGraph g = store_->build_graph(r.user, r.location, request_time(r), graph_);
    return flatten_graph(g, graph_);
  }

  // Rank stage.
  std::vector<double> rank(const FlatGraph& flat, const ScoreRequest& r, PredictTape& tape) const {
    const UserGraph g = unflatten_graph(flat);
    auto resolved = std::make_shared<const ResolvedGraph>(resolve_graph(*table_, g));
    const VertexId ctx = store_->geography().context_key(r.location, r.bucket);
    const int zone = store_->geography().zone_of(r.location);
    const std::size_t recent =
        store_->user_event_count(r.user, request_time(r), FeatureSpace::kActivityWindowDays);
    std::vector<double> out;
    out.reserve(r.candidates.size());
    Example ex;
    ex.graph = resolved;
    for (VertexId item : r.candidates) {
      ex.outside = outside_context(*table_, r.query, item, ctx, flat.portrait);
      ex.attributes = features_.encode(r.query, item, r.bucket, zone, recent);
      out.push_back(predict(params_, ex, tape));
    }
    return out;
  }

  ScoreResponse score(const ScoreRequest& r, PredictTape& tape) const {
    const auto t0 = std::chrono::steady_clock::now();
    ScoreResponse resp;
    resp.probabilities = rank(features_for(r), r, tape);
    resp.model_version = version_;
    resp.latency_us = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0).count();
    return resp;
  }

  // Never throws; malformed input becomes an error object.
  nlohmann::json handle(const std::string& body, PredictTape& tape) const {
    try {
      const auto j = nlohmann::json::parse(body);
      return response_to_json(score(parse_request(j), tape));
    } catch (const std::exception& e) {
      return {{"error", e.what()}};
    }
  }

 private:
  ChgatParams params_;
  std::shared_ptr<const BehaviorStore> store_;
  std::shared_ptr<const KnowledgeTable> table_;
  FeatureSpace features_;
  GraphConfig graph_;
  std::string version_;
};

// ---------------------------------------------------------------------------
// Framing

inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

namespace detail {

inline bool read_exact(int fd, void* buf, std::size_t n) {
  auto* p = static_cast<char*>(buf);
  while (n > 0) {
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

inline bool write_all(int fd, const void* buf, std::size_t n) {
  const auto* p = static_cast<const char*>(buf);
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

}  // namespace detail

// Empty optional on a closed connection.
inline std::optional<std::string> read_frame(int fd) {
  unsigned char hdr[4];
  if (!detail::read_exact(fd, hdr, 4)) return std::nullopt;
  const std::uint32_t n = hdr[0] | (hdr[1] << 8) | (hdr[2] << 16) | (static_cast<std::uint32_t>(hdr[3]) << 24);
  if (n > kMaxFrameBytes) throw FormatError("frame of " + std::to_string(n) + " bytes exceeds the limit");
  std::string body(n, '\0');
  if (n && !detail::read_exact(fd, body.data(), n)) return std::nullopt;
  return body;
}

inline bool write_frame(int fd, const std::string& body) {
  const auto n = static_cast<std::uint32_t>(body.size());
  const unsigned char hdr[4] = {static_cast<unsigned char>(n), static_cast<unsigned char>(n >> 8),
                                static_cast<unsigned char>(n >> 16), static_cast<unsigned char>(n >> 24)};
  return detail::write_all(fd, hdr, 4) && detail::write_all(fd, body.data(), body.size());
}

// ---------------------------------------------------------------------------
// Server: one acceptor thread, one handler thread per connection.

class Server {
 public:
  explicit Server(std::shared_ptr<const Scorer> scorer) : scorer_(std::move(scorer)) {}
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  ~Server() { stop(); }

  // Binds host:port (port 0 picks a free port) and starts accepting.
  void start(const std::string& host, std::uint16_t port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw ConfigError("bad bind address " + host);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      const std::string msg = std::strerror(errno);
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw Error("bind " + host + ":" + std::to_string(port) + ": " + msg);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    ::listen(listen_fd_, 128);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  std::uint16_t port() const { return port_; }
  std::uint64_t served() const { return served_.load(); }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> handlers;
    {
      std::lock_guard lock(mu_);
      for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
      handlers.swap(handlers_);
    }
    for (auto& t : handlers) t.join();
  }

 private:
  void accept_loop() {
    while (running_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        break;
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      std::lock_guard lock(mu_);
      if (!running_) {
        ::close(fd);
        break;
      }
      open_fds_.push_back(fd);
      handlers_.emplace_back([this, fd] { handle(fd); });
    }
  }

  void handle(int fd) {
    PredictTape tape;
    while (true) {
      std::optional<std::string> body;
      try {
        body = read_frame(fd);
      } catch (const FormatError& e) {
        write_frame(fd, nlohmann::json{{"error", e.what()}}.dump());
        break;
      }
      if (!body) break;
      const auto reply = scorer_->handle(*body, tape).dump();
      ++served_;
      if (!write_frame(fd, reply)) break;
    }
    std::lock_guard lock(mu_);
    open_fds_.erase(std::remove(open_fds_.begin(), open_fds_.end(), fd), open_fds_.end());
    ::close(fd);
  }

  std::shared_ptr<const Scorer> scorer_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> served_{0};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> handlers_;
  std::vector<int> open_fds_;
};

class Client {
 public:
  Client(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw ConfigError("bad address " + host);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      const std::string msg = std::strerror(errno);
      ::close(fd_);
      throw Error("connect " + host + ":" + std::to_string(port) + ": " + msg);
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;
  ~Client() { ::close(fd_); }

  std::string call_raw(const std::string& body) {
    if (!write_frame(fd_, body)) throw Error("send failed");
    auto reply = read_frame(fd_);
    if (!reply) throw Error("connection closed by server");
    return *reply;
  }

  nlohmann::json call(const nlohmann::json& request) { return nlohmann::json::parse(call_raw(request.dump())); }

 private:
  int fd_ = -1;
};

// ---------------------------------------------------------------------------
// Bench

// One request per distinct test request, drawn uniformly with replacement.
inline std::vector<ScoreRequest> bench_requests(std::span<const Impression> pool, std::size_t count,
                                                std::uint64_t seed) {
  std::vector<ScoreRequest> distinct;
  std::uint64_t last = UINT64_MAX;
  for (const auto& imp : pool) {
    if (distinct.empty() || imp.request_id != last) {
      distinct.push_back({imp.user, imp.query, {}, imp.location, imp.bucket, imp.timestamp});
      last = imp.request_id;
    }
    distinct.back().candidates.push_back(imp.item);
  }
  std::vector<ScoreRequest> out;
  if (distinct.empty() || count == 0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, distinct.size() - 1);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(distinct[pick(rng)]);
  return out;
}

struct BenchResult {
  std::size_t concurrency = 1;
  std::vector<std::int64_t> latency_us;   // client-observed round trip, request order
  std::vector<nlohmann::json> responses;  // request order
  double wall_seconds = 0.0;
  std::size_t errors = 0;

  double throughput() const { return wall_seconds > 0 ? static_cast<double>(latency_us.size()) / wall_seconds : 0.0; }
};

// Workers take requests by a shared counter; each holds one connection.
inline BenchResult run_bench(const std::string& host, std::uint16_t port, std::span<const ScoreRequest> requests,
                             std::size_t concurrency) {
  if (concurrency == 0) throw ConfigError("concurrency must be positive");
  BenchResult r;
  r.concurrency = concurrency;
  r.latency_us.assign(requests.size(), 0);
  r.responses.assign(requests.size(), nlohmann::json());
  std::vector<std::string> bodies;
  bodies.reserve(requests.size());
  for (const auto& q : requests) bodies.push_back(request_to_json(q).dump());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> errors{0};
  std::vector<std::exception_ptr> failures(concurrency);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < concurrency; ++w) {
    workers.emplace_back([&, w] {
      try {
        Client client(host, port);
        for (std::size_t i = next++; i < bodies.size(); i = next++) {
          const auto s = std::chrono::steady_clock::now();
          auto reply = nlohmann::json::parse(client.call_raw(bodies[i]));
          r.latency_us[i] =
              std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - s).count();
          if (reply.contains("error")) ++errors;
          r.responses[i] = std::move(reply);
        }
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.errors = errors;
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return r;
}

struct LatencySummary {
  std::size_t count = 0;
  std::int64_t p50 = 0, p90 = 0, p99 = 0, max = 0;
};

// Nearest-rank percentiles.
inline LatencySummary summarize(std::vector<std::int64_t> us) {
  LatencySummary s;
  s.count = us.size();
  if (us.empty()) return s;
  std::sort(us.begin(), us.end());
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(us.size())));
    return us[std::clamp<std::size_t>(k, 1, us.size()) - 1];
  };
  s.p50 = rank(0.50);
  s.p90 = rank(0.90);
  s.p99 = rank(0.99);
  s.max = us.back();
  return s;
}

// Power-of-two buckets: lower_us, upper_us (exclusive), count. Empty input
// gives only the header.
inline std::string latency_histogram_csv(std::span<const std::int64_t> us) {
  std::string out = "lower_us,upper_us,count\n";
  if (us.empty()) return out;
  std::vector<std::size_t> counts;
  for (auto v : us) {
    std::size_t b = 0;
    while ((std::int64_t{1} << b) <= v) ++b;
    if (counts.size() <= b) counts.resize(b + 1, 0);
    ++counts[b];
  }
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const std::int64_t lo = b == 0 ? 0 : std::int64_t{1} << (b - 1);
    const std::int64_t hi = std::int64_t{1} << b;
    out += std::to_string(lo) + "," + std::to_string(hi) + "," + std::to_string(counts[b]) + "\n";
  }
  return out;
}

}  // namespace chgat
