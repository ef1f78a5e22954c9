#include <gtest/gtest.h>

#include <thread>

#include "chgat/serve.hpp"
#include "support.hpp"

using namespace chgat;

namespace {

struct ServeFixture {
  Prepared prepared;
  std::shared_ptr<const Scorer> scorer;
};

const ServeFixture& fixture() {
  static const ServeFixture f = [] {
    ServeFixture s{prepare(generate_world(fixtures::tiny_world(6)), GraphConfig{}, 8), nullptr};
    auto params = ChgatParams::init(s.prepared.shape, 1.0, 0.01, 6);
    s.scorer = std::make_shared<const Scorer>(std::move(params), std::make_shared<const BehaviorStore>(s.prepared.store),
                                              std::make_shared<const KnowledgeTable>(s.prepared.table),
                                              s.prepared.world.features(), s.prepared.graph);
    return s;
  }();
  return f;
}

// Test impressions grouped back into requests.
std::vector<std::pair<ScoreRequest, std::vector<std::size_t>>> test_requests() {
  std::vector<std::pair<ScoreRequest, std::vector<std::size_t>>> out;
  const auto& test = fixture().prepared.world.test;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& imp = test[i];
    if (out.empty() || test[out.back().second.front()].request_id != imp.request_id) {
      out.push_back({{imp.user, imp.query, {}, imp.location, imp.bucket, imp.timestamp}, {}});
    }
    out.back().first.candidates.push_back(imp.item);
    out.back().second.push_back(i);
  }
  return out;
}

}  // namespace

TEST(Scorer, MatchesOfflinePrediction) {
  const auto& f = fixture();
  PredictTape tape;
  std::size_t checked = 0;
  for (const auto& [req, idx] : test_requests()) {
    const auto probs = f.scorer->score(req, tape).probabilities;
    ASSERT_EQ(probs.size(), idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Example& ex = f.prepared.full_week[idx[k]];
      EXPECT_NEAR(probs[k], predict(f.scorer->params(), ex), 1e-9);
      ++checked;
    }
  }
  EXPECT_EQ(checked, f.prepared.full_week.size());
}

TEST(Scorer, UnknownUserFarFromEveryoneGetsTheAttributeScore) {
  const auto& f = fixture();
  ScoreRequest r{VertexId::user(99999), VertexId::query(1), {VertexId::item(0), VertexId::item(5)}, {-500, -500},
                 TimeBucket::evening, std::nullopt};
  PredictTape tape;
  const auto flat = f.scorer->features_for(r);
  const auto g = unflatten_graph(flat);
  EXPECT_TRUE(g.self_paths.empty());
  EXPECT_TRUE(g.sim_paths.empty());
  const auto probs = f.scorer->score(r, tape).probabilities;
  const auto& p = f.scorer->params();
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const auto a = f.scorer->features().encode(r.query, r.candidates[k], r.bucket,
                                               f.scorer->store().geography().zone_of(r.location), 0);
    const double z = nn::mlp_forward(p.ori, nn::mlp_forward(p.attri, a))[0];
    EXPECT_NEAR(probs[k], sigmoid(z), 1e-12);
  }
}

TEST(Scorer, MalformedRequestsBecomeErrors) {
  const auto& f = fixture();
  PredictTape tape;
  for (const char* body : {"not json", "[]", R"({"user_id":"q1"})",
                           R"({"user_id":"u1","query_id":"q1","candidates":[],"location":[1,1],"time_bucket":0})",
                           R"({"user_id":"u1","query_id":"q1","candidates":["i1"],"location":[1],"time_bucket":0})",
                           R"({"user_id":"u1","query_id":"q1","candidates":["i1"],"location":[1,1],"time_bucket":9})"}) {
    const auto j = f.scorer->handle(body, tape);
    EXPECT_TRUE(j.contains("error")) << body;
  }
}

TEST(Scorer, RequestJsonRoundTrips) {
  const auto reqs = test_requests();
  const auto& r = reqs.front().first;
  const auto back = parse_request(request_to_json(r));
  EXPECT_EQ(back.user, r.user);
  EXPECT_EQ(back.candidates, r.candidates);
  EXPECT_EQ(back.location.x, r.location.x);
  EXPECT_EQ(back.timestamp, r.timestamp);
}

TEST(Server, AnswersOverTcpAndSurvivesBadFrames) {
  const auto& f = fixture();
  Server server(f.scorer);
  server.start("127.0.0.1", 0);
  ASSERT_NE(server.port(), 0);
  Client client("127.0.0.1", server.port());
  const auto bad = nlohmann::json::parse(client.call_raw("{broken"));
  EXPECT_TRUE(bad.contains("error"));
  const auto req = test_requests().front().first;
  const auto ok = client.call(request_to_json(req));
  ASSERT_FALSE(ok.contains("error")) << ok.dump();
  EXPECT_EQ(ok["model_version"], f.scorer->version());
  const auto probs = ok["probabilities"].get<std::vector<double>>();
  ASSERT_EQ(probs.size(), req.candidates.size());
  PredictTape tape;
  const auto direct = f.scorer->score(req, tape).probabilities;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    EXPECT_GT(probs[k], 0.0);
    EXPECT_LT(probs[k], 1.0);
    EXPECT_EQ(probs[k], direct[k]);
  }
  server.stop();
  EXPECT_GE(server.served(), 2u);
}

TEST(Server, ConcurrencyDoesNotChangeAnswers) {
  const auto& f = fixture();
  Server server(f.scorer);
  server.start("127.0.0.1", 0);
  const auto reqs = bench_requests(f.prepared.world.test, 200, 4);
  const auto one = run_bench("127.0.0.1", server.port(), reqs, 1);
  const auto eight = run_bench("127.0.0.1", server.port(), reqs, 8);
  server.stop();
  EXPECT_EQ(one.errors, 0u);
  EXPECT_EQ(eight.errors, 0u);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_EQ(one.responses[i]["probabilities"], eight.responses[i]["probabilities"]) << "request " << i;
  }
}

TEST(Server, P99LatencyUnderFiftyMillis) {
  const auto& f = fixture();
  Server server(f.scorer);
  server.start("127.0.0.1", 0);
  const auto reqs = bench_requests(f.prepared.world.test, 500, 5);
  const auto r = run_bench("127.0.0.1", server.port(), reqs, 1);
  server.stop();
  const auto s = summarize(r.latency_us);
  EXPECT_EQ(s.count, 500u);
  EXPECT_LE(s.p50, s.p99);
  EXPECT_LT(s.p99, 50'000);
}

TEST(Server, ThroughputScalesWithConcurrency) {
  if (std::thread::hardware_concurrency() < 4) {
    GTEST_SKIP() << "needs at least 4 hardware threads, have " << std::thread::hardware_concurrency();
  }
  const auto& f = fixture();
  Server server(f.scorer);
  server.start("127.0.0.1", 0);
  const auto reqs = bench_requests(f.prepared.world.test, 2000, 6);
  const auto one = run_bench("127.0.0.1", server.port(), reqs, 1);
  const auto eight = run_bench("127.0.0.1", server.port(), reqs, 8);
  server.stop();
  EXPECT_GE(eight.throughput(), 2.0 * one.throughput());
}

TEST(Bench, SummaryAndHistogram) {
  EXPECT_EQ(latency_histogram_csv({}), "lower_us,upper_us,count\n");
  EXPECT_EQ(summarize({}).count, 0u);
  const std::vector<std::int64_t> us{0, 1, 3, 3, 100};
  EXPECT_EQ(latency_histogram_csv(us), "lower_us,upper_us,count\n0,1,1\n1,2,1\n2,4,2\n4,8,0\n8,16,0\n16,32,0\n32,64,0\n64,128,1\n");
  const auto s = summarize(us);
  EXPECT_EQ(s.p50, 3);
  EXPECT_EQ(s.p99, 100);
  EXPECT_EQ(s.max, 100);
}

TEST(Bench, RequestsAreDrawnDeterministically) {
  const auto& test = fixture().prepared.world.test;
  const auto a = bench_requests(test, 50, 1), b = bench_requests(test, 50, 1);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(request_to_json(a[i]), request_to_json(b[i]));
}
