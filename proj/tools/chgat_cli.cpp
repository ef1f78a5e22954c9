// chgat_cli: generate worlds, build graphs, train, evaluate, flatten,
// serve and benchmark.

#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "chgat/config.hpp"
#include "chgat/flatseq.hpp"
#include "chgat/io.hpp"
#include "chgat/model.hpp"
#include "chgat/serve.hpp"
#include "chgat/world.hpp"

namespace fs = std::filesystem;
using namespace chgat;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--seed", c.seed, "Seed for world generation and training");
  cmd->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
}

RunConfig resolve_config(const Common& c, const std::optional<fs::path>& data = std::nullopt) {
  RunConfig cfg;
  if (!c.config.empty()) {
    cfg = RunConfig::load(c.config);
  } else if (data) {
    cfg = RunConfig::load((*data / "run.cfg").string());
  }
  if (c.seed) cfg.set_seed(*c.seed);
  cfg.validate();
  return cfg;
}

std::ofstream open_output(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  return os;
}

// Loads a world directory with the run's graph settings applied.
Prepared load_prepared(const fs::path& data, const RunConfig& cfg) {
  auto loaded = load_world(data);
  loaded.world.config.hard_threshold = cfg.world.hard_threshold;
  return prepare(std::move(loaded.world), std::move(loaded.table), cfg.graph, cfg.d);
}

std::vector<std::pair<std::uint64_t, const Impression*>> distinct_requests(const std::vector<Impression>& imps) {
  std::vector<std::pair<std::uint64_t, const Impression*>> out;
  for (const auto& imp : imps) {
    if (out.empty() || out.back().first != imp.request_id) out.emplace_back(imp.request_id, &imp);
  }
  return out;
}

std::shared_ptr<const Scorer> make_scorer(const fs::path& data, const std::string& model, const RunConfig& cfg) {
  auto loaded = load_world(data);
  auto params = load_checkpoint(model);
  auto store = std::make_shared<const BehaviorStore>(loaded.world.store());
  loaded.table.reserve_vocab(params.shape.vocab);
  auto table = std::make_shared<const KnowledgeTable>(std::move(loaded.table));
  return std::make_shared<const Scorer>(std::move(params), store, table, loaded.world.features(), cfg.graph);
}

int cmd_gen(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  World w = generate_world(cfg.world);
  const KnowledgeTable table = build_synthetic_table(w.catalog, w.config.knowledge(cfg.k_max, cfg.share_knowledge));
  save_world(c.out, w, table, cfg);
  nlohmann::json j{{"out", c.out},
                   {"events", w.events.size()},
                   {"train", w.train.size()},
                   {"validation", w.validation.size()},
                   {"test", w.test.size()},
                   {"vocab", table.vocab_size()}};
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_build_graph(const Common& c, const std::string& data, const std::string& user) {
  const RunConfig cfg = resolve_config(c, fs::path(data));
  auto loaded = load_world(data);
  const BehaviorStore store = loaded.world.store();
  const std::optional<VertexId> only = user.empty() ? std::nullopt : std::optional(VertexId::parse(user));
  auto os = open_output(c.out);
  for (const auto& [rid, imp] : distinct_requests(loaded.world.test)) {
    if (only && imp->user != *only) continue;
    const UserGraph g = store.build_graph(imp->user, imp->location, imp->timestamp, cfg.graph);
    os << nlohmann::json{{"request_id", rid}, {"timestamp", imp->timestamp}, {"graph", graph_to_json(g)}}.dump()
       << '\n';
  }
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& variant, std::string metrics) {
  const RunConfig cfg = resolve_config(c, fs::path(data));
  const Prepared p = load_prepared(data, cfg);
  TrainConfig tc = cfg.train;
  if (variant == "context_free") {
    tc.variant = ModelVariant::context_free;
    tc.beta = 0.0;
  } else if (variant != "full") {
    throw UsageError("variant must be full or context_free");
  }
  const TrainResult r = train(p.train, p.validation, p.shape, tc);
  {
    auto os = open_output(c.out);
    const auto bytes = checkpoint_bytes(r.params);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (metrics.empty()) metrics = c.out + ".metrics.csv";
  open_output(metrics) << metrics_csv(r.log);
  std::cout << nlohmann::json{{"model", c.out},
                              {"metrics", metrics},
                              {"best_epoch", r.best_epoch},
                              {"version", model_version(r.params)}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_eval(const Common& c, const std::string& data, const std::string& model) {
  const RunConfig cfg = resolve_config(c, fs::path(data));
  const Prepared p = load_prepared(data, cfg);
  const ChgatParams params = load_checkpoint(model, &p.shape);
  auto os = open_output(c.out);
  os << "split,count,auc,ndcg\n";
  const std::pair<const char*, const std::vector<Example>*> splits[] = {
      {"validation", &p.validation}, {"full_day", &p.full_day}, {"full_week", &p.full_week}, {"full_week_hard", &p.hard}};
  for (const auto& [name, set] : splits) {
    char buf[160];
    try {
      const auto m = evaluate(params, *set, ModelVariant::full, cfg.ndcg_depth);
      std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f\n", name, m.count, m.auc, m.ndcg);
    } catch (const MetricError&) {
      std::snprintf(buf, sizeof buf, "%s,%zu,nan,nan\n", name, set->size());
    }
    os << buf;
  }
  return 0;
}

int cmd_flatten(const Common& c, const std::string& data, const std::string& binary_dir) {
  const RunConfig cfg = resolve_config(c, fs::path(data));
  auto loaded = load_world(data);
  const BehaviorStore store = loaded.world.store();
  auto os = open_output(c.out);
  if (!binary_dir.empty()) fs::create_directories(binary_dir);
  for (const auto& [rid, imp] : distinct_requests(loaded.world.test)) {
    const UserGraph g = store.build_graph(imp->user, imp->location, imp->timestamp, cfg.graph);
    const FlatGraph f = flatten_graph(g, cfg.graph);
    nlohmann::json seqs;
    for (int k = 0; k < kMetaPathKinds; ++k) {
      const auto& s = f.kinds[k];
      seqs[kind_name(static_cast<MetaPathKind>(k))] = {{"layout", {s.layout.n1, s.layout.n2, s.layout.n3}},
                                                       {"slots", s.slots}};
      if (!binary_dir.empty()) {
        const auto bytes = encode(s);
        std::ofstream bin(fs::path(binary_dir) / (std::to_string(rid) + "_" + kind_name(static_cast<MetaPathKind>(k)) + ".fsq"),
                          std::ios::binary);
        bin.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      }
    }
    os << nlohmann::json{{"request_id", rid}, {"user", f.user.str()}, {"portrait", f.portrait.str()}, {"sequences", seqs}}
              .dump()
       << '\n';
  }
  return 0;
}

int cmd_serve(const Common& c, const std::string& data, const std::string& model, const std::string& host,
              std::uint16_t port, double max_seconds) {
  const RunConfig cfg = resolve_config(c, fs::path(data));
  auto scorer = make_scorer(data, model, cfg);
  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
  Server server(scorer);
  server.start(host, port);
  const auto hello =
      nlohmann::json{{"host", host}, {"port", server.port()}, {"model_version", scorer->version()}}.dump();
  if (!c.out.empty()) open_output(c.out) << hello << '\n';
  std::cout << hello << std::endl;
  if (max_seconds > 0) {
    timespec ts{static_cast<time_t>(max_seconds), static_cast<long>((max_seconds - static_cast<time_t>(max_seconds)) * 1e9)};
    sigtimedwait(&stop_signals, nullptr, &ts);
  } else {
    int sig = 0;
    sigwait(&stop_signals, &sig);
  }
  server.stop();
  std::cerr << "served " << server.served() << " requests\n";
  return 0;
}

int cmd_bench(const Common& c, const std::string& data, const std::string& model, std::size_t concurrency,
              std::size_t requests, const std::string& connect) {
  const RunConfig cfg = resolve_config(c, fs::path(data));
  auto loaded = load_world(data);
  const auto mix = bench_requests(loaded.world.test, requests, cfg.world.seed);
  std::unique_ptr<Server> local;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  if (connect.empty()) {
    if (model.empty()) throw UsageError("bench needs --model or --connect");
    local = std::make_unique<Server>(make_scorer(data, model, cfg));
    local->start(host, 0);
    port = local->port();
  } else {
    const auto colon = connect.rfind(':');
    if (colon == std::string::npos) throw UsageError("--connect expects host:port");
    host = connect.substr(0, colon);
    port = static_cast<std::uint16_t>(std::stoul(connect.substr(colon + 1)));
  }
  const BenchResult r = run_bench(host, port, mix, concurrency);
  if (local) local->stop();
  open_output(c.out) << latency_histogram_csv(r.latency_us);
  const auto s = summarize(r.latency_us);
  std::cout << nlohmann::json{{"requests", s.count},     {"concurrency", concurrency},
                              {"p50_us", s.p50},         {"p90_us", s.p90},
                              {"p99_us", s.p99},         {"max_us", s.max},
                              {"throughput_rps", r.throughput()}, {"errors", r.errors}}
                   .dump()
            << '\n';
  return r.errors == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CHGAT click-through rate model: data, training, evaluation and serving"};
  app.require_subcommand(1);

  Common gen_c, graph_c, train_c, eval_c, flat_c, serve_c, bench_c;
  std::string data, model, user, variant = "full", metrics, binary_dir, host = "127.0.0.1", connect;
  std::uint16_t port = 0;
  double max_seconds = 0;
  std::size_t concurrency = 1, requests = 1000;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic world into the --out directory");
  add_common(gen, gen_c);

  auto* graph = app.add_subcommand("build-graph", "Write the user graph of every test request as JSON lines");
  add_common(graph, graph_c);
  graph->add_option("--data", data, "World directory")->required()->check(CLI::ExistingDirectory);
  graph->add_option("--user", user, "Only this user (e.g. u3)");

  auto* tr = app.add_subcommand("train", "Train a model; writes the checkpoint to --out");
  add_common(tr, train_c);
  tr->add_option("--data", data, "World directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--variant", variant, "full or context_free")->check(CLI::IsMember({"full", "context_free"}));
  tr->add_option("--metrics", metrics, "Per-epoch metrics CSV (default <out>.metrics.csv)");

  auto* ev = app.add_subcommand("eval", "Write AUC/NDCG per evaluation split as CSV");
  add_common(ev, eval_c);
  ev->add_option("--data", data, "World directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);

  auto* fl = app.add_subcommand("flatten", "Write flat sequences of every test request as JSON lines");
  add_common(fl, flat_c);
  fl->add_option("--data", data, "World directory")->required()->check(CLI::ExistingDirectory);
  fl->add_option("--binary", binary_dir, "Also write encoded sequences into this directory");

  auto* sv = app.add_subcommand("serve", "Run the scoring service until SIGINT/SIGTERM");
  add_common(sv, serve_c, false);
  sv->add_option("--data", data, "World directory")->required()->check(CLI::ExistingDirectory);
  sv->add_option("--model", model, "Checkpoint")->required()->check(CLI::ExistingFile);
  sv->add_option("--host", host, "Bind address");
  sv->add_option("--port", port, "Bind port (0 picks one)");
  sv->add_option("--max-seconds", max_seconds, "Stop after this long (0 = run until signalled)");

  auto* bn = app.add_subcommand("bench", "Replay test requests against the service; histogram CSV to --out");
  add_common(bn, bench_c);
  bn->add_option("--data", data, "World directory")->required()->check(CLI::ExistingDirectory);
  bn->add_option("--model", model, "Checkpoint for an in-process service")->check(CLI::ExistingFile);
  bn->add_option("--connect", connect, "host:port of a running service instead");
  bn->add_option("--concurrency", concurrency, "Client connections")->check(CLI::PositiveNumber);
  bn->add_option("--requests", requests, "Request count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_c);
    if (graph->parsed()) return cmd_build_graph(graph_c, data, user);
    if (tr->parsed()) return cmd_train(train_c, data, variant, metrics);
    if (ev->parsed()) return cmd_eval(eval_c, data, model);
    if (fl->parsed()) return cmd_flatten(flat_c, data, binary_dir);
    if (sv->parsed()) return cmd_serve(serve_c, data, model, host, port, max_seconds);
    if (bn->parsed()) return cmd_bench(bench_c, data, model, concurrency, requests, connect);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
