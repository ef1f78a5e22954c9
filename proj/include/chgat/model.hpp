#pragma once

// Prediction head and training loop. The click logit is the sum of three
// tower logits:
//   z = f_chgat(e_self || a) + beta / max(1, |Phi_chgat|) * f_sim(e_sim || a) + f_ori(a)
// where a = f_attri(attributes). Absent towers contribute 0. Loss is mean
// binary cross-entropy plus lambda * (sum of squared MLP weights).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "chgat/attention.hpp"
#include "chgat/error.hpp"
#include "chgat/knowledge.hpp"
#include "chgat/metrics.hpp"
#include "chgat/nn.hpp"

namespace chgat {

struct ModelShape {
  std::size_t vocab = 1;
  std::size_t d = 16;
  std::size_t attr_width = 1;
  std::size_t attr_hidden = 16;
  std::size_t attention_hidden = 32;
  std::vector<std::size_t> tower_hidden{64, 32};

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

inline nn::MlpSpec attri_spec(const ModelShape& s) {
  nn::MlpSpec spec;
  spec.widths = {s.attr_width, s.attr_hidden};
  spec.activations = {nn::Activation::relu};
  return spec;
}

inline nn::MlpSpec tower_spec(std::size_t input, const ModelShape& s) {
  std::vector<std::size_t> widths{input};
  widths.insert(widths.end(), s.tower_hidden.begin(), s.tower_hidden.end());
  widths.push_back(1);
  return nn::MlpSpec::hidden_relu(std::move(widths));
}

struct ChgatParams {
  ModelShape shape;
  double beta = 1.0;
  double lambda = 0.01;
  nn::Matrix embedding;  // vocab x d, row 0 pinned at zero
  AttentionBank bank;
  nn::Mlp attri;
  nn::Mlp chgat;
  nn::Mlp sim;
  nn::Mlp ori;
  // Bumped by touch(); lets tapes detect that cached projections are stale.
  std::uint64_t version = 0;

  static ChgatParams zeros(const ModelShape& s, double beta, double lambda) {
    if (beta < 0.0 || lambda < 0.0) throw ConfigError("beta and lambda must be non-negative");
    if (s.vocab == 0 || s.d == 0 || s.attr_width == 0) throw ConfigError("model dimensions must be positive");
    ChgatParams p;
    p.shape = s;
    p.beta = beta;
    p.lambda = lambda;
    p.embedding = nn::Matrix(s.vocab, s.d);
    p.bank = AttentionBank::zeros(s.d, s.attention_hidden);
    p.attri = nn::Mlp::zeros(attri_spec(s));
    p.chgat = nn::Mlp::zeros(tower_spec(s.d + s.attr_hidden, s));
    p.sim = nn::Mlp::zeros(tower_spec(s.d + s.attr_hidden, s));
    p.ori = nn::Mlp::zeros(tower_spec(s.attr_hidden, s));
    return p;
  }

  static ChgatParams init(const ModelShape& s, double beta, double lambda, std::uint64_t seed) {
    ChgatParams p = zeros(s, beta, lambda);
    std::mt19937_64 rng(seed);
    p.embedding = init_knowledge_embedding(s.vocab, s.d, rng);
    p.bank = AttentionBank::init(s.d, s.attention_hidden, rng);
    p.attri = nn::Mlp::init(attri_spec(s), rng);
    p.chgat = nn::Mlp::init(tower_spec(s.d + s.attr_hidden, s), rng);
    p.sim = nn::Mlp::init(tower_spec(s.d + s.attr_hidden, s), rng);
    p.ori = nn::Mlp::init(tower_spec(s.attr_hidden, s), rng);
    return p;
  }

  ChgatParams zeros_like() const { return zeros(shape, beta, lambda); }

  // Visits every tensor in checkpoint order:
  // f(name, matrix, regularized, frozen_row0).
  template <class Self, class F>
  static void visit(Self& p, F&& f) {
    f("embedding", p.embedding, false, true);
    auto mlp = [&](const char* name, auto& m) {
      for (std::size_t l = 0; l < m.weights.size(); ++l) {
        f(std::string(name) + ".w" + std::to_string(l), m.weights[l], true, false);
        f(std::string(name) + ".b" + std::to_string(l), m.biases[l], false, false);
      }
    };
    mlp("attention.item", p.bank.item);
    mlp("attention.query", p.bank.query);
    mlp("attention.location", p.bank.location);
    mlp("attention.user", p.bank.user);
    mlp("attri", p.attri);
    mlp("chgat", p.chgat);
    mlp("sim", p.sim);
    mlp("ori", p.ori);
  }

  std::vector<nn::ParamRef> bind(ChgatParams& grads) {
    std::vector<nn::ParamRef> refs;
    visit(*this, [&](const std::string& name, nn::Matrix& m, bool reg, bool frozen) {
      refs.push_back({name, &m, nullptr, reg, frozen});
    });
    std::size_t k = 0;
    visit(grads, [&](const std::string&, nn::Matrix& m, bool, bool) { refs[k++].grad = &m; });
    return refs;
  }

  void touch() {
    ++version;
    for (auto* m : {&bank.item, &bank.query, &bank.location, &bank.user, &attri, &chgat, &sim, &ori}) m->touch();
  }

  // Sum of squared MLP weight entries (biases and embeddings excluded).
  double l2_penalty() const {
    double r = 0.0;
    visit(*this, [&](const std::string&, const nn::Matrix& m, bool reg, bool) {
      if (!reg) return;
      for (double v : m.values()) r += v * v;
    });
    return r;
  }

  std::size_t embedding_parameters() const { return embedding.size(); }
};

// One labeled record with its graph resolved to knowledge units.
struct Example {
  std::shared_ptr<const ResolvedGraph> graph;  // null = empty graph
  OutsideContext outside;
  std::vector<double> attributes;
  int label = 0;
  std::uint64_t group = 0;  // ranking group (request) for NDCG

  std::size_t self_paths() const { return graph ? graph->self_paths.size() : 0; }
};

enum class ModelVariant {
  full,          // all towers
  context_free,  // attribute tower only; graph towers are skipped
};

struct PredictTape {
  RepresentationTape rep;
  const ChgatParams* cache_owner = nullptr;
  std::uint64_t cache_version = 0;
  nn::MlpTape attri, chgat, sim, ori;
  std::vector<double> a;
  std::vector<double> tower_in;
  bool self_on = false;
  bool sim_on = false;
  double z_self = 0.0, z_sim = 0.0, z_ori = 0.0;
  double sim_scale = 0.0;
  double logit = 0.0;
  double prob = 0.5;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline const ResolvedGraph& empty_graph() {
  static const ResolvedGraph g;
  return g;
}

inline double predict(const ChgatParams& p, const Example& ex, PredictTape& tape,
                      ModelVariant variant = ModelVariant::full) {
  const std::size_t d = p.shape.d;
  auto a = nn::mlp_forward(p.attri, ex.attributes, tape.attri);
  tape.a.assign(a.begin(), a.end());
  const bool graph_on = variant == ModelVariant::full;
  const ResolvedGraph& g = ex.graph ? *ex.graph : empty_graph();
  tape.self_on = tape.sim_on = false;
  tape.z_self = tape.z_sim = 0.0;
  tape.sim_scale = 0.0;
  if (graph_on) {
    const bool want_sim = p.beta != 0.0;
    const bool reuse = tape.cache_owner == &p && tape.cache_version == p.version;
    user_representation(p.embedding, p.bank, g, ex.outside, tape.rep, want_sim, reuse);
    tape.cache_owner = &p;
    tape.cache_version = p.version;
    auto tower = [&](const std::vector<double>& rep, const nn::Mlp& net, nn::MlpTape& t) {
      tape.tower_in.resize(d + tape.a.size());
      std::copy(rep.begin(), rep.end(), tape.tower_in.begin());
      std::copy(tape.a.begin(), tape.a.end(), tape.tower_in.begin() + static_cast<std::ptrdiff_t>(d));
      return nn::mlp_forward(net, tape.tower_in, t)[0];
    };
    if (tape.rep.self.present) {
      tape.self_on = true;
      tape.z_self = tower(tape.rep.self.rep, p.chgat, tape.chgat);
    }
    if (want_sim && tape.rep.sim.present) {
      tape.sim_on = true;
      tape.sim_scale = p.beta / static_cast<double>(std::max<std::size_t>(1, tape.rep.self_count));
      tape.z_sim = tower(tape.rep.sim.rep, p.sim, tape.sim);
    }
  }
  tape.z_ori = nn::mlp_forward(p.ori, tape.a, tape.ori)[0];
  tape.logit = tape.z_self + tape.sim_scale * tape.z_sim + tape.z_ori;
  tape.prob = sigmoid(tape.logit);
  return tape.prob;
}

inline double predict(const ChgatParams& p, const Example& ex, ModelVariant variant = ModelVariant::full) {
  PredictTape tape;
  return predict(p, ex, tape, variant);
}

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logit).
// With flush=false part of the gradient is held in the tape until
// flush_gradients().
inline void backward(const ChgatParams& p, const Example& ex, PredictTape& tape, double dlogit,
                     ChgatParams& grads, bool flush = true) {
  if (dlogit == 0.0) return;
  const std::size_t d = p.shape.d;
  const std::size_t h = p.shape.attr_hidden;
  std::vector<double> da(h, 0.0);
  const double one[1] = {dlogit};
  nn::mlp_backward(p.ori, tape.ori, one, grads.ori, da);
  std::vector<double> d_self, d_sim;
  std::vector<double> din(d + h);
  if (tape.self_on) {
    std::fill(din.begin(), din.end(), 0.0);
    nn::mlp_backward(p.chgat, tape.chgat, one, grads.chgat, din);
    d_self.assign(din.begin(), din.begin() + static_cast<std::ptrdiff_t>(d));
    for (std::size_t i = 0; i < h; ++i) da[i] += din[d + i];
  }
  if (tape.sim_on) {
    const double scaled[1] = {dlogit * tape.sim_scale};
    std::fill(din.begin(), din.end(), 0.0);
    nn::mlp_backward(p.sim, tape.sim, scaled, grads.sim, din);
    d_sim.assign(din.begin(), din.begin() + static_cast<std::ptrdiff_t>(d));
    for (std::size_t i = 0; i < h; ++i) da[i] += din[d + i];
  }
  nn::mlp_backward(p.attri, tape.attri, da, grads.attri);
  if (tape.self_on || tape.sim_on) {
    const ResolvedGraph& g = ex.graph ? *ex.graph : empty_graph();
    user_representation_backward(p.embedding, p.bank, g, ex.outside, tape.rep, d_self, d_sim, grads.embedding,
                                 grads.bank, flush);
  }
}

inline void flush_gradients(const ChgatParams& p, PredictTape& tape, ChgatParams& grads) {
  if (tape.cache_owner != &p || tape.cache_version != p.version) return;
  tape.rep.cache.flush_units(p.embedding, p.bank, grads.embedding, grads.bank);
}

inline constexpr double kProbClip = 1e-7;

inline double cross_entropy(double prob, int label) {
  const double pc = std::clamp(prob, kProbClip, 1.0 - kProbClip);
  return label ? -std::log(pc) : -std::log(1.0 - pc);
}

// Mean cross-entropy over `batch` plus reg_scale * lambda * R. When
// `grads` is given the full gradient is accumulated into it.
inline double batch_loss(const ChgatParams& p, std::span<const Example* const> batch, ModelVariant variant,
                         ChgatParams* grads = nullptr, double reg_scale = 1.0) {
  if (batch.empty()) throw ConfigError("loss over an empty batch");
  PredictTape tape;
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const Example* ex : batch) {
    const double prob = predict(p, *ex, tape, variant);
    total += cross_entropy(prob, ex->label);
    if (grads && prob > kProbClip && prob < 1.0 - kProbClip) {
      backward(p, *ex, tape, (prob - ex->label) * inv, *grads, false);
    }
  }
  if (grads) flush_gradients(p, tape, *grads);
  const double lambda = p.lambda * reg_scale;
  const double loss = total * inv + lambda * p.l2_penalty();
  if (!std::isfinite(loss)) throw TrainingError("non-finite loss");
  if (grads && lambda != 0.0) {
    std::vector<const nn::Matrix*> values;
    ChgatParams::visit(p, [&](const std::string&, const nn::Matrix& m, bool, bool) { values.push_back(&m); });
    std::size_t k = 0;
    ChgatParams::visit(*grads, [&](const std::string&, nn::Matrix& g, bool reg, bool) {
      const nn::Matrix& v = *values[k++];
      if (!reg) return;
      auto gv = g.values();
      auto vv = v.values();
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += 2.0 * lambda * vv[i];
    });
  }
  return loss;
}

inline double batch_loss(const ChgatParams& p, std::span<const Example> batch, ModelVariant variant,
                         ChgatParams* grads = nullptr, double reg_scale = 1.0) {
  std::vector<const Example*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  return batch_loss(p, ptrs, variant, grads, reg_scale);
}

inline std::vector<double> score_all(const ChgatParams& p, std::span<const Example> examples,
                                     ModelVariant variant = ModelVariant::full) {
  PredictTape tape;
  std::vector<double> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(predict(p, ex, tape, variant));
  return out;
}

struct EvalMetrics {
  double auc = 0.5;
  double ndcg = 0.0;
  std::size_t count = 0;
};

// ndcg_depth 0 ranks whole groups.
inline EvalMetrics evaluate(const ChgatParams& p, std::span<const Example> examples,
                            ModelVariant variant = ModelVariant::full, std::size_t ndcg_depth = 0) {
  const auto scores = score_all(p, examples, variant);
  std::vector<int> labels;
  std::vector<std::uint64_t> groups;
  for (const auto& e : examples) {
    labels.push_back(e.label);
    groups.push_back(e.group);
  }
  EvalMetrics m;
  m.count = examples.size();
  m.auc = auc(scores, labels);
  m.ndcg = ndcg(scores, labels, groups, ndcg_depth).mean;
  return m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  double beta = 1.0;
  double lambda = 0.01;
  std::size_t patience = 3;
  double divergence_loss = 1e3;
  ModelVariant variant = ModelVariant::full;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
  double val_ndcg = 0.0;
};

struct TrainResult {
  ChgatParams params;
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;
};

// Zeroes the graph towers and attention networks so the attribute tower
// alone determines the logit whatever graph is supplied.
inline void disable_graph_towers(ChgatParams& p) {
  for (auto* m : {&p.chgat, &p.sim, &p.bank.item, &p.bank.query, &p.bank.location, &p.bank.user}) {
    for (auto& w : m->weights) w.fill(0.0);
    for (auto& b : m->biases) b.fill(0.0);
  }
  p.touch();
}

// Adam on shuffled minibatches; after every epoch the validation AUC is
// computed and training stops once it has not improved for `patience`
// epochs. The best-validation parameters are returned.
//
// The objective is the summed cross-entropy over the training set plus
// lambda * R. Each minibatch step uses it divided by the training-set size,
// i.e. mean batch cross-entropy plus (lambda / N) * R.
inline TrainResult train(std::span<const Example> train_set, std::span<const Example> val_set,
                         const ModelShape& shape, const TrainConfig& cfg) {
  if (train_set.empty() || val_set.empty()) throw ConfigError("training and validation sets must be non-empty");
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw ConfigError("epochs and batch size must be positive");
  TrainResult result;
  ChgatParams params = ChgatParams::init(shape, cfg.beta, cfg.lambda, cfg.seed);
  if (cfg.variant == ModelVariant::context_free) disable_graph_towers(params);
  ChgatParams grads = params.zeros_like();
  auto refs = params.bind(grads);
  if (cfg.variant == ModelVariant::context_free) {
    // Graph towers and attention stay frozen.
    std::erase_if(refs, [](const nn::ParamRef& r) { return !(r.name.starts_with("attri") || r.name.starts_with("ori")); });
  }
  nn::AdamState adam;
  adam.config.learning_rate = cfg.learning_rate;

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const double reg_scale = 1.0 / static_cast<double>(train_set.size());
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  ChgatParams best = params;
  double best_auc = -1.0;
  std::size_t since_best = 0;
  std::vector<const Example*> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      nn::zero_grads(refs);
      const double loss = batch_loss(params, batch, cfg.variant, &grads, reg_scale);
      if (loss > cfg.divergence_loss) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + " (loss " + std::to_string(loss) + ")");
      }
      loss_sum += loss * static_cast<double>(end - start);
      nn::adam_step(refs, adam);
      params.touch();
    }
    const auto m = evaluate(params, val_set, cfg.variant);
    result.log.push_back({epoch, loss_sum / static_cast<double>(order.size()), m.auc, m.ndcg});
    if (m.auc > best_auc) {
      best_auc = m.auc;
      best = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

inline std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::ostringstream os;
  os << "epoch,train_loss,val_auc,val_ndcg\n";
  char buf[128];
  for (const auto& m : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", m.epoch, m.train_loss, m.val_auc, m.val_ndcg);
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Checkpoints: "CHG1", u32 version, u32 d, f64 beta, f64 lambda,
// u32 tensor count, (u32 rows, u32 cols) per tensor, then all tensor
// values as f64. Everything little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw FormatError("truncated checkpoint");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("truncated checkpoint");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string checkpoint_bytes(const ChgatParams& p) {
  std::string out = "CHG1";
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.d));
  detail::put<double>(out, p.beta);
  detail::put<double>(out, p.lambda);
  std::vector<const nn::Matrix*> tensors;
  ChgatParams::visit(p, [&](const std::string&, const nn::Matrix& m, bool, bool) { tensors.push_back(&m); });
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto* m : tensors) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m->rows()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m->cols()));
  }
  for (const auto* m : tensors) {
    for (double v : m->values()) detail::put<double>(out, v);
  }
  return out;
}

// Parses a checkpoint; when `expected` is given the stored shapes must
// match it exactly.
inline ChgatParams parse_checkpoint(std::string_view bytes, const ModelShape* expected = nullptr) {
  detail::Reader r(bytes);
  if (bytes.size() < 4 || r.take(4) != "CHG1") throw FormatError("not a checkpoint (bad magic)");
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  const std::size_t d = r.get<std::uint32_t>();
  const double beta = r.get<double>();
  const double lambda = r.get<double>();
  const std::size_t count = r.get<std::uint32_t>();
  if (count < 19 || (count - 19) % 6 != 0) throw ShapeError("unexpected tensor count in checkpoint");
  std::vector<std::pair<std::size_t, std::size_t>> shapes(count);
  for (auto& s : shapes) {
    s.first = r.get<std::uint32_t>();
    s.second = r.get<std::uint32_t>();
  }
  if (expected && expected->d != d) {
    throw ShapeError("checkpoint has d=" + std::to_string(d) + " but the model expects d=" + std::to_string(expected->d));
  }
  ModelShape shape;
  shape.d = d;
  shape.vocab = shapes[0].first;
  shape.attention_hidden = shapes[1].first;
  shape.attr_hidden = shapes[17].first;
  shape.attr_width = shapes[17].second;
  const std::size_t tower_layers = (count - 19) / 6;
  shape.tower_hidden.clear();
  for (std::size_t l = 0; l + 1 < tower_layers; ++l) shape.tower_hidden.push_back(shapes[19 + 2 * l].first);
  if (expected && !(*expected == shape)) throw ShapeError("checkpoint shape table does not match the model");

  ChgatParams p;
  try {
    p = ChgatParams::zeros(shape, beta, lambda);
  } catch (const ConfigError& e) {
    throw ShapeError(std::string("invalid checkpoint shapes: ") + e.what());
  }
  std::vector<nn::Matrix*> tensors;
  ChgatParams::visit(p, [&](const std::string&, nn::Matrix& m, bool, bool) { tensors.push_back(&m); });
  if (tensors.size() != count) throw ShapeError("checkpoint tensor count does not match its shape table");
  for (std::size_t k = 0; k < count; ++k) {
    if (tensors[k]->rows() != shapes[k].first || tensors[k]->cols() != shapes[k].second) {
      throw ShapeError("inconsistent shape table in checkpoint");
    }
  }
  for (auto* m : tensors) {
    for (double& v : m->values()) v = r.get<double>();
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return p;
}

inline void save_checkpoint(const ChgatParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  const auto bytes = checkpoint_bytes(p);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("failed writing " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline ChgatParams load_checkpoint(const std::string& path, const ModelShape* expected = nullptr) {
  return parse_checkpoint(read_file(path), expected);
}

// FNV-1a over the checkpoint bytes, used as the served model version.
inline std::string model_version(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string model_version(const ChgatParams& p) { return model_version(checkpoint_bytes(p)); }

}  // namespace chgat
