#pragma once

// Context-aware two-level attention over a user's meta-path trees.
//
// Vertex level: neighbors of a vertex are scored against the outside vertex
// of the same type (candidate item, live query) by a typed MLP on
// concat(e_v, e_o); relu on the score; softmax over the neighborhood;
// weighted sum. Path level: each tree's context vertex is scored against the
// outside context (live location/time for self trees, the user's portrait
// for similar-crowd trees) and the path vectors are combined the same way.
//
// The first layer of every scoring MLP is linear in concat(e_v, e_o), so it
// is evaluated in two halves: the outside half once per example, the key
// half from cached per-unit projections (a vertex embedding is the mean of
// its unit rows, so its projection is the mean of the unit projections).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chgat/error.hpp"
#include "chgat/graph.hpp"
#include "chgat/knowledge.hpp"
#include "chgat/nn.hpp"

namespace chgat {

// One scoring network per vertex type (item, query) and per context type
// (location, user portrait). Each is 2d -> hidden (relu) -> 1.
struct AttentionBank {
  nn::Mlp item;
  nn::Mlp query;
  nn::Mlp location;
  nn::Mlp user;

  static nn::MlpSpec spec(std::size_t d, std::size_t hidden) { return nn::MlpSpec::hidden_relu({2 * d, hidden, 1}); }

  static AttentionBank init(std::size_t d, std::size_t hidden, std::mt19937_64& rng) {
    const auto s = spec(d, hidden);
    AttentionBank b;
    b.item = nn::Mlp::init(s, rng);
    b.query = nn::Mlp::init(s, rng);
    b.location = nn::Mlp::init(s, rng);
    b.user = nn::Mlp::init(s, rng);
    return b;
  }

  static AttentionBank zeros(std::size_t d, std::size_t hidden) {
    const auto s = spec(d, hidden);
    return {nn::Mlp::zeros(s), nn::Mlp::zeros(s), nn::Mlp::zeros(s), nn::Mlp::zeros(s)};
  }

  const nn::Mlp& for_vertex(VertexType t) const {
    switch (t) {
      case VertexType::item: return item;
      case VertexType::query: return query;
      case VertexType::context: return location;
      case VertexType::portrait: return user;
      default: break;
    }
    throw ConfigError("no attention network for this vertex type");
  }
  nn::Mlp& for_vertex(VertexType t) {
    return const_cast<nn::Mlp&>(static_cast<const AttentionBank&>(*this).for_vertex(t));
  }
};

// ---------------------------------------------------------------------------
// Attention sites

// One softmax over n neighbors.
struct AttentionSite {
  std::size_t n = 0;
  std::vector<double> hidden_pre;  // n x hidden, first-layer pre-activations
  std::vector<double> raw;         // MLP output before relu
  std::vector<double> weights;
};

// Outside half of a network's first layer, W1[:, d:] e_o + b1, shared by
// every site scored against the same outside vector. `grad` collects
// d(loss)/d(pre) until flush().
struct OutsideProjection {
  std::vector<double> pre;
  std::vector<double> grad;

  void compute(const nn::Mlp& net, std::span<const double> outside) {
    const std::size_t d = outside.size();
    const nn::Matrix& w1 = net.weights[0];
    const std::size_t h = w1.rows();
    pre.resize(h);
    grad.assign(h, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
      const double* wr = w1.row(j).data() + d;
      double acc = net.biases[0](0, j);
      for (std::size_t c = 0; c < d; ++c) acc += wr[c] * outside[c];
      pre[j] = acc;
    }
  }

  void flush(const nn::Mlp& net, std::span<const double> outside, nn::Mlp& net_grad, std::span<double> outside_grad) {
    const std::size_t d = outside.size();
    const nn::Matrix& w1 = net.weights[0];
    nn::Matrix& gw1 = net_grad.weights[0];
    nn::Matrix& gb1 = net_grad.biases[0];
    for (std::size_t j = 0; j < grad.size(); ++j) {
      const double g = grad[j];
      if (g == 0.0) continue;
      gb1(0, j) += g;
      const double* wr = w1.row(j).data() + d;
      double* gr = gw1.row(j).data() + d;
      for (std::size_t c = 0; c < d; ++c) {
        gr[c] += g * outside[c];
        outside_grad[c] += g * wr[c];
      }
      grad[j] = 0.0;
    }
  }
};

// Key halves W1[:, :d] e_k of knowledge units for one network, filled
// lazily. Gradients w.r.t. the projections are collected per unit and
// pushed into W1 and the embedding table by flush().
class UnitProjections {
 public:
  void reset(std::size_t vocab, std::size_t hidden) {
    hidden_ = hidden;
    ready_.assign(vocab, 0);
    proj_.resize(vocab * hidden);
    grad_.assign(vocab * hidden, 0.0);
    touched_.assign(vocab, 0);
    touched_list_.clear();
  }

  std::size_t hidden() const { return hidden_; }

  const double* get(const nn::Mlp& net, const nn::Matrix& emb, KnowledgeId k) {
    if (k >= ready_.size()) throw DataError("knowledge id " + std::to_string(k) + " outside the vocabulary");
    double* out = proj_.data() + static_cast<std::size_t>(k) * hidden_;
    if (!ready_[k]) {
      const nn::Matrix& w1 = net.weights[0];
      const std::size_t d = emb.cols();
      const double* e = emb.row(k).data();
      for (std::size_t j = 0; j < hidden_; ++j) {
        const double* wr = w1.row(j).data();
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += wr[c] * e[c];
        out[j] = acc;
      }
      ready_[k] = 1;
    }
    return out;
  }

  // Mean projection of a unit list into `out` (zeros for all padding).
  void key(const nn::Mlp& net, const nn::Matrix& emb, std::span<const KnowledgeId> units, double* out) {
    std::fill(out, out + hidden_, 0.0);
    std::size_t n = 0;
    for (KnowledgeId k : units) {
      if (k == kPaddingUnit) continue;
      const double* p = get(net, emb, k);
      for (std::size_t j = 0; j < hidden_; ++j) out[j] += p[j];
      ++n;
    }
    if (n > 1) {
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t j = 0; j < hidden_; ++j) out[j] *= inv;
    }
  }

  // Accumulates scale * g as the gradient of key(units).
  void key_backward(std::span<const KnowledgeId> units, const double* g, double scale = 1.0) {
    const std::size_t n = active_units(units);
    if (n == 0 || scale == 0.0) return;
    const double s = scale / static_cast<double>(n);
    for (KnowledgeId k : units) {
      if (k == kPaddingUnit) continue;
      double* gr = grad_.data() + static_cast<std::size_t>(k) * hidden_;
      for (std::size_t j = 0; j < hidden_; ++j) gr[j] += g[j] * s;
      if (!touched_[k]) {
        touched_[k] = 1;
        touched_list_.push_back(k);
      }
    }
  }

  void flush(const nn::Mlp& net, const nn::Matrix& emb, nn::Mlp& net_grad, nn::Matrix& emb_grad) {
    const nn::Matrix& w1 = net.weights[0];
    nn::Matrix& gw1 = net_grad.weights[0];
    const std::size_t d = emb.cols();
    std::sort(touched_list_.begin(), touched_list_.end());
    for (KnowledgeId k : touched_list_) {
      double* g = grad_.data() + static_cast<std::size_t>(k) * hidden_;
      const double* e = emb.row(k).data();
      double* ge = emb_grad.row(k).data();
      for (std::size_t j = 0; j < hidden_; ++j) {
        const double gj = g[j];
        if (gj == 0.0) continue;
        const double* wr = w1.row(j).data();
        double* gr = gw1.row(j).data();
        for (std::size_t c = 0; c < d; ++c) {
          gr[c] += gj * e[c];
          ge[c] += gj * wr[c];
        }
      }
      std::fill(g, g + hidden_, 0.0);
      touched_[k] = 0;
    }
    touched_list_.clear();
  }

 private:
  std::size_t hidden_ = 0;
  std::vector<std::uint8_t> ready_;
  std::vector<double> proj_;
  std::vector<double> grad_;
  std::vector<std::uint8_t> touched_;
  std::vector<KnowledgeId> touched_list_;
};

// Unit projections (valid while parameters are unchanged) and outside
// projections (valid for one example) of every network in the bank.
struct AttentionCache {
  UnitProjections item, query, location, user;
  OutsideProjection item_out, query_out, location_out, user_out;

  void reset(const nn::Matrix& emb, const AttentionBank& bank) {
    item.reset(emb.rows(), bank.item.weights[0].rows());
    query.reset(emb.rows(), bank.query.weights[0].rows());
    location.reset(emb.rows(), bank.location.weights[0].rows());
    user.reset(emb.rows(), bank.user.weights[0].rows());
  }

  void flush_units(const nn::Matrix& emb, const AttentionBank& bank, nn::Matrix& emb_grad, AttentionBank& bank_grad) {
    item.flush(bank.item, emb, bank_grad.item, emb_grad);
    query.flush(bank.query, emb, bank_grad.query, emb_grad);
    location.flush(bank.location, emb, bank_grad.location, emb_grad);
    user.flush(bank.user, emb, bank_grad.user, emb_grad);
  }
};

namespace detail {

inline void check_attention_shape(const nn::Mlp& net, std::size_t d) {
  if (net.weights.size() != 2 || net.weights[0].cols() != 2 * d || net.weights[1].rows() != 1) {
    throw ConfigError("attention network must be 2d -> hidden -> 1");
  }
}

// Expects site.hidden_pre to hold the key halves; adds the outside half
// and finishes the scores and weights.
inline std::span<const double> finish_scores(const nn::Mlp& net, const double* outside_pre, AttentionSite& site) {
  const std::size_t n = site.n;
  const std::size_t h = net.weights[0].rows();
  const double* w2r = net.weights[1].row(0).data();
  const double b2 = net.biases[1](0, 0);
  site.raw.resize(n);
  site.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* hp = site.hidden_pre.data() + i * h;
    double out = b2;
    for (std::size_t j = 0; j < h; ++j) {
      hp[j] += outside_pre[j];
      if (hp[j] > 0.0) out += w2r[j] * hp[j];
    }
    site.raw[i] = out;
  }
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) logits[i] = nn::relu(site.raw[i]);
  nn::softmax(logits, site.weights);
  return site.weights;
}

// Back-propagates through softmax, relu and the second layer. Writes
// d(loss)/d(hidden pre-activation) per key into `dh` (n x hidden) and
// accumulates its column sum into `d_outside_pre`.
inline void scores_backward(const nn::Mlp& net, const AttentionSite& site, std::span<const double> weight_grad,
                            nn::Mlp& net_grad, std::vector<double>& dh, double* d_outside_pre) {
  const std::size_t n = site.n;
  const std::size_t h = net.weights[0].rows();
  std::vector<double> dlogit(n);
  nn::softmax_backward(site.weights, weight_grad, dlogit);
  const double* w2r = net.weights[1].row(0).data();
  double* gw2r = net_grad.weights[1].row(0).data();
  nn::Matrix& gb2 = net_grad.biases[1];
  dh.assign(n * h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double draw = site.raw[i] > 0.0 ? dlogit[i] : 0.0;
    if (draw == 0.0) continue;
    gb2(0, 0) += draw;
    const double* hp = site.hidden_pre.data() + i * h;
    double* dhi = dh.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) {
      if (hp[j] > 0.0) {
        gw2r[j] += draw * hp[j];
        dhi[j] = draw * w2r[j];
        d_outside_pre[j] += dhi[j];
      }
    }
  }
}

}  // namespace detail

// Weights of `keys` (n x d, row-major) against `outside` (d):
// softmax(relu(MLP(concat(key, outside)))).
inline std::span<const double> attention_weights(const nn::Mlp& net, std::span<const double> keys,
                                                 std::span<const double> outside, AttentionSite& site) {
  const std::size_t d = outside.size();
  detail::check_attention_shape(net, d);
  if (keys.size() % d != 0) throw ConfigError("attention key width mismatch");
  const std::size_t n = keys.size() / d;
  if (n == 0) throw EmptyNeighborhoodError("attention over an empty neighborhood");
  const nn::Matrix& w1 = net.weights[0];
  const std::size_t h = w1.rows();
  OutsideProjection o;
  o.compute(net, outside);
  site.n = n;
  site.hidden_pre.resize(n * h);
  for (std::size_t i = 0; i < n; ++i) {
    const double* key = keys.data() + i * d;
    double* hp = site.hidden_pre.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) {
      const double* wr = w1.row(j).data();
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += wr[c] * key[c];
      hp[j] = acc;
    }
  }
  return detail::finish_scores(net, o.pre.data(), site);
}

// Back-propagates d(loss)/d(weights) into the network, the keys and the
// outside vector. Gradients accumulate.
inline void attention_weights_backward(const nn::Mlp& net, const AttentionSite& site, std::span<const double> keys,
                                       std::span<const double> outside, std::span<const double> weight_grad,
                                       nn::Mlp& net_grad, std::span<double> keys_grad, std::span<double> outside_grad) {
  const std::size_t d = outside.size();
  const nn::Matrix& w1 = net.weights[0];
  const std::size_t h = w1.rows();
  OutsideProjection o;
  o.grad.assign(h, 0.0);
  std::vector<double> dh;
  detail::scores_backward(net, site, weight_grad, net_grad, dh, o.grad.data());
  nn::Matrix& gw1 = net_grad.weights[0];
  for (std::size_t i = 0; i < site.n; ++i) {
    const double* key = keys.data() + i * d;
    double* kg = keys_grad.data() + i * d;
    const double* dhi = dh.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) {
      const double g = dhi[j];
      if (g == 0.0) continue;
      const double* wr = w1.row(j).data();
      double* gr = gw1.row(j).data();
      for (std::size_t c = 0; c < d; ++c) {
        gr[c] += g * key[c];
        kg[c] += g * wr[c];
      }
    }
  }
  o.flush(net, outside, net_grad, outside_grad);
}

// Same weights for knowledge-resolved keys; `keys(i)` returns the unit list
// of key i.
template <class KeyUnits>
std::span<const double> attention_weights_units(const nn::Mlp& net, UnitProjections& proj, const nn::Matrix& emb,
                                                std::size_t n, KeyUnits&& keys, const OutsideProjection& outside,
                                                AttentionSite& site) {
  if (n == 0) throw EmptyNeighborhoodError("attention over an empty neighborhood");
  const std::size_t h = net.weights[0].rows();
  if (proj.hidden() != h || outside.pre.size() != h) throw ConfigError("attention cache does not match the network");
  site.n = n;
  site.hidden_pre.resize(n * h);
  for (std::size_t i = 0; i < n; ++i) proj.key(net, emb, keys(i), site.hidden_pre.data() + i * h);
  return detail::finish_scores(net, outside.pre.data(), site);
}

// Backward of attention_weights_units. Key-side gradients are parked in
// `proj`, outside-side gradients in `outside`, until their flushes.
template <class KeyUnits>
void attention_weights_units_backward(const nn::Mlp& net, UnitProjections& proj, const AttentionSite& site,
                                      KeyUnits&& keys, std::span<const double> weight_grad, nn::Mlp& net_grad,
                                      OutsideProjection& outside) {
  const std::size_t h = net.weights[0].rows();
  std::vector<double> dh;
  detail::scores_backward(net, site, weight_grad, net_grad, dh, outside.grad.data());
  for (std::size_t i = 0; i < site.n; ++i) proj.key_backward(keys(i), dh.data() + i * h);
}

inline void weighted_sum(std::span<const double> weights, std::span<const double> values, std::span<double> out) {
  const std::size_t d = out.size();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double w = weights[i];
    const double* v = values.data() + i * d;
    for (std::size_t c = 0; c < d; ++c) out[c] += w * v[c];
  }
}

// d/d(weights) written, d/d(values) accumulated.
inline void weighted_sum_backward(std::span<const double> weights, std::span<const double> values,
                                  std::span<const double> out_grad, std::span<double> weight_grad,
                                  std::span<double> values_grad) {
  const std::size_t d = out_grad.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double* v = values.data() + i * d;
    double* vg = values_grad.data() + i * d;
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dot += out_grad[c] * v[c];
      vg[c] += weights[i] * out_grad[c];
    }
    weight_grad[i] = dot;
  }
}

// Convenience form: weights of a neighborhood against an outside vertex.
inline std::vector<double> vertex_attention(const nn::Mlp& net, std::span<const double> neighbors,
                                            std::span<const double> outside) {
  AttentionSite site;
  auto w = attention_weights(net, neighbors, outside, site);
  return {w.begin(), w.end()};
}

// ---------------------------------------------------------------------------
// Knowledge-resolved graphs

struct ResolvedQuery {
  UnitList query;
  std::vector<UnitList> items;
};

struct ResolvedPath {
  MetaPathKind kind = MetaPathKind::ucqi_self;
  UnitList context;
  std::vector<ResolvedQuery> queries;  // UCQI kinds
  std::vector<UnitList> items;         // UCI kinds
};

struct ResolvedGraph {
  std::vector<ResolvedPath> self_paths;
  std::vector<ResolvedPath> sim_paths;
  UnitList portrait;
};

// Live request features; the portrait encodes e_{c_u}.
struct OutsideContext {
  UnitList query;
  UnitList item;
  UnitList context;
  UnitList portrait;
};

inline ResolvedPath resolve_path(const KnowledgeTable& table, const MetaPathTree& tree) {
  ResolvedPath p;
  p.kind = tree.kind;
  p.context = table.resolve(tree.context);
  for (const auto& q : tree.queries) {
    ResolvedQuery rq;
    rq.query = table.resolve(q.query);
    for (auto i : q.items) rq.items.push_back(table.resolve(i));
    p.queries.push_back(std::move(rq));
  }
  for (auto i : tree.items) p.items.push_back(table.resolve(i));
  return p;
}

inline ResolvedGraph resolve_graph(const KnowledgeTable& table, const UserGraph& g) {
  ResolvedGraph r;
  for (const auto& t : g.self_paths) r.self_paths.push_back(resolve_path(table, t));
  for (const auto& t : g.sim_paths) r.sim_paths.push_back(resolve_path(table, t));
  r.portrait = table.resolve(g.portrait);
  return r;
}

// ---------------------------------------------------------------------------
// Path aggregation

struct QueryTape {
  std::vector<double> item_emb;    // n x d
  std::vector<double> item_qproj;  // n x hidden: items under the query network
  AttentionSite site;
  std::vector<double> agg;         // weighted item sum
  std::vector<double> self_emb;    // the query's own embedding
};

struct PathTape {
  std::vector<QueryTape> queries;
  std::vector<double> query_vecs;  // k x d
  AttentionSite query_site;
  std::vector<double> item_emb;    // UCI: n x d
  AttentionSite item_site;
  std::vector<double> out;         // path representation
};

struct OutsideEmbeddings {
  std::vector<double> item, query, context, portrait;
};

struct OutsideGrads {
  std::vector<double> item, query, context, portrait;
  void reset(std::size_t d) {
    item.assign(d, 0.0);
    query.assign(d, 0.0);
    context.assign(d, 0.0);
    portrait.assign(d, 0.0);
  }
};

namespace detail {

inline void embed_rows(const nn::Matrix& emb, const std::vector<UnitList>& units, std::vector<double>& out) {
  const std::size_t d = emb.cols();
  out.resize(units.size() * d);
  for (std::size_t i = 0; i < units.size(); ++i) {
    embed_vertex(emb, units[i], std::span<double>(out.data() + i * d, d));
  }
}

inline void embed_rows_backward(nn::Matrix& emb_grad, const std::vector<UnitList>& units,
                                std::span<const double> grads) {
  const std::size_t d = emb_grad.cols();
  for (std::size_t i = 0; i < units.size(); ++i) {
    embed_vertex_backward(emb_grad, units[i], grads.subspan(i * d, d));
  }
}

inline auto unit_rows(const std::vector<UnitList>& v) {
  return [&v](std::size_t i) -> std::span<const KnowledgeId> { return v[i]; };
}

inline auto path_contexts(const std::vector<ResolvedPath>& paths) {
  return [&paths](std::size_t i) -> std::span<const KnowledgeId> { return paths[i].context; };
}

}  // namespace detail

// Aggregates one tree up to its context vertex. UCQI: items under each
// query against the candidate item, each query vector = mean(own
// embedding, aggregated items), then queries against the live query.
// UCI: items directly against the candidate item. The outside projections
// in `cache` must be current for this example.
inline std::span<const double> aggregate_path(const nn::Matrix& emb, const AttentionBank& bank, AttentionCache& cache,
                                              const ResolvedPath& path, PathTape& tape) {
  const std::size_t d = emb.cols();
  tape.out.assign(d, 0.0);
  if (has_query_layer(path.kind)) {
    const std::size_t k = path.queries.size();
    if (k == 0) throw EmptyNeighborhoodError("UCQI path without queries");
    const std::size_t hq = bank.query.weights[0].rows();
    tape.queries.resize(k);
    tape.query_vecs.resize(k * d);
    tape.query_site.n = k;
    tape.query_site.hidden_pre.resize(k * hq);
    for (std::size_t q = 0; q < k; ++q) {
      const auto& rq = path.queries[q];
      auto& qt = tape.queries[q];
      const std::size_t n = rq.items.size();
      detail::embed_rows(emb, rq.items, qt.item_emb);
      auto w = attention_weights_units(bank.item, cache.item, emb, n, detail::unit_rows(rq.items), cache.item_out,
                                       qt.site);
      qt.agg.resize(d);
      weighted_sum(w, qt.item_emb, qt.agg);
      qt.self_emb.resize(d);
      embed_vertex(emb, rq.query, qt.self_emb);
      double* qv = tape.query_vecs.data() + q * d;
      for (std::size_t c = 0; c < d; ++c) qv[c] = 0.5 * (qt.self_emb[c] + qt.agg[c]);
      // Key half of the query-level score, by linearity:
      // W1 qv = (W1 e_q + sum_i w_i W1 e_i) / 2.
      double* kp = tape.query_site.hidden_pre.data() + q * hq;
      cache.query.key(bank.query, emb, rq.query, kp);
      qt.item_qproj.resize(n * hq);
      for (std::size_t i = 0; i < n; ++i) {
        double* ip = qt.item_qproj.data() + i * hq;
        cache.query.key(bank.query, emb, rq.items[i], ip);
        for (std::size_t j = 0; j < hq; ++j) kp[j] += w[i] * ip[j];
      }
      for (std::size_t j = 0; j < hq; ++j) kp[j] *= 0.5;
    }
    auto w = detail::finish_scores(bank.query, cache.query_out.pre.data(), tape.query_site);
    weighted_sum(w, tape.query_vecs, tape.out);
  } else {
    detail::embed_rows(emb, path.items, tape.item_emb);
    auto w = attention_weights_units(bank.item, cache.item, emb, path.items.size(), detail::unit_rows(path.items),
                                     cache.item_out, tape.item_site);
    weighted_sum(w, tape.item_emb, tape.out);
  }
  return tape.out;
}

// Gradients reaching unit or outside projections are parked in `cache`;
// everything else goes straight into the gradient buffers.
inline void aggregate_path_backward(const nn::Matrix& emb, const AttentionBank& bank, AttentionCache& cache,
                                    const ResolvedPath& path, const PathTape& tape, std::span<const double> out_grad,
                                    nn::Matrix& emb_grad, AttentionBank& bank_grad) {
  const std::size_t d = emb.cols();
  if (has_query_layer(path.kind)) {
    const std::size_t k = path.queries.size();
    const std::size_t hq = bank.query.weights[0].rows();
    std::vector<double> dq(k * d, 0.0);
    std::vector<double> dw(k);
    weighted_sum_backward(tape.query_site.weights, tape.query_vecs, out_grad, dw, dq);
    std::vector<double> dh;
    detail::scores_backward(bank.query, tape.query_site, dw, bank_grad.query, dh, cache.query_out.grad.data());
    std::vector<double> half(d);
    for (std::size_t q = 0; q < k; ++q) {
      const auto& rq = path.queries[q];
      const auto& qt = tape.queries[q];
      const double* g = dh.data() + q * hq;
      const std::size_t n = rq.items.size();
      for (std::size_t c = 0; c < d; ++c) half[c] = 0.5 * dq[q * d + c];
      embed_vertex_backward(emb_grad, rq.query, half);
      cache.query.key_backward(rq.query, g, 0.5);
      std::vector<double> di(n * d, 0.0);
      std::vector<double> dwi(n);
      weighted_sum_backward(qt.site.weights, qt.item_emb, half, dwi, di);
      for (std::size_t i = 0; i < n; ++i) {
        const double* ip = qt.item_qproj.data() + i * hq;
        double dot = 0.0;
        for (std::size_t j = 0; j < hq; ++j) dot += g[j] * ip[j];
        dwi[i] += 0.5 * dot;
        cache.query.key_backward(rq.items[i], g, 0.5 * qt.site.weights[i]);
      }
      attention_weights_units_backward(bank.item, cache.item, qt.site, detail::unit_rows(rq.items), dwi,
                                       bank_grad.item, cache.item_out);
      detail::embed_rows_backward(emb_grad, rq.items, di);
    }
  } else {
    const std::size_t n = path.items.size();
    std::vector<double> di(n * d, 0.0);
    std::vector<double> dwi(n);
    weighted_sum_backward(tape.item_site.weights, tape.item_emb, out_grad, dwi, di);
    attention_weights_units_backward(bank.item, cache.item, tape.item_site, detail::unit_rows(path.items), dwi,
                                     bank_grad.item, cache.item_out);
    detail::embed_rows_backward(emb_grad, path.items, di);
  }
}

// ---------------------------------------------------------------------------
// User representation

struct TowerTape {
  bool present = false;
  std::vector<PathTape> paths;
  std::vector<double> path_vecs;  // P x d
  AttentionSite site;
  std::vector<double> rep;
};

struct RepresentationTape {
  OutsideEmbeddings outside;
  TowerTape self;
  TowerTape sim;
  std::size_t self_count = 0;  // |Phi|_chgat
  AttentionCache cache;
};

namespace detail {

inline void tower_forward(const nn::Matrix& emb, const AttentionBank& bank, const nn::Mlp& path_net,
                          UnitProjections& path_proj, const OutsideProjection& path_out, AttentionCache& cache,
                          const std::vector<ResolvedPath>& paths, TowerTape& tape) {
  const std::size_t d = emb.cols();
  tape.present = !paths.empty();
  tape.rep.assign(d, 0.0);
  if (!tape.present) return;
  const std::size_t p = paths.size();
  tape.paths.resize(p);
  tape.path_vecs.resize(p * d);
  for (std::size_t i = 0; i < p; ++i) {
    auto v = aggregate_path(emb, bank, cache, paths[i], tape.paths[i]);
    std::copy(v.begin(), v.end(), tape.path_vecs.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  auto w = attention_weights_units(path_net, path_proj, emb, p, path_contexts(paths), path_out, tape.site);
  weighted_sum(w, tape.path_vecs, tape.rep);
}

inline void tower_backward(const nn::Matrix& emb, const AttentionBank& bank, const nn::Mlp& path_net,
                           nn::Mlp& path_net_grad, UnitProjections& path_proj, OutsideProjection& path_out,
                           AttentionCache& cache, const std::vector<ResolvedPath>& paths, const TowerTape& tape,
                           std::span<const double> rep_grad, nn::Matrix& emb_grad, AttentionBank& bank_grad) {
  if (!tape.present) return;
  const std::size_t d = emb.cols();
  const std::size_t p = paths.size();
  std::vector<double> dpath(p * d, 0.0);
  std::vector<double> dw(p);
  weighted_sum_backward(tape.site.weights, tape.path_vecs, rep_grad, dw, dpath);
  attention_weights_units_backward(path_net, path_proj, tape.site, path_contexts(paths), dw, path_net_grad, path_out);
  for (std::size_t i = 0; i < p; ++i) {
    aggregate_path_backward(emb, bank, cache, paths[i], tape.paths[i], std::span<const double>(dpath.data() + i * d, d),
                            emb_grad, bank_grad);
  }
}

}  // namespace detail

// Embeds the outside vertices and computes their first-layer halves.
inline void prepare_outside(const nn::Matrix& emb, const AttentionBank& bank, const OutsideContext& outside,
                            RepresentationTape& tape) {
  const std::size_t d = emb.cols();
  for (const auto* net : {&bank.item, &bank.query, &bank.location, &bank.user}) detail::check_attention_shape(*net, d);
  auto& o = tape.outside;
  o.item.resize(d);
  o.query.resize(d);
  o.context.resize(d);
  o.portrait.resize(d);
  embed_vertex(emb, outside.item, o.item);
  embed_vertex(emb, outside.query, o.query);
  embed_vertex(emb, outside.context, o.context);
  embed_vertex(emb, outside.portrait, o.portrait);
  tape.cache.item_out.compute(bank.item, o.item);
  tape.cache.query_out.compute(bank.query, o.query);
  tape.cache.location_out.compute(bank.location, o.context);
  tape.cache.user_out.compute(bank.user, o.portrait);
}

// Self tower: self trees against the live context via the location
// network. Sim tower: similar-crowd trees against the user's portrait via
// the user network. A tower with no trees is absent.
//
// With `reuse_cache` the unit projections already in `tape.cache` are kept;
// the caller guarantees parameters have not changed since they were filled.
inline void user_representation(const nn::Matrix& emb, const AttentionBank& bank, const ResolvedGraph& graph,
                                 const OutsideContext& outside, RepresentationTape& tape, bool with_sim = true,
                                 bool reuse_cache = false) {
  const std::size_t d = emb.cols();
  if (!reuse_cache) tape.cache.reset(emb, bank);
  prepare_outside(emb, bank, outside, tape);
  tape.self_count = graph.self_paths.size();
  auto& c = tape.cache;
  detail::tower_forward(emb, bank, bank.location, c.location, c.location_out, c, graph.self_paths, tape.self);
  if (with_sim) {
    detail::tower_forward(emb, bank, bank.user, c.user, c.user_out, c, graph.sim_paths, tape.sim);
  } else {
    tape.sim.present = false;
    tape.sim.rep.assign(d, 0.0);
  }
}

// Gradients w.r.t. each tower output (ignored for absent towers). Without
// `flush` the unit-projection gradients stay in tape.cache so several
// examples can share one AttentionCache::flush_units.
inline void user_representation_backward(const nn::Matrix& emb, const AttentionBank& bank, const ResolvedGraph& graph,
                                         const OutsideContext& outside, RepresentationTape& tape,
                                         std::span<const double> self_grad, std::span<const double> sim_grad,
                                         nn::Matrix& emb_grad, AttentionBank& bank_grad, bool flush = true) {
  const std::size_t d = emb.cols();
  auto& c = tape.cache;
  if (tape.self.present && !self_grad.empty()) {
    detail::tower_backward(emb, bank, bank.location, bank_grad.location, c.location, c.location_out, c,
                           graph.self_paths, tape.self, self_grad, emb_grad, bank_grad);
  }
  if (tape.sim.present && !sim_grad.empty()) {
    detail::tower_backward(emb, bank, bank.user, bank_grad.user, c.user, c.user_out, c, graph.sim_paths, tape.sim,
                           sim_grad, emb_grad, bank_grad);
  }
  OutsideGrads og;
  og.reset(d);
  const auto& o = tape.outside;
  c.item_out.flush(bank.item, o.item, bank_grad.item, og.item);
  c.query_out.flush(bank.query, o.query, bank_grad.query, og.query);
  c.location_out.flush(bank.location, o.context, bank_grad.location, og.context);
  c.user_out.flush(bank.user, o.portrait, bank_grad.user, og.portrait);
  if (flush) c.flush_units(emb, bank, emb_grad, bank_grad);
  embed_vertex_backward(emb_grad, outside.item, og.item);
  embed_vertex_backward(emb_grad, outside.query, og.query);
  embed_vertex_backward(emb_grad, outside.context, og.context);
  embed_vertex_backward(emb_grad, outside.portrait, og.portrait);
}

}  // namespace chgat
