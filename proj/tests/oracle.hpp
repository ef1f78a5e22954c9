#pragma once

// Straight-line reference versions of the attention aggregator and the
// prediction head. They call no library code except container types and
// evaluate every MLP on the full concatenated input, so they share none of
// the split-projection and caching shortcuts of the real implementation.

#include <cmath>
#include <optional>
#include <vector>

#include "chgat/attention.hpp"
#include "chgat/model.hpp"

namespace chgat::oracle {

using Vec = std::vector<double>;

inline Vec embed(const nn::Matrix& emb, const UnitList& units) {
  Vec out(emb.cols(), 0.0);
  int n = 0;
  for (KnowledgeId k : units) {
    if (k == 0) continue;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += emb(k, c);
    ++n;
  }
  for (double& v : out) v = n ? v / n : 0.0;
  return out;
}

inline Vec run_mlp(const nn::Mlp& m, Vec x) {
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    Vec y(m.weights[l].rows());
    for (std::size_t o = 0; o < y.size(); ++o) {
      double acc = m.biases[l](0, o);
      for (std::size_t i = 0; i < x.size(); ++i) acc += m.weights[l](o, i) * x[i];
      const bool relu = m.spec.activations[l] == nn::Activation::relu;
      y[o] = relu && acc < 0 ? 0.0 : acc;
    }
    x = std::move(y);
  }
  return x;
}

// softmax_i relu(MLP([key_i, outside]))
inline Vec weights(const nn::Mlp& net, const std::vector<Vec>& keys, const Vec& outside) {
  Vec s;
  double total = 0;
  for (const auto& k : keys) {
    Vec in = k;
    in.insert(in.end(), outside.begin(), outside.end());
    const double raw = run_mlp(net, in)[0];
    s.push_back(std::exp(raw > 0 ? raw : 0.0));
    total += s.back();
  }
  for (double& v : s) v /= total;
  return s;
}

inline Vec weighted(const Vec& w, const std::vector<Vec>& xs) {
  Vec out(xs[0].size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += w[i] * xs[i][c];
  return out;
}

inline Vec path(const nn::Matrix& emb, const AttentionBank& bank, const ResolvedPath& p, const Vec& item_o,
                const Vec& query_o) {
  auto items_of = [&](const std::vector<UnitList>& us) {
    std::vector<Vec> v;
    for (const auto& u : us) v.push_back(embed(emb, u));
    return v;
  };
  if (!has_query_layer(p.kind)) {
    const auto items = items_of(p.items);
    return weighted(weights(bank.item, items, item_o), items);
  }
  std::vector<Vec> qs;
  for (const auto& q : p.queries) {
    const auto items = items_of(q.items);
    const Vec agg = weighted(weights(bank.item, items, item_o), items);
    Vec self = embed(emb, q.query);
    for (std::size_t c = 0; c < self.size(); ++c) self[c] = (self[c] + agg[c]) / 2;
    qs.push_back(self);
  }
  return weighted(weights(bank.query, qs, query_o), qs);
}

struct Representation {
  std::optional<Vec> self, sim;
};

inline std::optional<Vec> tower(const nn::Matrix& emb, const AttentionBank& bank, const nn::Mlp& path_net,
                                const std::vector<ResolvedPath>& paths, const OutsideContext& o, const Vec& ctx_o) {
  if (paths.empty()) return std::nullopt;
  const Vec item_o = embed(emb, o.item), query_o = embed(emb, o.query);
  std::vector<Vec> vecs, ctxs;
  for (const auto& p : paths) {
    vecs.push_back(path(emb, bank, p, item_o, query_o));
    ctxs.push_back(embed(emb, p.context));
  }
  return weighted(weights(path_net, ctxs, ctx_o), vecs);
}

inline Representation represent(const nn::Matrix& emb, const AttentionBank& bank, const ResolvedGraph& g,
                                const OutsideContext& o) {
  return {tower(emb, bank, bank.location, g.self_paths, o, embed(emb, o.context)),
          tower(emb, bank, bank.user, g.sim_paths, o, embed(emb, o.portrait))};
}

inline double predict(const ChgatParams& p, const Example& ex) {
  static const ResolvedGraph none;
  const ResolvedGraph& g = ex.graph ? *ex.graph : none;
  const Vec a = run_mlp(p.attri, ex.attributes);
  const auto r = represent(p.embedding, p.bank, g, ex.outside);
  auto head = [&](const nn::Mlp& net, const Vec& e) {
    Vec in = e;
    in.insert(in.end(), a.begin(), a.end());
    return run_mlp(net, in)[0];
  };
  double z = run_mlp(p.ori, a)[0];
  if (r.self) z += head(p.chgat, *r.self);
  if (r.sim && p.beta != 0.0) {
    const double n = std::max<double>(1.0, static_cast<double>(g.self_paths.size()));
    z += p.beta / n * head(p.sim, *r.sim);
  }
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace chgat::oracle
