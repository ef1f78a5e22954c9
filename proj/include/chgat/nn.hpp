#pragma once

// Dense numeric kernel: row-major matrices, MLPs with explicit
// forward/backward, masked softmax, embedding gather/scatter, Adam and a
// central-difference gradient checker. All training math is double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chgat/error.hpp"

namespace chgat::nn {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ConfigError("matrix data length does not match rows x cols");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// ---------------------------------------------------------------------------
// MLP

enum class Activation { relu, identity };

struct MlpSpec {
  std::vector<std::size_t> widths;        // input first, output last
  std::vector<Activation> activations;    // one per layer (widths.size() - 1)

  // Hidden layers relu, output layer identity.
  static MlpSpec hidden_relu(std::vector<std::size_t> widths) {
    MlpSpec spec;
    spec.widths = std::move(widths);
    if (spec.widths.size() >= 2) {
      spec.activations.assign(spec.widths.size() - 1, Activation::relu);
      spec.activations.back() = Activation::identity;
    }
    return spec;
  }

  std::size_t layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }

  void validate() const {
    if (widths.size() < 2) throw ConfigError("MLP needs at least an input and an output width");
    if (activations.size() != widths.size() - 1) {
      throw ConfigError("MLP needs exactly one activation per layer");
    }
    for (auto w : widths) {
      if (w == 0) throw ConfigError("MLP layer widths must be positive");
    }
    for (std::size_t l = 0; l + 1 < activations.size(); ++l) {
      if (activations[l] != Activation::relu) throw ConfigError("MLP hidden layers must use relu");
    }
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Weights are stored out x in; biases as a 1 x out row.
struct Mlp {
  MlpSpec spec;
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;
  // Bumped whenever parameters change so that stale tapes are detected.
  std::uint64_t generation = 0;

  static Mlp zeros(const MlpSpec& spec) {
    spec.validate();
    Mlp m;
    m.spec = spec;
    for (std::size_t l = 0; l < spec.layers(); ++l) {
      m.weights.emplace_back(spec.widths[l + 1], spec.widths[l]);
      m.biases.emplace_back(1, spec.widths[l + 1]);
    }
    return m;
  }

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  template <class Rng>
  static Mlp init(const MlpSpec& spec, Rng& rng) {
    Mlp m = zeros(spec);
    for (std::size_t l = 0; l < spec.layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.widths[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& w : m.weights[l].values()) w = dist(rng);
      for (double& b : m.biases[l].values()) b = dist(rng);
    }
    return m;
  }

  void touch() { ++generation; }
};

// Cached activations of one forward pass.
struct MlpTape {
  const Mlp* owner = nullptr;
  std::uint64_t generation = 0;
  std::vector<std::vector<double>> inputs;  // input of each layer
  std::vector<std::vector<double>> pre;     // pre-activation of each layer
  std::vector<double> output;
};

inline void affine(const Matrix& w, const Matrix& b, std::span<const double> x, std::span<double> out) {
  const std::size_t in = w.cols();
  for (std::size_t o = 0; o < w.rows(); ++o) {
    const double* wr = w.row(o).data();
    double acc = b(0, o);
    for (std::size_t i = 0; i < in; ++i) acc += wr[i] * x[i];
    out[o] = acc;
  }
}

inline std::span<const double> mlp_forward(const Mlp& mlp, std::span<const double> input, MlpTape& tape) {
  const auto& spec = mlp.spec;
  if (input.size() != spec.input_width()) {
    throw ConfigError("MLP input width " + std::to_string(input.size()) + " does not match spec width " +
                      std::to_string(spec.input_width()));
  }
  const std::size_t layers = spec.layers();
  tape.owner = &mlp;
  tape.generation = mlp.generation;
  tape.inputs.resize(layers);
  tape.pre.resize(layers);
  tape.inputs[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers; ++l) {
    auto& z = tape.pre[l];
    z.resize(spec.widths[l + 1]);
    affine(mlp.weights[l], mlp.biases[l], tape.inputs[l], z);
    auto& next = (l + 1 < layers) ? tape.inputs[l + 1] : tape.output;
    next.resize(z.size());
    if (spec.activations[l] == Activation::relu) {
      for (std::size_t i = 0; i < z.size(); ++i) next[i] = relu(z[i]);
    } else {
      std::copy(z.begin(), z.end(), next.begin());
    }
  }
  return tape.output;
}

inline std::vector<double> mlp_forward(const Mlp& mlp, std::span<const double> input) {
  MlpTape tape;
  auto out = mlp_forward(mlp, input, tape);
  return {out.begin(), out.end()};
}

// Accumulates parameter gradients into `grads` (same shapes as `mlp`) and
// writes d(loss)/d(input) to `input_grad` when it is non-empty.
inline void mlp_backward(const Mlp& mlp, const MlpTape& tape, std::span<const double> output_grad, Mlp& grads,
                         std::span<double> input_grad = {}) {
  if (tape.owner != &mlp || tape.generation != mlp.generation) {
    throw UsageError("MLP tape is stale or was recorded against a different network");
  }
  const auto& spec = mlp.spec;
  if (output_grad.size() != spec.output_width()) throw ConfigError("MLP output gradient width mismatch");
  if (!input_grad.empty() && input_grad.size() != spec.input_width()) {
    throw ConfigError("MLP input gradient width mismatch");
  }
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  std::vector<double> prev;
  for (std::size_t l = spec.layers(); l-- > 0;) {
    const auto& z = tape.pre[l];
    if (spec.activations[l] == Activation::relu) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (z[i] <= 0.0) delta[i] = 0.0;
      }
    }
    const auto& x = tape.inputs[l];
    const Matrix& w = mlp.weights[l];
    Matrix& gw = grads.weights[l];
    Matrix& gb = grads.biases[l];
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb(0, o) += d;
      double* gr = gw.row(o).data();
      for (std::size_t i = 0; i < w.cols(); ++i) gr[i] += d * x[i];
    }
    if (l == 0 && input_grad.empty()) break;
    prev.assign(w.cols(), 0.0);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* wr = w.row(o).data();
      for (std::size_t i = 0; i < w.cols(); ++i) prev[i] += d * wr[i];
    }
    delta.swap(prev);
  }
  if (!input_grad.empty()) {
    for (std::size_t i = 0; i < delta.size(); ++i) input_grad[i] += delta[i];
  }
}

// ---------------------------------------------------------------------------
// Softmax

// Softmax restricted to entries whose mask is true; masked entries are 0.
inline std::vector<double> masked_softmax(std::span<const double> logits, const std::vector<bool>& mask) {
  if (mask.size() != logits.size()) throw ConfigError("softmax mask length mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      mx = std::max(mx, logits[i]);
      any = true;
    }
  }
  if (!any) throw EmptyNeighborhoodError("softmax over an empty neighborhood");
  std::vector<double> out(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      out[i] = std::exp(logits[i] - mx);
      sum += out[i];
    }
  }
  for (double& v : out) v /= sum;
  return out;
}

// Unmasked softmax written into `out`.
inline void softmax(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) throw EmptyNeighborhoodError("softmax over an empty neighborhood");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
}

// d(loss)/d(logits) given the softmax output and d(loss)/d(output).
inline void softmax_backward(std::span<const double> probs, std::span<const double> out_grad,
                             std::span<double> logit_grad) {
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * out_grad[i];
  for (std::size_t i = 0; i < probs.size(); ++i) logit_grad[i] = probs[i] * (out_grad[i] - dot);
}

// ---------------------------------------------------------------------------
// Embeddings

inline Matrix embedding_lookup(const Matrix& table, std::span<const std::size_t> ids) {
  Matrix out(ids.size(), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows()) {
      throw DataError("embedding id " + std::to_string(ids[i]) + " out of range (rows=" +
                      std::to_string(table.rows()) + ")");
    }
    auto src = table.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

// Duplicate ids accumulate.
inline void embedding_scatter_grad(Matrix& table_grad, std::span<const std::size_t> ids, const Matrix& grads) {
  if (grads.rows() != ids.size() || grads.cols() != table_grad.cols()) {
    throw ConfigError("embedding gradient shape mismatch");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table_grad.rows()) throw DataError("embedding id out of range");
    auto dst = table_grad.row(ids[i]);
    auto src = grads.row(i);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
}

// ---------------------------------------------------------------------------
// Parameters and Adam

// A trainable tensor paired with its gradient buffer.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
  Matrix* grad = nullptr;
  bool regularized = false;   // counted in the L2 penalty
  bool frozen_row0 = false;   // row 0 is pinned (padding embedding)
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

inline void adam_step(std::span<const ParamRef> params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value->rows(), p.value->cols());
      state.second_moment.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (state.first_moment.size() != params.size()) throw ConfigError("Adam state does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (!p.value->same_shape(*p.grad) || !p.value->same_shape(state.first_moment[k])) {
      throw ConfigError("Adam shape mismatch for " + p.name);
    }
    if (!p.grad->all_finite()) throw TrainingError("non-finite gradient in " + p.name);
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    auto value = p.value->values();
    auto grad = p.grad->values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    const std::size_t start = p.frozen_row0 ? p.value->cols() : 0;
    for (std::size_t i = start; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

inline void zero_grads(std::span<const ParamRef> params) {
  for (const auto& p : params) p.grad->fill(0.0);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = true;
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps
// near-zero gradients from dominating through roundoff.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// `loss` must be deterministic in the parameter values; `compute_grads`
// must fill every ParamRef::grad with the analytic gradient of `loss`.
inline GradCheckReport check_gradients(const std::function<double()>& loss,
                                       const std::function<void()>& compute_grads,
                                       std::span<const ParamRef> params, double h = 1e-4, double tol = 1e-4) {
  zero_grads(params);
  compute_grads();
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(*p.grad);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    auto value = p.value->values();
    const std::size_t start = p.frozen_row0 ? p.value->cols() : 0;
    for (std::size_t i = start; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double plus = loss();
      value[i] = saved - h;
      const double minus = loss();
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[k].values()[i];
      const double rel = relative_error(a, numeric);
      ++report.checked;
      report.max_absolute_error = std::max(report.max_absolute_error, std::abs(a - numeric));
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_param = p.name;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_relative_error < tol;
  return report;
}

}  // namespace chgat::nn
