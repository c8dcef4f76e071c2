#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "drldo/errors.hpp"
#include "drldo/rng.hpp"

namespace drldo {

/// Numerically stable softmax.
inline void softmax(std::span<const double> logits, std::span<double> probs) {
  double max_logit = logits[0];
  for (double v : logits) max_logit = std::max(max_logit, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (auto& p : probs) p /= sum;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct MlpSpec {
  int input = 0;
  std::vector<int> hidden;  // may be empty (a single linear map)
  int output = 0;

  bool operator==(const MlpSpec& other) const = default;
};

/// Per-sample forward cache consumed by Mlp::backward.
struct MlpCache {
  std::vector<double> input;
  std::vector<std::vector<double>> hidden_activations;  // tanh outputs
  std::vector<double> output;
};

/// Fully-connected network with tanh hidden layers and a linear output,
/// parameters stored flat (per layer: row-major W, then b) so optimizers and
/// finite-difference checks can treat the whole model as one vector.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    if (spec_.input <= 0 || spec_.output <= 0)
      throw ParameterError("mlp: input and output sizes must be positive");
    for (int h : spec_.hidden)
      if (h <= 0) throw ParameterError("mlp: hidden sizes must be positive");
    std::size_t total = 0;
    int in = spec_.input;
    for (int out : layer_sizes()) {
      layer_offsets_.push_back(total);
      total += static_cast<std::size_t>(out) * static_cast<std::size_t>(in) +
               static_cast<std::size_t>(out);
      in = out;
    }
    params_.assign(total, 0.0);
  }

  /// Orthogonal-style init: orthonormalized gaussian weight matrices scaled by
  /// `hidden_gain` on hidden layers and `output_scale` on the final layer;
  /// zero biases.
  static Mlp initialize(MlpSpec spec, std::uint64_t seed,
                        double hidden_gain = 5.0 / 3.0,
                        double output_scale = 0.01) {
    Mlp net(std::move(spec));
    Rng rng(seed);
    const auto sizes = net.layer_sizes();
    int in = net.spec_.input;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      const int out = sizes[l];
      const double gain = l + 1 == sizes.size() ? output_scale : hidden_gain;
      net.init_orthogonal(l, out, in, gain, rng);
      in = out;
    }
    return net;
  }

  const MlpSpec& spec() const { return spec_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  /// Forward pass for one sample. `out` must have spec().output elements.
  void forward(std::span<const double> in, std::span<double> out,
               MlpCache* cache = nullptr) const {
    if (static_cast<int>(in.size()) != spec_.input)
      throw ParameterError("mlp forward: input size mismatch");
    if (cache) {
      cache->input.assign(in.begin(), in.end());
      cache->hidden_activations.assign(spec_.hidden.size(), {});
    }
    std::vector<double> current(in.begin(), in.end());
    const auto sizes = layer_sizes();
    int in_size = spec_.input;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      const int out_size = sizes[l];
      std::vector<double> next(static_cast<std::size_t>(out_size));
      affine(l, out_size, in_size, current, next);
      if (l + 1 < sizes.size()) {
        for (auto& v : next) v = std::tanh(v);
        if (cache) cache->hidden_activations[l] = next;
      }
      current = std::move(next);
      in_size = out_size;
    }
    std::copy(current.begin(), current.end(), out.begin());
    if (cache) cache->output = std::move(current);
  }

  /// Back-propagates dL/d(output) through the cached forward pass,
  /// accumulating into `grad` (same layout as params()). Optionally produces
  /// dL/d(input).
  void backward(const MlpCache& cache, std::span<const double> dout,
                std::span<double> grad,
                std::span<double> dinput = {}) const {
    const auto sizes = layer_sizes();
    std::vector<double> delta(dout.begin(), dout.end());
    for (std::size_t l = sizes.size(); l-- > 0;) {
      const int out_size = sizes[l];
      const int in_size = l == 0 ? spec_.input : sizes[l - 1];
      const std::span<const double> inputs =
          l == 0 ? std::span<const double>(cache.input)
                 : std::span<const double>(cache.hidden_activations[l - 1]);
      const std::size_t w_off = layer_offsets_[l];
      const std::size_t b_off =
          w_off + static_cast<std::size_t>(out_size) *
                      static_cast<std::size_t>(in_size);
      std::vector<double> dprev(static_cast<std::size_t>(in_size), 0.0);
      for (int o = 0; o < out_size; ++o) {
        const double d = delta[static_cast<std::size_t>(o)];
        const std::size_t row =
            w_off + static_cast<std::size_t>(o) * static_cast<std::size_t>(in_size);
        for (int i = 0; i < in_size; ++i) {
          grad[row + static_cast<std::size_t>(i)] +=
              d * inputs[static_cast<std::size_t>(i)];
          dprev[static_cast<std::size_t>(i)] +=
              d * params_[row + static_cast<std::size_t>(i)];
        }
        grad[b_off + static_cast<std::size_t>(o)] += d;
      }
      if (l == 0) {
        if (!dinput.empty())
          std::copy(dprev.begin(), dprev.end(), dinput.begin());
        break;
      }
      // through the tanh of the previous hidden layer: a' = 1 - a^2
      const auto& act = cache.hidden_activations[l - 1];
      for (int i = 0; i < in_size; ++i) {
        const double a = act[static_cast<std::size_t>(i)];
        dprev[static_cast<std::size_t>(i)] *= 1.0 - a * a;
      }
      delta = std::move(dprev);
    }
  }

  bool operator==(const Mlp& other) const = default;

 private:
  std::vector<int> layer_sizes() const {
    std::vector<int> sizes = spec_.hidden;
    sizes.push_back(spec_.output);
    return sizes;
  }

  void affine(std::size_t layer, int out_size, int in_size,
              const std::vector<double>& in, std::vector<double>& out) const {
    const std::size_t w_off = layer_offsets_[layer];
    const std::size_t b_off =
        w_off +
        static_cast<std::size_t>(out_size) * static_cast<std::size_t>(in_size);
    for (int o = 0; o < out_size; ++o) {
      const std::size_t row =
          w_off + static_cast<std::size_t>(o) * static_cast<std::size_t>(in_size);
      double acc = params_[b_off + static_cast<std::size_t>(o)];
      for (int i = 0; i < in_size; ++i)
        acc += params_[row + static_cast<std::size_t>(i)] *
               in[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(o)] = acc;
    }
  }

  void init_orthogonal(std::size_t layer, int rows, int cols, double gain,
                       Rng& rng) {
    std::vector<double> m(static_cast<std::size_t>(rows) *
                          static_cast<std::size_t>(cols));
    for (auto& v : m) v = rng.normal();
    // Gram-Schmidt along the shorter dimension; the other dimension keeps
    // gaussian directions, matching the usual tall/wide orthogonal init.
    const bool by_rows = rows <= cols;
    const int vectors = by_rows ? rows : cols;
    const int length = by_rows ? cols : rows;
    auto at = [&](int v, int k) -> double& {
      return by_rows ? m[static_cast<std::size_t>(v) *
                             static_cast<std::size_t>(cols) +
                         static_cast<std::size_t>(k)]
                     : m[static_cast<std::size_t>(k) *
                             static_cast<std::size_t>(cols) +
                         static_cast<std::size_t>(v)];
    };
    for (int v = 0; v < vectors; ++v) {
      for (int prev = 0; prev < v; ++prev) {
        double dot = 0.0;
        for (int k = 0; k < length; ++k) dot += at(v, k) * at(prev, k);
        for (int k = 0; k < length; ++k) at(v, k) -= dot * at(prev, k);
      }
      double norm = 0.0;
      for (int k = 0; k < length; ++k) norm += at(v, k) * at(v, k);
      norm = std::sqrt(norm);
      if (norm < 1e-12) throw NumericError("orthogonal init: degenerate basis");
      for (int k = 0; k < length; ++k) at(v, k) /= norm;
    }
    const std::size_t w_off = layer_offsets_[layer];
    for (std::size_t i = 0; i < m.size(); ++i) params_[w_off + i] = gain * m[i];
    // biases stay zero
  }

  MlpSpec spec_;
  std::vector<std::size_t> layer_offsets_;
  std::vector<double> params_;
};

/// Adaptive-moment first-order optimizer over a flat parameter vector.
class AdamOptimizer {
 public:
  struct Options {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // L2 added to the gradient
  };

  AdamOptimizer(std::size_t param_count, Options options)
      : options_(options), m_(param_count, 0.0), v_(param_count, 0.0) {}

  void step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw ParameterError("adam: parameter/gradient size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, t_);
    const double bc2 = 1.0 - std::pow(options_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i] + options_.weight_decay * params[i];
      m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
      v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m_[i] / bc1;
      const double v_hat = v_[i] / bc2;
      params[i] -=
          options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }

 private:
  Options options_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace drldo
