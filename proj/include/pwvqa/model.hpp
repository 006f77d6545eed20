// Copyright 2026 The pwvqa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pwvqa/causal.hpp"
#include "pwvqa/datagen.hpp"
#include "pwvqa/error.hpp"
#include "pwvqa/fusion.hpp"
#include "pwvqa/logits.hpp"

namespace pwvqa {

// Fully connected layer, weight stored row-major as [out][in].
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  Dense() = default;
  Dense(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weight(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

  void apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = weight.data() + o * in;
      double acc = bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  friend bool operator==(const Dense&, const Dense&) = default;
};

// input -> [tanh hidden] -> answer logits. With hidden width 0 the encoder is
// a single linear layer.
struct Encoder {
  std::vector<Dense> layers;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }

  friend bool operator==(const Encoder&, const Encoder&) = default;
};

inline Encoder make_encoder(std::size_t in, std::size_t hidden, std::size_t out) {
  Encoder e;
  if (hidden == 0) {
    e.layers.emplace_back(in, out);
  } else {
    e.layers.emplace_back(in, hidden);
    e.layers.emplace_back(hidden, out);
  }
  return e;
}

// Parameters of the question, vision and joint (question+vision) encoders.
struct EncoderParams {
  std::size_t vocab_size = 0;
  std::size_t q_dim = 0;
  std::size_t v_dim = 0;
  std::size_t hidden = 0;
  Encoder question;
  Encoder vision;
  Encoder joint;

  static EncoderParams zeros(std::size_t vocab, std::size_t q_dim, std::size_t v_dim,
                             std::size_t hidden) {
    EncoderParams p;
    p.vocab_size = vocab;
    p.q_dim = q_dim;
    p.v_dim = v_dim;
    p.hidden = hidden;
    p.question = make_encoder(q_dim, hidden, vocab);
    p.vision = make_encoder(v_dim, hidden, vocab);
    p.joint = make_encoder(q_dim + v_dim, hidden, vocab);
    return p;
  }

  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
  static EncoderParams glorot(std::size_t vocab, std::size_t q_dim, std::size_t v_dim,
                              std::size_t hidden, std::mt19937_64& rng) {
    EncoderParams p = zeros(vocab, q_dim, v_dim, hidden);
    p.for_each_layer([&](Dense& d) {
      const double limit = std::sqrt(6.0 / static_cast<double>(d.in + d.out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (double& w : d.weight) w = u(rng);
    });
    return p;
  }

  template <typename Fn>
  void for_each_layer(Fn&& fn) {
    for (Encoder* e : {&question, &vision, &joint}) {
      for (Dense& d : e->layers) fn(d);
    }
  }
  template <typename Fn>
  void for_each_layer(Fn&& fn) const {
    for (const Encoder* e : {&question, &vision, &joint}) {
      for (const Dense& d : e->layers) fn(d);
    }
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for_each_layer([&](const Dense& d) { n += d.weight.size() + d.bias.size(); });
    return n;
  }

  // Layer by layer: weight (row-major) then bias.
  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(num_parameters());
    for_each_layer([&](const Dense& d) {
      flat.insert(flat.end(), d.weight.begin(), d.weight.end());
      flat.insert(flat.end(), d.bias.begin(), d.bias.end());
    });
    return flat;
  }

  void unflatten(std::span<const double> flat) {
    if (flat.size() != num_parameters()) {
      throw DimensionError("unflatten: expected " + std::to_string(num_parameters()) +
                           " parameters, got " + std::to_string(flat.size()));
    }
    std::size_t pos = 0;
    for_each_layer([&](Dense& d) {
      std::copy_n(flat.begin() + pos, d.weight.size(), d.weight.begin());
      pos += d.weight.size();
      std::copy_n(flat.begin() + pos, d.bias.size(), d.bias.begin());
      pos += d.bias.size();
    });
  }

  bool all_finite() const {
    bool ok = true;
    for_each_layer([&](const Dense& d) {
      for (double w : d.weight) ok = ok && std::isfinite(w);
      for (double b : d.bias) ok = ok && std::isfinite(b);
    });
    return ok;
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct TrainConfig {
  std::size_t epochs = 22;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;
  FusionConfig fusion;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be > 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    fusion.validate();
  }
};

namespace model {

namespace detail {

// Activations kept for the backward pass.
struct EncoderTrace {
  std::vector<double> input;
  std::vector<double> hidden;  // tanh outputs, empty for linear encoders
  std::vector<double> output;
};

inline void encode(const Encoder& e, std::span<const double> x, EncoderTrace& tr) {
  tr.input.assign(x.begin(), x.end());
  tr.output.resize(e.output_dim());
  if (e.layers.size() == 1) {
    tr.hidden.clear();
    e.layers[0].apply(tr.input, tr.output);
    return;
  }
  tr.hidden.resize(e.layers[0].out);
  e.layers[0].apply(tr.input, tr.hidden);
  for (double& h : tr.hidden) h = std::tanh(h);
  e.layers[1].apply(tr.hidden, tr.output);
}

inline void accumulate_outer(Dense& g, std::span<const double> dy, std::span<const double> x) {
  for (std::size_t o = 0; o < g.out; ++o) {
    if (dy[o] == 0.0) continue;
    double* row = g.weight.data() + o * g.in;
    for (std::size_t i = 0; i < g.in; ++i) row[i] += dy[o] * x[i];
    g.bias[o] += dy[o];
  }
}

// Adds d(loss)/d(params) into grad given d(loss)/d(output).
inline void backprop(const Encoder& e, const EncoderTrace& tr, std::span<const double> dout,
                     Encoder& grad) {
  if (e.layers.size() == 1) {
    accumulate_outer(grad.layers[0], dout, tr.input);
    return;
  }
  accumulate_outer(grad.layers[1], dout, tr.hidden);
  const Dense& head = e.layers[1];
  std::vector<double> dpre(head.in, 0.0);
  for (std::size_t o = 0; o < head.out; ++o) {
    if (dout[o] == 0.0) continue;
    const double* row = head.weight.data() + o * head.in;
    for (std::size_t i = 0; i < head.in; ++i) dpre[i] += dout[o] * row[i];
  }
  for (std::size_t i = 0; i < dpre.size(); ++i) {
    dpre[i] *= 1.0 - tr.hidden[i] * tr.hidden[i];
  }
  accumulate_outer(grad.layers[0], dpre, tr.input);
}

inline double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double x : z) s += std::exp(x - m);
  return m + std::log(s);
}

inline std::vector<double> softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (double& x : p) x /= s;
  return p;
}

inline double cross_entropy(std::span<const double> z, std::size_t label) {
  return log_sum_exp(z) - z[label];
}

inline void check_features(const EncoderParams& params, std::span<const double> q,
                           std::span<const double> v) {
  if (q.size() != params.q_dim || v.size() != params.v_dim) {
    throw DimensionError("feature dimensions (" + std::to_string(q.size()) + ", " +
                         std::to_string(v.size()) + ") do not match the model (" +
                         std::to_string(params.q_dim) + ", " +
                         std::to_string(params.v_dim) + ")");
  }
}

}  // namespace detail

// Branch logits (Z_q, Z_v, Z_k) for one question/image feature pair.
inline BranchLogits forward(std::span<const double> q_features,
                            std::span<const double> v_features, const EncoderParams& params) {
  detail::check_features(params, q_features, v_features);
  detail::EncoderTrace tq, tv, tk;
  detail::encode(params.question, q_features, tq);
  detail::encode(params.vision, v_features, tv);
  std::vector<double> joint(q_features.begin(), q_features.end());
  joint.insert(joint.end(), v_features.begin(), v_features.end());
  detail::encode(params.joint, joint, tk);
  return {Logits(std::move(tq.output)), Logits(std::move(tv.output)),
          Logits(std::move(tk.output))};
}

// Cross-entropy of the fused score plus the two unimodal cross-entropies.
inline double loss_cls(const BranchLogits& branch, const Logits& fused, std::size_t label) {
  if (!branch.zq || !branch.zv) throw ContractViolation("loss_cls requires zq and zv");
  const std::size_t n = fused.size();
  if (branch.zq->size() != n || branch.zv->size() != n) {
    throw DimensionError("loss_cls: score lengths differ");
  }
  if (label >= n) {
    throw IndexError("label " + std::to_string(label) + " outside vocabulary of " +
                     std::to_string(n));
  }
  return detail::cross_entropy(fused.values(), label) +
         detail::cross_entropy(branch.zq->values(), label) +
         detail::cross_entropy(branch.zv->values(), label);
}

// (1/|A|) sum_a -p(a) ln p*(a), p = softmax(factual), p* = softmax(counterfactual).
inline double loss_kl(std::span<const double> factual_fused,
                      std::span<const double> counterfactual_fused) {
  if (factual_fused.size() != counterfactual_fused.size()) {
    throw DimensionError("loss_kl: length mismatch");
  }
  const auto p = detail::softmax(factual_fused);
  const double lse = detail::log_sum_exp(counterfactual_fused);
  double s = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    s -= p[a] * (counterfactual_fused[a] - lse);
  }
  return s / static_cast<double>(p.size());
}

inline double loss_kl(const Logits& factual_fused, const Logits& counterfactual_fused) {
  return loss_kl(factual_fused.values(), counterfactual_fused.values());
}

struct LossTerms {
  bool cls = true;
  bool kl = true;
};

// kConstantOnly sends the KL gradient to c alone. kFull also differentiates
// the KL term through the encoders; it exists for gradient checking.
enum class KlRouting { kConstantOnly, kFull };

struct LossAndGrad {
  double loss = 0.0;
  EncoderParams grad;
  double grad_c = 0.0;
};

// Sum over the selected samples of L_cls + L_kl, with gradients. The
// counterfactual score inside L_kl is h(zq, c, c).
inline LossAndGrad loss_final(const std::vector<SyntheticSample>& samples,
                              std::span<const std::size_t> batch, const EncoderParams& params,
                              double c, const FusionConfig& fusion, LossTerms terms = {},
                              KlRouting routing = KlRouting::kConstantOnly) {
  if (batch.empty()) throw ContractViolation("loss_final: empty batch");
  const std::size_t A = params.vocab_size;
  LossAndGrad out;
  out.grad = EncoderParams::zeros(A, params.q_dim, params.v_dim, params.hidden);

  detail::EncoderTrace tq, tv, tk;
  std::vector<double> joint, fused(A), cf(A), dq(A), dv(A), dk(A), dfused(A), dcf(A);
  std::vector<std::array<double, 3>> gf(A), gcf(A);
  const bool full = routing == KlRouting::kFull;

  for (std::size_t idx : batch) {
    if (idx >= samples.size()) throw IndexError("batch index outside the dataset");
    const SyntheticSample& s = samples[idx];
    detail::check_features(params, s.q_features, s.v_features);
    if (s.label >= A) throw IndexError("label outside vocabulary");

    detail::encode(params.question, s.q_features, tq);
    detail::encode(params.vision, s.v_features, tv);
    joint.assign(s.q_features.begin(), s.q_features.end());
    joint.insert(joint.end(), s.v_features.begin(), s.v_features.end());
    detail::encode(params.joint, joint, tk);
    const auto& zq = tq.output;
    const auto& zv = tv.output;
    const auto& zk = tk.output;

    for (std::size_t a = 0; a < A; ++a) {
      fused[a] = fusion::value(fusion, zq[a], zv[a], zk[a]);
      gf[a] = fusion::partials(fusion, zq[a], zv[a], zk[a]);
      cf[a] = fusion::value(fusion, zq[a], c, c);
      gcf[a] = fusion::partials(fusion, zq[a], c, c);
    }
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dfused.begin(), dfused.end(), 0.0);

    if (terms.cls) {
      out.loss += detail::cross_entropy(fused, s.label) + detail::cross_entropy(zq, s.label) +
                  detail::cross_entropy(zv, s.label);
      const auto pf = detail::softmax(fused);
      const auto pq = detail::softmax(zq);
      const auto pv = detail::softmax(zv);
      for (std::size_t a = 0; a < A; ++a) {
        const double onehot = a == s.label ? 1.0 : 0.0;
        dfused[a] = pf[a] - onehot;
        dq[a] = pq[a] - onehot;
        dv[a] = pv[a] - onehot;
      }
    }

    if (terms.kl) {
      out.loss += loss_kl(fused, cf);
      const auto p = detail::softmax(fused);
      const auto pstar = detail::softmax(cf);
      const double inv_a = 1.0 / static_cast<double>(A);
      for (std::size_t a = 0; a < A; ++a) dcf[a] = -inv_a * (p[a] - pstar[a]);
      for (std::size_t a = 0; a < A; ++a) out.grad_c += dcf[a] * (gcf[a][1] + gcf[a][2]);
      if (full) {
        // d/d(fused) of (1/A) sum -p ln p*, with p = softmax(fused).
        const double lse = detail::log_sum_exp(cf);
        double mean_g = 0.0;
        std::vector<double> g(A);
        for (std::size_t a = 0; a < A; ++a) {
          g[a] = -inv_a * (cf[a] - lse);
          mean_g += p[a] * g[a];
        }
        for (std::size_t a = 0; a < A; ++a) {
          dfused[a] += p[a] * (g[a] - mean_g);
          dq[a] += dcf[a] * gcf[a][0];
        }
      }
    }

    for (std::size_t a = 0; a < A; ++a) {
      dq[a] += dfused[a] * gf[a][0];
      dv[a] += dfused[a] * gf[a][1];
      dk[a] += dfused[a] * gf[a][2];
    }
    detail::backprop(params.question, tq, dq, out.grad.question);
    detail::backprop(params.vision, tv, dv, out.grad.vision);
    detail::backprop(params.joint, tk, dk, out.grad.joint);
  }
  return out;
}

inline LossAndGrad loss_final(const std::vector<SyntheticSample>& samples,
                              const EncoderParams& params, double c,
                              const FusionConfig& fusion, LossTerms terms = {},
                              KlRouting routing = KlRouting::kConstantOnly) {
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  return loss_final(samples, all, params, c, fusion, terms, routing);
}

// SGD with momentum: v <- mu v + g; p <- p - lr v.
class Optimizer {
 public:
  Optimizer(const EncoderParams& shape, double learning_rate, double momentum)
      : lr_(learning_rate),
        mu_(momentum),
        velocity_(EncoderParams::zeros(shape.vocab_size, shape.q_dim, shape.v_dim,
                                       shape.hidden)) {}

  void step(EncoderParams& params, double& c, const LossAndGrad& g) {
    std::vector<Dense*> p_layers, v_layers;
    std::vector<const Dense*> g_layers;
    params.for_each_layer([&](Dense& d) { p_layers.push_back(&d); });
    velocity_.for_each_layer([&](Dense& d) { v_layers.push_back(&d); });
    g.grad.for_each_layer([&](const Dense& d) { g_layers.push_back(&d); });
    for (std::size_t l = 0; l < p_layers.size(); ++l) {
      update(p_layers[l]->weight, v_layers[l]->weight, g_layers[l]->weight);
      update(p_layers[l]->bias, v_layers[l]->bias, g_layers[l]->bias);
    }
    c_velocity_ = mu_ * c_velocity_ + g.grad_c;
    c -= lr_ * c_velocity_;
  }

 private:
  void update(std::vector<double>& p, std::vector<double>& v, const std::vector<double>& g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = mu_ * v[i] + g[i];
      p[i] -= lr_ * v[i];
    }
  }

  double lr_;
  double mu_;
  EncoderParams velocity_;
  double c_velocity_ = 0.0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss_sum = 0.0;
  double loss_mean = 0.0;
  double c = 0.0;
};

struct TrainResult {
  EncoderParams params;
  CounterfactualConstant c;
  std::vector<EpochStats> trace;
};

// Starting point of train(): Glorot-uniform weights drawn from the seed.
inline EncoderParams initial_params(const DatasetSplit& data, const TrainConfig& cfg) {
  std::mt19937_64 init_rng(cfg.seed * 2 + 1);
  return EncoderParams::glorot(data.vocab_size, data.q_dim, data.v_dim, cfg.hidden, init_rng);
}

inline TrainResult train(const DatasetSplit& data, const TrainConfig& cfg,
                         const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  if (data.samples.empty()) throw ContractViolation("train: empty dataset");
  for (const auto& s : data.samples) {
    if (s.q_features.size() != data.q_dim || s.v_features.size() != data.v_dim) {
      throw DimensionError("train: inconsistent feature dimensions in sample " +
                           std::to_string(s.sample_id));
    }
  }

  std::mt19937_64 order_rng(cfg.seed * 2 + 2);
  EncoderParams params = initial_params(data, cfg);
  double c = 0.0;
  Optimizer opt(params, cfg.learning_rate, cfg.momentum);

  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  std::size_t batch_index = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochStats stats;
    stats.epoch = epoch + 1;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> batch(order.data() + start, len);
      const auto fail = [&] {
        return NumericalError("non-finite loss in epoch " + std::to_string(epoch + 1) +
                                  ", batch " + std::to_string(batch_index),
                              batch_index);
      };
      LossAndGrad g;
      try {
        g = loss_final(data.samples, batch, params, c, cfg.fusion);
      } catch (const DomainError&) {
        // Overflowing activations surface as non-finite logits.
        throw fail();
      }
      if (!std::isfinite(g.loss)) throw fail();
      stats.loss_sum += g.loss;
      opt.step(params, c, g);
      ++batch_index;
    }
    stats.loss_mean = stats.loss_sum / static_cast<double>(order.size());
    stats.c = c;
    result.trace.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  result.params = std::move(params);
  result.c = CounterfactualConstant(c);
  return result;
}

}  // namespace model
}  // namespace pwvqa
