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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pwvqa/error.hpp"

namespace pwvqa {

enum class ShiftMode { kInvertPrior, kUniformPrior };

inline std::string_view to_string(ShiftMode m) {
  return m == ShiftMode::kInvertPrior ? "invert" : "uniform";
}

inline ShiftMode parse_shift_mode(std::string_view s) {
  if (s == "invert") return ShiftMode::kInvertPrior;
  if (s == "uniform") return ShiftMode::kUniformPrior;
  throw ConfigError("unknown shift mode '" + std::string(s) + "'");
}

struct GenConfig {
  std::size_t vocab_size = 8;
  std::size_t num_qtypes = 3;
  std::size_t q_dim = 16;
  std::size_t v_dim = 16;
  std::size_t num_confounder_states = 4;
  std::size_t train_size = 8000;
  std::size_t test_size = 4000;
  // Train-split probability mass on the answer a question type prefers.
  double bias_strength = 0.85;
  ShiftMode shift_mode = ShiftMode::kInvertPrior;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;

  // Scales of the embedding tables. The question embedding is a sum of a
  // type component, a confounder component and a (weak) answer component.
  double v_signal = 0.35;
  double q_type_signal = 1.0;
  double q_confounder_signal = 0.5;
  double q_answer_signal = 0.15;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (num_qtypes < 1) throw ConfigError("num_qtypes must be >= 1");
    if (num_confounder_states < 1) throw ConfigError("num_confounder_states must be >= 1");
    if (q_dim < 1 || v_dim < 1) throw ConfigError("feature dimensions must be >= 1");
    if (train_size < num_qtypes || test_size < num_qtypes) {
      throw ConfigError("each split needs at least one sample per question type");
    }
    if (!(bias_strength >= 0.0 && bias_strength <= 1.0)) {
      throw ConfigError("bias_strength must lie in [0, 1]");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
      throw ConfigError("noise_sigma must be >= 0");
    }
    if (bias_strength == 1.0 && vocab_size < num_qtypes) {
      throw ConfigError(
          "bias_strength = 1 needs a distinct preferred answer per question type");
    }
  }
};

// The latent confounder used during generation is deliberately not stored.
struct SyntheticSample {
  std::size_t sample_id = 0;
  std::vector<double> q_features;
  std::vector<double> v_features;
  std::size_t label = 0;
  std::size_t qtype = 0;

  friend bool operator==(const SyntheticSample&, const SyntheticSample&) = default;
};

inline std::vector<std::string> default_qtype_names(std::size_t n) {
  if (n == 3) return {"yes/no", "number", "other"};
  std::vector<std::string> names;
  for (std::size_t t = 0; t < n; ++t) names.push_back("type" + std::to_string(t));
  return names;
}

struct DatasetSplit {
  std::size_t vocab_size = 0;
  std::vector<std::string> qtype_names;
  std::size_t q_dim = 0;
  std::size_t v_dim = 0;
  std::vector<SyntheticSample> samples;
  // prior_table[t][a] = realized P(a | qtype = t).
  std::vector<std::vector<double>> prior_table;

  std::size_t num_qtypes() const { return qtype_names.size(); }

  // Recounts prior_table from the samples.
  void refresh_prior() {
    prior_table.assign(num_qtypes(), std::vector<double>(vocab_size, 0.0));
    std::vector<std::size_t> totals(num_qtypes(), 0);
    for (const auto& s : samples) {
      prior_table[s.qtype][s.label] += 1.0;
      ++totals[s.qtype];
    }
    for (std::size_t t = 0; t < num_qtypes(); ++t) {
      if (totals[t] == 0) continue;
      for (double& p : prior_table[t]) p /= static_cast<double>(totals[t]);
    }
  }

  // Label histogram over the whole split, normalized.
  std::vector<double> answer_distribution() const {
    std::vector<double> d(vocab_size, 0.0);
    for (const auto& s : samples) d[s.label] += 1.0;
    if (!samples.empty()) {
      for (double& p : d) p /= static_cast<double>(samples.size());
    }
    return d;
  }
};

namespace datagen {

// Fixed generative tables derived from the seed. Exposed for tests that need
// to inspect the intended priors.
struct World {
  std::vector<double> p_u;                          // P(u)
  std::vector<std::vector<double>> p_t_given_u;     // [u][t]
  std::vector<std::size_t> preferred;               // [t] -> answer
  std::vector<std::vector<std::vector<double>>> p_train;  // [t][u][a]
  std::vector<std::vector<std::vector<double>>> p_test;   // [t][u][a]
  std::vector<std::vector<double>> v_embed;         // [a][v_dim]
  std::vector<std::vector<double>> q_type_embed;    // [t][q_dim]
  std::vector<std::vector<double>> q_conf_embed;    // [u][q_dim]
  std::vector<std::vector<double>> q_answer_embed;  // [a][q_dim]
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), 0x70777671u};
  return std::mt19937_64(seq);
}

inline void normalize(std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
}

inline std::vector<std::vector<double>> gaussian_table(std::mt19937_64& rng, std::size_t rows,
                                                       std::size_t cols, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> table(rows, std::vector<double>(cols));
  for (auto& row : table) {
    for (double& x : row) x = scale * normal(rng);
  }
  return table;
}

inline std::size_t draw(std::mt19937_64& rng, const std::vector<double>& probs) {
  std::discrete_distribution<std::size_t> d(probs.begin(), probs.end());
  return d(rng);
}

// Reflects a distribution about (max + min) / 2: the ranking is reversed and
// the most likely answer becomes the least likely.
inline std::vector<double> invert_ranking(const std::vector<double>& p) {
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  std::vector<double> out(p.size());
  for (std::size_t a = 0; a < p.size(); ++a) out[a] = *hi + *lo - p[a];
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  if (total <= 0.0) return std::vector<double>(p.size(), 1.0 / static_cast<double>(p.size()));
  for (double& x : out) x /= total;
  return out;
}

}  // namespace detail

inline World build_world(const GenConfig& cfg) {
  cfg.validate();
  const std::size_t A = cfg.vocab_size, T = cfg.num_qtypes, U = cfg.num_confounder_states;
  auto rng = detail::stream(cfg.seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  World w;

  w.p_u.resize(U);
  for (double& x : w.p_u) x = 0.5 + unit(rng);
  detail::normalize(w.p_u);

  // Each confounder state favours one question type.
  w.p_t_given_u.assign(U, std::vector<double>(T));
  for (std::size_t u = 0; u < U; ++u) {
    for (std::size_t t = 0; t < T; ++t) {
      w.p_t_given_u[u][t] = 0.5 + unit(rng) + (t == u % T ? 2.0 : 0.0);
    }
    detail::normalize(w.p_t_given_u[u]);
  }

  std::vector<std::size_t> perm(A);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  w.preferred.resize(T);
  for (std::size_t t = 0; t < T; ++t) w.preferred[t] = perm[t % A];

  // The confounder shapes how the non-preferred mass is spread.
  std::vector<std::vector<double>> spread(U, std::vector<double>(A));
  for (auto& row : spread) {
    for (double& x : row) x = 0.5 + unit(rng);
  }

  w.p_train.assign(T, std::vector<std::vector<double>>(U, std::vector<double>(A)));
  w.p_test = w.p_train;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < U; ++u) {
      auto& row = w.p_train[t][u];
      double rest = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        if (a != w.preferred[t]) rest += spread[u][a];
      }
      for (std::size_t a = 0; a < A; ++a) {
        row[a] = a == w.preferred[t] ? cfg.bias_strength
                                     : (1.0 - cfg.bias_strength) * spread[u][a] / rest;
      }
      w.p_test[t][u] = cfg.shift_mode == ShiftMode::kInvertPrior
                           ? detail::invert_ranking(row)
                           : std::vector<double>(A, 1.0 / static_cast<double>(A));
    }
  }

  w.v_embed = detail::gaussian_table(rng, A, cfg.v_dim, cfg.v_signal);
  w.q_type_embed = detail::gaussian_table(rng, T, cfg.q_dim, cfg.q_type_signal);
  w.q_conf_embed = detail::gaussian_table(rng, U, cfg.q_dim, cfg.q_confounder_signal);
  w.q_answer_embed = detail::gaussian_table(rng, A, cfg.q_dim, cfg.q_answer_signal);
  return w;
}

namespace detail {

inline DatasetSplit sample_split(const GenConfig& cfg, const World& w, bool train,
                                 std::size_t size, std::uint64_t stream_id) {
  const std::size_t U = cfg.num_confounder_states, T = cfg.num_qtypes;
  auto rng = stream(cfg.seed, stream_id);
  std::normal_distribution<double> noise(0.0, 1.0);

  DatasetSplit split;
  split.vocab_size = cfg.vocab_size;
  split.qtype_names = default_qtype_names(T);
  split.q_dim = cfg.q_dim;
  split.v_dim = cfg.v_dim;
  split.samples.reserve(size);

  for (std::size_t i = 0; i < size; ++i) {
    std::size_t u = 0, t = 0;
    if (i < T) {
      // Seed every question type once, drawing u from its posterior given t.
      t = i;
      std::vector<double> post(U);
      for (std::size_t k = 0; k < U; ++k) post[k] = w.p_u[k] * w.p_t_given_u[k][t];
      u = draw(rng, post);
    } else {
      u = draw(rng, w.p_u);
      t = draw(rng, w.p_t_given_u[u]);
    }
    const auto& prior = train ? w.p_train[t][u] : w.p_test[t][u];
    const std::size_t a = draw(rng, prior);

    SyntheticSample s;
    s.sample_id = i;
    s.label = a;
    s.qtype = t;
    s.q_features.resize(cfg.q_dim);
    for (std::size_t d = 0; d < cfg.q_dim; ++d) {
      s.q_features[d] = w.q_type_embed[t][d] + w.q_conf_embed[u][d] +
                        w.q_answer_embed[a][d] + cfg.noise_sigma * noise(rng);
    }
    s.v_features.resize(cfg.v_dim);
    for (std::size_t d = 0; d < cfg.v_dim; ++d) {
      s.v_features[d] = w.v_embed[a][d] + cfg.noise_sigma * noise(rng);
    }
    split.samples.push_back(std::move(s));
  }
  split.refresh_prior();
  return split;
}

}  // namespace detail

struct GeneratedData {
  DatasetSplit train;
  DatasetSplit test;
};

// Samples u, then the question type, then the answer from the split's prior,
// then question and image features from the answer (anticausal direction).
inline GeneratedData generate(const GenConfig& cfg) {
  const World w = build_world(cfg);
  return {detail::sample_split(cfg, w, true, cfg.train_size, 2),
          detail::sample_split(cfg, w, false, cfg.test_size, 3)};
}

}  // namespace datagen
}  // namespace pwvqa
