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
#include <numbers>
#include <span>
#include <vector>

#include "pwvqa/error.hpp"

namespace pwvqa {

struct EvalReport {
  double acc_all = 0.0;
  std::vector<double> acc_per_qtype;
  std::vector<std::size_t> count_per_qtype;
  // Histogram of predicted answers, normalized.
  std::vector<double> answer_distribution;
  // Jensen-Shannon divergence (nats) between answer_distribution and the
  // split's label distribution.
  double js_divergence_to_test = 0.0;
};

namespace metrics {

namespace detail {
inline void check_distribution(std::span<const double> p) {
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw DomainError("distribution has a negative or NaN entry");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("distribution does not sum to 1");
}

// KL(p || m) restricted to the support of p.
inline double kl_to_mixture(std::span<const double> p, std::span<const double> m) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / m[i]);
  }
  return s;
}
}  // namespace detail

inline double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("js_divergence: length mismatch");
  detail::check_distribution(p);
  detail::check_distribution(q);
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * p[i] + 0.5 * q[i];
  // Summing the two halves in a fixed order keeps js(p, q) == js(q, p) bitwise.
  const double a = detail::kl_to_mixture(p, m);
  const double b = detail::kl_to_mixture(q, m);
  const double js = a < b ? 0.5 * a + 0.5 * b : 0.5 * b + 0.5 * a;
  return std::min(std::max(js, 0.0), std::numbers::ln2);
}

// Exact-match accuracy overall and per question type. `samples` needs
// `.label` and `.qtype`; `predict(i)` returns the answer for samples[i].
template <typename Sample, typename Predict>
EvalReport evaluate(std::span<const Sample> samples, std::size_t vocab_size,
                    std::size_t num_qtypes, Predict&& predict) {
  if (samples.empty()) throw ContractViolation("evaluate: empty split");
  EvalReport r;
  std::vector<std::size_t> hits(num_qtypes, 0);
  r.count_per_qtype.assign(num_qtypes, 0);
  r.answer_distribution.assign(vocab_size, 0.0);
  std::vector<double> truth(vocab_size, 0.0);
  std::size_t total_hits = 0;

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label >= vocab_size || s.qtype >= num_qtypes) {
      throw IndexError("evaluate: label or qtype out of range");
    }
    const std::size_t pred = predict(i);
    if (pred >= vocab_size) throw IndexError("evaluate: prediction out of range");
    ++r.count_per_qtype[s.qtype];
    r.answer_distribution[pred] += 1.0;
    truth[s.label] += 1.0;
    if (pred == s.label) {
      ++hits[s.qtype];
      ++total_hits;
    }
  }

  const double n = static_cast<double>(samples.size());
  r.acc_all = static_cast<double>(total_hits) / n;
  r.acc_per_qtype.resize(num_qtypes);
  for (std::size_t t = 0; t < num_qtypes; ++t) {
    // A question type with no samples reports 0.
    r.acc_per_qtype[t] = r.count_per_qtype[t] == 0
                             ? 0.0
                             : static_cast<double>(hits[t]) /
                                   static_cast<double>(r.count_per_qtype[t]);
  }
  for (double& p : r.answer_distribution) p /= n;
  for (double& p : truth) p /= n;
  r.js_divergence_to_test = js_divergence(r.answer_distribution, truth);
  return r;
}

}  // namespace metrics
}  // namespace pwvqa
