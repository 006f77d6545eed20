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

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pwvqa/error.hpp"

namespace pwvqa {

// Score vector over the answer vocabulary. Every entry is finite and the
// length is fixed at construction.
class Logits {
 public:
  Logits() = default;
  explicit Logits(std::vector<double> scores) : scores_(std::move(scores)) {
    check_finite();
  }
  Logits(std::initializer_list<double> scores) : scores_(scores) { check_finite(); }

  static Logits filled(std::size_t size, double value) {
    return Logits(std::vector<double>(size, value));
  }

  std::size_t size() const { return scores_.size(); }
  bool empty() const { return scores_.empty(); }
  double operator[](std::size_t i) const { return scores_[i]; }
  std::span<const double> values() const { return scores_; }
  const std::vector<double>& vector() const { return scores_; }

  auto begin() const { return scores_.begin(); }
  auto end() const { return scores_.end(); }

  friend bool operator==(const Logits&, const Logits&) = default;

 private:
  void check_finite() const {
    for (std::size_t i = 0; i < scores_.size(); ++i) {
      if (!std::isfinite(scores_[i])) {
        throw DomainError("non-finite logit at index " + std::to_string(i));
      }
    }
  }

  std::vector<double> scores_;
};

// The three branch scores (question-only, vision-only, multimodal). A branch
// may be absent, in which case it is realized counterfactually.
struct BranchLogits {
  std::optional<Logits> zq;
  std::optional<Logits> zv;
  std::optional<Logits> zk;

  bool complete() const { return zq && zv && zk; }

  // Common length of the present branches; throws DimensionError when they
  // disagree and returns 0 when none is present.
  std::size_t size() const {
    std::size_t n = 0;
    bool seen = false;
    for (const auto* b : {&zq, &zv, &zk}) {
      if (!b->has_value()) continue;
      if (seen && (*b)->size() != n) {
        throw DimensionError("branch logits have different lengths");
      }
      n = (*b)->size();
      seen = true;
    }
    return n;
  }
};

// Logistic sigmoid, two-branch form so exp() never overflows.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ln(sigmoid(x)) without cancellation for large |x|.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

// ln(exp(a) + exp(b)).
inline double log_add_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw ContractViolation("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

}  // namespace pwvqa
