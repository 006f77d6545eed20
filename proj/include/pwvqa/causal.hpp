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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pwvqa/error.hpp"
#include "pwvqa/fusion.hpp"
#include "pwvqa/logits.hpp"

namespace pwvqa {

// The learnable scalar that stands in for a blocked branch. Broadcast to a
// constant vector of vocabulary length whenever a branch is realized
// counterfactually.
class CounterfactualConstant {
 public:
  CounterfactualConstant() = default;
  explicit CounterfactualConstant(double value) : value_(value) {
    if (!std::isfinite(value)) throw DomainError("counterfactual constant must be finite");
  }
  double value() const { return value_; }
  Logits broadcast(std::size_t size) const { return Logits::filled(size, value_); }

 private:
  double value_ = 0.0;
};

struct EffectDecomposition {
  Logits te;
  Logits nde;
  Logits tie;
};

// Scoring rules compared at evaluation time.
enum class InferenceRule { kTIE, kTE, kFusedOnly, kQOnly };

inline std::string_view to_string(InferenceRule r) {
  switch (r) {
    case InferenceRule::kTIE: return "tie";
    case InferenceRule::kTE: return "te";
    case InferenceRule::kFusedOnly: return "fused";
    case InferenceRule::kQOnly: return "q-only";
  }
  return "?";
}

inline InferenceRule parse_inference_rule(std::string_view s) {
  if (s == "tie") return InferenceRule::kTIE;
  if (s == "te") return InferenceRule::kTE;
  if (s == "fused") return InferenceRule::kFusedOnly;
  if (s == "q-only") return InferenceRule::kQOnly;
  throw ConfigError("unknown inference rule '" + std::string(s) + "'");
}

namespace causal {

// A present branch is a fact and passes through; an absent one becomes c.
inline Logits realize(const std::optional<Logits>& branch_input,
                      const CounterfactualConstant& c, std::size_t size) {
  if (branch_input) return *branch_input;
  return c.broadcast(size);
}

// The multimodal score exists only when both vision and question are facts.
inline Logits realize_k(bool v_present, bool q_present,
                        const std::optional<Logits>& encoder_output,
                        const CounterfactualConstant& c, std::size_t size) {
  if (v_present && q_present) {
    if (!encoder_output) {
      throw ContractViolation("realize_k: both inputs present but no encoder output");
    }
    return *encoder_output;
  }
  return c.broadcast(size);
}

// Branches of the counterfactual point used for the direct effect. The
// multimodal path is blocked in both modes, so K always takes c.
inline BranchLogits counterfactual_point(const BranchLogits& factual,
                                         const CounterfactualConstant& c, CfMode mode) {
  const std::size_t n = factual.size();
  const bool v_fact = mode == CfMode::kKOnly;
  BranchLogits cf;
  cf.zq = realize(factual.zq, c, n);
  cf.zv = realize(v_fact ? factual.zv : std::optional<Logits>{}, c, n);
  cf.zk = realize_k(false, true, std::nullopt, c, n);
  return cf;
}

inline EffectDecomposition decompose(const BranchLogits& factual,
                                     const CounterfactualConstant& c,
                                     const FusionConfig& cfg) {
  if (!factual.complete()) {
    throw ContractViolation("decompose requires all three factual branches");
  }
  const std::size_t n = factual.size();
  const Logits cval = c.broadcast(n);
  const Logits fact = fusion::fuse(factual, cfg);
  const Logits cf = fusion::fuse(counterfactual_point(factual, c, cfg.cf_mode), cfg);
  const Logits ref = fusion::fuse(BranchLogits{cval, cval, cval}, cfg);

  std::vector<double> te(n), nde(n), tie(n);
  for (std::size_t i = 0; i < n; ++i) {
    te[i] = fact[i] - ref[i];
    nde[i] = cf[i] - ref[i];
    tie[i] = te[i] - nde[i];
  }
  return {Logits(std::move(te)), Logits(std::move(nde)), Logits(std::move(tie))};
}

// TIE = h(zq, zv, zk) - h(counterfactual point). The all-counterfactual
// reference cancels, so it is not evaluated here.
inline std::vector<double> tie_scores(const BranchLogits& factual,
                                      const CounterfactualConstant& c,
                                      const FusionConfig& cfg) {
  return decompose(factual, c, cfg).tie.vector();
}

inline std::size_t infer_answer(const BranchLogits& factual,
                                const CounterfactualConstant& c,
                                const FusionConfig& cfg) {
  const auto d = decompose(factual, c, cfg);
  return argmax(d.tie.values());
}

// Scores a complete branch triple under one of the comparison rules.
inline std::vector<double> rule_scores(InferenceRule rule, const BranchLogits& factual,
                                       const CounterfactualConstant& c,
                                       const FusionConfig& cfg) {
  switch (rule) {
    case InferenceRule::kTIE: return decompose(factual, c, cfg).tie.vector();
    case InferenceRule::kTE: return decompose(factual, c, cfg).te.vector();
    case InferenceRule::kFusedOnly: return fusion::fuse(factual, cfg).vector();
    case InferenceRule::kQOnly:
      if (!factual.zq) throw ContractViolation("q-only rule requires zq");
      return factual.zq->vector();
  }
  return {};
}

inline std::size_t predict(InferenceRule rule, const BranchLogits& factual,
                           const CounterfactualConstant& c, const FusionConfig& cfg) {
  return argmax(rule_scores(rule, factual, c, cfg));
}

}  // namespace causal
}  // namespace pwvqa
