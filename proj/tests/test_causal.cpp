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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pwvqa/causal.hpp"

namespace pwvqa {
namespace {

Logits random_logits(std::mt19937_64& rng, std::size_t n, double scale = 3.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return Logits(std::move(v));
}

TEST(Realize, PassesFactsThroughAndFillsAbsentBranches) {
  const Logits fact{1.0, 2.0};
  EXPECT_EQ(causal::realize(fact, CounterfactualConstant(0.0), 2), fact);
  EXPECT_EQ(causal::realize(std::nullopt, CounterfactualConstant(0.0), 2), (Logits{0.0, 0.0}));
  EXPECT_EQ(causal::realize(std::nullopt, CounterfactualConstant(0.3), 2), (Logits{0.3, 0.3}));
}

TEST(RealizeK, NeedsBothModalities) {
  const Logits enc{0.5, -0.5};
  EXPECT_EQ(causal::realize_k(true, true, enc, CounterfactualConstant(0.0), 2), enc);
  EXPECT_EQ(causal::realize_k(false, true, std::nullopt, CounterfactualConstant(0.0), 2),
            (Logits{0.0, 0.0}));
  EXPECT_EQ(causal::realize_k(true, false, std::nullopt, CounterfactualConstant(1.2), 2),
            (Logits{1.2, 1.2}));
  EXPECT_THROW(causal::realize_k(true, true, std::nullopt, CounterfactualConstant(0.0), 2),
               ContractViolation);
}

TEST(CounterfactualConstant, MustBeFinite) {
  EXPECT_THROW(CounterfactualConstant(NAN), DomainError);
}

TEST(Decompose, ZeroAtTheCounterfactualPoint) {
  FusionConfig cfg;
  cfg.alpha = 1.0;
  const BranchLogits b{Logits{0.0}, Logits{0.0}, Logits{0.0}};
  const auto d = causal::decompose(b, CounterfactualConstant(0.0), cfg);
  EXPECT_EQ(d.te[0], 0.0);
  EXPECT_EQ(d.nde[0], 0.0);
  EXPECT_EQ(d.tie[0], 0.0);
}

TEST(Decompose, MatchesScalarOracle) {
  // tests/oracles/scalar_oracles.py, EA alpha 1.5, eps 5e-11, c 0.2
  FusionConfig cfg;
  const BranchLogits b{Logits{1.3}, Logits{-0.7}, Logits{2.1}};
  const auto vk = causal::decompose(b, CounterfactualConstant(0.2), cfg);
  EXPECT_NEAR(vk.te[0], 0.33120865300883320561, 1e-13);
  EXPECT_NEAR(vk.nde[0], 0.31493898298276037057, 1e-13);
  EXPECT_NEAR(vk.tie[0], 0.016269670026072835046, 1e-13);

  cfg.cf_mode = CfMode::kKOnly;
  const auto konly = causal::decompose(b, CounterfactualConstant(0.2), cfg);
  EXPECT_NEAR(konly.nde[0], -0.10297298464006967946, 1e-13);
  EXPECT_NEAR(konly.tie[0], 0.43418163764890288507, 1e-13);
  EXPECT_EQ(konly.te[0], vk.te[0]);
}

TEST(Decompose, RequiresFactualBranches) {
  const BranchLogits b{Logits{1.0}, std::nullopt, Logits{1.0}};
  EXPECT_THROW(causal::decompose(b, CounterfactualConstant(0.0), FusionConfig{}),
               ContractViolation);
}

TEST(DecomposeProperty, IdentityAndModeInvariance) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> uc(-3.0, 3.0);
  std::uniform_real_distribution<double> ua(1.0, 2.0);
  for (Strategy s : {Strategy::kEA, Strategy::kSum, Strategy::kHM, Strategy::kRubiMask}) {
    for (int n = 0; n < 250; ++n) {
      FusionConfig cfg;
      cfg.strategy = s;
      cfg.alpha = ua(rng);
      const BranchLogits b{random_logits(rng, 6), random_logits(rng, 6), random_logits(rng, 6)};
      const CounterfactualConstant c(uc(rng));
      cfg.cf_mode = CfMode::kVK;
      const auto vk = causal::decompose(b, c, cfg);
      cfg.cf_mode = CfMode::kKOnly;
      const auto ko = causal::decompose(b, c, cfg);
      for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(vk.te[i] - (vk.nde[i] + vk.tie[i]), 0.0, 1e-12);
        EXPECT_NEAR(ko.te[i] - (ko.nde[i] + ko.tie[i]), 0.0, 1e-12);
        EXPECT_EQ(vk.te[i], ko.te[i]);
      }
    }
  }
}

TEST(DecomposeProperty, DegenerateAtConstantInputs) {
  for (double c : {-2.0, 0.0, 0.7}) {
    for (CfMode mode : {CfMode::kVK, CfMode::kKOnly}) {
      FusionConfig cfg;
      cfg.cf_mode = mode;
      const Logits cv = Logits::filled(4, c);
      const auto d = causal::decompose({cv, cv, cv}, CounterfactualConstant(c), cfg);
      for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(d.te[i], 0.0);
        EXPECT_EQ(d.nde[i], 0.0);
        EXPECT_EQ(d.tie[i], 0.0);
      }
    }
  }
}

TEST(Argmax, TieBreaksTowardLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.9, 0.3}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_THROW(argmax(std::vector<double>{}), ContractViolation);
}

TEST(InferAnswer, InvariantToConstantShift) {
  std::mt19937_64 rng(22);
  for (int n = 0; n < 100; ++n) {
    auto tie = random_logits(rng, 7).vector();
    const std::size_t base = argmax(tie);
    for (double& x : tie) x += 3.25;
    EXPECT_EQ(argmax(tie), base);
  }
}

TEST(InferAnswer, EqualsBruteForceArgmaxOfTie) {
  std::mt19937_64 rng(23);
  FusionConfig cfg;
  const CounterfactualConstant c(-0.8);
  for (int n = 0; n < 50; ++n) {
    const BranchLogits b{random_logits(rng, 5), random_logits(rng, 5), random_logits(rng, 5)};
    // Per answer: h(zq, zv, zk) - h(zq, c, c), straight from the scalar kernel.
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t a = 0; a < 5; ++a) {
      const double s = fusion::ea((*b.zq)[a], (*b.zv)[a], (*b.zk)[a], cfg.alpha, cfg.epsilon) -
                       fusion::ea((*b.zq)[a], c.value(), c.value(), cfg.alpha, cfg.epsilon);
      if (s > best_score) {
        best_score = s;
        best = a;
      }
    }
    EXPECT_EQ(causal::infer_answer(b, c, cfg), best);
  }
}

TEST(RuleScores, FusedAndQOnly) {
  const BranchLogits b{Logits{2.0, 0.0}, Logits{0.0, 1.0}, Logits{0.0, 1.0}};
  FusionConfig cfg;
  EXPECT_EQ(causal::rule_scores(InferenceRule::kFusedOnly, b, CounterfactualConstant(0.0), cfg),
            fusion::fuse(b, cfg).vector());
  EXPECT_EQ(causal::predict(InferenceRule::kQOnly, b, CounterfactualConstant(0.0), cfg), 0u);
}

}  // namespace
}  // namespace pwvqa
