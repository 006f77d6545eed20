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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pwvqa/error.hpp"
#include "pwvqa/logits.hpp"

namespace pwvqa {

enum class Strategy { kEA, kSum, kHM, kRubiMask };

// Which branches are replaced by the counterfactual constant when scoring the
// biased (direct) path: kVK uses h(zq, c, c), kKOnly uses h(zq, zv, c).
enum class CfMode { kVK, kKOnly };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kEA: return "ea";
    case Strategy::kSum: return "sum";
    case Strategy::kHM: return "hm";
    case Strategy::kRubiMask: return "rubi";
  }
  return "?";
}

inline std::string_view to_string(CfMode m) {
  return m == CfMode::kVK ? "vk" : "k-only";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "ea") return Strategy::kEA;
  if (s == "sum") return Strategy::kSum;
  if (s == "hm") return Strategy::kHM;
  if (s == "rubi") return Strategy::kRubiMask;
  throw ConfigError("unknown fusion strategy '" + std::string(s) + "'");
}

inline CfMode parse_cf_mode(std::string_view s) {
  if (s == "vk") return CfMode::kVK;
  if (s == "k-only") return CfMode::kKOnly;
  throw ConfigError("unknown counterfactual mode '" + std::string(s) + "'");
}

struct FusionConfig {
  static constexpr double kMinEpsilon = 1e-12;
  static constexpr double kMaxEpsilon = 1e-6;

  Strategy strategy = Strategy::kEA;
  double alpha = 1.5;
  // Added inside the logarithm of the EA fusion. Zero disables it.
  double epsilon = 5e-11;
  CfMode cf_mode = CfMode::kVK;

  void validate() const {
    if (!(alpha >= 1.0) || !std::isfinite(alpha)) {
      throw ConfigError("alpha must be >= 1, got " + std::to_string(alpha));
    }
    const bool in_range = epsilon >= kMinEpsilon && epsilon <= kMaxEpsilon;
    if (epsilon != 0.0 && !in_range) {
      throw ConfigError("epsilon must be 0 or within [1e-12, 1e-6]");
    }
  }

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

namespace fusion {

// Scalar kernels. These are the single source of truth for every vector
// entry point below and for the training code.

// EA fusion: ln(Z + eps) / (alpha + 1), where
//   Z = sq^a sv^(a+1) sk^(a+1) + sq^(a+1) sv^a sk^(a+1) + sq^(a+1) sv^(a+1) sk^a
//     = (sq sv sk)^a * (sv sk + sq sk + sq sv),
// evaluated in log space. Inputs are sorted first so the result is bitwise
// invariant under any permutation of (q, v, k).
inline double ea_log_z(double q, double v, double k, double alpha) {
  std::array<double, 3> l = {log_sigmoid(q), log_sigmoid(v), log_sigmoid(k)};
  std::sort(l.begin(), l.end());
  const double top = l[1] + l[2];
  const double log_pairs =
      top + std::log1p(std::exp(l[0] + l[1] - top) + std::exp(l[0] + l[2] - top));
  return alpha * (l[0] + l[1] + l[2]) + log_pairs;
}

inline double ea(double q, double v, double k, double alpha, double epsilon) {
  const double log_z = ea_log_z(q, v, k, alpha);
  const double log_total = epsilon > 0.0 ? log_add_exp(log_z, std::log(epsilon)) : log_z;
  return log_total / (alpha + 1.0);
}

inline std::array<double, 3> ea_partials(double q, double v, double k, double alpha,
                                         double epsilon) {
  const double lq = log_sigmoid(q), lv = log_sigmoid(v), lk = log_sigmoid(k);
  const double log_z = ea_log_z(q, v, k, alpha);
  const double log_pairs = log_z - alpha * (lq + lv + lk);
  // Z / (Z + eps)
  const double damp =
      epsilon > 0.0 ? std::exp(log_z - log_add_exp(log_z, std::log(epsilon))) : 1.0;
  const double scale = damp / (alpha + 1.0);
  // Share of the pair sum not containing the differentiated branch.
  const double share_vk = std::exp(lv + lk - log_pairs);
  const double share_qk = std::exp(lq + lk - log_pairs);
  const double share_qv = std::exp(lq + lv - log_pairs);
  return {scale * sigmoid(-q) * (alpha + 1.0 - share_vk),
          scale * sigmoid(-v) * (alpha + 1.0 - share_qk),
          scale * sigmoid(-k) * (alpha + 1.0 - share_qv)};
}

// ln sigmoid(q + v + k)
inline double sum(double q, double v, double k) { return log_sigmoid(q + v + k); }

// ln(sigmoid(q) sigmoid(v) sigmoid(k))
inline double hm(double q, double v, double k) {
  return log_sigmoid(q) + log_sigmoid(v) + log_sigmoid(k);
}

// Question-branch mask applied to the multimodal score.
inline double rubi(double q, double k) { return k * sigmoid(q); }

inline double value(const FusionConfig& cfg, double q, double v, double k) {
  switch (cfg.strategy) {
    case Strategy::kEA: return ea(q, v, k, cfg.alpha, cfg.epsilon);
    case Strategy::kSum: return sum(q, v, k);
    case Strategy::kHM: return hm(q, v, k);
    case Strategy::kRubiMask: return rubi(q, k);
  }
  return 0.0;
}

// {dh/dq, dh/dv, dh/dk}
inline std::array<double, 3> partials(const FusionConfig& cfg, double q, double v,
                                      double k) {
  switch (cfg.strategy) {
    case Strategy::kEA: return ea_partials(q, v, k, cfg.alpha, cfg.epsilon);
    case Strategy::kSum: {
      const double g = sigmoid(-(q + v + k));
      return {g, g, g};
    }
    case Strategy::kHM: return {sigmoid(-q), sigmoid(-v), sigmoid(-k)};
    case Strategy::kRubiMask: {
      const double s = sigmoid(q);
      return {k * s * sigmoid(-q), 0.0, s};
    }
  }
  return {0.0, 0.0, 0.0};
}

namespace detail {

inline std::size_t require_complete(const BranchLogits& branch) {
  if (!branch.complete()) {
    throw ContractViolation("fusion requires all three branch logits");
  }
  return branch.size();
}

template <typename Fn>
Logits map3(const BranchLogits& branch, Fn&& fn) {
  const std::size_t n = require_complete(branch);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fn((*branch.zq)[i], (*branch.zv)[i], (*branch.zk)[i]);
  }
  return Logits(std::move(out));
}

}  // namespace detail

inline Logits fuse_ea(const BranchLogits& branch, const FusionConfig& cfg) {
  if (cfg.strategy != Strategy::kEA) {
    throw ContractViolation("fuse_ea called with a non-EA configuration");
  }
  cfg.validate();
  return detail::map3(branch, [&](double q, double v, double k) {
    return ea(q, v, k, cfg.alpha, cfg.epsilon);
  });
}

inline Logits fuse_sum(const BranchLogits& branch) {
  return detail::map3(branch, [](double q, double v, double k) { return sum(q, v, k); });
}

inline Logits fuse_hm(const BranchLogits& branch) {
  return detail::map3(branch, [](double q, double v, double k) { return hm(q, v, k); });
}

inline Logits rubi_mask_fuse(const Logits& zk, const Logits& zq) {
  if (zk.size() != zq.size()) {
    throw DimensionError("rubi mask: zk and zq lengths differ");
  }
  std::vector<double> out(zk.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rubi(zq[i], zk[i]);
  return Logits(std::move(out));
}

// Applies the configured strategy.
inline Logits fuse(const BranchLogits& branch, const FusionConfig& cfg) {
  cfg.validate();
  return detail::map3(branch,
                      [&](double q, double v, double k) { return value(cfg, q, v, k); });
}

struct FusionGrad {
  Logits dq;
  Logits dv;
  Logits dk;
};

inline FusionGrad fuse_grad(const BranchLogits& branch, const FusionConfig& cfg) {
  cfg.validate();
  const std::size_t n = detail::require_complete(branch);
  std::vector<double> dq(n), dv(n), dk(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = partials(cfg, (*branch.zq)[i], (*branch.zv)[i], (*branch.zk)[i]);
    dq[i] = g[0];
    dv[i] = g[1];
    dk[i] = g[2];
  }
  return {Logits(std::move(dq)), Logits(std::move(dv)), Logits(std::move(dk))};
}

}  // namespace fusion
}  // namespace pwvqa
