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

// Test-only finite-difference oracle for the training objective. The loss is
// rebuilt from the public single-sample operations (forward, fuse, loss_cls,
// loss_kl) rather than from model::loss_final.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pwvqa/causal.hpp"
#include "pwvqa/datagen.hpp"
#include "pwvqa/fusion.hpp"
#include "pwvqa/model.hpp"

namespace pwvqa::testing {

inline double reference_loss(const std::vector<SyntheticSample>& samples,
                             const EncoderParams& params, double c, const FusionConfig& fusion,
                             bool with_cls, bool with_kl) {
  double total = 0.0;
  for (const auto& s : samples) {
    const BranchLogits b = model::forward(s.q_features, s.v_features, params);
    const Logits fused = fusion::fuse(b, fusion);
    if (with_cls) total += model::loss_cls(b, fused, s.label);
    if (with_kl) {
      const Logits cv = Logits::filled(fused.size(), c);
      const Logits cf = fusion::fuse(BranchLogits{b.zq, cv, cv}, fusion);
      total += model::loss_kl(fused, cf);
    }
  }
  return total;
}

struct FdGradient {
  std::vector<double> params;
  double c = 0.0;
};

// Central differences of reference_loss. `cls_only_for_params` differentiates
// only the classification terms w.r.t. the encoder weights, which is the
// objective seen by the encoders when the KL gradient is routed to c alone.
inline FdGradient fd_gradient(const std::vector<SyntheticSample>& samples,
                              const EncoderParams& params, double c, const FusionConfig& fusion,
                              bool cls_only_for_params, double step = 1e-5) {
  FdGradient out;
  const std::vector<double> flat = params.flatten();
  EncoderParams probe = params;
  std::vector<double> x = flat;
  out.params.resize(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    x[i] = flat[i] + step;
    probe.unflatten(x);
    const double up = reference_loss(samples, probe, c, fusion, true, !cls_only_for_params);
    x[i] = flat[i] - step;
    probe.unflatten(x);
    const double down = reference_loss(samples, probe, c, fusion, true, !cls_only_for_params);
    x[i] = flat[i];
    out.params[i] = (up - down) / (2.0 * step);
  }
  out.c = (reference_loss(samples, params, c + step, fusion, true, true) -
           reference_loss(samples, params, c - step, fusion, true, true)) /
          (2.0 * step);
  return out;
}

// |a - b| relative to the larger magnitude, floored at 1e-3 so gradients that
// are numerically zero compare on an absolute scale.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

}  // namespace pwvqa::testing
