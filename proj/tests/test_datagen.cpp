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
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "pwvqa/datagen.hpp"
#include "pwvqa/interchange.hpp"
#include "pwvqa/metrics.hpp"

namespace pwvqa {
namespace {

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

TEST(GenConfig, Validation) {
  GenConfig g;
  g.vocab_size = 1;
  EXPECT_THROW(datagen::generate(g), ConfigError);
  g = GenConfig{};
  g.bias_strength = 1.5;
  EXPECT_THROW(datagen::generate(g), ConfigError);
  g = GenConfig{};
  g.noise_sigma = -1.0;
  EXPECT_THROW(datagen::generate(g), ConfigError);
  g = GenConfig{};
  g.bias_strength = 1.0;
  g.vocab_size = 2;
  g.num_qtypes = 3;
  EXPECT_THROW(datagen::generate(g), ConfigError);
  g.bias_strength = 0.9;
  EXPECT_NO_THROW(datagen::generate(g));
}

TEST(Generate, DegenerateLimit) {
  GenConfig g;
  g.noise_sigma = 0.0;
  g.bias_strength = 1.0;
  g.shift_mode = ShiftMode::kUniformPrior;
  g.seed = 5;
  const auto data = datagen::generate(g);
  std::map<std::size_t, std::size_t> label_of_type;
  for (const auto& s : data.train.samples) {
    auto [it, inserted] = label_of_type.emplace(s.qtype, s.label);
    EXPECT_EQ(it->second, s.label);
  }
  EXPECT_EQ(label_of_type.size(), g.num_qtypes);
  // Test labels follow the uniform conditional: every entry near 1/|A|.
  for (const auto& row : data.test.prior_table) {
    for (double p : row) EXPECT_NEAR(p, 1.0 / 8.0, 0.04);
  }
  const auto w = datagen::build_world(g);
  for (const auto& per_u : w.p_test) {
    for (const auto& row : per_u) {
      for (double p : row) EXPECT_DOUBLE_EQ(p, 1.0 / 8.0);
    }
  }
}

TEST(Generate, DeterministicGivenSeed) {
  GenConfig g;
  g.train_size = 500;
  g.test_size = 200;
  g.seed = 17;
  const auto a = datagen::generate(g);
  const auto b = datagen::generate(g);
  EXPECT_EQ(io::serialize_dataset(a.train), io::serialize_dataset(b.train));
  EXPECT_EQ(io::serialize_dataset(a.test), io::serialize_dataset(b.test));
  g.seed = 18;
  EXPECT_NE(io::serialize_dataset(datagen::generate(g).train), io::serialize_dataset(a.train));
}

TEST(Generate, DefaultPriorsAreShifted) {
  GenConfig g;
  g.seed = 7;
  const auto data = datagen::generate(g);
  ASSERT_EQ(data.train.samples.size(), 8000u);
  ASSERT_EQ(data.test.samples.size(), 4000u);
  // Independent recount from the samples.
  for (const DatasetSplit* split : {&data.train, &data.test}) {
    std::vector<std::vector<double>> counts(3, std::vector<double>(8, 0.0));
    std::vector<double> totals(3, 0.0);
    for (const auto& s : split->samples) {
      counts[s.qtype][s.label] += 1.0;
      totals[s.qtype] += 1.0;
    }
    for (std::size_t t = 0; t < 3; ++t) {
      ASSERT_GT(totals[t], 0.0);
      double sum = 0.0;
      for (std::size_t a = 0; a < 8; ++a) {
        EXPECT_DOUBLE_EQ(split->prior_table[t][a], counts[t][a] / totals[t]);
        sum += split->prior_table[t][a];
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& tr = data.train.prior_table[t];
    const auto& te = data.test.prior_table[t];
    EXPECT_GE(*std::max_element(tr.begin(), tr.end()), 0.8);
    EXPECT_LE(*std::max_element(te.begin(), te.end()), 0.35);
    EXPECT_GE(total_variation(tr, te), 0.4);
  }
}

TEST(Generate, PriorShiftAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GenConfig g;
    g.seed = seed;
    const auto data = datagen::generate(g);
    for (std::size_t t = 0; t < 3; ++t) {
      EXPECT_GE(total_variation(data.train.prior_table[t], data.test.prior_table[t]), 0.4);
    }
  }
}

TEST(Generate, InvertReversesRanking) {
  GenConfig g;
  g.seed = 3;
  const auto w = datagen::build_world(g);
  for (std::size_t t = 0; t < g.num_qtypes; ++t) {
    for (std::size_t u = 0; u < g.num_confounder_states; ++u) {
      const auto& tr = w.p_train[t][u];
      const auto& te = w.p_test[t][u];
      for (std::size_t a = 0; a < tr.size(); ++a) {
        for (std::size_t b = 0; b < tr.size(); ++b) {
          if (tr[a] > tr[b]) {
            EXPECT_LT(te[a], te[b]);
          }
        }
      }
    }
  }
}

TEST(Generate, EveryQtypePresentInSmallSplits) {
  GenConfig g;
  g.train_size = 3;
  g.test_size = 3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    g.seed = seed;
    const auto data = datagen::generate(g);
    for (const auto& row : data.test.prior_table) {
      EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-9);
    }
  }
  g.train_size = 2;
  EXPECT_THROW(datagen::generate(g), ConfigError);
}

TEST(Generate, NoiselessVisionIsNearestCentroidSeparable) {
  GenConfig g;
  g.noise_sigma = 0.0;
  g.train_size = 600;
  g.test_size = 300;
  g.seed = 21;
  const auto data = datagen::generate(g);
  // Centroids from the train split; accuracy on both splits.
  std::vector<std::vector<double>> centroid(8, std::vector<double>(g.v_dim, 0.0));
  std::vector<double> count(8, 0.0);
  for (const auto& s : data.train.samples) {
    for (std::size_t d = 0; d < g.v_dim; ++d) centroid[s.label][d] += s.v_features[d];
    count[s.label] += 1.0;
  }
  for (std::size_t a = 0; a < 8; ++a) {
    ASSERT_GT(count[a], 0.0) << "answer " << a << " never drawn";
    for (double& x : centroid[a]) x /= count[a];
  }
  for (const DatasetSplit* split : {&data.train, &data.test}) {
    const auto report =
        metrics::evaluate<SyntheticSample>(split->samples, 8, 3, [&](std::size_t i) {
          const auto& v = split->samples[i].v_features;
          std::size_t best = 0;
          double best_d = std::numeric_limits<double>::infinity();
          for (std::size_t a = 0; a < 8; ++a) {
            double d = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) d += std::pow(v[k] - centroid[a][k], 2);
            if (d < best_d) {
              best_d = d;
              best = a;
            }
          }
          return best;
        });
    EXPECT_EQ(report.acc_all, 1.0);
  }
}

TEST(SyntheticSample, HasNoLatentField) {
  // The schema is id, features, label and qtype only.
  const SyntheticSample s{1, {0.5}, {0.25}, 2, 0};
  const auto [id, q, v, label, qtype] = s;
  EXPECT_EQ(id + label + qtype, 3u);
  EXPECT_EQ(q.size() + v.size(), 2u);
}

}  // namespace
}  // namespace pwvqa
