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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "pwvqa/causal.hpp"
#include "pwvqa/checkpoint.hpp"
#include "pwvqa/datagen.hpp"
#include "pwvqa/interchange.hpp"
#include "pwvqa/metrics.hpp"
#include "pwvqa/model.hpp"

namespace pwvqa {

// One evaluated (configuration, seed, inference rule) cell.
struct RunRecord {
  Strategy strategy = Strategy::kEA;
  double alpha = 0.0;
  double epsilon = 0.0;
  CfMode cf_mode = CfMode::kVK;
  std::uint64_t seed = 0;
  InferenceRule rule = InferenceRule::kTIE;
  EvalReport report;
};

namespace pipeline {

// Branch logits for every sample of a split.
inline std::vector<BranchLogits> score_split(const EncoderParams& params,
                                             const DatasetSplit& split) {
  std::vector<BranchLogits> out;
  out.reserve(split.samples.size());
  for (const auto& s : split.samples) {
    out.push_back(model::forward(s.q_features, s.v_features, params));
  }
  return out;
}

template <typename Sample>
EvalReport evaluate_scores(std::span<const Sample> samples,
                           const std::vector<BranchLogits>& scores, std::size_t vocab,
                           std::size_t num_qtypes, InferenceRule rule,
                           const CounterfactualConstant& c, const FusionConfig& fusion) {
  return metrics::evaluate(samples, vocab, num_qtypes, [&](std::size_t i) {
    return causal::predict(rule, scores[i], c, fusion);
  });
}

inline RunRecord make_record(const FusionConfig& fusion, std::uint64_t seed,
                             InferenceRule rule, EvalReport report) {
  return {fusion.strategy, fusion.alpha, fusion.epsilon, fusion.cf_mode, seed, rule,
          std::move(report)};
}

inline void check_compatible(const EncoderParams& params, const DatasetSplit& split) {
  if (params.vocab_size != split.vocab_size) {
    throw FormatError("checkpoint vocabulary " + std::to_string(params.vocab_size) +
                      " does not match data vocabulary " + std::to_string(split.vocab_size));
  }
  if (params.q_dim != split.q_dim || params.v_dim != split.v_dim) {
    throw FormatError("checkpoint feature dimensions do not match the data");
  }
}

inline std::vector<RunRecord> evaluate_checkpoint(const Checkpoint& ck,
                                                  const DatasetSplit& test,
                                                  const std::vector<InferenceRule>& rules) {
  check_compatible(ck.params, test);
  const auto scores = score_split(ck.params, test);
  std::vector<RunRecord> rows;
  for (InferenceRule rule : rules) {
    rows.push_back(make_record(
        ck.fusion, ck.seed, rule,
        evaluate_scores<SyntheticSample>(test.samples, scores, test.vocab_size,
                                         test.num_qtypes(), rule, ck.c, ck.fusion)));
  }
  return rows;
}

// Re-scores imported logits; no training involved.
inline std::vector<RunRecord> evaluate_logits(const LogitFile& file,
                                              const CounterfactualConstant& c,
                                              const FusionConfig& fusion, std::uint64_t seed,
                                              const std::vector<InferenceRule>& rules) {
  fusion.validate();
  std::vector<BranchLogits> scores;
  scores.reserve(file.records.size());
  for (const auto& r : file.records) scores.push_back(r.branch);
  std::vector<RunRecord> rows;
  for (InferenceRule rule : rules) {
    rows.push_back(make_record(
        fusion, seed, rule,
        evaluate_scores<LogitRecord>(file.records, scores, file.vocab_size,
                                     file.qtype_names.size(), rule, c, fusion)));
  }
  return rows;
}

struct SweepSpec {
  std::vector<double> alphas;
  std::vector<double> epsilons;
  std::vector<std::uint64_t> seeds;
  std::vector<InferenceRule> rules{InferenceRule::kTIE};
  TrainConfig base;
  std::size_t workers = 1;
};

inline bool record_less(const RunRecord& a, const RunRecord& b) {
  return std::make_tuple(a.alpha, a.epsilon, a.seed, static_cast<int>(a.rule)) <
         std::make_tuple(b.alpha, b.epsilon, b.seed, static_cast<int>(b.rule));
}

// Trains and evaluates every (alpha, epsilon, seed) cell. Cells share no
// state, and the result is sorted by (alpha, epsilon, seed, rule), so the
// worker count does not affect the output.
inline std::vector<RunRecord> run_sweep(const DatasetSplit& train, const DatasetSplit& test,
                                        const SweepSpec& spec) {
  if (spec.alphas.empty() || spec.epsilons.empty() || spec.seeds.empty() ||
      spec.rules.empty()) {
    throw ConfigError("sweep grid is empty");
  }
  struct Cell {
    double alpha;
    double epsilon;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double a : spec.alphas) {
    for (double e : spec.epsilons) {
      for (std::uint64_t s : spec.seeds) cells.push_back({a, e, s});
    }
  }
  for (const Cell& cell : cells) {
    TrainConfig cfg = spec.base;
    cfg.fusion.alpha = cell.alpha;
    cfg.fusion.epsilon = cell.epsilon;
    cfg.validate();
  }

  std::vector<std::vector<RunRecord>> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        TrainConfig cfg = spec.base;
        cfg.fusion.alpha = cells[i].alpha;
        cfg.fusion.epsilon = cells[i].epsilon;
        cfg.seed = cells[i].seed;
        auto trained = model::train(train, cfg);
        Checkpoint ck{std::move(trained.params), trained.c, cfg.fusion, cfg.seed};
        results[i] = evaluate_checkpoint(ck, test, spec.rules);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(spec.workers, cells.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<RunRecord> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  std::stable_sort(rows.begin(), rows.end(), record_less);
  return rows;
}

// Inclusive a:b:step grid, values rounded to 12 decimals so 1.0:2.0:0.1 gives
// 1.1 rather than 1.1000000000000001.
inline std::vector<double> linear_grid(double start, double stop, double step) {
  if (!(step > 0.0) || !(stop >= start) || !std::isfinite(start) || !std::isfinite(stop)) {
    throw ConfigError("grid must satisfy start <= stop and step > 0");
  }
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  return out;
}

// Results table. Columns, in order:
//   strategy,alpha,epsilon,cf_mode,seed,rule,acc_all,acc_qtype0..acc_qtype{T-1},js_to_test
inline std::string format_csv_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string results_csv(const std::vector<RunRecord>& rows, std::size_t num_qtypes) {
  std::string out = "strategy,alpha,epsilon,cf_mode,seed,rule,acc_all";
  for (std::size_t t = 0; t < num_qtypes; ++t) out += ",acc_qtype" + std::to_string(t);
  out += ",js_to_test\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.strategy)) + "," + format_csv_number(r.alpha) + "," +
           format_csv_number(r.epsilon) + "," + std::string(to_string(r.cf_mode)) + "," +
           std::to_string(r.seed) + "," + std::string(to_string(r.rule)) + "," +
           format_csv_number(r.report.acc_all);
    for (std::size_t t = 0; t < num_qtypes; ++t) {
      out += "," + format_csv_number(r.report.acc_per_qtype.at(t));
    }
    out += "," + format_csv_number(r.report.js_divergence_to_test) + "\n";
  }
  return out;
}

inline std::string results_json(const std::vector<RunRecord>& rows,
                                const std::vector<std::string>& qtype_names) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json per_type = nlohmann::json::object();
    for (std::size_t t = 0; t < qtype_names.size(); ++t) {
      per_type[qtype_names[t]] = r.report.acc_per_qtype.at(t);
    }
    arr.push_back({{"strategy", to_string(r.strategy)},
                   {"alpha", r.alpha},
                   {"epsilon", r.epsilon},
                   {"cf_mode", to_string(r.cf_mode)},
                   {"seed", r.seed},
                   {"rule", to_string(r.rule)},
                   {"acc_all", r.report.acc_all},
                   {"acc_per_qtype", per_type},
                   {"answer_distribution", r.report.answer_distribution},
                   {"js_to_test", r.report.js_divergence_to_test}});
  }
  return arr.dump(2) + "\n";
}

// Long-format answer histogram: series,answer,fraction. Series are the
// reference distributions passed in plus one per row ("<rule>@seed").
inline std::string histogram_csv(
    const std::vector<std::pair<std::string, std::vector<double>>>& references,
    const std::vector<RunRecord>& rows) {
  std::string out = "series,answer,fraction\n";
  auto emit = [&](const std::string& name, const std::vector<double>& d) {
    for (std::size_t a = 0; a < d.size(); ++a) {
      out += name + "," + std::to_string(a) + "," + format_csv_number(d[a]) + "\n";
    }
  };
  for (const auto& [name, d] : references) emit(name, d);
  for (const auto& r : rows) {
    emit(std::string(to_string(r.rule)) + "@" + std::to_string(r.seed),
         r.report.answer_distribution);
  }
  return out;
}

}  // namespace pipeline
}  // namespace pwvqa
