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
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pwvqa/checkpoint.hpp"
#include "pwvqa/datagen.hpp"
#include "pwvqa/interchange.hpp"
#include "pwvqa/model.hpp"
#include "pwvqa/pipeline.hpp"

namespace pwvqa::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,      // bad flags or missing/unreadable input
  kNumeric = 3,    // non-finite loss during training
  kMismatch = 4,   // vocabulary or shape mismatch between inputs
};

// Thrown for usage problems detected after flag parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

namespace fs = std::filesystem;

struct FusionFlags {
  std::string strategy = "ea";
  double alpha = 1.5;
  double epsilon = 5e-11;
  std::string cf_mode = "vk";

  void attach(CLI::App* app) {
    app->add_option("--strategy", strategy, "Fusion: ea, sum, hm, rubi")
        ->check(CLI::IsMember({"ea", "sum", "hm", "rubi"}));
    app->add_option("--alpha", alpha, "EA exponent (>= 1)");
    app->add_option("--epsilon", epsilon, "Constant added inside the EA logarithm");
    app->add_option("--cf-mode", cf_mode, "Counterfactual point: vk or k-only")
        ->check(CLI::IsMember({"vk", "k-only"}));
  }

  FusionConfig config() const {
    FusionConfig f;
    f.strategy = parse_strategy(strategy);
    f.alpha = alpha;
    f.epsilon = epsilon;
    f.cf_mode = parse_cf_mode(cf_mode);
    f.validate();
    return f;
  }
};

struct TrainFlags {
  std::size_t epochs = 22;
  std::size_t batch = 256;
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t hidden = 64;

  void attach(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--batch", batch, "Batch size");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--momentum", momentum, "SGD momentum");
    app->add_option("--hidden", hidden, "Encoder hidden width (0 = linear)");
  }

  TrainConfig config(const FusionConfig& fusion, std::uint64_t seed) const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch;
    t.learning_rate = lr;
    t.momentum = momentum;
    t.hidden = hidden;
    t.seed = seed;
    t.fusion = fusion;
    t.validate();
    return t;
  }
};

// --seed if given, else $PWVQA_SEED, else 0.
inline std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value) {
  if (opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("PWVQA_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("PWVQA_SEED is not an unsigned integer");
  }
  return 0;
}

inline std::vector<InferenceRule> parse_rules(const std::vector<std::string>& names) {
  std::vector<InferenceRule> rules;
  for (const auto& n : names) {
    const InferenceRule r = parse_inference_rule(n);
    if (std::find(rules.begin(), rules.end(), r) == rules.end()) rules.push_back(r);
  }
  if (rules.empty()) throw UsageError("no inference rule requested");
  return rules;
}

inline std::string require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError("missing input file '" + p.string() + "'");
  return p.string();
}

inline void write_text(const fs::path& p, const std::string& text) {
  io::detail::write_file(p.string(), text);
}

inline std::string prior_table_text(const std::string& title, const DatasetSplit& split) {
  std::string out = title + " P(answer | qtype):\n";
  for (std::size_t t = 0; t < split.num_qtypes(); ++t) {
    out += "  " + split.qtype_names[t] + ":";
    for (double p : split.prior_table[t]) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), " %.3f", p);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  namespace fs = std::filesystem;
  using namespace detail;

  CLI::App app{"Counterfactual debiasing of multimodal classifiers", "pwvqa"};
  app.require_subcommand(1);

  // gen-data
  GenConfig gen;
  std::string gen_out, shift = "invert";
  std::uint64_t gen_seed = 0;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic train/test benchmark");
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();
  auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "Random seed");
  gen_cmd->add_option("--vocab", gen.vocab_size, "Answer vocabulary size");
  gen_cmd->add_option("--qtypes", gen.num_qtypes, "Number of question types");
  gen_cmd->add_option("--q-dim", gen.q_dim, "Question feature dimension");
  gen_cmd->add_option("--v-dim", gen.v_dim, "Image feature dimension");
  gen_cmd->add_option("--confounders", gen.num_confounder_states, "Confounder states");
  gen_cmd->add_option("--train-size", gen.train_size, "Training samples");
  gen_cmd->add_option("--test-size", gen.test_size, "Test samples");
  gen_cmd->add_option("--beta", gen.bias_strength, "Train prior mass on the preferred answer");
  gen_cmd->add_option("--noise", gen.noise_sigma, "Feature noise standard deviation");
  gen_cmd->add_option("--shift", shift, "Test prior: invert or uniform")
      ->check(CLI::IsMember({"invert", "uniform"}));

  // train
  std::string train_data, train_out;
  std::uint64_t train_seed = 0;
  FusionFlags train_fusion;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train encoders and the constant c");
  train_cmd->add_option("--data", train_data, "Dataset directory (train.jsonl)")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "Random seed");
  train_fusion.attach(train_cmd);
  train_flags.attach(train_cmd);

  // eval
  std::string eval_data, eval_ckpt, eval_out, eval_cf_mode;
  std::vector<std::string> eval_rules{"tie", "te", "fused", "q-only"};
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval_cmd->add_option("--data", eval_data, "Dataset directory (test.jsonl)")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--out", eval_out, "Output directory");
  eval_cmd->add_option("--rule", eval_rules, "Inference rules: tie,te,fused,q-only")
      ->delimiter(',');
  eval_cmd->add_option("--cf-mode", eval_cf_mode, "Override the checkpoint's cf mode")
      ->check(CLI::IsMember({"vk", "k-only"}));

  // sweep
  std::string sweep_data, sweep_out, grid_alpha;
  std::vector<double> grid_epsilon;
  std::vector<std::uint64_t> sweep_seeds;
  std::vector<std::string> sweep_rules{"tie"};
  std::uint64_t sweep_seed = 0;
  std::size_t workers = 1;
  FusionFlags sweep_fusion;
  TrainFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over an alpha/epsilon grid");
  sweep_cmd->add_option("--data", sweep_data, "Dataset directory")->required();
  sweep_cmd->add_option("--out", sweep_out, "Output directory");
  sweep_cmd->add_option("--grid-alpha", grid_alpha, "Alpha grid start:stop:step");
  sweep_cmd->add_option("--grid-epsilon", grid_epsilon, "Comma-separated epsilon values")
      ->delimiter(',');
  auto* sweep_seed_opt = sweep_cmd->add_option("--seed", sweep_seed, "Seed (single cell)");
  sweep_cmd->add_option("--seeds", sweep_seeds, "Comma-separated seeds")->delimiter(',');
  sweep_cmd->add_option("--rule", sweep_rules, "Inference rules")->delimiter(',');
  sweep_cmd->add_option("--workers", workers, "Parallel workers")->check(CLI::PositiveNumber);
  sweep_fusion.attach(sweep_cmd);
  sweep_flags.attach(sweep_cmd);

  // fuse
  std::string fuse_logits, fuse_out;
  double fuse_c = 0.0;
  std::uint64_t fuse_seed = 0;
  std::vector<std::string> fuse_rules{"tie", "te", "fused"};
  FusionFlags fuse_fusion;
  auto* fuse_cmd = app.add_subcommand("fuse", "Score exported logits with TIE/TE/fused rules");
  fuse_cmd->add_option("--logits", fuse_logits, "Logits interchange file")->required();
  fuse_cmd->add_option("--c", fuse_c, "Counterfactual constant");
  fuse_cmd->add_option("--out", fuse_out, "Output directory");
  auto* fuse_seed_opt = fuse_cmd->add_option("--seed", fuse_seed, "Recorded seed");
  fuse_cmd->add_option("--rule", fuse_rules, "Inference rules")->delimiter(',');
  fuse_fusion.attach(fuse_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (gen_cmd->parsed()) {
      gen.seed = resolve_seed(gen_seed_opt, gen_seed);
      gen.shift_mode = parse_shift_mode(shift);
      const auto data = datagen::generate(gen);
      fs::create_directories(gen_out);
      io::write_dataset(data.train, (fs::path(gen_out) / "train.jsonl").string());
      io::write_dataset(data.test, (fs::path(gen_out) / "test.jsonl").string());
      out << prior_table_text("train", data.train) << prior_table_text("test", data.test);
      return kOk;
    }

    if (train_cmd->parsed()) {
      const auto cfg = train_flags.config(train_fusion.config(),
                                          resolve_seed(train_seed_opt, train_seed));
      const auto split = io::read_dataset(require_file(fs::path(train_data) / "train.jsonl"));
      std::string trace = "epoch,loss_sum,loss_mean,c\n";
      auto result = model::train(split, cfg, [&](const model::EpochStats& s) {
        trace += std::to_string(s.epoch) + "," + pipeline::format_csv_number(s.loss_sum) + "," +
                 pipeline::format_csv_number(s.loss_mean) + "," +
                 pipeline::format_csv_number(s.c) + "\n";
      });
      fs::create_directories(train_out);
      io::write_checkpoint({std::move(result.params), result.c, cfg.fusion, cfg.seed},
                           (fs::path(train_out) / "checkpoint.json").string());
      write_text(fs::path(train_out) / "trace.csv", trace);
      out << trace;
      return kOk;
    }

    if (eval_cmd->parsed()) {
      auto ck = io::read_checkpoint(require_file(eval_ckpt));
      if (!eval_cf_mode.empty()) ck.fusion.cf_mode = parse_cf_mode(eval_cf_mode);
      const auto test = io::read_dataset(require_file(fs::path(eval_data) / "test.jsonl"));
      const auto rows = pipeline::evaluate_checkpoint(ck, test, parse_rules(eval_rules));
      std::vector<std::pair<std::string, std::vector<double>>> refs;
      const fs::path train_path = fs::path(eval_data) / "train.jsonl";
      if (fs::is_regular_file(train_path)) {
        refs.emplace_back("train", io::read_dataset(train_path.string()).answer_distribution());
      }
      refs.emplace_back("test", test.answer_distribution());
      const auto csv = pipeline::results_csv(rows, test.num_qtypes());
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        write_text(fs::path(eval_out) / "results.csv", csv);
        write_text(fs::path(eval_out) / "results.json",
                   pipeline::results_json(rows, test.qtype_names));
        write_text(fs::path(eval_out) / "histogram.csv", pipeline::histogram_csv(refs, rows));
      }
      out << csv;
      return kOk;
    }

    if (sweep_cmd->parsed()) {
      pipeline::SweepSpec spec;
      const std::uint64_t seed = resolve_seed(sweep_seed_opt, sweep_seed);
      spec.base = sweep_flags.config(sweep_fusion.config(), seed);
      if (grid_alpha.empty() && grid_epsilon.empty()) {
        throw UsageError("sweep needs --grid-alpha and/or --grid-epsilon");
      }
      if (!grid_alpha.empty()) {
        std::vector<double> parts;
        std::stringstream ss(grid_alpha);
        std::string tok;
        while (std::getline(ss, tok, ':')) {
          try {
            parts.push_back(std::stod(tok));
          } catch (const std::exception&) {
            throw UsageError("bad --grid-alpha value '" + tok + "'");
          }
        }
        if (parts.size() != 3) throw UsageError("--grid-alpha expects start:stop:step");
        try {
          spec.alphas = pipeline::linear_grid(parts[0], parts[1], parts[2]);
        } catch (const ConfigError& e) {
          throw UsageError(e.what());
        }
      } else {
        spec.alphas = {spec.base.fusion.alpha};
      }
      spec.epsilons = grid_epsilon.empty() ? std::vector<double>{spec.base.fusion.epsilon}
                                           : grid_epsilon;
      spec.seeds = sweep_seeds.empty() ? std::vector<std::uint64_t>{seed} : sweep_seeds;
      spec.rules = parse_rules(sweep_rules);
      spec.workers = workers;

      const auto train = io::read_dataset(require_file(fs::path(sweep_data) / "train.jsonl"));
      const auto test = io::read_dataset(require_file(fs::path(sweep_data) / "test.jsonl"));
      const auto rows = pipeline::run_sweep(train, test, spec);
      const auto csv = pipeline::results_csv(rows, test.num_qtypes());
      if (!sweep_out.empty()) {
        fs::create_directories(sweep_out);
        write_text(fs::path(sweep_out) / "sweep.csv", csv);
        write_text(fs::path(sweep_out) / "sweep.json",
                   pipeline::results_json(rows, test.qtype_names));
      }
      out << csv;
      return kOk;
    }

    if (fuse_cmd->parsed()) {
      const auto file = io::import_logits(require_file(fuse_logits));
      const auto rows = pipeline::evaluate_logits(
          file, CounterfactualConstant(fuse_c), fuse_fusion.config(),
          resolve_seed(fuse_seed_opt, fuse_seed), parse_rules(fuse_rules));
      const auto csv = pipeline::results_csv(rows, file.qtype_names.size());
      if (!fuse_out.empty()) {
        fs::create_directories(fuse_out);
        write_text(fs::path(fuse_out) / "results.csv", csv);
        write_text(fs::path(fuse_out) / "results.json",
                   pipeline::results_json(rows, file.qtype_names));
      }
      out << csv;
      return kOk;
    }
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kMismatch;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kMismatch;
  } catch (const std::exception& e) {
    // Usage, configuration, parse and I/O problems.
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace pwvqa::cli
