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

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "pwvqa/causal.hpp"
#include "pwvqa/error.hpp"
#include "pwvqa/fusion.hpp"
#include "pwvqa/interchange.hpp"
#include "pwvqa/model.hpp"

namespace pwvqa {

// A trained model: encoder weights, the counterfactual constant and the
// fusion it was trained with.
struct Checkpoint {
  EncoderParams params;
  CounterfactualConstant c;
  FusionConfig fusion;
  std::uint64_t seed = 0;
};

namespace io {

inline constexpr const char* kCheckpointFormat = "pwvqa-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// JSON document; parameters flattened layer by layer (weight row-major, then
// bias) in the order question, vision, joint.
inline std::string serialize_checkpoint(const Checkpoint& ck) {
  const auto& p = ck.params;
  std::string out = "{\"format\":\"";
  out += kCheckpointFormat;
  out += "\",\"version\":" + std::to_string(kCheckpointVersion);
  out += ",\"vocab\":" + std::to_string(p.vocab_size);
  out += ",\"q_dim\":" + std::to_string(p.q_dim);
  out += ",\"v_dim\":" + std::to_string(p.v_dim);
  out += ",\"hidden\":" + std::to_string(p.hidden);
  out += ",\"layers\":[";
  bool first = true;
  auto add_layers = [&](const char* name, const Encoder& e) {
    for (std::size_t l = 0; l < e.layers.size(); ++l) {
      if (!first) out += ',';
      first = false;
      out += "{\"name\":\"" + std::string(name) + "." + std::to_string(l) +
             "\",\"in\":" + std::to_string(e.layers[l].in) +
             ",\"out\":" + std::to_string(e.layers[l].out) + "}";
    }
  };
  add_layers("question", p.question);
  add_layers("vision", p.vision);
  add_layers("joint", p.joint);
  out += "],\"params\":";
  append_array(out, p.flatten());
  out += ",\"c\":" + format_number(ck.c.value());
  out += ",\"fusion\":{\"strategy\":\"" + std::string(to_string(ck.fusion.strategy)) +
         "\",\"alpha\":" + format_number(ck.fusion.alpha) +
         ",\"epsilon\":" + format_number(ck.fusion.epsilon) + ",\"cf_mode\":\"" +
         std::string(to_string(ck.fusion.cf_mode)) + "\"}";
  out += ",\"seed\":" + std::to_string(ck.seed) + "}\n";
  return out;
}

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
  detail::write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), 0);
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw FormatError("not a pwvqa checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version");
    }
    Checkpoint ck;
    ck.params = EncoderParams::zeros(j.at("vocab").get<std::size_t>(),
                                     j.at("q_dim").get<std::size_t>(),
                                     j.at("v_dim").get<std::size_t>(),
                                     j.at("hidden").get<std::size_t>());
    ck.params.unflatten(j.at("params").get<std::vector<double>>());
    ck.c = CounterfactualConstant(j.at("c").get<double>());
    const auto& f = j.at("fusion");
    ck.fusion.strategy = parse_strategy(f.at("strategy").get<std::string>());
    ck.fusion.alpha = f.at("alpha").get<double>();
    ck.fusion.epsilon = f.at("epsilon").get<double>();
    ck.fusion.cf_mode = parse_cf_mode(f.at("cf_mode").get<std::string>());
    ck.fusion.validate();
    ck.seed = j.at("seed").get<std::uint64_t>();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint field: ") + e.what(), 0);
  } catch (const DimensionError& e) {
    throw FormatError(e.what());
  }
}

}  // namespace io
}  // namespace pwvqa
