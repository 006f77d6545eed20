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
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pwvqa/datagen.hpp"
#include "pwvqa/error.hpp"
#include "pwvqa/logits.hpp"

namespace pwvqa {

// One externally produced record: the three branch scores of a question plus
// its ground truth.
struct LogitRecord {
  std::uint64_t id = 0;
  BranchLogits branch;
  std::size_t label = 0;
  std::size_t qtype = 0;
};

struct LogitFile {
  std::size_t vocab_size = 0;
  std::vector<std::string> qtype_names;
  std::vector<LogitRecord> records;
};

namespace io {

// Line-delimited JSON. The first line is a header object; every following
// non-blank line is one record. Numbers are written with 17 significant
// digits so a write/read cycle is exact.

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", x);
  return buf;
}

inline void append_array(std::string& out, std::span<const double> xs) {
  out += '[';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += format_number(xs[i]);
  }
  out += ']';
}

inline std::string quote(std::string_view s) { return nlohmann::json(s).dump(); }

inline std::string qtypes_array(const std::vector<std::string>& names) {
  std::string out = "[";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ',';
    out += quote(names[i]);
  }
  return out + "]";
}

namespace detail {

struct Lines {
  std::vector<std::pair<std::size_t, std::string>> body;  // (1-based line, text)
  std::string header;
};

inline Lines read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
  Lines lines;
  std::string text;
  std::size_t n = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++n;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!have_header) {
      lines.header = text;
      have_header = true;
    } else {
      lines.body.emplace_back(n, text);
    }
  }
  if (!have_header) throw ParseError("missing header line", 1);
  return lines;
}

inline nlohmann::json parse_object(const std::string& text, std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line);
  }
  if (!j.is_object()) throw ParseError("expected a JSON object", line);
  return j;
}

inline std::size_t get_index(const nlohmann::json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) {
    throw ParseError(std::string("field '") + key + "' must be a non-negative integer", line);
  }
  return j[key].get<std::size_t>();
}

inline std::vector<double> get_numbers(const nlohmann::json& j, const char* key,
                                       std::size_t line) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw ParseError(std::string("field '") + key + "' must be an array", line);
  }
  std::vector<double> out;
  out.reserve(j[key].size());
  for (const auto& x : j[key]) {
    if (!x.is_number()) throw ParseError(std::string("non-numeric entry in '") + key + "'", line);
    out.push_back(x.get<double>());
  }
  return out;
}

struct Header {
  std::size_t vocab = 0;
  std::vector<std::string> qtypes;
  nlohmann::json raw;
};

inline Header parse_header(const std::string& text) {
  Header h;
  h.raw = parse_object(text, 1);
  h.vocab = get_index(h.raw, "vocab", 1);
  if (h.vocab == 0) throw FormatError("header vocab must be positive");
  if (!h.raw.contains("qtypes") || !h.raw["qtypes"].is_array()) {
    throw ParseError("header field 'qtypes' must be an array", 1);
  }
  for (const auto& q : h.raw["qtypes"]) {
    if (!q.is_string()) throw ParseError("qtype names must be strings", 1);
    h.qtypes.push_back(q.get<std::string>());
  }
  if (h.qtypes.empty()) throw FormatError("header lists no question types");
  return h;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot write '" + path + "'");
  out << content;
  if (!out) throw std::ios_base::failure("write failed for '" + path + "'");
}

}  // namespace detail

inline std::string serialize_logits(const LogitFile& file) {
  std::string out = "{\"vocab\":" + std::to_string(file.vocab_size) +
                    ",\"qtypes\":" + qtypes_array(file.qtype_names) + "}\n";
  for (const auto& r : file.records) {
    if (!r.branch.complete()) throw ContractViolation("export_logits: incomplete record");
    out += "{\"id\":" + std::to_string(r.id) + ",\"qtype\":" + std::to_string(r.qtype) +
           ",\"label\":" + std::to_string(r.label) + ",\"zq\":";
    append_array(out, r.branch.zq->values());
    out += ",\"zv\":";
    append_array(out, r.branch.zv->values());
    out += ",\"zk\":";
    append_array(out, r.branch.zk->values());
    out += "}\n";
  }
  return out;
}

inline void export_logits(const LogitFile& file, const std::string& path) {
  detail::write_file(path, serialize_logits(file));
}

inline LogitFile import_logits(const std::string& path) {
  const auto lines = detail::read_lines(path);
  const auto header = detail::parse_header(lines.header);
  LogitFile file;
  file.vocab_size = header.vocab;
  file.qtype_names = header.qtypes;
  for (const auto& [line, text] : lines.body) {
    const auto j = detail::parse_object(text, line);
    LogitRecord r;
    r.id = detail::get_index(j, "id", line);
    r.qtype = detail::get_index(j, "qtype", line);
    r.label = detail::get_index(j, "label", line);
    auto zq = detail::get_numbers(j, "zq", line);
    auto zv = detail::get_numbers(j, "zv", line);
    auto zk = detail::get_numbers(j, "zk", line);
    if (zq.size() != header.vocab || zv.size() != header.vocab || zk.size() != header.vocab) {
      throw FormatError("line " + std::to_string(line) + ": logit vectors must have length " +
                        std::to_string(header.vocab));
    }
    if (r.label >= header.vocab) {
      throw FormatError("line " + std::to_string(line) + ": label outside vocabulary");
    }
    if (r.qtype >= header.qtypes.size()) {
      throw FormatError("line " + std::to_string(line) + ": unknown question type");
    }
    try {
      r.branch = {Logits(std::move(zq)), Logits(std::move(zv)), Logits(std::move(zk))};
    } catch (const DomainError& e) {
      throw ParseError(e.what(), line);
    }
    file.records.push_back(std::move(r));
  }
  return file;
}

inline std::string serialize_dataset(const DatasetSplit& split) {
  std::string out = "{\"vocab\":" + std::to_string(split.vocab_size) +
                    ",\"qtypes\":" + qtypes_array(split.qtype_names) +
                    ",\"q_dim\":" + std::to_string(split.q_dim) +
                    ",\"v_dim\":" + std::to_string(split.v_dim) + "}\n";
  for (const auto& s : split.samples) {
    out += "{\"id\":" + std::to_string(s.sample_id) + ",\"qtype\":" + std::to_string(s.qtype) +
           ",\"label\":" + std::to_string(s.label) + ",\"q\":";
    append_array(out, s.q_features);
    out += ",\"v\":";
    append_array(out, s.v_features);
    out += "}\n";
  }
  return out;
}

inline void write_dataset(const DatasetSplit& split, const std::string& path) {
  detail::write_file(path, serialize_dataset(split));
}

inline DatasetSplit read_dataset(const std::string& path) {
  const auto lines = detail::read_lines(path);
  const auto header = detail::parse_header(lines.header);
  DatasetSplit split;
  split.vocab_size = header.vocab;
  split.qtype_names = header.qtypes;
  split.q_dim = detail::get_index(header.raw, "q_dim", 1);
  split.v_dim = detail::get_index(header.raw, "v_dim", 1);
  for (const auto& [line, text] : lines.body) {
    const auto j = detail::parse_object(text, line);
    SyntheticSample s;
    s.sample_id = detail::get_index(j, "id", line);
    s.qtype = detail::get_index(j, "qtype", line);
    s.label = detail::get_index(j, "label", line);
    s.q_features = detail::get_numbers(j, "q", line);
    s.v_features = detail::get_numbers(j, "v", line);
    if (s.q_features.size() != split.q_dim || s.v_features.size() != split.v_dim) {
      throw FormatError("line " + std::to_string(line) + ": feature length mismatch");
    }
    if (s.label >= split.vocab_size || s.qtype >= split.num_qtypes()) {
      throw FormatError("line " + std::to_string(line) + ": label or qtype out of range");
    }
    split.samples.push_back(std::move(s));
  }
  split.refresh_prior();
  return split;
}

}  // namespace io
}  // namespace pwvqa
