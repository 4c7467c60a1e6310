// Copyright 2026 The fsqz Authors.
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

// Experiment configuration files: flat `key = value` lines (a TOML subset).
// Values are integers, reals, true/false, "strings" or [a, b] integer lists.
// `[data]` section headers prefix the keys that follow, so `[data]` +
// `classes = 10` and `data.classes = 10` are equivalent. `#` starts a comment.

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fsqz/error.hpp"
#include "fsqz/flsim.hpp"

namespace fsqz {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Strips a trailing comment that is not inside a string literal.
inline std::string strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::string parse_string(const std::string& key, const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  // Bare words are accepted for enum-like values.
  if (!v.empty() && v.find_first_of(" \t\"") == std::string::npos) return v;
  throw ConfigError(key + ": expected a string, got '" + v + "'");
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::string body = v;
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::vector<std::size_t> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(parse_uint(key, item)));
  }
  return out;
}

inline std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  std::string s = os.str();
  if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos) s += ".0";
  return s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> s;
    auto uint_field = [](std::size_t ExperimentConfig::*f) {
      return [f](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*f = static_cast<std::size_t>(parse_uint(k, v)); };
    };
    auto real_field = [](double ExperimentConfig::*f) {
      return [f](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*f = parse_real(k, v); };
    };
    auto bool_field = [](bool ExperimentConfig::*f) {
      return [f](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*f = parse_bool(k, v); };
    };
    s["num_clients"] = uint_field(&ExperimentConfig::num_clients);
    s["rounds"] = uint_field(&ExperimentConfig::rounds);
    s["local_epochs"] = uint_field(&ExperimentConfig::local_epochs);
    s["batch_size"] = uint_field(&ExperimentConfig::batch_size);
    s["max_frame"] = uint_field(&ExperimentConfig::max_frame);
    s["participation"] = real_field(&ExperimentConfig::participation);
    s["prune_rate"] = real_field(&ExperimentConfig::prune_rate);
    s["downlink_prune_rate"] = real_field(&ExperimentConfig::downlink_prune_rate);
    s["alpha"] = real_field(&ExperimentConfig::alpha);
    s["lr"] = real_field(&ExperimentConfig::lr);
    s["momentum"] = real_field(&ExperimentConfig::momentum);
    s["combined"] = bool_field(&ExperimentConfig::combined);
    s["prune_biases"] = bool_field(&ExperimentConfig::prune_biases);
    s["deflate"] = bool_field(&ExperimentConfig::deflate);
    s["quant_bits"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.quant_bits = static_cast<int>(parse_uint(k, v));
    };
    s["seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = parse_uint(k, v); };
    s["hidden"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.hidden = parse_list(k, v); };
    s["payload"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      const std::string p = parse_string(k, v);
      if (p == "dense") c.payload = PayloadKind::dense_f32;
      else if (p == "sparse") c.payload = PayloadKind::sparse_f32;
      else throw ConfigError(k + ": expected dense or sparse");
    };
    s["transport"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      const std::string p = parse_string(k, v);
      if (p == "inproc") c.transport = TransportKind::inproc;
      else if (p == "tcp") c.transport = TransportKind::tcp;
      else throw ConfigError(k + ": expected inproc or tcp");
    };
    s["data.kind"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      const std::string p = parse_string(k, v);
      if (p == "blobs") c.data.kind = DatasetKind::blobs;
      else if (p == "idx") c.data.kind = DatasetKind::idx;
      else throw ConfigError(k + ": expected blobs or idx");
    };
    s["data.classes"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.data.classes = static_cast<int>(parse_uint(k, v));
    };
    s["data.dim"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.dim = parse_uint(k, v); };
    s["data.train_per_class"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.data.train_per_class = parse_uint(k, v);
    };
    s["data.test_per_class"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.data.test_per_class = parse_uint(k, v);
    };
    s["data.spread"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.spread = parse_real(k, v); };
    s["data.seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.seed = parse_uint(k, v); };
    s["data.train_images"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.data.train_images = parse_string(k, v);
    };
    s["data.train_labels"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.data.train_labels = parse_string(k, v);
    };
    s["data.test_images"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.data.test_images = parse_string(k, v);
    };
    s["data.test_labels"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.data.test_labels = parse_string(k, v);
    };
    return s;
  }();
  return setters;
}

}  // namespace detail

inline const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> keys{"num_clients", "rounds"};
  return keys;
}

/// Sets one field from its textual value; throws ConfigError naming the key.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& setters = detail::config_setters();
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown key '" + key + "'");
  it->second(cfg, key, detail::trim(value));
}

/// `key=value` override as given on the command line.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_config_value(cfg, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline ExperimentConfig parse_config(std::string_view text, const std::string& origin = "<config>") {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  for (int line_no = 1; std::getline(in, raw); ++line_no) {
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    auto where = [&] { return origin + ":" + std::to_string(line_no) + ": "; };
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    if (!seen.insert(key).second) throw ConfigError(where() + "duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where() + e.what());
    }
  }
  for (const auto& key : required_config_keys())
    if (!seen.count(key)) throw ConfigError(origin + ": missing required field '" + key + "'");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

/// Inverse of parse_config: every field, one per line.
inline std::string serialize_config(const ExperimentConfig& c) {
  using detail::format_real;
  auto quote = [](const std::string& s) { return "\"" + s + "\""; };
  std::ostringstream os;
  os << "num_clients = " << c.num_clients << "\n"
     << "participation = " << format_real(c.participation) << "\n"
     << "rounds = " << c.rounds << "\n"
     << "local_epochs = " << c.local_epochs << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "prune_rate = " << format_real(c.prune_rate) << "\n"
     << "downlink_prune_rate = " << format_real(c.downlink_prune_rate) << "\n"
     << "quant_bits = " << c.quant_bits << "\n"
     << "combined = " << (c.combined ? "true" : "false") << "\n"
     << "prune_biases = " << (c.prune_biases ? "true" : "false") << "\n"
     << "alpha = " << format_real(c.alpha) << "\n"
     << "lr = " << format_real(c.lr) << "\n"
     << "momentum = " << format_real(c.momentum) << "\n"
     << "seed = " << c.seed << "\n"
     << "hidden = [";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? ", " : "") << c.hidden[i];
  os << "]\n"
     << "payload = " << quote(c.payload == PayloadKind::sparse_f32 ? "sparse" : "dense") << "\n"
     << "deflate = " << (c.deflate ? "true" : "false") << "\n"
     << "transport = " << quote(c.transport == TransportKind::tcp ? "tcp" : "inproc") << "\n"
     << "max_frame = " << c.max_frame << "\n"
     << "data.kind = " << quote(c.data.kind == DatasetKind::idx ? "idx" : "blobs") << "\n"
     << "data.classes = " << c.data.classes << "\n"
     << "data.dim = " << c.data.dim << "\n"
     << "data.train_per_class = " << c.data.train_per_class << "\n"
     << "data.test_per_class = " << c.data.test_per_class << "\n"
     << "data.spread = " << format_real(c.data.spread) << "\n"
     << "data.seed = " << c.data.seed << "\n"
     << "data.train_images = " << quote(c.data.train_images) << "\n"
     << "data.train_labels = " << quote(c.data.train_labels) << "\n"
     << "data.test_images = " << quote(c.data.test_images) << "\n"
     << "data.test_labels = " << quote(c.data.test_labels) << "\n";
  return os.str();
}

}  // namespace fsqz
