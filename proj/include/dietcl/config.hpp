// Copyright 2026 The Authors.
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

// Sectioned key=value run configs ("protocol.e = 100"). Unknown keys are
// hard errors; every default is echoed back by serialize_config so output
// records always carry the full effective configuration.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dietcl/errors.hpp"
#include "dietcl/protocol.hpp"

namespace dietcl {

// Grid sweep axes: learners x methods x fractions x seeds. A fraction entry
// of "full" runs the no-selection baseline.
struct GridSpec {
  std::vector<LearnerKind> learners;
  std::vector<SelectMethod> methods;
  std::vector<std::string> fractions;  // decimal strings or "full"
  std::vector<std::uint64_t> seeds;
  int workers = 0;  // 0 = hardware concurrency

  void validate() const {
    if (learners.empty() || methods.empty() || fractions.empty() ||
        seeds.empty()) {
      throw InputError("grid: learners, methods, fractions and seeds must all "
                       "be non-empty");
    }
    for (const auto& f : fractions) {
      if (f == "full") continue;
      const double v = std::stod(f);
      if (v <= 0.0 || v >= 1.0) {
        throw InputError("grid.fractions entries must be in (0,1) or 'full'");
      }
    }
    if (workers < 0) throw InputError("grid.workers must be >= 0");
  }
};

struct ParsedConfig {
  RunConfig run;
  std::optional<GridSpec> grid;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class KeyReader {
 public:
  explicit KeyReader(std::map<std::string, std::string> kv)
      : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::optional<std::string> take(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    consumed_.insert(key);
    return it->second;
  }

  template <typename F>
  void apply(const std::string& key, F&& setter) {
    if (auto v = take(key)) {
      try {
        setter(*v);
      } catch (const Error&) {
        throw;
      } catch (const std::exception& e) {
        throw ParseError("config key '" + key + "': bad value '" + *v + "' (" +
                         e.what() + ")");
      }
    }
  }

  void fail_on_unknown() const {
    for (const auto& [key, value] : kv_) {
      if (!consumed_.count(key)) {
        throw ParseError("unknown config key '" + key + "'");
      }
    }
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
};

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ParseError("config key '" + key + "': expected true/false, got '" + v +
                   "'");
}

inline std::string bool_str(bool v) { return v ? "true" : "false"; }

// shortest representation that round-trips exactly
inline std::string double_str(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline ParsedConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ParseError("config line " + std::to_string(line_no) +
                       ": empty key");
    }
    if (kv.count(key)) {
      throw ParseError("config line " + std::to_string(line_no) +
                       ": duplicate key '" + key + "'");
    }
    kv[key] = value;
  }

  detail::KeyReader r(std::move(kv));
  ParsedConfig out;
  RunConfig& cfg = out.run;

  r.apply("protocol.e", [&](const std::string& v) { cfg.epochs = std::stoi(v); });
  r.apply("protocol.warmup_fraction",
          [&](const std::string& v) { cfg.warmup_fraction = std::stod(v); });
  r.apply("protocol.seed",
          [&](const std::string& v) { cfg.seed = std::stoull(v); });
  r.apply("protocol.weight_decay_task1", [&](const std::string& v) {
    cfg.weight_decay_task1 = std::stod(v);
  });
  r.apply("protocol.weight_decay_later", [&](const std::string& v) {
    cfg.weight_decay_later = std::stod(v);
  });
  r.apply("sgd.learning_rate",
          [&](const std::string& v) { cfg.sgd.learning_rate = std::stod(v); });
  r.apply("sgd.momentum",
          [&](const std::string& v) { cfg.sgd.momentum = std::stod(v); });
  r.apply("sgd.batch_size",
          [&](const std::string& v) { cfg.sgd.batch_size = std::stoi(v); });
  r.apply("sgd.schedule",
          [&](const std::string& v) { cfg.lr_schedule = v; });
  r.apply("model.hidden_dims", [&](const std::string& v) {
    cfg.hidden_dims.clear();
    for (const auto& item : detail::split_list(v)) {
      cfg.hidden_dims.push_back(std::stoi(item));
    }
  });

  // learner.kind drives the per-kind defaults; read it before overrides
  if (auto v = r.take("learner.kind")) {
    cfg.learner = learner_kind_from_string(*v);
  }
  cfg.learner_params = default_params(cfg.learner);
  r.apply("learner.distill_temperature", [&](const std::string& v) {
    cfg.learner_params.distill_temperature = std::stod(v);
  });
  r.apply("learner.lwf_lambda", [&](const std::string& v) {
    cfg.learner_params.lwf_lambda = std::stod(v);
  });
  r.apply("learner.der_aux_weight", [&](const std::string& v) {
    cfg.learner_params.der_aux_weight = std::stod(v);
  });
  r.apply("learner.icarl_kd_weight", [&](const std::string& v) {
    cfg.learner_params.icarl_kd_weight = std::stod(v);
  });
  r.apply("memory.per_class", [&](const std::string& v) {
    cfg.memory_per_class = std::stoi(v);
  });

  r.apply("coreset.method", [&](const std::string& v) {
    if (v == "full") {
      cfg.coreset.full_data = true;
    } else {
      cfg.coreset.method = select_method_from_string(v);
    }
  });
  r.apply("coreset.fraction", [&](const std::string& v) {
    cfg.coreset.fraction = std::stod(v);
    if (cfg.coreset.fraction <= 0.0 || cfg.coreset.fraction >= 1.0) {
      throw InputError("coreset.fraction must be in (0,1), got '" + v + "'");
    }
  });
  r.apply("coreset.class_balanced", [&](const std::string& v) {
    cfg.coreset.class_balanced = detail::parse_bool("coreset.class_balanced", v);
  });
  r.apply("coreset.graphcut_lambda", [&](const std::string& v) {
    cfg.coreset.graphcut_lambda = std::stod(v);
  });
  r.apply("coreset.invert", [&](const std::string& v) {
    cfg.coreset.invert = detail::parse_bool("coreset.invert", v);
  });
  r.apply("coreset.full", [&](const std::string& v) {
    cfg.coreset.full_data = detail::parse_bool("coreset.full", v);
  });

  r.apply("stream.kind", [&](const std::string& v) {
    if (v == "gaussian") {
      cfg.stream.kind = StreamSpec::Kind::Gaussian;
    } else if (v == "csv") {
      cfg.stream.kind = StreamSpec::Kind::Csv;
    } else {
      throw ParseError("stream.kind: expected gaussian or csv, got '" + v +
                       "'");
    }
  });
  r.apply("stream.tasks", [&](const std::string& v) {
    cfg.stream.gaussian.num_tasks = std::stoi(v);
  });
  r.apply("stream.classes_per_task", [&](const std::string& v) {
    cfg.stream.gaussian.classes_per_task = std::stoi(v);
    cfg.stream.classes_per_task = std::stoi(v);
  });
  r.apply("stream.train_per_class", [&](const std::string& v) {
    cfg.stream.gaussian.train_per_class = std::stoi(v);
  });
  r.apply("stream.test_per_class", [&](const std::string& v) {
    cfg.stream.gaussian.test_per_class = std::stoi(v);
  });
  r.apply("stream.dim", [&](const std::string& v) {
    cfg.stream.gaussian.dim = std::stoi(v);
  });
  r.apply("stream.class_separation", [&](const std::string& v) {
    cfg.stream.gaussian.class_separation = std::stod(v);
  });
  r.apply("stream.noise_sigma", [&](const std::string& v) {
    cfg.stream.gaussian.noise_sigma = std::stod(v);
  });
  r.apply("stream.seed", [&](const std::string& v) {
    cfg.stream.gaussian.seed = std::stoull(v);
    cfg.stream.class_order_seed = std::stoull(v);
  });
  r.apply("stream.train_csv",
          [&](const std::string& v) { cfg.stream.train_csv = v; });
  r.apply("stream.test_csv",
          [&](const std::string& v) { cfg.stream.test_csv = v; });
  r.apply("stream.scale_features", [&](const std::string& v) {
    cfg.stream.scale_features = detail::parse_bool("stream.scale_features", v);
  });
  r.apply("output.dir", [&](const std::string& v) { cfg.out_dir = v; });

  const bool has_grid = r.has("grid.learners") || r.has("grid.methods") ||
                        r.has("grid.fractions") || r.has("grid.seeds") ||
                        r.has("grid.workers");
  if (has_grid) {
    GridSpec grid;
    r.apply("grid.learners", [&](const std::string& v) {
      for (const auto& item : detail::split_list(v)) {
        grid.learners.push_back(learner_kind_from_string(item));
      }
    });
    r.apply("grid.methods", [&](const std::string& v) {
      for (const auto& item : detail::split_list(v)) {
        grid.methods.push_back(select_method_from_string(item));
      }
    });
    r.apply("grid.fractions", [&](const std::string& v) {
      grid.fractions = detail::split_list(v);
    });
    r.apply("grid.seeds", [&](const std::string& v) {
      for (const auto& item : detail::split_list(v)) {
        grid.seeds.push_back(std::stoull(item));
      }
    });
    r.apply("grid.workers",
            [&](const std::string& v) { grid.workers = std::stoi(v); });
    grid.validate();
    out.grid = std::move(grid);
  }

  r.fail_on_unknown();
  cfg.validate();
  return out;
}

inline ParsedConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config_text(buffer.str());
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// Every effective key, defaults included, in sorted order. Re-parsing the
// output reproduces the config exactly.
inline std::map<std::string, std::string> config_key_values(
    const RunConfig& cfg) {
  using detail::bool_str;
  using detail::double_str;
  std::map<std::string, std::string> kv;
  kv["protocol.e"] = std::to_string(cfg.epochs);
  kv["protocol.warmup_fraction"] = double_str(cfg.warmup_fraction);
  kv["protocol.seed"] = std::to_string(cfg.seed);
  kv["protocol.weight_decay_task1"] = double_str(cfg.weight_decay_task1);
  kv["protocol.weight_decay_later"] = double_str(cfg.weight_decay_later);
  kv["sgd.learning_rate"] = double_str(cfg.sgd.learning_rate);
  kv["sgd.momentum"] = double_str(cfg.sgd.momentum);
  kv["sgd.batch_size"] = std::to_string(cfg.sgd.batch_size);
  kv["sgd.schedule"] = cfg.lr_schedule;
  {
    std::string dims;
    for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) {
      if (i) dims += ",";
      dims += std::to_string(cfg.hidden_dims[i]);
    }
    kv["model.hidden_dims"] = dims;
  }
  kv["learner.kind"] = to_string(cfg.learner);
  kv["learner.distill_temperature"] =
      double_str(cfg.learner_params.distill_temperature);
  kv["learner.lwf_lambda"] = double_str(cfg.learner_params.lwf_lambda);
  kv["learner.der_aux_weight"] = double_str(cfg.learner_params.der_aux_weight);
  kv["learner.icarl_kd_weight"] =
      double_str(cfg.learner_params.icarl_kd_weight);
  kv["memory.per_class"] = std::to_string(cfg.memory_per_class);
  kv["coreset.method"] = to_string(cfg.coreset.method);
  kv["coreset.fraction"] = double_str(cfg.coreset.fraction);
  kv["coreset.class_balanced"] = bool_str(cfg.coreset.class_balanced);
  kv["coreset.graphcut_lambda"] = double_str(cfg.coreset.graphcut_lambda);
  kv["coreset.invert"] = bool_str(cfg.coreset.invert);
  kv["coreset.full"] = bool_str(cfg.coreset.full_data);
  kv["stream.kind"] =
      cfg.stream.kind == StreamSpec::Kind::Gaussian ? "gaussian" : "csv";
  kv["stream.tasks"] = std::to_string(cfg.stream.gaussian.num_tasks);
  kv["stream.classes_per_task"] =
      std::to_string(cfg.stream.gaussian.classes_per_task);
  kv["stream.train_per_class"] =
      std::to_string(cfg.stream.gaussian.train_per_class);
  kv["stream.test_per_class"] =
      std::to_string(cfg.stream.gaussian.test_per_class);
  kv["stream.dim"] = std::to_string(cfg.stream.gaussian.dim);
  kv["stream.class_separation"] =
      double_str(cfg.stream.gaussian.class_separation);
  kv["stream.noise_sigma"] = double_str(cfg.stream.gaussian.noise_sigma);
  kv["stream.seed"] = std::to_string(cfg.stream.gaussian.seed);
  if (!cfg.stream.train_csv.empty()) {
    kv["stream.train_csv"] = cfg.stream.train_csv;
  }
  if (!cfg.stream.test_csv.empty()) {
    kv["stream.test_csv"] = cfg.stream.test_csv;
  }
  kv["stream.scale_features"] = bool_str(cfg.stream.scale_features);
  kv["output.dir"] = cfg.out_dir;
  return kv;
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, value] : config_key_values(cfg)) {
    out += key + " = " + value + "\n";
  }
  return out;
}

// Content hash of the effective config (seed included): stable run ids.
inline std::string run_id_for(const RunConfig& cfg) {
  const std::string text = serialize_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace dietcl
