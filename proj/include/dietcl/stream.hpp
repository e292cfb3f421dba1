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

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dietcl/errors.hpp"
#include "dietcl/matrix.hpp"
#include "dietcl/rng.hpp"

namespace dietcl {

struct Sample {
  int id = 0;  // stable, globally unique within a loaded/generated dataset
  std::vector<double> features;
  int label = 0;
};

struct Task {
  int index = 0;  // 1-based
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<int> classes;  // sorted global class ids
};

// Ordered tasks with pairwise-disjoint class sets.
struct TaskStream {
  std::vector<Task> tasks;
  int total_classes = 0;
  int feature_dim = 0;
};

inline Matrix pack_features(const std::vector<Sample>& samples,
                            const std::vector<int>& indices) {
  if (indices.empty()) return {};
  Matrix out(static_cast<int>(indices.size()),
             static_cast<int>(samples[indices[0]].features.size()));
  for (int i = 0; i < out.rows; ++i) {
    const auto& f = samples[indices[i]].features;
    std::copy(f.begin(), f.end(), out.row(i));
  }
  return out;
}

inline Matrix pack_features(const std::vector<Sample>& samples) {
  std::vector<int> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return pack_features(samples, all);
}

inline std::vector<int> pack_labels(const std::vector<Sample>& samples,
                                    const std::vector<int>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(samples[i].label);
  return out;
}

inline void validate_stream(const TaskStream& stream) {
  std::set<int> seen;
  for (const auto& task : stream.tasks) {
    if (task.train.empty()) {
      throw ContractError("task " + std::to_string(task.index) +
                          " has an empty training set");
    }
    for (int c : task.classes) {
      if (!seen.insert(c).second) {
        throw ContractError("class " + std::to_string(c) +
                            " appears in more than one task");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian streams
// ---------------------------------------------------------------------------

struct GaussianStreamConfig {
  int num_tasks = 5;
  int classes_per_task = 2;
  int train_per_class = 200;
  int test_per_class = 50;
  int dim = 16;
  double class_separation = 3.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 7;

  void validate() const {
    if (num_tasks < 1 || classes_per_task < 1 || train_per_class < 1 ||
        test_per_class < 1) {
      throw InputError("gaussian stream: all counts must be >= 1");
    }
    if (dim < 2) throw InputError("gaussian stream: dim must be >= 2");
  }
};

// Class means lie uniformly on the radius-class_separation hypersphere;
// samples are mean + N(0, noise_sigma^2 I). Class ids are assigned
// consecutively in task order, so task class sets are disjoint by
// construction. Fully deterministic per seed.
inline TaskStream make_gaussian_stream(const GaussianStreamConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x67617573));  // generator stream
  TaskStream stream;
  stream.feature_dim = cfg.dim;
  stream.total_classes = cfg.num_tasks * cfg.classes_per_task;
  int next_id = 0;
  int next_class = 0;
  for (int t = 1; t <= cfg.num_tasks; ++t) {
    Task task;
    task.index = t;
    for (int c = 0; c < cfg.classes_per_task; ++c) {
      const int cls = next_class++;
      task.classes.push_back(cls);
      std::vector<double> mean(cfg.dim);
      double norm = 0.0;
      for (double& v : mean) {
        v = rng.gaussian();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) norm = 1.0;
      for (double& v : mean) v *= cfg.class_separation / norm;
      auto draw = [&](std::vector<Sample>& dst, int count) {
        for (int i = 0; i < count; ++i) {
          Sample s;
          s.id = next_id++;
          s.label = cls;
          s.features.resize(cfg.dim);
          for (int d = 0; d < cfg.dim; ++d) {
            s.features[d] = mean[d] + cfg.noise_sigma * rng.gaussian();
          }
          dst.push_back(std::move(s));
        }
      };
      draw(task.train, cfg.train_per_class);
      draw(task.test, cfg.test_per_class);
    }
    stream.tasks.push_back(std::move(task));
  }
  validate_stream(stream);
  return stream;
}

// ---------------------------------------------------------------------------
// Splitting an existing labelled dataset
// ---------------------------------------------------------------------------

// Shuffles the class list by seed, partitions it into consecutive groups of
// classes_per_task, and remaps classes to consecutive global ids in task
// order. Train/test membership is preserved from the input.
inline TaskStream split_dataset(const std::vector<Sample>& train,
                                const std::vector<Sample>& test,
                                int classes_per_task,
                                std::uint64_t class_order_seed) {
  if (train.empty()) throw InputError("split_dataset: empty training set");
  std::set<int> class_set;
  for (const auto& s : train) class_set.insert(s.label);
  for (const auto& s : test) class_set.insert(s.label);
  const int num_classes = static_cast<int>(class_set.size());
  if (classes_per_task < 1 || num_classes % classes_per_task != 0) {
    throw InputError("split_dataset: class count " +
                     std::to_string(num_classes) + " not divisible by " +
                     std::to_string(classes_per_task));
  }
  std::vector<int> order(class_set.begin(), class_set.end());
  Rng rng(derive_seed(class_order_seed, 0x73706c69));
  rng.shuffle(order);

  std::map<int, int> remap;  // original label -> global id in task order
  for (std::size_t i = 0; i < order.size(); ++i) {
    remap[order[i]] = static_cast<int>(i);
  }

  const int num_tasks = num_classes / classes_per_task;
  TaskStream stream;
  stream.total_classes = num_classes;
  stream.feature_dim =
      train.empty() ? 0 : static_cast<int>(train[0].features.size());
  stream.tasks.resize(num_tasks);
  for (int t = 0; t < num_tasks; ++t) {
    stream.tasks[t].index = t + 1;
    for (int c = 0; c < classes_per_task; ++c) {
      stream.tasks[t].classes.push_back(t * classes_per_task + c);
    }
  }
  auto place = [&](const std::vector<Sample>& src, bool is_train) {
    for (const auto& s : src) {
      Sample copy = s;
      copy.label = remap.at(s.label);
      Task& task = stream.tasks[copy.label / classes_per_task];
      (is_train ? task.train : task.test).push_back(std::move(copy));
    }
  };
  place(train, true);
  place(test, false);
  validate_stream(stream);
  return stream;
}

// ---------------------------------------------------------------------------
// CSV datasets
// ---------------------------------------------------------------------------

// Format: one header line `label,d=<dim>`, then `label,f1,...,fd` per row.
// Stable ids are assigned in file order. With scale_features, every column
// is min-max scaled to [0,1]; constant columns map to 0.
inline std::vector<Sample> load_csv_dataset(const std::string& path,
                                            bool scale_features = false) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  int dim = 0;
  {
    std::size_t pos = line.find("d=");
    if (line.rfind("label,", 0) != 0 || pos == std::string::npos) {
      throw ParseError(path + ": line 1: expected header 'label,d=<dim>'");
    }
    try {
      dim = std::stoi(line.substr(pos + 2));
    } catch (const std::exception&) {
      throw ParseError(path + ": line 1: bad dimension in header");
    }
    if (dim < 1) throw SchemaError(path + ": line 1: dimension must be >= 1");
  }
  std::vector<Sample> samples;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> values;
    while (std::getline(ss, field, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": bad number '" + field + "'");
      }
    }
    if (static_cast<int>(values.size()) != dim + 1) {
      throw SchemaError(path + ": line " + std::to_string(line_no) + ": got " +
                        std::to_string(values.size() - 1) + " features, " +
                        "header says d=" + std::to_string(dim));
    }
    Sample s;
    s.id = static_cast<int>(samples.size());
    s.label = static_cast<int>(values[0]);
    if (s.label < 0 || values[0] != s.label) {
      throw SchemaError(path + ": line " + std::to_string(line_no) +
                        ": label must be a nonnegative integer");
    }
    s.features.assign(values.begin() + 1, values.end());
    samples.push_back(std::move(s));
  }
  if (scale_features && !samples.empty()) {
    for (int d = 0; d < dim; ++d) {
      double lo = samples[0].features[d];
      double hi = lo;
      for (const auto& s : samples) {
        lo = std::min(lo, s.features[d]);
        hi = std::max(hi, s.features[d]);
      }
      const double span = hi - lo;
      for (auto& s : samples) {
        s.features[d] = span > 0.0 ? (s.features[d] - lo) / span : 0.0;
      }
    }
  }
  return samples;
}

}  // namespace dietcl
