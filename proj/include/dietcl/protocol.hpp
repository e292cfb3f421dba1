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

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dietcl/coreset.hpp"
#include "dietcl/learners.hpp"
#include "dietcl/metrics.hpp"
#include "dietcl/probes.hpp"
#include "dietcl/stream.hpp"

namespace dietcl {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct StreamSpec {
  enum class Kind { Gaussian, Csv };
  Kind kind = Kind::Gaussian;
  GaussianStreamConfig gaussian;
  std::string train_csv;
  std::string test_csv;
  int classes_per_task = 2;
  std::uint64_t class_order_seed = 0;
  bool scale_features = false;
};

inline TaskStream build_stream(const StreamSpec& spec) {
  if (spec.kind == StreamSpec::Kind::Gaussian) {
    return make_gaussian_stream(spec.gaussian);
  }
  if (spec.train_csv.empty()) {
    throw InputError("stream.train_csv is required for csv streams");
  }
  auto train = load_csv_dataset(spec.train_csv, spec.scale_features);
  std::vector<Sample> test;
  if (!spec.test_csv.empty()) {
    test = load_csv_dataset(spec.test_csv, spec.scale_features);
    // keep ids globally unique across the two files
    int base = 0;
    for (const auto& s : train) base = std::max(base, s.id + 1);
    for (auto& s : test) s.id += base;
  }
  return split_dataset(train, test, spec.classes_per_task,
                       spec.class_order_seed);
}

struct RunConfig {
  int epochs = 100;
  double warmup_fraction = 0.1;  // alpha
  std::uint64_t seed = 1;
  double weight_decay_task1 = 5e-4;
  double weight_decay_later = 2e-4;
  SgdConfig sgd;
  std::string lr_schedule = "constant";  // reserved; only "constant" exists
  std::vector<int> hidden_dims = {64, 32};
  CoresetSpec coreset;
  LearnerKind learner = LearnerKind::Er;
  LearnerParams learner_params = default_params(LearnerKind::Er);
  int memory_per_class = 20;
  StreamSpec stream;
  std::string out_dir = "runs";

  int warmup_epochs() const {
    // guard against binary-fraction wobble (0.3 * 10 = 2.999...)
    return static_cast<int>(std::floor(warmup_fraction * epochs + 1e-9));
  }
  int learning_epochs() const { return epochs - warmup_epochs(); }

  void validate() const {
    if (epochs < 2) throw InputError("protocol.e must be >= 2");
    if (warmup_fraction <= 0.0 || warmup_fraction >= 1.0) {
      throw InputError("protocol.warmup_fraction must be in (0,1)");
    }
    if (warmup_epochs() < 1 || learning_epochs() < 1) {
      throw InputError("epoch budget leaves an empty phase: warmup=" +
                       std::to_string(warmup_epochs()) + ", learning=" +
                       std::to_string(learning_epochs()));
    }
    if (weight_decay_task1 < 0.0 || weight_decay_later < 0.0) {
      throw InputError("weight decay must be >= 0");
    }
    if (lr_schedule != "constant") {
      throw InputError("sgd.schedule: only 'constant' is implemented");
    }
    if (memory_per_class < 0) {
      throw InputError("memory.per_class must be >= 0");
    }
    sgd.validate();
    coreset.validate();
    learner_params.validate();
    for (int d : hidden_dims) {
      if (d < 1) throw InputError("model.hidden_dims entries must be >= 1");
    }
    if (hidden_dims.empty()) {
      throw InputError("model.hidden_dims must not be empty");
    }
  }
};

// ---------------------------------------------------------------------------
// Per-task runner
// ---------------------------------------------------------------------------

struct RunHooks {
  // (task index, epoch within task, warmup?) after each finished epoch
  std::function<void(int, int, bool)> on_epoch;
  // (task index, ids used in the gradient batch, warmup?) per batch
  std::function<void(int, const std::vector<int>&, bool)> on_batch;
};

struct TaskRunOutput {
  Coreset coreset;
  WarmupStats stats;
};

namespace detail {

inline std::vector<int> epoch_order(int n, std::uint64_t seed, int task_index,
                                    int epoch, bool warmup) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, warmup ? 0x77736866 : 0x6c736866,
                      static_cast<std::uint64_t>(task_index), epoch));
  rng.shuffle(order);
  return order;
}

inline Batch slice_batch(const Task& task, const std::vector<int>& order,
                         std::size_t begin, std::size_t end) {
  std::vector<int> idx(order.begin() + begin, order.begin() + end);
  Batch b;
  b.features = pack_features(task.train, idx);
  b.labels = pack_labels(task.train, idx);
  b.ids.reserve(idx.size());
  for (int i : idx) b.ids.push_back(task.train[i].id);
  return b;
}

}  // namespace detail

// Warm-up on the full task (plain CE, recording per-epoch correctness),
// selection, then the learning phase on the selected subset only.
inline TaskRunOutput run_task(Learner& learner, const Task& task,
                              const RunConfig& cfg,
                              const RunHooks& hooks = {}) {
  const int n = static_cast<int>(task.train.size());
  const int warm = cfg.warmup_epochs();
  const int learn = cfg.learning_epochs();
  const int batch_size = cfg.sgd.batch_size;

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  const Matrix full_features = pack_features(task.train, all);
  const std::vector<int> full_labels = pack_labels(task.train, all);

  TaskRunOutput out;
  out.stats.labels = full_labels;
  out.stats.correct.assign(n, std::vector<std::uint8_t>(warm, 0));

  for (int epoch = 0; epoch < warm; ++epoch) {
    const auto order =
        detail::epoch_order(n, cfg.seed, task.index, epoch, true);
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop =
          std::min(order.size(), at + static_cast<std::size_t>(batch_size));
      Batch b = detail::slice_batch(task, order, at, stop);
      learner.train_warmup_batch(b);
      if (hooks.on_batch) hooks.on_batch(task.index, b.ids, true);
    }
    // end-of-epoch correctness over all seen classes
    const std::vector<int> preds = [&] {
      const Matrix lg = learner.logits(full_features);
      std::vector<int> p(lg.rows);
      for (int i = 0; i < lg.rows; ++i) {
        const double* r = lg.row(i);
        int arg = 0;
        for (int j = 1; j < lg.cols; ++j) {
          if (r[j] > r[arg]) arg = j;
        }
        p[i] = arg;
      }
      return p;
    }();
    for (int i = 0; i < n; ++i) {
      out.stats.correct[i][epoch] = preds[i] == full_labels[i] ? 1 : 0;
    }
    if (hooks.on_epoch) hooks.on_epoch(task.index, epoch, true);
  }

  // selector inputs: probabilities over the current task's classes and the
  // learner's statistic embedding
  {
    const Matrix lg = learner.logits(full_features);
    const int c0 = task.classes.front();
    const int c1 = task.classes.back() + 1;
    out.stats.final_probs = softmax(slice_cols(lg, c0, c1));
    out.stats.embeddings = learner.embed_stats(full_features);
  }

  if (cfg.coreset.full_data) {
    out.coreset.indices = all;
    out.coreset.fraction = 1.0;
    out.coreset.method = cfg.coreset.method;
  } else {
    out.coreset = select_coreset(
        cfg.coreset, out.stats,
        derive_seed(cfg.seed, 0x73656c65, static_cast<std::uint64_t>(task.index)));
  }

  const int m = static_cast<int>(out.coreset.indices.size());
  for (int epoch = 0; epoch < learn; ++epoch) {
    const auto order =
        detail::epoch_order(m, cfg.seed, task.index, epoch, false);
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop =
          std::min(order.size(), at + static_cast<std::size_t>(batch_size));
      std::vector<int> subset;
      subset.reserve(stop - at);
      for (std::size_t k = at; k < stop; ++k) {
        subset.push_back(out.coreset.indices[order[k]]);
      }
      Batch b;
      b.features = pack_features(task.train, subset);
      b.labels = pack_labels(task.train, subset);
      for (int i : subset) b.ids.push_back(task.train[i].id);
      std::vector<int> used;
      learner.train_learning_batch(b, &used);
      if (hooks.on_batch) hooks.on_batch(task.index, used, false);
    }
    if (hooks.on_epoch) hooks.on_epoch(task.index, warm + epoch, false);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

// Accuracy on each task's test set, predicting over all seen classes (no
// task identity is revealed at test time).
inline std::vector<double> evaluate_row(
    const std::function<std::vector<int>(const Matrix&)>& predict,
    const TaskStream& stream, int upto_task) {
  if (upto_task < 1 || upto_task > static_cast<int>(stream.tasks.size())) {
    throw InputError("evaluate_row: task index out of range");
  }
  std::vector<double> row;
  for (int t = 0; t < upto_task; ++t) {
    const Task& task = stream.tasks[t];
    if (task.test.empty()) {
      row.push_back(0.0);
      continue;
    }
    const Matrix x = pack_features(task.test);
    const std::vector<int> preds = predict(x);
    int hits = 0;
    for (std::size_t i = 0; i < task.test.size(); ++i) {
      if (preds[i] == task.test[i].label) ++hits;
    }
    row.push_back(static_cast<double>(hits) / task.test.size());
  }
  return row;
}

inline std::vector<double> evaluate_row(const Learner& learner,
                                        const TaskStream& stream,
                                        int upto_task) {
  return evaluate_row(
      [&](const Matrix& x) { return learner.predict(x); }, stream, upto_task);
}

// ---------------------------------------------------------------------------
// Whole-stream runner
// ---------------------------------------------------------------------------

struct RunRecord {
  std::string run_id;
  bool complete = false;
  std::string error;
  AccuracyMatrix matrix;
  double acc_value = 0.0;
  std::optional<double> bwt_value;
  std::vector<double> weight_deltas;  // between consecutive task ends, T-1
  std::vector<Coreset> coresets;      // one per task
  std::vector<double> task_seconds;   // volatile; kept out of record.json
};

struct RunOutput {
  RunRecord record;
  std::unique_ptr<Learner> learner;
};

// begin_task -> run_task -> end_task -> evaluate, per task, with the
// per-task weight-decay switch and the last-layer delta probe.
inline RunOutput run_stream(const TaskStream& stream, const RunConfig& cfg,
                            const RunHooks& hooks = {}) {
  cfg.validate();
  if (stream.tasks.empty()) throw InputError("run_stream: empty stream");
  RunOutput out;
  out.learner = make_learner(cfg.learner, cfg.learner_params,
                             stream.feature_dim, cfg.hidden_dims, cfg.sgd,
                             cfg.memory_per_class, cfg.seed);
  ParamSnapshot previous;
  try {
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
      const auto started = std::chrono::steady_clock::now();
      const Task& task = stream.tasks[t];
      out.learner->sgd().weight_decay =
          t == 0 ? cfg.weight_decay_task1 : cfg.weight_decay_later;
      out.learner->begin_task(task);
      TaskRunOutput task_out = run_task(*out.learner, task, cfg, hooks);
      out.learner->end_task(task, task_out.coreset.indices);
      out.record.coresets.push_back(std::move(task_out.coreset));
      out.record.matrix.rows.push_back(
          evaluate_row(*out.learner, stream, static_cast<int>(t) + 1));
      ParamSnapshot now = out.learner->snapshot_params();
      if (t > 0) {
        out.record.weight_deltas.push_back(weight_delta_overlap(previous, now));
      }
      previous = std::move(now);
      out.record.task_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        started)
              .count());
    }
    out.record.acc_value = acc(out.record.matrix);
    if (stream.tasks.size() >= 2) {
      out.record.bwt_value = bwt(out.record.matrix);
    }
    out.record.complete = true;
  } catch (const Error& e) {
    out.record.complete = false;
    out.record.error = e.what();
  }
  return out;
}

}  // namespace dietcl
