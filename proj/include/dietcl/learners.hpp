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
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dietcl/coreset.hpp"
#include "dietcl/errors.hpp"
#include "dietcl/matrix.hpp"
#include "dietcl/nn.hpp"
#include "dietcl/probes.hpp"
#include "dietcl/rng.hpp"
#include "dietcl/stream.hpp"

namespace dietcl {

// ---------------------------------------------------------------------------
// Kinds, hyperparameters, replay buffer
// ---------------------------------------------------------------------------

enum class LearnerKind { Er, Icarl, Lwf, DerLite };

inline std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::Er: return "er";
    case LearnerKind::Icarl: return "icarl";
    case LearnerKind::Lwf: return "lwf";
    case LearnerKind::DerLite: return "derlite";
  }
  return "?";
}

inline LearnerKind learner_kind_from_string(const std::string& s) {
  if (s == "er") return LearnerKind::Er;
  if (s == "icarl") return LearnerKind::Icarl;
  if (s == "lwf") return LearnerKind::Lwf;
  if (s == "derlite") return LearnerKind::DerLite;
  throw InputError("unknown learner kind '" + s +
                   "' (accepted: er, icarl, lwf, derlite)");
}

struct LearnerParams {
  double distill_temperature = 1.0;  // iCaRL default 1, LwF default 2
  double lwf_lambda = 1.0;
  double der_aux_weight = 1.0;
  double icarl_kd_weight = 1.0;

  void validate() const {
    if (distill_temperature <= 0.0) {
      throw InputError("learner.distill_temperature must be > 0");
    }
    if (lwf_lambda < 0.0 || der_aux_weight < 0.0 || icarl_kd_weight < 0.0) {
      throw InputError("learner loss weights must be >= 0");
    }
  }
};

inline LearnerParams default_params(LearnerKind kind) {
  LearnerParams p;
  p.distill_temperature = kind == LearnerKind::Lwf ? 2.0 : 1.0;
  return p;
}

struct StoredSample {
  int id = 0;  // provenance: the original training-sample id
  std::vector<double> features;
  int label = 0;
};

// Fixed per-class exemplar memory. ER fills it by per-class reservoir
// sampling; iCaRL overwrites class lists with herded exemplars.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int per_class_budget) : budget_(per_class_budget) {}

  int budget() const { return budget_; }
  bool empty() const { return total_ == 0; }
  int total() const { return total_; }
  const std::map<int, std::vector<StoredSample>>& lists() const {
    return lists_;
  }

  void reservoir_add(const StoredSample& s, Rng& rng) {
    auto& list = lists_[s.label];
    const long seen = ++stream_counts_[s.label];
    if (static_cast<int>(list.size()) < budget_) {
      list.push_back(s);
      ++total_;
    } else {
      const int j = rng.uniform_int(static_cast<int>(seen));
      if (j < budget_) list[j] = s;
    }
  }

  void set_class(int cls, std::vector<StoredSample> chosen) {
    if (static_cast<int>(chosen.size()) > budget_) {
      throw ContractError("replay buffer: class list exceeds budget");
    }
    total_ -= static_cast<int>(lists_[cls].size());
    total_ += static_cast<int>(chosen.size());
    lists_[cls] = std::move(chosen);
  }

  long stream_count(int cls) const {
    auto it = stream_counts_.find(cls);
    return it == stream_counts_.end() ? 0 : it->second;
  }
  void set_stream_count(int cls, long v) { stream_counts_[cls] = v; }

  const StoredSample& uniform_draw(Rng& rng) const {
    if (empty()) throw ContractError("replay buffer: draw from empty buffer");
    int k = rng.uniform_int(total_);
    for (const auto& [cls, list] : lists_) {
      if (k < static_cast<int>(list.size())) return list[k];
      k -= static_cast<int>(list.size());
    }
    throw ContractError("replay buffer: inconsistent totals");
  }

 private:
  int budget_;
  int total_ = 0;
  std::map<int, std::vector<StoredSample>> lists_;
  std::map<int, long> stream_counts_;
};

// ---------------------------------------------------------------------------
// Learner interface
// ---------------------------------------------------------------------------

struct Batch {
  Matrix features;
  std::vector<int> labels;
  std::vector<int> ids;
};

// Mutable view into a learner's tensors, used by checkpoint IO.
struct ParamRef {
  std::string name;
  Matrix* w;
  std::vector<double>* b;
};

// Kind-specific shape info a checkpoint needs to rebuild the model.
struct CheckpointStructure {
  std::vector<int> layer_dims;        // single-net kinds
  int num_trunks = 0;                 // derlite
  std::vector<int> trunk_dims;
  std::vector<int> classifier_dims;   // {in, out}
  std::vector<int> aux_dims;          // empty when absent
  bool live_frozen = false;
};

// Result of the learning-phase loss. `gradients` uses the same tensor names
// as snapshot_params(); `used_ids` lists every sample that entered the
// gradient batch (coreset ids plus replayed exemplar provenance ids).
struct BatchLoss {
  double loss = 0.0;
  ParamSnapshot gradients;
  std::vector<int> used_ids;
};

class Learner {
 public:
  Learner(LearnerKind kind, LearnerParams params, int input_dim,
          std::vector<int> hidden_dims, SgdConfig sgd, int memory_per_class,
          std::uint64_t seed)
      : kind_(kind),
        params_(params),
        input_dim_(input_dim),
        hidden_dims_(std::move(hidden_dims)),
        sgd_(sgd),
        memory_per_class_(memory_per_class),
        seed_(seed),
        init_rng_(derive_seed(seed, 0x696e6974)),
        draw_rng_(derive_seed(seed, 0x64726177)) {
    params_.validate();
    sgd_.validate();
    if (input_dim_ < 1) throw InputError("learner: input_dim must be >= 1");
    if (hidden_dims_.empty()) {
      throw InputError("learner: at least one hidden layer is required");
    }
    if (memory_per_class_ < 0) {
      throw InputError("learner: memory per class must be >= 0");
    }
  }
  virtual ~Learner() = default;

  LearnerKind kind() const { return kind_; }
  const LearnerParams& params() const { return params_; }
  LearnerParams& mutable_params() { return params_; }
  SgdConfig& sgd() { return sgd_; }
  int classes_seen() const { return classes_seen_; }
  int tasks_seen() const { return tasks_seen_; }
  int task_old_classes() const { return task_old_classes_; }
  int input_dim() const { return input_dim_; }
  const std::vector<int>& hidden_dims() const { return hidden_dims_; }
  int memory_per_class() const { return memory_per_class_; }
  std::uint64_t seed() const { return seed_; }

  // Per-method setup: head expansion, teacher snapshot, new trunk. The new
  // task's classes must be disjoint from everything seen and contiguous with
  // the head layout.
  void begin_task(const Task& task) {
    for (int c : task.classes) {
      if (seen_classes_.count(c)) {
        throw ProtocolError("task " + std::to_string(task.index) +
                            " reuses class " + std::to_string(c));
      }
    }
    std::vector<int> want(task.classes.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      want[i] = classes_seen_ + static_cast<int>(i);
    }
    if (task.classes != want) {
      throw ProtocolError("task classes must be consecutive ids starting at " +
                          std::to_string(classes_seen_));
    }
    on_begin_task(task);
    for (int c : task.classes) seen_classes_.insert(c);
    task_old_classes_ = classes_seen_;
    classes_seen_ += static_cast<int>(task.classes.size());
    ++tasks_seen_;
  }

  virtual void end_task(const Task& task,
                        const std::vector<int>& coreset_indices) = 0;

  double train_warmup_batch(const Batch& b) {
    Computed c = compute(b, /*warmup=*/true);
    apply(c.part_grads);
    return c.loss;
  }

  double train_learning_batch(const Batch& b,
                              std::vector<int>* used_ids = nullptr) {
    Computed c = compute(b, /*warmup=*/false);
    apply(c.part_grads);
    if (used_ids) *used_ids = std::move(c.used_ids);
    return c.loss;
  }

  // Learning-phase loss and gradients without an update step.
  BatchLoss compute_batch_loss(const Batch& b) {
    Computed c = compute(b, /*warmup=*/false);
    BatchLoss out;
    out.loss = c.loss;
    out.used_ids = std::move(c.used_ids);
    out.gradients = flatten_grads(c.part_grads);
    return out;
  }

  virtual Matrix logits(const Matrix& x) const = 0;

  // Class-incremental prediction over all seen classes.
  virtual std::vector<int> predict(const Matrix& x) const {
    const Matrix lg = logits(x);
    std::vector<int> out(lg.rows);
    for (int i = 0; i < lg.rows; ++i) {
      const double* r = lg.row(i);
      int arg = 0;
      for (int j = 1; j < lg.cols; ++j) {
        if (r[j] > r[arg]) arg = j;
      }
      out[i] = arg;
    }
    return out;
  }

  // Representation used for analysis probes (PCA and friends).
  virtual Matrix embed_analysis(const Matrix& x) const = 0;
  // Representation feeding the warm-up statistics (selector input).
  virtual Matrix embed_stats(const Matrix& x) const { return embed_analysis(x); }

  virtual std::vector<double> saliency(const std::vector<double>& x,
                                       int target) const = 0;

  virtual ParamSnapshot snapshot_params() const = 0;

  // --- checkpoint surface ---
  virtual std::vector<ParamRef> param_refs() = 0;
  virtual CheckpointStructure checkpoint_structure() const = 0;
  virtual void restore_structure(const CheckpointStructure& s) = 0;
  virtual ReplayBuffer* mutable_buffer() { return nullptr; }
  virtual const ReplayBuffer* buffer_ptr() const { return nullptr; }
  void restore_protocol_state(int classes_seen, int tasks_seen,
                              int task_old_classes,
                              const std::vector<int>& seen) {
    classes_seen_ = classes_seen;
    tasks_seen_ = tasks_seen;
    task_old_classes_ = task_old_classes;
    seen_classes_ = std::set<int>(seen.begin(), seen.end());
  }

 protected:
  struct Computed {
    double loss = 0.0;
    std::vector<Gradients> part_grads;  // aligned with part_names()
    std::vector<int> used_ids;
  };

  virtual void on_begin_task(const Task& task) = 0;
  virtual Computed compute(const Batch& b, bool warmup) = 0;
  virtual void apply(const std::vector<Gradients>& part_grads) = 0;
  virtual ParamSnapshot flatten_grads(
      const std::vector<Gradients>& part_grads) const = 0;

  void require_task_started() const {
    if (tasks_seen_ == 0 && classes_seen_ == 0) {
      throw ContractError("learner: begin_task has not been called");
    }
  }

  LearnerKind kind_;
  LearnerParams params_;
  int input_dim_;
  std::vector<int> hidden_dims_;
  SgdConfig sgd_;
  int memory_per_class_;
  std::uint64_t seed_;
  Rng init_rng_;
  Rng draw_rng_;
  int classes_seen_ = 0;
  int tasks_seen_ = 0;
  int task_old_classes_ = 0;  // classes seen before the current task
  std::set<int> seen_classes_;
};

// ---------------------------------------------------------------------------
// Single-network learners: ER, iCaRL, LwF
// ---------------------------------------------------------------------------

class SingleNetLearner : public Learner {
 public:
  using Learner::Learner;

  Matrix logits(const Matrix& x) const override {
    require_task_started();
    return forward(net_, x).first;
  }

  Matrix embed_analysis(const Matrix& x) const override {
    require_task_started();
    return embed(net_, x);
  }

  std::vector<double> saliency(const std::vector<double>& x,
                               int target) const override {
    require_task_started();
    return input_saliency(net_, x, target);
  }

  ParamSnapshot snapshot_params() const override {
    ParamSnapshot snap;
    for (int l = 0; l < net_.depth(); ++l) {
      snap.names.push_back(l == net_.depth() - 1 ? "classifier"
                                                 : "layer" + std::to_string(l));
      snap.weights.push_back(net_.weights[l]);
      snap.biases.push_back(net_.biases[l]);
    }
    return snap;
  }

  const MlpNetwork& network() const { return net_; }
  const std::optional<MlpNetwork>& teacher() const { return teacher_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  std::vector<ParamRef> param_refs() override {
    std::vector<ParamRef> refs;
    for (int l = 0; l < net_.depth(); ++l) {
      refs.push_back({l == net_.depth() - 1 ? "classifier"
                                            : "layer" + std::to_string(l),
                      &net_.weights[l], &net_.biases[l]});
    }
    return refs;
  }

  CheckpointStructure checkpoint_structure() const override {
    CheckpointStructure s;
    s.layer_dims = net_.layer_dims;
    return s;
  }

  void restore_structure(const CheckpointStructure& s) override {
    Rng scratch(0);
    net_ = make_mlp(s.layer_dims, scratch);  // overwritten by the payload
    opt_ = make_optimizer_state(net_);
    teacher_.reset();
  }

  ReplayBuffer* mutable_buffer() override {
    return uses_buffer() ? &buffer_ : nullptr;
  }
  const ReplayBuffer* buffer_ptr() const override {
    return uses_buffer() ? &buffer_ : nullptr;
  }

 protected:
  void on_begin_task(const Task& task) override {
    const int new_classes = static_cast<int>(task.classes.size());
    if (tasks_seen_ == 0) {
      std::vector<int> dims;
      dims.push_back(input_dim_);
      dims.insert(dims.end(), hidden_dims_.begin(), hidden_dims_.end());
      dims.push_back(new_classes);
      net_ = make_mlp(dims, init_rng_);
    } else {
      if (uses_teacher()) teacher_ = net_;  // frozen pre-task snapshot
      expand_head(net_, new_classes, init_rng_);
    }
    opt_ = make_optimizer_state(net_);
  }

  bool uses_teacher() const {
    return kind_ == LearnerKind::Icarl || kind_ == LearnerKind::Lwf;
  }

  bool uses_buffer() const {
    return kind_ == LearnerKind::Er || kind_ == LearnerKind::Icarl;
  }

  // Appends one uniformly drawn exemplar per incoming sample (50/50 mix).
  Batch mix_with_buffer(const Batch& b) {
    if (!uses_buffer() || buffer_.empty()) return b;
    Batch mixed = b;
    Matrix extra(b.features.rows, b.features.cols);
    for (int i = 0; i < b.features.rows; ++i) {
      const StoredSample& s = buffer_.uniform_draw(draw_rng_);
      std::copy(s.features.begin(), s.features.end(), extra.row(i));
      mixed.labels.push_back(s.label);
      mixed.ids.push_back(s.id);
    }
    mixed.features = vstack(b.features, extra);
    return mixed;
  }

  Computed compute(const Batch& b, bool warmup) override {
    require_task_started();
    Computed out;
    if (warmup) {
      auto [lg, cache] = forward(net_, b.features);
      auto ce = cross_entropy(lg, b.labels);
      out.loss = ce.loss;
      out.part_grads = {backward(net_, cache, ce.grad)};
      out.used_ids = b.ids;
      return out;
    }
    switch (kind_) {
      case LearnerKind::Er: {
        Batch mixed = mix_with_buffer(b);
        auto [lg, cache] = forward(net_, mixed.features);
        auto ce = cross_entropy(lg, mixed.labels);
        out.loss = ce.loss;
        out.part_grads = {backward(net_, cache, ce.grad)};
        out.used_ids = std::move(mixed.ids);
        return out;
      }
      case LearnerKind::Icarl: {
        Batch mixed = mix_with_buffer(b);
        auto [lg, cache] = forward(net_, mixed.features);
        auto ce = cross_entropy(lg, mixed.labels);
        Matrix grad_logits = ce.grad;
        out.loss = ce.loss;
        const int old_c = task_old_classes_;
        if (teacher_ && old_c > 0 && params_.icarl_kd_weight > 0.0) {
          const Matrix teacher_lg = forward(*teacher_, mixed.features).first;
          auto kd = kd_loss(slice_cols(lg, 0, old_c), teacher_lg,
                            params_.distill_temperature);
          out.loss += params_.icarl_kd_weight * kd.loss;
          for (int i = 0; i < grad_logits.rows; ++i) {
            double* g = grad_logits.row(i);
            const double* gk = kd.grad.row(i);
            for (int j = 0; j < old_c; ++j) {
              g[j] += params_.icarl_kd_weight * gk[j];
            }
          }
        }
        out.part_grads = {backward(net_, cache, grad_logits)};
        out.used_ids = std::move(mixed.ids);
        return out;
      }
      case LearnerKind::Lwf: {
        // no replay: new-class CE on the current inputs plus distillation of
        // the old-class logits toward the frozen teacher
        auto [lg, cache] = forward(net_, b.features);
        const int old_c = task_old_classes_;
        const int total_c = net_.output_dim();
        Matrix new_logits = slice_cols(lg, old_c, total_c);
        std::vector<int> local_labels;
        local_labels.reserve(b.labels.size());
        for (int y : b.labels) {
          if (y < old_c) {
            throw ProtocolError("lwf: old-class label in a learning batch");
          }
          local_labels.push_back(y - old_c);
        }
        auto ce = cross_entropy(new_logits, local_labels);
        Matrix grad_logits(lg.rows, lg.cols);
        for (int i = 0; i < lg.rows; ++i) {
          double* g = grad_logits.row(i);
          const double* gn = ce.grad.row(i);
          for (int j = old_c; j < total_c; ++j) g[j] = gn[j - old_c];
        }
        out.loss = ce.loss;
        if (teacher_ && old_c > 0 && params_.lwf_lambda > 0.0) {
          const Matrix teacher_lg = forward(*teacher_, b.features).first;
          auto kd = kd_loss(slice_cols(lg, 0, old_c), teacher_lg,
                            params_.distill_temperature);
          out.loss += params_.lwf_lambda * kd.loss;
          for (int i = 0; i < lg.rows; ++i) {
            double* g = grad_logits.row(i);
            const double* gk = kd.grad.row(i);
            for (int j = 0; j < old_c; ++j) g[j] += params_.lwf_lambda * gk[j];
          }
        }
        out.part_grads = {backward(net_, cache, grad_logits)};
        out.used_ids = b.ids;
        return out;
      }
      default:
        throw ContractError("SingleNetLearner: unexpected kind");
    }
  }

  void apply(const std::vector<Gradients>& part_grads) override {
    sgd_step(net_, part_grads[0], sgd_, opt_);
  }

  ParamSnapshot flatten_grads(
      const std::vector<Gradients>& part_grads) const override {
    ParamSnapshot snap;
    const Gradients& g = part_grads[0];
    for (int l = 0; l < net_.depth(); ++l) {
      snap.names.push_back(l == net_.depth() - 1 ? "classifier"
                                                 : "layer" + std::to_string(l));
      snap.weights.push_back(g.weights[l]);
      snap.biases.push_back(g.biases[l]);
    }
    return snap;
  }

  MlpNetwork net_;
  OptimizerState opt_;
  std::optional<MlpNetwork> teacher_;
  ReplayBuffer buffer_{0};
};

class ErLearner : public SingleNetLearner {
 public:
  ErLearner(LearnerParams params, int input_dim, std::vector<int> hidden_dims,
            SgdConfig sgd, int memory_per_class, std::uint64_t seed)
      : SingleNetLearner(LearnerKind::Er, params, input_dim,
                         std::move(hidden_dims), sgd, memory_per_class, seed) {
    buffer_ = ReplayBuffer(memory_per_class);
  }

  // Per-class reservoir over the coreset stream (ascending index order).
  void end_task(const Task& task,
                const std::vector<int>& coreset_indices) override {
    Rng rng(derive_seed(seed_, 0x72657376, task.index));
    for (int idx : coreset_indices) {
      const Sample& s = task.train[idx];
      buffer_.reservoir_add({s.id, s.features, s.label}, rng);
    }
  }
};

class LwfLearner : public SingleNetLearner {
 public:
  LwfLearner(LearnerParams params, int input_dim, std::vector<int> hidden_dims,
             SgdConfig sgd, int memory_per_class, std::uint64_t seed)
      : SingleNetLearner(LearnerKind::Lwf, params, input_dim,
                         std::move(hidden_dims), sgd, memory_per_class, seed) {}

  void end_task(const Task&, const std::vector<int>&) override {}
};

class IcarlLearner : public SingleNetLearner {
 public:
  IcarlLearner(LearnerParams params, int input_dim,
               std::vector<int> hidden_dims, SgdConfig sgd,
               int memory_per_class, std::uint64_t seed)
      : SingleNetLearner(LearnerKind::Icarl, params, input_dim,
                         std::move(hidden_dims), sgd, memory_per_class, seed) {
    buffer_ = ReplayBuffer(memory_per_class);
  }

  // Herds min(m, class size) exemplars per new class out of the coreset,
  // using the current embeddings. Exemplars stay fixed afterwards.
  void end_task(const Task& task,
                const std::vector<int>& coreset_indices) override {
    std::map<int, std::vector<int>> by_class;
    for (int idx : coreset_indices) {
      by_class[task.train[idx].label].push_back(idx);
    }
    for (const auto& [cls, indices] : by_class) {
      Matrix feats = pack_features(task.train, indices);
      Matrix emb = embed_analysis(feats);
      std::vector<int> rows(indices.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i] = static_cast<int>(i);
      }
      const int quota =
          std::min(memory_per_class_, static_cast<int>(indices.size()));
      if (quota == 0) continue;
      auto picked = detail::herding_greedy(emb, rows, quota);
      std::sort(picked.begin(), picked.end());
      std::vector<StoredSample> chosen;
      for (int local : picked) {
        const Sample& s = task.train[indices[local]];
        chosen.push_back({s.id, s.features, s.label});
      }
      buffer_.set_class(cls, std::move(chosen));
    }
  }

  // Nearest exemplar-class mean in embedding space; ties to the lowest
  // class id. Falls back to logits argmax before any exemplars exist.
  std::vector<int> predict(const Matrix& x) const override {
    require_task_started();
    if (buffer_.empty()) return SingleNetLearner::predict(x);
    std::vector<int> class_ids;
    std::vector<std::vector<double>> means;
    for (const auto& [cls, list] : buffer_.lists()) {
      if (list.empty()) continue;
      Matrix feats(static_cast<int>(list.size()),
                   static_cast<int>(list[0].features.size()));
      for (int i = 0; i < feats.rows; ++i) {
        std::copy(list[i].features.begin(), list[i].features.end(),
                  feats.row(i));
      }
      means.push_back(column_means(embed(net_, feats)));
      class_ids.push_back(cls);
    }
    const Matrix q = embed(net_, x);
    std::vector<int> out(q.rows);
    for (int i = 0; i < q.rows; ++i) {
      int best = 0;
      double best_d = squared_distance(q.row(i), means[0].data(), q.cols);
      for (std::size_t c = 1; c < means.size(); ++c) {
        const double d = squared_distance(q.row(i), means[c].data(), q.cols);
        if (d < best_d) {  // strict: ties keep the lower class id
          best = static_cast<int>(c);
          best_d = d;
        }
      }
      out[i] = class_ids[best];
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// DerLite: one frozen trunk per finished task + a unified classifier
// ---------------------------------------------------------------------------

class DerLiteLearner : public Learner {
 public:
  DerLiteLearner(LearnerParams params, int input_dim,
                 std::vector<int> hidden_dims, SgdConfig sgd,
                 int memory_per_class, std::uint64_t seed)
      : Learner(LearnerKind::DerLite, params, input_dim,
                std::move(hidden_dims), sgd, memory_per_class, seed) {}

  int trunk_count() const { return static_cast<int>(trunks_.size()); }
  int frozen_trunks() const {
    return live_frozen_ ? trunk_count() : trunk_count() - 1;
  }
  int embed_dim() const { return hidden_dims_.back(); }
  const MlpNetwork& trunk(int i) const { return trunks_[i]; }
  const MlpNetwork& classifier() const { return classifier_; }

  std::vector<ParamRef> param_refs() override {
    std::vector<ParamRef> refs;
    for (int b = 0; b < trunk_count(); ++b) {
      for (int l = 0; l < trunks_[b].depth(); ++l) {
        refs.push_back({"trunk" + std::to_string(b) + ".layer" +
                            std::to_string(l),
                        &trunks_[b].weights[l], &trunks_[b].biases[l]});
      }
    }
    refs.push_back({"classifier", &classifier_.weights[0],
                    &classifier_.biases[0]});
    if (aux_) {
      refs.push_back({"aux", &aux_->weights[0], &aux_->biases[0]});
    }
    return refs;
  }

  CheckpointStructure checkpoint_structure() const override {
    CheckpointStructure s;
    s.num_trunks = trunk_count();
    s.trunk_dims = trunks_.empty() ? std::vector<int>{} : trunks_[0].layer_dims;
    s.classifier_dims = classifier_.layer_dims;
    if (aux_) s.aux_dims = aux_->layer_dims;
    s.live_frozen = live_frozen_;
    return s;
  }

  void restore_structure(const CheckpointStructure& s) override {
    Rng scratch(0);
    trunks_.clear();
    for (int b = 0; b < s.num_trunks; ++b) {
      trunks_.push_back(make_mlp(s.trunk_dims, scratch));
    }
    classifier_ = make_mlp(s.classifier_dims, scratch);
    aux_.reset();
    if (!s.aux_dims.empty()) aux_ = make_mlp(s.aux_dims, scratch);
    live_frozen_ = s.live_frozen;
    if (!trunks_.empty()) trunk_opt_ = make_optimizer_state(trunks_.back());
    clf_opt_ = make_optimizer_state(classifier_);
    if (aux_) aux_opt_ = make_optimizer_state(*aux_);
  }

  void end_task(const Task&, const std::vector<int>&) override {
    live_frozen_ = true;  // archived; a fresh trunk arrives with the next task
  }

  Matrix logits(const Matrix& x) const override {
    require_task_started();
    return forward(classifier_, concat_embeddings(x)).first;
  }

  Matrix embed_analysis(const Matrix& x) const override {
    require_task_started();
    return concat_embeddings(x);
  }

  // Selector statistics see the trunk that is actually training.
  Matrix embed_stats(const Matrix& x) const override {
    require_task_started();
    return relu(forward(trunks_.back(), x).first);
  }

  std::vector<double> saliency(const std::vector<double>& x,
                               int target) const override {
    require_task_started();
    if (target < 0 || target >= classifier_.output_dim()) {
      throw InputError("saliency: target class out of range");
    }
    const int h = embed_dim();
    Matrix sample(1, static_cast<int>(x.size()));
    sample.data = x;
    std::vector<double> grad(x.size(), 0.0);
    for (int b = 0; b < trunk_count(); ++b) {
      auto [lin, cache] = forward(trunks_[b], sample);
      Matrix upstream(1, h);
      for (int j = 0; j < h; ++j) {
        upstream(0, j) =
            lin(0, j) > 0.0 ? classifier_.weights[0](target, b * h + j) : 0.0;
      }
      Matrix gx = input_gradient(trunks_[b], cache, upstream);
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += gx.data[k];
    }
    for (double& v : grad) v = std::fabs(v);
    return grad;
  }

  ParamSnapshot snapshot_params() const override {
    ParamSnapshot snap;
    for (int b = 0; b < trunk_count(); ++b) {
      for (int l = 0; l < trunks_[b].depth(); ++l) {
        snap.names.push_back("trunk" + std::to_string(b) + ".layer" +
                             std::to_string(l));
        snap.weights.push_back(trunks_[b].weights[l]);
        snap.biases.push_back(trunks_[b].biases[l]);
      }
    }
    snap.names.push_back("classifier");
    snap.weights.push_back(classifier_.weights[0]);
    snap.biases.push_back(classifier_.biases[0]);
    if (aux_) {
      snap.names.push_back("aux");
      snap.weights.push_back(aux_->weights[0]);
      snap.biases.push_back(aux_->biases[0]);
    }
    return snap;
  }

 protected:
  void on_begin_task(const Task& task) override {
    const int k = static_cast<int>(task.classes.size());
    const int old_c = classes_seen_;
    const int h = embed_dim();
    std::vector<int> trunk_dims;
    trunk_dims.push_back(input_dim_);
    trunk_dims.insert(trunk_dims.end(), hidden_dims_.begin(),
                      hidden_dims_.end());
    trunks_.push_back(make_mlp(trunk_dims, init_rng_));
    live_frozen_ = false;

    const int new_in = trunk_count() * h;
    const int new_out = old_c + k;
    if (old_c == 0) {
      classifier_ = make_mlp({new_in, new_out}, init_rng_);
      aux_.reset();
    } else {
      // keep the old block; new feature columns start at zero for old class
      // rows so their logits are preserved at expansion time
      MlpNetwork grown = make_mlp({new_in, new_out}, init_rng_);
      const Matrix& old_w = classifier_.weights[0];
      for (int i = 0; i < new_out; ++i) {
        for (int j = 0; j < new_in; ++j) {
          if (i < old_c) {
            grown.weights[0](i, j) = j < old_w.cols ? old_w(i, j) : 0.0;
          }
        }
      }
      for (int i = 0; i < old_c; ++i) {
        grown.biases[0][i] = classifier_.biases[0][i];
      }
      classifier_ = std::move(grown);
      aux_ = make_mlp({h, k + 1}, init_rng_);  // slot 0 = merged "old"
    }
    trunk_opt_ = make_optimizer_state(trunks_.back());
    clf_opt_ = make_optimizer_state(classifier_);
    if (aux_) aux_opt_ = make_optimizer_state(*aux_);
  }

  Computed compute(const Batch& b, bool warmup) override {
    require_task_started();
    const int h = embed_dim();
    const int live = trunk_count() - 1;

    // frozen trunks forward without caches; live trunk keeps its cache
    std::vector<Matrix> embs(trunk_count());
    for (int t = 0; t < live; ++t) {
      embs[t] = relu(forward(trunks_[t], b.features).first);
    }
    auto [live_lin, live_cache] = forward(trunks_[live], b.features);
    embs[live] = relu(live_lin);
    Matrix z = embs[0];
    for (int t = 1; t < trunk_count(); ++t) z = hstack(z, embs[t]);

    auto [lg, clf_cache] = forward(classifier_, z);
    auto ce = cross_entropy(lg, b.labels);

    Computed out;
    out.loss = ce.loss;
    Gradients clf_grads = backward(classifier_, clf_cache, ce.grad);
    Matrix dz = input_gradient(classifier_, clf_cache, ce.grad);
    Matrix d_live = slice_cols(dz, live * h, (live + 1) * h);

    Gradients aux_grads;
    const bool use_aux = !warmup && aux_ && params_.der_aux_weight > 0.0;
    if (use_aux) {
      // new classes vs one merged "old" label, on the live embedding only
      std::vector<int> aux_labels;
      aux_labels.reserve(b.labels.size());
      for (int y : b.labels) {
        aux_labels.push_back(y < task_old_classes_ ? 0
                                                   : y - task_old_classes_ + 1);
      }
      auto [aux_lg, aux_cache] = forward(*aux_, embs[live]);
      auto aux_ce = cross_entropy(aux_lg, aux_labels);
      out.loss += params_.der_aux_weight * aux_ce.loss;
      Matrix scaled = aux_ce.grad;
      for (double& v : scaled.data) v *= params_.der_aux_weight;
      aux_grads = backward(*aux_, aux_cache, scaled);
      Matrix d_aux = input_gradient(*aux_, aux_cache, scaled);
      for (std::size_t k = 0; k < d_live.data.size(); ++k) {
        d_live.data[k] += d_aux.data[k];
      }
    }

    // through the live trunk's output rectifier
    for (std::size_t k = 0; k < d_live.data.size(); ++k) {
      if (live_lin.data[k] <= 0.0) d_live.data[k] = 0.0;
    }
    Gradients live_grads = backward(trunks_[live], live_cache, d_live);

    // frozen trunks report identically-zero gradients
    out.part_grads.resize(trunk_count());
    for (int t = 0; t < live; ++t) {
      Gradients zero;
      for (int l = 0; l < trunks_[t].depth(); ++l) {
        zero.weights.emplace_back(trunks_[t].weights[l].rows,
                                  trunks_[t].weights[l].cols);
        zero.biases.emplace_back(trunks_[t].biases[l].size(), 0.0);
      }
      out.part_grads[t] = std::move(zero);
    }
    out.part_grads[live] = std::move(live_grads);
    out.part_grads.push_back(std::move(clf_grads));
    if (aux_) {
      if (!use_aux) {
        for (int l = 0; l < aux_->depth(); ++l) {
          aux_grads.weights.emplace_back(aux_->weights[l].rows,
                                         aux_->weights[l].cols);
          aux_grads.biases.emplace_back(aux_->biases[l].size(), 0.0);
        }
      }
      out.part_grads.push_back(std::move(aux_grads));
    }
    out.used_ids = b.ids;
    return out;
  }

  void apply(const std::vector<Gradients>& part_grads) override {
    const int live = trunk_count() - 1;
    sgd_step(trunks_[live], part_grads[live], sgd_, trunk_opt_);
    sgd_step(classifier_, part_grads[trunk_count()], sgd_, clf_opt_);
    if (aux_) {
      sgd_step(*aux_, part_grads[trunk_count() + 1], sgd_, aux_opt_);
    }
  }

  ParamSnapshot flatten_grads(
      const std::vector<Gradients>& part_grads) const override {
    ParamSnapshot snap;
    for (int b = 0; b < trunk_count(); ++b) {
      for (int l = 0; l < trunks_[b].depth(); ++l) {
        snap.names.push_back("trunk" + std::to_string(b) + ".layer" +
                             std::to_string(l));
        snap.weights.push_back(part_grads[b].weights[l]);
        snap.biases.push_back(part_grads[b].biases[l]);
      }
    }
    snap.names.push_back("classifier");
    snap.weights.push_back(part_grads[trunk_count()].weights[0]);
    snap.biases.push_back(part_grads[trunk_count()].biases[0]);
    if (aux_) {
      snap.names.push_back("aux");
      snap.weights.push_back(part_grads[trunk_count() + 1].weights[0]);
      snap.biases.push_back(part_grads[trunk_count() + 1].biases[0]);
    }
    return snap;
  }

 private:
  Matrix concat_embeddings(const Matrix& x) const {
    Matrix z = relu(forward(trunks_[0], x).first);
    for (int t = 1; t < trunk_count(); ++t) {
      z = hstack(z, relu(forward(trunks_[t], x).first));
    }
    return z;
  }

  std::vector<MlpNetwork> trunks_;
  MlpNetwork classifier_;  // depth-1 over concatenated embeddings
  std::optional<MlpNetwork> aux_;
  OptimizerState trunk_opt_, clf_opt_, aux_opt_;
  bool live_frozen_ = false;
};

// ---------------------------------------------------------------------------
// Factory
// ---------------------------------------------------------------------------

inline std::unique_ptr<Learner> make_learner(LearnerKind kind,
                                             LearnerParams params,
                                             int input_dim,
                                             std::vector<int> hidden_dims,
                                             SgdConfig sgd,
                                             int memory_per_class,
                                             std::uint64_t seed) {
  switch (kind) {
    case LearnerKind::Er:
      return std::make_unique<ErLearner>(params, input_dim,
                                         std::move(hidden_dims), sgd,
                                         memory_per_class, seed);
    case LearnerKind::Icarl:
      return std::make_unique<IcarlLearner>(params, input_dim,
                                            std::move(hidden_dims), sgd,
                                            memory_per_class, seed);
    case LearnerKind::Lwf:
      return std::make_unique<LwfLearner>(params, input_dim,
                                          std::move(hidden_dims), sgd,
                                          memory_per_class, seed);
    case LearnerKind::DerLite:
      return std::make_unique<DerLiteLearner>(params, input_dim,
                                              std::move(hidden_dims), sgd,
                                              memory_per_class, seed);
  }
  throw InputError("make_learner: bad kind");
}

}  // namespace dietcl
