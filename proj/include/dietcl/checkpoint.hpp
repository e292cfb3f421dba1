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

// Versioned learner checkpoints: an 8-byte magic, a JSON header describing
// config and tensor layout, then a raw little-endian float64 payload with
// every tensor and the replay-buffer features. Teachers and optimizer
// velocities are transient and not stored; a loaded learner is meant for
// inference, probing and continued protocol runs from a task boundary.

#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "dietcl/errors.hpp"
#include "dietcl/learners.hpp"

namespace dietcl {

inline constexpr char kCheckpointMagic[8] = {'D', 'I', 'E', 'T',
                                             'C', 'K', 'P', '1'};

inline void save_checkpoint(Learner& learner, const std::string& path) {
  nlohmann::json header;
  header["format"] = "dietcl-checkpoint";
  header["version"] = 1;
  header["kind"] = to_string(learner.kind());
  header["params"] = {
      {"distill_temperature", learner.params().distill_temperature},
      {"lwf_lambda", learner.params().lwf_lambda},
      {"der_aux_weight", learner.params().der_aux_weight},
      {"icarl_kd_weight", learner.params().icarl_kd_weight},
  };
  header["sgd"] = {
      {"learning_rate", learner.sgd().learning_rate},
      {"momentum", learner.sgd().momentum},
      {"weight_decay", learner.sgd().weight_decay},
      {"batch_size", learner.sgd().batch_size},
  };
  header["input_dim"] = learner.input_dim();
  header["hidden_dims"] = learner.hidden_dims();
  header["memory_per_class"] = learner.memory_per_class();
  header["seed"] = learner.seed();
  header["classes_seen"] = learner.classes_seen();
  header["tasks_seen"] = learner.tasks_seen();
  header["task_old_classes"] = learner.task_old_classes();

  const CheckpointStructure structure = learner.checkpoint_structure();
  header["structure"] = {
      {"layer_dims", structure.layer_dims},
      {"num_trunks", structure.num_trunks},
      {"trunk_dims", structure.trunk_dims},
      {"classifier_dims", structure.classifier_dims},
      {"aux_dims", structure.aux_dims},
      {"live_frozen", structure.live_frozen},
  };

  std::vector<double> payload;
  nlohmann::json tensors = nlohmann::json::array();
  for (const ParamRef& ref : learner.param_refs()) {
    tensors.push_back({{"name", ref.name},
                       {"rows", ref.w->rows},
                       {"cols", ref.w->cols},
                       {"bias", ref.b->size()}});
    payload.insert(payload.end(), ref.w->data.begin(), ref.w->data.end());
    payload.insert(payload.end(), ref.b->begin(), ref.b->end());
  }
  header["tensors"] = std::move(tensors);

  nlohmann::json buffer = nlohmann::json::array();
  if (const ReplayBuffer* buf = learner.buffer_ptr()) {
    for (const auto& [cls, list] : buf->lists()) {
      nlohmann::json entry;
      entry["class"] = cls;
      entry["stream_count"] = buf->stream_count(cls);
      std::vector<int> ids, labels;
      for (const StoredSample& s : list) {
        ids.push_back(s.id);
        labels.push_back(s.label);
        payload.insert(payload.end(), s.features.begin(), s.features.end());
      }
      entry["ids"] = ids;
      entry["labels"] = labels;
      buffer.push_back(entry);
    }
  }
  header["buffer"] = std::move(buffer);

  // seen classes for protocol-state restore
  {
    std::vector<int> seen;
    for (int c = 0; c < learner.classes_seen(); ++c) seen.push_back(c);
    header["seen_classes"] = seen;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string header_str = header.dump();
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(),
            static_cast<std::streamsize>(header_str.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!out) throw IoError("short write while saving checkpoint: " + path);
}

inline std::unique_ptr<Learner> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError(path + ": not a dietcl checkpoint");
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw ParseError(path + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad checkpoint header: " + e.what());
  }
  if (header.value("version", 0) != 1) {
    throw SchemaError(path + ": unsupported checkpoint version");
  }

  LearnerParams params;
  params.distill_temperature = header["params"]["distill_temperature"];
  params.lwf_lambda = header["params"]["lwf_lambda"];
  params.der_aux_weight = header["params"]["der_aux_weight"];
  params.icarl_kd_weight = header["params"]["icarl_kd_weight"];
  SgdConfig sgd;
  sgd.learning_rate = header["sgd"]["learning_rate"];
  sgd.momentum = header["sgd"]["momentum"];
  sgd.weight_decay = header["sgd"]["weight_decay"];
  sgd.batch_size = header["sgd"]["batch_size"];

  auto learner = make_learner(
      learner_kind_from_string(header["kind"].get<std::string>()), params,
      header["input_dim"].get<int>(),
      header["hidden_dims"].get<std::vector<int>>(), sgd,
      header["memory_per_class"].get<int>(), header["seed"].get<std::uint64_t>());

  CheckpointStructure structure;
  structure.layer_dims =
      header["structure"]["layer_dims"].get<std::vector<int>>();
  structure.num_trunks = header["structure"]["num_trunks"].get<int>();
  structure.trunk_dims =
      header["structure"]["trunk_dims"].get<std::vector<int>>();
  structure.classifier_dims =
      header["structure"]["classifier_dims"].get<std::vector<int>>();
  structure.aux_dims = header["structure"]["aux_dims"].get<std::vector<int>>();
  structure.live_frozen = header["structure"]["live_frozen"].get<bool>();
  learner->restore_structure(structure);
  learner->restore_protocol_state(
      header["classes_seen"].get<int>(), header["tasks_seen"].get<int>(),
      header.value("task_old_classes", header["classes_seen"].get<int>()),
      header["seen_classes"].get<std::vector<int>>());

  // payload: tensors in listed order, then buffer features
  auto read_doubles = [&](std::size_t count, double* dst) {
    in.read(reinterpret_cast<char*>(dst),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw ParseError(path + ": truncated checkpoint payload");
  };
  auto refs = learner->param_refs();
  const auto& tensors = header["tensors"];
  if (tensors.size() != refs.size()) {
    throw SchemaError(path + ": tensor list does not match model structure");
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = tensors[i];
    if (t["name"].get<std::string>() != refs[i].name ||
        t["rows"].get<int>() != refs[i].w->rows ||
        t["cols"].get<int>() != refs[i].w->cols ||
        t["bias"].get<std::size_t>() != refs[i].b->size()) {
      throw SchemaError(path + ": tensor '" + refs[i].name +
                        "' shape mismatch");
    }
    read_doubles(refs[i].w->data.size(), refs[i].w->data.data());
    read_doubles(refs[i].b->size(), refs[i].b->data());
  }
  if (ReplayBuffer* buf = learner->mutable_buffer()) {
    for (const auto& entry : header["buffer"]) {
      const int cls = entry["class"].get<int>();
      const auto ids = entry["ids"].get<std::vector<int>>();
      const auto labels = entry["labels"].get<std::vector<int>>();
      std::vector<StoredSample> list(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        list[i].id = ids[i];
        list[i].label = labels[i];
        list[i].features.resize(learner->input_dim());
        read_doubles(list[i].features.size(), list[i].features.data());
      }
      buf->set_class(cls, std::move(list));
      buf->set_stream_count(cls, entry["stream_count"].get<long>());
    }
  }
  return learner;
}

}  // namespace dietcl
