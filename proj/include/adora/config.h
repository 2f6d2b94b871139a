// Copyright 2026 The Adora Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ADORA_CONFIG_H_
#define ADORA_CONFIG_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adora/metrics_eval.h"
#include "adora/policy.h"
#include "adora/task_env.h"
#include "adora/trainer.h"

namespace adora {

struct TaskConfig {
  // Load instances from this dataset file instead of generating them.
  std::string path;
  TaskFamily family = TaskFamily::kModChain;
  int count = 64;
  int base = 5;
  int min_chain_len = 2;
  int max_chain_len = 4;
  std::uint64_t seed = 11;
  std::optional<double> decoy_rate;
  // fixed_answer only.
  Token answer = 0;

  bool operator==(const TaskConfig&) const = default;
};

// Held-out split generated with the same family and base as the training set.
struct HeldOutConfig {
  int count = 0;  // 0 disables held-out evaluation
  std::uint64_t seed = 99;
  std::optional<double> decoy_rate;
  InstanceId id_offset = 100000;
  int repeats = 1;

  bool operator==(const HeldOutConfig&) const = default;
};

struct InitConfig {
  // Start from this checkpoint instead of the prior.
  std::string checkpoint;
  PriorInit prior;

  bool operator==(const InitConfig&) const = default;
};

struct OutputConfig {
  int checkpoint_every = 0;  // 0 writes only the final checkpoint
  bool rollouts = true;      // write rollouts.jsonl

  bool operator==(const OutputConfig&) const = default;
};

// One experiment. Serialized as a JSON object with sections
//   name, preset, task, eval, init, train, calibrator, output
// where `calibrator` holds train.calibrator.
struct ExperimentConfig {
  std::string name = "run";
  // Which preset this config started from, recorded so the large-scale
  // hyperparameter presets are never mistaken for desk-scale ones.
  std::string preset;
  TaskConfig task;
  HeldOutConfig eval;
  InitConfig init;
  TrainConfig train;
  OutputConfig output;

  // Throws ConfigError naming the first offending field.
  void Validate() const;
};

// Unknown keys and wrong types throw ConfigError naming the dotted field.
ExperimentConfig ParseConfig(std::string_view json_text);
ExperimentConfig LoadConfig(const std::string& path);
// Canonical form: every field, keys sorted, 2-space indent.
std::string ToJsonText(const ExperimentConfig& cfg);

// "section.field=value". The value is read as JSON when it parses as JSON and
// as a bare string otherwise, so strategy=off and tau=0.25 both work.
void ApplyOverride(ExperimentConfig& cfg, std::string_view assignment);
void ApplyOverrides(ExperimentConfig& cfg, const std::vector<std::string>& assignments);

std::vector<std::string> PresetNames();
// Throws ConfigError("preset", ...) for an unknown name.
ExperimentConfig Preset(std::string_view name);

TaskDataset BuildTrainDataset(const ExperimentConfig& cfg);
std::optional<TaskDataset> BuildHeldOutDataset(const ExperimentConfig& cfg,
                                               int vocab_size);
PolicyParams BuildInitialPolicy(const ExperimentConfig& cfg, int vocab_size);
EvalOptions EvalOptionsFor(const ExperimentConfig& cfg);

}  // namespace adora

#endif  // ADORA_CONFIG_H_
