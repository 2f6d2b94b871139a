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

#ifndef ADORA_EXPERIMENT_H_
#define ADORA_EXPERIMENT_H_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adora/config.h"
#include "adora/metrics_eval.h"
#include "adora/trainer.h"

namespace adora {

// Hex SHA-1 of "blob <size>\0<content>", the same digest git gives a file.
std::string GitBlobHash(std::string_view content);

struct RunManifest {
  std::string run_id;
  std::string preset;
  std::string config_json;
  std::string dataset_descriptor;
  // Hash over the resolved config, the dataset file and the initial policy.
  std::string content_hash;
  std::string output_dir;

  std::string ToJsonText() const;
};

// Resolved inputs of a training run.
struct RunInputs {
  ExperimentConfig config;
  TaskDataset dataset;
  std::optional<TaskDataset> held_out;
  PolicyParams init;
  RunManifest manifest;
};

// Builds datasets and the initial policy and fills in the manifest. When
// `output_dir` is empty the run lands in <output_root>/<run_id>.
RunInputs PrepareRun(const ExperimentConfig& cfg, const std::string& output_dir,
                     const std::string& output_root);

struct RunOutcome {
  TrainResult result;
  EvalReport train_eval;
  std::optional<EvalReport> held_out_eval;
};

// Writes, in order: manifest.json, config.json, dataset files and the initial
// checkpoint, then streams steps.jsonl / epochs.jsonl / rollouts.jsonl during
// training, then final_checkpoint.json, curves.csv, tas_trace.json and the
// evaluation reports.
RunOutcome ExecuteRun(const RunInputs& inputs);

// Files inside a run directory.
namespace run_files {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kDataset = "dataset.jsonl";
inline constexpr const char* kHeldOut = "heldout.jsonl";
inline constexpr const char* kInitCheckpoint = "init_checkpoint.json";
inline constexpr const char* kSteps = "steps.jsonl";
inline constexpr const char* kEpochs = "epochs.jsonl";
inline constexpr const char* kRollouts = "rollouts.jsonl";
inline constexpr const char* kFinalCheckpoint = "final_checkpoint.json";
inline constexpr const char* kCurves = "curves.csv";
inline constexpr const char* kTasTrace = "tas_trace.json";
inline constexpr const char* kEvalTrain = "eval_train.json";
inline constexpr const char* kEvalHeldOut = "eval_heldout.json";
}  // namespace run_files

// One axis of a sweep or replay grid: a dotted config key and its values.
struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

// "tau=0.25,0.5". Short names tau, lambda_att, lambda_amp, strategy,
// criterion and dapo_filter expand to their dotted keys. Only calibrator
// fields and train.dapo_filter may be swept.
GridAxis ParseGridAxis(std::string_view spec);

struct GridPoint {
  std::string label;  // "tau=0.25,strategy=off"
  std::vector<std::string> assignments;
};

// Cartesian product in axis order, last axis fastest. Throws ConfigError
// ("grid", ...) when the grid is empty.
std::vector<GridPoint> ExpandGrid(std::span<const GridAxis> axes);

struct ReplayEntry {
  int step = 0;
  InstanceId instance_id = 0;
  bool filtered = false;
  SampleClass classification = SampleClass::kTds;
  double weight = 1.0;
  SampleClass logged_classification = SampleClass::kTds;
  double logged_weight = 1.0;
};

struct ReplayTable {
  std::string label;
  CalibratorConfig calibrator;
  std::vector<ReplayEntry> entries;
  int tas = 0;
  int tds = 0;
  double mean_weight = 0.0;
  // Groups whose recomputed classification and weight equal the logged ones.
  int matches = 0;
};

// Recomputes classification and weight of every logged group offline.
ReplayTable Replay(std::span<const GroupRecord> records,
                   const CalibratorConfig& calibrator, std::string label = "");

std::string ToJson(const ReplayTable& table);
std::string FormatReplaySummary(std::span<const ReplayTable> tables);

}  // namespace adora

#endif  // ADORA_EXPERIMENT_H_
