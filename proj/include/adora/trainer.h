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

#ifndef ADORA_TRAINER_H_
#define ADORA_TRAINER_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "adora/advantage_calibrator.h"
#include "adora/policy.h"
#include "adora/task_env.h"

namespace adora {

enum class OptimizerKind { kSgd, kAdaptiveMoments };
enum class LossAgg { kResponseMean, kTokenMean };

std::string_view ToString(OptimizerKind k);
std::string_view ToString(LossAgg k);
OptimizerKind ParseOptimizerKind(std::string_view name);
LossAgg ParseLossAgg(std::string_view name);

// Defaults follow the LLM hyperparameter table (G=8, batch 256/128, lr 1e-6,
// KL 0.001). The shipped "desk" preset overrides them for fast CPU runs.
struct TrainConfig {
  int group_size = 8;
  int train_batch_size = 256;
  int mini_batch_size = 128;
  double clip_low = 0.2;
  double clip_high = 0.2;
  double kl_coeff = 0.001;
  double learning_rate = 1e-6;
  OptimizerKind optimizer = OptimizerKind::kAdaptiveMoments;
  // Passes over the dataset.
  int epochs = 1;
  // Token cap per response, terminator included. 0 means
  // max_response_factor x the instance's difficulty.
  int max_response_len = 0;
  int max_response_factor = 3;
  LossAgg loss_agg = LossAgg::kResponseMean;
  std::uint64_t seed = 0;
  CalibratorConfig calibrator;
  bool dapo_filter = false;

  // Throws ConfigError naming the offending field under `prefix`.
  void Validate(std::string_view prefix = "train") const;
  int MaxLenFor(const TaskInstance& instance) const;
};

// Moment-scheme constants (fixed, conventional values).
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

// Gradient-ascent optimizer with its own moment state.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, int num_tokens);

  // theta += update(grad). Throws NumericalError (and leaves params and
  // state untouched) when the gradient is not finite.
  void Step(PolicyParams& params, const PolicyGradient& grad);

  long steps_taken() const { return t_; }

 private:
  OptimizerKind kind_;
  double lr_;
  long t_ = 0;
  PolicyParams m_;
  PolicyParams v_;
};

struct StepStats {
  int step = 0;
  int epoch = 0;
  double mean_reward = 0.0;
  // Negated surrogate objective, averaged over the step's mini-batches.
  double surrogate_loss = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  int tas_count = 0;
  int tds_count = 0;
  int filtered_count = 0;
  double mean_weight = 0.0;
  double mean_response_length = 0.0;

  bool operator==(const StepStats&) const = default;
};

// One group's calibration as written to the rollout log.
struct GroupRecord {
  int step = 0;
  int epoch = 0;
  InstanceId instance_id = 0;
  int difficulty = 0;
  GroupOutcomes outcomes;
  bool filtered = false;
  AdvantageSet advantages;
};

struct StepRecord {
  StepStats stats;
  std::vector<GroupRecord> groups;
};

struct EpochEntry {
  InstanceId instance_id = 0;
  int difficulty = 0;
  SampleClass classification = SampleClass::kTds;
  double success_rate = 0.0;
  double weight = 1.0;
  bool filtered = false;

  bool operator==(const EpochEntry&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  std::vector<EpochEntry> entries;

  bool operator==(const EpochRecord&) const = default;
};

std::vector<RolloutGroup> RolloutBatch(const PolicySnapshot& old,
                                       std::span<const TaskInstance> batch,
                                       const TrainConfig& cfg, int epoch);

struct SurrogateResult {
  double objective = 0.0;
  PolicyGradient gradient;
  int tokens = 0;
  int clipped_tokens = 0;
  double kl_sum = 0.0;
  int skipped_trajectories = 0;
};

// Clipped surrogate minus the KL penalty over a mini-batch of groups.
// Importance ratios use the log-probabilities recorded at sampling time, so
// the sampling snapshot is not needed here. With response_mean each group
// contributes (1/G) sum_i (1/|o_i|) sum_t and the mini-batch value is the mean
// over groups; token_mean divides the total over all tokens of the mini-batch.
SurrogateResult SurrogateObjective(const PolicyParams& policy,
                                   const PolicySnapshot& ref,
                                   std::span<const RolloutGroup> groups,
                                   std::span<const AdvantageSet> advantages,
                                   const TrainConfig& cfg);

struct MiniBatchView {
  int step;
  const PolicyParams& policy;
  const PolicySnapshot& ref;
  std::span<const RolloutGroup> groups;
  std::span<const AdvantageSet> advantages;
  const SurrogateResult& result;
};

struct TrainCallbacks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
  // Called after every `checkpoint_every` steps.
  std::function<void(int step, const PolicyParams&)> on_checkpoint;
  int checkpoint_every = 0;
  // Called before each optimizer update; used by gradient checks.
  std::function<void(const MiniBatchView&)> on_minibatch;
};

struct TrainResult {
  PolicyParams params;
  std::vector<StepStats> steps;
  std::vector<EpochRecord> epochs;
};

// Runs the full loop. The reference policy is frozen at `init` (zeros when
// not given). Deterministic in cfg.seed.
TrainResult Train(const TaskDataset& dataset, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {},
                  std::optional<PolicyParams> init = std::nullopt);

struct TasTraceSummary {
  struct Counts {
    int tas = 0;
    int tds = 0;
    bool operator==(const Counts&) const = default;
  };
  struct EpochCounts {
    int epoch = 0;
    Counts total;
    int filtered = 0;
    std::map<int, Counts> by_difficulty;
    bool operator==(const EpochCounts&) const = default;
  };
  std::vector<EpochCounts> per_epoch;
  // Epochs in which each instance was TAS (instances never TAS map to {}).
  std::map<InstanceId, std::vector<int>> tas_epochs;
};

// Filtered entries are counted separately and never as TAS or TDS.
TasTraceSummary SummarizeTasTrace(std::span<const EpochRecord> records);

}  // namespace adora

#endif  // ADORA_TRAINER_H_
