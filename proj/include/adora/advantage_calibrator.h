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

#ifndef ADORA_ADVANTAGE_CALIBRATOR_H_
#define ADORA_ADVANTAGE_CALIBRATOR_H_

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "adora/policy.h"
#include "adora/task_env.h"

namespace adora {

// G trajectories sampled for one prompt.
struct RolloutGroup {
  TaskInstance instance;
  std::vector<Trajectory> trajectories;

  InstanceId instance_id() const { return instance.id; }
  int size() const { return static_cast<int>(trajectories.size()); }
};

// The per-rollout quantities calibration depends on. Recorded rollout logs
// carry exactly this, which is what makes offline replay possible.
struct GroupOutcomes {
  std::vector<double> rewards;
  std::vector<int> lengths;

  int size() const { return static_cast<int>(rewards.size()); }
};

GroupOutcomes OutcomesOf(const RolloutGroup& group);

struct SampleUtilityStats {
  std::optional<int> max_success_length;
  std::optional<double> mean_failure_length;
  double success_rate = 0.0;
  int successes = 0;
  int group_size = 0;
  bool has_success = false;
  bool has_failure = false;
};

enum class Strategy { kAttenuate, kAmplify, kOff };
enum class SampleClass { kTas, kTds };

// Which criterion marks a sample as TAS. kDefault resolves to kLength for
// attenuation and kJoint (length and difficulty) for amplification.
enum class Criterion { kDefault, kLength, kDifficulty, kJoint };

std::string_view ToString(Strategy s);
std::string_view ToString(SampleClass c);
std::string_view ToString(Criterion c);
Strategy ParseStrategy(std::string_view name);
SampleClass ParseSampleClass(std::string_view name);
Criterion ParseCriterion(std::string_view name);

struct CalibratorConfig {
  double tau = 0.5;
  double lambda_att = 0.1;
  double lambda_amp = 2.0;
  Strategy strategy = Strategy::kAmplify;
  Criterion criterion = Criterion::kDefault;
  double std_epsilon = 1e-6;
  // Instrumentation: when set, replaces the computed weight (classification
  // is still computed). Not part of any shipped preset.
  std::optional<double> weight_override;

  // Throws ConfigError naming the offending field under `prefix`.
  void Validate(std::string_view prefix = "calibrator") const;
};

struct ClassWeight {
  SampleClass classification = SampleClass::kTas;
  double weight = 1.0;
};

struct AdvantageSet {
  std::vector<double> raw;
  double weight = 1.0;
  std::vector<double> weighted;
  SampleClass classification = SampleClass::kTas;
  SampleUtilityStats stats;
};

// (r_i - mean) / std with the population standard deviation; all zeros when
// std < std_epsilon. Throws InputError for fewer than two rewards.
std::vector<double> NormalizeGroup(std::span<const double> rewards,
                                   double std_epsilon);

SampleUtilityStats ComputeStats(const GroupOutcomes& outcomes);
SampleUtilityStats ComputeStats(const RolloutGroup& group);

// Longest success strictly longer than the mean failure. All-success groups
// count as having the advantage, groups without a success do not.
bool LengthAdvantage(const SampleUtilityStats& stats);

// 0 < success_rate <= tau.
bool DifficultyAdvantage(const SampleUtilityStats& stats, double tau);

ClassWeight ClassifyAndWeight(const SampleUtilityStats& stats,
                              const CalibratorConfig& cfg);

AdvantageSet Calibrate(const GroupOutcomes& outcomes,
                       const CalibratorConfig& cfg);
AdvantageSet Calibrate(const RolloutGroup& group, const CalibratorConfig& cfg);

// True when every reward equals the first; such groups carry no gradient.
bool HasUniformReward(const GroupOutcomes& outcomes);

// Drops groups with uniform rewards, preserving order.
std::vector<RolloutGroup> DynamicSampleFilter(std::vector<RolloutGroup> groups);

// Throws InputError unless the group has G >= 2 trajectories that all belong
// to its instance.
void ValidateGroup(const RolloutGroup& group);

}  // namespace adora

#endif  // ADORA_ADVANTAGE_CALIBRATOR_H_
