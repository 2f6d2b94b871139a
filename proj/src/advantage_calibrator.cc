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

#include "adora/advantage_calibrator.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "adora/error.h"

namespace adora {

std::string_view ToString(Strategy s) {
  switch (s) {
    case Strategy::kAttenuate:
      return "attenuate";
    case Strategy::kAmplify:
      return "amplify";
    case Strategy::kOff:
      return "off";
  }
  return "unknown";
}

std::string_view ToString(SampleClass c) {
  return c == SampleClass::kTas ? "TAS" : "TDS";
}

std::string_view ToString(Criterion c) {
  switch (c) {
    case Criterion::kDefault:
      return "default";
    case Criterion::kLength:
      return "length";
    case Criterion::kDifficulty:
      return "difficulty";
    case Criterion::kJoint:
      return "joint";
  }
  return "unknown";
}

Strategy ParseStrategy(std::string_view name) {
  if (name == "attenuate") return Strategy::kAttenuate;
  if (name == "amplify") return Strategy::kAmplify;
  if (name == "off") return Strategy::kOff;
  throw ConfigError("calibrator.strategy",
                    "unknown strategy '" + std::string(name) +
                        "' (expected attenuate|amplify|off)");
}

SampleClass ParseSampleClass(std::string_view name) {
  if (name == "TAS") return SampleClass::kTas;
  if (name == "TDS") return SampleClass::kTds;
  throw InputError("unknown classification '" + std::string(name) + "'");
}

Criterion ParseCriterion(std::string_view name) {
  if (name == "default") return Criterion::kDefault;
  if (name == "length") return Criterion::kLength;
  if (name == "difficulty") return Criterion::kDifficulty;
  if (name == "joint") return Criterion::kJoint;
  throw ConfigError("calibrator.criterion",
                    "unknown criterion '" + std::string(name) +
                        "' (expected default|length|difficulty|joint)");
}

void CalibratorConfig::Validate(std::string_view prefix) const {
  const std::string p(prefix);
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError(p + ".tau", "must be in (0, 1]");
  if (!(lambda_att > 0.0 && lambda_att < 1.0)) {
    throw ConfigError(p + ".lambda_att", "must be in (0, 1)");
  }
  if (!(lambda_amp > 1.0) || !std::isfinite(lambda_amp)) {
    throw ConfigError(p + ".lambda_amp", "must be > 1");
  }
  if (!(std_epsilon > 0.0) || !std::isfinite(std_epsilon)) {
    throw ConfigError(p + ".std_epsilon", "must be > 0");
  }
  if (weight_override && !(*weight_override > 0.0)) {
    throw ConfigError(p + ".weight_override", "must be > 0");
  }
}

GroupOutcomes OutcomesOf(const RolloutGroup& group) {
  GroupOutcomes o;
  o.rewards.reserve(group.trajectories.size());
  o.lengths.reserve(group.trajectories.size());
  for (const Trajectory& t : group.trajectories) {
    o.rewards.push_back(t.verdict.reward);
    o.lengths.push_back(t.verdict.response_length);
  }
  return o;
}

std::vector<double> NormalizeGroup(std::span<const double> rewards,
                                   double std_epsilon) {
  const std::size_t g = rewards.size();
  if (g < 2) throw InputError("group normalization needs G >= 2");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(g));
  std::vector<double> adv(g, 0.0);
  if (sd < std_epsilon) return adv;
  for (std::size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

SampleUtilityStats ComputeStats(const GroupOutcomes& o) {
  if (o.rewards.size() != o.lengths.size()) {
    throw InputError("rewards and lengths differ in size");
  }
  SampleUtilityStats s;
  s.group_size = o.size();
  long fail_len_sum = 0;
  int failures = 0;
  for (int i = 0; i < o.size(); ++i) {
    if (o.rewards[i] == 1.0) {
      ++s.successes;
      s.max_success_length = std::max(s.max_success_length.value_or(0), o.lengths[i]);
    } else {
      ++failures;
      fail_len_sum += o.lengths[i];
    }
  }
  s.has_success = s.successes > 0;
  s.has_failure = failures > 0;
  if (s.has_failure) {
    s.mean_failure_length =
        static_cast<double>(fail_len_sum) / static_cast<double>(failures);
  }
  s.success_rate =
      s.group_size == 0 ? 0.0 : static_cast<double>(s.successes) / s.group_size;
  return s;
}

SampleUtilityStats ComputeStats(const RolloutGroup& group) {
  return ComputeStats(OutcomesOf(group));
}

bool LengthAdvantage(const SampleUtilityStats& s) {
  if (!s.has_success) return false;
  if (!s.has_failure) return true;
  return static_cast<double>(*s.max_success_length) > *s.mean_failure_length;
}

bool DifficultyAdvantage(const SampleUtilityStats& s, double tau) {
  return s.success_rate > 0.0 && s.success_rate <= tau;
}

ClassWeight ClassifyAndWeight(const SampleUtilityStats& stats,
                              const CalibratorConfig& cfg) {
  Criterion criterion = cfg.criterion;
  if (criterion == Criterion::kDefault) {
    criterion = cfg.strategy == Strategy::kAttenuate ? Criterion::kLength
                                                     : Criterion::kJoint;
  }
  bool advantaged = false;
  switch (criterion) {
    case Criterion::kLength:
      advantaged = LengthAdvantage(stats);
      break;
    case Criterion::kDifficulty:
      advantaged = DifficultyAdvantage(stats, cfg.tau);
      break;
    case Criterion::kJoint:
    case Criterion::kDefault:
      advantaged = LengthAdvantage(stats) && DifficultyAdvantage(stats, cfg.tau);
      break;
  }

  ClassWeight cw;
  cw.classification = advantaged ? SampleClass::kTas : SampleClass::kTds;
  switch (cfg.strategy) {
    case Strategy::kAttenuate:
      cw.weight = advantaged ? 1.0 : cfg.lambda_att;
      break;
    case Strategy::kAmplify:
      cw.weight = advantaged ? cfg.lambda_amp : 1.0;
      break;
    case Strategy::kOff:
      // Classification is kept as a diagnostic; the update is vanilla.
      cw.weight = 1.0;
      break;
  }
  if (cfg.weight_override) cw.weight = *cfg.weight_override;
  return cw;
}

AdvantageSet Calibrate(const GroupOutcomes& outcomes,
                       const CalibratorConfig& cfg) {
  AdvantageSet a;
  a.raw = NormalizeGroup(outcomes.rewards, cfg.std_epsilon);
  a.stats = ComputeStats(outcomes);
  const ClassWeight cw = ClassifyAndWeight(a.stats, cfg);
  a.classification = cw.classification;
  a.weight = cw.weight;
  a.weighted.resize(a.raw.size());
  for (std::size_t i = 0; i < a.raw.size(); ++i) a.weighted[i] = a.weight * a.raw[i];
  return a;
}

AdvantageSet Calibrate(const RolloutGroup& group, const CalibratorConfig& cfg) {
  ValidateGroup(group);
  return Calibrate(OutcomesOf(group), cfg);
}

bool HasUniformReward(const GroupOutcomes& o) {
  return std::all_of(o.rewards.begin(), o.rewards.end(),
                     [&](double r) { return r == o.rewards.front(); });
}

std::vector<RolloutGroup> DynamicSampleFilter(std::vector<RolloutGroup> groups) {
  std::erase_if(groups, [](const RolloutGroup& g) {
    return HasUniformReward(OutcomesOf(g));
  });
  return groups;
}

void ValidateGroup(const RolloutGroup& group) {
  if (group.size() < 2) throw InputError("rollout group needs G >= 2");
  for (const Trajectory& t : group.trajectories) {
    if (t.instance_id != group.instance_id()) {
      throw InputError("trajectory instance id differs from its group");
    }
  }
}

}  // namespace adora
