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

#ifndef ADORA_METRICS_EVAL_H_
#define ADORA_METRICS_EVAL_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adora/policy.h"
#include "adora/task_env.h"
#include "adora/trainer.h"

namespace adora {

constexpr int kDefaultTrailingWindow = 10;

struct EvalOptions {
  // Greedy repeats per instance. Identical under greedy decoding; kept so an
  // avg@k protocol can be stated explicitly.
  int repeats = 1;
  // Same meaning as the TrainConfig fields.
  int max_response_len = 0;
  int max_response_factor = 3;

  int MaxLenFor(const TaskInstance& instance) const;
};

struct EvalReport {
  std::string dataset_id;
  int samples = 0;
  int successes = 0;
  // successes / samples.
  double accuracy = 0.0;
  std::map<int, double> per_difficulty_accuracy;
  std::map<int, int> per_difficulty_samples;
  double mean_response_length = 0.0;
};

// Throws InputError on an empty dataset or repeats < 1.
EvalReport EvaluateGreedy(const PolicyParams& policy, const TaskDataset& dataset,
                          const EvalOptions& options = {});

struct SuccessCount {
  int n = 0;
  int c = 0;
};

// 1 - C(n-c, k) / C(n, k), as a running product so nothing overflows.
// Throws InputError unless 0 <= c <= n and 1 <= k <= n.
double PassAtK(int n, int c, int k);

struct PassAtKCurve {
  std::vector<int> ks;
  // per_instance[i][j] is instance i at ks[j].
  std::vector<std::vector<double>> per_instance;
  std::vector<double> mean;
};

PassAtKCurve ComputePassAtK(std::span<const SuccessCount> counts,
                            std::span<const int> ks);

// n temperature-1 samples per instance, seeded per (seed, instance, sample).
std::vector<SuccessCount> SampleSuccessCounts(const PolicyParams& policy,
                                              const TaskDataset& dataset, int n,
                                              std::uint64_t seed,
                                              const EvalOptions& options = {});

// Mean reward over the trailing window ending at each step; entries before
// the first full window are empty.
std::vector<std::optional<double>> TrailingMeanReward(
    std::span<const StepStats> stats, int window = kDefaultTrailingWindow);

// Index of the first step whose full trailing window averages >= threshold.
// Throws InputError unless threshold is in (0, 1].
std::optional<int> ConvergenceStep(std::span<const StepStats> stats,
                                   double threshold,
                                   int window = kDefaultTrailingWindow);

// Mean reward of the last min(window, size) steps; 0 for an empty log.
double FinalTrailingReward(std::span<const StepStats> stats,
                           int window = kDefaultTrailingWindow);

struct RunSummary {
  std::string label;
  int steps = 0;
  std::optional<int> convergence_step;
  double final_trailing_reward = 0.0;
  long total_tas = 0;
  long total_tds = 0;
  std::vector<int> tas_series;
  std::vector<int> tds_series;
};

RunSummary SummarizeRun(std::string label, std::span<const StepStats> stats,
                        double threshold, int window = kDefaultTrailingWindow);

struct ComparisonReport {
  double threshold = 0.0;
  int window = kDefaultTrailingWindow;
  RunSummary a;
  RunSummary b;
  // b minus a. Empty when either run never converged.
  std::optional<int> convergence_delta;
  double final_reward_delta = 0.0;
  long tas_delta = 0;
  long tds_delta = 0;
};

ComparisonReport CompareStats(const RunSummary& a, const RunSummary& b,
                              double threshold, int window);

// Reads two steps.jsonl logs. Missing file: IoError. Bad line: ParseError.
ComparisonReport CompareRuns(const std::string& path_a, const std::string& path_b,
                             double threshold, int window = kDefaultTrailingWindow);

struct SpearmanResult {
  double rho = 0.0;
  // Two-sided, from the t approximation with n-2 degrees of freedom.
  double p_value = 1.0;
  int n = 0;
};

// Average ranks for ties. Needs n >= 3 and equal lengths.
SpearmanResult Spearman(std::span<const double> x, std::span<const double> y);

// Reports as JSON and as fixed-width text tables.
std::string ToJson(const EvalReport& report);
std::string ToJson(const PassAtKCurve& curve);
std::string ToJson(const ComparisonReport& report);
std::string FormatTable(const EvalReport& report);
std::string FormatTable(const ComparisonReport& report);

// One row per step, header included.
void WriteCurveCsv(std::ostream& out, std::span<const StepStats> stats,
                   int window = kDefaultTrailingWindow);

}  // namespace adora

#endif  // ADORA_METRICS_EVAL_H_
