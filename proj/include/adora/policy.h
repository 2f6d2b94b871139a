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

#ifndef ADORA_POLICY_H_
#define ADORA_POLICY_H_

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "adora/rng.h"
#include "adora/task_env.h"

namespace adora {

// Passed as `prev` for the first emitted token.
constexpr Token kStartToken = -1;

// Parameters of the tabular autoregressive softmax policy over V tokens
// (b = V-1 digits plus the terminator).
//
// The logits of step t are
//   prev_token_table[prev] + prompt_digit_table[digit] + bias
//     + shift_table[kind][(j - prev - digit) mod b]   (digit outputs j only)
// where `prev` is the previously emitted token (row V-1 before the first
// token) and `digit` is the prompt token at position t (row V-1 once t is past
// the end of the prompt). Row V-1 is free for both roles because the
// terminator is never a previous token and never a prompt digit.
//
// The shift table is a circular-offset feature shared across all states: row 0
// is used at the first step (prev counts as 0), row 1 afterwards. Past the end
// of the prompt the digit counts as 0, so the feature keeps repeating the
// running sum. Without it the additive tables cannot carry a sum from one step
// to the next.
//
// All values live in one flat buffer so the same type doubles as a gradient
// and an optimizer moment.
class PolicyParams {
 public:
  struct ArrayLayout {
    std::string name;
    int rows;
    int cols;
    std::size_t offset;
  };

  PolicyParams() = default;
  // Zero-initialized (uniform) policy. num_tokens >= 2.
  explicit PolicyParams(int num_tokens);

  int num_tokens() const { return num_tokens_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& prev_token(int row, Token tok) { return values_[PrevIndex(row, tok)]; }
  double& prompt_digit(int row, Token tok) { return values_[DigitIndex(row, tok)]; }
  double& shift(int kind, int offset) { return values_[ShiftIndex(kind, offset)]; }
  double& bias(Token tok) { return values_[BiasIndex(tok)]; }
  double prev_token(int row, Token tok) const { return values_[PrevIndex(row, tok)]; }
  double prompt_digit(int row, Token tok) const { return values_[DigitIndex(row, tok)]; }
  double shift(int kind, int offset) const { return values_[ShiftIndex(kind, offset)]; }
  double bias(Token tok) const { return values_[BiasIndex(tok)]; }

  std::size_t PrevIndex(int row, Token tok) const {
    return static_cast<std::size_t>(row * num_tokens_ + tok);
  }
  std::size_t DigitIndex(int row, Token tok) const {
    return table_size() + PrevIndex(row, tok);
  }
  std::size_t ShiftIndex(int kind, int offset) const {
    return 2 * table_size() +
           static_cast<std::size_t>(kind * (num_tokens_ - 1) + offset);
  }
  std::size_t BiasIndex(Token tok) const {
    return 2 * table_size() + 2 * static_cast<std::size_t>(num_tokens_ - 1) +
           static_cast<std::size_t>(tok);
  }

  // Named arrays in checkpoint order.
  std::vector<ArrayLayout> Layout() const;

  bool AllFinite() const;
  void SetZero();

  bool operator==(const PolicyParams&) const = default;

 private:
  std::size_t table_size() const {
    return static_cast<std::size_t>(num_tokens_ * num_tokens_);
  }

  int num_tokens_ = 0;
  std::vector<double> values_;
};

using PolicyGradient = PolicyParams;

// Stand-in for a pretrained starting point. Logit offsets:
//   copy_skill   shift row 0 at offset 0 (first token = first digit)
//   carry_skill  shift row 1 at offset 0 (keep adding digits)
//   stop_at_end  terminator once the prompt is exhausted
//   stop_mid     subtracted from the terminator while digits remain
// All zeros gives the uniform policy.
struct PriorInit {
  double copy_skill = 0.0;
  double carry_skill = 0.0;
  double stop_at_end = 0.0;
  double stop_mid = 0.0;

  bool operator==(const PriorInit&) const = default;
};

PolicyParams MakeInitialPolicy(int num_tokens, const PriorInit& prior);

enum class SnapshotTag { kOld, kReference };

// Frozen deep copy of a policy, used as the sampling policy of a batch and as
// the KL reference.
class PolicySnapshot {
 public:
  PolicySnapshot(const PolicyParams& params, SnapshotTag tag)
      : params_(params), tag_(tag) {}

  const PolicyParams& params() const { return params_; }
  SnapshotTag tag() const { return tag_; }

 private:
  PolicyParams params_;
  SnapshotTag tag_;
};

struct Trajectory {
  InstanceId instance_id = 0;
  // Terminator included when it was emitted.
  std::vector<Token> tokens;
  std::vector<double> logprobs_new;
  std::vector<double> logprobs_old;
  Verdict verdict;
};

struct PolicyState {
  int prev_row = 0;
  int digit_row = 0;
};

PolicyState StateAt(const TaskInstance& instance, Token prev, int step,
                    int num_tokens);

// Additive logits of one state. `out` has num_tokens entries.
void ComputeLogits(const PolicyParams& params, PolicyState state,
                   std::span<double> out);

// Numerically stable log-softmax; throws NumericalError on non-finite input.
void LogSoftmax(std::span<const double> logits, std::span<double> out);

// Routes a gradient with respect to one state's logits to every table entry
// that contributed to them.
void AddLogitGradient(PolicyGradient& grad, PolicyState state,
                      std::span<const double> dlogits, double scale = 1.0);

// Exact KL(p || q) given log-probabilities.
double CategoricalKl(std::span<const double> logp, std::span<const double> logq);

std::vector<double> TokenDistribution(const PolicyParams& params,
                                      const TaskInstance& instance, Token prev,
                                      int step);

// Samples at temperature 1 until the terminator or max_len tokens. Both
// logprob arrays are filled from `params` (the sampling policy).
Trajectory SampleTrajectory(const PolicyParams& params,
                            const TaskInstance& instance, int max_len,
                            RngStream& rng);

// Argmax decoding; ties go to the lowest token id.
std::vector<Token> GreedyDecode(const PolicyParams& params,
                                const TaskInstance& instance, int max_len);

struct LogProbResult {
  std::vector<double> logprobs;
  // Gradient of the summed log-probability.
  PolicyGradient gradient;
};

LogProbResult LogProbAndGrad(const PolicyParams& params,
                             const TaskInstance& instance,
                             std::span<const Token> tokens);

// KL(pi || ref) at every visited state of `tokens`.
std::vector<double> KlDivergence(const PolicyParams& params,
                                 const PolicySnapshot& ref,
                                 const TaskInstance& instance,
                                 std::span<const Token> tokens);

// Flat JSON checkpoint:
//   {"format":"adora-policy/1","num_tokens":6,
//    "arrays":[{"name":"prev_token_table","shape":[6,6],"data":[...]}, ...]}
void WriteCheckpoint(std::ostream& out, const PolicyParams& params);
PolicyParams ReadCheckpoint(std::istream& in);
void SaveCheckpoint(const std::string& path, const PolicyParams& params);
PolicyParams LoadCheckpoint(const std::string& path);

}  // namespace adora

#endif  // ADORA_POLICY_H_
