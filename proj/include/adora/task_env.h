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

#ifndef ADORA_TASK_ENV_H_
#define ADORA_TASK_ENV_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace adora {

// Token ids are small non-negative integers. In a dataset with V tokens the
// ids 0..V-2 are digits and V-1 is the terminator.
using Token = int;
using InstanceId = std::uint64_t;

enum class TaskFamily { kModChain, kFixedAnswer };

std::string_view ToString(TaskFamily family);
TaskFamily ParseTaskFamily(std::string_view name);

struct TaskInstance {
  InstanceId id = 0;
  std::vector<Token> prompt;
  Token answer = 0;
  // Chain length k for mod_chain, 1 for fixed_answer.
  int difficulty = 1;

  bool operator==(const TaskInstance&) const = default;
};

struct TaskDataset {
  std::vector<TaskInstance> instances;
  int vocab_size = 0;
  TaskFamily family = TaskFamily::kModChain;
  std::uint64_t seed = 0;

  Token terminator() const { return vocab_size - 1; }
  int num_digits() const { return vocab_size - 1; }
  // Short human-readable descriptor, e.g. "mod_chain/V6/n64/seed7".
  std::string Descriptor() const;

  bool operator==(const TaskDataset&) const = default;
};

struct Verdict {
  double reward = 0.0;
  bool success = false;
  // Emitted tokens before the terminator (all tokens if none was emitted).
  int response_length = 0;
};

struct ModChainOptions {
  int count = 1;
  int base = 5;
  int min_chain_len = 4;
  int max_chain_len = 4;
  std::uint64_t seed = 0;
  // When set, exactly round(decoy_rate * count) instances have their first
  // digit equal to the answer and all others have it different. Unset leaves
  // digits unconstrained.
  std::optional<double> decoy_rate;
  // Added to the per-instance index to form the instance id.
  InstanceId id_offset = 0;
};

constexpr int kMinBase = 2;
constexpr int kMaxBase = 10;
constexpr int kMinChainLen = 2;
constexpr int kMaxChainLen = 12;

// (sum of digits) mod base.
Token ModChainAnswer(std::span<const Token> digits, int base);

TaskDataset GenerateModChain(int count, int base, int chain_len,
                             std::uint64_t seed);
TaskDataset GenerateModChain(const ModChainOptions& options);

// Every instance has the one-token prompt {0} and the same answer.
// `num_digits` sets the vocabulary (num_digits + terminator).
TaskDataset GenerateFixedAnswer(int count, Token answer, std::uint64_t seed,
                                int num_digits = 4);

// The answer is read from the token right before the first terminator, or
// from the last token when no terminator was emitted. Anything earlier is
// scratch space.
Verdict Verify(const TaskInstance& instance, std::span<const Token> response,
               Token terminator);

// Checks a dataset's invariants; throws InputError on the first violation.
void ValidateDataset(const TaskDataset& dataset);

// Line-delimited JSON. The first line is a header record carrying the
// vocabulary, family and seed; each following line is one instance:
//   {"instance_id":3,"prompt":[1,4,0,2],"answer":2,"difficulty":4}
void WriteDataset(std::ostream& out, const TaskDataset& dataset);
TaskDataset ReadDataset(std::istream& in);
void SaveDataset(const std::string& path, const TaskDataset& dataset);
TaskDataset LoadDataset(const std::string& path);

}  // namespace adora

#endif  // ADORA_TASK_ENV_H_
