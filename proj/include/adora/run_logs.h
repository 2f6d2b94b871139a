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

#ifndef ADORA_RUN_LOGS_H_
#define ADORA_RUN_LOGS_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "adora/trainer.h"

namespace adora {

// Line-delimited JSON logs written by a training run. Every writer emits one
// complete record plus '\n'; every reader reports the 1-based line number of
// a malformed record through ParseError.
//
//   steps.jsonl     one StepStats per optimizer step
//   rollouts.jsonl  one GroupRecord per sampled group
//   epochs.jsonl    one EpochRecord per epoch

void WriteStepStats(std::ostream& out, const StepStats& stats);
std::vector<StepStats> ReadStepLog(std::istream& in);
std::vector<StepStats> ReadStepLogFile(const std::string& path);

void WriteGroupRecord(std::ostream& out, const GroupRecord& record);
std::vector<GroupRecord> ReadRolloutLog(std::istream& in);
std::vector<GroupRecord> ReadRolloutLogFile(const std::string& path);

void WriteEpochRecord(std::ostream& out, const EpochRecord& record);
std::vector<EpochRecord> ReadEpochLog(std::istream& in);
std::vector<EpochRecord> ReadEpochLogFile(const std::string& path);

}  // namespace adora

#endif  // ADORA_RUN_LOGS_H_
