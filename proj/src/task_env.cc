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

#include "adora/task_env.h"

#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "adora/error.h"
#include "adora/rng.h"
#include "json.hpp"

namespace adora {
namespace {

using nlohmann::json;

constexpr std::string_view kDatasetFormat = "adora-dataset/1";

void CheckModChainOptions(const ModChainOptions& o) {
  if (o.count < 1) throw ConfigError("task.count", "must be >= 1");
  if (o.base < kMinBase || o.base > kMaxBase) {
    throw ConfigError("task.base", "must be in [2, 10]");
  }
  if (o.min_chain_len < kMinChainLen || o.max_chain_len > kMaxChainLen ||
      o.min_chain_len > o.max_chain_len) {
    throw ConfigError("task.chain_len",
                      "must satisfy 2 <= min_chain_len <= max_chain_len <= 12");
  }
  if (o.decoy_rate && !(*o.decoy_rate >= 0.0 && *o.decoy_rate <= 1.0)) {
    throw ConfigError("task.decoy_rate", "must be in [0, 1]");
  }
}

}  // namespace

std::string_view ToString(TaskFamily family) {
  switch (family) {
    case TaskFamily::kModChain:
      return "mod_chain";
    case TaskFamily::kFixedAnswer:
      return "fixed_answer";
  }
  return "unknown";
}

TaskFamily ParseTaskFamily(std::string_view name) {
  if (name == "mod_chain") return TaskFamily::kModChain;
  if (name == "fixed_answer") return TaskFamily::kFixedAnswer;
  throw ConfigError("task.family", "unknown task family '" + std::string(name) +
                                       "' (expected mod_chain|fixed_answer)");
}

std::string TaskDataset::Descriptor() const {
  std::ostringstream s;
  s << ToString(family) << "/V" << vocab_size << "/n" << instances.size()
    << "/seed" << seed;
  return s.str();
}

Token ModChainAnswer(std::span<const Token> digits, int base) {
  long sum = std::accumulate(digits.begin(), digits.end(), 0L);
  return static_cast<Token>(sum % base);
}

TaskDataset GenerateModChain(int count, int base, int chain_len,
                             std::uint64_t seed) {
  ModChainOptions o;
  o.count = count;
  o.base = base;
  o.min_chain_len = chain_len;
  o.max_chain_len = chain_len;
  o.seed = seed;
  return GenerateModChain(o);
}

TaskDataset GenerateModChain(const ModChainOptions& o) {
  CheckModChainOptions(o);
  TaskDataset ds;
  ds.vocab_size = o.base + 1;
  ds.family = TaskFamily::kModChain;
  ds.seed = o.seed;
  ds.instances.reserve(o.count);

  // Which instances carry the decoy is decided up front so the rate is exact.
  std::vector<char> decoy(o.count, 0);
  if (o.decoy_rate) {
    const int n_decoy =
        static_cast<int>(std::lround(*o.decoy_rate * o.count));
    std::fill(decoy.begin(), decoy.begin() + n_decoy, 1);
    RngStream pick(DeriveSeed({o.seed, 0xdec0ULL}));
    pick.Shuffle(std::span<char>(decoy));
  }

  RngStream rng(DeriveSeed({o.seed, 0x7a5cULL}));
  const int span = o.max_chain_len - o.min_chain_len + 1;
  for (int i = 0; i < o.count; ++i) {
    TaskInstance inst;
    inst.id = o.id_offset + static_cast<InstanceId>(i);
    inst.difficulty =
        o.min_chain_len + static_cast<int>(rng.Below(static_cast<std::uint64_t>(span)));
    inst.prompt.resize(inst.difficulty);
    while (true) {
      for (Token& d : inst.prompt) {
        d = static_cast<Token>(rng.Below(static_cast<std::uint64_t>(o.base)));
      }
      inst.answer = ModChainAnswer(inst.prompt, o.base);
      if (!o.decoy_rate) break;
      const bool first_matches = inst.prompt.front() == inst.answer;
      if (first_matches == static_cast<bool>(decoy[i])) break;
    }
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

TaskDataset GenerateFixedAnswer(int count, Token answer, std::uint64_t seed,
                                int num_digits) {
  if (count < 1) throw ConfigError("task.count", "must be >= 1");
  if (num_digits < 1) throw ConfigError("task.base", "must be >= 1");
  if (answer < 0 || answer >= num_digits) {
    throw ConfigError("task.answer", "must be a digit token below " +
                                         std::to_string(num_digits));
  }
  TaskDataset ds;
  ds.vocab_size = num_digits + 1;
  ds.family = TaskFamily::kFixedAnswer;
  ds.seed = seed;
  for (int i = 0; i < count; ++i) {
    ds.instances.push_back(
        TaskInstance{static_cast<InstanceId>(i), {0}, answer, 1});
  }
  return ds;
}

Verdict Verify(const TaskInstance& instance, std::span<const Token> response,
               Token terminator) {
  Verdict v;
  std::size_t end = response.size();
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (response[i] == terminator) {
      end = i;
      break;
    }
  }
  v.response_length = static_cast<int>(end);
  v.success = end > 0 && response[end - 1] == instance.answer;
  v.reward = v.success ? 1.0 : 0.0;
  return v;
}

void ValidateDataset(const TaskDataset& ds) {
  if (ds.vocab_size < 2) throw InputError("dataset vocab_size must be >= 2");
  for (const TaskInstance& inst : ds.instances) {
    const std::string where = "instance " + std::to_string(inst.id) + ": ";
    if (inst.prompt.empty()) throw InputError(where + "empty prompt");
    for (Token t : inst.prompt) {
      if (t < 0 || t >= ds.vocab_size) {
        throw InputError(where + "prompt token out of range");
      }
    }
    if (inst.answer < 0 || inst.answer >= ds.terminator()) {
      throw InputError(where + "answer must be a digit token");
    }
    if (ds.family == TaskFamily::kModChain &&
        inst.answer != ModChainAnswer(inst.prompt, ds.num_digits())) {
      throw InputError(where + "answer does not match the mod_chain rule");
    }
    if (inst.difficulty < 1) throw InputError(where + "difficulty must be >= 1");
  }
}

void WriteDataset(std::ostream& out, const TaskDataset& ds) {
  json header = {{"format", kDatasetFormat},
                 {"task_family", ToString(ds.family)},
                 {"vocab_size", ds.vocab_size},
                 {"seed", ds.seed},
                 {"count", ds.instances.size()}};
  out << header.dump() << '\n';
  for (const TaskInstance& inst : ds.instances) {
    json rec = {{"instance_id", inst.id},
                {"prompt", inst.prompt},
                {"answer", inst.answer},
                {"difficulty", inst.difficulty}};
    out << rec.dump() << '\n';
  }
}

TaskDataset ReadDataset(std::istream& in) {
  TaskDataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
      if (!have_header) {
        if (rec.value("format", "") != kDatasetFormat) {
          throw ParseError(lineno, "missing dataset header");
        }
        ds.family = ParseTaskFamily(rec.at("task_family").get<std::string>());
        ds.vocab_size = rec.at("vocab_size").get<int>();
        ds.seed = rec.at("seed").get<std::uint64_t>();
        have_header = true;
        continue;
      }
      TaskInstance inst;
      inst.id = rec.at("instance_id").get<InstanceId>();
      inst.prompt = rec.at("prompt").get<std::vector<Token>>();
      inst.answer = rec.at("answer").get<Token>();
      inst.difficulty = rec.at("difficulty").get<int>();
      ds.instances.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const ConfigError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (!have_header) throw ParseError(0, "empty dataset file");
  try {
    ValidateDataset(ds);
  } catch (const InputError& e) {
    throw ParseError(0, e.what());
  }
  return ds;
}

void SaveDataset(const std::string& path, const TaskDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  WriteDataset(out, ds);
  if (!out) throw IoError("write failed: " + path);
}

TaskDataset LoadDataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return ReadDataset(in);
}

}  // namespace adora
