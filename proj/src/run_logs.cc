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

#include "adora/run_logs.h"

#include <fstream>
#include <istream>
#include <ostream>

#include "adora/error.h"
#include "json.hpp"

namespace adora {
namespace {

using nlohmann::json;

template <typename Parse>
auto ReadLines(std::istream& in, Parse parse) {
  std::vector<decltype(parse(json{}))> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const InputError& e) {
      throw ParseError(lineno, e.what());
    } catch (const ConfigError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

std::ifstream OpenOrThrow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

json StatsToJson(const SampleUtilityStats& s) {
  json j = {{"success_rate", s.success_rate},
            {"successes", s.successes},
            {"group_size", s.group_size},
            {"max_success_length", nullptr},
            {"mean_failure_length", nullptr}};
  if (s.max_success_length) j["max_success_length"] = *s.max_success_length;
  if (s.mean_failure_length) j["mean_failure_length"] = *s.mean_failure_length;
  return j;
}

}  // namespace

void WriteStepStats(std::ostream& out, const StepStats& s) {
  json j = {{"step", s.step},
            {"epoch", s.epoch},
            {"mean_reward", s.mean_reward},
            {"surrogate_loss", s.surrogate_loss},
            {"mean_kl", s.mean_kl},
            {"clip_fraction", s.clip_fraction},
            {"tas_count", s.tas_count},
            {"tds_count", s.tds_count},
            {"filtered_count", s.filtered_count},
            {"mean_weight", s.mean_weight},
            {"mean_response_length", s.mean_response_length}};
  out << j.dump() << '\n';
}

std::vector<StepStats> ReadStepLog(std::istream& in) {
  return ReadLines(in, [](const json& j) {
    StepStats s;
    s.step = j.at("step").get<int>();
    s.epoch = j.at("epoch").get<int>();
    s.mean_reward = j.at("mean_reward").get<double>();
    s.surrogate_loss = j.at("surrogate_loss").get<double>();
    s.mean_kl = j.at("mean_kl").get<double>();
    s.clip_fraction = j.at("clip_fraction").get<double>();
    s.tas_count = j.at("tas_count").get<int>();
    s.tds_count = j.at("tds_count").get<int>();
    s.filtered_count = j.at("filtered_count").get<int>();
    s.mean_weight = j.at("mean_weight").get<double>();
    s.mean_response_length = j.at("mean_response_length").get<double>();
    return s;
  });
}

std::vector<StepStats> ReadStepLogFile(const std::string& path) {
  std::ifstream in = OpenOrThrow(path);
  return ReadStepLog(in);
}

void WriteGroupRecord(std::ostream& out, const GroupRecord& r) {
  const AdvantageSet& a = r.advantages;
  json j = {{"step", r.step},
            {"epoch", r.epoch},
            {"instance_id", r.instance_id},
            {"difficulty", r.difficulty},
            {"rewards", r.outcomes.rewards},
            {"lengths", r.outcomes.lengths},
            {"filtered", r.filtered},
            {"classification", ToString(a.classification)},
            {"weight", a.weight},
            {"raw", a.raw},
            {"weighted", a.weighted},
            {"stats", StatsToJson(a.stats)}};
  out << j.dump() << '\n';
}

std::vector<GroupRecord> ReadRolloutLog(std::istream& in) {
  return ReadLines(in, [](const json& j) {
    GroupRecord r;
    r.step = j.at("step").get<int>();
    r.epoch = j.at("epoch").get<int>();
    r.instance_id = j.at("instance_id").get<InstanceId>();
    r.difficulty = j.at("difficulty").get<int>();
    r.outcomes.rewards = j.at("rewards").get<std::vector<double>>();
    r.outcomes.lengths = j.at("lengths").get<std::vector<int>>();
    if (r.outcomes.rewards.size() != r.outcomes.lengths.size() ||
        r.outcomes.rewards.size() < 2) {
      throw InputError("rewards/lengths must have equal size >= 2");
    }
    r.filtered = j.at("filtered").get<bool>();
    r.advantages.classification =
        ParseSampleClass(j.at("classification").get<std::string>());
    r.advantages.weight = j.at("weight").get<double>();
    r.advantages.raw = j.at("raw").get<std::vector<double>>();
    r.advantages.weighted = j.at("weighted").get<std::vector<double>>();
    r.advantages.stats = ComputeStats(r.outcomes);
    return r;
  });
}

std::vector<GroupRecord> ReadRolloutLogFile(const std::string& path) {
  std::ifstream in = OpenOrThrow(path);
  return ReadRolloutLog(in);
}

void WriteEpochRecord(std::ostream& out, const EpochRecord& r) {
  json entries = json::array();
  for (const EpochEntry& e : r.entries) {
    entries.push_back({{"instance_id", e.instance_id},
                       {"difficulty", e.difficulty},
                       {"classification", ToString(e.classification)},
                       {"success_rate", e.success_rate},
                       {"weight", e.weight},
                       {"filtered", e.filtered}});
  }
  json j = {{"epoch", r.epoch}, {"entries", std::move(entries)}};
  out << j.dump() << '\n';
}

std::vector<EpochRecord> ReadEpochLog(std::istream& in) {
  return ReadLines(in, [](const json& j) {
    EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    for (const json& e : j.at("entries")) {
      EpochEntry entry;
      entry.instance_id = e.at("instance_id").get<InstanceId>();
      entry.difficulty = e.at("difficulty").get<int>();
      entry.classification = ParseSampleClass(e.at("classification").get<std::string>());
      entry.success_rate = e.at("success_rate").get<double>();
      entry.weight = e.at("weight").get<double>();
      entry.filtered = e.at("filtered").get<bool>();
      r.entries.push_back(entry);
    }
    return r;
  });
}

std::vector<EpochRecord> ReadEpochLogFile(const std::string& path) {
  std::ifstream in = OpenOrThrow(path);
  return ReadEpochLog(in);
}

}  // namespace adora
