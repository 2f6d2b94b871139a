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

#include "adora/experiment.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "adora/error.h"
#include "adora/run_logs.h"
#include "json.hpp"

namespace adora {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out = OpenOut(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string CheckpointText(const PolicyParams& p) {
  std::ostringstream s;
  WriteCheckpoint(s, p);
  return s.str();
}

std::string DatasetText(const TaskDataset& d) {
  std::ostringstream s;
  WriteDataset(s, d);
  return s.str();
}

std::string TasTraceJson(const TasTraceSummary& t) {
  json epochs = json::array();
  for (const auto& e : t.per_epoch) {
    json by = json::object();
    for (const auto& [d, c] : e.by_difficulty) {
      by[std::to_string(d)] = {{"tas", c.tas}, {"tds", c.tds}};
    }
    epochs.push_back({{"epoch", e.epoch},
                      {"tas", e.total.tas},
                      {"tds", e.total.tds},
                      {"filtered", e.filtered},
                      {"by_difficulty", std::move(by)}});
  }
  json inst = json::object();
  for (const auto& [id, ep] : t.tas_epochs) inst[std::to_string(id)] = ep;
  return json({{"per_epoch", std::move(epochs)}, {"tas_epochs", std::move(inst)}})
             .dump(2) +
         "\n";
}

// Accepts both full dotted keys and the short names used on the command line.
std::string CanonicalGridKey(const std::string& key) {
  static const std::map<std::string, std::string> kKeys = {
      {"tau", "calibrator.tau"},
      {"lambda_att", "calibrator.lambda_att"},
      {"lambda_amp", "calibrator.lambda_amp"},
      {"strategy", "calibrator.strategy"},
      {"criterion", "calibrator.criterion"},
      {"dapo_filter", "train.dapo_filter"},
  };
  if (auto it = kKeys.find(key); it != kKeys.end()) return it->second;
  for (const auto& [shortname, full] : kKeys) {
    if (full == key) return full;
  }
  throw ConfigError("grid", "cannot sweep '" + key +
                                "' (expected tau|lambda_att|lambda_amp|strategy|"
                                "criterion|dapo_filter)");
}

std::string ShortKey(const std::string& key) {
  const std::size_t dot = key.rfind('.');
  return dot == std::string::npos ? key : key.substr(dot + 1);
}

}  // namespace

std::string GitBlobHash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("cannot allocate digest context");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("sha1 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string RunManifest::ToJsonText() const {
  json j = {{"run_id", run_id},
            {"preset", preset},
            {"dataset", dataset_descriptor},
            {"content_hash", content_hash},
            {"output_dir", output_dir},
            {"config", json::parse(config_json)}};
  return j.dump(2) + "\n";
}

RunInputs PrepareRun(const ExperimentConfig& cfg, const std::string& output_dir,
                     const std::string& output_root) {
  cfg.Validate();
  RunInputs in{cfg, BuildTrainDataset(cfg), std::nullopt, {}, {}};
  ValidateDataset(in.dataset);
  in.held_out = BuildHeldOutDataset(cfg, in.dataset.vocab_size);
  in.init = BuildInitialPolicy(cfg, in.dataset.vocab_size);

  RunManifest& m = in.manifest;
  m.preset = cfg.preset;
  m.config_json = ToJsonText(cfg);
  m.dataset_descriptor = in.dataset.Descriptor();
  std::string tree = "config " + GitBlobHash(m.config_json) + "\n";
  tree += "dataset " + GitBlobHash(DatasetText(in.dataset)) + "\n";
  if (in.held_out) tree += "heldout " + GitBlobHash(DatasetText(*in.held_out)) + "\n";
  tree += "init " + GitBlobHash(CheckpointText(in.init)) + "\n";
  m.content_hash = GitBlobHash(tree);
  m.run_id = cfg.name + "-" + m.content_hash.substr(0, 10);
  m.output_dir = output_dir.empty()
                     ? (fs::path(output_root.empty() ? "runs" : output_root) / m.run_id)
                           .string()
                     : output_dir;
  return in;
}

RunOutcome ExecuteRun(const RunInputs& in) {
  const fs::path dir(in.manifest.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  WriteText(dir / run_files::kManifest, in.manifest.ToJsonText());
  WriteText(dir / run_files::kConfig, in.manifest.config_json);
  WriteText(dir / run_files::kDataset, DatasetText(in.dataset));
  if (in.held_out) WriteText(dir / run_files::kHeldOut, DatasetText(*in.held_out));
  WriteText(dir / run_files::kInitCheckpoint, CheckpointText(in.init));

  std::ofstream steps = OpenOut(dir / run_files::kSteps);
  std::ofstream epochs = OpenOut(dir / run_files::kEpochs);
  std::ofstream rollouts;
  if (in.config.output.rollouts) rollouts = OpenOut(dir / run_files::kRollouts);

  TrainCallbacks cb;
  cb.on_step = [&](const StepRecord& r) {
    WriteStepStats(steps, r.stats);
    if (rollouts.is_open()) {
      for (const GroupRecord& g : r.groups) WriteGroupRecord(rollouts, g);
    }
  };
  cb.on_epoch = [&](const EpochRecord& r) { WriteEpochRecord(epochs, r); };
  if (in.config.output.checkpoint_every > 0) {
    fs::create_directories(dir / "checkpoints");
    cb.checkpoint_every = in.config.output.checkpoint_every;
    cb.on_checkpoint = [&](int step, const PolicyParams& p) {
      char name[32];
      std::snprintf(name, sizeof(name), "step_%06d.json", step);
      WriteText(dir / "checkpoints" / name, CheckpointText(p));
    };
  }

  RunOutcome out;
  out.result = Train(in.dataset, in.config.train, cb, in.init);
  steps.close();
  epochs.close();
  if (rollouts.is_open()) rollouts.close();
  if (!steps || !epochs) throw IoError("failed writing run logs under " + dir.string());

  WriteText(dir / run_files::kFinalCheckpoint, CheckpointText(out.result.params));
  {
    std::ofstream csv = OpenOut(dir / run_files::kCurves);
    WriteCurveCsv(csv, out.result.steps);
  }
  WriteText(dir / run_files::kTasTrace, TasTraceJson(SummarizeTasTrace(out.result.epochs)));

  const EvalOptions opts = EvalOptionsFor(in.config);
  out.train_eval = EvaluateGreedy(out.result.params, in.dataset, opts);
  WriteText(dir / run_files::kEvalTrain, ToJson(out.train_eval));
  if (in.held_out) {
    out.held_out_eval = EvaluateGreedy(out.result.params, *in.held_out, opts);
    WriteText(dir / run_files::kEvalHeldOut, ToJson(*out.held_out_eval));
  }
  return out;
}

GridAxis ParseGridAxis(std::string_view spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("grid", "axis must look like key=v1,v2");
  }
  GridAxis axis;
  axis.key = CanonicalGridKey(std::string(spec.substr(0, eq)));
  std::string rest(spec.substr(eq + 1));
  std::stringstream s(rest);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (!item.empty()) axis.values.push_back(item);
  }
  if (axis.values.empty()) throw ConfigError("grid", "axis '" + axis.key + "' has no values");
  return axis;
}

std::vector<GridPoint> ExpandGrid(std::span<const GridAxis> axes) {
  if (axes.empty()) throw ConfigError("grid", "empty grid");
  std::vector<GridPoint> points(1);
  for (const GridAxis& axis : axes) {
    if (axis.values.empty()) throw ConfigError("grid", "axis '" + axis.key + "' has no values");
    std::vector<GridPoint> next;
    for (const GridPoint& p : points) {
      for (const std::string& v : axis.values) {
        GridPoint q = p;
        if (!q.label.empty()) q.label += ",";
        q.label += ShortKey(axis.key) + "=" + v;
        q.assignments.push_back(axis.key + "=" + v);
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

ReplayTable Replay(std::span<const GroupRecord> records,
                   const CalibratorConfig& calibrator, std::string label) {
  calibrator.Validate("calibrator");
  ReplayTable t;
  t.label = std::move(label);
  t.calibrator = calibrator;
  double weight_sum = 0.0;
  for (const GroupRecord& r : records) {
    const AdvantageSet a = Calibrate(r.outcomes, calibrator);
    ReplayEntry e;
    e.step = r.step;
    e.instance_id = r.instance_id;
    e.filtered = r.filtered;
    e.classification = a.classification;
    e.weight = a.weight;
    e.logged_classification = r.advantages.classification;
    e.logged_weight = r.advantages.weight;
    (e.classification == SampleClass::kTas ? t.tas : t.tds) += 1;
    weight_sum += e.weight;
    if (e.classification == e.logged_classification && e.weight == e.logged_weight) {
      ++t.matches;
    }
    t.entries.push_back(e);
  }
  if (!t.entries.empty()) t.mean_weight = weight_sum / static_cast<double>(t.entries.size());
  return t;
}

std::string ToJson(const ReplayTable& t) {
  json entries = json::array();
  for (const ReplayEntry& e : t.entries) {
    entries.push_back({{"step", e.step},
                       {"instance_id", e.instance_id},
                       {"filtered", e.filtered},
                       {"classification", ToString(e.classification)},
                       {"weight", e.weight},
                       {"logged_classification", ToString(e.logged_classification)},
                       {"logged_weight", e.logged_weight}});
  }
  const CalibratorConfig& c = t.calibrator;
  json j = {{"label", t.label},
            {"calibrator",
             {{"strategy", ToString(c.strategy)},
              {"criterion", ToString(c.criterion)},
              {"tau", c.tau},
              {"lambda_att", c.lambda_att},
              {"lambda_amp", c.lambda_amp}}},
            {"groups", t.entries.size()},
            {"tas", t.tas},
            {"tds", t.tds},
            {"mean_weight", t.mean_weight},
            {"matches", t.matches},
            {"entries", std::move(entries)}};
  return j.dump(2) + "\n";
}

std::string FormatReplaySummary(std::span<const ReplayTable> tables) {
  std::size_t width = 6;
  for (const ReplayTable& t : tables) width = std::max(width, t.label.size() + 2);
  std::ostringstream s;
  s << std::left << std::setw(static_cast<int>(width)) << "point" << std::right
    << std::setw(8) << "groups" << std::setw(8) << "tas" << std::setw(8) << "tds"
    << std::setw(12) << "mean_w" << std::setw(14) << "match_logged" << "\n";
  s << std::fixed << std::setprecision(4);
  for (const ReplayTable& t : tables) {
    const double match = t.entries.empty()
                             ? 1.0
                             : static_cast<double>(t.matches) / t.entries.size();
    s << std::left << std::setw(static_cast<int>(width)) << t.label << std::right
      << std::setw(8) << t.entries.size() << std::setw(8) << t.tas << std::setw(8)
      << t.tds << std::setw(12) << t.mean_weight << std::setw(14) << match << "\n";
  }
  return s.str();
}

}  // namespace adora
