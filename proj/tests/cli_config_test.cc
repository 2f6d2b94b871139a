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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adora/cli.h"
#include "adora/config.h"
#include "adora/error.h"
#include "adora/experiment.h"
#include "adora/run_logs.h"
#include "json.hpp"

using namespace adora;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path Scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "adora_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result Run(std::vector<std::string> args) {
  args.insert(args.begin(), "adora");
  std::ostringstream out, err;
  const int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

// A run small enough for unit tests.
std::vector<std::string> Tiny() {
  return {"--preset", "desk", "--set", "task.count=16", "--set", "train.epochs=4",
          "--set", "eval.count=20"};
}

std::vector<std::string> Cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

json ReadJson(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string ReadText(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("git blob hash matches git's digest") {
  // printf 'hello\n' | git hash-object --stdin
  CHECK(GitBlobHash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(GitBlobHash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("presets validate and round trip through JSON") {
  for (const std::string& name : PresetNames()) {
    const ExperimentConfig c = Preset(name);
    CHECK_NOTHROW(c.Validate());
    CHECK(c.preset == name);
    const std::string text = ToJsonText(c);
    CHECK(ToJsonText(ParseConfig(text)) == text);
  }
  CHECK_THROWS_AS(Preset("nope"), ConfigError);
  const ExperimentConfig llm = Preset("paper-llm");
  CHECK(llm.train.train_batch_size == 256);
  CHECK(llm.train.learning_rate == 1e-6);
  CHECK(Preset("paper-vlm").train.train_batch_size == 128);
}

TEST_CASE("config parsing is strict") {
  try {
    ParseConfig(R"({"calibrator": {"tua": 0.5}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "calibrator.tua");
  }
  try {
    ParseConfig(R"({"train": {"group_size": "eight"}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "train.group_size");
  }
  CHECK_THROWS_AS(ParseConfig("{not json"), ConfigError);
  // Missing keys keep their defaults.
  const ExperimentConfig c = ParseConfig(R"({"calibrator": {"tau": 0.25}})");
  CHECK(c.train.calibrator.tau == 0.25);
  CHECK(c.train.group_size == 8);
}

TEST_CASE("dotted overrides") {
  ExperimentConfig c = Preset("desk");
  ApplyOverride(c, "calibrator.strategy=off");
  CHECK(c.train.calibrator.strategy == Strategy::kOff);
  ApplyOverride(c, "calibrator.tau=0.25");
  CHECK(c.train.calibrator.tau == 0.25);
  ApplyOverride(c, "task.decoy_rate=0.7");
  CHECK(*c.task.decoy_rate == 0.7);
  ApplyOverride(c, "task.decoy_rate=null");
  CHECK_FALSE(c.task.decoy_rate.has_value());
  ApplyOverride(c, "train.dapo_filter=true");
  CHECK(c.train.dapo_filter);
  CHECK_THROWS_AS(ApplyOverride(c, "calibrator.nope=1"), ConfigError);
  CHECK_THROWS_AS(ApplyOverride(c, "calibrator=1"), ConfigError);
  CHECK_THROWS_AS(ApplyOverride(c, "calibrator.strategy=sideways"), ConfigError);
  CHECK_THROWS_AS(ApplyOverride(c, "noequals"), ConfigError);
}

TEST_CASE("validation rejects out-of-range fields by name") {
  const std::vector<std::pair<std::string, std::string>> bad = {
      {"calibrator.tau=1.5", "calibrator.tau"},
      {"calibrator.tau=0", "calibrator.tau"},
      {"calibrator.lambda_att=1", "calibrator.lambda_att"},
      {"calibrator.lambda_amp=0.5", "calibrator.lambda_amp"},
      {"calibrator.std_epsilon=0", "calibrator.std_epsilon"},
      {"train.group_size=1", "train.group_size"},
      {"train.mini_batch_size=64", "train.mini_batch_size"},
      {"train.clip_low=0", "train.clip_low"},
      {"train.clip_high=1", "train.clip_high"},
      {"train.kl_coeff=-1", "train.kl_coeff"},
      {"train.learning_rate=0", "train.learning_rate"},
      {"train.epochs=-1", "train.epochs"},
      {"train.max_response_factor=0", "train.max_response_factor"},
      {"task.count=0", "task.count"},
      {"task.base=11", "task.base"},
      {"task.max_chain_len=1", "task.max_chain_len"},
      {"task.decoy_rate=2", "task.decoy_rate"},
      {"eval.repeats=0", "eval.repeats"},
  };
  for (const auto& [assign, field] : bad) {
    ExperimentConfig c = Preset("desk");
    ApplyOverride(c, assign);
    try {
      c.Validate();
      FAIL("accepted " << assign);
    } catch (const ConfigError& e) {
      CHECK(e.field() == field);
    }
  }
}

TEST_CASE("run log round trips") {
  StepStats s;
  s.step = 3;
  s.epoch = 1;
  s.mean_reward = 0.1 + 0.2;
  s.surrogate_loss = -1e-17;
  s.tas_count = 4;
  std::stringstream ss;
  WriteStepStats(ss, s);
  CHECK(ReadStepLog(ss) == std::vector<StepStats>{s});

  GroupRecord g;
  g.step = 2;
  g.instance_id = 99;
  g.difficulty = 3;
  g.outcomes = {{1, 0, 0}, {3, 5, 1}};
  g.advantages = Calibrate(g.outcomes, CalibratorConfig{});
  std::stringstream gs;
  WriteGroupRecord(gs, g);
  const auto back = ReadRolloutLog(gs);
  REQUIRE(back.size() == 1u);
  CHECK(back[0].outcomes.rewards == g.outcomes.rewards);
  CHECK(back[0].outcomes.lengths == g.outcomes.lengths);
  CHECK(back[0].advantages.weight == g.advantages.weight);
  CHECK(back[0].advantages.raw == g.advantages.raw);

  std::stringstream bad;
  WriteGroupRecord(bad, g);
  WriteGroupRecord(bad, g);
  bad << "{\"step\": 1, \"rewards\": [1], \"lengths\": [1, 2]}\n";
  try {
    ReadRolloutLog(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }

  EpochRecord e{2, {{5, 3, SampleClass::kTas, 0.25, 2.0, false}}};
  std::stringstream es;
  WriteEpochRecord(es, e);
  CHECK(ReadEpochLog(es) == std::vector<EpochRecord>{e});
}

TEST_CASE("grid expansion") {
  std::vector<GridAxis> axes = {ParseGridAxis("tau=0.25,0.5"), ParseGridAxis("strategy=off,amplify,attenuate")};
  const auto pts = ExpandGrid(axes);
  REQUIRE(pts.size() == 6u);
  CHECK(pts[0].label == "tau=0.25,strategy=off");
  CHECK(pts[0].assignments == std::vector<std::string>{"calibrator.tau=0.25", "calibrator.strategy=off"});
  CHECK_THROWS_AS(ExpandGrid({}), ConfigError);
  CHECK_THROWS_AS(ParseGridAxis("train.group_size=2,4"), ConfigError);
  CHECK_THROWS_AS(ParseGridAxis("tau="), ConfigError);
  CHECK(ParseGridAxis("train.dapo_filter=true,false").values.size() == 2u);
}

TEST_CASE("train writes a complete run directory") {
  const fs::path dir = Scratch("train");
  const Result r = Run(Cat({"train", "--out", dir.string()}, Tiny()));
  REQUIRE(r.code == kExitOk);
  for (const char* f : {run_files::kManifest, run_files::kConfig, run_files::kDataset,
                        run_files::kHeldOut, run_files::kSteps, run_files::kEpochs,
                        run_files::kRollouts, run_files::kFinalCheckpoint,
                        run_files::kCurves, run_files::kTasTrace, run_files::kEvalTrain,
                        run_files::kEvalHeldOut}) {
    CHECK_MESSAGE(fs::exists(dir / f), f);
  }
  const json m = ReadJson(dir / run_files::kManifest);
  CHECK(m["preset"] == "desk");
  CHECK(m["config"]["train"]["epochs"] == 4);
  CHECK(m["content_hash"].get<std::string>().size() == 40u);
  CHECK(m["output_dir"] == dir.string());
  CHECK(ReadStepLogFile((dir / run_files::kSteps).string()).size() == 4u);  // one batch per epoch
}

TEST_CASE("train from a config file with overrides") {
  const fs::path dir = Scratch("train_cfg");
  fs::create_directories(dir);
  ExperimentConfig c = Preset("desk");
  c.task.count = 8;
  c.train.epochs = 2;
  c.eval.count = 0;
  const fs::path cfg = dir / "cfg.json";
  std::ofstream(cfg) << ToJsonText(c);
  const Result ok = Run({"train", "--config", cfg.string(), "--set",
                         "calibrator.strategy=off", "--seed", "5", "--out",
                         (dir / "run").string()});
  REQUIRE(ok.code == kExitOk);
  const json m = ReadJson(dir / "run" / run_files::kManifest);
  CHECK(m["config"]["calibrator"]["strategy"] == "off");
  CHECK(m["config"]["train"]["seed"] == 5);

  ExperimentConfig bad = c;
  std::string text = ToJsonText(bad);
  text.replace(text.find("\"tau\": 0.5"), 10, "\"tau\": 1.5");
  std::ofstream(dir / "bad.json") << text;
  const Result r = Run({"train", "--config", (dir / "bad.json").string(), "--out",
                        (dir / "bad").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("calibrator.tau") != std::string::npos);
  CHECK(r.err.find("(0, 1]") != std::string::npos);

  CHECK(Run({"train", "--config", (dir / "missing.json").string()}).code == kExitUsage);
  CHECK(Run({"train"}).code == kExitUsage);
  CHECK(Run({"bogus"}).code == kExitUsage);
  CHECK(Run({"train", "--preset", "desk", "--set", "x.y=1"}).code == kExitUsage);
}

TEST_CASE("output root comes from the environment") {
  const fs::path root = Scratch("root");
  ::setenv(kOutputRootEnv, root.string().c_str(), 1);
  const Result r = Run(Cat({"train"}, Tiny()));
  ::unsetenv(kOutputRootEnv);
  REQUIRE(r.code == kExitOk);
  int runs = 0;
  for (const auto& e : fs::directory_iterator(root)) {
    runs += fs::exists(e.path() / run_files::kManifest);
  }
  CHECK(runs == 1);
}

TEST_CASE("identical invocations give identical bytes") {
  const fs::path a = Scratch("det_a"), b = Scratch("det_b");
  REQUIRE(Run(Cat({"train", "--out", a.string()}, Tiny())).code == 0);
  REQUIRE(Run(Cat({"train", "--out", b.string()}, Tiny())).code == 0);
  for (const char* f : {run_files::kSteps, run_files::kRollouts, run_files::kEpochs,
                        run_files::kFinalCheckpoint}) {
    CHECK(ReadText(a / f) == ReadText(b / f));
  }
  CHECK(ReadJson(a / run_files::kManifest)["content_hash"] ==
        ReadJson(b / run_files::kManifest)["content_hash"]);
}

TEST_CASE("sweep runs one child per grid point") {
  const fs::path dir = Scratch("sweep_tau");
  const Result r = Run(Cat({"sweep", "--grid", "tau=0.25,0.5,0.75,1", "--out", dir.string()}, Tiny()));
  REQUIRE(r.code == kExitOk);
  const json s = ReadJson(dir / "sweep_summary.json");
  CHECK(s["points"].size() == 4u);
  for (const auto& p : s["points"]) CHECK(p["runs"][0]["status"] == "ok");
  CHECK(fs::exists(dir / "sweep_summary.txt"));

  const fs::path dir2 = Scratch("sweep_amp");
  REQUIRE(Run(Cat({"sweep", "--grid", "lambda_amp=1.5,2.0,2.5", "--seeds", "1,2", "--out",
                   dir2.string()}, Tiny())).code == kExitOk);
  const json s2 = ReadJson(dir2 / "sweep_summary.json");
  CHECK(s2["points"].size() == 3u);
  CHECK(s2["points"][0]["runs"].size() == 2u);

  CHECK(Run(Cat({"sweep", "--out", Scratch("sweep_empty").string()}, Tiny())).code == kExitUsage);
  CHECK(Run(Cat({"sweep", "--grid", "tau=", "--out", Scratch("sweep_e2").string()}, Tiny())).code ==
        kExitUsage);
}

TEST_CASE("sweep continues past a failing child") {
  const fs::path dir = Scratch("sweep_fail");
  // lambda_amp = 0.5 fails validation in its child only.
  const Result r = Run(Cat({"sweep", "--grid", "lambda_amp=0.5,2", "--out", dir.string()}, Tiny()));
  CHECK(r.code == kExitFailure);
  const json s = ReadJson(dir / "sweep_summary.json");
  REQUIRE(s["points"].size() == 2u);
  CHECK(s["points"][0]["runs"][0]["status"] == "failed");
  CHECK(s["points"][1]["runs"][0]["status"] == "ok");
}

TEST_CASE("replay of a run's own log reproduces it") {
  const fs::path run = Scratch("replay_run");
  REQUIRE(Run(Cat({"train", "--out", run.string(), "--set", "train.dapo_filter=true"}, Tiny())).code == 0);
  const auto records = ReadRolloutLogFile((run / run_files::kRollouts).string());
  const ExperimentConfig cfg = LoadConfig((run / run_files::kConfig).string());
  const ReplayTable t = Replay(records, cfg.train.calibrator);
  CHECK(t.matches == static_cast<int>(records.size()));

  const fs::path out = Scratch("replay_out");
  const Result r = Run({"replay", "--log", run.string(), "--out", out.string()});
  REQUIRE(r.code == kExitOk);
  int tables = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    tables += e.path().filename().string().rfind("replay_p", 0) == 0;
  }
  CHECK(tables == 1);

  // tau = 1 under amplify: TAS exactly when some rollout succeeds and the
  // length criterion holds.
  ExperimentConfig one = cfg;
  one.train.calibrator.tau = 1.0;
  one.train.calibrator.strategy = Strategy::kAmplify;
  const ReplayTable t1 = Replay(records, one.train.calibrator);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SampleUtilityStats s = ComputeStats(records[i].outcomes);
    const bool expect = s.has_success && LengthAdvantage(s);
    CHECK((t1.entries[i].classification == SampleClass::kTas) == expect);
  }

  const Result grid = Run({"replay", "--log", (run / run_files::kRollouts).string(), "--preset",
                           "desk", "--grid", "tau=0.25,1", "--out", Scratch("replay_grid").string()});
  CHECK(grid.code == kExitOk);
  CHECK(Run({"replay", "--log", "/nonexistent.jsonl", "--preset", "desk"}).code == kExitUsage);
}

TEST_CASE("eval and compare") {
  const fs::path demo = fs::path(ADORA_SOURCE_DIR) / "configs" / "demo";
  const fs::path out = Scratch("eval");
  const Result r = Run({"eval", "--checkpoint", (demo / "checkpoint.json").string(), "--dataset",
                        (demo / "dataset.jsonl").string(), "--pass-k", "1,2,4", "--out",
                        out.string()});
  REQUIRE(r.code == kExitOk);
  const json rep = ReadJson(out / "eval_report.json");
  CHECK(rep.contains("accuracy"));
  CHECK(rep["accuracy"].get<double>() >= 0.0);
  CHECK(fs::exists(out / "pass_at_k.json"));

  CHECK(Run({"eval", "--checkpoint", "/nonexistent", "--dataset",
             (demo / "dataset.jsonl").string()}).code == kExitUsage);

  const fs::path run = Scratch("cmp_run");
  REQUIRE(Run(Cat({"train", "--out", run.string()}, Tiny())).code == 0);
  const fs::path cmp = Scratch("cmp_out");
  REQUIRE(Run({"compare", run.string(), run.string(), "--out", cmp.string()}).code == kExitOk);
  const json c = ReadJson(cmp / "comparison.json");
  CHECK(c["final_reward_delta"] == 0.0);
  CHECK(c["tas_delta"] == 0);
  CHECK(c["tds_delta"] == 0);
  CHECK(fs::exists(cmp / "curves_a.csv"));
  CHECK(Run({"compare", run.string(), "/nonexistent"}).code == kExitUsage);
}
