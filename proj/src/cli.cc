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

#include "adora/cli.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "adora/config.h"
#include "adora/error.h"
#include "adora/experiment.h"
#include "adora/metrics_eval.h"
#include "adora/run_logs.h"
#include "json.hpp"

namespace adora {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Thrown while resolving inputs; always maps to the usage exit code.
struct UsageError : Error {
  using Error::Error;
};

struct ConfigArgs {
  std::string config;
  std::string preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void AddConfigFlags(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config", a.config, "experiment config (JSON)");
  cmd->add_option("--preset", a.preset, "start from a named preset");
  cmd->add_option("--set", a.overrides, "override a field: section.key=value");
  cmd->add_option("--seed", a.seed, "training seed (train.seed)");
}

// Resolves --config / --preset plus overrides. `fallback` is used when
// neither flag is given; an empty fallback makes one of them mandatory.
ExperimentConfig ResolveConfig(const ConfigArgs& a, const std::string& fallback = "") {
  if (!a.config.empty() && !a.preset.empty()) {
    throw UsageError("--config and --preset are mutually exclusive");
  }
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = LoadConfig(a.config);
  } else if (!a.preset.empty()) {
    cfg = Preset(a.preset);
  } else if (!fallback.empty()) {
    cfg = LoadConfig(fallback);
  } else {
    throw UsageError("one of --config or --preset is required");
  }
  ApplyOverrides(cfg, a.overrides);
  if (a.seed) cfg.train.seed = *a.seed;
  return cfg;
}

std::string OutputRoot() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? std::string(env) : std::string("runs");
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

std::vector<int> ParseIntList(const std::string& text, const char* field) {
  std::vector<int> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(field, "not an integer list: " + text);
    }
  }
  if (out.empty()) throw ConfigError(field, "empty list");
  return out;
}

// ---------------------------------------------------------------- train

int CmdTrain(const ConfigArgs& a, const std::string& out_dir, std::ostream& out) {
  RunInputs in;
  try {
    in = PrepareRun(ResolveConfig(a), out_dir, OutputRoot());
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  out << "run " << in.manifest.run_id << " -> " << in.manifest.output_dir << "\n";
  const RunOutcome r = ExecuteRun(in);
  const auto& steps = r.result.steps;
  out << std::fixed << std::setprecision(4);
  out << "steps " << steps.size() << "  final trailing reward "
      << FinalTrailingReward(steps) << "  train accuracy " << r.train_eval.accuracy;
  if (r.held_out_eval) out << "  held-out accuracy " << r.held_out_eval->accuracy;
  out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  int repeats = 0;
  std::string pass_k;
  int samples = 0;
  std::uint64_t sample_seed = 0;
};

int CmdEval(const ConfigArgs& ca, const EvalArgs& a, const std::string& out_dir,
            std::ostream& out) {
  PolicyParams policy;
  TaskDataset dataset;
  EvalOptions opts;
  std::vector<int> ks;
  try {
    fs::path ckpt(a.checkpoint);
    std::string run_config;
    if (fs::is_directory(ckpt)) {
      if (fs::exists(ckpt / run_files::kConfig)) run_config = (ckpt / run_files::kConfig).string();
      ckpt /= run_files::kFinalCheckpoint;
    }
    if (!fs::exists(ckpt)) throw IoError("no such checkpoint: " + ckpt.string());
    if (!fs::exists(a.dataset)) throw IoError("no such dataset: " + a.dataset);
    policy = LoadCheckpoint(ckpt.string());
    dataset = LoadDataset(a.dataset);
    if (dataset.vocab_size != policy.num_tokens()) {
      throw InputError("checkpoint vocabulary does not match the dataset");
    }
    if (!ca.config.empty() || !ca.preset.empty() || !run_config.empty()) {
      const ExperimentConfig cfg = ResolveConfig(ca, run_config);
      cfg.Validate();
      opts = EvalOptionsFor(cfg);
    }
    if (a.repeats > 0) opts.repeats = a.repeats;
    if (!a.pass_k.empty()) {
      ks = ParseIntList(a.pass_k, "pass_k");
      const int n = a.samples > 0 ? a.samples : *std::max_element(ks.begin(), ks.end());
      for (int k : ks) {
        if (k < 1 || k > n) throw ConfigError("pass_k", "every k must be in [1, samples]");
      }
    }
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  const EvalReport report = EvaluateGreedy(policy, dataset, opts);
  out << FormatTable(report);
  std::optional<PassAtKCurve> curve;
  if (!ks.empty()) {
    const int n = a.samples > 0 ? a.samples : *std::max_element(ks.begin(), ks.end());
    const auto counts = SampleSuccessCounts(policy, dataset, n, a.sample_seed, opts);
    curve = ComputePassAtK(counts, ks);
    out << "\npass@k (n=" << n << ")\n";
    for (std::size_t j = 0; j < curve->ks.size(); ++j) {
      out << "  k=" << std::setw(3) << curve->ks[j] << "  " << std::fixed
          << std::setprecision(4) << curve->mean[j] << "\n";
    }
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    WriteFile(fs::path(out_dir) / "eval_report.json", ToJson(report));
    WriteFile(fs::path(out_dir) / "eval_report.txt", FormatTable(report));
    if (curve) WriteFile(fs::path(out_dir) / "pass_at_k.json", ToJson(*curve));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- compare

std::string StepLogPath(const std::string& p) {
  fs::path path(p);
  if (fs::is_directory(path)) path /= run_files::kSteps;
  if (!fs::exists(path)) throw IoError("no such step log: " + path.string());
  return path.string();
}

int CmdCompare(const std::string& a, const std::string& b, double threshold, int window,
               const std::string& out_dir, std::ostream& out) {
  ComparisonReport report;
  std::vector<StepStats> sa, sb;
  try {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
      throw ConfigError("threshold", "must be in (0, 1]");
    }
    if (window < 1) throw ConfigError("window", "must be >= 1");
    const std::string pa = StepLogPath(a);
    const std::string pb = StepLogPath(b);
    sa = ReadStepLogFile(pa);
    sb = ReadStepLogFile(pb);
    report = CompareStats(SummarizeRun(pa, sa, threshold, window),
                          SummarizeRun(pb, sb, threshold, window), threshold, window);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  out << FormatTable(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    WriteFile(fs::path(out_dir) / "comparison.json", ToJson(report));
    WriteFile(fs::path(out_dir) / "comparison.txt", FormatTable(report));
    std::ostringstream ca, cb;
    WriteCurveCsv(ca, sa, window);
    WriteCurveCsv(cb, sb, window);
    WriteFile(fs::path(out_dir) / "curves_a.csv", ca.str());
    WriteFile(fs::path(out_dir) / "curves_b.csv", cb.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::vector<std::string> grid;
  std::string seeds;
  double threshold = 0.75;
};

std::string DirLabel(std::size_t index, const std::string& label) {
  std::string s = label;
  std::replace(s.begin(), s.end(), ',', '_');
  char prefix[16];
  std::snprintf(prefix, sizeof(prefix), "p%02zu_", index);
  return prefix + s;
}

int CmdSweep(const ConfigArgs& ca, const SweepArgs& a, const std::string& out_dir,
             std::ostream& out, std::ostream& err) {
  ExperimentConfig base;
  std::vector<GridPoint> points;
  std::vector<std::uint64_t> seeds;
  fs::path root;
  try {
    base = ResolveConfig(ca);
    base.Validate();
    std::vector<GridAxis> axes;
    for (const std::string& g : a.grid) axes.push_back(ParseGridAxis(g));
    points = ExpandGrid(axes);
    if (a.seeds.empty()) {
      seeds.push_back(base.train.seed);
    } else {
      for (int s : ParseIntList(a.seeds, "seeds")) {
        if (s < 0) throw ConfigError("seeds", "seeds must be >= 0");
        seeds.push_back(static_cast<std::uint64_t>(s));
      }
    }
    if (!(a.threshold > 0.0 && a.threshold <= 1.0)) {
      throw ConfigError("threshold", "must be in (0, 1]");
    }
    root = out_dir.empty() ? fs::path(OutputRoot()) / (base.name + "-sweep") : fs::path(out_dir);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  json summary = json::array();
  std::ostringstream table;
  table << std::left << std::setw(40) << "point" << std::right << std::setw(6) << "ok"
        << std::setw(8) << "failed" << std::setw(12) << "converge" << std::setw(14)
        << "final_reward" << std::setw(10) << "tas" << std::setw(10) << "heldout" << "\n";
  table << std::fixed << std::setprecision(4);
  int failures = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const GridPoint& p = points[i];
    std::vector<std::optional<int>> converge;
    std::vector<double> finals, tas, held;
    json children = json::array();
    int failed = 0;
    for (std::uint64_t seed : seeds) {
      const fs::path dir = root / DirLabel(i, p.label) / ("seed_" + std::to_string(seed));
      json child = {{"seed", seed}, {"output_dir", dir.string()}};
      try {
        ExperimentConfig cfg = base;
        ApplyOverrides(cfg, p.assignments);
        cfg.train.seed = seed;
        cfg.name = base.name + "-" + DirLabel(i, p.label);
        const RunOutcome r = ExecuteRun(PrepareRun(cfg, dir.string(), ""));
        const RunSummary s = SummarizeRun(p.label, r.result.steps, a.threshold);
        converge.push_back(s.convergence_step);
        finals.push_back(s.final_trailing_reward);
        tas.push_back(static_cast<double>(s.total_tas));
        if (r.held_out_eval) held.push_back(r.held_out_eval->accuracy);
        child["status"] = "ok";
        child["convergence_step"] =
            s.convergence_step ? json(*s.convergence_step) : json(nullptr);
        child["final_trailing_reward"] = s.final_trailing_reward;
        child["total_tas"] = s.total_tas;
        if (r.held_out_eval) child["held_out_accuracy"] = r.held_out_eval->accuracy;
      } catch (const std::exception& e) {
        ++failed;
        child["status"] = "failed";
        child["error"] = e.what();
        err << "sweep point " << p.label << " seed " << seed << " failed: " << e.what()
            << "\n";
      }
      children.push_back(std::move(child));
    }
    failures += failed;
    // Never-converged runs sort last, so the median is defined for any mix.
    std::vector<int> conv;
    for (const auto& c : converge) conv.push_back(c ? *c : INT32_MAX);
    std::sort(conv.begin(), conv.end());
    std::optional<int> median;
    if (!conv.empty() && conv[conv.size() / 2] != INT32_MAX) median = conv[conv.size() / 2];
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    summary.push_back({{"point", p.label},
                       {"assignments", p.assignments},
                       {"runs", children},
                       {"median_convergence_step", median ? json(*median) : json(nullptr)},
                       {"mean_final_trailing_reward", mean(finals)},
                       {"mean_total_tas", mean(tas)},
                       {"mean_held_out_accuracy", held.empty() ? json(nullptr) : json(mean(held))}});
    table << std::left << std::setw(40) << p.label << std::right << std::setw(6)
          << converge.size() << std::setw(8) << failed << std::setw(12)
          << (median ? std::to_string(*median) : std::string("-")) << std::setw(14)
          << mean(finals) << std::setw(10) << std::setprecision(1) << mean(tas)
          << std::setprecision(4) << std::setw(10);
    if (held.empty()) {
      table << "-";
    } else {
      table << mean(held);
    }
    table << "\n";
  }
  fs::create_directories(root);
  json doc = {{"threshold", a.threshold}, {"seeds", seeds}, {"points", summary}};
  WriteFile(root / "sweep_summary.json", doc.dump(2) + "\n");
  WriteFile(root / "sweep_summary.txt", table.str());
  out << table.str();
  return failures == 0 ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- replay

int CmdReplay(const ConfigArgs& ca, const std::string& log,
              const std::vector<std::string>& grid, const std::string& out_dir,
              std::ostream& out) {
  std::vector<GroupRecord> records;
  ExperimentConfig base;
  std::vector<GridPoint> points;
  try {
    fs::path path(log);
    std::string run_config;
    if (fs::is_directory(path)) {
      if (fs::exists(path / run_files::kConfig)) run_config = (path / run_files::kConfig).string();
      path /= run_files::kRollouts;
    }
    if (!fs::exists(path)) throw IoError("no such rollout log: " + path.string());
    records = ReadRolloutLogFile(path.string());
    base = ResolveConfig(ca, run_config);
    base.train.calibrator.Validate("calibrator");
    if (grid.empty()) {
      points.push_back({"config", {}});
    } else {
      std::vector<GridAxis> axes;
      for (const std::string& g : grid) axes.push_back(ParseGridAxis(g));
      points = ExpandGrid(axes);
    }
  } catch (const Error& e) {
    throw UsageError(e.what());
  }

  std::vector<ReplayTable> tables;
  for (const GridPoint& p : points) {
    ExperimentConfig cfg = base;
    try {
      ApplyOverrides(cfg, p.assignments);
      cfg.train.calibrator.Validate("calibrator");
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    tables.push_back(Replay(records, cfg.train.calibrator, p.label));
  }
  const std::string summary = FormatReplaySummary(tables);
  out << summary;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < tables.size(); ++i) {
      WriteFile(fs::path(out_dir) / ("replay_" + DirLabel(i, tables[i].label) + ".json"),
                ToJson(tables[i]));
    }
    WriteFile(fs::path(out_dir) / "replay_summary.txt", summary);
  }
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ADORA advantage calibration on synthetic reasoning tasks", "adora"};
  app.require_subcommand(1);

  ConfigArgs train_cfg, eval_cfg, sweep_cfg, replay_cfg;
  std::string train_out, eval_out, compare_out, sweep_out, replay_out;

  CLI::App* train = app.add_subcommand("train", "train a policy and write a run directory");
  AddConfigFlags(train, train_cfg);
  train->add_option("--out", train_out, "run directory");

  EvalArgs ev;
  CLI::App* eval = app.add_subcommand("eval", "greedy accuracy and pass@k of a checkpoint");
  AddConfigFlags(eval, eval_cfg);
  eval->add_option("--checkpoint", ev.checkpoint, "checkpoint file or run directory")->required();
  eval->add_option("--dataset", ev.dataset, "dataset file (JSONL)")->required();
  eval->add_option("--repeats", ev.repeats, "greedy repeats per instance");
  eval->add_option("--pass-k", ev.pass_k, "comma-separated k values");
  eval->add_option("--samples", ev.samples, "samples per instance for pass@k");
  eval->add_option("--sample-seed", ev.sample_seed, "seed for pass@k sampling");
  eval->add_option("--out", eval_out, "report directory");

  std::string cmp_a, cmp_b;
  double cmp_threshold = 0.75;
  int cmp_window = kDefaultTrailingWindow;
  CLI::App* compare = app.add_subcommand("compare", "compare two runs' step logs");
  compare->add_option("run_a", cmp_a, "run directory or steps.jsonl")->required();
  compare->add_option("run_b", cmp_b, "run directory or steps.jsonl")->required();
  compare->add_option("--threshold", cmp_threshold, "trailing reward threshold");
  compare->add_option("--window", cmp_window, "trailing window width");
  compare->add_option("--out", compare_out, "report directory");

  SweepArgs sw;
  CLI::App* sweep = app.add_subcommand("sweep", "one run per grid point and seed");
  AddConfigFlags(sweep, sweep_cfg);
  sweep->add_option("--grid", sw.grid, "axis: key=v1,v2 (repeatable)");
  sweep->add_option("--seeds", sw.seeds, "comma-separated training seeds");
  sweep->add_option("--threshold", sw.threshold, "trailing reward threshold");
  sweep->add_option("--out", sweep_out, "sweep directory");

  std::string replay_log;
  std::vector<std::string> replay_grid;
  CLI::App* replay = app.add_subcommand("replay", "recalibrate a rollout log offline");
  AddConfigFlags(replay, replay_cfg);
  replay->add_option("--log", replay_log, "rollouts.jsonl or run directory")->required();
  replay->add_option("--grid", replay_grid, "axis: key=v1,v2 (repeatable)");
  replay->add_option("--out", replay_out, "report directory");

  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return CmdTrain(train_cfg, train_out, out);
    if (eval->parsed()) return CmdEval(eval_cfg, ev, eval_out, out);
    if (compare->parsed()) {
      return CmdCompare(cmp_a, cmp_b, cmp_threshold, cmp_window, compare_out, out);
    }
    if (sweep->parsed()) return CmdSweep(sweep_cfg, sw, sweep_out, out, err);
    if (replay->parsed()) return CmdReplay(replay_cfg, replay_log, replay_grid, replay_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace adora
