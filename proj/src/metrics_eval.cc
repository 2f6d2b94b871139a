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

#include "adora/metrics_eval.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "adora/error.h"
#include "adora/run_logs.h"
#include "json.hpp"

namespace adora {
namespace {

using nlohmann::json;

constexpr std::uint64_t kPassAtKTag = 0x9a55;

json OptionalJson(const std::optional<int>& v) {
  return v ? json(*v) : json(nullptr);
}

json SummaryJson(const RunSummary& s) {
  return {{"label", s.label},
          {"steps", s.steps},
          {"convergence_step", OptionalJson(s.convergence_step)},
          {"final_trailing_reward", s.final_trailing_reward},
          {"total_tas", s.total_tas},
          {"total_tds", s.total_tds},
          {"tas_series", s.tas_series},
          {"tds_series", s.tds_series}};
}

std::string OptionalText(const std::optional<int>& v) {
  return v ? std::to_string(*v) : std::string("-");
}

std::vector<double> Ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    // 1-based average rank of the tie block [i, j].
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

int EvalOptions::MaxLenFor(const TaskInstance& instance) const {
  return max_response_len > 0 ? max_response_len
                              : max_response_factor * instance.difficulty;
}

EvalReport EvaluateGreedy(const PolicyParams& policy, const TaskDataset& dataset,
                          const EvalOptions& options) {
  if (dataset.instances.empty()) throw InputError("evaluation dataset is empty");
  if (options.repeats < 1) throw InputError("repeats must be >= 1");
  EvalReport report;
  report.dataset_id = dataset.Descriptor();
  std::map<int, int> hits;
  long total_length = 0;
  for (const TaskInstance& inst : dataset.instances) {
    const std::vector<Token> tokens =
        GreedyDecode(policy, inst, options.MaxLenFor(inst));
    const Verdict v = Verify(inst, tokens, dataset.terminator());
    for (int r = 0; r < options.repeats; ++r) {
      ++report.samples;
      ++report.per_difficulty_samples[inst.difficulty];
      total_length += v.response_length;
      if (v.success) {
        ++report.successes;
        ++hits[inst.difficulty];
      }
    }
  }
  report.accuracy = static_cast<double>(report.successes) / report.samples;
  for (const auto& [d, n] : report.per_difficulty_samples) {
    report.per_difficulty_accuracy[d] = static_cast<double>(hits[d]) / n;
  }
  report.mean_response_length = static_cast<double>(total_length) / report.samples;
  return report;
}

double PassAtK(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n) throw InputError("pass@k needs 0 <= c <= n, n >= 1");
  if (k < 1 || k > n) throw InputError("pass@k needs 1 <= k <= n");
  if (n - c < k) return 1.0;
  // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) {
    miss *= 1.0 - static_cast<double>(k) / i;
  }
  return 1.0 - miss;
}

PassAtKCurve ComputePassAtK(std::span<const SuccessCount> counts,
                            std::span<const int> ks) {
  if (counts.empty()) throw InputError("pass@k needs at least one instance");
  if (ks.empty()) throw InputError("pass@k needs at least one k");
  PassAtKCurve curve;
  curve.ks.assign(ks.begin(), ks.end());
  curve.mean.assign(ks.size(), 0.0);
  for (const SuccessCount& sc : counts) {
    std::vector<double> row;
    row.reserve(ks.size());
    for (int k : ks) row.push_back(PassAtK(sc.n, sc.c, k));
    for (std::size_t j = 0; j < row.size(); ++j) curve.mean[j] += row[j];
    curve.per_instance.push_back(std::move(row));
  }
  for (double& m : curve.mean) m /= static_cast<double>(counts.size());
  return curve;
}

std::vector<SuccessCount> SampleSuccessCounts(const PolicyParams& policy,
                                              const TaskDataset& dataset, int n,
                                              std::uint64_t seed,
                                              const EvalOptions& options) {
  if (n < 1) throw InputError("samples per instance must be >= 1");
  std::vector<SuccessCount> out;
  out.reserve(dataset.instances.size());
  for (const TaskInstance& inst : dataset.instances) {
    SuccessCount sc{n, 0};
    for (int i = 0; i < n; ++i) {
      RngStream rng(DeriveSeed({seed, kPassAtKTag, inst.id,
                                static_cast<std::uint64_t>(i)}));
      const Trajectory t =
          SampleTrajectory(policy, inst, options.MaxLenFor(inst), rng);
      sc.c += t.verdict.success ? 1 : 0;
    }
    out.push_back(sc);
  }
  return out;
}

std::vector<std::optional<double>> TrailingMeanReward(
    std::span<const StepStats> stats, int window) {
  if (window < 1) throw InputError("window must be >= 1");
  std::vector<std::optional<double>> out(stats.size());
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t i = w - 1; i < stats.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = i + 1 - w; j <= i; ++j) s += stats[j].mean_reward;
    out[i] = s / window;
  }
  return out;
}

std::optional<int> ConvergenceStep(std::span<const StepStats> stats,
                                   double threshold, int window) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw InputError("threshold must be in (0, 1]");
  }
  const auto trailing = TrailingMeanReward(stats, window);
  for (std::size_t i = 0; i < trailing.size(); ++i) {
    if (trailing[i] && *trailing[i] >= threshold) return static_cast<int>(i);
  }
  return std::nullopt;
}

double FinalTrailingReward(std::span<const StepStats> stats, int window) {
  if (stats.empty()) return 0.0;
  const std::size_t w = std::min<std::size_t>(window, stats.size());
  double s = 0.0;
  for (std::size_t i = stats.size() - w; i < stats.size(); ++i) s += stats[i].mean_reward;
  return s / static_cast<double>(w);
}

RunSummary SummarizeRun(std::string label, std::span<const StepStats> stats,
                        double threshold, int window) {
  RunSummary s;
  s.label = std::move(label);
  s.steps = static_cast<int>(stats.size());
  s.convergence_step = ConvergenceStep(stats, threshold, window);
  s.final_trailing_reward = FinalTrailingReward(stats, window);
  for (const StepStats& st : stats) {
    s.total_tas += st.tas_count;
    s.total_tds += st.tds_count;
    s.tas_series.push_back(st.tas_count);
    s.tds_series.push_back(st.tds_count);
  }
  return s;
}

ComparisonReport CompareStats(const RunSummary& a, const RunSummary& b,
                              double threshold, int window) {
  ComparisonReport r;
  r.threshold = threshold;
  r.window = window;
  r.a = a;
  r.b = b;
  if (a.convergence_step && b.convergence_step) {
    r.convergence_delta = *b.convergence_step - *a.convergence_step;
  }
  r.final_reward_delta = b.final_trailing_reward - a.final_trailing_reward;
  r.tas_delta = b.total_tas - a.total_tas;
  r.tds_delta = b.total_tds - a.total_tds;
  return r;
}

ComparisonReport CompareRuns(const std::string& path_a, const std::string& path_b,
                             double threshold, int window) {
  const std::vector<StepStats> a = ReadStepLogFile(path_a);
  const std::vector<StepStats> b = ReadStepLogFile(path_b);
  return CompareStats(SummarizeRun(path_a, a, threshold, window),
                      SummarizeRun(path_b, b, threshold, window), threshold,
                      window);
}

SpearmanResult Spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InputError("spearman inputs differ in length");
  if (x.size() < 3) throw InputError("spearman needs at least 3 points");
  const std::vector<double> rx = Ranks(x);
  const std::vector<double> ry = Ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  SpearmanResult r;
  r.n = static_cast<int>(x.size());
  if (sxx == 0.0 || syy == 0.0) return r;  // a constant series has no rank order
  r.rho = sxy / std::sqrt(sxx * syy);
  const double df = n - 2.0;
  const double denom = 1.0 - r.rho * r.rho;
  if (denom <= 0.0) {
    r.p_value = 0.0;
    return r;
  }
  const double t = r.rho * std::sqrt(df / denom);
  boost::math::students_t dist(df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return r;
}

std::string ToJson(const EvalReport& r) {
  json per = json::object();
  for (const auto& [d, acc] : r.per_difficulty_accuracy) {
    per[std::to_string(d)] = {{"accuracy", acc},
                              {"samples", r.per_difficulty_samples.at(d)}};
  }
  json j = {{"dataset_id", r.dataset_id},
            {"samples", r.samples},
            {"successes", r.successes},
            {"accuracy", r.accuracy},
            {"mean_response_length", r.mean_response_length},
            {"per_difficulty", std::move(per)}};
  return j.dump(2) + "\n";
}

std::string ToJson(const PassAtKCurve& c) {
  json j = {{"ks", c.ks}, {"mean", c.mean}, {"per_instance", c.per_instance}};
  return j.dump(2) + "\n";
}

std::string ToJson(const ComparisonReport& r) {
  json j = {{"threshold", r.threshold},
            {"window", r.window},
            {"a", SummaryJson(r.a)},
            {"b", SummaryJson(r.b)},
            {"convergence_delta", OptionalJson(r.convergence_delta)},
            {"final_reward_delta", r.final_reward_delta},
            {"tas_delta", r.tas_delta},
            {"tds_delta", r.tds_delta}};
  return j.dump(2) + "\n";
}

std::string FormatTable(const EvalReport& r) {
  std::ostringstream s;
  s << "dataset   " << r.dataset_id << "\n";
  s << std::fixed << std::setprecision(4);
  s << "accuracy  " << r.accuracy << "  (" << r.successes << "/" << r.samples << ")\n";
  s << "mean_len  " << r.mean_response_length << "\n\n";
  s << std::left << std::setw(12) << "difficulty" << std::right << std::setw(10)
    << "accuracy" << std::setw(10) << "samples" << "\n";
  for (const auto& [d, acc] : r.per_difficulty_accuracy) {
    s << std::left << std::setw(12) << d << std::right << std::setw(10) << acc
      << std::setw(10) << r.per_difficulty_samples.at(d) << "\n";
  }
  return s.str();
}

std::string FormatTable(const ComparisonReport& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4);
  s << "threshold " << r.threshold << "  window " << r.window << "\n\n";
  s << std::left << std::setw(8) << "run" << std::right << std::setw(8) << "steps"
    << std::setw(12) << "converge" << std::setw(14) << "final_reward"
    << std::setw(10) << "tas" << std::setw(10) << "tds" << "  log\n";
  auto row = [&](const char* name, const RunSummary& x) {
    s << std::left << std::setw(8) << name << std::right << std::setw(8) << x.steps
      << std::setw(12) << OptionalText(x.convergence_step) << std::setw(14)
      << x.final_trailing_reward << std::setw(10) << x.total_tas << std::setw(10)
      << x.total_tds << "  " << x.label << "\n";
  };
  row("a", r.a);
  row("b", r.b);
  s << std::left << std::setw(8) << "b-a" << std::right << std::setw(8)
    << (r.b.steps - r.a.steps) << std::setw(12) << OptionalText(r.convergence_delta)
    << std::setw(14) << r.final_reward_delta << std::setw(10) << r.tas_delta
    << std::setw(10) << r.tds_delta << "\n";
  return s.str();
}

void WriteCurveCsv(std::ostream& out, std::span<const StepStats> stats, int window) {
  const auto trailing = TrailingMeanReward(stats, window);
  out << "step,epoch,mean_reward,trailing_reward,surrogate_loss,mean_kl,"
         "clip_fraction,tas,tds,filtered,mean_weight,mean_response_length\n";
  out << std::setprecision(10);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const StepStats& s = stats[i];
    out << s.step << ',' << s.epoch << ',' << s.mean_reward << ',';
    if (trailing[i]) out << *trailing[i];
    out << ',' << s.surrogate_loss << ',' << s.mean_kl << ',' << s.clip_fraction
        << ',' << s.tas_count << ',' << s.tds_count << ',' << s.filtered_count
        << ',' << s.mean_weight << ',' << s.mean_response_length << '\n';
  }
}

}  // namespace adora
