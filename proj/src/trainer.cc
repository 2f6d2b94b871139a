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

#include "adora/trainer.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "adora/error.h"
#include "adora/rng.h"

namespace adora {
namespace {

constexpr std::uint64_t kShuffleTag = 0x5eed5u;
constexpr int kMaxTokens = 32;

}  // namespace

std::string_view ToString(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adaptive_moments";
}

std::string_view ToString(LossAgg k) {
  return k == LossAgg::kResponseMean ? "response_mean" : "token_mean";
}

OptimizerKind ParseOptimizerKind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adaptive_moments") return OptimizerKind::kAdaptiveMoments;
  throw ConfigError("train.optimizer", "unknown optimizer '" + std::string(name) +
                                           "' (expected sgd|adaptive_moments)");
}

LossAgg ParseLossAgg(std::string_view name) {
  if (name == "response_mean") return LossAgg::kResponseMean;
  if (name == "token_mean") return LossAgg::kTokenMean;
  throw ConfigError("train.loss_agg", "unknown aggregation '" + std::string(name) +
                                          "' (expected response_mean|token_mean)");
}

void TrainConfig::Validate(std::string_view prefix) const {
  const std::string p(prefix);
  if (group_size < 2) throw ConfigError(p + ".group_size", "must be >= 2");
  if (train_batch_size < 1) throw ConfigError(p + ".train_batch_size", "must be >= 1");
  if (mini_batch_size < 1 || mini_batch_size > train_batch_size) {
    throw ConfigError(p + ".mini_batch_size", "must be in [1, train_batch_size]");
  }
  if (!(clip_low > 0.0 && clip_low < 1.0)) {
    throw ConfigError(p + ".clip_low", "must be in (0, 1)");
  }
  if (!(clip_high > 0.0 && clip_high < 1.0)) {
    throw ConfigError(p + ".clip_high", "must be in (0, 1)");
  }
  if (!(kl_coeff >= 0.0) || !std::isfinite(kl_coeff)) {
    throw ConfigError(p + ".kl_coeff", "must be >= 0");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError(p + ".learning_rate", "must be > 0");
  }
  if (epochs < 0) throw ConfigError(p + ".epochs", "must be >= 0");
  if (max_response_len < 0) {
    throw ConfigError(p + ".max_response_len", "must be >= 0 (0 = 3 x difficulty)");
  }
  if (max_response_factor < 1) {
    throw ConfigError(p + ".max_response_factor", "must be >= 1");
  }
  calibrator.Validate(p + ".calibrator");
}

int TrainConfig::MaxLenFor(const TaskInstance& instance) const {
  return max_response_len > 0 ? max_response_len
                              : max_response_factor * instance.difficulty;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, int num_tokens)
    : kind_(kind), lr_(learning_rate), m_(num_tokens), v_(num_tokens) {}

void Optimizer::Step(PolicyParams& params, const PolicyGradient& grad) {
  if (grad.size() != params.size()) {
    throw InputError("gradient shape does not match parameters");
  }
  if (!grad.AllFinite()) throw NumericalError("non-finite gradient");
  std::span<double> w = params.values();
  std::span<const double> g = grad.values();
  ++t_;
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += lr_ * g[i];
    return;
  }
  std::span<double> m = m_.values();
  std::span<double> v = v_.values();
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
    v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    w[i] += lr_ * mhat / (std::sqrt(vhat) + kAdamEpsilon);
  }
}

std::vector<RolloutGroup> RolloutBatch(const PolicySnapshot& old,
                                       std::span<const TaskInstance> batch,
                                       const TrainConfig& cfg, int epoch) {
  if (batch.empty()) throw InputError("rollout batch is empty");
  std::vector<RolloutGroup> groups;
  groups.reserve(batch.size());
  for (const TaskInstance& inst : batch) {
    RolloutGroup g;
    g.instance = inst;
    g.trajectories.reserve(static_cast<std::size_t>(cfg.group_size));
    for (int r = 0; r < cfg.group_size; ++r) {
      RngStream rng(DeriveSeed({cfg.seed, static_cast<std::uint64_t>(epoch),
                                inst.id, static_cast<std::uint64_t>(r)}));
      g.trajectories.push_back(
          SampleTrajectory(old.params(), inst, cfg.MaxLenFor(inst), rng));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

SurrogateResult SurrogateObjective(const PolicyParams& policy,
                                   const PolicySnapshot& ref,
                                   std::span<const RolloutGroup> groups,
                                   std::span<const AdvantageSet> advantages,
                                   const TrainConfig& cfg) {
  if (groups.size() != advantages.size()) {
    throw InputError("one advantage set per group is required");
  }
  const int v = policy.num_tokens();
  if (v > kMaxTokens) throw InputError("vocabulary too large");
  SurrogateResult r;
  r.gradient = PolicyGradient(v);

  long total_tokens = 0;
  for (const RolloutGroup& g : groups) {
    for (const Trajectory& t : g.trajectories) total_tokens += static_cast<long>(t.tokens.size());
  }

  std::array<double, kMaxTokens> logits{};
  std::array<double, kMaxTokens> logp{};
  std::array<double, kMaxTokens> logq{};
  std::array<double, kMaxTokens> dlogits{};
  const std::span<double> logits_s(logits.data(), v);
  const std::span<double> logp_s(logp.data(), v);
  const std::span<double> logq_s(logq.data(), v);
  const std::span<const double> dlogits_s(dlogits.data(), v);

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const RolloutGroup& group = groups[gi];
    const AdvantageSet& adv = advantages[gi];
    if (adv.weighted.size() != group.trajectories.size()) {
      throw InputError("advantage set does not match its group");
    }
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const Trajectory& traj = group.trajectories[i];
      const std::size_t n = traj.tokens.size();
      if (n == 0) {
        ++r.skipped_trajectories;
        continue;
      }
      double scale;
      if (cfg.loss_agg == LossAgg::kResponseMean) {
        scale = 1.0 / (static_cast<double>(groups.size()) *
                       static_cast<double>(group.trajectories.size()) *
                       static_cast<double>(n));
      } else {
        scale = 1.0 / static_cast<double>(total_tokens);
      }
      const double a = adv.weighted[i];
      Token prev = kStartToken;
      for (std::size_t t = 0; t < n; ++t) {
        const Token tok = traj.tokens[t];
        const PolicyState s = StateAt(group.instance, prev, static_cast<int>(t), v);
        ComputeLogits(policy, s, logits_s);
        LogSoftmax(logits_s, logp_s);
        ComputeLogits(ref.params(), s, logits_s);
        LogSoftmax(logits_s, logq_s);

        const double ratio = std::exp(logp[tok] - traj.logprobs_old[t]);
        const double clipped_ratio =
            std::clamp(ratio, 1.0 - cfg.clip_low, 1.0 + cfg.clip_high);
        const double unclipped = ratio * a;
        const double clipped = clipped_ratio * a;
        const bool clip_active = clipped < unclipped;
        const double kl = CategoricalKl(logp_s, logq_s);
        r.objective += scale * ((clip_active ? clipped : unclipped) -
                                cfg.kl_coeff * kl);
        r.kl_sum += kl;
        ++r.tokens;
        if (clip_active) ++r.clipped_tokens;

        for (int j = 0; j < v; ++j) {
          const double p = std::exp(logp[j]);
          // d KL / d z_j
          double d = -cfg.kl_coeff * p * (logp[j] - logq[j] - kl);
          if (!clip_active) d -= unclipped * p;
          dlogits[j] = d;
        }
        if (!clip_active) dlogits[tok] += unclipped;
        AddLogitGradient(r.gradient, s, dlogits_s, scale);
        prev = tok;
      }
    }
  }
  return r;
}

TrainResult Train(const TaskDataset& dataset, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks,
                  std::optional<PolicyParams> init) {
  cfg.Validate();
  if (dataset.instances.empty()) throw InputError("dataset is empty");
  ValidateDataset(dataset);

  TrainResult result;
  result.params = init ? std::move(*init) : PolicyParams(dataset.vocab_size);
  if (result.params.num_tokens() != dataset.vocab_size) {
    throw InputError("initial policy vocabulary does not match the dataset");
  }
  PolicyParams& params = result.params;
  const PolicySnapshot ref(params, SnapshotTag::kReference);
  Optimizer optimizer(cfg.optimizer, cfg.learning_rate, params.num_tokens());

  const std::size_t n = dataset.instances.size();
  const std::size_t batch_size = static_cast<std::size_t>(cfg.train_batch_size);
  const std::size_t mini = static_cast<std::size_t>(cfg.mini_batch_size);
  int step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffle(DeriveSeed({cfg.seed, static_cast<std::uint64_t>(epoch), kShuffleTag}));
    shuffle.Shuffle(std::span<std::size_t>(order));

    EpochRecord epoch_record;
    epoch_record.epoch = epoch;

    for (std::size_t begin = 0; begin < n; begin += batch_size) {
      const std::size_t end = std::min(n, begin + batch_size);
      std::vector<TaskInstance> batch;
      batch.reserve(end - begin);
      for (std::size_t k = begin; k < end; ++k) batch.push_back(dataset.instances[order[k]]);

      const PolicySnapshot old(params, SnapshotTag::kOld);
      std::vector<RolloutGroup> groups = RolloutBatch(old, batch, cfg, epoch);

      StepRecord record;
      StepStats& st = record.stats;
      st.step = step;
      st.epoch = epoch;

      std::vector<RolloutGroup> retained;
      std::vector<AdvantageSet> retained_adv;
      double reward_sum = 0.0;
      double length_sum = 0.0;
      int rollouts = 0;
      double weight_sum = 0.0;
      for (RolloutGroup& g : groups) {
        GroupRecord gr;
        gr.step = step;
        gr.epoch = epoch;
        gr.instance_id = g.instance_id();
        gr.difficulty = g.instance.difficulty;
        gr.outcomes = OutcomesOf(g);
        for (int i = 0; i < gr.outcomes.size(); ++i) {
          reward_sum += gr.outcomes.rewards[i];
          length_sum += gr.outcomes.lengths[i];
          ++rollouts;
        }
        gr.filtered = cfg.dapo_filter && HasUniformReward(gr.outcomes);
        gr.advantages = Calibrate(g, cfg.calibrator);

        epoch_record.entries.push_back(
            EpochEntry{gr.instance_id, gr.difficulty, gr.advantages.classification,
                       gr.advantages.stats.success_rate, gr.advantages.weight,
                       gr.filtered});
        if (gr.filtered) {
          ++st.filtered_count;
        } else {
          if (gr.advantages.classification == SampleClass::kTas) {
            ++st.tas_count;
          } else {
            ++st.tds_count;
          }
          weight_sum += gr.advantages.weight;
          retained.push_back(std::move(g));
          retained_adv.push_back(gr.advantages);
        }
        record.groups.push_back(std::move(gr));
      }
      st.mean_reward = reward_sum / rollouts;
      st.mean_response_length = length_sum / rollouts;
      if (!retained.empty()) st.mean_weight = weight_sum / static_cast<double>(retained.size());

      long tokens = 0;
      long clipped = 0;
      double kl_sum = 0.0;
      double objective_sum = 0.0;
      int minibatches = 0;
      for (std::size_t mb = 0; mb < retained.size(); mb += mini) {
        const std::size_t mb_end = std::min(retained.size(), mb + mini);
        const std::span<const RolloutGroup> mb_groups(retained.data() + mb, mb_end - mb);
        const std::span<const AdvantageSet> mb_adv(retained_adv.data() + mb, mb_end - mb);
        const SurrogateResult sr = SurrogateObjective(params, ref, mb_groups, mb_adv, cfg);
        if (callbacks.on_minibatch) {
          callbacks.on_minibatch(MiniBatchView{step, params, ref, mb_groups, mb_adv, sr});
        }
        optimizer.Step(params, sr.gradient);
        tokens += sr.tokens;
        clipped += sr.clipped_tokens;
        kl_sum += sr.kl_sum;
        objective_sum += sr.objective;
        ++minibatches;
      }
      if (minibatches > 0) st.surrogate_loss = -objective_sum / minibatches;
      if (tokens > 0) {
        st.mean_kl = kl_sum / static_cast<double>(tokens);
        st.clip_fraction = static_cast<double>(clipped) / static_cast<double>(tokens);
      }

      result.steps.push_back(st);
      if (callbacks.on_step) callbacks.on_step(record);
      ++step;
      if (callbacks.on_checkpoint && callbacks.checkpoint_every > 0 &&
          step % callbacks.checkpoint_every == 0) {
        callbacks.on_checkpoint(step, params);
      }
    }
    if (callbacks.on_epoch) callbacks.on_epoch(epoch_record);
    result.epochs.push_back(std::move(epoch_record));
  }
  return result;
}

TasTraceSummary SummarizeTasTrace(std::span<const EpochRecord> records) {
  TasTraceSummary summary;
  for (const EpochRecord& rec : records) {
    TasTraceSummary::EpochCounts counts;
    counts.epoch = rec.epoch;
    for (const EpochEntry& e : rec.entries) {
      std::vector<int>& epochs = summary.tas_epochs[e.instance_id];
      if (e.filtered) {
        ++counts.filtered;
        continue;
      }
      TasTraceSummary::Counts& by_diff = counts.by_difficulty[e.difficulty];
      if (e.classification == SampleClass::kTas) {
        ++counts.total.tas;
        ++by_diff.tas;
        epochs.push_back(rec.epoch);
      } else {
        ++counts.total.tds;
        ++by_diff.tds;
      }
    }
    summary.per_epoch.push_back(std::move(counts));
  }
  return summary;
}

}  // namespace adora
