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

#include "adora/policy.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "adora/error.h"
#include "json.hpp"

namespace adora {
namespace {

using nlohmann::json;

constexpr std::string_view kCheckpointFormat = "adora-policy/1";
constexpr int kMaxTokens = 32;

using Buffer = std::array<double, kMaxTokens>;

// Log-probabilities of one state into `logp`.
void StateLogProbs(const PolicyParams& params, PolicyState state, Buffer& logp) {
  const int v = params.num_tokens();
  Buffer logits;
  ComputeLogits(params, state, std::span<double>(logits.data(), v));
  LogSoftmax(std::span<const double>(logits.data(), v),
             std::span<double>(logp.data(), v));
}

void CheckTokens(const PolicyParams& params, std::span<const Token> tokens) {
  const Token term = params.num_tokens() - 1;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || tokens[t] > term) {
      throw InputError("token id " + std::to_string(tokens[t]) +
                       " out of range at position " + std::to_string(t));
    }
    if (tokens[t] == term && t + 1 != tokens.size()) {
      throw InputError("terminator before the end of the sequence");
    }
  }
}

}  // namespace

PolicyParams::PolicyParams(int num_tokens) : num_tokens_(num_tokens) {
  if (num_tokens < 2 || num_tokens > kMaxTokens) {
    throw InputError("policy num_tokens must be in [2, 32]");
  }
  const std::size_t t = table_size();
  values_.assign(2 * t + 2 * static_cast<std::size_t>(num_tokens_ - 1) +
                     static_cast<std::size_t>(num_tokens_),
                 0.0);
}

std::vector<PolicyParams::ArrayLayout> PolicyParams::Layout() const {
  const int v = num_tokens_;
  return {
      {"prev_token_table", v, v, PrevIndex(0, 0)},
      {"prompt_digit_table", v, v, DigitIndex(0, 0)},
      {"shift_table", 2, v - 1, ShiftIndex(0, 0)},
      {"bias", 1, v, BiasIndex(0)},
  };
}

bool PolicyParams::AllFinite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double x) { return std::isfinite(x); });
}

void PolicyParams::SetZero() { std::fill(values_.begin(), values_.end(), 0.0); }

PolicyParams MakeInitialPolicy(int num_tokens, const PriorInit& prior) {
  PolicyParams p(num_tokens);
  const Token end = num_tokens - 1;
  p.shift(0, 0) = prior.copy_skill;
  p.shift(1, 0) = prior.carry_skill;
  p.prompt_digit(end, end) = prior.stop_at_end;
  for (Token d = 0; d < end; ++d) p.prompt_digit(d, end) = -prior.stop_mid;
  return p;
}

PolicyState StateAt(const TaskInstance& instance, Token prev, int step,
                    int num_tokens) {
  const int edge = num_tokens - 1;
  PolicyState s;
  if (prev == kStartToken) {
    s.prev_row = edge;
  } else {
    if (prev < 0 || prev >= edge) {
      throw InputError("previous token " + std::to_string(prev) +
                       " is not a digit");
    }
    s.prev_row = prev;
  }
  if (step < 0) throw InputError("step must be non-negative");
  if (static_cast<std::size_t>(step) < instance.prompt.size()) {
    const Token d = instance.prompt[static_cast<std::size_t>(step)];
    if (d < 0 || d >= edge) throw InputError("prompt token out of range");
    s.digit_row = d;
  } else {
    s.digit_row = edge;
  }
  return s;
}

void ComputeLogits(const PolicyParams& params, PolicyState state,
                   std::span<double> out) {
  const int v = params.num_tokens();
  const int b = v - 1;
  const std::span<const double> w = params.values();
  const double* prev = &w[params.PrevIndex(state.prev_row, 0)];
  const double* digit = &w[params.DigitIndex(state.digit_row, 0)];
  const double* bias = &w[params.BiasIndex(0)];
  for (int j = 0; j < v; ++j) out[j] = prev[j] + digit[j] + bias[j];
  {
    const int kind = state.prev_row == b ? 0 : 1;
    const int base = (state.prev_row == b ? 0 : state.prev_row) +
                     (state.digit_row == b ? 0 : state.digit_row);
    const double* shift = &w[params.ShiftIndex(kind, 0)];
    for (int j = 0; j < b; ++j) out[j] += shift[((j - base) % b + b) % b];
  }
}

void LogSoftmax(std::span<const double> logits, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericalError("non-finite logit");
    mx = std::max(mx, z);
  }
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] - lse;
}

void AddLogitGradient(PolicyGradient& grad, PolicyState state,
                      std::span<const double> dlogits, double scale) {
  const int v = grad.num_tokens();
  const int b = v - 1;
  std::span<double> g = grad.values();
  double* prev = &g[grad.PrevIndex(state.prev_row, 0)];
  double* digit = &g[grad.DigitIndex(state.digit_row, 0)];
  double* bias = &g[grad.BiasIndex(0)];
  for (int j = 0; j < v; ++j) {
    const double d = scale * dlogits[j];
    prev[j] += d;
    digit[j] += d;
    bias[j] += d;
  }
  {
    const int kind = state.prev_row == b ? 0 : 1;
    const int base = (state.prev_row == b ? 0 : state.prev_row) +
                     (state.digit_row == b ? 0 : state.digit_row);
    double* shift = &g[grad.ShiftIndex(kind, 0)];
    for (int j = 0; j < b; ++j) shift[((j - base) % b + b) % b] += scale * dlogits[j];
  }
}

double CategoricalKl(std::span<const double> logp, std::span<const double> logq) {
  double kl = 0.0;
  for (std::size_t j = 0; j < logp.size(); ++j) {
    const double p = std::exp(logp[j]);
    if (p > 0.0) kl += p * (logp[j] - logq[j]);
  }
  // Rounding can leave a tiny negative residue for nearly equal inputs.
  return std::max(kl, 0.0);
}

std::vector<double> TokenDistribution(const PolicyParams& params,
                                      const TaskInstance& instance, Token prev,
                                      int step) {
  const int v = params.num_tokens();
  Buffer logp;
  StateLogProbs(params, StateAt(instance, prev, step, v), logp);
  std::vector<double> p(static_cast<std::size_t>(v));
  for (int j = 0; j < v; ++j) p[j] = std::exp(logp[j]);
  return p;
}

Trajectory SampleTrajectory(const PolicyParams& params,
                            const TaskInstance& instance, int max_len,
                            RngStream& rng) {
  if (max_len < 1) throw InputError("max_len must be >= 1");
  const int v = params.num_tokens();
  const Token term = v - 1;
  Trajectory traj;
  traj.instance_id = instance.id;
  Token prev = kStartToken;
  Buffer logp;
  for (int step = 0; step < max_len; ++step) {
    StateLogProbs(params, StateAt(instance, prev, step, v), logp);
    const double u = rng.Uniform();
    double cum = 0.0;
    Token tok = term;
    for (int j = 0; j < v; ++j) {
      cum += std::exp(logp[j]);
      if (u < cum) {
        tok = j;
        break;
      }
    }
    // u landing in the rounding gap above the total mass falls back to the
    // last token with non-zero probability.
    if (cum <= u) {
      for (int j = v - 1; j >= 0; --j) {
        if (std::exp(logp[j]) > 0.0) {
          tok = j;
          break;
        }
      }
    }
    traj.tokens.push_back(tok);
    traj.logprobs_old.push_back(logp[tok]);
    if (tok == term) break;
    prev = tok;
  }
  traj.logprobs_new = traj.logprobs_old;
  traj.verdict = Verify(instance, traj.tokens, term);
  return traj;
}

std::vector<Token> GreedyDecode(const PolicyParams& params,
                                const TaskInstance& instance, int max_len) {
  if (max_len < 1) throw InputError("max_len must be >= 1");
  const int v = params.num_tokens();
  const Token term = v - 1;
  std::vector<Token> tokens;
  Token prev = kStartToken;
  Buffer logits;
  for (int step = 0; step < max_len; ++step) {
    ComputeLogits(params, StateAt(instance, prev, step, v),
                  std::span<double>(logits.data(), v));
    Token best = 0;
    for (int j = 1; j < v; ++j) {
      if (logits[j] > logits[best]) best = j;
    }
    tokens.push_back(best);
    if (best == term) break;
    prev = best;
  }
  return tokens;
}

LogProbResult LogProbAndGrad(const PolicyParams& params,
                             const TaskInstance& instance,
                             std::span<const Token> tokens) {
  if (tokens.empty()) throw InputError("token sequence must be non-empty");
  CheckTokens(params, tokens);
  const int v = params.num_tokens();
  LogProbResult r{{}, PolicyGradient(v)};
  r.logprobs.reserve(tokens.size());
  Token prev = kStartToken;
  Buffer logp;
  Buffer dlogits;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const PolicyState s = StateAt(instance, prev, static_cast<int>(t), v);
    StateLogProbs(params, s, logp);
    r.logprobs.push_back(logp[tokens[t]]);
    for (int j = 0; j < v; ++j) dlogits[j] = -std::exp(logp[j]);
    dlogits[tokens[t]] += 1.0;
    AddLogitGradient(r.gradient, s, std::span<const double>(dlogits.data(), v));
    prev = tokens[t];
  }
  return r;
}

std::vector<double> KlDivergence(const PolicyParams& params,
                                 const PolicySnapshot& ref,
                                 const TaskInstance& instance,
                                 std::span<const Token> tokens) {
  CheckTokens(params, tokens);
  const int v = params.num_tokens();
  if (ref.params().num_tokens() != v) {
    throw InputError("reference policy has a different vocabulary");
  }
  std::vector<double> kl;
  kl.reserve(tokens.size());
  Token prev = kStartToken;
  Buffer logp;
  Buffer logq;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const PolicyState s = StateAt(instance, prev, static_cast<int>(t), v);
    StateLogProbs(params, s, logp);
    StateLogProbs(ref.params(), s, logq);
    kl.push_back(CategoricalKl(std::span<const double>(logp.data(), v),
                               std::span<const double>(logq.data(), v)));
    prev = tokens[t];
  }
  return kl;
}

void WriteCheckpoint(std::ostream& out, const PolicyParams& params) {
  json arrays = json::array();
  const std::span<const double> w = params.values();
  for (const auto& a : params.Layout()) {
    const std::size_t n = static_cast<std::size_t>(a.rows) * a.cols;
    arrays.push_back({{"name", a.name},
                      {"shape", {a.rows, a.cols}},
                      {"data", std::vector<double>(w.begin() + a.offset,
                                                   w.begin() + a.offset + n)}});
  }
  json doc = {{"format", kCheckpointFormat},
              {"num_tokens", params.num_tokens()},
              {"arrays", std::move(arrays)}};
  out << doc.dump() << '\n';
}

PolicyParams ReadCheckpoint(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("checkpoint: ") + e.what());
  }
  try {
    if (doc.value("format", "") != kCheckpointFormat) {
      throw ParseError(0, "checkpoint: unknown format");
    }
    PolicyParams params(doc.at("num_tokens").get<int>());
    const auto layout = params.Layout();
    const json& arrays = doc.at("arrays");
    if (arrays.size() != layout.size()) {
      throw ParseError(0, "checkpoint: wrong number of arrays");
    }
    std::span<double> w = params.values();
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const json& a = arrays[i];
      if (a.at("name").get<std::string>() != layout[i].name) {
        throw ParseError(0, "checkpoint: expected array '" + layout[i].name + "'");
      }
      const auto shape = a.at("shape").get<std::vector<int>>();
      const auto data = a.at("data").get<std::vector<double>>();
      if (shape != std::vector<int>{layout[i].rows, layout[i].cols} ||
          data.size() != static_cast<std::size_t>(layout[i].rows) * layout[i].cols) {
        throw ParseError(0, "checkpoint: bad shape for '" + layout[i].name + "'");
      }
      std::copy(data.begin(), data.end(), w.begin() + layout[i].offset);
    }
    if (!params.AllFinite()) throw ParseError(0, "checkpoint: non-finite value");
    return params;
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("checkpoint: ") + e.what());
  } catch (const InputError& e) {
    throw ParseError(0, std::string("checkpoint: ") + e.what());
  }
}

void SaveCheckpoint(const std::string& path, const PolicyParams& params) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  WriteCheckpoint(out, params);
  if (!out) throw IoError("write failed: " + path);
}

PolicyParams LoadCheckpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return ReadCheckpoint(in);
}

}  // namespace adora
