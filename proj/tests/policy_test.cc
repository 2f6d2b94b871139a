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

#include <cmath>
#include <functional>
#include <sstream>

#include "adora/error.h"
#include "adora/policy.h"
#include "oracles.h"

using namespace adora;

namespace {

PolicyParams RandomParams(int v, std::uint64_t seed, double scale = 1.0) {
  PolicyParams p(v);
  RngStream rng(seed);
  for (double& x : p.values()) x = scale * (2.0 * rng.Uniform() - 1.0);
  return p;
}

// Logits recomputed from the table definitions, row by row.
std::vector<double> HandLogits(const PolicyParams& p, int prev_row, int digit_row) {
  const int v = p.num_tokens();
  const int b = v - 1;
  std::vector<double> z(v);
  for (int j = 0; j < v; ++j) {
    z[j] = p.prev_token(prev_row, j) + p.prompt_digit(digit_row, j) + p.bias(j);
  }
  const int kind = prev_row == b ? 0 : 1;
  const int carried = (prev_row == b ? 0 : prev_row) + (digit_row == b ? 0 : digit_row);
  for (int j = 0; j < b; ++j) {
    int off = (j - carried) % b;
    if (off < 0) off += b;
    z[j] += p.shift(kind, off);
  }
  return z;
}

}  // namespace

TEST_CASE("zero parameters give the uniform distribution") {
  const PolicyParams p(6);
  const TaskInstance inst{0, {1, 2, 3}, 1, 3};
  for (int step = 0; step < 5; ++step) {
    const auto d = TokenDistribution(p, inst, step == 0 ? kStartToken : 2, step);
    for (double x : d) CHECK(x == doctest::Approx(1.0 / 6).epsilon(1e-15));
  }
}

TEST_CASE("a large bias dominates as the softmax predicts") {
  PolicyParams p(6);
  p.bias(0) = 10.0;
  const TaskInstance inst{0, {1}, 1, 1};
  const auto d = TokenDistribution(p, inst, kStartToken, 0);
  CHECK(d[0] == doctest::Approx(std::exp(10.0) / (std::exp(10.0) + 5.0)).epsilon(1e-12));
}

TEST_CASE("logits follow the table definitions and distributions sum to one") {
  const PolicyParams p = RandomParams(6, 3);
  const TaskInstance inst{0, {4, 0, 2}, 1, 3};
  std::vector<double> z(6);
  for (Token prev : {kStartToken, 0, 3, 4}) {
    for (int step = 0; step < 5; ++step) {
      const PolicyState s = StateAt(inst, prev, step, 6);
      ComputeLogits(p, s, z);
      const auto hand = HandLogits(p, s.prev_row, s.digit_row);
      for (int j = 0; j < 6; ++j) CHECK(z[j] == doctest::Approx(hand[j]).epsilon(1e-14));
      const auto d = TokenDistribution(p, inst, prev, step);
      double sum = 0;
      for (double x : d) sum += x;
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("state uses the start row first and the end row past the prompt") {
  const TaskInstance inst{0, {2, 3}, 0, 2};
  PolicyState s = StateAt(inst, kStartToken, 0, 6);
  CHECK(s.prev_row == 5);
  CHECK(s.digit_row == 2);
  s = StateAt(inst, 1, 2, 6);
  CHECK(s.prev_row == 1);
  CHECK(s.digit_row == 5);
  CHECK_THROWS_AS(StateAt(inst, 5, 1, 6), InputError);
}

TEST_CASE("the prior writes its named entries only") {
  const PolicyParams p = MakeInitialPolicy(6, {1.5, 0.5, 2.0, -1.0});
  CHECK(p.shift(0, 0) == 1.5);
  CHECK(p.shift(1, 0) == 0.5);
  CHECK(p.prompt_digit(5, 5) == 2.0);
  for (int d = 0; d < 5; ++d) CHECK(p.prompt_digit(d, 5) == 1.0);
  int nonzero = 0;
  for (double x : p.values()) nonzero += x != 0.0;
  CHECK(nonzero == 8);
  CHECK(MakeInitialPolicy(6, {}) == PolicyParams(6));
}

TEST_CASE("a saturated terminator stops at once") {
  PolicyParams p(6);
  p.bias(5) = 1e3;
  const TaskInstance inst{0, {1, 2}, 3, 2};
  RngStream rng(1);
  const Trajectory t = SampleTrajectory(p, inst, 10, rng);
  REQUIRE(t.tokens.size() == 1u);
  CHECK(t.tokens[0] == 5);
  CHECK(t.verdict.response_length == 0);
  CHECK_FALSE(t.verdict.success);
}

TEST_CASE("sampling is reproducible and logprobs are consistent") {
  const PolicyParams p = RandomParams(6, 9);
  const TaskInstance inst{0, {1, 2, 4}, 2, 3};
  RngStream a(77), b(77);
  const Trajectory ta = SampleTrajectory(p, inst, 6, a);
  const Trajectory tb = SampleTrajectory(p, inst, 6, b);
  CHECK(ta.tokens == tb.tokens);
  CHECK(ta.logprobs_new == tb.logprobs_new);
  CHECK(ta.logprobs_new.size() == ta.tokens.size());
  CHECK(ta.logprobs_old == ta.logprobs_new);
  for (double lp : ta.logprobs_new) CHECK(lp <= 0.0);
  const LogProbResult lr = LogProbAndGrad(p, inst, ta.tokens);
  for (std::size_t i = 0; i < lr.logprobs.size(); ++i) {
    CHECK(lr.logprobs[i] == doctest::Approx(ta.logprobs_new[i]).epsilon(1e-12));
  }
}

TEST_CASE("uniform policy success rate matches exhaustive enumeration") {
  // base 2: tokens {0, 1, T}, each with probability 1/3 at every step.
  const TaskInstance inst{0, {1, 0}, 1, 2};
  const int max_len = 4;
  // Enumerate every response: stop on T or after max_len tokens.
  double p_success = 0.0;
  std::function<void(int, int, double)> walk = [&](int depth, int last, double prob) {
    if (depth == max_len) {
      if (last == inst.answer) p_success += prob;
      return;
    }
    // terminator
    if (last == inst.answer) p_success += prob / 3.0;
    walk(depth + 1, 0, prob / 3.0);
    walk(depth + 1, 1, prob / 3.0);
  };
  walk(0, -1, 1.0);

  const PolicyParams p(3);
  const int n = 10000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    RngStream rng(DeriveSeed({5, static_cast<std::uint64_t>(i)}));
    hits += SampleTrajectory(p, inst, max_len, rng).verdict.success;
  }
  const double rate = static_cast<double>(hits) / n;
  const double sigma = std::sqrt(p_success * (1 - p_success) / n);
  CHECK(std::fabs(rate - p_success) < 3 * sigma);
}

TEST_CASE("single-token gradient on the uniform policy is closed form") {
  const PolicyParams p(6);
  const TaskInstance inst{0, {1}, 1, 1};
  const std::vector<Token> tokens = {3};
  const LogProbResult r = LogProbAndGrad(p, inst, tokens);
  for (int j = 0; j < 6; ++j) {
    const double expect = (j == 3 ? 1.0 : 0.0) - 1.0 / 6;
    CHECK(r.gradient.bias(j) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("logprob gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PolicyParams p = RandomParams(5, 100 + seed);
    const TaskInstance inst{0, {1, 3, 0}, 0, 3};
    RngStream rng(seed);
    const Trajectory t = SampleTrajectory(p, inst, 6, rng);
    const LogProbResult r = LogProbAndGrad(p, inst, t.tokens);
    auto f = [&](const std::vector<double>& x) {
      PolicyParams q(5);
      std::copy(x.begin(), x.end(), q.values().begin());
      const auto lp = LogProbAndGrad(q, inst, t.tokens).logprobs;
      double s = 0;
      for (double v : lp) s += v;
      return s;
    };
    const std::vector<double> x(p.values().begin(), p.values().end());
    const auto fd = oracle::FiniteDifference(f, x, 1e-5);
    const std::vector<double> g(r.gradient.values().begin(), r.gradient.values().end());
    CHECK(oracle::RelativeError(g, fd) < 1e-4);

    // Each step's bias block of a one-token gradient sums to zero.
    const std::vector<Token> one = {t.tokens[0]};
    const LogProbResult r1 = LogProbAndGrad(p, inst, one);
    double bias_sum = 0;
    for (int j = 0; j < 5; ++j) bias_sum += r1.gradient.bias(j);
    CHECK(std::fabs(bias_sum) < 1e-12);
  }
}

TEST_CASE("logprob input checks") {
  const PolicyParams p(6);
  const TaskInstance inst{0, {1}, 1, 1};
  CHECK_THROWS_AS(LogProbAndGrad(p, inst, std::vector<Token>{}), InputError);
  CHECK_THROWS_AS(LogProbAndGrad(p, inst, std::vector<Token>{7}), InputError);
  CHECK_THROWS_AS(LogProbAndGrad(p, inst, std::vector<Token>{5, 1}), InputError);
}

TEST_CASE("KL divergence") {
  const PolicyParams p = RandomParams(6, 4);
  const TaskInstance inst{0, {1, 2}, 3, 2};
  const std::vector<Token> tokens = {1, 3, 5};
  const PolicySnapshot same(p, SnapshotTag::kReference);
  for (double k : KlDivergence(p, same, inst, tokens)) CHECK(k == 0.0);

  const std::vector<double> lp = {std::log(0.5), std::log(0.5)};
  const std::vector<double> lq = {std::log(0.9), std::log(0.1)};
  const double hand = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(CategoricalKl(lp, lq) == doctest::Approx(hand).epsilon(1e-14));
  CHECK(hand == doctest::Approx(0.5108).epsilon(1e-4));

  for (std::uint64_t s = 0; s < 50; ++s) {
    const PolicySnapshot ref(RandomParams(6, 1000 + s, 3.0), SnapshotTag::kReference);
    for (double k : KlDivergence(RandomParams(6, s, 3.0), ref, inst, tokens)) CHECK(k >= 0.0);
  }
}

TEST_CASE("greedy decoding breaks ties toward the lowest id") {
  const PolicyParams p(6);
  const TaskInstance inst{0, {1, 2}, 3, 2};
  const auto tokens = GreedyDecode(p, inst, 3);
  CHECK(tokens == std::vector<Token>{0, 0, 0});
}

TEST_CASE("checkpoint round trip is exact") {
  const PolicyParams p = RandomParams(7, 12, 5.0);
  std::stringstream s;
  WriteCheckpoint(s, p);
  CHECK(ReadCheckpoint(s) == p);
  std::stringstream bad("{\"format\":\"adora-policy/1\",\"num_tokens\":3}");
  CHECK_THROWS(ReadCheckpoint(bad));
  CHECK_THROWS_AS(LoadCheckpoint("/nonexistent/ckpt.json"), IoError);
}

TEST_CASE("non-finite logits are rejected") {
  const std::vector<double> z = {0.0, NAN, 1.0};
  std::vector<double> out(3);
  CHECK_THROWS_AS(LogSoftmax(z, out), NumericalError);
}
