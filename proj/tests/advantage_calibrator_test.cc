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

#include "adora/advantage_calibrator.h"
#include "adora/error.h"
#include "oracles.h"

using namespace adora;

namespace {

GroupOutcomes Outcomes(std::vector<double> rewards, std::vector<int> lengths) {
  return GroupOutcomes{std::move(rewards), std::move(lengths)};
}

RolloutGroup GroupOf(const std::vector<double>& rewards) {
  RolloutGroup g;
  g.instance = TaskInstance{7, {1}, 1, 1};
  for (double r : rewards) {
    Trajectory t;
    t.instance_id = 7;
    t.tokens = {1};
    t.verdict.reward = r;
    t.verdict.success = r == 1.0;
    t.verdict.response_length = 1;
    g.trajectories.push_back(t);
  }
  return g;
}

}  // namespace

TEST_CASE("group normalization by hand") {
  const std::vector<double> r1 = {1, 0, 0, 0};
  const auto a = NormalizeGroup(r1, 1e-6);
  CHECK(a[0] == doctest::Approx(1.7321).epsilon(1e-4));
  for (int i = 1; i < 4; ++i) CHECK(a[i] == doctest::Approx(-0.5774).epsilon(1e-4));

  const std::vector<double> r2 = {1, 1, 1, 1};
  for (double x : NormalizeGroup(r2, 1e-6)) CHECK(x == 0.0);

  const std::vector<double> r3 = {1, 0};
  const auto c = NormalizeGroup(r3, 1e-6);
  CHECK(c[0] == doctest::Approx(1.0));
  CHECK(c[1] == doctest::Approx(-1.0));

  const std::vector<double> one = {1};
  CHECK_THROWS_AS(NormalizeGroup(one, 1e-6), InputError);
}

TEST_CASE("normalization agrees with the long double oracle") {
  RngStream rng(3);
  for (int t = 0; t < 500; ++t) {
    const int g = 2 + static_cast<int>(rng.Below(15));
    std::vector<double> r(g);
    for (double& x : r) x = rng.Uniform() * 4 - 2;
    const auto got = NormalizeGroup(r, 1e-6);
    const auto want = oracle::Normalize(r, 1e-6);
    for (int i = 0; i < g; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("utility statistics") {
  SampleUtilityStats s = ComputeStats(Outcomes({1, 0, 1, 0}, {10, 20, 30, 25}));
  CHECK(*s.max_success_length == 30);
  CHECK(*s.mean_failure_length == 22.5);
  CHECK(s.success_rate == 0.5);
  CHECK(LengthAdvantage(s));

  s = ComputeStats(Outcomes(std::vector<double>(8, 0.0), std::vector<int>(8, 3)));
  CHECK_FALSE(s.has_success);
  CHECK_FALSE(s.max_success_length.has_value());
  CHECK(s.success_rate == 0.0);
  CHECK_FALSE(LengthAdvantage(s));
  CHECK_FALSE(DifficultyAdvantage(s, 0.5));

  s = ComputeStats(Outcomes({1, 1, 1, 0, 0, 0, 0, 0}, std::vector<int>(8, 2)));
  CHECK(s.success_rate == 0.375);
  CHECK(DifficultyAdvantage(s, 0.5));
  // Equal lengths: a tie is not an advantage.
  CHECK_FALSE(LengthAdvantage(s));

  s = ComputeStats(Outcomes({1, 1}, {4, 2}));
  CHECK_FALSE(s.has_failure);
  CHECK_FALSE(s.mean_failure_length.has_value());
  CHECK(LengthAdvantage(s));
  CHECK(s.success_rate == 1.0);
  CHECK_FALSE(DifficultyAdvantage(s, 0.5));
  CHECK(DifficultyAdvantage(s, 1.0));
}

TEST_CASE("classify and weight examples") {
  CalibratorConfig c;
  c.strategy = Strategy::kAttenuate;
  SampleUtilityStats s = ComputeStats(Outcomes({1, 0}, {1, 5}));
  ClassWeight w = ClassifyAndWeight(s, c);
  CHECK(w.classification == SampleClass::kTds);
  CHECK(w.weight == 0.1);

  c.strategy = Strategy::kAmplify;
  s = ComputeStats(Outcomes({1, 0, 0, 0}, {5, 1, 1, 1}));
  w = ClassifyAndWeight(s, c);
  CHECK(w.classification == SampleClass::kTas);
  CHECK(w.weight == 2.0);

  c.strategy = Strategy::kOff;
  CHECK(ClassifyAndWeight(s, c).weight == 1.0);

  c.weight_override = 1.0;
  c.strategy = Strategy::kAmplify;
  w = ClassifyAndWeight(s, c);
  CHECK(w.classification == SampleClass::kTas);
  CHECK(w.weight == 1.0);
}

TEST_CASE("calibrate scales raw advantages") {
  CalibratorConfig c;
  c.strategy = Strategy::kOff;
  AdvantageSet a = Calibrate(Outcomes({1, 0, 0, 0}, {5, 1, 1, 1}), c);
  CHECK(a.weighted == a.raw);

  c.strategy = Strategy::kAmplify;
  a = Calibrate(Outcomes({1, 0, 0, 0}, {5, 1, 1, 1}), c);
  REQUIRE(a.weight == 2.0);
  for (std::size_t i = 0; i < a.raw.size(); ++i) CHECK(a.weighted[i] == 2.0 * a.raw[i]);

  a = Calibrate(Outcomes({1, 1, 1}, {1, 2, 3}), c);
  for (double x : a.raw) CHECK(x == 0.0);
}

TEST_CASE("G=4 exhaustive patterns against the oracle") {
  RngStream rng(17);
  int cases = 0;
  for (Strategy st : {Strategy::kAttenuate, Strategy::kAmplify, Strategy::kOff}) {
    CalibratorConfig c;
    c.strategy = st;
    const oracle::Strat os = st == Strategy::kAttenuate ? oracle::Strat::kAttenuate
                             : st == Strategy::kAmplify ? oracle::Strat::kAmplify
                                                        : oracle::Strat::kOff;
    for (int mask = 0; mask < 16; ++mask) {
      for (int rep = 0; rep < 50; ++rep) {
        std::vector<bool> succ(4);
        GroupOutcomes o;
        for (int i = 0; i < 4; ++i) {
          succ[i] = (mask >> i) & 1;
          o.rewards.push_back(succ[i] ? 1.0 : 0.0);
          o.lengths.push_back(static_cast<int>(rng.Below(6)));
        }
        const AdvantageSet a = Calibrate(o, c);
        const auto want = oracle::Classify(succ, o.lengths, os, c.tau, c.lambda_att, c.lambda_amp);
        CHECK((a.classification == SampleClass::kTas) == want.tas);
        CHECK(a.weight == want.weight);
        ++cases;
      }
    }
  }
  CHECK(cases == 2400);
}

TEST_CASE("explicit criteria") {
  CalibratorConfig c;
  c.strategy = Strategy::kAttenuate;
  c.criterion = Criterion::kDifficulty;
  // Long failure, so no length advantage, but 1/4 <= tau.
  const SampleUtilityStats s = ComputeStats(Outcomes({1, 0, 0, 0}, {1, 9, 9, 9}));
  CHECK(ClassifyAndWeight(s, c).classification == SampleClass::kTas);
  c.criterion = Criterion::kLength;
  CHECK(ClassifyAndWeight(s, c).classification == SampleClass::kTds);
  c.criterion = Criterion::kJoint;
  CHECK(ClassifyAndWeight(s, c).classification == SampleClass::kTds);
}

TEST_CASE("dynamic sample filter") {
  std::vector<RolloutGroup> gs = {GroupOf({1, 1, 1, 1}), GroupOf({1, 0, 1, 0})};
  const auto kept = DynamicSampleFilter(gs);
  REQUIRE(kept.size() == 1u);
  CHECK(kept[0].trajectories[1].verdict.reward == 0.0);
  CHECK(DynamicSampleFilter({}).empty());
  CHECK(HasUniformReward(Outcomes({0, 0}, {1, 1})));
}

TEST_CASE("config validation names the field") {
  CalibratorConfig c;
  c.tau = 1.5;
  try {
    c.Validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "calibrator.tau");
  }
  c = {};
  c.lambda_att = 1.0;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c = {};
  c.lambda_amp = 1.0;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c = {};
  c.tau = 0.0;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  CHECK_NOTHROW(CalibratorConfig{}.Validate());
}

TEST_CASE("group validation") {
  RolloutGroup g = GroupOf({1});
  CHECK_THROWS_AS(ValidateGroup(g), InputError);
  g = GroupOf({1, 0});
  g.trajectories[1].instance_id = 8;
  CHECK_THROWS_AS(ValidateGroup(g), InputError);
}
