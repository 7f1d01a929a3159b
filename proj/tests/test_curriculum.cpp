// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "cdepth/curriculum.hpp"

using namespace cdepth;

namespace {

struct Replay {
  std::vector<int> levels;            // level during each epoch
  std::vector<EpochDecision> decisions;
  std::vector<double> weights;        // w_curr used in each epoch
  std::vector<EpochOutcome> outcomes;
};

Replay replay(CurriculumScheduler& s, const std::vector<double>& means) {
  Replay r;
  for (double m : means) {
    r.levels.push_back(s.state().level);
    r.weights.push_back(s.begin_epoch());
    s.record_batch_loss(m);
    const EpochOutcome o = s.end_of_epoch();
    r.decisions.push_back(o.decision);
    r.outcomes.push_back(o);
  }
  return r;
}

// decreasing except at the listed epochs, where the mean rises by `rise`
std::vector<double> script(int n, std::set<int> rises, double rise = 0.01) {
  std::vector<double> v;
  double x = 1.0;
  for (int e = 0; e < n; ++e) {
    x += rises.count(e) ? rise : -0.02;
    v.push_back(x);
  }
  return v;
}

}  // namespace

TEST_CASE("stage variants per level") {
  const StageSpec s1 = stage_variants(1);
  CHECK(s1.train_variants == std::vector<WeatherVariantId>{kClearVariant});
  CHECK(s1.mode_count == 1);
  const StageSpec s2 = stage_variants(2);
  CHECK(s2.train_variants.size() == 3);
  for (const auto& v : s2.train_variants) CHECK(v.magnitude == 1);
  CHECK(s2.contrast_variants == std::vector<WeatherVariantId>{kClearVariant});
  CHECK(s2.mode_count == 3);
  const StageSpec s3 = stage_variants(3);
  for (const auto& v : s3.train_variants) CHECK(v.magnitude == 2);
  for (const auto& v : s3.contrast_variants) CHECK(v.magnitude == 1);
  CHECK(s3.mode_count == 9);
  CHECK_THROWS_AS(stage_variants(0), ConfigError);
  CHECK_THROWS_AS(stage_variants(4), ConfigError);
}

TEST_CASE("contrast plans cover 1, 3 and 9 modes uniformly") {
  const int expected[] = {1, 3, 9};
  for (int level = 1; level <= 3; ++level) {
    std::map<std::pair<std::string, std::string>, int> counts;
    const int n = 10000;
    for (int seed = 0; seed < n; ++seed) {
      const ContrastPlan p = sample_contrast_plan(level, static_cast<std::uint64_t>(seed) * 7919 + 1);
      CHECK(p.stage_contrast <= p.stage_train);
      ++counts[{p.train_variant.name(), p.contrast_variant.name()}];
    }
    CHECK(static_cast<int>(counts.size()) == expected[level - 1]);
    CHECK(static_cast<int>(enumerate_contrast_modes(level).size()) == expected[level - 1]);
    if (level == 2) {
      for (const auto& [mode, c] : counts) CHECK(std::abs(c / double(n) - 1.0 / 3.0) < 0.02);
    }
  }
}

TEST_CASE("contrast plans detach the earlier stage") {
  for (const auto& p : enumerate_contrast_modes(3)) CHECK(p.detached == DetachBranch::kContrast);
  for (const auto& p : enumerate_contrast_modes(1)) CHECK(p.detached == DetachBranch::kContrast);
  for (const auto& p : enumerate_contrast_modes(2, false)) CHECK(p.detached == DetachBranch::kNone);
  CHECK_THROWS_AS(sample_contrast_plan(5, 1), ConfigError);
}

TEST_CASE("record batch loss and epoch mean") {
  CurriculumScheduler s({}, {});
  s.begin_epoch();
  for (double v : {1.0, 2.0, 3.0}) s.record_batch_loss(v);
  CHECK(s.state().batch_losses.size() == 3);
  const EpochOutcome o = s.end_of_epoch();
  CHECK(o.mean_loss == 2.0);
  CHECK(s.state().epoch_means == std::vector<double>{2.0});
  CHECK_THROWS_AS(s.record_batch_loss(std::nan("")), NumericError);
  CHECK_THROWS_AS(s.record_batch_loss(INFINITY), NumericError);
  CHECK_THROWS_AS(s.end_of_epoch(), DegenerateInputError);
}

TEST_CASE("threshold decides whether a rise counts") {
  SchedulerConfig c;
  c.threshold = 0.0;
  CurriculumScheduler zero(c, {});
  Replay r = replay(zero, {1.000, 1.001});
  CHECK(r.decisions[1] == EpochDecision::kAdvance);

  c.threshold = 5e-4;
  CurriculumScheduler loose(c, {});
  r = replay(loose, {1.0000, 1.0003});
  CHECK(r.decisions[1] == EpochDecision::kStay);
  CHECK(loose.state().patience_counter == 0);
  CHECK(loose.state().level == 1);
}

TEST_CASE("scripted replay advances exactly at the rising epochs") {
  CurriculumScheduler s({}, {});
  const Replay r = replay(s, script(14, {4, 9}));
  for (int e = 0; e < 14; ++e) {
    const EpochDecision want = (e == 4 || e == 9) ? EpochDecision::kAdvance : EpochDecision::kStay;
    CHECK(r.decisions[e] == want);
  }
  CHECK(r.levels[4] == 1);
  CHECK(r.levels[5] == 2);
  CHECK(r.levels[9] == 2);
  CHECK(r.levels[10] == 3);
  // replay is deterministic
  CurriculumScheduler again({}, {});
  CHECK(replay(again, script(14, {4, 9})).decisions == r.decisions);
}

TEST_CASE("strictly decreasing losses never advance") {
  CurriculumScheduler s({}, {});
  const Replay r = replay(s, script(10, {}));
  for (auto d : r.decisions) CHECK(d == EpochDecision::kStay);
  CHECK(s.state().patience_counter == 0);
  CHECK(s.state().level == 1);
}

TEST_CASE("weight resets to the base at every stage switch") {
  CurriculumScheduler s({}, {});
  const Replay r = replay(s, script(16, {6, 12}));
  const std::vector<double> stage{0.02, 0.02, 0.04, 0.04, 0.08, 0.08, 0.16};
  for (int e = 0; e < 7; ++e) CHECK(r.weights[e] == stage[e]);
  CHECK(r.weights[7] == 0.02);   // first epoch of level 2
  CHECK(r.weights[13] == 0.02);  // first epoch of level 3
  for (int e = 8; e <= 12; ++e) CHECK(r.weights[e] >= r.weights[e - 1]);
}

TEST_CASE("patience counts rises without decrementing") {
  SchedulerConfig c;
  c.patience = {2, 1, 0};
  CurriculumScheduler s(c, {});
  const Replay r = replay(s, {1.0, 1.1, 1.0, 0.9, 0.8, 0.85});
  CHECK(r.decisions[1] == EpochDecision::kStay);
  CHECK(r.decisions[4] == EpochDecision::kStay);
  CHECK(r.decisions[5] == EpochDecision::kAdvance);
}

TEST_CASE("recordkey is cleared on stage switch") {
  CurriculumScheduler s({}, {});
  // the level-2 entry epoch has a higher loss than the last level-1 epoch
  const Replay r = replay(s, {1.0, 1.1, 2.0, 1.9});
  CHECK(r.decisions[1] == EpochDecision::kAdvance);
  CHECK(r.decisions[2] == EpochDecision::kStay);
  CHECK(s.state().level == 2);
  CHECK(s.state().epoch_means.size() == 2);
}

TEST_CASE("last level ends on the budget unless P3 is positive") {
  CurriculumScheduler open_ended({}, {});
  Replay r = replay(open_ended, script(20, {2, 4, 8, 12, 16}));
  CHECK(open_ended.state().level == 3);
  for (auto d : r.decisions) CHECK(d != EpochDecision::kFinished);

  SchedulerConfig c;
  c.patience = {1, 1, 1};
  CurriculumScheduler bounded(c, {});
  r = replay(bounded, script(10, {2, 4, 8}));
  CHECK(r.decisions[8] == EpochDecision::kFinished);
  CHECK(r.outcomes[8].finished_level == 3);
}

TEST_CASE("levels never regress") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> means(30);
    for (double& m : means) m = u(rng);
    CurriculumScheduler s({}, {});
    const Replay r = replay(s, means);
    for (std::size_t i = 1; i < r.levels.size(); ++i) {
      CHECK(r.levels[i] >= r.levels[i - 1]);
      CHECK(r.levels[i] - r.levels[i - 1] <= 1);
    }
  }
}

TEST_CASE("best epoch reload only when entering the last level with P >= 3") {
  SchedulerConfig c;
  c.patience = {1, 3, 0};
  CurriculumScheduler s(c, {});
  // level 1 ends at epoch 1; level 2 needs three rises
  const Replay r = replay(s, {1.0, 1.1, 0.9, 0.8, 0.85, 0.7, 0.75, 0.72, 0.74});
  CHECK_FALSE(r.outcomes[1].reload_best.has_value());
  int advance = -1;
  for (int e = 0; e < static_cast<int>(r.decisions.size()); ++e)
    if (r.decisions[e] == EpochDecision::kAdvance && r.levels[e] == 2) advance = e;
  REQUIRE(advance == 8);
  REQUIRE(r.outcomes[8].reload_best.has_value());
  CHECK(r.outcomes[8].reload_best->epoch == 5);
  CHECK(r.outcomes[8].reload_best->mean_loss == 0.7);

  // P = 1 everywhere: the branch is never taken
  CurriculumScheduler p1({}, {});
  for (const auto& o : replay(p1, script(12, {3, 7})).outcomes) CHECK_FALSE(o.reload_best.has_value());
}

TEST_CASE("disabled scheduler never changes level") {
  SchedulerConfig c;
  c.enabled = false;
  CurriculumScheduler s(c, {});
  replay(s, script(12, {1, 2, 3, 5, 7}));
  CHECK(s.state().level == 1);
}

TEST_CASE("scheduler config is validated") {
  SchedulerConfig c;
  c.patience = {0, 1, 0};
  CHECK_THROWS_AS(CurriculumScheduler(c, {}), ConfigError);
  c.patience = {1, 1, 0};
  c.threshold = std::nan("");
  CHECK_THROWS_AS(CurriculumScheduler(c, {}), ConfigError);
}
