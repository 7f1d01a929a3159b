// SPDX-License-Identifier: Apache-2.0
#include "cdepth/curriculum.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "cdepth/seeding.hpp"

namespace cdepth {

namespace {

void check_level(int level) {
  if (level < 1 || level > kMaxLevel) throw ConfigError("curriculum level must be in {1, 2, 3}, got " + std::to_string(level));
}

std::vector<WeatherVariantId> weathers_at(int magnitude) {
  return {{Weather::kRain, magnitude}, {Weather::kSnow, magnitude}, {Weather::kFog, magnitude}};
}

ContrastPlan make_plan(WeatherVariantId train, WeatherVariantId contrast, bool detach_enabled) {
  ContrastPlan plan;
  plan.train_variant = train;
  plan.contrast_variant = contrast;
  plan.stage_train = train.stage();
  plan.stage_contrast = contrast.stage();
  plan.detached = detach_branch(plan.stage_train, plan.stage_contrast, detach_enabled);
  return plan;
}

}  // namespace

StageSpec stage_variants(int level, int patience) {
  check_level(level);
  StageSpec spec;
  spec.level = level;
  spec.patience = patience;
  switch (level) {
    case 1:
      // two independent photometric jitters of the same clear frame
      spec.train_variants = {kClearVariant};
      spec.contrast_variants = {kClearVariant};
      break;
    case 2:
      spec.train_variants = weathers_at(1);
      spec.contrast_variants = {kClearVariant};
      break;
    default:
      spec.train_variants = weathers_at(2);
      spec.contrast_variants = weathers_at(1);
      break;
  }
  spec.mode_count = static_cast<int>(spec.train_variants.size() * spec.contrast_variants.size());
  return spec;
}

ContrastPlan sample_contrast_plan(int level, std::uint64_t seed, bool detach_enabled) {
  const StageSpec spec = stage_variants(level);
  Rng rng(seed);
  const auto& train = spec.train_variants[uniform_int(rng, 0, static_cast<int>(spec.train_variants.size()) - 1)];
  const auto& contrast =
      spec.contrast_variants[uniform_int(rng, 0, static_cast<int>(spec.contrast_variants.size()) - 1)];
  return make_plan(train, contrast, detach_enabled);
}

std::vector<ContrastPlan> enumerate_contrast_modes(int level, bool detach_enabled) {
  const StageSpec spec = stage_variants(level);
  std::vector<ContrastPlan> modes;
  for (const auto& t : spec.train_variants)
    for (const auto& c : spec.contrast_variants) modes.push_back(make_plan(t, c, detach_enabled));
  return modes;
}

void SchedulerConfig::validate() const {
  if (!std::isfinite(threshold)) throw ConfigError("scheduler threshold must be finite");
  for (int l = 0; l < kMaxLevel - 1; ++l) {
    if (patience[l] < 1) throw ConfigError("scheduler patience P_" + std::to_string(l + 1) + " must be >= 1");
  }
}

CurriculumScheduler::CurriculumScheduler(SchedulerConfig config, ContrastWeightParams weights)
    : config_(config), weights_(weights) {
  config_.validate();
  weights_.validate();
  state_.weight.current = weights_.base;
}

StageSpec CurriculumScheduler::current_stage() const {
  return stage_variants(state_.level, config_.patience[state_.level - 1]);
}

double CurriculumScheduler::begin_epoch() {
  state_.weight = update_contrast_weight(weights_, state_.weight);
  return state_.weight.current;
}

void CurriculumScheduler::record_batch_loss(double model_loss) {
  if (!std::isfinite(model_loss)) {
    std::ostringstream s;
    s << "non-finite model loss " << model_loss << " at epoch " << state_.epoch << ", batch "
      << state_.batch_losses.size() << " (level " << state_.level << ")";
    throw NumericError(s.str());
  }
  state_.batch_losses.push_back(model_loss);
}

EpochOutcome CurriculumScheduler::end_of_epoch() {
  if (state_.batch_losses.empty()) throw DegenerateInputError("end_of_epoch: no batch loss recorded this epoch");
  EpochOutcome out;
  out.mean_loss = std::accumulate(state_.batch_losses.begin(), state_.batch_losses.end(), 0.0) /
                  static_cast<double>(state_.batch_losses.size());
  state_.batch_losses.clear();
  state_.epoch_means.push_back(out.mean_loss);

  if (!state_.best || out.mean_loss < state_.best->mean_loss) {
    state_.best = BestEpoch{state_.epoch, out.mean_loss};
    out.new_best = true;
  }

  const auto& keys = state_.epoch_means;
  if (keys.size() >= 2 && keys[keys.size() - 1] - keys[keys.size() - 2] > config_.threshold) {
    ++state_.patience_counter;
  }

  const int patience = config_.patience[state_.level - 1];
  if (config_.enabled && patience > 0 && state_.patience_counter >= patience) {
    out.finished_level = state_.level;
    if (state_.level == kMaxLevel) {
      out.decision = EpochDecision::kFinished;
    } else {
      out.decision = EpochDecision::kAdvance;
      if (state_.level + 1 == kMaxLevel && patience >= config_.reload_best_min_patience) out.reload_best = state_.best;
      ++state_.level;
    }
    state_.patience_counter = 0;
    state_.weight = ContrastWeightState{weights_.base, 0};
    state_.epoch_means.clear();
    state_.best.reset();
  } else {
    ++state_.weight.stage_epoch;
  }
  ++state_.epoch;
  return out;
}

}  // namespace cdepth
