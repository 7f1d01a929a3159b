// SPDX-License-Identifier: Apache-2.0
//
// Three-stage difficulty measurer, contrastive-mode sampling and the adaptive
// patience-based scheduler that decides when to move to harder data.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cdepth/augmentation.hpp"
#include "cdepth/losses.hpp"

namespace cdepth {

inline constexpr int kMaxLevel = 3;

struct StageSpec {
  int level = 1;
  std::vector<WeatherVariantId> train_variants;
  std::vector<WeatherVariantId> contrast_variants;
  int patience = 1;
  int mode_count = 1;
};

/// Level 1: jittered clear; level 2: relative-adverse weathers contrasted with clear;
/// level 3: adverse weathers contrasted with relative-adverse ones.
StageSpec stage_variants(int level, int patience = 1);

struct ContrastPlan {
  WeatherVariantId train_variant;
  WeatherVariantId contrast_variant;
  int stage_train = 1;     // S_aug
  int stage_contrast = 1;  // S_cst
  DetachBranch detached = DetachBranch::kContrast;

  friend bool operator==(const ContrastPlan&, const ContrastPlan&) = default;
};

/// Uniform choice of training and contrast variant for the level.
ContrastPlan sample_contrast_plan(int level, std::uint64_t seed, bool detach_enabled = true);
/// Every legal (train, contrast) pairing for the level: 1, 3 and 9 modes.
std::vector<ContrastPlan> enumerate_contrast_modes(int level, bool detach_enabled = true);

struct SchedulerConfig {
  /// Advance when the epoch mean rises by more than this.
  double threshold = 0.0;
  /// P_1, P_2, P_3. A non-positive P_3 disables early exit from the last level.
  std::array<int, kMaxLevel> patience{1, 1, 0};
  /// Reload the best epoch of the finished level when entering the last level and
  /// that level's patience is at least this value.
  int reload_best_min_patience = 3;
  /// false keeps bookkeeping but never changes level (mixed training).
  bool enabled = true;

  void validate() const;
};

struct BestEpoch {
  int epoch = -1;
  double mean_loss = 0.0;

  friend bool operator==(const BestEpoch&, const BestEpoch&) = default;
};

struct CurriculumState {
  int level = 1;
  int patience_counter = 0;      // p
  int epoch = 0;                 // global epoch index of the epoch in progress
  std::vector<double> batch_losses;  // recordloss for the epoch in progress
  std::vector<double> epoch_means;   // recordkey, cleared on stage switch
  std::optional<BestEpoch> best;     // best epoch of the current level
  ContrastWeightState weight;        // w_curr and r

  int stage_epoch() const { return weight.stage_epoch; }
  friend bool operator==(const CurriculumState&, const CurriculumState&) = default;
};

enum class EpochDecision { kStay, kAdvance, kFinished };

struct EpochOutcome {
  EpochDecision decision = EpochDecision::kStay;
  double mean_loss = 0.0;
  bool new_best = false;  // this epoch is the minimum of its level so far
  int finished_level = 0;
  /// Set when the trainer must restore this epoch of the finished level.
  std::optional<BestEpoch> reload_best;
};

/// Patience-based level scheduler. Consumes only the model loss.
class CurriculumScheduler {
 public:
  CurriculumScheduler(SchedulerConfig config, ContrastWeightParams weights);

  /// Epoch-start hook: updates w_curr from r. Returns the weight for this epoch.
  double begin_epoch();
  /// Appends one batch's model loss. Throws NumericError on NaN/inf.
  void record_batch_loss(double model_loss);
  /// Appends the epoch mean, updates patience and level. Throws DegenerateInputError
  /// when nothing was recorded.
  EpochOutcome end_of_epoch();

  const CurriculumState& state() const { return state_; }
  void restore(CurriculumState state) { state_ = std::move(state); }
  const SchedulerConfig& config() const { return config_; }
  const ContrastWeightParams& weight_params() const { return weights_; }
  StageSpec current_stage() const;

 private:
  SchedulerConfig config_;
  ContrastWeightParams weights_;
  CurriculumState state_;
};

}  // namespace cdepth
