// SPDX-License-Identifier: Apache-2.0
//
// Epoch/batch loop: training step on the augmented view, gradient-free inference
// on the contrast view, loss assembly and the curriculum scheduler.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cdepth/checkpoint.hpp"
#include "cdepth/curriculum.hpp"
#include "cdepth/losses.hpp"
#include "cdepth/model.hpp"
#include "cdepth/synthdata.hpp"

namespace cdepth {

enum class TrainMode { kCurriculumContrastive, kCurriculumOnly, kMixed };

/// Quantity compared by the consistency loss: metric depth, or the network's disparity.
enum class ConsistencySpace { kDepth, kDisparity };

std::string mode_name(TrainMode mode);
TrainMode parse_mode(const std::string& name);

struct TrainConfig {
  std::filesystem::path dataset;
  int batch_size = 4;
  int epochs = 10;
  double learning_rate = 1e-4;
  SchedulerConfig scheduler;
  ContrastWeightParams weights;
  bool detach_enabled = true;
  ConsistencySpace consistency_space = ConsistencySpace::kDepth;
  double smoothness_weight = 1e-3;
  bool jitter_clear = true;  // photometric jitter on clear training inputs
  PhotometricParams photometric;
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainMode mode = TrainMode::kCurriculumContrastive;

  void validate() const;
};

/// Reads the JSON training configuration; unknown keys are rejected.
TrainConfig load_train_config(const std::filesystem::path& file);

struct TrainStepResult {
  DisparityMap disparity;  // D_aug as disparity
  DepthMap depth;          // D_aug
  double model_loss = 0.0;
  double photometric = 0.0;
  double smoothness = 0.0;
  Grid<double> grad_disparity;  // dL_model / dD_aug(disparity)
  ForwardCachePtr cache;
};

/// Forward on `augmented`, warp the clear right view with the predicted depth and
/// compare with the clear left view. Gradients are returned, not applied; pass
/// `cache` and the summed disparity gradient to DepthNet::backward.
TrainStepResult train_step(const DepthNet& net, const Image& augmented, const Image& clear_left,
                           const Image& clear_right, const CameraRig& rig, const PhotometricParams& photometric,
                           double smoothness_weight);

/// Gradient-free prediction for the contrast view.
DepthMap inference_step(const DepthNet& net, const Image& contrast_image, const CameraRig& rig);

struct BatchReport {
  int epoch = 0;
  int batch = 0;
  int level = 1;
  ContrastPlan plan;
  double weight = 0.0;
  double model_loss = 0.0;     // batch mean of L_model
  double contrast_loss = 0.0;  // batch mean of L_cst
  double backward_loss = 0.0;  // model_loss + weight * contrast_loss
  std::vector<WeatherVariantId> train_variants;  // per sample
};

struct EpochReport {
  int epoch = 0;
  int level = 0;  // 0 in mixed mode
  int stage_epoch = 0;
  int patience_counter = 0;
  double weight = 0.0;
  double mean_model_loss = 0.0;
  double mean_contrast_loss = 0.0;
  double wall_seconds = 0.0;
  EpochDecision decision = EpochDecision::kStay;
};

struct TrainHooks {
  std::function<void(const BatchReport&)> on_batch;
  std::function<void(const EpochReport&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochReport> epochs;  // epochs run by this call
  std::vector<double> recordkey;    // epoch means of L_model, all levels, this call
  std::filesystem::path last_checkpoint;
  CurriculumState final_state;
  bool finished = false;
};

class Trainer {
 public:
  /// The dataset must outlive the trainer.
  Trainer(TrainConfig config, const Dataset& dataset, std::filesystem::path out_dir);

  /// Continues from a checkpoint written by a trainer with the same configuration.
  void resume(const std::filesystem::path& checkpoint);
  /// Trains until the epoch budget is spent or the last level finishes.
  /// `max_epochs` bounds the epochs run by this call.
  TrainResult run(const TrainHooks& hooks = {}, std::optional<int> max_epochs = std::nullopt);

  const DepthNet& net() const { return net_; }
  const CurriculumScheduler& scheduler() const { return scheduler_; }
  int next_epoch() const { return next_epoch_; }

 private:
  BatchReport run_batch(int epoch, int batch, const std::vector<std::size_t>& indices,
                        const std::vector<WeatherVariantId>& mixed_variants);
  Image training_input(const Sample& s, WeatherVariantId v, std::uint64_t seed) const;
  void require_stage_variants() const;
  void write_checkpoint(const std::filesystem::path& file, bool finished) const;

  TrainConfig config_;
  const Dataset& dataset_;
  std::filesystem::path out_dir_;
  DepthNet net_;
  Adam optimizer_;
  CurriculumScheduler scheduler_;
  int next_epoch_ = 0;
  bool finished_ = false;
};

/// Loads the dataset named in the config and trains; returns the result of the run.
TrainResult run_training(const TrainConfig& config, const std::filesystem::path& out_dir,
                         const std::optional<std::filesystem::path>& resume_from = std::nullopt,
                         const TrainHooks& hooks = {});

}  // namespace cdepth
