// SPDX-License-Identifier: Apache-2.0
//
// Self-supervised reconstruction loss, the cross-stage depth consistency loss and
// the epoch-wise schedule of its weight. Losses return their value together with
// the gradients the trainer needs, so no separate autodiff machinery is involved.
#pragma once

#include "cdepth/grid.hpp"

namespace cdepth {

struct PhotometricParams {
  double alpha = 0.85;  // SSIM term
  double beta = 0.15;   // L1 term
  int ssim_window = 3;

  void validate() const;
};

struct PhotometricLoss {
  double value = 0.0;
  Image grad_reconstructed;  // empty unless gradients were requested
  std::size_t valid_pixels = 0;
};

/// alpha * (1 - SSIM) / 2 + beta * |target - reconstructed|, averaged over channels
/// and over pixels where `valid` is set. SSIM windows use reflection padding and
/// the (1 - SSIM) / 2 term is clamped to [0, 1]. Throws DegenerateInputError when
/// no pixel is valid.
double photometric_loss(const Image& target, const Image& reconstructed, const Mask& valid,
                        const PhotometricParams& params = {});
PhotometricLoss photometric_loss_with_grad(const Image& target, const Image& reconstructed, const Mask& valid,
                                           const PhotometricParams& params = {});

/// Per-pixel SSIM map for one channel (exposed for diagnostics and tests).
Grid<double> ssim_map(const Image& a, const Image& b, int channel, int window);

struct SmoothnessLoss {
  double value = 0.0;
  Grid<double> grad_disparity;
};

/// Edge-aware first-order smoothness on mean-normalized disparity.
SmoothnessLoss edge_aware_smoothness(const Grid<double>& disparity, const Image& image);

/// Which input of the consistency loss has its gradient cut.
enum class DetachBranch { kNone, kContrast, kAugmented };

/// Branch to block for the given stage pair. Equal stages block the contrast branch.
DetachBranch detach_branch(int stage_augmented, int stage_contrast, bool detach_enabled);

struct ContrastiveLoss {
  double value = 0.0;
  Grid<double> grad_augmented;  // dL/dD_aug, exactly zero when that branch is cut
  Grid<double> grad_contrast;   // dL/dD_cst, exactly zero when that branch is cut
  DetachBranch detached = DetachBranch::kNone;
};

/// mean over all pixels of log(|D_aug - D_cst| + 1). Stages must be in {1, 2, 3}.
ContrastiveLoss contrastive_loss(const DepthMap& augmented, const DepthMap& contrast, int stage_augmented,
                                 int stage_contrast, bool detach_enabled);

struct LossBundle {
  double model = 0.0;
  double contrastive = 0.0;
  double weight = 0.0;
  double backward = 0.0;  // model + weight * contrastive
};

LossBundle total_loss(double model_loss, double contrastive_loss, double weight);

enum class WeightCapRule {
  kCap,         // w = min(w_max * w_cst, lambda * w): monotone growth up to the cap
  kLiteralMax,  // w = max(w_max * w_cst, lambda * w), the formula read literally
};

struct ContrastWeightParams {
  double base = 0.02;            // w_cst
  double max_multiplier = 10.0;  // w_max
  double growth = 2.0;           // lambda, > 1
  int period = 2;                // grow every `period` epochs
  WeightCapRule rule = WeightCapRule::kCap;

  double cap() const { return max_multiplier * base; }
  void validate() const;
};

struct ContrastWeightState {
  double current = 0.0;  // w_curr
  int stage_epoch = 0;   // r: epochs already trained in the current stage

  friend bool operator==(const ContrastWeightState&, const ContrastWeightState&) = default;
};

/// Epoch-start update of w_curr for the state's r.
ContrastWeightState update_contrast_weight(const ContrastWeightParams& params, ContrastWeightState state);

}  // namespace cdepth
