// SPDX-License-Identifier: Apache-2.0
#include "cdepth/losses.hpp"

#include <cmath>
#include <sstream>

namespace cdepth {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

struct WindowStats {
  double mx, my, sxx, syy, sxy;
};

WindowStats window_stats(const Image& a, const Image& b, int c, int y, int x, int radius) {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int dy = -radius; dy <= radius; ++dy) {
    const int yy = reflect(y + dy, a.height());
    for (int dx = -radius; dx <= radius; ++dx) {
      const int xx = reflect(x + dx, a.width());
      const double va = a(c, yy, xx), vb = b(c, yy, xx);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
    }
  }
  const double n = static_cast<double>((2 * radius + 1) * (2 * radius + 1));
  WindowStats s{};
  s.mx = sa / n;
  s.my = sb / n;
  s.sxx = saa / n - s.mx * s.mx;
  s.syy = sbb / n - s.my * s.my;
  s.sxy = sab / n - s.mx * s.my;
  return s;
}

double ssim_of(const WindowStats& s) {
  return ((2 * s.mx * s.my + kC1) * (2 * s.sxy + kC2)) /
         ((s.mx * s.mx + s.my * s.my + kC1) * (s.sxx + s.syy + kC2));
}

void check_inputs(const Image& target, const Image& reconstructed, const Mask& valid,
                  const PhotometricParams& params) {
  params.validate();
  require_same_shape(target, reconstructed, "photometric_loss");
  if (!valid.same_shape(target.height(), target.width())) {
    throw ConfigError("photometric_loss: valid mask does not match image dimensions");
  }
  if (target.width() <= params.ssim_window / 2 || target.height() <= params.ssim_window / 2) {
    throw ConfigError("photometric_loss: image smaller than the SSIM window");
  }
}

PhotometricLoss evaluate_photometric(const Image& target, const Image& recon, const Mask& valid,
                                     const PhotometricParams& params, bool want_grad) {
  check_inputs(target, recon, valid, params);
  PhotometricLoss out;
  out.valid_pixels = count_true(valid);
  if (out.valid_pixels == 0) throw DegenerateInputError("photometric_loss: empty valid mask (degenerate batch)");
  if (want_grad) out.grad_reconstructed = Image(recon.channels(), recon.height(), recon.width());

  const int radius = params.ssim_window / 2;
  const double n_window = static_cast<double>(params.ssim_window * params.ssim_window);
  const double scale = 1.0 / (static_cast<double>(out.valid_pixels) * recon.channels());
  double total = 0.0;
  for (int c = 0; c < recon.channels(); ++c) {
    for (int y = 0; y < recon.height(); ++y) {
      for (int x = 0; x < recon.width(); ++x) {
        if (!valid(y, x)) continue;
        const WindowStats s = window_stats(target, recon, c, y, x, radius);
        const double ssim = ssim_of(s);
        const double raw_term = (1.0 - ssim) / 2.0;
        const double term = std::clamp(raw_term, 0.0, 1.0);
        const double diff = static_cast<double>(recon(c, y, x)) - target(c, y, x);
        total += params.alpha * term + params.beta * std::abs(diff);
        if (!want_grad) continue;

        Image& g = out.grad_reconstructed;
        g(c, y, x) += static_cast<float>(scale * params.beta * sign(diff));
        if (params.alpha == 0.0 || raw_term != term) continue;
        // d(alpha * (1 - S) / 2) / dS
        const double up = -0.5 * params.alpha * scale;
        const double a = 2 * s.mx * s.my + kC1, b = 2 * s.sxy + kC2;
        const double cc = s.mx * s.mx + s.my * s.my + kC1, d = s.sxx + s.syy + kC2;
        const double ds_dmy = 2 * s.mx * b / (cc * d) - ssim * 2 * s.my / cc;
        const double ds_dsyy = -ssim / d;
        const double ds_dsxy = 2 * a / (cc * d);
        for (int dy = -radius; dy <= radius; ++dy) {
          const int yy = reflect(y + dy, recon.height());
          for (int dx = -radius; dx <= radius; ++dx) {
            const int xx = reflect(x + dx, recon.width());
            const double vy = recon(c, yy, xx), vx = target(c, yy, xx);
            const double ds = (ds_dmy + ds_dsyy * 2 * (vy - s.my) + ds_dsxy * (vx - s.mx)) / n_window;
            g(c, yy, xx) += static_cast<float>(up * ds);
          }
        }
      }
    }
  }
  out.value = total * scale;
  return out;
}

}  // namespace

void PhotometricParams::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0)) {
    throw ConfigError("photometric params: alpha, beta must be >= 0 with alpha + beta > 0");
  }
  if (ssim_window < 3 || ssim_window % 2 == 0) throw ConfigError("photometric params: ssim_window must be odd and >= 3");
}

double photometric_loss(const Image& target, const Image& reconstructed, const Mask& valid,
                        const PhotometricParams& params) {
  return evaluate_photometric(target, reconstructed, valid, params, false).value;
}

PhotometricLoss photometric_loss_with_grad(const Image& target, const Image& reconstructed, const Mask& valid,
                                           const PhotometricParams& params) {
  return evaluate_photometric(target, reconstructed, valid, params, true);
}

Grid<double> ssim_map(const Image& a, const Image& b, int channel, int window) {
  require_same_shape(a, b, "ssim_map");
  Grid<double> out(a.height(), a.width());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) out(y, x) = ssim_of(window_stats(a, b, channel, y, x, window / 2));
  return out;
}

SmoothnessLoss edge_aware_smoothness(const Grid<double>& disparity, const Image& image) {
  const int h = disparity.height(), w = disparity.width();
  if (image.height() != h || image.width() != w) throw ConfigError("edge_aware_smoothness: shape mismatch");
  if (h < 2 || w < 2) throw ConfigError("edge_aware_smoothness: map must be at least 2x2");
  double mean = 0.0;
  for (double v : disparity.values()) mean += v;
  mean /= static_cast<double>(disparity.size());
  if (!(mean > 0.0)) throw DegenerateInputError("edge_aware_smoothness: mean disparity must be positive");

  auto edge_weight = [&](int y0, int x0, int y1, int x1) {
    double g = 0.0;
    for (int c = 0; c < image.channels(); ++c) g += std::abs(static_cast<double>(image(c, y1, x1)) - image(c, y0, x0));
    return std::exp(-g / image.channels());
  };

  SmoothnessLoss out{0.0, Grid<double>(h, w)};
  Grid<double> grad_norm(h, w);  // gradient with respect to d / mean(d)
  const double nx = static_cast<double>(h) * (w - 1), ny = static_cast<double>(h - 1) * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dn = disparity(y, x) / mean;
      if (x + 1 < w) {
        const double diff = disparity(y, x + 1) / mean - dn;
        const double wgt = edge_weight(y, x, y, x + 1) / nx;
        out.value += std::abs(diff) * wgt;
        grad_norm(y, x + 1) += sign(diff) * wgt;
        grad_norm(y, x) -= sign(diff) * wgt;
      }
      if (y + 1 < h) {
        const double diff = disparity(y + 1, x) / mean - dn;
        const double wgt = edge_weight(y, x, y + 1, x) / ny;
        out.value += std::abs(diff) * wgt;
        grad_norm(y + 1, x) += sign(diff) * wgt;
        grad_norm(y, x) -= sign(diff) * wgt;
      }
    }
  }
  double coupling = 0.0;
  for (std::size_t i = 0; i < disparity.size(); ++i) coupling += grad_norm[i] * disparity[i];
  coupling /= mean * mean * static_cast<double>(disparity.size());
  for (std::size_t i = 0; i < disparity.size(); ++i) out.grad_disparity[i] = grad_norm[i] / mean - coupling;
  return out;
}

DetachBranch detach_branch(int stage_augmented, int stage_contrast, bool detach_enabled) {
  if (!detach_enabled) return DetachBranch::kNone;
  return stage_contrast > stage_augmented ? DetachBranch::kAugmented : DetachBranch::kContrast;
}

ContrastiveLoss contrastive_loss(const DepthMap& augmented, const DepthMap& contrast, int stage_augmented,
                                 int stage_contrast, bool detach_enabled) {
  if (!augmented.same_shape(contrast)) throw ConfigError("contrastive_loss: depth maps differ in shape");
  if (augmented.empty()) throw ConfigError("contrastive_loss: empty depth maps");
  for (int s : {stage_augmented, stage_contrast}) {
    if (s < 1 || s > 3) throw ConfigError("contrastive_loss: stage index must be in {1, 2, 3}");
  }
  ContrastiveLoss out;
  out.detached = detach_branch(stage_augmented, stage_contrast, detach_enabled);
  out.grad_augmented = Grid<double>(augmented.height(), augmented.width());
  out.grad_contrast = Grid<double>(augmented.height(), augmented.width());
  const double n = static_cast<double>(augmented.size());
  double total = 0.0;
  for (std::size_t i = 0; i < augmented.size(); ++i) {
    const double diff = augmented[i] - contrast[i];
    const double ad = std::abs(diff);
    total += std::log1p(ad);
    const double g = sign(diff) / (ad + 1.0) / n;
    if (out.detached != DetachBranch::kAugmented) out.grad_augmented[i] = g;
    if (out.detached != DetachBranch::kContrast) out.grad_contrast[i] = -g;
  }
  out.value = total / n;
  return out;
}

LossBundle total_loss(double model_loss, double contrastive, double weight) {
  return LossBundle{model_loss, contrastive, weight, model_loss + weight * contrastive};
}

void ContrastWeightParams::validate() const {
  std::ostringstream err;
  if (!(base >= 0.0)) err << "w_cst must be >= 0; ";
  if (!(max_multiplier >= 1.0)) err << "w_max must be >= 1; ";
  if (!(growth > 1.0)) err << "lambda must be > 1; ";
  if (period < 1) err << "period must be >= 1; ";
  if (!err.str().empty()) throw ConfigError("contrast weight params: " + err.str());
}

ContrastWeightState update_contrast_weight(const ContrastWeightParams& params, ContrastWeightState state) {
  if (state.stage_epoch == 0) {
    state.current = params.base;
  } else if (state.stage_epoch % params.period == 0) {
    const double grown = params.growth * state.current;
    state.current = params.rule == WeightCapRule::kCap ? std::min(params.cap(), grown) : std::max(params.cap(), grown);
  }
  return state;
}

}  // namespace cdepth
