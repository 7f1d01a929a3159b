// SPDX-License-Identifier: Apache-2.0
//
// Rectified stereo camera model, disparity/depth conversion and bilinear view
// synthesis. Everything here is a pure function of its arguments.
#pragma once

#include <Eigen/Geometry>

#include "cdepth/grid.hpp"

namespace cdepth {

struct CameraRig {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double baseline = 0.0;  // meters
  int width = 0;
  int height = 0;
  /// Maps points expressed in the right camera frame into the left camera frame.
  Eigen::Isometry3d right_to_left = Eigen::Isometry3d::Identity();

  /// Rectified pair: the right camera sits `baseline` meters along +x.
  static CameraRig rectified(double fx, double fy, double cx, double cy, double baseline, int width,
                             int height);
  /// KITTI-like normalized intrinsics (fx = 0.58 W, fy = 1.92 H, 0.54 m baseline)
  /// scaled to the requested resolution.
  static CameraRig kitti_like(int width, int height);

  Eigen::Isometry3d left_to_right() const { return right_to_left.inverse(); }
  /// b * fx, the constant relating depth and disparity.
  double depth_disparity_product() const { return baseline * fx; }
  Eigen::Matrix3d intrinsics() const;

  /// Throws ConfigError when an invariant is broken.
  void validate() const;
};

bool operator==(const CameraRig& a, const CameraRig& b);

inline constexpr double kDefaultDisparityEpsilon = 1e-6;

/// D = b * fx / d. Throws DegenerateInputError for any d <= epsilon or non-finite d.
DepthMap disparity_to_depth(const DisparityMap& disparity, const CameraRig& rig,
                            double epsilon = kDefaultDisparityEpsilon);
/// d = b * fx / D, the inverse of disparity_to_depth.
DisparityMap depth_to_disparity(const DepthMap& depth, const CameraRig& rig,
                                double epsilon = kDefaultDisparityEpsilon);
/// Chain rule through D = b fx / d: returns dL/dd given dL/dD.
Grid<double> disparity_to_depth_backward(const DisparityMap& disparity, const DepthMap& depth,
                                         const Grid<double>& grad_depth);

enum class WarpDirection {
  kRightToLeft,  // reconstruct the left view from the right image
  kLeftToRight,  // reconstruct the right view from the left image
};

struct WarpResult {
  Image warped;
  Mask valid;  // sample coordinate fell inside the source
};

struct WarpGradients {
  Image source;        // dL/dsource
  Grid<double> shift;  // dL/dshift, or dL/dD for depth-parameterized warps
};

/// Horizontal epipolar warp: warped(x, y) = source(x -/+ shift(y, x), y), bilinear,
/// border-clamped. Out-of-range samples are clamped for value but marked invalid.
WarpResult shift_warp(const Image& source, const Grid<double>& shift, WarpDirection direction);
WarpGradients shift_warp_backward(const Image& source, const Grid<double>& shift, WarpDirection direction,
                                  const Image& grad_warped);

/// Depth-driven warp on a rectified rig (shift = b fx / D).
WarpResult warp(const Image& source, const DepthMap& depth, const CameraRig& rig, WarpDirection direction);
/// Gradients of warp(); `shift` holds dL/dD.
WarpGradients warp_backward(const Image& source, const DepthMap& depth, const CameraRig& rig,
                            WarpDirection direction, const Image& grad_warped);

/// Same computation as warp(). `clear_source` must be the unaugmented reference view
/// while `augmented_depth` was predicted from an augmented target; the photometric
/// comparison downstream is against the unaugmented target.
WarpResult semi_augmented_warp(const Image& clear_source, const DepthMap& augmented_depth,
                               const CameraRig& rig, WarpDirection direction);

/// General reprojection through K and the rig extrinsics, with 2-D bilinear sampling.
/// Forward only; on a rectified rig it agrees with warp().
WarpResult project_warp(const Image& source, const DepthMap& depth, const CameraRig& rig,
                        WarpDirection direction);

/// Bilinear sample with border clamping.
float sample_bilinear(const Image& image, int channel, double x, double y);

}  // namespace cdepth
