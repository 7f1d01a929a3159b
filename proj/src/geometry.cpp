// SPDX-License-Identifier: Apache-2.0
#include "cdepth/geometry.hpp"

#include <cmath>
#include <sstream>

namespace cdepth {

CameraRig CameraRig::rectified(double fx, double fy, double cx, double cy, double baseline, int width,
                               int height) {
  CameraRig rig;
  rig.fx = fx;
  rig.fy = fy;
  rig.cx = cx;
  rig.cy = cy;
  rig.baseline = baseline;
  rig.width = width;
  rig.height = height;
  rig.right_to_left = Eigen::Isometry3d::Identity();
  rig.right_to_left.translation() = Eigen::Vector3d(baseline, 0.0, 0.0);
  rig.validate();
  return rig;
}

CameraRig CameraRig::kitti_like(int width, int height) {
  return rectified(0.58 * width, 1.92 * height, 0.5 * width, 0.5 * height, 0.54, width, height);
}

Eigen::Matrix3d CameraRig::intrinsics() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void CameraRig::validate() const {
  std::ostringstream err;
  if (!(fx > 0.0) || !(fy > 0.0)) err << "focal lengths must be positive; ";
  if (!(baseline > 0.0)) err << "baseline must be positive; ";
  if (width <= 1 || height <= 1) err << "image must be at least 2x2; ";
  if (!(cx >= 0.0 && cx < width)) err << "cx outside [0, W); ";
  if (!(cy >= 0.0 && cy < height)) err << "cy outside [0, H); ";
  const Eigen::Matrix4d round_trip = (right_to_left * right_to_left.inverse()).matrix();
  if ((round_trip - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    err << "right_to_left is not a rigid transform; ";
  }
  if (!err.str().empty()) throw ConfigError("invalid camera rig: " + err.str());
}

bool operator==(const CameraRig& a, const CameraRig& b) {
  return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.baseline == b.baseline &&
         a.width == b.width && a.height == b.height && a.right_to_left.matrix() == b.right_to_left.matrix();
}

namespace {

void require_rig_shape(const Grid<double>& g, const CameraRig& rig, const char* what) {
  if (!g.same_shape(rig.height, rig.width)) {
    std::ostringstream s;
    s << what << ": map is " << g.width() << "x" << g.height() << ", rig expects " << rig.width << "x"
      << rig.height;
    throw ConfigError(s.str());
  }
}

Grid<double> reciprocal_scaled(const Grid<double>& in, double numerator, double epsilon, const char* what) {
  Grid<double> out(in.height(), in.width());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    if (!std::isfinite(v) || v <= epsilon) {
      std::ostringstream s;
      s << what << ": entry " << i << " (row " << i / in.width() << ", col " << i % in.width()
        << ") is " << v << ", expected > " << epsilon;
      throw DegenerateInputError(s.str());
    }
    out[i] = numerator / v;
  }
  return out;
}

// Bilinear weights along x for a clamped sample coordinate.
struct LinearTap {
  int x0;
  double a;     // weight of x0 + 1
  bool inside;  // unclamped coordinate was within [0, W-1]
};

LinearTap linear_tap(double xs, int width) {
  LinearTap tap{};
  tap.inside = xs >= 0.0 && xs <= static_cast<double>(width - 1);
  const double xc = std::clamp(xs, 0.0, static_cast<double>(width - 1));
  tap.x0 = std::min(static_cast<int>(std::floor(xc)), width - 2);
  tap.a = xc - tap.x0;
  return tap;
}

double shift_sign(WarpDirection direction) { return direction == WarpDirection::kRightToLeft ? -1.0 : 1.0; }

}  // namespace

DepthMap disparity_to_depth(const DisparityMap& disparity, const CameraRig& rig, double epsilon) {
  require_rig_shape(disparity, rig, "disparity_to_depth");
  return DepthMap(reciprocal_scaled(disparity, rig.depth_disparity_product(), epsilon, "disparity_to_depth"));
}

DisparityMap depth_to_disparity(const DepthMap& depth, const CameraRig& rig, double epsilon) {
  require_rig_shape(depth, rig, "depth_to_disparity");
  return DisparityMap(reciprocal_scaled(depth, rig.depth_disparity_product(), epsilon, "depth_to_disparity"));
}

Grid<double> disparity_to_depth_backward(const DisparityMap& disparity, const DepthMap& depth,
                                         const Grid<double>& grad_depth) {
  if (!disparity.same_shape(depth) || !disparity.same_shape(grad_depth)) {
    throw ConfigError("disparity_to_depth_backward: shape mismatch");
  }
  Grid<double> grad(disparity.height(), disparity.width());
  // dD/dd = -b fx / d^2 = -D / d
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = -grad_depth[i] * depth[i] / disparity[i];
  return grad;
}

WarpResult shift_warp(const Image& source, const Grid<double>& shift, WarpDirection direction) {
  const int h = source.height(), w = source.width();
  if (!shift.same_shape(h, w)) throw ConfigError("shift_warp: shift map does not match source dimensions");
  if (w < 2) throw ConfigError("shift_warp: source must be at least 2 pixels wide");
  const double sign = shift_sign(direction);
  WarpResult out{Image(source.channels(), h, w), Mask(h, w, 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const LinearTap tap = linear_tap(x + sign * shift(y, x), w);
      out.valid(y, x) = tap.inside ? 1 : 0;
      for (int c = 0; c < source.channels(); ++c) {
        const double v0 = source(c, y, tap.x0);
        const double v1 = source(c, y, tap.x0 + 1);
        out.warped(c, y, x) = static_cast<float>((1.0 - tap.a) * v0 + tap.a * v1);
      }
    }
  }
  return out;
}

WarpGradients shift_warp_backward(const Image& source, const Grid<double>& shift, WarpDirection direction,
                                  const Image& grad_warped) {
  const int h = source.height(), w = source.width();
  if (!shift.same_shape(h, w)) throw ConfigError("shift_warp_backward: shift map does not match source");
  require_same_shape(source, grad_warped, "shift_warp_backward");
  const double sign = shift_sign(direction);
  WarpGradients g{Image(source.channels(), h, w), Grid<double>(h, w)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const LinearTap tap = linear_tap(x + sign * shift(y, x), w);
      double dxs = 0.0;
      for (int c = 0; c < source.channels(); ++c) {
        const double gw = grad_warped(c, y, x);
        if (gw == 0.0) continue;
        g.source(c, y, tap.x0) += static_cast<float>(gw * (1.0 - tap.a));
        g.source(c, y, tap.x0 + 1) += static_cast<float>(gw * tap.a);
        dxs += gw * (static_cast<double>(source(c, y, tap.x0 + 1)) - source(c, y, tap.x0));
      }
      // clamped samples are constant in the shift
      if (tap.inside) g.shift(y, x) = dxs * sign;
    }
  }
  return g;
}

WarpResult warp(const Image& source, const DepthMap& depth, const CameraRig& rig, WarpDirection direction) {
  if (source.height() != rig.height || source.width() != rig.width) {
    throw ConfigError("warp: source image does not match rig dimensions");
  }
  require_rig_shape(depth, rig, "warp");
  const Grid<double> shift = reciprocal_scaled(depth, rig.depth_disparity_product(), 0.0, "warp depth");
  return shift_warp(source, shift, direction);
}

WarpGradients warp_backward(const Image& source, const DepthMap& depth, const CameraRig& rig,
                            WarpDirection direction, const Image& grad_warped) {
  if (source.height() != rig.height || source.width() != rig.width) {
    throw ConfigError("warp_backward: source image does not match rig dimensions");
  }
  require_rig_shape(depth, rig, "warp_backward");
  const double bf = rig.depth_disparity_product();
  const Grid<double> shift = reciprocal_scaled(depth, bf, 0.0, "warp depth");
  WarpGradients g = shift_warp_backward(source, shift, direction, grad_warped);
  for (std::size_t i = 0; i < g.shift.size(); ++i) g.shift[i] *= -bf / (depth[i] * depth[i]);
  return g;
}

WarpResult semi_augmented_warp(const Image& clear_source, const DepthMap& augmented_depth, const CameraRig& rig,
                               WarpDirection direction) {
  return warp(clear_source, augmented_depth, rig, direction);
}

float sample_bilinear(const Image& image, int channel, double x, double y) {
  const int w = image.width(), h = image.height();
  const double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(xc)), std::max(w - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(yc)), std::max(h - 2, 0));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = xc - x0, ay = yc - y0;
  const double top = (1.0 - ax) * image(channel, y0, x0) + ax * image(channel, y0, x1);
  const double bottom = (1.0 - ax) * image(channel, y1, x0) + ax * image(channel, y1, x1);
  return static_cast<float>((1.0 - ay) * top + ay * bottom);
}

WarpResult project_warp(const Image& source, const DepthMap& depth, const CameraRig& rig,
                        WarpDirection direction) {
  if (source.height() != rig.height || source.width() != rig.width) {
    throw ConfigError("project_warp: source image does not match rig dimensions");
  }
  require_rig_shape(depth, rig, "project_warp");
  const Eigen::Isometry3d target_to_source =
      direction == WarpDirection::kRightToLeft ? rig.left_to_right() : rig.right_to_left;
  const Eigen::Matrix3d k = rig.intrinsics();
  const Eigen::Matrix3d k_inv = k.inverse();
  const int h = rig.height, w = rig.width;
  WarpResult out{Image(source.channels(), h, w), Mask(h, w, 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d ray = k_inv * Eigen::Vector3d(x, y, 1.0);
      const Eigen::Vector3d p = target_to_source * (depth(y, x) * ray);
      const Eigen::Vector3d q = k * p;
      const double u = q.x() / q.z(), v = q.y() / q.z();
      out.valid(y, x) = (p.z() > 0.0 && u >= 0.0 && u <= w - 1 && v >= 0.0 && v <= h - 1) ? 1 : 0;
      for (int c = 0; c < source.channels(); ++c) out.warped(c, y, x) = sample_bilinear(source, c, u, v);
    }
  }
  return out;
}

}  // namespace cdepth
