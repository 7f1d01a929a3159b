// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdepth/errors.hpp"

namespace cdepth {

/// Dense row-major H x W grid of scalars.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width), values_(static_cast<std::size_t>(height) * width, fill) {
    if (height < 0 || width < 0) throw ConfigError("grid dimensions must be non-negative");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T& operator()(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::vector<T>& raw() { return values_; }
  const std::vector<T>& raw() const { return values_; }

  bool same_shape(int height, int width) const { return height_ == height && width_ == width; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.values_ == b.values_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> values_;
};

using Mask = Grid<std::uint8_t>;

inline std::size_t count_true(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.raw().begin(), mask.raw().end(), [](std::uint8_t v) { return v != 0; }));
}

/// Horizontal disparity in pixels. Entries are expected to be positive.
class DisparityMap : public Grid<double> {
 public:
  using Grid<double>::Grid;
  DisparityMap() = default;
  explicit DisparityMap(Grid<double> g) : Grid<double>(std::move(g)) {}
};

/// Metric z-depth in meters.
class DepthMap : public Grid<double> {
 public:
  using Grid<double>::Grid;
  DepthMap() = default;
  explicit DepthMap(Grid<double> g) : Grid<double>(std::move(g)) {}
};

/// Planar float image, channel-major (C x H x W), intensities nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, float fill = 0.0f)
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 0 || width < 0) throw ConfigError("image dimensions must be non-negative");
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator()(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  float operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<float> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }
  std::vector<float>& raw() { return data_; }
  const std::vector<float>& raw() const { return data_; }

  bool same_shape(const Image& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const Image& a, const Image& b) { return a.same_shape(b) && a.data_ == b.data_; }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw ConfigError(std::string(what) + ": image shapes differ");
}

}  // namespace cdepth
