// SPDX-License-Identifier: Apache-2.0
//
// Reference depth network: a 4-level convolutional encoder-decoder with skip
// connections and a bounded single-scale disparity head. Forward passes record
// what backward() needs in a ForwardCache, so one network can hold several live
// passes at once (training image and contrast image).
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cdepth/grid.hpp"

namespace cdepth {

/// Fixed-alignment storage, so vectorized kernels take the same path on every run.
using FloatBuffer = std::vector<float, Eigen::aligned_allocator<float>>;

struct ModelConfig {
  int width = 192;
  int height = 64;
  int base_channels = 16;
  double min_disparity = 0.5;  // pixels
  double max_disparity = 0.0;  // pixels; <= 0 selects width / 3
  std::uint64_t init_seed = 1;

  double resolved_max_disparity() const { return max_disparity > 0.0 ? max_disparity : width / 3.0; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// C x H x W float activation.
struct Tensor {
  int channels = 0, height = 0, width = 0;
  FloatBuffer data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0f) {}
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
};

struct ForwardCache;

/// Releases the cache; defined where ForwardCache is complete.
struct ForwardCacheDeleter {
  void operator()(ForwardCache* cache) const;
};
using ForwardCachePtr = std::unique_ptr<ForwardCache, ForwardCacheDeleter>;

class DepthNet {
 public:
  explicit DepthNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// Inference pass; bit-identical across calls for the same input.
  DisparityMap forward(const Image& image) const;
  /// Training pass: also fills `cache` for backward().
  DisparityMap forward(const Image& image, ForwardCachePtr& cache) const;
  /// Accumulates dL/dparameters into gradients() given dL/ddisparity.
  void backward(const ForwardCache& cache, const Grid<double>& grad_disparity);

  std::span<float> parameters() { return params_; }
  std::span<const float> parameters() const { return params_; }
  std::span<float> gradients() { return grads_; }
  std::span<const float> gradients() const { return grads_; }
  std::size_t parameter_count() const { return params_.size(); }
  void zero_grad();
  /// Throws ConfigError when `values` has the wrong length.
  void load_parameters(std::span<const float> values);

  /// Layer table, e.g. "enc0.weight 16x3x3x3"; used for checkpoint compatibility.
  std::vector<std::string> describe_layers() const;

 private:
  struct Conv {
    std::string name;
    int in_channels, out_channels, stride;
    std::size_t weight_offset, bias_offset;
  };

  void add_conv(const std::string& name, int in, int out, int stride);
  Tensor conv_forward(const Conv& conv, const Tensor& in) const;
  /// Returns dL/din and accumulates weight/bias gradients.
  Tensor conv_backward(const Conv& conv, const Tensor& in, const Tensor& grad_out);
  DisparityMap run(const Image& image, ForwardCache* cache) const;

  ModelConfig config_;
  std::vector<Conv> convs_;
  FloatBuffer params_;
  FloatBuffer grads_;
};

struct AdamParams {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<float> first_moment;
  std::vector<float> second_moment;
  std::int64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Adaptive-moment gradient descent over the flat parameter vector.
class Adam {
 public:
  Adam(AdamParams params, std::size_t parameter_count);
  void step(std::span<float> parameters, std::span<const float> gradients);
  const AdamState& state() const { return state_; }
  const AdamParams& params() const { return params_; }
  void restore(AdamState state);

 private:
  AdamParams params_;
  AdamState state_;
};

}  // namespace cdepth
