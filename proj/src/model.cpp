// SPDX-License-Identifier: Apache-2.0
#include "cdepth/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "cdepth/seeding.hpp"

namespace cdepth {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

constexpr float kInputMean = 0.45f;
constexpr float kInputStd = 0.225f;
constexpr double kSigmaFloor = 1e-9;

int out_extent(int in, int stride) { return (in + 2 - 3) / stride + 1; }

// 3x3 kernel, zero padding 1. Writes every element of the first K x N block of `col`.
void im2col(const Tensor& in, int stride, int out_h, int out_w, FloatBuffer& col) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t needed = static_cast<std::size_t>(in.channels) * 9 * plane;
  if (col.size() < needed) col.resize(needed);
  for (int c = 0; c < in.channels; ++c) {
    const float* src = in.data.data() + c * in.plane();
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        float* dst = col.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * plane;
        // output columns whose input column lies inside the image
        const int lo = kx == 0 ? 1 : 0;
        const int hi = std::min(out_w, (in.width - kx) / stride + 1);
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - 1;
          float* out_row = dst + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= in.height) {
            std::fill(out_row, out_row + out_w, 0.0f);
            continue;
          }
          const float* row = src + static_cast<std::size_t>(iy) * in.width + (kx - 1);
          std::fill(out_row, out_row + lo, 0.0f);
          if (stride == 1) {
            std::copy(row + lo, row + hi, out_row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) out_row[ox] = row[ox * stride];
          }
          std::fill(out_row + hi, out_row + out_w, 0.0f);
        }
      }
  }
}

void col2im(const FloatBuffer& col, int stride, int out_h, int out_w, Tensor& grad_in) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < grad_in.channels; ++c) {
    float* dst = grad_in.data.data() + c * grad_in.plane();
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const float* src = col.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= grad_in.height) continue;
          float* row = dst + static_cast<std::size_t>(iy) * grad_in.width;
          const float* in_row = src + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < grad_in.width) row[ix] += in_row[ox];
          }
        }
      }
  }
}

void elu_inplace(Tensor& t) {
  Eigen::Map<Eigen::ArrayXf> a(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
  a = (a > 0.0f).select(a, a.exp() - 1.0f);
}

// dL/dx from dL/dy given y = elu(x).
void elu_backward(const Tensor& y, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (y.data[i] <= 0.0f) grad.data[i] *= y.data[i] + 1.0f;
}

Tensor upsample2(const Tensor& in) {
  Tensor out(in.channels, in.height * 2, in.width * 2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        out.data[(static_cast<std::size_t>(c) * out.height + y) * out.width + x] =
            in.data[(static_cast<std::size_t>(c) * in.height + y / 2) * in.width + x / 2];
  return out;
}

Tensor upsample2_backward(const Tensor& grad_out) {
  Tensor g(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
  for (int c = 0; c < grad_out.channels; ++c)
    for (int y = 0; y < grad_out.height; ++y)
      for (int x = 0; x < grad_out.width; ++x)
        g.data[(static_cast<std::size_t>(c) * g.height + y / 2) * g.width + x / 2] +=
            grad_out.data[(static_cast<std::size_t>(c) * grad_out.height + y) * grad_out.width + x];
  return g;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

std::pair<Tensor, Tensor> split(const Tensor& t, int first_channels) {
  Tensor a(first_channels, t.height, t.width), b(t.channels - first_channels, t.height, t.width);
  std::copy(t.data.begin(), t.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), a.data.begin());
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), t.data.end(), b.data.begin());
  return {std::move(a), std::move(b)};
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

// Activations of one pass, in layer order. Conv inputs are kept so im2col can be
// recomputed during backward instead of storing the column buffers.
struct ForwardCache {
  Tensor input, enc0, enc1a, enc1, enc2a, enc2, enc3a, enc3;
  Tensor dec3a, cat3, dec3, dec2a, cat2, dec2, dec1a, cat1, dec1;
  std::vector<double> sigma;  // head sigmoid output per pixel
};

void ForwardCacheDeleter::operator()(ForwardCache* cache) const { delete cache; }

void ModelConfig::validate() const {
  std::ostringstream err;
  if (width < 8 || height < 8 || width % 8 != 0 || height % 8 != 0) err << "width and height must be multiples of 8; ";
  if (base_channels < 1) err << "base_channels must be >= 1; ";
  if (!(min_disparity > 0.0)) err << "min_disparity must be positive; ";
  if (!(resolved_max_disparity() > min_disparity)) err << "max_disparity must exceed min_disparity; ";
  if (!(resolved_max_disparity() < width)) err << "max_disparity must be below the image width; ";
  if (!err.str().empty()) throw ConfigError("model config: " + err.str());
}

DepthNet::DepthNet(ModelConfig config) : config_(config) {
  config_.validate();
  const int c = config_.base_channels;
  add_conv("enc0", 3, c, 1);
  add_conv("enc1a", c, 2 * c, 2);
  add_conv("enc1", 2 * c, 2 * c, 1);
  add_conv("enc2a", 2 * c, 4 * c, 2);
  add_conv("enc2", 4 * c, 4 * c, 1);
  add_conv("enc3a", 4 * c, 8 * c, 2);
  add_conv("enc3", 8 * c, 8 * c, 1);
  add_conv("dec3a", 8 * c, 4 * c, 1);
  add_conv("dec3", 8 * c, 4 * c, 1);
  add_conv("dec2a", 4 * c, 2 * c, 1);
  add_conv("dec2", 4 * c, 2 * c, 1);
  add_conv("dec1a", 2 * c, c, 1);
  add_conv("dec1", 2 * c, c, 1);
  add_conv("head", c, 1, 1);
  grads_.assign(params_.size(), 0.0f);

  Rng rng(derive_seed(config_.init_seed, {0x1417}));
  for (const Conv& conv : convs_) {
    const double fan_in = conv.in_channels * 9.0;
    const double bound = std::sqrt(3.0 / fan_in) * (conv.name == "head" ? 0.1 : 1.0);
    const std::size_t n = static_cast<std::size_t>(conv.out_channels) * conv.in_channels * 9;
    for (std::size_t i = 0; i < n; ++i) params_[conv.weight_offset + i] = static_cast<float>(uniform(rng, -bound, bound));
  }
  // start near a disparity of ~12% of the output range
  params_[convs_.back().bias_offset] = static_cast<float>(std::log(0.12 / 0.88));
}

void DepthNet::add_conv(const std::string& name, int in, int out, int stride) {
  Conv conv{name, in, out, stride, params_.size(), 0};
  conv.bias_offset = conv.weight_offset + static_cast<std::size_t>(out) * in * 9;
  params_.resize(conv.bias_offset + out, 0.0f);
  convs_.push_back(conv);
}

std::vector<std::string> DepthNet::describe_layers() const {
  std::vector<std::string> out;
  for (const Conv& c : convs_) {
    std::ostringstream s;
    s << c.name << " " << c.out_channels << "x" << c.in_channels << "x3x3/s" << c.stride;
    out.push_back(s.str());
  }
  return out;
}

void DepthNet::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0f); }

void DepthNet::load_parameters(std::span<const float> values) {
  if (values.size() != params_.size()) {
    throw ConfigError("parameter count mismatch: network has " + std::to_string(params_.size()) + ", got " +
                      std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), params_.begin());
}

Tensor DepthNet::conv_forward(const Conv& conv, const Tensor& in) const {
  const int oh = out_extent(in.height, conv.stride), ow = out_extent(in.width, conv.stride);
  thread_local FloatBuffer col;
  im2col(in, conv.stride, oh, ow, col);
  Tensor out(conv.out_channels, oh, ow);
  const int k = conv.in_channels * 9;
  const int n = oh * ow;
  ConstMatrixMap weights(params_.data() + conv.weight_offset, conv.out_channels, k);
  ConstMatrixMap cols(col.data(), k, n);
  MatrixMap result(out.data.data(), conv.out_channels, n);
  result.noalias() = weights * cols;
  for (int o = 0; o < conv.out_channels; ++o) result.row(o).array() += params_[conv.bias_offset + o];
  return out;
}

Tensor DepthNet::conv_backward(const Conv& conv, const Tensor& in, const Tensor& grad_out) {
  const int oh = grad_out.height, ow = grad_out.width;
  thread_local FloatBuffer col;
  im2col(in, conv.stride, oh, ow, col);
  const int k = conv.in_channels * 9;
  const int n = oh * ow;
  ConstMatrixMap g(grad_out.data.data(), conv.out_channels, n);
  ConstMatrixMap cols(col.data(), k, n);
  MatrixMap grad_w(grads_.data() + conv.weight_offset, conv.out_channels, k);
  grad_w.noalias() += g * cols.transpose();
  for (int o = 0; o < conv.out_channels; ++o) grads_[conv.bias_offset + o] += g.row(o).sum();

  ConstMatrixMap weights(params_.data() + conv.weight_offset, conv.out_channels, k);
  MatrixMap grad_col(col.data(), k, n);  // reuse the buffer
  grad_col.noalias() = weights.transpose() * g;
  Tensor grad_in(in.channels, in.height, in.width);
  col2im(col, conv.stride, oh, ow, grad_in);
  return grad_in;
}

DisparityMap DepthNet::forward(const Image& image) const { return run(image, nullptr); }

DisparityMap DepthNet::forward(const Image& image, ForwardCachePtr& cache) const {
  cache.reset(new ForwardCache);
  return run(image, cache.get());
}

DisparityMap DepthNet::run(const Image& image, ForwardCache* cache) const {
  if (image.channels() != 3 || image.width() != config_.width || image.height() != config_.height) {
    std::ostringstream s;
    s << "network expects 3x" << config_.height << "x" << config_.width << " input, got " << image.channels() << "x"
      << image.height() << "x" << image.width();
    throw ConfigError(s.str());
  }
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  fc.input = Tensor(3, image.height(), image.width());
  for (std::size_t i = 0; i < image.size(); ++i) fc.input.data[i] = (image.raw()[i] - kInputMean) / kInputStd;

  auto layer = [this](int index, const Tensor& in) {
    Tensor t = conv_forward(convs_[static_cast<std::size_t>(index)], in);
    elu_inplace(t);
    return t;
  };
  fc.enc0 = layer(0, fc.input);
  fc.enc1a = layer(1, fc.enc0);
  fc.enc1 = layer(2, fc.enc1a);
  fc.enc2a = layer(3, fc.enc1);
  fc.enc2 = layer(4, fc.enc2a);
  fc.enc3a = layer(5, fc.enc2);
  fc.enc3 = layer(6, fc.enc3a);
  fc.dec3a = layer(7, fc.enc3);
  fc.cat3 = concat(upsample2(fc.dec3a), fc.enc2);
  fc.dec3 = layer(8, fc.cat3);
  fc.dec2a = layer(9, fc.dec3);
  fc.cat2 = concat(upsample2(fc.dec2a), fc.enc1);
  fc.dec2 = layer(10, fc.cat2);
  fc.dec1a = layer(11, fc.dec2);
  fc.cat1 = concat(upsample2(fc.dec1a), fc.enc0);
  fc.dec1 = layer(12, fc.cat1);
  const Tensor logits = conv_forward(convs_[13], fc.dec1);

  const double lo = config_.min_disparity, range = config_.resolved_max_disparity() - lo;
  DisparityMap out(config_.height, config_.width);
  fc.sigma.resize(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    fc.sigma[i] = sigmoid(logits.data[i]);
    // keep the bounds strict once the sigmoid saturates in double precision
    out[i] = lo + range * std::clamp(fc.sigma[i], kSigmaFloor, 1.0 - kSigmaFloor);
  }
  return out;
}

void DepthNet::backward(const ForwardCache& fc, const Grid<double>& grad_disparity) {
  if (!grad_disparity.same_shape(config_.height, config_.width) || fc.sigma.size() != grad_disparity.size()) {
    throw ConfigError("backward: gradient does not match the cached forward pass");
  }
  const double range = config_.resolved_max_disparity() - config_.min_disparity;
  Tensor g(1, config_.height, config_.width);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const double s = fc.sigma[i];
    g.data[i] = static_cast<float>(grad_disparity[i] * range * s * (1.0 - s));
  }
  auto through = [this](int index, const Tensor& in, const Tensor& out, Tensor grad) {
    elu_backward(out, grad);
    return conv_backward(convs_[static_cast<std::size_t>(index)], in, grad);
  };
  const int c = config_.base_channels;

  Tensor g_dec1 = conv_backward(convs_[13], fc.dec1, g);
  Tensor g_cat1 = through(12, fc.cat1, fc.dec1, std::move(g_dec1));
  auto [g_up1, g_enc0_skip] = split(g_cat1, c);
  Tensor g_dec2 = through(11, fc.dec2, fc.dec1a, upsample2_backward(g_up1));
  Tensor g_cat2 = through(10, fc.cat2, fc.dec2, std::move(g_dec2));
  auto [g_up2, g_enc1_skip] = split(g_cat2, 2 * c);
  Tensor g_dec3 = through(9, fc.dec3, fc.dec2a, upsample2_backward(g_up2));
  Tensor g_cat3 = through(8, fc.cat3, fc.dec3, std::move(g_dec3));
  auto [g_up3, g_enc2_skip] = split(g_cat3, 4 * c);
  Tensor g_enc3 = through(7, fc.enc3, fc.dec3a, upsample2_backward(g_up3));

  Tensor g_enc3a = through(6, fc.enc3a, fc.enc3, std::move(g_enc3));
  Tensor g_enc2 = through(5, fc.enc2, fc.enc3a, std::move(g_enc3a));
  add_into(g_enc2, g_enc2_skip);
  Tensor g_enc2a = through(4, fc.enc2a, fc.enc2, std::move(g_enc2));
  Tensor g_enc1 = through(3, fc.enc1, fc.enc2a, std::move(g_enc2a));
  add_into(g_enc1, g_enc1_skip);
  Tensor g_enc1a = through(2, fc.enc1a, fc.enc1, std::move(g_enc1));
  Tensor g_enc0 = through(1, fc.enc0, fc.enc1a, std::move(g_enc1a));
  add_into(g_enc0, g_enc0_skip);
  (void)through(0, fc.input, fc.enc0, std::move(g_enc0));
}

Adam::Adam(AdamParams params, std::size_t parameter_count) : params_(params) {
  if (!(params.learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
  state_.first_moment.assign(parameter_count, 0.0f);
  state_.second_moment.assign(parameter_count, 0.0f);
}

void Adam::restore(AdamState state) {
  if (state.first_moment.size() != state_.first_moment.size() ||
      state.second_moment.size() != state_.second_moment.size()) {
    throw ConfigError("adam: restored state does not match parameter count");
  }
  state_ = std::move(state);
}

void Adam::step(std::span<float> parameters, std::span<const float> gradients) {
  if (parameters.size() != state_.first_moment.size() || gradients.size() != parameters.size()) {
    throw ConfigError("adam: parameter/gradient size mismatch");
  }
  ++state_.step;
  const double b1 = params_.beta1, b2 = params_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  const float step_size = static_cast<float>(params_.learning_rate / correction1);
  const float inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(correction2));
  const float eps = static_cast<float>(params_.epsilon);
  auto& m = state_.first_moment;
  auto& v = state_.second_moment;
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    const float g = gradients[i];
    m[i] = static_cast<float>(b1) * m[i] + static_cast<float>(1.0 - b1) * g;
    v[i] = static_cast<float>(b2) * v[i] + static_cast<float>(1.0 - b2) * g * g;
    parameters[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
  }
}

}  // namespace cdepth
