// SPDX-License-Identifier: Apache-2.0
#include "cdepth/augmentation.hpp"

#include <cmath>

#include "cdepth/seeding.hpp"

namespace cdepth {

namespace {

// Independent random streams per effect, so magnitude 2 reproduces the
// magnitude 1 layer exactly and only adds to it.
enum Stream : std::uint64_t { kDroplets = 1, kPuddles, kStreaks, kGroundSnow, kFlakes, kJitter };

double lattice(std::uint64_t seed, int ix, int iy) {
  const std::uint64_t h = mix64(seed ^ mix64((static_cast<std::uint64_t>(static_cast<std::uint32_t>(ix)) << 32) |
                                             static_cast<std::uint32_t>(iy)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

/// Smooth value noise in [0, 1] with `cell` pixels per lattice cell.
double value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double fx = x / cell, fy = y / cell;
  const int ix = static_cast<int>(std::floor(fx)), iy = static_cast<int>(std::floor(fy));
  const double tx = smoothstep(0.0, 1.0, fx - ix), ty = smoothstep(0.0, 1.0, fy - iy);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
}

double horizon_of(double configured, int height) { return configured < 0.0 ? 0.5 * height : configured; }

Image gaussian_blur(const Image& in, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const int h = in.height(), w = in.width();
  Image tmp(in.channels(), h, w), out(in.channels(), h, w);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * in(c, y, std::clamp(x + i, 0, w - 1));
        tmp(c, y, x) = static_cast<float>(acc);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(c, std::clamp(y + i, 0, h - 1), x);
        out(c, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

void blend_pixel(Image& img, int y, int x, double alpha, double value) {
  for (int c = 0; c < img.channels(); ++c) img(c, y, x) = static_cast<float>(img(c, y, x) * (1.0 - alpha) + value * alpha);
}

void apply_veil(Image& img, double veil, double level) {
  if (veil <= 0.0) return;
  for (float& v : img.raw()) v = static_cast<float>(v * (1.0 - veil) + level * veil);
}

void clamp_unit(Image& img) {
  for (float& v : img.raw()) v = std::clamp(v, 0.0f, 1.0f);
}

double gray_at(const Image& img, int y, int x) {
  if (img.channels() < 3) return img(0, y, x);
  return 0.299 * img(0, y, x) + 0.587 * img(1, y, x) + 0.114 * img(2, y, x);
}

}  // namespace

// --- variant identifiers ---------------------------------------------------

std::string weather_name(Weather w) {
  switch (w) {
    case Weather::kClear: return "clear";
    case Weather::kRain: return "rain";
    case Weather::kSnow: return "snow";
    case Weather::kFog: return "fog";
  }
  return "unknown";
}

bool WeatherVariantId::is_legal() const {
  if (weather == Weather::kClear) return magnitude == 0;
  return magnitude == 1 || magnitude == 2;
}

void WeatherVariantId::validate() const {
  if (!is_legal()) {
    throw ConfigError("illegal weather variant " + weather_name(weather) + "_" + std::to_string(magnitude));
  }
}

std::string WeatherVariantId::name() const { return weather_name(weather) + "_" + std::to_string(magnitude); }

WeatherVariantId WeatherVariantId::parse(const std::string& name) {
  const auto pos = name.rfind('_');
  if (pos == std::string::npos || pos + 2 != name.size() || !std::isdigit(static_cast<unsigned char>(name.back()))) {
    throw ConfigError("malformed variant name '" + name + "'");
  }
  const std::string w = name.substr(0, pos);
  WeatherVariantId id;
  if (w == "clear") id.weather = Weather::kClear;
  else if (w == "rain") id.weather = Weather::kRain;
  else if (w == "snow") id.weather = Weather::kSnow;
  else if (w == "fog") id.weather = Weather::kFog;
  else throw ConfigError("unknown weather '" + w + "' in variant name '" + name + "'");
  id.magnitude = name.back() - '0';
  id.validate();
  return id;
}

std::vector<WeatherVariantId> weather_variants() {
  std::vector<WeatherVariantId> out;
  for (int m : {1, 2})
    for (Weather w : {Weather::kRain, Weather::kSnow, Weather::kFog}) out.push_back({w, m});
  return out;
}

std::vector<WeatherVariantId> all_variants() {
  std::vector<WeatherVariantId> out{kClearVariant};
  for (const auto& v : weather_variants()) out.push_back(v);
  return out;
}

// --- jitter ------------------------------------------------------------------

JitterFactors sample_jitter(const JitterParams& params, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kJitter}));
  auto draw = [&rng](const JitterRange& r) { return r.lo == r.hi ? r.lo : uniform(rng, r.lo, r.hi); };
  JitterFactors f;
  f.brightness = draw(params.brightness);
  f.contrast = draw(params.contrast);
  f.saturation = draw(params.saturation);
  return f;
}

Image apply_jitter(const Image& image, const JitterFactors& f) {
  Image out = image;
  if (f.brightness != 1.0) {
    for (float& v : out.raw()) v = std::clamp(static_cast<float>(v * f.brightness), 0.0f, 1.0f);
  }
  if (f.contrast != 1.0) {
    double mean = 0.0;
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) mean += gray_at(out, y, x);
    mean /= static_cast<double>(out.plane_size());
    for (float& v : out.raw()) v = std::clamp(static_cast<float>((v - mean) * f.contrast + mean), 0.0f, 1.0f);
  }
  if (f.saturation != 1.0 && out.channels() >= 3) {
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) {
        const double g = gray_at(out, y, x);
        for (int c = 0; c < out.channels(); ++c)
          out(c, y, x) = std::clamp(static_cast<float>(g + f.saturation * (out(c, y, x) - g)), 0.0f, 1.0f);
      }
  }
  return out;
}

Image jitter(const Image& image, std::uint64_t seed, const JitterParams& params) {
  return apply_jitter(image, sample_jitter(params, seed));
}

// --- fog ---------------------------------------------------------------------

void FogParams::validate() const {
  if (!(visibility_m > 0.0)) throw ConfigError("fog: visibility must be positive");
  if (!(koschmieder > 0.0)) throw ConfigError("fog: Koschmieder constant must be positive");
  for (double a : atmospheric_light) {
    if (!(a >= 0.7 && a <= 1.0)) throw ConfigError("fog: atmospheric light components must lie in [0.7, 1]");
  }
}

Grid<double> fog_transmittance(const DepthMap& depth, const FogParams& params) {
  params.validate();
  Grid<double> t(depth.height(), depth.width());
  const double beta = params.extinction();
  for (std::size_t i = 0; i < depth.size(); ++i) t[i] = std::exp(-beta * depth[i]);
  return t;
}

Image render_fog(const Image& image, const DepthMap& depth, const FogParams& params) {
  if (depth.empty()) throw DataError("render_fog: fog rendering requires a depth map");
  if (!depth.same_shape(image.height(), image.width())) throw DataError("render_fog: depth does not match image");
  const Grid<double> t = fog_transmittance(depth, params);
  Image out(image.channels(), image.height(), image.width());
  for (int c = 0; c < image.channels(); ++c) {
    const double a = params.atmospheric_light[std::min(c, 2)];
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x)
        out(c, y, x) = static_cast<float>(image(c, y, x) * t(y, x) + a * (1.0 - t(y, x)));
  }
  return out;
}

// --- rain --------------------------------------------------------------------

RainParams RainParams::for_magnitude(int magnitude) {
  if (magnitude != 1 && magnitude != 2) throw ConfigError("rain magnitude must be 1 or 2");
  RainParams p;
  p.droplet_count = 6;
  p.reflection_opacity = 0.55;
  if (magnitude == 2) {
    p.streak_count = 140;
    p.veil = 0.18;
  }
  return p;
}

Image render_rain(const Image& image, int magnitude, std::uint64_t seed) {
  return render_rain(image, RainParams::for_magnitude(magnitude), seed);
}

Image render_rain(const Image& image, const RainParams& p, std::uint64_t seed) {
  Image out = image;
  const int h = image.height(), w = image.width();
  const double horizon = horizon_of(p.horizon_row, h);

  if (p.reflection_opacity > 0.0) {
    const std::uint64_t puddle_seed = derive_seed(seed, {kPuddles});
    for (int y = static_cast<int>(std::ceil(horizon)); y < h; ++y) {
      const double mirror = 2.0 * horizon - y;
      for (int x = 0; x < w; ++x) {
        const double coverage =
            p.reflection_opacity * smoothstep(0.4, 0.6, value_noise(puddle_seed, x, y * 3.0, 12.0));
        if (coverage <= 0.0) continue;
        for (int c = 0; c < image.channels(); ++c) {
          double acc = 0.0;
          int n = 0;
          for (int k = -p.reflection_blur; k <= p.reflection_blur; ++k, ++n) {
            acc += image(c, std::clamp(static_cast<int>(std::lround(mirror)) + k, 0, h - 1), x);
          }
          const double reflected = p.reflection_darkening * acc / n;
          out(c, y, x) = static_cast<float>(out(c, y, x) * (1.0 - coverage) + reflected * coverage);
        }
      }
    }
  }

  if (p.droplet_count > 0) {
    Rng rng(derive_seed(seed, {kDroplets}));
    const Image blurred = gaussian_blur(image, 2.0);
    for (int i = 0; i < p.droplet_count; ++i) {
      const double cx = uniform(rng, 0.0, w), cy = uniform(rng, 0.0, h);
      const double r = uniform(rng, p.droplet_radius_min, p.droplet_radius_max);
      for (int y = std::max(0, static_cast<int>(cy - r - 1)); y <= std::min(h - 1, static_cast<int>(cy + r + 1)); ++y)
        for (int x = std::max(0, static_cast<int>(cx - r - 1)); x <= std::min(w - 1, static_cast<int>(cx + r + 1)); ++x) {
          const double dist = std::hypot(x - cx, y - cy);
          const double alpha = 1.0 - smoothstep(0.7 * r, r, dist);
          if (alpha <= 0.0) continue;
          // a droplet acts as a small inverted lens over a defocused scene
          const double sx = cx - 1.5 * (x - cx), sy = cy - 1.5 * (y - cy);
          for (int c = 0; c < image.channels(); ++c) {
            const double lensed =
                std::min(1.0, 1.08 * blurred(c, std::clamp(static_cast<int>(std::lround(sy)), 0, h - 1),
                                             std::clamp(static_cast<int>(std::lround(sx)), 0, w - 1)) + 0.04);
            out(c, y, x) = static_cast<float>(out(c, y, x) * (1.0 - alpha) + lensed * alpha);
          }
        }
    }
  }

  if (p.streak_count > 0) {
    Rng rng(derive_seed(seed, {kStreaks}));
    Grid<double> alpha(h, w);
    const double norm = std::hypot(p.streak_slant, 1.0);
    for (int i = 0; i < p.streak_count; ++i) {
      const double x0 = uniform(rng, -p.streak_length * p.streak_slant, w), y0 = uniform(rng, -p.streak_length, h);
      const double len = p.streak_length * uniform(rng, 0.6, 1.4);
      const double strength = p.streak_alpha * uniform(rng, 0.6, 1.0);
      const int steps = static_cast<int>(std::ceil(len * 2.0));
      for (int s = 0; s <= steps; ++s) {
        const double t = len * s / steps;
        const double px = x0 + t * p.streak_slant / norm, py = y0 + t / norm;
        const int ix = static_cast<int>(std::floor(px)), iy = static_cast<int>(std::floor(py));
        const double ax = px - ix, ay = py - iy;
        const double share = 0.5 * strength;  // two samples per pixel of streak length
        const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
        const int xs[4] = {ix, ix + 1, ix, ix + 1}, ys[4] = {iy, iy, iy + 1, iy + 1};
        for (int k = 0; k < 4; ++k) {
          if (xs[k] >= 0 && xs[k] < w && ys[k] >= 0 && ys[k] < h) alpha(ys[k], xs[k]) += share * wts[k];
        }
      }
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (alpha(y, x) > 0.0) blend_pixel(out, y, x, std::min(alpha(y, x), 0.8), 0.85);
  }

  apply_veil(out, p.veil, 0.8);
  clamp_unit(out);
  return out;
}

// --- snow --------------------------------------------------------------------

SnowParams SnowParams::for_magnitude(int magnitude) {
  if (magnitude != 1 && magnitude != 2) throw ConfigError("snow magnitude must be 1 or 2");
  SnowParams p;
  p.ground_opacity = 0.85;
  if (magnitude == 2) {
    p.flakes_per_frame = 160;
    p.veil = 0.12;
  }
  return p;
}

std::vector<Snowflake> plan_snowflakes(const SnowParams& params, int width, int height, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kFlakes}));
  std::vector<Snowflake> flakes;
  flakes.reserve(static_cast<std::size_t>(std::max(params.flakes_per_frame, 0)));
  for (int i = 0; i < params.flakes_per_frame; ++i) {
    Snowflake f{};
    f.x = uniform(rng, 0.0, width);
    f.y = uniform(rng, 0.0, height);
    const double pseudo_distance = uniform(rng, 1.0, 8.0);
    f.radius = params.flake_radius / pseudo_distance;
    f.alpha = params.flake_alpha * uniform(rng, 0.6, 1.0);
    flakes.push_back(f);
  }
  return flakes;
}

Image render_snow(const Image& image, const DepthMap& depth, int magnitude, std::uint64_t seed) {
  return render_snow(image, depth, SnowParams::for_magnitude(magnitude), seed).image;
}

SnowRender render_snow(const Image& image, const DepthMap& depth, const SnowParams& p, std::uint64_t seed) {
  const int h = image.height(), w = image.width();
  if (!depth.empty() && !depth.same_shape(h, w)) throw DataError("render_snow: depth does not match image");
  SnowRender out{image, 0};
  const double horizon = horizon_of(p.horizon_row, h);

  if (p.ground_opacity > 0.0) {
    const std::uint64_t ground_seed = derive_seed(seed, {kGroundSnow});
    for (int y = static_cast<int>(std::ceil(horizon)); y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double n = value_noise(ground_seed, x, y * 2.0, p.ground_noise_scale);
        double cover = p.ground_opacity * smoothstep(0.3, 0.6, n);
        if (!depth.empty()) cover *= std::exp(-depth(y, x) / 120.0);
        if (cover <= 0.0) continue;
        const double g = gray_at(image, y, x);
        const double snow = 0.88 + 0.1 * value_noise(ground_seed + 1, x, y, 2.0);
        for (int c = 0; c < image.channels(); ++c) {
          const double desaturated = 0.5 * (g + image(c, y, x));
          out.image(c, y, x) = static_cast<float>(desaturated * (1.0 - cover) + snow * cover);
        }
      }
  }

  for (const Snowflake& f : plan_snowflakes(p, w, h, seed)) {
    const double sigma = std::max(f.radius, 0.3);
    const int reach = static_cast<int>(std::ceil(3.0 * sigma));
    bool touched = false;
    for (int y = std::max(0, static_cast<int>(f.y) - reach); y <= std::min(h - 1, static_cast<int>(f.y) + reach); ++y)
      for (int x = std::max(0, static_cast<int>(f.x) - reach); x <= std::min(w - 1, static_cast<int>(f.x) + reach);
           ++x) {
        const double d2 = (x - f.x) * (x - f.x) + (y - f.y) * (y - f.y);
        const double a = f.alpha * std::exp(-0.5 * d2 / (sigma * sigma));
        if (a < 1e-3) continue;
        blend_pixel(out.image, y, x, a, 0.97);
        touched = true;
      }
    if (touched) ++out.particles_composited;
  }

  apply_veil(out.image, p.veil, 0.85);
  clamp_unit(out.image);
  return out;
}

// --- dispatch ------------------------------------------------------------------

void quantize_8bit(Image& image) {
  for (float& v : image.raw()) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
}

Image build_variant(const Image& clear, const DepthMap& depth, WeatherVariantId variant, std::uint64_t seed,
                    const AugmentConfig& config) {
  variant.validate();
  Image out;
  switch (variant.weather) {
    case Weather::kClear:
      out = jitter(clear, seed, config.jitter);
      break;
    case Weather::kRain:
      out = render_rain(clear, variant.magnitude, seed);
      break;
    case Weather::kSnow:
      out = render_snow(clear, depth, variant.magnitude, seed);
      break;
    case Weather::kFog: {
      FogParams fog;
      fog.visibility_m = variant.magnitude == 1 ? config.fog_visibility_m1 : config.fog_visibility_m2;
      fog.atmospheric_light = config.atmospheric_light;
      out = render_fog(clear, depth, fog);
      break;
    }
  }
  quantize_8bit(out);
  return out;
}

}  // namespace cdepth
