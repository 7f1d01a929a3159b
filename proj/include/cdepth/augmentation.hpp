// SPDX-License-Identifier: Apache-2.0
//
// Seeded procedural weather variants: photometric jitter, relative-adverse effects
// (ground water, ground snow, lens droplets, light fog) and adverse effects (rain
// streaks, snowflakes, veiling, dense fog).
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "cdepth/grid.hpp"

namespace cdepth {

enum class Weather { kClear, kRain, kSnow, kFog };

/// magnitude 0 = clear (jittered), 1 = relative adverse, 2 = adverse.
struct WeatherVariantId {
  Weather weather = Weather::kClear;
  int magnitude = 0;

  /// Curriculum stage whose data this variant belongs to (magnitude + 1).
  int stage() const { return magnitude + 1; }
  bool is_legal() const;
  void validate() const;
  /// "clear_0", "rain_1", ... as used in dataset file names.
  std::string name() const;
  static WeatherVariantId parse(const std::string& name);

  friend auto operator<=>(const WeatherVariantId&, const WeatherVariantId&) = default;
};

std::string weather_name(Weather w);

inline constexpr WeatherVariantId kClearVariant{Weather::kClear, 0};

/// clear_0 plus the three weathers at magnitudes 1 and 2.
std::vector<WeatherVariantId> all_variants();
/// The six weather variants (no clear).
std::vector<WeatherVariantId> weather_variants();

struct JitterRange {
  double lo = 0.8;
  double hi = 1.2;
};

struct JitterParams {
  JitterRange brightness;
  JitterRange contrast;
  JitterRange saturation;

  static JitterParams identity() { return {{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}}; }
};

struct JitterFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

JitterFactors sample_jitter(const JitterParams& params, std::uint64_t seed);
/// Brightness scale, then contrast about the mean gray level, then saturation about
/// per-pixel gray; clamped to [0, 1] after each step.
Image apply_jitter(const Image& image, const JitterFactors& factors);
Image jitter(const Image& image, std::uint64_t seed, const JitterParams& params = {});

/// Koschmieder constant: extinction at which contrast drops to 2% over the visibility.
inline constexpr double kKoschmiederConstant = 3.912;

struct FogParams {
  double visibility_m = 150.0;
  std::array<double, 3> atmospheric_light{0.9, 0.9, 0.92};
  double koschmieder = kKoschmiederConstant;

  double extinction() const { return koschmieder / visibility_m; }
  void validate() const;
};

/// exp(-extinction * depth) per pixel.
Grid<double> fog_transmittance(const DepthMap& depth, const FogParams& params);
/// out = image * t + A * (1 - t). Throws DataError when depth is empty or mismatched.
Image render_fog(const Image& image, const DepthMap& depth, const FogParams& params);

struct RainParams {
  int droplet_count = 0;
  double droplet_radius_min = 2.0;  // pixels
  double droplet_radius_max = 5.0;
  double reflection_opacity = 0.0;  // ground water below the horizon row
  double reflection_darkening = 0.75;
  int reflection_blur = 3;          // vertical half-window, pixels
  int streak_count = 0;
  double streak_length = 14.0;      // pixels
  double streak_alpha = 0.35;
  double streak_slant = 0.15;       // dx per dy
  double veil = 0.0;                // blend toward a bright gray
  double horizon_row = -1.0;        // < 0: image center

  static RainParams for_magnitude(int magnitude);
};

/// magnitude 1 draws droplets and ground reflections; magnitude 2 adds streaks and veiling.
Image render_rain(const Image& image, int magnitude, std::uint64_t seed);
Image render_rain(const Image& image, const RainParams& params, std::uint64_t seed);

struct Snowflake {
  double x, y;
  double radius;
  double alpha;
};

struct SnowParams {
  double ground_opacity = 0.0;  // ground snow blended into rows below the horizon
  double ground_noise_scale = 6.0;  // pixels per noise cell
  int flakes_per_frame = 0;     // particle density
  double flake_radius = 2.2;    // radius at pseudo-distance 1
  double flake_alpha = 0.85;
  double veil = 0.0;
  double horizon_row = -1.0;

  static SnowParams for_magnitude(int magnitude);
};

std::vector<Snowflake> plan_snowflakes(const SnowParams& params, int width, int height, std::uint64_t seed);

struct SnowRender {
  Image image;
  std::size_t particles_composited = 0;
};

/// magnitude 1: ground snow; magnitude 2: adds flakes and veiling. `depth` may be
/// empty; when present it fades ground snow with distance.
Image render_snow(const Image& image, const DepthMap& depth, int magnitude, std::uint64_t seed);
SnowRender render_snow(const Image& image, const DepthMap& depth, const SnowParams& params, std::uint64_t seed);

struct AugmentConfig {
  JitterParams jitter;
  double fog_visibility_m1 = 150.0;
  double fog_visibility_m2 = 75.0;
  std::array<double, 3> atmospheric_light{0.9, 0.9, 0.92};
};

/// Produces `variant` of a left view. Pure in (image, depth, variant, seed, config);
/// depth is read only by fog and snow.
Image build_variant(const Image& clear, const DepthMap& depth, WeatherVariantId variant, std::uint64_t seed,
                    const AugmentConfig& config = {});

/// Clamp to [0, 1] and round to the 8-bit grid, so the image survives PNG storage exactly.
void quantize_8bit(Image& image);

}  // namespace cdepth
