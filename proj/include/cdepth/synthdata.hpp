// SPDX-License-Identifier: Apache-2.0
//
// Procedural rectified stereo scenes with exact ground-truth depth, and the
// on-disk dataset layout shared by every tool:
//
//   <root>/rig.json                          fx, fy, cx, cy, b, W, H
//   <root>/<scene>/<frame>_L_clear_0.png     8-bit RGB
//   <root>/<scene>/<frame>_R_clear_0.png
//   <root>/<scene>/<frame>_L_<weather>_<m>.png
//   <root>/<scene>/<frame>_depth.png         16-bit, depth_m = raw / 256
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cdepth/augmentation.hpp"
#include "cdepth/geometry.hpp"

namespace cdepth {

inline constexpr double kDepthPngScale = 256.0;

/// Sum of band-limited sinusoids over 2-D surface coordinates (meters).
struct SurfaceTexture {
  struct Wave {
    double kx = 0.0, ky = 0.0;  // cycles per meter
    double phase = 0.0;
    double amplitude = 0.0;
  };
  std::array<double, 3> base_color{0.5, 0.5, 0.5};
  std::vector<Wave> waves;
};

struct Box {
  Eigen::Vector3d min_corner;
  Eigen::Vector3d max_corner;
  SurfaceTexture texture;
  bool ground = false;  // the wide slab the other boxes stand on
};

struct SceneConfig {
  int min_objects = 3;
  int max_objects = 10;
  double min_depth = 2.0;
  double max_depth = 80.0;
  double camera_height = 1.65;
  /// Overrides the sampled object count; 0 yields a background-only scene.
  std::optional<int> object_count;
};

struct Scene {
  std::uint64_t seed = 0;
  CameraRig rig;
  SceneConfig config;
  double background_depth = 0.0;
  SurfaceTexture background;
  std::vector<Box> objects;  // objects[0] is the ground slab when present
};

Scene generate_scene(std::uint64_t seed, const CameraRig& rig, const SceneConfig& config = {});

struct Sample {
  std::string scene;
  std::string frame;
  Image left;   // clear left view
  Image right;  // clear right view
  DepthMap depth;  // left view, on the 1/256 m storage grid
  /// Left pixels whose surface point is visible in the right view. Produced by the
  /// renderer only; empty for samples read from disk.
  Mask visible_in_right;
  std::map<WeatherVariantId, Image> left_variants;  // weather variants of the left view

  bool has_variant(WeatherVariantId v) const;
  /// clear left for clear_0, else the stored variant. Throws DataError naming the
  /// scene, frame and variant when it is absent.
  const Image& left_variant(WeatherVariantId v) const;
};

struct RenderOutput {
  Image image;
  DepthMap depth;  // exact z-depth at pixel centers
};

/// Ray-casts one view. `camera_offset_x` is the camera center along +x (0 = left).
RenderOutput render_view(const Scene& scene, double camera_offset_x);

/// Renders left, right, quantized left depth and the right-visibility mask.
Sample render_stereo(const Scene& scene, const std::string& scene_id = "scene_0000",
                     const std::string& frame_id = "000000");

/// Pure function of (sample, variant, seed): see build_variant(Image, ...).
Image build_variant(const Sample& sample, WeatherVariantId variant, std::uint64_t seed,
                    const AugmentConfig& config = {});

struct Dataset {
  CameraRig rig;
  std::vector<Sample> samples;  // lexicographic by (scene, frame)

  /// Weather variants present for every sample (clear_0 is always included).
  std::vector<WeatherVariantId> available_variants() const;
  /// Throws DataError naming the first (scene, frame, variant) that is missing.
  void require_variants(const std::vector<WeatherVariantId>& variants) const;
};

struct SynthConfig {
  int scenes = 10;
  std::uint64_t seed = 0;
  int width = 192;
  int height = 64;
  SceneConfig scene;
};

Dataset synthesize_dataset(const SynthConfig& config);

/// Renders `variants` of every sample's left view; seeds derive from (seed, sample index).
void add_weather_variants(Dataset& dataset, const std::vector<WeatherVariantId>& variants, std::uint64_t seed,
                          const AugmentConfig& config = {});

void write_dataset(const Dataset& dataset, const std::filesystem::path& root);
/// Eagerly loads every sample. Throws DataError naming the offending path for
/// missing or malformed files; a variant present for some frames but not others is
/// reported with its (scene, frame, variant).
Dataset load_dataset(const std::filesystem::path& root);

void write_rig(const CameraRig& rig, const std::filesystem::path& file);
CameraRig read_rig(const std::filesystem::path& file);

/// PNG helpers. Images are 8-bit RGB, depth is 16-bit with kDepthPngScale.
void write_image_png(const Image& image, const std::filesystem::path& file);
Image read_image_png(const std::filesystem::path& file);
void write_depth_png(const DepthMap& depth, const std::filesystem::path& file);
DepthMap read_depth_png(const std::filesystem::path& file);

/// Rounds depth to the 16-bit PNG storage grid.
void quantize_depth(DepthMap& depth);

}  // namespace cdepth
