// SPDX-License-Identifier: Apache-2.0
#include "cdepth/synthdata.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "cdepth/seeding.hpp"

namespace cdepth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SurfaceTexture random_texture(Rng& rng, std::array<double, 2> color_range, std::array<double, 2> wavelength_m,
                              int waves) {
  SurfaceTexture t;
  for (double& c : t.base_color) c = uniform(rng, color_range[0], color_range[1]);
  for (int i = 0; i < waves; ++i) {
    const double lambda = uniform(rng, wavelength_m[0], wavelength_m[1]);
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    SurfaceTexture::Wave w;
    w.kx = std::cos(theta) / lambda;
    w.ky = std::sin(theta) / lambda;
    w.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    w.amplitude = uniform(rng, 0.1, 0.25);
    t.waves.push_back(w);
  }
  return t;
}

struct Hit {
  double t = kInf;
  int axis = 2;  // axis of the face normal
  const SurfaceTexture* texture = nullptr;
  bool background = false;
};

// Slab test; reports the entry face.
bool intersect(const Box& box, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double& t_hit, int& axis) {
  double t_near = -kInf, t_far = kInf;
  int near_axis = 2;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < box.min_corner[a] || origin[a] > box.max_corner[a]) return false;
      continue;
    }
    double t0 = (box.min_corner[a] - origin[a]) / dir[a];
    double t1 = (box.max_corner[a] - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      near_axis = a;
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 0.0) return false;
  t_hit = t_near;
  axis = near_axis;
  return true;
}

Eigen::Vector3d pixel_ray(const CameraRig& rig, double u, double v) {
  return {(u - rig.cx) / rig.fx, (v - rig.cy) / rig.fy, 1.0};
}

Hit cast(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  Hit hit;
  for (const Box& box : scene.objects) {
    double t;
    int axis;
    if (intersect(box, origin, dir, t, axis) && t < hit.t) {
      hit.t = t;
      hit.axis = axis;
      hit.texture = &box.texture;
    }
  }
  const double t_bg = (scene.background_depth - origin.z()) / dir.z();
  if (t_bg < hit.t) {
    hit.t = t_bg;
    hit.axis = 2;
    hit.texture = &scene.background;
    hit.background = true;
  }
  return hit;
}

Eigen::Vector2d surface_coords(const Eigen::Vector3d& p, int axis) {
  switch (axis) {
    case 0: return {p.z(), p.y()};
    case 1: return {p.x(), p.z()};
    default: return {p.x(), p.y()};
  }
}

// Surface coordinates where a neighboring pixel ray meets the plane of the hit face.
Eigen::Vector2d neighbor_coords(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, int axis, double plane) {
  if (std::abs(dir[axis]) < 1e-12) return {kInf, kInf};
  const double t = (plane - origin[axis]) / dir[axis];
  return surface_coords(origin + t * dir, axis);
}

double face_shade(int axis, bool background) {
  if (background) return 1.0;
  return axis == 2 ? 1.0 : axis == 0 ? 0.78 : 1.1;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const CameraRig& rig, const SceneConfig& config) {
  rig.validate();
  if (!(config.min_depth > 0.0) || !(config.max_depth > config.min_depth + 10.0)) {
    throw ConfigError("scene config: need 0 < min_depth and max_depth > min_depth + 10");
  }
  Rng rng(derive_seed(seed, {0x5ce7e}));
  Scene scene;
  scene.seed = seed;
  scene.rig = rig;
  scene.config = config;
  scene.background_depth = uniform(rng, std::max(config.min_depth, 0.7 * config.max_depth), config.max_depth);
  scene.background = random_texture(rng, {0.45, 0.8}, {3.0, 14.0}, 3);

  const int count = config.object_count.value_or(uniform_int(rng, config.min_objects, config.max_objects));
  if (count <= 0) return scene;

  Box ground;
  ground.ground = true;
  ground.min_corner = {-400.0, config.camera_height, config.min_depth};
  ground.max_corner = {400.0, config.camera_height + 0.2, scene.background_depth};
  ground.texture = random_texture(rng, {0.25, 0.5}, {0.3, 2.5}, 4);
  scene.objects.push_back(ground);

  std::vector<double> fronts;
  const double near = config.min_depth + 2.0;
  const double far = std::min(0.65 * config.max_depth, scene.background_depth - 6.0);
  for (int i = 1; i < count; ++i) {
    double z = 0.0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      z = uniform(rng, near, far);
      bool distinct = true;
      for (double f : fronts) distinct = distinct && std::abs(f - z) > 0.25;
      if (distinct) break;
    }
    fronts.push_back(z);
    const double half_fov_x = 0.5 * rig.width / rig.fx;
    const double cx = uniform(rng, -0.9, 0.9) * half_fov_x * z;
    const double width = uniform(rng, 0.6, 3.5), height = uniform(rng, 0.8, 3.5);
    const double extent = uniform(rng, 0.4, 3.0);
    Box box;
    box.min_corner = {cx - 0.5 * width, config.camera_height - height, z};
    box.max_corner = {cx + 0.5 * width, config.camera_height, std::min(z + extent, scene.background_depth - 1.0)};
    box.texture = random_texture(rng, {0.12, 0.88}, {0.25, 2.0}, 3);
    scene.objects.push_back(box);
  }
  return scene;
}

RenderOutput render_view(const Scene& scene, double camera_offset_x) {
  const CameraRig& rig = scene.rig;
  const Eigen::Vector3d origin(camera_offset_x, 0.0, 0.0);
  RenderOutput out{Image(3, rig.height, rig.width), DepthMap(rig.height, rig.width)};
  constexpr double kPrefilterSigma = 0.5;  // pixels
  for (int y = 0; y < rig.height; ++y) {
    for (int x = 0; x < rig.width; ++x) {
      const Eigen::Vector3d dir = pixel_ray(rig, x, y);
      const Hit hit = cast(scene, origin, dir);
      const Eigen::Vector3d p = origin + hit.t * dir;
      out.depth(y, x) = p.z();

      const double plane = p[hit.axis];
      const Eigen::Vector2d uv = surface_coords(p, hit.axis);
      const Eigen::Vector2d du = neighbor_coords(origin, pixel_ray(rig, x + 1, y), hit.axis, plane) - uv;
      const Eigen::Vector2d dv = neighbor_coords(origin, pixel_ray(rig, x, y + 1), hit.axis, plane) - uv;
      double modulation = 1.0;
      for (const auto& w : hit.texture->waves) {
        // analytic Gaussian prefilter of each sinusoid over the pixel footprint
        const double pu = w.kx * du.x() + w.ky * du.y(), pv = w.kx * dv.x() + w.ky * dv.y();
        const double footprint = std::isfinite(pu) && std::isfinite(pv) ? pu * pu + pv * pv : kInf;
        const double attenuation =
            std::exp(-2.0 * std::numbers::pi * std::numbers::pi * kPrefilterSigma * kPrefilterSigma * footprint);
        modulation += w.amplitude * attenuation *
                      std::sin(2.0 * std::numbers::pi * (w.kx * uv.x() + w.ky * uv.y()) + w.phase);
      }
      const double shade = face_shade(hit.axis, hit.background);
      for (int c = 0; c < 3; ++c) out.image(c, y, x) = static_cast<float>(shade * hit.texture->base_color[c] * modulation);
    }
  }
  quantize_8bit(out.image);
  return out;
}

Sample render_stereo(const Scene& scene, const std::string& scene_id, const std::string& frame_id) {
  const CameraRig& rig = scene.rig;
  RenderOutput left = render_view(scene, 0.0);
  RenderOutput right = render_view(scene, rig.baseline);

  Sample s;
  s.scene = scene_id;
  s.frame = frame_id;
  s.left = std::move(left.image);
  s.right = std::move(right.image);
  s.visible_in_right = Mask(rig.height, rig.width, 0);
  const Eigen::Vector3d right_origin(rig.baseline, 0.0, 0.0);
  const double bf = rig.depth_disparity_product();
  for (int y = 0; y < rig.height; ++y) {
    for (int x = 0; x < rig.width; ++x) {
      const double z = left.depth(y, x);
      const double xr = x - bf / z;
      if (xr < 0.0 || xr > rig.width - 1) continue;
      const Hit hit = cast(scene, right_origin, pixel_ray(rig, xr, y));
      s.visible_in_right(y, x) = std::abs(hit.t - z) <= 1e-6 * z ? 1 : 0;
    }
  }
  s.depth = std::move(left.depth);
  quantize_depth(s.depth);
  return s;
}

void quantize_depth(DepthMap& depth) {
  for (double& v : depth.raw()) v = static_cast<double>(std::lround(v * kDepthPngScale)) / kDepthPngScale;
}

bool Sample::has_variant(WeatherVariantId v) const {
  return v == kClearVariant || left_variants.contains(v);
}

const Image& Sample::left_variant(WeatherVariantId v) const {
  if (v == kClearVariant) return left;
  const auto it = left_variants.find(v);
  if (it == left_variants.end()) {
    throw DataError("missing variant " + v.name() + " for scene " + scene + ", frame " + frame);
  }
  return it->second;
}

Image build_variant(const Sample& sample, WeatherVariantId variant, std::uint64_t seed, const AugmentConfig& config) {
  return build_variant(sample.left, sample.depth, variant, seed, config);
}

std::vector<WeatherVariantId> Dataset::available_variants() const {
  std::vector<WeatherVariantId> out{kClearVariant};
  for (const auto& v : weather_variants()) {
    const bool everywhere =
        !samples.empty() && std::all_of(samples.begin(), samples.end(), [&](const Sample& s) { return s.has_variant(v); });
    if (everywhere) out.push_back(v);
  }
  return out;
}

void Dataset::require_variants(const std::vector<WeatherVariantId>& variants) const {
  for (const Sample& s : samples)
    for (const auto& v : variants) (void)s.left_variant(v);
}

Dataset synthesize_dataset(const SynthConfig& config) {
  if (config.scenes < 0) throw ConfigError("synth: scene count must be non-negative");
  Dataset ds;
  ds.rig = CameraRig::kitti_like(config.width, config.height);
  ds.samples.reserve(static_cast<std::size_t>(config.scenes));
  for (int i = 0; i < config.scenes; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%04d", i);
    const Scene scene = generate_scene(derive_seed(config.seed, {static_cast<std::uint64_t>(i)}), ds.rig, config.scene);
    ds.samples.push_back(render_stereo(scene, id, "000000"));
  }
  return ds;
}

void add_weather_variants(Dataset& dataset, const std::vector<WeatherVariantId>& variants, std::uint64_t seed,
                          const AugmentConfig& config) {
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    Sample& s = dataset.samples[i];
    for (const auto& v : variants) {
      if (v == kClearVariant) continue;
      s.left_variants[v] = build_variant(s, v, derive_seed(seed, {i, static_cast<std::uint64_t>(v.stage()),
                                                                  static_cast<std::uint64_t>(v.weather)}),
                                         config);
    }
  }
}

}  // namespace cdepth
