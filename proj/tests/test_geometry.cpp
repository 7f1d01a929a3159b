// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cdepth/augmentation.hpp"
#include "cdepth/geometry.hpp"
#include "cdepth/synthdata.hpp"
#include "test_util.hpp"

using namespace cdepth;
using namespace cdepth::testing;

namespace {

double mean_abs_error(const Image& a, const Image& b, const Mask& mask) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x)
        if (mask(y, x)) {
          sum += std::abs(a(c, y, x) - b(c, y, x));
          ++n;
        }
  REQUIRE(n > 0);
  return sum / static_cast<double>(n);
}

Mask and_masks(const Mask& a, const Mask& b) {
  Mask m(a.height(), a.width());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = a[i] && b[i];
  return m;
}

}  // namespace

TEST_CASE("disparity to depth follows D = b fx / d") {
  const CameraRig unit = CameraRig::rectified(1.0, 1.0, 2.0, 2.0, 1.0, 4, 4);
  const DepthMap ones = disparity_to_depth(DisparityMap(4, 4, 1.0), unit);
  for (double v : ones.raw()) CHECK(v == 1.0);

  const CameraRig rig = CameraRig::rectified(720.0, 720.0, 4.0, 4.0, 0.5, 8, 8);
  const DepthMap four = disparity_to_depth(DisparityMap(8, 8, 90.0), rig);
  for (double v : four.raw()) CHECK(v == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("disparity to depth matches a scalar loop and inverts") {
  const CameraRig rig = CameraRig::kitti_like(8, 8);
  DisparityMap d(random_grid(8, 8, 11, 1.0, 64.0));
  const DepthMap depth = disparity_to_depth(d, rig);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(rel_err(depth(y, x), rig.baseline * rig.fx / d(y, x)) < 1e-12);
  const DisparityMap back = depth_to_disparity(depth, rig);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(rel_err(back[i], d[i]) < 1e-9);
}

TEST_CASE("degenerate disparities are rejected") {
  const CameraRig rig = CameraRig::kitti_like(16, 8);
  DisparityMap d(8, 16, 2.0);
  d(3, 3) = 1e-7;
  CHECK_THROWS_AS(disparity_to_depth(d, rig), DegenerateInputError);
  d(3, 3) = std::nan("");
  CHECK_THROWS_AS(disparity_to_depth(d, rig), DegenerateInputError);
  d(3, 3) = -1.0;
  CHECK_THROWS_AS(disparity_to_depth(d, rig), DegenerateInputError);
}

TEST_CASE("camera rig invariants") {
  const CameraRig rig = CameraRig::kitti_like(192, 64);
  CHECK_NOTHROW(rig.validate());
  const Eigen::Matrix4d id = (rig.right_to_left * rig.left_to_right()).matrix();
  CHECK((id - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(rig.right_to_left.translation().x() == doctest::Approx(rig.baseline));
  CHECK_THROWS_AS(CameraRig::rectified(-1.0, 1.0, 2.0, 2.0, 0.5, 8, 8), ConfigError);
  CHECK_THROWS_AS(CameraRig::rectified(1.0, 1.0, 8.0, 2.0, 0.5, 8, 8), ConfigError);
  CHECK_THROWS_AS(CameraRig::rectified(1.0, 1.0, 2.0, 2.0, 0.0, 8, 8), ConfigError);
}

TEST_CASE("zero shift warp is the identity") {
  const Image src = random_image(3, 16, 24, 3);
  const WarpResult w = shift_warp(src, Grid<double>(16, 24, 0.0), WarpDirection::kRightToLeft);
  for (std::size_t i = 0; i < src.size(); ++i) CHECK(std::abs(w.warped.raw()[i] - src.raw()[i]) < 1e-6);
  CHECK(count_true(w.valid) == w.valid.size());
}

TEST_CASE("constant shift equals an explicit translation") {
  const Image src = random_image(3, 10, 20, 4);
  const Grid<double> shift(10, 20, 3.0);
  const WarpResult rl = shift_warp(src, shift, WarpDirection::kRightToLeft);
  const WarpResult lr = shift_warp(src, shift, WarpDirection::kLeftToRight);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 20; ++x) {
        if (x >= 3) {
          CHECK(std::abs(rl.warped(c, y, x) - src(c, y, x - 3)) < 1e-6);
          CHECK(rl.valid(y, x));
        } else {
          CHECK_FALSE(rl.valid(y, x));
        }
        if (x + 3 <= 19) {
          CHECK(std::abs(lr.warped(c, y, x) - src(c, y, x + 3)) < 1e-6);
        } else {
          CHECK_FALSE(lr.valid(y, x));
        }
      }
}

TEST_CASE("warp gradients match central differences") {
  const CameraRig rig = CameraRig::kitti_like(48, 16);
  const double bf = rig.depth_disparity_product();
  const Image src = smooth_image(3, 16, 48);
  // disparities with fractional parts away from the bilinear kinks
  Grid<double> disp(16, 48);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> whole(1, 6);
  std::uniform_real_distribution<double> frac(0.25, 0.75);
  for (double& v : disp.raw()) v = whole(rng) + frac(rng);
  DepthMap depth(16, 48);
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = bf / disp[i];
  const Image weights = random_image(3, 16, 48, 6, -1.0f, 1.0f);

  auto objective = [&](const DepthMap& d) {
    const WarpResult w = warp(src, d, rig, WarpDirection::kRightToLeft);
    double s = 0.0;
    for (std::size_t i = 0; i < w.warped.size(); ++i) s += double(weights.raw()[i]) * w.warped.raw()[i];
    return s;
  };
  const WarpGradients g = warp_backward(src, depth, rig, WarpDirection::kRightToLeft, weights);

  int checked = 0;
  for (int y = 2; y < 14; y += 3)
    for (int x = 10; x < 44; x += 5) {
      // step of 1e-3 px in disparity expressed in depth
      const double h = 1e-3 * depth(y, x) * depth(y, x) / bf;
      DepthMap plus = depth, minus = depth;
      plus(y, x) += h;
      minus(y, x) -= h;
      const double fd = (objective(plus) - objective(minus)) / (2.0 * h);
      if (std::abs(fd) < 1e-6) continue;
      CHECK(rel_err(g.shift(y, x), fd) < 1e-2);
      ++checked;
    }
  CHECK(checked > 20);
}

TEST_CASE("warp gradient with respect to the source matches finite differences") {
  const Image src = smooth_image(1, 6, 12);
  const Grid<double> shift = random_grid(6, 12, 8, 0.2, 2.8);
  const Image weights = random_image(1, 6, 12, 9, -1.0f, 1.0f);
  const WarpGradients g = shift_warp_backward(src, shift, WarpDirection::kRightToLeft, weights);
  auto objective = [&](const Image& s) {
    const WarpResult w = shift_warp(s, shift, WarpDirection::kRightToLeft);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.warped.size(); ++i) acc += double(weights.raw()[i]) * w.warped.raw()[i];
    return acc;
  };
  for (int x = 1; x < 11; ++x) {
    Image p = src, m = src;
    p(0, 3, x) += 1e-2f;
    m(0, 3, x) -= 1e-2f;
    const double fd = (objective(p) - objective(m)) / 2e-2;
    CHECK(std::abs(g.source(0, 3, x) - fd) < 1e-3);
  }
}

TEST_CASE("dimension mismatch is a configuration error") {
  const CameraRig rig = CameraRig::kitti_like(48, 16);
  CHECK_THROWS_AS(warp(Image(3, 16, 40), DepthMap(16, 48, 5.0), rig, WarpDirection::kRightToLeft), ConfigError);
  CHECK_THROWS_AS(warp(Image(3, 16, 48), DepthMap(8, 48, 5.0), rig, WarpDirection::kRightToLeft), ConfigError);
}

TEST_CASE("valid mask only depends on the disparity values") {
  const Image src = random_image(3, 8, 32, 10);
  const Grid<double> shift = random_grid(8, 32, 12, 0.5, 10.0);
  const WarpResult a = shift_warp(src, shift, WarpDirection::kRightToLeft);
  const WarpResult b = shift_warp(src, shift, WarpDirection::kRightToLeft);
  CHECK(a.valid == b.valid);
  Grid<double> larger = shift;
  for (double& v : larger.raw()) v += 1.0;
  const WarpResult c = shift_warp(src, larger, WarpDirection::kRightToLeft);
  for (std::size_t i = 0; i < c.valid.size(); ++i)
    if (c.valid[i]) CHECK(a.valid[i]);
}

TEST_CASE("ground-truth depth reconstructs a fronto-parallel plane") {
  const CameraRig rig = CameraRig::kitti_like(192, 64);
  SceneConfig sc;
  sc.object_count = 0;
  Scene scene = generate_scene(21, rig, sc);
  scene.background_depth = rig.depth_disparity_product() / 4.0;  // 4 px disparity
  const Sample s = render_stereo(scene);
  const WarpResult w = warp(s.right, s.depth, rig, WarpDirection::kRightToLeft);
  CHECK(mean_abs_error(w.warped, s.left, and_masks(w.valid, s.visible_in_right)) < 1e-3);
}

TEST_CASE("ground-truth depth reconstructs cluttered scenes on non-occluded pixels") {
  const CameraRig rig = CameraRig::kitti_like(192, 64);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Sample s = render_stereo(generate_scene(seed, rig));
    const WarpResult w = warp(s.right, s.depth, rig, WarpDirection::kRightToLeft);
    CHECK(mean_abs_error(w.warped, s.left, and_masks(w.valid, s.visible_in_right)) < 1e-2);
  }
}

TEST_CASE("semi-augmented warp equals warp on clear inputs") {
  const CameraRig rig = CameraRig::kitti_like(192, 64);
  const Sample s = render_stereo(generate_scene(3, rig));
  const WarpResult a = warp(s.right, s.depth, rig, WarpDirection::kRightToLeft);
  const WarpResult b = semi_augmented_warp(s.right, s.depth, rig, WarpDirection::kRightToLeft);
  CHECK(a.warped == b.warped);
  CHECK(a.valid == b.valid);
}

TEST_CASE("semi-augmented warp target stays clear under fog") {
  const CameraRig rig = CameraRig::kitti_like(192, 64);
  const Sample s = render_stereo(generate_scene(4, rig));
  const Image fog = build_variant(s, {Weather::kFog, 2}, 1);
  CHECK_FALSE(fog == s.left);
  // the depth would come from the fog image; the warp only sees the clear pair
  const WarpResult w = semi_augmented_warp(s.right, s.depth, rig, WarpDirection::kRightToLeft);
  CHECK(mean_abs_error(w.warped, s.left, and_masks(w.valid, s.visible_in_right)) < 1e-2);
}

TEST_CASE("general reprojection agrees with the rectified shortcut") {
  const CameraRig rig = CameraRig::kitti_like(192, 64);
  const Sample s = render_stereo(generate_scene(5, rig));
  for (auto dir : {WarpDirection::kRightToLeft, WarpDirection::kLeftToRight}) {
    const WarpResult a = warp(s.right, s.depth, rig, dir);
    const WarpResult b = project_warp(s.right, s.depth, rig, dir);
    CHECK(a.valid == b.valid);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.warped.size(); ++i)
      worst = std::max(worst, double(std::abs(a.warped.raw()[i] - b.warped.raw()[i])));
    CHECK(worst < 1e-4);
  }
}
