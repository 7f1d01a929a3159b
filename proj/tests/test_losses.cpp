// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "cdepth/losses.hpp"
#include "test_util.hpp"

using namespace cdepth;
using namespace cdepth::testing;

namespace {

// Scalar SSIM + L1 reference: explicit reflect-101 padding, two-pass moments.
double reference_photometric(const Image& t, const Image& r, double alpha, double beta) {
  const int h = t.height(), w = t.width();
  auto pad = [&](const Image& img, int c, int y, int x) {
    y = y < 0 ? -y : (y >= h ? 2 * h - 2 - y : y);
    x = x < 0 ? -x : (x >= w ? 2 * w - 2 - x : x);
    return double(img(c, y, x));
  };
  double total = 0.0;
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::vector<double> a, b;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            a.push_back(pad(t, c, y + dy, x + dx));
            b.push_back(pad(r, c, y + dy, x + dx));
          }
        double ma = 0, mb = 0;
        for (int i = 0; i < 9; ++i) ma += a[i] / 9, mb += b[i] / 9;
        double va = 0, vb = 0, cov = 0;
        for (int i = 0; i < 9; ++i) {
          va += (a[i] - ma) * (a[i] - ma) / 9;
          vb += (b[i] - mb) * (b[i] - mb) / 9;
          cov += (a[i] - ma) * (b[i] - mb) / 9;
        }
        const double c1 = 1e-4, c2 = 9e-4;
        const double ssim = (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        const double d = std::min(1.0, std::max(0.0, (1 - ssim) / 2));
        total += alpha * d + beta * std::abs(double(t(c, y, x)) - double(r(c, y, x)));
      }
  return total / (double(h) * w * t.channels());
}

Mask full_mask(int h, int w) { return Mask(h, w, 1); }

}  // namespace

TEST_CASE("photometric loss of identical images is zero") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image img = random_image(3, 12, 16, seed);
    CHECK(std::abs(photometric_loss(img, img, full_mask(12, 16))) < 1e-6);
  }
}

TEST_CASE("pure L1 of a constant offset") {
  const Image a = random_image(3, 8, 8, 1, 0.0f, 0.8f);
  Image b = a;
  for (float& v : b.raw()) v += 0.1f;
  const double loss = photometric_loss(a, b, full_mask(8, 8), PhotometricParams{0.0, 1.0, 3});
  CHECK(loss == doctest::Approx(0.1).epsilon(1e-5));
}

TEST_CASE("photometric loss matches the scalar reference") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image a = random_image(3, 16, 16, 100 + seed);
    const Image b = random_image(3, 16, 16, 200 + seed);
    CHECK(std::abs(photometric_loss(a, b, full_mask(16, 16)) - reference_photometric(a, b, 0.85, 0.15)) < 1e-6);
  }
}

TEST_CASE("photometric loss is symmetric") {
  const Image a = random_image(3, 10, 14, 5), b = random_image(3, 10, 14, 6);
  CHECK(std::abs(photometric_loss(a, b, full_mask(10, 14)) - photometric_loss(b, a, full_mask(10, 14))) < 1e-9);
}

TEST_CASE("photometric loss averages over valid pixels only") {
  const Image a = random_image(3, 8, 8, 7), b = random_image(3, 8, 8, 8);
  Mask m(8, 8, 0);
  CHECK_THROWS_AS(photometric_loss(a, b, m), DegenerateInputError);
  m(2, 3) = 1;
  const PhotometricParams l1{0.0, 1.0, 3};
  double expected = 0.0;
  for (int c = 0; c < 3; ++c) expected += std::abs(double(a(c, 2, 3)) - b(c, 2, 3)) / 3.0;
  CHECK(photometric_loss(a, b, m, l1) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("photometric parameters are validated") {
  const Image a(3, 8, 8);
  CHECK_THROWS_AS(photometric_loss(a, a, full_mask(8, 8), PhotometricParams{0.0, 0.0, 3}), ConfigError);
  CHECK_THROWS_AS(photometric_loss(a, a, full_mask(8, 8), PhotometricParams{0.85, 0.15, 4}), ConfigError);
  CHECK_THROWS_AS(photometric_loss(a, Image(3, 8, 9), full_mask(8, 8)), ConfigError);
}

TEST_CASE("photometric gradient matches finite differences") {
  const Image t = smooth_image(3, 10, 12, 0.3);
  Image r = smooth_image(3, 10, 12, 0.9);
  Mask m = full_mask(10, 12);
  m(0, 0) = 0;
  m(5, 7) = 0;
  const PhotometricLoss pl = photometric_loss_with_grad(t, r, m);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 10; y += 3)
      for (int x = 0; x < 12; x += 4) {
        Image p = r, q = r;
        p(c, y, x) += 1e-3f;
        q(c, y, x) -= 1e-3f;
        const double fd = (photometric_loss(t, p, m) - photometric_loss(t, q, m)) / 2e-3;
        CHECK(std::abs(pl.grad_reconstructed(c, y, x) - fd) < 1e-5 + 2e-2 * std::abs(fd));
      }
}

TEST_CASE("contrastive loss identities") {
  const DepthMap d(random_grid(8, 8, 1, 2.0, 80.0));
  const ContrastiveLoss same = contrastive_loss(d, d, 2, 1, true);
  CHECK(same.value == 0.0);

  DepthMap shifted = d;
  for (double& v : shifted.raw()) v += std::exp(1.0) - 1.0;
  CHECK(std::abs(contrastive_loss(shifted, d, 2, 1, true).value - 1.0) < 1e-9);
  CHECK(std::abs(contrastive_loss(d, shifted, 2, 1, true).value - 1.0) < 1e-9);
}

TEST_CASE("contrastive loss matches a scalar loop and is non-negative") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DepthMap a(random_grid(8, 8, seed, 2.0, 80.0)), b(random_grid(8, 8, seed + 50, 2.0, 80.0));
    double ref = 0.0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) ref += std::log(std::abs(a(y, x) - b(y, x)) + 1.0);
    ref /= 64.0;
    const double v = contrastive_loss(a, b, 3, 2, true).value;
    CHECK(rel_err(v, ref) < 1e-9);
    CHECK(v > 0.0);
  }
}

TEST_CASE("gradient cut-off follows the stage order") {
  const DepthMap a(random_grid(8, 8, 3, 2.0, 80.0)), b(random_grid(8, 8, 4, 2.0, 80.0));
  auto all_zero = [](const Grid<double>& g) {
    return std::all_of(g.raw().begin(), g.raw().end(), [](double v) { return v == 0.0; });
  };
  const ContrastiveLoss later_aug = contrastive_loss(a, b, 3, 2, true);
  CHECK(later_aug.detached == DetachBranch::kContrast);
  CHECK(all_zero(later_aug.grad_contrast));
  CHECK_FALSE(all_zero(later_aug.grad_augmented));

  const ContrastiveLoss later_cst = contrastive_loss(a, b, 1, 2, true);
  CHECK(later_cst.detached == DetachBranch::kAugmented);
  CHECK(all_zero(later_cst.grad_augmented));
  CHECK_FALSE(all_zero(later_cst.grad_contrast));

  const ContrastiveLoss equal = contrastive_loss(a, b, 1, 1, true);
  CHECK(equal.detached == DetachBranch::kContrast);
  CHECK(all_zero(equal.grad_contrast));

  const ContrastiveLoss open = contrastive_loss(a, b, 3, 2, false);
  CHECK(open.detached == DetachBranch::kNone);
  CHECK_FALSE(all_zero(open.grad_contrast));
  CHECK_FALSE(all_zero(open.grad_augmented));
}

TEST_CASE("contrastive gradient matches finite differences") {
  const DepthMap a(random_grid(6, 6, 8, 2.0, 80.0)), b(random_grid(6, 6, 9, 2.0, 80.0));
  const ContrastiveLoss cl = contrastive_loss(a, b, 2, 1, true);
  for (std::size_t i = 0; i < a.size(); ++i) {
    DepthMap p = a, q = a;
    p[i] += 1e-4;
    q[i] -= 1e-4;
    const double fd =
        (contrastive_loss(p, b, 2, 1, true).value - contrastive_loss(q, b, 2, 1, true).value) / 2e-4;
    CHECK(rel_err(cl.grad_augmented[i], fd) < 1e-2);
  }
}

TEST_CASE("contrastive loss rejects bad inputs") {
  const DepthMap a(4, 4, 3.0);
  CHECK_THROWS_AS(contrastive_loss(a, DepthMap(4, 5, 3.0), 2, 1, true), ConfigError);
  CHECK_THROWS_AS(contrastive_loss(a, a, 0, 1, true), ConfigError);
  CHECK_THROWS_AS(contrastive_loss(a, a, 2, 4, true), ConfigError);
}

TEST_CASE("total loss assembly") {
  CHECK(total_loss(1.0, 0.5, 0.02).backward == doctest::Approx(1.01).epsilon(1e-15));
  CHECK(total_loss(0.37, 123.0, 0.0).backward == 0.37);
  CHECK(total_loss(0.0, 0.0, 0.3).backward == 0.0);
  const LossBundle b = total_loss(0.25, 0.75, 0.04);
  CHECK(b.backward == b.model + b.weight * b.contrastive);
}

TEST_CASE("contrast weight schedule") {
  ContrastWeightParams p;  // 0.02, 10, 2, period 2
  ContrastWeightState s{0.0, 0};
  std::vector<double> seq;
  for (int r = 0; r < 10; ++r) {
    s.stage_epoch = r;
    s = update_contrast_weight(p, s);
    seq.push_back(s.current);
  }
  const std::vector<double> expected{0.02, 0.02, 0.04, 0.04, 0.08, 0.08, 0.16, 0.16, 0.2, 0.2};
  CHECK(seq == expected);
  for (std::size_t i = 1; i < seq.size(); ++i) CHECK(seq[i] >= seq[i - 1]);
  for (double w : seq) CHECK(w <= p.cap());

  s.stage_epoch = 0;
  CHECK(update_contrast_weight(p, s).current == 0.02);
}

TEST_CASE("literal max rule jumps straight to the cap") {
  ContrastWeightParams p;
  p.rule = WeightCapRule::kLiteralMax;
  ContrastWeightState s = update_contrast_weight(p, {0.0, 0});
  CHECK(s.current == 0.02);
  s.stage_epoch = 2;
  CHECK(update_contrast_weight(p, s).current == doctest::Approx(0.2));
}

TEST_CASE("edge-aware smoothness gradient matches finite differences") {
  const Image img = smooth_image(3, 8, 10);
  const Grid<double> d = random_grid(8, 10, 3, 1.0, 20.0);
  const SmoothnessLoss sm = edge_aware_smoothness(d, img);
  CHECK(sm.value > 0.0);
  for (std::size_t i = 0; i < d.size(); i += 7) {
    Grid<double> p = d, q = d;
    p[i] += 1e-5;
    q[i] -= 1e-5;
    const double fd = (edge_aware_smoothness(p, img).value - edge_aware_smoothness(q, img).value) / 2e-5;
    CHECK(std::abs(sm.grad_disparity[i] - fd) < 1e-6 + 1e-3 * std::abs(fd));
  }
  const SmoothnessLoss flat = edge_aware_smoothness(Grid<double>(8, 10, 4.0), img);
  CHECK(flat.value == 0.0);
}
