// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "cdepth/augmentation.hpp"
#include "cdepth/checkpoint.hpp"
#include "cdepth/evaluation.hpp"
#include "test_util.hpp"

using namespace cdepth;
using cdepth::testing::random_grid;
using cdepth::testing::rel_err;

namespace {

Mask all_valid(int h, int w) { return Mask(h, w, 1); }

// Straight from the textbook definitions, no clamping.
std::array<double, 7> oracle(const std::vector<double>& p, const std::vector<double>& g) {
  const double n = static_cast<double>(p.size());
  std::array<double, 7> out{};
  std::vector<double> absrel, sqrel, sq, sqlog;
  int t1 = 0, t2 = 0, t3 = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    absrel.push_back(std::abs(g[i] - p[i]) / g[i]);
    sqrel.push_back((g[i] - p[i]) * (g[i] - p[i]) / g[i]);
    sq.push_back((g[i] - p[i]) * (g[i] - p[i]));
    sqlog.push_back(std::pow(std::log(g[i] / p[i]), 2));
    const double ratio = p[i] > g[i] ? p[i] / g[i] : g[i] / p[i];
    t1 += ratio < 1.25;
    t2 += ratio < 1.5625;
    t3 += ratio < 1.953125;
  }
  out[0] = std::accumulate(absrel.begin(), absrel.end(), 0.0) / n;
  out[1] = std::accumulate(sqrel.begin(), sqrel.end(), 0.0) / n;
  out[2] = std::sqrt(std::accumulate(sq.begin(), sq.end(), 0.0) / n);
  out[3] = std::sqrt(std::accumulate(sqlog.begin(), sqlog.end(), 0.0) / n);
  out[4] = t1 / n;
  out[5] = t2 / n;
  out[6] = t3 / n;
  return out;
}

}  // namespace

TEST_CASE("perfect predictions") {
  const DepthMap gt(random_grid(8, 8, 3, 1.0, 70.0));
  const MetricSet m = compute_metrics(gt, gt, all_valid(8, 8));
  CHECK(m == MetricSet{0, 0, 0, 0, 1, 1, 1});
}

TEST_CASE("two-pixel example") {
  DepthMap pred(1, 2), gt(1, 2);
  pred[0] = 2.0, pred[1] = 4.0;
  gt[0] = 1.0, gt[1] = 4.0;
  const MetricSet m = compute_metrics(pred, gt, all_valid(1, 2));
  CHECK(m.absrel == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.sqrel == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.rmse == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(m.rmselog == doctest::Approx(std::log(2.0) / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(m.a1 == 0.5);
  CHECK(m.a2 == 0.5);
  CHECK(m.a3 == 0.5);
}

TEST_CASE("metrics match a scalar oracle on random pairs") {
  for (std::uint64_t k = 0; k < 100; ++k) {
    const DepthMap pred(random_grid(10, 10, 2 * k + 1, 0.5, 79.0));
    const DepthMap gt(random_grid(10, 10, 2 * k + 2, 0.5, 79.0));
    const MetricSet m = compute_metrics(pred, gt, all_valid(10, 10));
    const auto o = oracle(pred.raw(), gt.raw());
    const std::array<double, 7> got{m.absrel, m.sqrel, m.rmse, m.rmselog, m.a1, m.a2, m.a3};
    for (int i = 0; i < 7; ++i) CHECK(rel_err(got[i], o[i]) <= 1e-9);
  }
}

TEST_CASE("masked pixels and clamping") {
  DepthMap pred(1, 3), gt(1, 3);
  pred[0] = 10.0, pred[1] = 1e6, pred[2] = 0.0;
  gt[0] = 10.0, gt[1] = 100.0, gt[2] = 5.0;
  Mask valid(1, 3, 1);
  valid[2] = 0;
  // the far pixel clamps to 80 on both sides
  CHECK(compute_metrics(pred, gt, valid) == MetricSet{0, 0, 0, 0, 1, 1, 1});
  valid[2] = 1;
  const MetricSet m = compute_metrics(pred, gt, valid);
  CHECK(m.absrel == doctest::Approx((5.0 - 1e-3) / 5.0 / 3.0));

  // clamping is idempotent
  DepthMap clamped = pred;
  for (double& v : clamped.raw()) v = std::clamp(v, 1e-3, 80.0);
  CHECK(compute_metrics(clamped, gt, valid) == m);
}

TEST_CASE("metric invariances") {
  const DepthMap pred(random_grid(6, 6, 41, 1.0, 20.0));
  const DepthMap gt(random_grid(6, 6, 42, 1.0, 20.0));
  DepthMap pred2 = pred, gt2 = gt;
  for (double& v : pred2.raw()) v *= 2.0;
  for (double& v : gt2.raw()) v *= 2.0;
  const MetricSet a = compute_metrics(pred, gt, all_valid(6, 6));
  const MetricSet b = compute_metrics(pred2, gt2, all_valid(6, 6));
  CHECK(b.absrel == doctest::Approx(a.absrel));
  CHECK(b.rmselog == doctest::Approx(a.rmselog));
  CHECK(b.rmse == doctest::Approx(2.0 * a.rmse));
  CHECK(b.sqrel == doctest::Approx(2.0 * a.sqrel));
  CHECK(b.a1 == a.a1);

  MetricConfig med;
  med.median_scaling = true;
  DepthMap scaled = gt;
  for (double& v : scaled.raw()) v *= 3.0;
  const MetricSet s = compute_metrics(scaled, gt, all_valid(6, 6), med);
  CHECK(s.absrel == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.a1 == 1.0);
}

TEST_CASE("metric errors") {
  const DepthMap d(random_grid(4, 4, 1, 1.0, 5.0));
  CHECK_THROWS_AS(compute_metrics(d, d, Mask(4, 4, 0)), DegenerateInputError);
  CHECK_THROWS_AS(compute_metrics(d, DepthMap(4, 5), all_valid(4, 4)), ConfigError);
  CHECK_THROWS_AS(compute_metrics(d, d, all_valid(4, 4), {1.0, 0.5, false}), ConfigError);
  CHECK_THROWS_AS(average_metrics({}), DegenerateInputError);
}

TEST_CASE("evaluation tables") {
  Dataset ds = synthesize_dataset({5, 9, 64, 32, {}});
  add_weather_variants(ds, {{Weather::kRain, 1}, {Weather::kFog, 2}}, 3);
  const DepthPredictor gt_predictor = [](const Sample& s, const Image&) { return s.depth; };
  const std::vector<WeatherVariantId> variants{kClearVariant, {Weather::kRain, 1}, {Weather::kSnow, 1}, {Weather::kFog, 2}};
  const EvalReport r = evaluate(ds, variants, gt_predictor);

  CHECK(r.variants == std::vector<std::string>{"clear_0", "rain_1", "snow_1", "fog_2"});
  CHECK_FALSE(r.rows.at("snow_1").has_value());
  for (const char* v : {"clear_0", "rain_1", "fog_2"}) CHECK(*r.rows.at(v) == MetricSet{0, 0, 0, 0, 1, 1, 1});
  REQUIRE(r.average.has_value());
  CHECK(*r.average == MetricSet{0, 0, 0, 0, 1, 1, 1});

  // the predictor sees the weather image
  int calls = 0;
  const DepthPredictor spy = [&](const Sample& s, const Image& input) {
    CHECK(&input == &s.left_variant({Weather::kFog, 2}));
    ++calls;
    return s.depth;
  };
  evaluate(ds, {{Weather::kFog, 2}}, spy);
  CHECK(calls == 5);

  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["snow_1"].is_null());
  CHECK(j["clear_0"]["absrel"] == 0.0);
  CHECK(j["average"]["a3"] == 1.0);
  for (const char* k : {"absrel", "sqrel", "rmse", "rmselog", "a1", "a2", "a3"}) CHECK(j["rain_1"].contains(k));
}

TEST_CASE("network evaluation is deterministic") {
  const Dataset ds = synthesize_dataset({3, 5, 64, 32, {}});
  ModelConfig mc{64, 32, 4};
  const DepthNet net(mc);
  const std::filesystem::path file = std::filesystem::temp_directory_path() / "cdepth_eval_net.ckpt";
  save_checkpoint(snapshot(net, Adam({}, net.parameter_count()), {}, {}), file);
  const DepthPredictor p = network_predictor(file, ds.rig);
  const EvalReport a = evaluate(ds, {kClearVariant}, p), b = evaluate(ds, {kClearVariant}, p);
  CHECK(*a.rows.at("clear_0") == *b.rows.at("clear_0"));
  CHECK(a.rows.at("clear_0")->absrel > 0.0);
  CHECK_THROWS_AS(network_predictor(file, CameraRig::kitti_like(128, 32)), ConfigError);
  std::filesystem::remove(file);
}
