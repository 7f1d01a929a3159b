// SPDX-License-Identifier: Apache-2.0
#include "cdepth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "cdepth/checkpoint.hpp"
#include "cdepth/geometry.hpp"
#include "cdepth/model.hpp"

namespace cdepth {

namespace fs = std::filesystem;
using nlohmann::json;

MetricSet compute_metrics(const DepthMap& pred_in, const DepthMap& gt_in, const Mask& valid,
                          const MetricConfig& config) {
  if (!pred_in.same_shape(gt_in) || !valid.same_shape(gt_in)) throw ConfigError("compute_metrics: shape mismatch");
  if (!(config.depth_min > 0.0) || !(config.depth_max > config.depth_min)) {
    throw ConfigError("compute_metrics: need 0 < depth_min < depth_max");
  }
  std::vector<double> pred, gt;
  for (std::size_t i = 0; i < gt_in.size(); ++i) {
    if (!valid[i]) continue;
    pred.push_back(std::clamp(pred_in[i], config.depth_min, config.depth_max));
    gt.push_back(std::clamp(gt_in[i], config.depth_min, config.depth_max));
  }
  if (gt.empty()) throw DegenerateInputError("compute_metrics: valid mask is empty");

  if (config.median_scaling) {
    auto median = [](std::vector<double> v) {
      const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
      std::nth_element(v.begin(), mid, v.end());
      return *mid;
    };
    const double ratio = median(gt) / median(pred);
    for (double& p : pred) p = std::clamp(p * ratio, config.depth_min, config.depth_max);
  }

  MetricSet m;
  double sq = 0.0, sqlog = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double p = pred[i], g = gt[i], diff = p - g;
    m.absrel += std::abs(diff) / g;
    m.sqrel += diff * diff / g;
    sq += diff * diff;
    const double dlog = std::log(p) - std::log(g);
    sqlog += dlog * dlog;
    const double delta = std::max(p / g, g / p);
    m.a1 += delta < 1.25;
    m.a2 += delta < 1.25 * 1.25;
    m.a3 += delta < 1.25 * 1.25 * 1.25;
  }
  const double n = static_cast<double>(gt.size());
  m.absrel /= n;
  m.sqrel /= n;
  m.rmse = std::sqrt(sq / n);
  m.rmselog = std::sqrt(sqlog / n);
  m.a1 /= n;
  m.a2 /= n;
  m.a3 /= n;
  return m;
}

MetricSet average_metrics(const std::vector<MetricSet>& sets) {
  if (sets.empty()) throw DegenerateInputError("average_metrics: no metric sets");
  MetricSet m;
  for (const MetricSet& s : sets) {
    m.absrel += s.absrel;
    m.sqrel += s.sqrel;
    m.rmse += s.rmse;
    m.rmselog += s.rmselog;
    m.a1 += s.a1;
    m.a2 += s.a2;
    m.a3 += s.a3;
  }
  const double n = static_cast<double>(sets.size());
  m.absrel /= n;
  m.sqrel /= n;
  m.rmse /= n;
  m.rmselog /= n;
  m.a1 /= n;
  m.a2 /= n;
  m.a3 /= n;
  return m;
}

EvalReport evaluate(const Dataset& dataset, const std::vector<WeatherVariantId>& variants,
                    const DepthPredictor& predictor, const MetricConfig& config) {
  if (dataset.samples.empty()) throw DataError("evaluate: dataset has no samples");
  EvalReport report;
  std::vector<MetricSet> present;
  for (const WeatherVariantId& v : variants) {
    v.validate();
    report.variants.push_back(v.name());
    const bool available = std::all_of(dataset.samples.begin(), dataset.samples.end(),
                                       [&](const Sample& s) { return s.has_variant(v); });
    if (!available) {
      report.rows[v.name()] = std::nullopt;
      continue;
    }
    std::vector<MetricSet> per_image;
    for (const Sample& s : dataset.samples) {
      Mask valid(s.depth.height(), s.depth.width());
      for (std::size_t i = 0; i < valid.size(); ++i) valid[i] = s.depth[i] > 0.0;
      per_image.push_back(compute_metrics(predictor(s, s.left_variant(v)), s.depth, valid, config));
    }
    report.rows[v.name()] = average_metrics(per_image);
    present.push_back(*report.rows[v.name()]);
  }
  if (!present.empty()) report.average = average_metrics(present);
  return report;
}

DepthPredictor network_predictor(const fs::path& checkpoint, const CameraRig& rig) {
  const Checkpoint c = load_checkpoint(checkpoint);
  if (c.model.width != rig.width || c.model.height != rig.height) {
    throw ConfigError(checkpoint.string() + ": network resolution " + std::to_string(c.model.width) + "x" +
                      std::to_string(c.model.height) + " does not match dataset " + std::to_string(rig.width) + "x" +
                      std::to_string(rig.height));
  }
  auto net = std::make_shared<DepthNet>(c.model);
  net->load_parameters(c.parameters);
  return [net, rig](const Sample&, const Image& input) { return disparity_to_depth(net->forward(input), rig); };
}

namespace {

json metrics_json(const std::optional<MetricSet>& m) {
  if (!m) return nullptr;
  return {{"absrel", m->absrel}, {"sqrel", m->sqrel}, {"rmse", m->rmse}, {"rmselog", m->rmselog},
          {"a1", m->a1},         {"a2", m->a2},       {"a3", m->a3}};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json j = json::object();
  for (const std::string& v : report.variants) j[v] = metrics_json(report.rows.at(v));
  j["average"] = metrics_json(report.average);
  return j.dump(2);
}

void write_report(const EvalReport& report, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw DataError(file.string() + ": cannot open for writing");
  out << report_to_json(report) << "\n";
}

}  // namespace cdepth
