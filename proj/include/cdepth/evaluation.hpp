// SPDX-License-Identifier: Apache-2.0
//
// Standard depth error/accuracy metrics and per-variant evaluation tables.
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdepth/synthdata.hpp"

namespace cdepth {

struct MetricSet {
  double absrel = 0.0;
  double sqrel = 0.0;
  double rmse = 0.0;
  double rmselog = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;

  friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

struct MetricConfig {
  double depth_min = 1e-3;
  double depth_max = 80.0;
  bool median_scaling = false;
};

/// Both maps are clamped to [depth_min, depth_max] first. Throws DegenerateInputError
/// when the mask selects no pixel and ConfigError on shape mismatch.
MetricSet compute_metrics(const DepthMap& pred, const DepthMap& gt, const Mask& valid, const MetricConfig& config = {});

/// Element-wise mean of metric sets.
MetricSet average_metrics(const std::vector<MetricSet>& sets);

/// Maps the network input image of a sample to a predicted depth map.
using DepthPredictor = std::function<DepthMap(const Sample& sample, const Image& input)>;

struct EvalReport {
  std::vector<std::string> variants;                    // requested order
  std::map<std::string, std::optional<MetricSet>> rows;  // nullopt: variant absent from the dataset
  std::optional<MetricSet> average;                     // over present variants
};

/// Per-image metrics averaged over the samples of each variant. GT pixels with
/// depth <= 0 are ignored.
EvalReport evaluate(const Dataset& dataset, const std::vector<WeatherVariantId>& variants,
                    const DepthPredictor& predictor, const MetricConfig& config = {});

/// Predictor backed by a trained network.
DepthPredictor network_predictor(const std::filesystem::path& checkpoint, const CameraRig& rig);

std::string report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& file);

}  // namespace cdepth
