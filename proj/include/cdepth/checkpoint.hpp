// SPDX-License-Identifier: Apache-2.0
//
// Self-describing training snapshot stored as CBOR.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdepth/curriculum.hpp"
#include "cdepth/model.hpp"

namespace cdepth {

struct TrainProgress {
  int next_epoch = 0;  // first epoch not yet trained
  bool finished = false;
  std::uint64_t seed = 0;
  std::string mode;

  friend bool operator==(const TrainProgress&, const TrainProgress&) = default;
};

struct Checkpoint {
  ModelConfig model;
  std::vector<float> parameters;
  AdamState optimizer;
  CurriculumState curriculum;
  TrainProgress progress;
};

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& file);
/// Throws DataError for missing, truncated or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& file);

/// Throws ConfigError naming the first differing field.
void require_compatible(const ModelConfig& expected, const ModelConfig& found);

Checkpoint snapshot(const DepthNet& net, const Adam& optimizer, const CurriculumState& curriculum,
                    const TrainProgress& progress);
/// Loads parameters and optimizer state after checking the architecture.
void restore_weights(const Checkpoint& checkpoint, DepthNet& net, Adam& optimizer);

}  // namespace cdepth
