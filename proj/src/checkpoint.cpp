// SPDX-License-Identifier: Apache-2.0
#include "cdepth/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

namespace cdepth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "cdepth-checkpoint";
constexpr int kVersion = 1;

template <typename T>
json to_binary(const std::vector<T>& values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(T));
  if (!bytes.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  return json::binary(std::move(bytes));
}

template <typename T>
std::vector<T> from_binary(const json& j, const char* field) {
  if (!j.is_binary()) throw DataError(std::string("field '") + field + "' is not a binary blob");
  const auto& bytes = j.get_binary();
  if (bytes.size() % sizeof(T) != 0) throw DataError(std::string("field '") + field + "' has a truncated payload");
  std::vector<T> values(bytes.size() / sizeof(T));
  if (!values.empty()) std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

json model_to_json(const ModelConfig& m) {
  return {{"width", m.width},
          {"height", m.height},
          {"base_channels", m.base_channels},
          {"min_disparity", m.min_disparity},
          {"max_disparity", m.max_disparity},
          {"init_seed", m.init_seed}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  m.base_channels = j.at("base_channels").get<int>();
  m.min_disparity = j.at("min_disparity").get<double>();
  m.max_disparity = j.at("max_disparity").get<double>();
  m.init_seed = j.at("init_seed").get<std::uint64_t>();
  return m;
}

json curriculum_to_json(const CurriculumState& s) {
  json j = {{"level", s.level},
            {"patience_counter", s.patience_counter},
            {"epoch", s.epoch},
            {"batch_losses", to_binary(s.batch_losses)},
            {"epoch_means", to_binary(s.epoch_means)},
            {"weight_current", s.weight.current},
            {"stage_epoch", s.weight.stage_epoch}};
  if (s.best) j["best"] = {{"epoch", s.best->epoch}, {"mean_loss", s.best->mean_loss}};
  return j;
}

CurriculumState curriculum_from_json(const json& j) {
  CurriculumState s;
  s.level = j.at("level").get<int>();
  s.patience_counter = j.at("patience_counter").get<int>();
  s.epoch = j.at("epoch").get<int>();
  s.batch_losses = from_binary<double>(j.at("batch_losses"), "curriculum.batch_losses");
  s.epoch_means = from_binary<double>(j.at("epoch_means"), "curriculum.epoch_means");
  s.weight.current = j.at("weight_current").get<double>();
  s.weight.stage_epoch = j.at("stage_epoch").get<int>();
  if (j.contains("best")) s.best = BestEpoch{j["best"].at("epoch").get<int>(), j["best"].at("mean_loss").get<double>()};
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const fs::path& file) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["model"] = model_to_json(c.model);
  j["parameters"] = to_binary(c.parameters);
  j["optimizer"] = {{"step", c.optimizer.step},
                    {"first_moment", to_binary(c.optimizer.first_moment)},
                    {"second_moment", to_binary(c.optimizer.second_moment)}};
  j["curriculum"] = curriculum_to_json(c.curriculum);
  j["progress"] = {{"next_epoch", c.progress.next_epoch},
                   {"finished", c.progress.finished},
                   {"seed", c.progress.seed},
                   {"mode", c.progress.mode}};
  const std::vector<std::uint8_t> bytes = json::to_cbor(j);

  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, file);
}

Checkpoint load_checkpoint(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError(file.string() + ": checkpoint not found");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    const json j = json::from_cbor(bytes);
    if (!j.is_object() || j.value("format", "") != kFormat) throw DataError("not a checkpoint file");
    if (j.at("version").get<int>() != kVersion) {
      throw DataError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    }
    Checkpoint c;
    c.model = model_from_json(j.at("model"));
    c.parameters = from_binary<float>(j.at("parameters"), "parameters");
    const json& opt = j.at("optimizer");
    c.optimizer.step = opt.at("step").get<std::int64_t>();
    c.optimizer.first_moment = from_binary<float>(opt.at("first_moment"), "optimizer.first_moment");
    c.optimizer.second_moment = from_binary<float>(opt.at("second_moment"), "optimizer.second_moment");
    c.curriculum = curriculum_from_json(j.at("curriculum"));
    const json& p = j.at("progress");
    c.progress.next_epoch = p.at("next_epoch").get<int>();
    c.progress.finished = p.at("finished").get<bool>();
    c.progress.seed = p.at("seed").get<std::uint64_t>();
    c.progress.mode = p.at("mode").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": corrupt checkpoint (" + e.what() + ")");
  } catch (const DataError& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

void require_compatible(const ModelConfig& expected, const ModelConfig& found) {
  auto fail = [](const char* field, auto want, auto got) {
    std::ostringstream s;
    s << "checkpoint architecture mismatch in '" << field << "': network has " << want << ", checkpoint has " << got;
    throw ConfigError(s.str());
  };
  if (expected.width != found.width) fail("width", expected.width, found.width);
  if (expected.height != found.height) fail("height", expected.height, found.height);
  if (expected.base_channels != found.base_channels) fail("base_channels", expected.base_channels, found.base_channels);
  if (expected.min_disparity != found.min_disparity) fail("min_disparity", expected.min_disparity, found.min_disparity);
  if (expected.resolved_max_disparity() != found.resolved_max_disparity()) {
    fail("max_disparity", expected.resolved_max_disparity(), found.resolved_max_disparity());
  }
}

Checkpoint snapshot(const DepthNet& net, const Adam& optimizer, const CurriculumState& curriculum,
                    const TrainProgress& progress) {
  Checkpoint c;
  c.model = net.config();
  c.parameters.assign(net.parameters().begin(), net.parameters().end());
  c.optimizer = optimizer.state();
  c.curriculum = curriculum;
  c.progress = progress;
  return c;
}

void restore_weights(const Checkpoint& checkpoint, DepthNet& net, Adam& optimizer) {
  require_compatible(net.config(), checkpoint.model);
  net.load_parameters(checkpoint.parameters);
  optimizer.restore(checkpoint.optimizer);
}

}  // namespace cdepth
