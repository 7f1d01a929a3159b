// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <regex>
#include <set>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cdepth/synthdata.hpp"

namespace cdepth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string image_name(const std::string& frame, char view, WeatherVariantId v) {
  return frame + "_" + view + "_" + v.name() + ".png";
}

std::string depth_name(const std::string& frame) { return frame + "_depth.png"; }

}  // namespace

void write_image_png(const Image& image, const fs::path& file) {
  if (image.channels() != 3) throw ConfigError("write_image_png: expected a 3-channel image");
  cv::Mat m(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) {
      auto& px = m.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        // OpenCV stores BGR
        px[2 - c] = static_cast<std::uint8_t>(std::lround(std::clamp(image(c, y, x), 0.0f, 1.0f) * 255.0f));
      }
    }
  if (!cv::imwrite(file.string(), m)) throw DataError(file.string() + ": failed to write PNG");
}

Image read_image_png(const fs::path& file) {
  if (!fs::exists(file)) throw DataError(file.string() + ": file not found");
  const cv::Mat m = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DataError(file.string() + ": not a readable image");
  if (m.type() != CV_8UC3) throw DataError(file.string() + ": expected 8-bit RGB PNG");
  Image image(3, m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const auto& px = m.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) image(c, y, x) = static_cast<float>(px[2 - c]) / 255.0f;
    }
  return image;
}

void write_depth_png(const DepthMap& depth, const fs::path& file) {
  cv::Mat m(depth.height(), depth.width(), CV_16UC1);
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) {
      const long raw = std::lround(depth(y, x) * kDepthPngScale);
      if (raw < 0 || raw > 65535) throw DataError(file.string() + ": depth out of 16-bit storage range");
      m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(raw);
    }
  if (!cv::imwrite(file.string(), m)) throw DataError(file.string() + ": failed to write PNG");
}

DepthMap read_depth_png(const fs::path& file) {
  if (!fs::exists(file)) throw DataError(file.string() + ": file not found");
  const cv::Mat m = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DataError(file.string() + ": not a readable image");
  if (m.type() != CV_16UC1) throw DataError(file.string() + ": expected 16-bit single-channel depth PNG");
  DepthMap depth(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) depth(y, x) = m.at<std::uint16_t>(y, x) / kDepthPngScale;
  return depth;
}

void write_rig(const CameraRig& rig, const fs::path& file) {
  const json j = {{"fx", rig.fx}, {"fy", rig.fy}, {"cx", rig.cx},       {"cy", rig.cy},
                  {"b", rig.baseline}, {"W", rig.width}, {"H", rig.height}, {"depth_scale", kDepthPngScale}};
  std::ofstream out(file);
  if (!out) throw DataError(file.string() + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

CameraRig read_rig(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": file not found");
  json j;
  try {
    in >> j;
    CameraRig rig = CameraRig::rectified(j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                                         j.at("cy").get<double>(), j.at("b").get<double>(), j.at("W").get<int>(),
                                         j.at("H").get<int>());
    return rig;
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": malformed rig metadata (" + e.what() + ")");
  } catch (const ConfigError& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

void write_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root);
  write_rig(dataset.rig, root / "rig.json");
  for (const Sample& s : dataset.samples) {
    const fs::path dir = root / s.scene;
    fs::create_directories(dir);
    write_image_png(s.left, dir / image_name(s.frame, 'L', kClearVariant));
    write_image_png(s.right, dir / image_name(s.frame, 'R', kClearVariant));
    write_depth_png(s.depth, dir / depth_name(s.frame));
    for (const auto& [variant, image] : s.left_variants) write_image_png(image, dir / image_name(s.frame, 'L', variant));
  }
}

Dataset load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError(root.string() + ": dataset directory not found");
  Dataset ds;
  ds.rig = read_rig(root / "rig.json");

  std::vector<fs::path> scene_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) scene_dirs.push_back(entry.path());
  std::sort(scene_dirs.begin(), scene_dirs.end());

  static const std::regex kVariantFile(R"(^(.+)_L_([a-z]+_[0-9])\.png$)");
  static const std::regex kDepthFile(R"(^(.+)_depth\.png$)");
  std::set<WeatherVariantId> seen;
  for (const fs::path& dir : scene_dirs) {
    std::vector<std::string> frames;
    std::map<std::string, std::set<WeatherVariantId>> frame_variants;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      std::smatch m;
      if (std::regex_match(name, m, kDepthFile)) {
        frames.push_back(m[1]);
      } else if (std::regex_match(name, m, kVariantFile)) {
        WeatherVariantId v;
        try {
          v = WeatherVariantId::parse(m[2]);
        } catch (const ConfigError& e) {
          throw DataError((dir / name).string() + ": " + e.what());
        }
        if (v != kClearVariant) frame_variants[m[1]].insert(v);
      }
    }
    std::sort(frames.begin(), frames.end());
    for (const std::string& frame : frames) {
      Sample s;
      s.scene = dir.filename().string();
      s.frame = frame;
      auto load_image = [&](const fs::path& p) {
        Image img = read_image_png(p);
        if (img.width() != ds.rig.width || img.height() != ds.rig.height) {
          throw DataError(p.string() + ": dimensions do not match rig.json");
        }
        return img;
      };
      s.left = load_image(dir / image_name(frame, 'L', kClearVariant));
      s.right = load_image(dir / image_name(frame, 'R', kClearVariant));
      s.depth = read_depth_png(dir / depth_name(frame));
      if (!s.depth.same_shape(ds.rig.height, ds.rig.width)) {
        throw DataError((dir / depth_name(frame)).string() + ": dimensions do not match rig.json");
      }
      for (const auto& v : frame_variants[frame]) {
        s.left_variants[v] = load_image(dir / image_name(frame, 'L', v));
        seen.insert(v);
      }
      ds.samples.push_back(std::move(s));
    }
  }
  // a variant rendered for part of the dataset means files went missing
  for (const Sample& s : ds.samples)
    for (const auto& v : seen)
      if (!s.has_variant(v)) {
        throw DataError("missing variant file " + (root / s.scene / image_name(s.frame, 'L', v)).string() +
                        " (scene " + s.scene + ", frame " + s.frame + ", variant " + v.name() + ")");
      }
  return ds;
}

}  // namespace cdepth
