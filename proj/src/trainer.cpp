// SPDX-License-Identifier: Apache-2.0
#include "cdepth/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cdepth/augmentation.hpp"
#include "cdepth/geometry.hpp"
#include "cdepth/seeding.hpp"

namespace cdepth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum SeedStream : std::uint64_t { kOrder = 1, kPlan = 2, kTrainInput = 3, kContrastInput = 4, kMixedAssign = 5 };

Grid<double> add_grids(Grid<double> a, const Grid<double>& b, double scale) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  return a;
}

void scale_grid(Grid<double>& g, double s) {
  for (double& v : g.raw()) v *= s;
}

}  // namespace

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kCurriculumContrastive: return "curriculum_contrastive";
    case TrainMode::kCurriculumOnly: return "curriculum_only";
    case TrainMode::kMixed: return "mixed";
  }
  return "unknown";
}

TrainMode parse_mode(const std::string& name) {
  for (TrainMode m : {TrainMode::kCurriculumContrastive, TrainMode::kCurriculumOnly, TrainMode::kMixed})
    if (mode_name(m) == name) return m;
  throw ConfigError("unknown training mode '" + name + "' (expected curriculum_contrastive, curriculum_only or mixed)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(smoothness_weight >= 0.0)) throw ConfigError("smoothness_weight must be non-negative");
  scheduler.validate();
  weights.validate();
  photometric.validate();
}

TrainConfig load_train_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file.string() + ": config file not found");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw ConfigError(file.string() + ": expected a JSON object");

  static const std::set<std::string> kKeys = {
      "dataset",       "batch_size",    "epochs",       "learning_rate",  "patience",        "threshold",
      "w_cst",         "w_max",         "lambda",       "weight_period",  "weight_rule",     "detach",
      "smoothness_weight", "jitter_clear", "ssim_alpha", "l1_beta",       "seed",            "init_seed",
      "base_channels", "min_disparity", "max_disparity", "mode",          "reload_best_min_patience",
      "consistency_space"};
  for (const auto& [key, value] : j.items())
    if (!kKeys.count(key)) throw ConfigError(file.string() + ": unknown key '" + key + "'");

  TrainConfig c;
  try {
    c.dataset = j.at("dataset").get<std::string>();
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("patience")) {
      const auto p = j["patience"].get<std::vector<int>>();
      if (p.size() < 2 || p.size() > 3) throw ConfigError("'patience' must list P_1, P_2 and optionally P_3");
      c.scheduler.patience = {p[0], p[1], p.size() == 3 ? p[2] : 0};
    }
    c.scheduler.threshold = j.value("threshold", c.scheduler.threshold);
    c.scheduler.reload_best_min_patience = j.value("reload_best_min_patience", c.scheduler.reload_best_min_patience);
    c.weights.base = j.value("w_cst", c.weights.base);
    c.weights.max_multiplier = j.value("w_max", c.weights.max_multiplier);
    c.weights.growth = j.value("lambda", c.weights.growth);
    c.weights.period = j.value("weight_period", c.weights.period);
    const std::string rule = j.value("weight_rule", std::string("cap"));
    if (rule == "cap") {
      c.weights.rule = WeightCapRule::kCap;
    } else if (rule == "literal_max") {
      c.weights.rule = WeightCapRule::kLiteralMax;
    } else {
      throw ConfigError("'weight_rule' must be cap or literal_max");
    }
    c.detach_enabled = j.value("detach", c.detach_enabled);
    const std::string space = j.value("consistency_space", std::string("depth"));
    if (space == "depth") {
      c.consistency_space = ConsistencySpace::kDepth;
    } else if (space == "disparity") {
      c.consistency_space = ConsistencySpace::kDisparity;
    } else {
      throw ConfigError("'consistency_space' must be depth or disparity");
    }
    c.smoothness_weight = j.value("smoothness_weight", c.smoothness_weight);
    c.jitter_clear = j.value("jitter_clear", c.jitter_clear);
    c.photometric.alpha = j.value("ssim_alpha", c.photometric.alpha);
    c.photometric.beta = j.value("l1_beta", c.photometric.beta);
    c.seed = j.value("seed", c.seed);
    c.model.init_seed = j.value("init_seed", c.model.init_seed);
    c.model.base_channels = j.value("base_channels", c.model.base_channels);
    c.model.min_disparity = j.value("min_disparity", c.model.min_disparity);
    c.model.max_disparity = j.value("max_disparity", c.model.max_disparity);
    c.mode = parse_mode(j.value("mode", mode_name(c.mode)));
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

TrainStepResult train_step(const DepthNet& net, const Image& augmented, const Image& clear_left,
                           const Image& clear_right, const CameraRig& rig, const PhotometricParams& photometric,
                           double smoothness_weight) {
  if (clear_left.empty() || clear_right.empty()) throw DataError("train_step: missing clear stereo pair");
  TrainStepResult r;
  r.disparity = net.forward(augmented, r.cache);
  r.depth = disparity_to_depth(r.disparity, rig);

  const WarpResult w = semi_augmented_warp(clear_right, r.depth, rig, WarpDirection::kRightToLeft);
  PhotometricLoss ph = photometric_loss_with_grad(clear_left, w.warped, w.valid, photometric);
  const WarpGradients wg = warp_backward(clear_right, r.depth, rig, WarpDirection::kRightToLeft, ph.grad_reconstructed);
  r.grad_disparity = disparity_to_depth_backward(r.disparity, r.depth, wg.shift);
  r.photometric = ph.value;
  r.model_loss = ph.value;
  if (smoothness_weight > 0.0) {
    const SmoothnessLoss sm = edge_aware_smoothness(r.disparity, clear_left);
    r.smoothness = sm.value;
    r.model_loss += smoothness_weight * sm.value;
    r.grad_disparity = add_grids(std::move(r.grad_disparity), sm.grad_disparity, smoothness_weight);
  }
  return r;
}

DepthMap inference_step(const DepthNet& net, const Image& contrast_image, const CameraRig& rig) {
  return disparity_to_depth(net.forward(contrast_image), rig);
}

Trainer::Trainer(TrainConfig config, const Dataset& dataset, fs::path out_dir)
    : config_([&] {
        config.model.width = dataset.rig.width;
        config.model.height = dataset.rig.height;
        if (config.mode == TrainMode::kMixed) config.scheduler.enabled = false;
        config.validate();
        return config;
      }()),
      dataset_(dataset),
      out_dir_(std::move(out_dir)),
      net_(config_.model),
      optimizer_(AdamParams{config_.learning_rate}, net_.parameter_count()),
      scheduler_(config_.scheduler, config_.weights) {
  if (dataset_.samples.empty()) throw DataError("training dataset has no samples");
}

void Trainer::resume(const fs::path& file) {
  Checkpoint c = load_checkpoint(file);
  if (c.progress.mode != mode_name(config_.mode)) {
    throw ConfigError(file.string() + ": checkpoint was written in mode '" + c.progress.mode + "', config says '" +
                      mode_name(config_.mode) + "'");
  }
  if (c.progress.seed != config_.seed) throw ConfigError(file.string() + ": checkpoint seed differs from config seed");
  restore_weights(c, net_, optimizer_);
  scheduler_.restore(c.curriculum);
  next_epoch_ = c.progress.next_epoch;
  finished_ = c.progress.finished;
}

Image Trainer::training_input(const Sample& s, WeatherVariantId v, std::uint64_t seed) const {
  if (v == kClearVariant) return config_.jitter_clear ? jitter(s.left, seed) : s.left;
  return s.left_variant(v);
}

void Trainer::require_stage_variants() const {
  if (config_.mode == TrainMode::kMixed) {
    dataset_.require_variants(all_variants());
    return;
  }
  const StageSpec spec = scheduler_.current_stage();
  dataset_.require_variants(spec.train_variants);
  if (config_.mode == TrainMode::kCurriculumContrastive) dataset_.require_variants(spec.contrast_variants);
}

void Trainer::write_checkpoint(const fs::path& file, bool finished) const {
  save_checkpoint(snapshot(net_, optimizer_, scheduler_.state(),
                           TrainProgress{next_epoch_, finished, config_.seed, mode_name(config_.mode)}),
                  file);
}

BatchReport Trainer::run_batch(int epoch, int batch, const std::vector<std::size_t>& indices,
                               const std::vector<WeatherVariantId>& mixed_variants) {
  const std::uint64_t seed = config_.seed;
  const int level = scheduler_.state().level;
  const bool contrast_path = config_.mode == TrainMode::kCurriculumContrastive;

  BatchReport report;
  report.epoch = epoch;
  report.batch = batch;
  report.level = config_.mode == TrainMode::kMixed ? 0 : level;
  report.weight = contrast_path ? scheduler_.state().weight.current : 0.0;
  if (config_.mode != TrainMode::kMixed) {
    report.plan = sample_contrast_plan(level, derive_seed(seed, {kPlan, std::uint64_t(epoch), std::uint64_t(batch)}),
                                       config_.detach_enabled);
  }

  net_.zero_grad();
  const double scale = 1.0 / static_cast<double>(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Sample& s = dataset_.samples[indices[k]];
    const std::uint64_t item = indices[k];
    const WeatherVariantId train_variant =
        config_.mode == TrainMode::kMixed ? mixed_variants[k] : report.plan.train_variant;
    report.train_variants.push_back(train_variant);

    const Image input =
        training_input(s, train_variant, derive_seed(seed, {kTrainInput, std::uint64_t(epoch), item}));
    TrainStepResult step =
        train_step(net_, input, s.left, s.right, dataset_.rig, config_.photometric, config_.smoothness_weight);
    report.model_loss += scale * step.model_loss;
    Grid<double> grad = std::move(step.grad_disparity);

    if (contrast_path) {
      const Image contrast_input = training_input(s, report.plan.contrast_variant,
                                                  derive_seed(seed, {kContrastInput, std::uint64_t(epoch), item}));
      const bool track_contrast = report.plan.detached != DetachBranch::kContrast;
      ForwardCachePtr contrast_cache;
      DisparityMap contrast_disp =
          track_contrast ? net_.forward(contrast_input, contrast_cache) : net_.forward(contrast_input);
      const bool in_depth = config_.consistency_space == ConsistencySpace::kDepth;
      const DepthMap contrast_value =
          in_depth ? disparity_to_depth(contrast_disp, dataset_.rig) : DepthMap(contrast_disp);
      const DepthMap train_value = in_depth ? step.depth : DepthMap(step.disparity);
      ContrastiveLoss cst = contrastive_loss(train_value, contrast_value, report.plan.stage_train,
                                             report.plan.stage_contrast, config_.detach_enabled);
      report.contrast_loss += scale * cst.value;
      const double w = report.weight;
      if (w != 0.0 && cst.detached != DetachBranch::kAugmented) {
        grad = add_grids(std::move(grad),
                         in_depth ? disparity_to_depth_backward(step.disparity, step.depth, cst.grad_augmented)
                                  : cst.grad_augmented,
                         w);
      }
      if (w != 0.0 && track_contrast && cst.detached == DetachBranch::kNone) {
        Grid<double> g = in_depth ? disparity_to_depth_backward(contrast_disp, contrast_value, cst.grad_contrast)
                                  : std::move(cst.grad_contrast);
        scale_grid(g, w * scale);
        net_.backward(*contrast_cache, g);
      }
    }
    scale_grid(grad, scale);
    net_.backward(*step.cache, grad);
  }
  report.backward_loss = total_loss(report.model_loss, report.contrast_loss, report.weight).backward;
  optimizer_.step(net_.parameters(), net_.gradients());
  return report;
}

TrainResult Trainer::run(const TrainHooks& hooks, std::optional<int> max_epochs) {
  fs::create_directories(out_dir_);
  const fs::path log_path = out_dir_ / "train_log.jsonl";
  std::ofstream log(log_path, next_epoch_ == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError(log_path.string() + ": cannot open for writing");

  TrainResult result;
  const fs::path last = out_dir_ / "last.ckpt";
  if (next_epoch_ > 0) result.last_checkpoint = last;
  const std::size_t n = dataset_.samples.size();
  const std::size_t batch_size = static_cast<std::size_t>(config_.batch_size);
  const int stop = max_epochs ? std::min(config_.epochs, next_epoch_ + *max_epochs) : config_.epochs;

  if (!finished_ && next_epoch_ < stop) require_stage_variants();
  while (!finished_ && next_epoch_ < stop) {
    const int epoch = next_epoch_;
    const auto start = std::chrono::steady_clock::now();
    const int level = scheduler_.state().level;
    const int stage_epoch = scheduler_.state().stage_epoch();
    const double w_curr = scheduler_.begin_epoch();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(config_.seed, {kOrder, std::uint64_t(epoch)}));
    std::shuffle(order.begin(), order.end(), order_rng);

    // balanced assignment: every variant appears floor(n/7) or ceil(n/7) times
    std::vector<WeatherVariantId> assigned;
    if (config_.mode == TrainMode::kMixed) {
      const auto variants = all_variants();
      for (std::size_t i = 0; i < n; ++i) assigned.push_back(variants[i % variants.size()]);
      Rng assign_rng(derive_seed(config_.seed, {kMixedAssign, std::uint64_t(epoch)}));
      std::shuffle(assigned.begin(), assigned.end(), assign_rng);
    }

    double contrast_sum = 0.0;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += batch_size) {
      const std::size_t b1 = std::min(n, b0 + batch_size);
      const std::vector<std::size_t> indices(order.begin() + std::ptrdiff_t(b0), order.begin() + std::ptrdiff_t(b1));
      std::vector<WeatherVariantId> mixed;
      if (!assigned.empty()) mixed.assign(assigned.begin() + std::ptrdiff_t(b0), assigned.begin() + std::ptrdiff_t(b1));
      BatchReport report;
      try {
        report = run_batch(epoch, batches, indices, mixed);
        scheduler_.record_batch_loss(report.model_loss);
      } catch (const std::exception& e) {
        if (!dynamic_cast<const NumericError*>(&e) && !dynamic_cast<const DegenerateInputError*>(&e)) throw;
        // a non-finite prediction surfaces as a degenerate disparity
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", batch " << batches << ": " << e.what()
            << "; last checkpoint: "
            << (result.last_checkpoint.empty() ? std::string("none") : result.last_checkpoint.string());
        throw NumericError(msg.str());
      }
      contrast_sum += report.contrast_loss;
      ++batches;
      if (hooks.on_batch) hooks.on_batch(report);
    }

    const EpochOutcome outcome = scheduler_.end_of_epoch();
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    next_epoch_ = epoch + 1;
    finished_ = outcome.decision == EpochDecision::kFinished;

    EpochReport er;
    er.epoch = epoch;
    er.level = config_.mode == TrainMode::kMixed ? 0 : level;
    er.stage_epoch = stage_epoch;
    er.patience_counter = outcome.decision == EpochDecision::kStay ? scheduler_.state().patience_counter
                                                                   : config_.scheduler.patience[level - 1];
    er.weight = config_.mode == TrainMode::kCurriculumContrastive ? w_curr : 0.0;
    er.mean_model_loss = outcome.mean_loss;
    er.mean_contrast_loss = contrast_sum / batches;
    er.wall_seconds = wall;
    er.decision = outcome.decision;

    if (outcome.new_best) write_checkpoint(out_dir_ / ("best_level" + std::to_string(level) + ".ckpt"), finished_);
    if (outcome.reload_best) {
      const Checkpoint best = load_checkpoint(out_dir_ / ("best_level" + std::to_string(outcome.finished_level) + ".ckpt"));
      restore_weights(best, net_, optimizer_);
    }
    write_checkpoint(last, finished_);
    result.last_checkpoint = last;

    log << json{{"epoch", er.epoch},
                {"level", er.level},
                {"r", er.stage_epoch},
                {"p", er.patience_counter},
                {"w_curr", er.weight},
                {"mean_L_model", er.mean_model_loss},
                {"mean_L_cst", er.mean_contrast_loss},
                {"wall_s", er.wall_seconds}}
               .dump()
        << "\n";
    log.flush();

    result.epochs.push_back(er);
    result.recordkey.push_back(outcome.mean_loss);
    if (hooks.on_epoch) hooks.on_epoch(er);
    if (outcome.decision == EpochDecision::kAdvance && next_epoch_ < stop) require_stage_variants();
  }
  result.final_state = scheduler_.state();
  result.finished = finished_;
  return result;
}

TrainResult run_training(const TrainConfig& config, const fs::path& out_dir, const std::optional<fs::path>& resume_from,
                         const TrainHooks& hooks) {
  const Dataset dataset = load_dataset(config.dataset);
  Trainer trainer(config, dataset, out_dir);
  if (resume_from) trainer.resume(*resume_from);
  return trainer.run(hooks);
}

}  // namespace cdepth
