// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "cdepth/evaluation.hpp"
#include "cdepth/synthdata.hpp"
#include "cdepth/trainer.hpp"

namespace {

using namespace cdepth;

std::vector<WeatherVariantId> parse_variant_list(const std::vector<std::string>& names) {
  std::vector<WeatherVariantId> out;
  for (const auto& n : names) {
    if (n == "all") {
      for (const auto& v : all_variants()) out.push_back(v);
    } else {
      out.push_back(WeatherVariantId::parse(n));
    }
  }
  return out;
}

Weather parse_weather(const std::string& name) {
  for (Weather w : {Weather::kRain, Weather::kSnow, Weather::kFog})
    if (weather_name(w) == name) return w;
  throw ConfigError("unknown weather '" + name + "' (expected rain, snow or fog)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo-supervised depth training with weather curricula"};
  app.require_subcommand(1);

  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic stereo dataset");
  synth_cmd->add_option("--scenes", synth.scenes, "Number of scenes")->default_val(10);
  synth_cmd->add_option("--seed", synth.seed, "Base seed")->default_val(0);
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--width", synth.width, "Image width")->default_val(192);
  synth_cmd->add_option("--height", synth.height, "Image height")->default_val(64);

  std::string aug_dataset;
  std::vector<std::string> weathers{"rain", "snow", "fog"};
  std::vector<int> magnitudes{1, 2};
  std::uint64_t aug_seed = 0;
  AugmentConfig aug;
  auto* aug_cmd = app.add_subcommand("augment", "Add weather variants to a dataset in place");
  aug_cmd->add_option("dataset,--dataset", aug_dataset, "Dataset directory")->required();
  aug_cmd->add_option("--weathers", weathers, "Subset of rain, snow, fog")->delimiter(',');
  aug_cmd->add_option("--magnitudes", magnitudes, "Subset of 1, 2")->delimiter(',');
  aug_cmd->add_option("--seed", aug_seed, "Base seed")->default_val(0);
  aug_cmd->add_option("--visibility-m1", aug.fog_visibility_m1, "Fog visibility at magnitude 1 (m)")->default_val(150.0);
  aug_cmd->add_option("--visibility-m2", aug.fog_visibility_m2, "Fog visibility at magnitude 2 (m)")->default_val(75.0);

  std::string config_path, resume_path, train_out;
  auto* train_cmd = app.add_subcommand("train", "Train a depth network");
  train_cmd->add_option("--config", config_path, "JSON training configuration")->required();
  train_cmd->add_option("--resume", resume_path, "Checkpoint to continue from");
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  std::string ckpt_path, eval_dataset, eval_out;
  std::vector<std::string> eval_variants{"all"};
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint per weather variant");
  eval_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset directory with ground truth")->required();
  eval_cmd->add_option("--variants", eval_variants, "Variant names such as clear_0 rain_2, or all")->delimiter(',');
  eval_cmd->add_option("--out", eval_out, "Report path (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      const Dataset ds = synthesize_dataset(synth);
      write_dataset(ds, synth_out);
      std::cout << "wrote " << ds.samples.size() << " scenes to " << synth_out << "\n";
    } else if (*aug_cmd) {
      std::vector<WeatherVariantId> variants;
      for (const auto& w : weathers)
        for (int m : magnitudes) {
          WeatherVariantId v{parse_weather(w), m};
          v.validate();
          variants.push_back(v);
        }
      Dataset ds = load_dataset(aug_dataset);
      add_weather_variants(ds, variants, aug_seed, aug);
      write_dataset(ds, aug_dataset);
      std::cout << "added " << variants.size() << " variants to " << ds.samples.size() << " samples\n";
    } else if (*train_cmd) {
      const TrainConfig config = load_train_config(config_path);
      TrainHooks hooks;
      hooks.on_epoch = [](const EpochReport& e) {
        std::cout << "epoch " << e.epoch << " level " << e.level << " w " << e.weight << " L_model "
                  << e.mean_model_loss << " L_cst " << e.mean_contrast_loss << " (" << e.wall_seconds << " s)" << std::endl;
      };
      std::optional<std::filesystem::path> resume;
      if (!resume_path.empty()) resume = resume_path;
      const TrainResult r = run_training(config, train_out, resume, hooks);
      std::cout << "last checkpoint: " << r.last_checkpoint.string() << "\n";
    } else if (*eval_cmd) {
      const Dataset ds = load_dataset(eval_dataset);
      const EvalReport report = evaluate(ds, parse_variant_list(eval_variants), network_predictor(ckpt_path, ds.rig));
      write_report(report, eval_out);
      std::cout << report_to_json(report) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
