/* Copyright 2026 The vidseg Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line entry point.
//
//   vidseg generate --out data/
//   vidseg augment  --dataset data/
//   vidseg train    --dataset data/ --out run/
//   vidseg eval     --checkpoint run/model.ckpt --dataset data/ --split test --out run/
//   vidseg ablate   --dataset data/ --out ablation/
//   vidseg report   --dir run/
//
// Exit codes: 0 success, 1 usage, 2 validation, 3 IO, 4 numeric abort.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vidseg/config.hpp"
#include "vidseg/errors.hpp"
#include "vidseg/harness.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kIo = 3, kNumeric = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Promptable video segmentation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  app.add_option("--config", config_path, "JSON or key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--out", out, "Output directory");

  std::string dataset;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  auto* augment = app.add_subcommand("augment", "Add instrument-occluded copies of eligible train cases");
  augment->add_option("--dataset", dataset, "Dataset directory")->required();
  auto* train = app.add_subcommand("train", "Train and keep the best-on-validation checkpoint");
  train->add_option("--dataset", dataset, "Dataset directory")->required();
  bool loss_curve = false;
  train->add_flag("--loss-curve", loss_curve, "Also write loss_curve.png");

  std::string checkpoint;
  std::string split = "test";
  bool macro = false;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--dataset", dataset, "Dataset directory")->required();
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_flag("--macro", macro, "Average per-frame scores instead of pooled counts");
  bool prompted_only = false;
  eval->add_flag("--prompted-only", prompted_only, "Score only frames that receive box prompts");

  auto* ablate = app.add_subcommand("ablate", "Fusion x augmentation grid");
  ablate->add_option("--dataset", dataset, "Dataset directory")->required();

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Summarize outputs in a directory");
  report->add_option("--dir", report_dir, "Directory with metrics/ablation outputs (default: --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    vidseg::ExperimentConfig config;
    if (!config_path.empty()) config = vidseg::load_experiment_config(config_path);
    if (seed) config.seed = *seed;
    config.validate();
    const std::string out_dir = out.empty() ? "." : out;

    if (*generate) {
      const vidseg::Dataset ds = vidseg::cmd_generate(config, out_dir);
      std::cout << "wrote " << ds.cases.size() << " cases to " << out_dir << " (train "
                << ds.split(vidseg::Split::Train).size() << ", val " << ds.split(vidseg::Split::Val).size()
                << ", test " << ds.split(vidseg::Split::Test).size() << ")\n";
    } else if (*augment) {
      const std::size_t n = vidseg::cmd_augment(config, dataset, out);
      std::cout << "added " << n << " augmented cases\n";
    } else if (*train) {
      const vidseg::TrainResult r = vidseg::cmd_train(config, dataset, out_dir, &std::cout, loss_curve);
      std::cout << "best epoch " << r.best_epoch << ", val mean Dice " << r.best_val_dice << "\n";
    } else if (*eval) {
      std::optional<vidseg::ModelConfig> model_config;
      if (!config_path.empty()) model_config = config.model;
      const vidseg::MetricsReport r =
          vidseg::cmd_eval(checkpoint, dataset, vidseg::split_from_string(split), out_dir, model_config,
                           macro ? vidseg::Averaging::Macro : vidseg::Averaging::Micro, prompted_only);
      std::cout << vidseg::report_table(r) << r.frames << " frames, " << r.frames_per_second << " frames/s\n";
    } else if (*ablate) {
      const auto grid = vidseg::cmd_ablate(config, dataset, out_dir, &std::cerr);
      std::cout << vidseg::ablation_table(grid);
    } else if (*report) {
      std::cout << vidseg::cmd_report(report_dir.empty() ? out_dir : report_dir);
    }
  } catch (const vidseg::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const vidseg::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const vidseg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
