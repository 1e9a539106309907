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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vidseg/config.hpp"
#include "vidseg/data.hpp"
#include "vidseg/losses.hpp"
#include "vidseg/metrics.hpp"
#include "vidseg/model.hpp"

namespace vidseg {

// ---------------------------------------------------------------------------
// Training

struct StepRecord {
  int step = 0;   // 1-based
  int epoch = 0;  // 1-based
  LossBreakdown loss;
};

struct TrainOptions {
  std::ostream* progress = nullptr;
  // Where the last-good checkpoint goes when a step produces a non-finite
  // loss. Empty: not written.
  std::filesystem::path abort_checkpoint;
  // Called before each forward pass; tests use it to inject faults.
  std::function<void(int step, Model& model)> before_step;
};

struct TrainResult {
  std::unique_ptr<Model> model;  // best-on-validation weights
  std::vector<StepRecord> log;
  std::vector<double> val_mean_dice;  // one per epoch
  int best_epoch = 0;
  double best_val_dice = 0.0;
};

// Parameters the optimizer updates, after applying the freeze flags.
std::vector<Tensor> trainable_parameters(const Model& model, const TrainConfig& config);

// Lockstep batches of whole cases, first frame prompted (then every K-th).
// Train cases come from the train split; augmented cases are used only when
// config.augmentation_enabled is set.
TrainResult train_model(const ExperimentConfig& config, const Dataset& dataset,
                        const TrainOptions& options = {});

std::string format_train_log(const std::vector<StepRecord>& log);

// Renders total loss per step as an RGB image.
Image render_loss_curve(const std::vector<StepRecord>& log, int width = 320, int height = 160);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
  Averaging averaging = Averaging::Micro;
  bool prompted_frames_only = false;
};

// Streams each case with ground-truth box prompts every K frames.
ConfusionCounts evaluate_counts(Model& model, const std::vector<const VideoSample*>& cases,
                                bool prompted_frames_only = false);
MetricsReport evaluate(Model& model, const std::vector<const VideoSample*>& cases,
                       const EvalOptions& options = {});

// ---------------------------------------------------------------------------
// Ablation over {fusion} x {augmentation}

struct AblationCell {
  bool fusion = false;
  bool augmentation = false;
  std::vector<double> mean_dice;  // per seed
  std::vector<double> miou;
  double median_dice = 0.0;
  double median_miou = 0.0;
};

// Rows in the order (-,-), (-,+), (+,-), (+,+). Seeds config.seed + i for
// i < config.ablation_seeds are shared by all four cells.
std::vector<AblationCell> run_ablation(const ExperimentConfig& config, const Dataset& dataset,
                                       std::ostream* progress = nullptr);

std::string ablation_json(const std::vector<AblationCell>& grid);
std::string ablation_table(const std::vector<AblationCell>& grid);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Commands. Each returns after writing its outputs under `out`.

Dataset cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out);
// Augments the dataset at `dataset_dir` in place when `out` is empty or equal
// to it, otherwise writes the expanded dataset to `out`. Throws
// EligibilityError when no train case contains IP or OCR.
std::size_t cmd_augment(const ExperimentConfig& config, const std::filesystem::path& dataset_dir,
                        const std::filesystem::path& out);
TrainResult cmd_train(const ExperimentConfig& config, const std::filesystem::path& dataset_dir,
                      const std::filesystem::path& out, std::ostream* progress = nullptr,
                      bool loss_curve = false);
// With `model_config` set, the checkpoint must match it (VersionError).
MetricsReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_dir,
                       Split split, const std::filesystem::path& out,
                       const std::optional<ModelConfig>& model_config = std::nullopt,
                       Averaging averaging = Averaging::Micro, bool prompted_frames_only = false);
std::vector<AblationCell> cmd_ablate(const ExperimentConfig& config, const std::filesystem::path& dataset_dir,
                                     const std::filesystem::path& out, std::ostream* progress = nullptr);
// Collects metrics and ablation outputs found in `dir` into report.txt.
std::string cmd_report(const std::filesystem::path& dir);

}  // namespace vidseg
