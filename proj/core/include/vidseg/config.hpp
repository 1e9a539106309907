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
#include <string>

#include "vidseg/data.hpp"
#include "vidseg/losses.hpp"
#include "vidseg/model.hpp"
#include "vidseg/optim.hpp"

namespace vidseg {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 4;
  // From-scratch toy training; 1e-3 leaves the desk-scale budget undertrained.
  AdamWConfig optimizer{.learning_rate = 1e-2};
  LossWeights loss_weights;
  double focal_gamma = kDefaultFocalGamma;
  bool freeze_fusion = false;   // excludes "fusion.*" parameters
  bool freeze_decoder = false;  // excludes "decoder.*" parameters
  int max_steps = 0;            // 0: no cap

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig data;
  ModelConfig model;
  TrainConfig train;
  bool augmentation_enabled = true;
  bool micro_average = true;
  int ablation_seeds = 3;

  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Every field is optional in the input; missing fields keep their defaults
// and unknown keys are rejected with ConfigError.
std::string to_json(const ExperimentConfig& config);
std::string to_json(const ModelConfig& config);
std::string to_json(const DatasetConfig& config);

ModelConfig model_config_from_json(const std::string& text);
DatasetConfig dataset_config_from_json(const std::string& text);

// Accepts a JSON object or line-based `dotted.key = value` text ('#' starts
// a comment).
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace vidseg
