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

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "vidseg/image.hpp"

namespace vidseg {

enum class Averaging {
  Micro,  // pool pixel counts over the whole evaluation set
  Macro,  // average per-frame scores over frames where the class occurs
};

struct ClassCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

// Pixel counts per class (index 0, background, is never scored) plus the
// per-frame sums needed for macro averaging. Merging is a plain sum.
struct ConfusionCounts {
  std::array<ClassCounts, kNumClasses> classes{};
  std::array<double, kNumClasses> frame_dice_sum{};
  std::array<double, kNumClasses> frame_iou_sum{};
  std::array<std::uint64_t, kNumClasses> frames_with_class{};
  std::uint64_t frames = 0;

  void merge(const ConfusionCounts& other);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

void accumulate(ConfusionCounts& counts, const LabelMap& pred, const LabelMap& gt);

struct ClassScores {
  // Unset for classes absent from both prediction and ground truth.
  std::array<std::optional<double>, kNumClasses> per_class{};
  double mean = 0.0;
};

// Throw ValidationError when every class is absent (undefined mean).
ClassScores dice_scores(const ConfusionCounts& counts, Averaging mode = Averaging::Micro);
ClassScores iou_scores(const ConfusionCounts& counts, Averaging mode = Averaging::Micro);

struct MetricsReport {
  ClassScores dice;
  ClassScores iou;
  std::uint64_t frames = 0;
  Averaging averaging = Averaging::Micro;
  double frames_per_second = 0.0;  // informational wall-clock throughput
};

MetricsReport make_report(const ConfusionCounts& counts, Averaging mode = Averaging::Micro);

// JSON with per-class Dice and IoU keyed by class name, mean_dice, miou,
// frames, averaging and frames_per_second.
std::string report_json(const MetricsReport& report);
// Columns: mIoU Mean SF TS IP CR OCR OP.
std::string report_table(const MetricsReport& report);

}  // namespace vidseg
