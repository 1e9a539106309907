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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vidseg/image.hpp"

namespace vidseg {

struct GenConfig {
  int width = 32;
  int height = 32;
  int frames = 8;
  // Explicit anatomy classes (1..6) for every case. Empty selects the default
  // imbalance profile: SF, TS and CR always, IP, OCR and OP each with
  // `rare_class_probability`.
  std::vector<int> classes;
  double rare_class_probability = 0.25;
  double pan_amplitude = 2.0;  // pixels
  double noise = 0.04;         // per-pixel std dev, intensity in [0, 1]
  double bleeding_probability = 0.3;
  double max_step = 2.0;       // bound on per-frame centroid and tip motion

  void validate() const;
  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

enum class InstrumentKind {
  SuctionTube,
  Rongeur,
  CuttingForceps,
  CupForceps,
  BipolarElectrode,
  Freer,
  Scissors,
};
inline constexpr int kInstrumentKinds = 7;
const char* to_string(InstrumentKind kind);

struct InstrumentClip {
  InstrumentKind kind = InstrumentKind::SuctionTube;
  std::vector<Image> frames;       // instrument pixels, black elsewhere
  std::vector<BinaryMask> masks;
  std::vector<std::pair<double, double>> tip_path;  // pixel coordinates

  std::size_t size() const { return frames.size(); }
  friend bool operator==(const InstrumentClip&, const InstrumentClip&) = default;
};

VideoSample generate_synthetic_case(std::uint64_t seed, const GenConfig& config,
                                    std::string case_id = "case");

InstrumentClip generate_instrument_clip(std::uint64_t seed, const GenConfig& config);

// Hard paste: pixels under the mask take the instrument colour and become
// background in the label. Everything else is left untouched.
std::pair<Image, LabelMap> composite_instrument(const Image& frame, const LabelMap& label,
                                                const Image& instrument, const BinaryMask& mask);

// round(t * (clip_len - 1) / (target_len - 1)) for t in [0, target_len).
std::vector<std::size_t> align_clip_indices(std::size_t target_len, std::size_t clip_len);

// Composites the clip over a case that contains IP or OCR; throws
// EligibilityError otherwise.
VideoSample augment_case(const VideoSample& target, const InstrumentClip& clip);

// Same compositing without the eligibility rule (used to build occluded
// evaluation cases).
VideoSample occlude_case(const VideoSample& target, const InstrumentClip& clip,
                         const std::string& provenance);

ClassPresence presence_from_labels(const std::vector<LabelMap>& labels);

// Fraction of cases containing each class (index 0 unused). Metadata must
// agree with the label pixels.
std::array<double, kNumClasses> class_distribution(std::span<const VideoSample* const> cases);
std::array<double, kNumClasses> class_distribution(std::span<const VideoSample> cases);

// ---------------------------------------------------------------------------
// Datasets

enum class Split { Train, Val, Test };
const char* to_string(Split split);
Split split_from_string(const std::string& name);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  void validate() const;
  friend bool operator==(const SplitRatios&, const SplitRatios&) = default;
};

// Case counts per split by the largest-remainder method (ties to the earlier
// split).
std::array<int, 3> split_counts(int num_cases, const SplitRatios& ratios);

struct DatasetConfig {
  int num_cases = 28;
  SplitRatios ratios;
  GenConfig gen;
  // Composite an instrument clip into every test case.
  bool occlude_test = true;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct DatasetCase {
  VideoSample video;
  Split split = Split::Train;
  friend bool operator==(const DatasetCase&, const DatasetCase&) = default;
};

struct Dataset {
  std::uint64_t seed = 0;
  DatasetConfig config;
  std::vector<DatasetCase> cases;

  std::vector<const VideoSample*> split(Split which) const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset generate_dataset(std::uint64_t seed, const DatasetConfig& config);

// Appends one instrument-augmented copy of every eligible training case that
// is not itself augmented. Returns the number of cases added.
std::size_t augment_dataset(Dataset& dataset, std::uint64_t seed);

bool is_augmented(const VideoSample& video);

}  // namespace vidseg
