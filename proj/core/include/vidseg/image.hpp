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
#include <string>
#include <vector>

namespace vidseg {

inline constexpr int kNumClasses = 7;  // background + six anatomy classes

enum AnatomyClass : int {
  kBackground = 0,
  kSellaFloor = 1,            // SF
  kTuberculumSella = 2,       // TS
  kIcaProminence = 3,         // IP
  kClivalRecess = 4,          // CR
  kOpticCarotidRecess = 5,    // OCR
  kOpticProminence = 6,       // OP
};

// Short names in reporting order: SF TS IP CR OCR OP.
const char* class_name(int class_id);

/// 8-bit RGB, row-major, interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Per-pixel class index in [0, kNumClasses).
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {}
  std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> on;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), on(static_cast<std::size_t>(w) * h, 0) {}
  std::size_t count() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

using ClassPresence = std::array<bool, kNumClasses>;

struct VideoSample {
  std::string case_id;
  std::vector<Image> frames;
  std::vector<LabelMap> labels;
  ClassPresence present{};      // per-case class presence, index 0 unused
  std::string provenance = "synthetic";
  std::uint64_t seed = 0;

  std::size_t size() const { return frames.size(); }
  friend bool operator==(const VideoSample&, const VideoSample&) = default;
};

}  // namespace vidseg
