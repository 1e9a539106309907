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

#include "vidseg/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "vidseg/errors.hpp"

namespace vidseg {

void ConfusionCounts::merge(const ConfusionCounts& other) {
  for (int c = 0; c < kNumClasses; ++c) {
    classes[c].tp += other.classes[c].tp;
    classes[c].fp += other.classes[c].fp;
    classes[c].fn += other.classes[c].fn;
    frame_dice_sum[c] += other.frame_dice_sum[c];
    frame_iou_sum[c] += other.frame_iou_sum[c];
    frames_with_class[c] += other.frames_with_class[c];
  }
  frames += other.frames;
}

void accumulate(ConfusionCounts& counts, const LabelMap& pred, const LabelMap& gt) {
  if (pred.width != gt.width || pred.height != gt.height || pred.labels.size() != gt.labels.size()) {
    throw DimensionError("accumulate: prediction " + std::to_string(pred.width) + "x" +
                         std::to_string(pred.height) + " vs ground truth " + std::to_string(gt.width) + "x" +
                         std::to_string(gt.height));
  }
  std::array<ClassCounts, kNumClasses> frame{};
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int p = pred.labels[i];
    const int g = gt.labels[i];
    if (p >= kNumClasses || g >= kNumClasses) throw ValidationError("label value out of range");
    if (p == g) {
      ++frame[p].tp;
    } else {
      ++frame[p].fp;
      ++frame[g].fn;
    }
  }
  for (int c = 1; c < kNumClasses; ++c) {
    const ClassCounts& f = frame[c];
    counts.classes[c].tp += f.tp;
    counts.classes[c].fp += f.fp;
    counts.classes[c].fn += f.fn;
    const std::uint64_t denom = f.tp + f.fp + f.fn;
    if (denom > 0) {
      counts.frame_dice_sum[c] += 2.0 * f.tp / static_cast<double>(2 * f.tp + f.fp + f.fn);
      counts.frame_iou_sum[c] += static_cast<double>(f.tp) / static_cast<double>(denom);
      ++counts.frames_with_class[c];
    }
  }
  ++counts.frames;
}

namespace {

template <typename Score>
ClassScores score(const ConfusionCounts& counts, Averaging mode, Score micro,
                  const std::array<double, kNumClasses>& frame_sums) {
  ClassScores s;
  double total = 0.0;
  int included = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    const ClassCounts& k = counts.classes[c];
    if (k.tp + k.fp + k.fn == 0) continue;
    const double v = mode == Averaging::Micro
                         ? micro(k)
                         : frame_sums[c] / static_cast<double>(counts.frames_with_class[c]);
    s.per_class[c] = v;
    total += v;
    ++included;
  }
  if (included == 0) throw ValidationError("mean score undefined: no class occurs in prediction or ground truth");
  s.mean = total / included;
  return s;
}

}  // namespace

ClassScores dice_scores(const ConfusionCounts& counts, Averaging mode) {
  return score(
      counts, mode,
      [](const ClassCounts& k) { return 2.0 * k.tp / static_cast<double>(2 * k.tp + k.fp + k.fn); },
      counts.frame_dice_sum);
}

ClassScores iou_scores(const ConfusionCounts& counts, Averaging mode) {
  return score(
      counts, mode,
      [](const ClassCounts& k) { return static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fp + k.fn); },
      counts.frame_iou_sum);
}

MetricsReport make_report(const ConfusionCounts& counts, Averaging mode) {
  MetricsReport r;
  r.dice = dice_scores(counts, mode);
  r.iou = iou_scores(counts, mode);
  r.frames = counts.frames;
  r.averaging = mode;
  return r;
}

std::string report_json(const MetricsReport& r) {
  nlohmann::json dice = nlohmann::json::object();
  nlohmann::json iou = nlohmann::json::object();
  for (int c = 1; c < kNumClasses; ++c) {
    dice[class_name(c)] = r.dice.per_class[c] ? nlohmann::json(*r.dice.per_class[c]) : nlohmann::json();
    iou[class_name(c)] = r.iou.per_class[c] ? nlohmann::json(*r.iou.per_class[c]) : nlohmann::json();
  }
  const nlohmann::json j = {{"dice", dice},
                            {"mean_dice", r.dice.mean},
                            {"iou", iou},
                            {"miou", r.iou.mean},
                            {"frames", r.frames},
                            {"averaging", r.averaging == Averaging::Micro ? "micro" : "macro"},
                            {"frames_per_second", r.frames_per_second}};
  return j.dump(2);
}

std::string report_table(const MetricsReport& r) {
  std::ostringstream out;
  char buf[64];
  out << "  mIoU    Mean";
  for (int c = 1; c < kNumClasses; ++c) {
    std::snprintf(buf, sizeof(buf), "  %6s", class_name(c));
    out << buf;
  }
  out << "\n";
  std::snprintf(buf, sizeof(buf), "%6.4f  %6.4f", r.iou.mean, r.dice.mean);
  out << buf;
  for (int c = 1; c < kNumClasses; ++c) {
    if (r.dice.per_class[c]) {
      std::snprintf(buf, sizeof(buf), "  %6.4f", *r.dice.per_class[c]);
    } else {
      std::snprintf(buf, sizeof(buf), "  %6s", "-");
    }
    out << buf;
  }
  out << "\n";
  return out.str();
}

}  // namespace vidseg
