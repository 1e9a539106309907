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

#include <vector>

#include "vidseg/tensor.hpp"

namespace vidseg {

inline constexpr double kProbClamp = 1e-8;
inline constexpr double kDiceSmoothing = 1e-6;
inline constexpr double kDefaultFocalGamma = 2.0;

struct LossWeights {
  double focal = 20.0;
  double dice = 1.0;
  double mae = 1.0;
  double ce = 1.0;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Per-pixel class probabilities and one-hot targets, both (N, C, H, W).
/// The loss functions accept any probabilities in (0, 1]; `make` checks the
/// full simplex / one-hot contract.
struct PredictionTargetPair {
  Shape shape;
  std::vector<double> probs;
  std::vector<double> target;

  static PredictionTargetPair make(Shape shape, std::vector<double> probs,
                                   std::vector<double> target);
  // Target built from class indices (N, H, W).
  static PredictionTargetPair from_labels(Shape shape, std::vector<double> probs,
                                          const std::vector<int>& labels);
  void validate() const;

  int classes() const { return shape[1]; }
  std::size_t pixels() const { return probs.size() / static_cast<std::size_t>(shape[1]); }
};

struct LossBreakdown {
  double focal = 0.0;
  double dice = 0.0;
  double mae = 0.0;
  double ce = 0.0;
  double total = 0.0;
};

// Each loss optionally accumulates d(loss)/d(probs) into `grad` (resized to
// probs.size() when empty).
double focal_loss(const PredictionTargetPair& pair, double gamma,
                  std::vector<double>* grad = nullptr);
double dice_loss(const PredictionTargetPair& pair, std::vector<double>* grad = nullptr);
double mae_loss(const PredictionTargetPair& pair, std::vector<double>* grad = nullptr);
double ce_loss(const PredictionTargetPair& pair, std::vector<double>* grad = nullptr);

// Weighted sum of the four terms; the breakdown holds the unweighted terms.
LossBreakdown composite_loss(const PredictionTargetPair& pair, const LossWeights& weights,
                             double gamma = kDefaultFocalGamma,
                             std::vector<double>* grad = nullptr);

// Differentiable form over a probability tensor (N, C, H, W).
Tensor composite_loss(const Tensor& probs, const std::vector<double>& target,
                      const LossWeights& weights, double gamma,
                      LossBreakdown* breakdown = nullptr);

}  // namespace vidseg
