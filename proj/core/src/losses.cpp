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

#include "vidseg/losses.hpp"

#include <cmath>

#include "vidseg/errors.hpp"

namespace vidseg {

namespace {

std::vector<double>* prepare(std::vector<double>* grad, std::size_t n) {
  if (grad && grad->empty()) grad->assign(n, 0.0);
  if (grad && grad->size() != n) throw DimensionError("loss gradient buffer has wrong size");
  return grad;
}

// Index of the target class at pixel (b, i).
int true_class(const PredictionTargetPair& pair, int b, std::size_t i, std::size_t plane) {
  const int c = pair.classes();
  const std::size_t base = static_cast<std::size_t>(b) * c * plane + i;
  for (int k = 0; k < c; ++k) {
    if (pair.target[base + k * plane] > 0.5) return k;
  }
  return 0;
}

}  // namespace

void LossWeights::validate() const {
  if (focal < 0 || dice < 0 || mae < 0 || ce < 0 || !std::isfinite(focal) ||
      !std::isfinite(dice) || !std::isfinite(mae) || !std::isfinite(ce)) {
    throw ConfigError("loss weights must be finite and nonnegative");
  }
}

PredictionTargetPair PredictionTargetPair::make(Shape shape, std::vector<double> probs,
                                                std::vector<double> target) {
  PredictionTargetPair p{std::move(shape), std::move(probs), std::move(target)};
  p.validate();
  return p;
}

PredictionTargetPair PredictionTargetPair::from_labels(Shape shape, std::vector<double> probs,
                                                       const std::vector<int>& labels) {
  if (shape.size() != 4) throw DimensionError("loss pair shape must be (N, C, H, W)");
  const int n = shape[0], c = shape[1];
  const std::size_t plane = static_cast<std::size_t>(shape[2]) * shape[3];
  if (labels.size() != static_cast<std::size_t>(n) * plane) {
    throw DimensionError("label count does not match " + shape_str(shape));
  }
  std::vector<double> target(numel(shape), 0.0);
  for (int b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int k = labels[static_cast<std::size_t>(b) * plane + i];
      if (k < 0 || k >= c) throw ValidationError("label " + std::to_string(k) + " out of range");
      target[(static_cast<std::size_t>(b) * c + k) * plane + i] = 1.0;
    }
  }
  return make(std::move(shape), std::move(probs), std::move(target));
}

void PredictionTargetPair::validate() const {
  if (shape.size() != 4) throw DimensionError("loss pair shape must be (N, C, H, W)");
  if (probs.size() != numel(shape) || target.size() != numel(shape)) {
    throw DimensionError("loss pair arrays do not match " + shape_str(shape));
  }
  const int n = shape[0], c = shape[1];
  const std::size_t plane = static_cast<std::size_t>(shape[2]) * shape[3];
  for (int b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      double psum = 0.0, tsum = 0.0;
      for (int k = 0; k < c; ++k) {
        const std::size_t j = (static_cast<std::size_t>(b) * c + k) * plane + i;
        if (!(probs[j] >= 0.0 && probs[j] <= 1.0)) throw ValidationError("probability outside [0, 1]");
        if (target[j] != 0.0 && target[j] != 1.0) throw ValidationError("target is not one-hot");
        psum += probs[j];
        tsum += target[j];
      }
      if (std::abs(psum - 1.0) > 1e-6) throw ValidationError("probabilities do not sum to 1");
      if (tsum != 1.0) throw ValidationError("target is not one-hot");
    }
  }
}

double focal_loss(const PredictionTargetPair& pair, double gamma, std::vector<double>* grad) {
  if (gamma < 0) throw ValidationError("focal gamma must be nonnegative");
  prepare(grad, pair.probs.size());
  const int n = pair.shape[0], c = pair.classes();
  const std::size_t plane = pair.pixels() / n;
  const double inv = 1.0 / static_cast<double>(pair.pixels());
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int k = true_class(pair, b, i, plane);
      const std::size_t j = (static_cast<std::size_t>(b) * c + k) * plane + i;
      const bool clamped = pair.probs[j] < kProbClamp;
      const double p = clamped ? kProbClamp : pair.probs[j];
      const double q = 1.0 - p;
      total += -std::pow(q, gamma) * std::log(p);
      if (grad && !clamped) {
        double d = -std::pow(q, gamma) / p;
        if (gamma != 0.0 && q > 0.0) d += gamma * std::pow(q, gamma - 1.0) * std::log(p);
        (*grad)[j] += d * inv;
      }
    }
  }
  return total * inv;
}

double ce_loss(const PredictionTargetPair& pair, std::vector<double>* grad) {
  prepare(grad, pair.probs.size());
  const int n = pair.shape[0], c = pair.classes();
  const std::size_t plane = pair.pixels() / n;
  const double inv = 1.0 / static_cast<double>(pair.pixels());
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int k = true_class(pair, b, i, plane);
      const std::size_t j = (static_cast<std::size_t>(b) * c + k) * plane + i;
      const bool clamped = pair.probs[j] < kProbClamp;
      const double p = clamped ? kProbClamp : pair.probs[j];
      total += -std::log(p);
      if (grad && !clamped) (*grad)[j] += -inv / p;
    }
  }
  return total * inv;
}

double mae_loss(const PredictionTargetPair& pair, std::vector<double>* grad) {
  prepare(grad, pair.probs.size());
  const double inv = 1.0 / static_cast<double>(pair.probs.size());
  double total = 0.0;
  for (std::size_t j = 0; j < pair.probs.size(); ++j) {
    const double diff = pair.probs[j] - pair.target[j];
    total += std::abs(diff);
    if (grad) (*grad)[j] += (diff > 0 ? inv : diff < 0 ? -inv : 0.0);
  }
  return total * inv;
}

double dice_loss(const PredictionTargetPair& pair, std::vector<double>* grad) {
  prepare(grad, pair.probs.size());
  const int n = pair.shape[0], c = pair.classes();
  const std::size_t plane = pair.pixels() / n;
  double total = 0.0;
  for (int k = 0; k < c; ++k) {
    double inter = 0.0, psum = 0.0, tsum = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + k) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        inter += pair.probs[off + i] * pair.target[off + i];
        psum += pair.probs[off + i];
        tsum += pair.target[off + i];
      }
    }
    const double num = 2.0 * inter + kDiceSmoothing;
    const double den = psum + tsum + kDiceSmoothing;
    total += 1.0 - num / den;
    if (grad) {
      for (int b = 0; b < n; ++b) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + k) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = -(2.0 * pair.target[off + i] * den - num) / (den * den);
          (*grad)[off + i] += d / c;
        }
      }
    }
  }
  return total / c;
}

LossBreakdown composite_loss(const PredictionTargetPair& pair, const LossWeights& weights,
                             double gamma, std::vector<double>* grad) {
  weights.validate();
  LossBreakdown out;
  std::vector<double> g_focal, g_dice, g_mae, g_ce;
  const bool want = grad != nullptr;
  out.focal = focal_loss(pair, gamma, want ? &g_focal : nullptr);
  out.dice = dice_loss(pair, want ? &g_dice : nullptr);
  out.mae = mae_loss(pair, want ? &g_mae : nullptr);
  out.ce = ce_loss(pair, want ? &g_ce : nullptr);
  out.total = weights.focal * out.focal + weights.dice * out.dice + weights.mae * out.mae +
              weights.ce * out.ce;
  if (want) {
    prepare(grad, pair.probs.size());
    for (std::size_t j = 0; j < grad->size(); ++j) {
      (*grad)[j] += weights.focal * g_focal[j] + weights.dice * g_dice[j] +
                    weights.mae * g_mae[j] + weights.ce * g_ce[j];
    }
  }
  return out;
}

Tensor composite_loss(const Tensor& probs, const std::vector<double>& target,
                      const LossWeights& weights, double gamma, LossBreakdown* breakdown) {
  if (probs.rank() != 4 || target.size() != probs.size()) {
    throw DimensionError("composite_loss: probabilities " + shape_str(probs.shape()) +
                         " vs target of " + std::to_string(target.size()) + " values");
  }
  PredictionTargetPair pair{probs.shape(), {probs.values().begin(), probs.values().end()}, target};
  std::vector<double> grad;
  const LossBreakdown terms = composite_loss(pair, weights, gamma, &grad);
  if (breakdown) *breakdown = terms;
  return Tensor::make_result({1}, {terms.total}, {probs}, [probs, grad = std::move(grad)](detail::Node& self) {
    if (!probs.requires_grad()) return;
    auto& g = probs.node()->ensure_grad();
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[0] * grad[j];
  });
}

}  // namespace vidseg
