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

#include <gtest/gtest.h>

#include <cmath>

#include "common/oracles.hpp"
#include "vidseg/errors.hpp"
#include "vidseg/gradcheck.hpp"
#include "vidseg/losses.hpp"
#include "vidseg/ops.hpp"

namespace vidseg {
namespace {

// Random simplex rows and random one-hot targets of shape (n, c, h, w).
PredictionTargetPair random_pair(Rng& rng, int n, int c, int h, int w) {
  const Shape shape{n, c, h, w};
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> probs(numel(shape)), target(numel(shape), 0.0);
  for (int b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      double total = 0.0;
      for (int k = 0; k < c; ++k) {
        double& v = probs[(static_cast<std::size_t>(b) * c + k) * plane + p];
        v = rng.uniform(0.05, 1.0);
        total += v;
      }
      for (int k = 0; k < c; ++k) probs[(static_cast<std::size_t>(b) * c + k) * plane + p] /= total;
      const auto cls = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(c)));
      target[(static_cast<std::size_t>(b) * c + cls) * plane + p] = 1.0;
    }
  }
  return PredictionTargetPair::make(shape, std::move(probs), std::move(target));
}

PredictionTargetPair half_pixel() {
  return PredictionTargetPair::make({1, 2, 1, 1}, {0.5, 0.5}, {1.0, 0.0});
}

// Smoothed soft dice of one class channel, straight from the formula.
double dice_term(double sum_pt, double sum_p, double sum_t) {
  return 1.0 - (2.0 * sum_pt + kDiceSmoothing) / (sum_p + sum_t + kDiceSmoothing);
}

TEST(LossWeights, DefaultsAreTwentyOneOneOne) {
  LossWeights w;
  EXPECT_EQ(w.focal, 20.0);
  EXPECT_EQ(w.dice, 1.0);
  EXPECT_EQ(w.mae, 1.0);
  EXPECT_EQ(w.ce, 1.0);
  w.mae = -1.0;
  EXPECT_THROW(w.validate(), ConfigError);
  EXPECT_THROW(composite_loss(half_pixel(), w), ConfigError);
}

TEST(FocalLoss, SinglePixelHalfProbability) {
  EXPECT_NEAR(focal_loss(half_pixel(), 2.0), 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(focal_loss(half_pixel(), 2.0), 0.17329, 1e-4);
}

TEST(FocalLoss, GammaZeroIsCrossEntropy) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    auto pair = random_pair(rng, 1 + static_cast<int>(rng.below(2)), 2 + static_cast<int>(rng.below(6)),
                            1 + static_cast<int>(rng.below(4)), 1 + static_cast<int>(rng.below(4)));
    EXPECT_NEAR(focal_loss(pair, 0.0), ce_loss(pair), 1e-12);
  }
  EXPECT_THROW(focal_loss(half_pixel(), -0.5), ValidationError);
}

TEST(CeLoss, KnownValues) {
  EXPECT_NEAR(ce_loss(half_pixel()), std::log(2.0), 1e-12);
  EXPECT_NEAR(ce_loss(half_pixel()), 0.69315, 1e-4);
  const int c = 7;
  std::vector<double> probs(c, 1.0 / c), target(c, 0.0);
  target[3] = 1.0;
  EXPECT_NEAR(ce_loss(PredictionTargetPair::make({1, c, 1, 1}, probs, target)), std::log(7.0), 1e-12);
}

TEST(CeLoss, ClampsZeroProbability) {
  auto pair = PredictionTargetPair::make({1, 2, 1, 1}, {0.0, 1.0}, {1.0, 0.0});
  EXPECT_NEAR(ce_loss(pair), -std::log(kProbClamp), 1e-9);
  EXPECT_TRUE(std::isfinite(focal_loss(pair, 2.0)));
}

TEST(MaeLoss, KnownValueAndBounds) {
  EXPECT_EQ(mae_loss(half_pixel()), 0.5);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const double v = mae_loss(random_pair(rng, 1, 4, 3, 3));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(DiceLoss, SinglePixelOracle) {
  const double expected = 0.5 * (dice_term(0.5, 0.5, 1.0) + dice_term(0.0, 0.5, 0.0));
  EXPECT_NEAR(dice_loss(half_pixel()), expected, 1e-12);
}

TEST(DiceLoss, ZeroOverlapIsOne) {
  // Class 0 predicted where class 1 is true and vice versa.
  auto pair = PredictionTargetPair::make({1, 2, 1, 2}, {1.0, 0.0, 0.0, 1.0}, {0.0, 1.0, 1.0, 0.0});
  EXPECT_NEAR(dice_loss(pair), 1.0, 1e-5);
}

TEST(CompositeLoss, PerfectPredictionIsZero) {
  auto pair = PredictionTargetPair::make({1, 3, 1, 2}, {1, 0, 0, 0, 0, 1}, {1, 0, 0, 0, 0, 1});
  const LossBreakdown b = composite_loss(pair, LossWeights{});
  EXPECT_EQ(b.focal, 0.0);
  EXPECT_EQ(b.ce, 0.0);
  EXPECT_EQ(b.mae, 0.0);
  EXPECT_NEAR(b.dice, 0.0, 1e-5);
  EXPECT_LE(b.total, 1e-5);
}

TEST(CompositeLoss, SinglePixelSumOfOracles) {
  const double dice = 0.5 * (dice_term(0.5, 0.5, 1.0) + dice_term(0.0, 0.5, 0.0));
  const LossBreakdown b = composite_loss(half_pixel(), LossWeights{});
  EXPECT_NEAR(b.focal, 0.17329, 1e-4);
  EXPECT_NEAR(b.ce, 0.69315, 1e-4);
  EXPECT_NEAR(b.mae, 0.5, 1e-4);
  EXPECT_NEAR(b.dice, dice, 1e-12);
  EXPECT_NEAR(b.total, 20.0 * 0.25 * std::log(2.0) + dice + 0.5 + std::log(2.0), 1e-12);
}

TEST(CompositeLoss, DecompositionAndNonnegativity) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    LossWeights w{rng.uniform(0, 30), rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3)};
    auto pair = random_pair(rng, 1 + static_cast<int>(rng.below(2)), 2 + static_cast<int>(rng.below(6)), 3, 2);
    const LossBreakdown b = composite_loss(pair, w, rng.uniform(0, 4));
    EXPECT_GE(b.focal, 0.0);
    EXPECT_GE(b.dice, 0.0);
    EXPECT_GE(b.mae, 0.0);
    EXPECT_GE(b.ce, 0.0);
    EXPECT_NEAR(b.total, w.focal * b.focal + w.dice * b.dice + w.mae * b.mae + w.ce * b.ce, 1e-12);
  }
}

TEST(CompositeLoss, TensorFormMatchesScalarForm) {
  Rng rng(4);
  auto pair = random_pair(rng, 2, 5, 3, 3);
  Tensor probs = Tensor::from(pair.shape, pair.probs, true);
  LossBreakdown tb;
  Tensor total = composite_loss(probs, pair.target, LossWeights{}, 2.0, &tb);
  const LossBreakdown sb = composite_loss(pair, LossWeights{});
  EXPECT_NEAR(total.item(), sb.total, 1e-12);
  EXPECT_NEAR(tb.dice, sb.dice, 1e-12);
  total.backward();
  std::vector<double> grad;
  composite_loss(pair, LossWeights{}, 2.0, &grad);
  ASSERT_EQ(probs.grad().size(), grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) EXPECT_NEAR(probs.grad()[i], grad[i], 1e-10);
}

// Central differences on the probabilities; probes leave the simplex, which
// the loss functions accept.
TEST(CompositeLoss, GradientMatchesCentralDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto pair = random_pair(rng, 1, 2 + static_cast<int>(rng.below(6)), 1 + static_cast<int>(rng.below(8)),
                            1 + static_cast<int>(rng.below(8)));
    std::vector<double> grad;
    composite_loss(pair, LossWeights{}, 2.0, &grad);
    const double eps = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < pair.probs.size(); ++i) {
      auto plus = pair, minus = pair;
      plus.probs[i] += eps;
      minus.probs[i] -= eps;
      const double numeric = (composite_loss(plus, LossWeights{}).total -
                              composite_loss(minus, LossWeights{}).total) / (2 * eps);
      worst = std::max(worst, std::abs(grad[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    EXPECT_LE(worst, 1e-4);
  }
}

TEST(CompositeLoss, GradientThroughSoftmax) {
  Rng rng(6);
  Tensor logits = oracle::random_tensor({1, 7, 4, 4}, rng, -2, 2, true);
  auto pair = random_pair(rng, 1, 7, 4, 4);
  auto objective = [&](std::vector<char>*) {
    return composite_loss(nn::softmax_channels(logits), pair.target, LossWeights{}, 2.0);
  };
  GradCheckResult r = gradcheck(objective, {logits}, 1e-5);
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(PredictionTargetPair, RejectsInvalidPairs) {
  EXPECT_THROW(PredictionTargetPair::make({1, 2, 1, 1}, {0.6, 0.6}, {1, 0}), ValidationError);
  EXPECT_THROW(PredictionTargetPair::make({1, 2, 1, 1}, {0.5, 0.5}, {1, 1}), ValidationError);
  EXPECT_THROW(PredictionTargetPair::make({1, 2, 1, 1}, {0.5, 0.5, 0.0}, {1, 0}), DimensionError);
  auto pair = PredictionTargetPair::from_labels({1, 3, 1, 2}, {0.2, 0.3, 0.3, 0.3, 0.5, 0.4}, {2, 0});
  EXPECT_EQ(pair.target, (std::vector<double>{0, 1, 0, 0, 1, 0}));
  EXPECT_THROW(PredictionTargetPair::from_labels({1, 3, 1, 2}, std::vector<double>(6, 1.0 / 3), {3, 0}),
               ValidationError);
}

}  // namespace
}  // namespace vidseg
