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
#include "vidseg/ops.hpp"
#include "vidseg/optim.hpp"

namespace vidseg {
namespace {

using oracle::random_tensor;

// Gradient check of `f` reduced by a fixed random projection.
double check(const std::function<Tensor()>& f, std::vector<Tensor> wrt, std::uint64_t seed = 1) {
  const std::size_t n = f().size();
  Rng rng(seed);
  std::vector<double> proj(n);
  for (double& w : proj) w = rng.uniform(-1, 1);
  auto objective = [&](std::vector<char>*) { return nn::weighted_sum(f(), proj); };
  return gradcheck(objective, std::move(wrt), 1e-5).max_rel_error;
}

class OpsGrad : public ::testing::Test {
 protected:
  Rng rng{42};
  Tensor t(Shape s, double lo = -1, double hi = 1) { return random_tensor(std::move(s), rng, lo, hi, true); }
};

TEST_F(OpsGrad, Elementwise) {
  Tensor a = t({2, 3}), b = t({2, 3}), s = t({1});
  EXPECT_LE(check([&] { return nn::add(a, b); }, {a, b}), 1e-8);
  EXPECT_LE(check([&] { return nn::sub(a, b); }, {a, b}), 1e-8);
  EXPECT_LE(check([&] { return nn::mul(a, b); }, {a, b}), 1e-8);
  EXPECT_LE(check([&] { return nn::scale(a, -2.5); }, {a}), 1e-8);
  EXPECT_LE(check([&] { return nn::scale_by(a, s); }, {a, s}), 1e-8);
  Tensor away = t({4, 4}, 0.1, 1.0);
  EXPECT_LE(check([&] { return nn::relu(nn::sub(away, Tensor::full({4, 4}, 0.5))); }, {away}), 1e-6);
  EXPECT_LE(check([&] { return nn::reshape(a, {3, 2}); }, {a}), 1e-8);
  EXPECT_LE(check([&] { return nn::sum(a); }, {a}), 1e-8);
  EXPECT_LE(check([&] { return nn::mean(a); }, {a}), 1e-8);
}

TEST_F(OpsGrad, Convolutions) {
  Tensor x = t({2, 3, 5, 5}), w = t({4, 3, 3, 3}), b = t({4});
  EXPECT_LE(check([&] { return nn::conv2d(x, w, b, 1, 1); }, {x, w, b}), 1e-6);
  EXPECT_LE(check([&] { return nn::conv2d(x, w, b, 2, 1); }, {x, w, b}), 1e-6);
  Tensor w1 = t({2, 3, 1, 1});
  EXPECT_LE(check([&] { return nn::conv2d(x, w1, Tensor(), 1, 0); }, {x, w1}), 1e-6);
  Tensor y = t({1, 3, 2, 3}), wt = t({3, 2, 2, 2}), bt = t({2});
  EXPECT_LE(check([&] { return nn::conv_transpose2d(y, wt, bt, 2); }, {y, wt, bt}), 1e-6);
}

TEST_F(OpsGrad, BatchNorm) {
  Tensor x = t({3, 2, 3, 3}), g = t({2}), b = t({2});
  EXPECT_LE(check([&] { return nn::batch_norm_train(x, g, b, 1e-5, nullptr); }, {x, g, b}), 1e-5);
  EXPECT_LE(check([&] { return nn::batch_norm_eval(x, g, b, {0.1, -0.2}, {1.5, 0.7}, 1e-5); }, {x, g, b}), 1e-6);
}

TEST_F(OpsGrad, ChannelAndTokenOps) {
  Tensor x = t({2, 4, 3, 2}), m = t({3, 4}), s = t({4});
  EXPECT_LE(check([&] { return nn::channel_mix(x, m); }, {x, m}), 1e-6);
  EXPECT_LE(check([&] { return nn::mul_channel(x, s); }, {x, s}), 1e-6);
  EXPECT_LE(check([&] { return nn::softmax_channels(x); }, {x}), 1e-6);
  EXPECT_LE(check([&] { return nn::from_tokens(nn::to_tokens(x), 3, 2); }, {x}), 1e-8);
  Tensor tok = t({2, 5, 4}), lw = t({4, 3}), lb = t({3}), row = t({4});
  EXPECT_LE(check([&] { return nn::linear(tok, lw, lb); }, {tok, lw, lb}), 1e-6);
  EXPECT_LE(check([&] { return nn::add_row(tok, row); }, {tok, row}), 1e-8);
  Tensor c2 = t({2, 1, 4});
  EXPECT_LE(check([&] { return nn::concat({tok, c2}); }, {tok, c2}), 1e-8);
  EXPECT_LE(check([&] { return nn::global_avg_pool(x); }, {x}), 1e-8);
  Tensor p = t({1, 2, 4, 4});
  EXPECT_LE(check([&] { return nn::avg_pool(p, 2); }, {p}), 1e-8);
}

TEST_F(OpsGrad, AttentionAndEmbeddings) {
  Tensor q = t({2, 3, 4}), k = t({2, 5, 4}), v = t({2, 5, 4});
  EXPECT_LE(check([&] { return nn::attention(q, k, v, 2); }, {q, k, v}), 1e-6);
  Tensor masks = t({2, 3, 2, 2}), emb = t({2, 3, 4});
  EXPECT_LE(check([&] { return nn::mask_embed(masks, emb); }, {masks, emb}), 1e-6);
  Tensor u = t({2, 4, 2, 2});
  EXPECT_LE(check([&] { return nn::pixel_dot(u, emb); }, {u, emb}), 1e-6);
  Tensor on = t({3, 4}), off = t({3, 4});
  EXPECT_LE(check([&] { return nn::select_embedding(emb, on, off, {1, 0, 1, 0, 0, 1}); }, {emb, on, off}), 1e-8);
}

TEST(Ops, ConvolutionMatchesDirectLoop) {
  Rng rng(3);
  Tensor x = random_tensor({1, 2, 4, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
  Tensor y = nn::conv2d(x, w, b, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 4, 5}));
  auto X = x.values(), W = w.values();
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 5; ++j) {
        double s = b.values()[o];
        for (int c = 0; c < 2; ++c)
          for (int di = 0; di < 3; ++di)
            for (int dj = 0; dj < 3; ++dj) {
              const int ii = i + di - 1, jj = j + dj - 1;
              if (ii < 0 || ii >= 4 || jj < 0 || jj >= 5) continue;
              s += W[((o * 2 + c) * 3 + di) * 3 + dj] * X[(c * 4 + ii) * 5 + jj];
            }
        EXPECT_NEAR(y.values()[(o * 4 + i) * 5 + j], s, 1e-12);
      }
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(4);
  Tensor x = random_tensor({2, 7, 3, 3}, rng, -30, 30);
  Tensor p = nn::softmax_channels(x);
  for (int b = 0; b < 2; ++b)
    for (int q = 0; q < 9; ++q) {
      double s = 0.0;
      for (int c = 0; c < 7; ++c) s += p.values()[(b * 7 + c) * 9 + q];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Ops, ShapeErrors) {
  EXPECT_THROW(nn::add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(nn::conv2d(Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1, 3, 3, 3}), Tensor(), 1, 1),
               DimensionError);
  EXPECT_THROW(nn::reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
}

TEST(Ops, NoGradGuardStopsRecording) {
  Tensor a = Tensor::full({2}, 1.0, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(nn::scale(a, 2.0).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(nn::scale(a, 2.0).requires_grad());
}

TEST(GradCheck, RejectsEpsilonOutOfRange) {
  Tensor a = Tensor::full({1}, 1.0, true);
  auto f = [&](std::vector<char>*) { return nn::sum(a); };
  EXPECT_THROW(gradcheck(f, {a}, 1e-7), ValidationError);
  EXPECT_THROW(gradcheck(f, {a}, 2e-3), ValidationError);
}

TEST(GradCheck, FlagsReluKink) {
  Tensor a = Tensor::from({2}, {1e-7, 0.5}, true);
  auto f = [&](std::vector<char>* branches) {
    Tensor r = nn::relu(a);
    if (branches)
      for (double v : a.values()) branches->push_back(v > 0.0);
    return nn::sum(r);
  };
  GradCheckResult r = gradcheck(f, {a}, 1e-5);
  ASSERT_EQ(r.flagged.size(), 1u);
  EXPECT_EQ(r.flagged[0].index, 0u);
  EXPECT_LE(r.max_rel_error, 1e-8);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  AdamWConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  Tensor p = Tensor::from({2}, {1.0, -1.0}, true);
  AdamW opt({p}, cfg);
  nn::sum(nn::mul(p, p)).backward();
  opt.step();
  // m/sqrt(v) is sign(g) after bias correction.
  EXPECT_NEAR(p.values()[0], 0.9, 1e-6);
  EXPECT_NEAR(p.values()[1], -0.9, 1e-6);
  opt.zero_grad();
  EXPECT_TRUE(p.grad().empty() || p.grad()[0] == 0.0);
}

TEST(AdamW, DecoupledWeightDecay) {
  AdamWConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  Tensor p = Tensor::from({1}, {2.0}, true);
  AdamW opt({p}, cfg);
  p.mutable_grad()[0] = 0.0;
  opt.step();
  EXPECT_NEAR(p.values()[0], 2.0 * (1.0 - 0.1 * 0.5), 1e-12);
}

}  // namespace
}  // namespace vidseg
