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

// Microbenchmarks for the hot paths: convolution, one fusion block, streaming
// inference over a video, and one forward/backward training pass.

#include <benchmark/benchmark.h>

#include <vector>

#include "vidseg/data.hpp"
#include "vidseg/fusion.hpp"
#include "vidseg/losses.hpp"
#include "vidseg/model.hpp"
#include "vidseg/ops.hpp"
#include "vidseg/rng.hpp"

namespace {

using namespace vidseg;

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

std::vector<double> one_hot(const LabelMap& labels, int classes) {
  const std::size_t plane = labels.labels.size();
  std::vector<double> out(classes * plane, 0.0);
  for (std::size_t i = 0; i < plane; ++i) out[labels.labels[i] * plane + i] = 1.0;
  return out;
}

void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Rng rng(1);
  const Tensor x = random_tensor({4, c, 32, 32}, rng);
  const Tensor w = random_tensor({c, c, 3, 3}, rng);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, Tensor(), 1, 1));
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_FusionForward(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(2);
  FusionBlockParams params = FusionBlockParams::create(d, 4, 1.0, rng);
  params.set_bn_mode(BatchNormMode::Eval);
  const FeatureMap high(random_tensor({4, d, 8, 8}, rng), 8);
  const FeatureMap mem(random_tensor({4, d, 8, 8}, rng), 8);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(fusion_forward(high, mem, params));
}
BENCHMARK(BM_FusionForward)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_StreamVideo(benchmark::State& state) {
  ModelConfig config;
  config.fusion_enabled = state.range(0) != 0;
  Model model(config, 3);
  model.set_training(false);
  const VideoSample video = generate_synthetic_case(4, GenConfig{});
  const PromptSchedule schedule = make_prompt_schedule(video, config.prompt_interval);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_video(video, schedule));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(video.size()));
}
BENCHMARK(BM_StreamVideo)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainPass(benchmark::State& state) {
  Model model(ModelConfig{}, 5);
  const VideoSample video = generate_synthetic_case(6, GenConfig{});
  const PromptSchedule schedule = make_prompt_schedule(video, 10);
  for (auto _ : state) {
    const auto preds = model.forward_video(video, schedule);
    Tensor total;
    for (std::size_t t = 0; t < preds.size(); ++t) {
      Tensor l = composite_loss(preds[t].probs, one_hot(video.labels[t], kNumClasses), LossWeights{},
                                kDefaultFocalGamma);
      total = total.defined() ? nn::add(total, l) : l;
    }
    total.backward();
    benchmark::DoNotOptimize(total.item());
  }
}
BENCHMARK(BM_TrainPass)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
