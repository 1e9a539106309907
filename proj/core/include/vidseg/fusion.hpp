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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vidseg/gradcheck.hpp"
#include "vidseg/rng.hpp"
#include "vidseg/tensor.hpp"

namespace vidseg {

/// NCHW activations tagged with their downscale factor relative to the frame.
struct FeatureMap {
  Tensor data;
  int stride = 1;

  FeatureMap() = default;
  FeatureMap(Tensor t, int s);

  int batch() const { return data.dim(0); }
  int channels() const { return data.dim(1); }
  int height() const { return data.dim(2); }
  int width() const { return data.dim(3); }
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

enum class BatchNormMode {
  Train,     // batch moments, running statistics updated
  Eval,      // running statistics
  Identity,  // passthrough: unit scale, zero shift, frozen unit statistics
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  BatchNormMode mode = BatchNormMode::Train;

  static BatchNorm make(int channels);
  Tensor forward(const Tensor& x);
  BatchNorm clone() const;
};

// One odd-sized convolution (no bias, same padding) followed by batch
// normalization.
struct ConvBn {
  Tensor weight;  // (d, d, k, k)
  BatchNorm bn;

  static ConvBn make(int channels, int kernel, Rng& rng);
  // Center-tap identity kernel with the norm in identity mode.
  static ConvBn identity(int channels, int kernel);
  Tensor forward(const Tensor& x);
  ConvBn clone() const;
};

/// Weights of one fusion site: the residual transform `residual` applied to
/// the high-resolution features, the main path `main` applied to the fused
/// result, and the low-rank pair A (r x d), B (d x r) scaled by alpha.
// The residual transform is pointwise so the skip keeps per-pixel detail; the
// main path mixes a 3x3 neighborhood.
inline constexpr int kResidualKernel = 1;
inline constexpr int kMainKernel = 3;

struct FusionBlockParams {
  int d = 0;
  int r = 0;
  Tensor alpha;  // one element; trainable only when alpha_trainable
  bool lora_enabled = true;
  ConvBn residual;
  ConvBn main;
  Tensor A;
  Tensor B;

  // A ~ U(-a, a) with a = 1/sqrt(d); B = 0.
  static FusionBlockParams create(int d, int r, double alpha, Rng& rng,
                                  bool alpha_trainable = false);
  // Identity residual/main paths, A = 0, B = 0.
  static FusionBlockParams identity(int d, int r, double alpha);

  void validate() const;
  void set_bn_mode(BatchNormMode mode);
  FusionBlockParams clone() const;
  NamedTensors named_parameters(const std::string& prefix) const;
  // Running statistics, flattened as named 1-D tensors for checkpoints.
  NamedTensors named_buffers(const std::string& prefix) const;
  void load_buffers(const std::string& prefix, const NamedTensors& buffers);
};

struct FusionIntermediates {
  Tensor pre_activation;  // residual(f_high) + f_mem
  Tensor residual_out;    // ReLU of the above
  Tensor lora_branch;     // alpha * B (A x), undefined when disabled
};

struct FusionOutput {
  FeatureMap value;
  std::optional<FusionIntermediates> intermediates;
};

// ReLU(residual(f_high) + f_mem).
FeatureMap residual_fuse(const FeatureMap& f_high, const FeatureMap& f_mem,
                         FusionBlockParams& params);

// main(f_res) + alpha * B (A f_res), A and B applied per spatial location.
FeatureMap lora_modulate(const FeatureMap& f_res, FusionBlockParams& params);

// The low-rank term alone.
Tensor lora_branch(const Tensor& x, const FusionBlockParams& params);

FusionOutput fusion_forward(const FeatureMap& f_high, const FeatureMap& f_mem,
                            FusionBlockParams& params,
                            bool keep_intermediates = false);

std::size_t trainable_param_count(const FusionBlockParams& params, bool lora_only);

// Central-difference check of the whole block (inputs and every parameter)
// on a copy of `params`. The objective is a fixed random projection of the
// output drawn from `seed`. Coordinates whose probe flips a ReLU input sign
// are reported in `flagged` and excluded from the maximum.
GradCheckResult grad_check(const FusionBlockParams& params, const FeatureMap& f_high,
                           const FeatureMap& f_mem, double epsilon,
                           std::uint64_t seed = 7);

}  // namespace vidseg
