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

#include "vidseg/fusion.hpp"

#include <cmath>

#include "vidseg/errors.hpp"
#include "vidseg/ops.hpp"

namespace vidseg {

namespace {

void require_finite(const Tensor& t, const char* what) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + " contains non-finite values");
  }
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (double& e : v) e = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

FeatureMap::FeatureMap(Tensor t, int s) : data(std::move(t)), stride(s) {
  if (!data.defined() || data.rank() != 4) {
    throw DimensionError("feature map must be rank 4, got " +
                         (data.defined() ? shape_str(data.shape()) : std::string("undefined")));
  }
  if (stride <= 0) throw ConfigError("feature map stride must be positive");
}

BatchNorm BatchNorm::make(int channels) {
  BatchNorm bn;
  bn.gamma = Tensor::full({channels}, 1.0, true);
  bn.beta = Tensor::zeros({channels}, true);
  bn.running_mean.assign(channels, 0.0);
  bn.running_var.assign(channels, 1.0);
  return bn;
}

Tensor BatchNorm::forward(const Tensor& x) {
  switch (mode) {
    case BatchNormMode::Identity:
      return x;
    case BatchNormMode::Eval:
      return nn::batch_norm_eval(x, gamma, beta, running_mean, running_var, eps);
    case BatchNormMode::Train: {
      nn::BatchMoments moments;
      Tensor out = nn::batch_norm_train(x, gamma, beta, eps, &moments);
      const double count = static_cast<double>(x.size()) / static_cast<double>(x.dim(1));
      const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
      for (std::size_t c = 0; c < running_mean.size(); ++c) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * moments.mean[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * moments.var[c] * unbias;
      }
      return out;
    }
  }
  return x;
}

BatchNorm BatchNorm::clone() const {
  BatchNorm out = *this;
  out.gamma = gamma.clone();
  out.beta = beta.clone();
  return out;
}

ConvBn ConvBn::make(int channels, int kernel, Rng& rng) {
  ConvBn cb;
  // Center-tap identity plus small noise, so a fresh block starts close to an
  // additive skip instead of scrambling the features it fuses.
  const int taps = kernel * kernel;
  const double bound = 0.1 * std::sqrt(6.0 / (taps * channels));
  cb.weight = uniform_tensor({channels, channels, kernel, kernel}, bound, rng);
  auto w = cb.weight.mutable_values();
  for (int c = 0; c < channels; ++c) w[(static_cast<std::size_t>(c) * channels + c) * taps + taps / 2] += 1.0;
  cb.bn = BatchNorm::make(channels);
  return cb;
}

ConvBn ConvBn::identity(int channels, int kernel) {
  ConvBn cb;
  const int taps = kernel * kernel;
  cb.weight = Tensor::zeros({channels, channels, kernel, kernel}, true);
  auto w = cb.weight.mutable_values();
  for (int c = 0; c < channels; ++c) w[(static_cast<std::size_t>(c) * channels + c) * taps + taps / 2] = 1.0;
  cb.bn = BatchNorm::make(channels);
  cb.bn.mode = BatchNormMode::Identity;
  return cb;
}

Tensor ConvBn::forward(const Tensor& x) {
  return bn.forward(nn::conv2d(x, weight, Tensor(), 1, weight.dim(2) / 2));
}

ConvBn ConvBn::clone() const {
  ConvBn out;
  out.weight = weight.clone();
  out.bn = bn.clone();
  return out;
}

FusionBlockParams FusionBlockParams::create(int d, int r, double alpha, Rng& rng,
                                            bool alpha_trainable) {
  FusionBlockParams p;
  p.d = d;
  p.r = r;
  p.alpha = Tensor::full({1}, alpha, alpha_trainable);
  p.residual = ConvBn::make(d, kResidualKernel, rng);
  p.main = ConvBn::make(d, kMainKernel, rng);
  p.A = uniform_tensor({r, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  p.B = Tensor::zeros({d, r}, true);
  p.validate();
  return p;
}

FusionBlockParams FusionBlockParams::identity(int d, int r, double alpha) {
  FusionBlockParams p;
  p.d = d;
  p.r = r;
  p.alpha = Tensor::full({1}, alpha, false);
  p.residual = ConvBn::identity(d, kResidualKernel);
  p.main = ConvBn::identity(d, kMainKernel);
  p.A = Tensor::zeros({r, d}, true);
  p.B = Tensor::zeros({d, r}, true);
  p.validate();
  return p;
}

void FusionBlockParams::validate() const {
  if (d <= 0 || r <= 0) throw ConfigError("fusion block: d and r must be positive");
  if (r >= d) {
    throw ConfigError("fusion block: LoRA rank " + std::to_string(r) +
                      " must be smaller than width " + std::to_string(d));
  }
  if (A.shape() != Shape{r, d}) {
    throw ConfigError("fusion block: A has shape " + shape_str(A.shape()) + ", expected " +
                      shape_str({r, d}));
  }
  if (B.shape() != Shape{d, r}) {
    throw ConfigError("fusion block: B has shape " + shape_str(B.shape()) + ", expected " +
                      shape_str({d, r}));
  }
  if (!alpha.defined() || alpha.size() != 1) throw ConfigError("fusion block: alpha must be a scalar");
  const Shape res{d, d, kResidualKernel, kResidualKernel};
  const Shape main_shape{d, d, kMainKernel, kMainKernel};
  if (residual.weight.shape() != res) {
    throw ConfigError("fusion block: residual weight must be " + shape_str(res));
  }
  if (main.weight.shape() != main_shape) {
    throw ConfigError("fusion block: main weight must be " + shape_str(main_shape));
  }
}

void FusionBlockParams::set_bn_mode(BatchNormMode mode) {
  residual.bn.mode = mode;
  main.bn.mode = mode;
}

FusionBlockParams FusionBlockParams::clone() const {
  FusionBlockParams p = *this;
  p.alpha = alpha.clone();
  p.residual = residual.clone();
  p.main = main.clone();
  p.A = A.clone();
  p.B = B.clone();
  return p;
}

NamedTensors FusionBlockParams::named_parameters(const std::string& prefix) const {
  NamedTensors out{
      {prefix + "residual.weight", residual.weight},
      {prefix + "residual.bn.gamma", residual.bn.gamma},
      {prefix + "residual.bn.beta", residual.bn.beta},
      {prefix + "main.weight", main.weight},
      {prefix + "main.bn.gamma", main.bn.gamma},
      {prefix + "main.bn.beta", main.bn.beta},
      {prefix + "lora.A", A},
      {prefix + "lora.B", B},
  };
  if (alpha.requires_grad()) out.emplace_back(prefix + "lora.alpha", alpha);
  return out;
}

NamedTensors FusionBlockParams::named_buffers(const std::string& prefix) const {
  auto vec = [](const std::vector<double>& v) {
    return Tensor::from({static_cast<int>(v.size())}, v);
  };
  NamedTensors out{
      {prefix + "residual.bn.running_mean", vec(residual.bn.running_mean)},
      {prefix + "residual.bn.running_var", vec(residual.bn.running_var)},
      {prefix + "main.bn.running_mean", vec(main.bn.running_mean)},
      {prefix + "main.bn.running_var", vec(main.bn.running_var)},
  };
  if (!alpha.requires_grad()) out.emplace_back(prefix + "lora.alpha", alpha);
  return out;
}

void FusionBlockParams::load_buffers(const std::string& prefix, const NamedTensors& buffers) {
  for (const auto& [name, t] : buffers) {
    auto assign = [&](std::vector<double>& dst) {
      if (t.size() != dst.size()) throw VersionError("buffer " + name + " has wrong size");
      dst.assign(t.values().begin(), t.values().end());
    };
    if (name == prefix + "residual.bn.running_mean") assign(residual.bn.running_mean);
    else if (name == prefix + "residual.bn.running_var") assign(residual.bn.running_var);
    else if (name == prefix + "main.bn.running_mean") assign(main.bn.running_mean);
    else if (name == prefix + "main.bn.running_var") assign(main.bn.running_var);
    else if (name == prefix + "lora.alpha" && !alpha.requires_grad()) {
      if (t.size() != 1) throw VersionError("buffer " + name + " has wrong size");
      alpha.mutable_values()[0] = t.values()[0];
    }
  }
}

namespace {

void check_fusion_inputs(const FeatureMap& f_high, const FeatureMap& f_mem,
                         const FusionBlockParams& params) {
  if (f_high.data.shape() != f_mem.data.shape() || f_high.stride != f_mem.stride) {
    throw DimensionError("residual_fuse: f_high " + shape_str(f_high.data.shape()) + " @" +
                         std::to_string(f_high.stride) + " vs f_mem " +
                         shape_str(f_mem.data.shape()) + " @" + std::to_string(f_mem.stride));
  }
  if (f_high.channels() != params.d) {
    throw DimensionError("residual_fuse: input " + shape_str(f_high.data.shape()) +
                         " has channel count != block width " + std::to_string(params.d));
  }
  require_finite(f_high.data, "residual_fuse: f_high");
  require_finite(f_mem.data, "residual_fuse: f_mem");
}

}  // namespace

FeatureMap residual_fuse(const FeatureMap& f_high, const FeatureMap& f_mem,
                         FusionBlockParams& params) {
  check_fusion_inputs(f_high, f_mem, params);
  return {nn::relu(nn::add(params.residual.forward(f_high.data), f_mem.data)), f_high.stride};
}

Tensor lora_branch(const Tensor& x, const FusionBlockParams& params) {
  params.validate();
  return nn::scale_by(nn::channel_mix(nn::channel_mix(x, params.A), params.B), params.alpha);
}

FeatureMap lora_modulate(const FeatureMap& f_res, FusionBlockParams& params) {
  params.validate();
  if (f_res.channels() != params.d) {
    throw DimensionError("lora_modulate: input " + shape_str(f_res.data.shape()) +
                         " has channel count != block width " + std::to_string(params.d));
  }
  Tensor out = params.main.forward(f_res.data);
  if (params.lora_enabled) out = nn::add(out, lora_branch(f_res.data, params));
  return {out, f_res.stride};
}

FusionOutput fusion_forward(const FeatureMap& f_high, const FeatureMap& f_mem,
                            FusionBlockParams& params, bool keep_intermediates) {
  params.validate();
  if (!keep_intermediates) {
    return {lora_modulate(residual_fuse(f_high, f_mem, params), params), std::nullopt};
  }
  check_fusion_inputs(f_high, f_mem, params);
  FusionIntermediates mid;
  mid.pre_activation = nn::add(params.residual.forward(f_high.data), f_mem.data);
  mid.residual_out = nn::relu(mid.pre_activation);
  Tensor out = params.main.forward(mid.residual_out);
  if (params.lora_enabled) {
    mid.lora_branch = lora_branch(mid.residual_out, params);
    out = nn::add(out, mid.lora_branch);
  }
  return {FeatureMap(out, f_high.stride), mid};
}

std::size_t trainable_param_count(const FusionBlockParams& params, bool lora_only) {
  const std::size_t d = params.d, r = params.r;
  const std::size_t lora = 2 * r * d;
  if (lora_only) return lora;
  const std::size_t taps = kResidualKernel * kResidualKernel + kMainKernel * kMainKernel;
  const std::size_t conv_bn = taps * d * d + 4 * d;
  return conv_bn + lora + (params.alpha.requires_grad() ? 1 : 0);
}

GradCheckResult grad_check(const FusionBlockParams& params, const FeatureMap& f_high,
                           const FeatureMap& f_mem, double epsilon, std::uint64_t seed) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw ValidationError("grad_check: epsilon " + std::to_string(epsilon) +
                          " outside [1e-6, 1e-3]");
  }
  if (f_high.height() > 8 || f_high.width() > 8) {
    throw ValidationError("grad_check: inputs larger than 8x8 are not supported");
  }
  FusionBlockParams p = params.clone();
  FeatureMap high(f_high.data.clone(), f_high.stride);
  FeatureMap mem(f_mem.data.clone(), f_mem.stride);

  Rng rng(seed);
  std::vector<double> proj(f_high.data.size());
  for (double& w : proj) w = rng.uniform(-1.0, 1.0);

  auto objective = [&](std::vector<char>* branches) {
    FusionOutput out = fusion_forward(high, mem, p, true);
    if (branches) {
      for (double v : out.intermediates->pre_activation.values()) branches->push_back(v > 0.0);
    }
    return nn::weighted_sum(out.value.data, proj);
  };
  std::vector<Tensor> wrt{high.data,     mem.data,      p.residual.weight, p.residual.bn.gamma,
                          p.residual.bn.beta, p.main.weight, p.main.bn.gamma, p.main.bn.beta,
                          p.A,           p.B};
  if (p.alpha.requires_grad()) wrt.push_back(p.alpha);
  return gradcheck(objective, wrt, epsilon);
}

}  // namespace vidseg
