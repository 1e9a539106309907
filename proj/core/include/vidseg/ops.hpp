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

// Differentiable operations over `Tensor`. Feature maps are NCHW; token
// sequences are (batch, length, channels).
namespace vidseg::nn {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
// Multiplies every element by the single element of `s`.
Tensor scale_by(const Tensor& x, const Tensor& s);
Tensor relu(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum_i weights[i] * x[i]; weights are constants.
Tensor weighted_sum(const Tensor& x, const std::vector<double>& weights);

// x: (N, Cin, H, W), w: (Cout, Cin, k, k), bias: (Cout) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad);

// Non-overlapping transposed convolution (kernel == stride).
// x: (N, Cin, H, W), w: (Cin, Cout, s, s) -> (N, Cout, H*s, W*s).
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        int stride);

struct BatchMoments {
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

// Training-mode batch norm over (N, H, W). Batch moments are written to
// `moments` when non-null.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        double eps, BatchMoments* moments);
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<double>& mean,
                       const std::vector<double>& var, double eps);

// Per-location channel mixing: out[n, r, p] = sum_c m[r, c] * x[n, c, p].
Tensor channel_mix(const Tensor& x, const Tensor& m);

// out[n, c, p] = x[n, c, p] * s[c].
Tensor mul_channel(const Tensor& x, const Tensor& s);

Tensor softmax_channels(const Tensor& x);

Tensor to_tokens(const Tensor& x);                 // (N,C,H,W) -> (N,HW,C)
Tensor from_tokens(const Tensor& t, int h, int w); // (N,HW,C) -> (N,C,H,W)

// Affine map over the last axis: x (..., K), w (K, D), bias (D) or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
// Broadcast add of v (C) over the last axis of x.
Tensor add_row(const Tensor& x, const Tensor& v);

// Concatenation along axis 1.
Tensor concat(const std::vector<Tensor>& parts);

Tensor global_avg_pool(const Tensor& x);     // (N,C,H,W) -> (N,C)
Tensor avg_pool(const Tensor& x, int k);     // non-overlapping k x k

// Multi-head scaled dot-product attention. q: (N,M,D), k/v: (N,L,D).
// When `weights` is non-null it receives the (N, heads, M, L) softmax weights.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 std::vector<double>* weights = nullptr);

// out[n, c, p] = sum_k masks[n, k, p] * emb[n, k, c].
Tensor mask_embed(const Tensor& masks, const Tensor& emb);
// out[n, k, p] = sum_c u[n, c, p] * emb[n, k, c].
Tensor pixel_dot(const Tensor& u, const Tensor& emb);

// out[n, k, :] = on_mask[n, k] ? a[n, k, :] + on[k, :] : off[k, :]
Tensor select_embedding(const Tensor& a, const Tensor& on, const Tensor& off,
                        const std::vector<double>& on_mask);

}  // namespace vidseg::nn
