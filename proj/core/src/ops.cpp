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

#include "vidseg/ops.hpp"

#include <algorithm>
#include <cmath>

#include "vidseg/errors.hpp"

namespace vidseg::nn {

namespace {

double* grad_of(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  return t.node()->ensure_grad().data();
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " +
                         std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// First index i of an output axis with 0 <= i*stride - pad + k < in.
int first_valid(int k, int stride, int pad) {
  int num = pad - k;
  if (num <= 0) return 0;
  return (num + stride - 1) / stride;
}

int last_valid(int k, int stride, int pad, int in, int out) {
  int num = in - 1 + pad - k;
  if (num < 0) return -1;
  return std::min(out - 1, num / stride);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> v(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  return Tensor::make_result(a.shape(), std::move(v), {a, b}, [a, b](detail::Node& self) {
    for (const Tensor* t : {&a, &b}) {
      if (double* g = grad_of(*t)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> v(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  return Tensor::make_result(a.shape(), std::move(v), {a, b}, [a, b](detail::Node& self) {
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> v(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  return Tensor::make_result(a.shape(), std::move(v), {a, b}, [a, b](detail::Node& self) {
    auto av = a.values(), bv = b.values();
    if (double* g = grad_of(a)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = grad_of(b)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  std::vector<double> v(x.values().begin(), x.values().end());
  for (double& e : v) e *= s;
  return Tensor::make_result(x.shape(), std::move(v), {x}, [x, s](detail::Node& self) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad[i];
    }
  });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("scale_by: scale must have one element");
  const double sv = s.values()[0];
  std::vector<double> v(x.values().begin(), x.values().end());
  for (double& e : v) e *= sv;
  return Tensor::make_result(x.shape(), std::move(v), {x, s}, [x, s](detail::Node& self) {
    double* gx = grad_of(x);
    double* gs = grad_of(s);
    const double sv = s.values()[0];
    auto xv = x.values();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (gx) gx[i] += sv * self.grad[i];
      if (gs) gs[0] += xv[i] * self.grad[i];
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> v(x.values().begin(), x.values().end());
  for (double& e : v) e = e > 0.0 ? e : 0.0;
  return Tensor::make_result(x.shape(), std::move(v), {x}, [x](detail::Node& self) {
    if (double* g = grad_of(x)) {
      auto xv = x.values();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (xv[i] > 0.0) g[i] += self.grad[i];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> v(x.values().begin(), x.values().end());
  return Tensor::make_result(std::move(shape), std::move(v), {x}, [x](detail::Node& self) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double e : x.values()) s += e;
  return Tensor::make_result({1}, {s}, {x}, [x](detail::Node& self) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor weighted_sum(const Tensor& x, const std::vector<double>& weights) {
  if (weights.size() != x.size()) throw DimensionError("weighted_sum: weight count mismatch");
  double s = 0.0;
  auto xv = x.values();
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * xv[i];
  return Tensor::make_result({1}, {s}, {x}, [x, weights](detail::Node& self) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < weights.size(); ++i) g[i] += self.grad[0] * weights[i];
    }
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != k) {
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) +
                         " incompatible with input " + shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (wd + 2 * pad - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw DimensionError("conv2d: empty output for " + shape_str(x.shape()));

  std::vector<double> out(static_cast<std::size_t>(n) * cout * oh * ow, 0.0);
  auto xv = x.values();
  auto wv = w.values();
  const std::size_t in_plane = static_cast<std::size_t>(h) * wd;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;

  for (int b = 0; b < n; ++b) {
    for (int co = 0; co < cout; ++co) {
      double* o = out.data() + (static_cast<std::size_t>(b) * cout + co) * out_plane;
      if (bias.defined()) std::fill(o, o + out_plane, bias.values()[co]);
      for (int ci = 0; ci < cin; ++ci) {
        const double* in = xv.data() + (static_cast<std::size_t>(b) * cin + ci) * in_plane;
        const double* kw = wv.data() + (static_cast<std::size_t>(co) * cin + ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          const int oy0 = first_valid(ky, stride, pad);
          const int oy1 = last_valid(ky, stride, pad, h, oh);
          for (int kx = 0; kx < k; ++kx) {
            const double wt = kw[ky * k + kx];
            const int ox0 = first_valid(kx, stride, pad);
            const int ox1 = last_valid(kx, stride, pad, wd, ow);
            for (int oy = oy0; oy <= oy1; ++oy) {
              const double* row = in + static_cast<std::size_t>(oy * stride - pad + ky) * wd;
              double* orow = o + static_cast<std::size_t>(oy) * ow;
              for (int ox = ox0; ox <= ox1; ++ox) orow[ox] += wt * row[ox * stride - pad + kx];
            }
          }
        }
      }
    }
  }

  return Tensor::make_result(
      {n, cout, oh, ow}, std::move(out), {x, w, bias},
      [x, w, bias, n, cin, h, wd, cout, k, oh, ow, stride, pad, in_plane,
       out_plane](detail::Node& self) {
        double* gx = grad_of(x);
        double* gw = grad_of(w);
        double* gb = grad_of(bias);
        auto xv = x.values();
        auto wv = w.values();
        const double* gy = self.grad.data();
        for (int b = 0; b < n; ++b) {
          for (int co = 0; co < cout; ++co) {
            const double* go = gy + (static_cast<std::size_t>(b) * cout + co) * out_plane;
            if (gb) {
              double s = 0.0;
              for (std::size_t i = 0; i < out_plane; ++i) s += go[i];
              gb[co] += s;
            }
            for (int ci = 0; ci < cin; ++ci) {
              const std::size_t in_off = (static_cast<std::size_t>(b) * cin + ci) * in_plane;
              const std::size_t w_off = (static_cast<std::size_t>(co) * cin + ci) * k * k;
              for (int ky = 0; ky < k; ++ky) {
                const int oy0 = first_valid(ky, stride, pad);
                const int oy1 = last_valid(ky, stride, pad, h, oh);
                for (int kx = 0; kx < k; ++kx) {
                  const int ox0 = first_valid(kx, stride, pad);
                  const int ox1 = last_valid(kx, stride, pad, wd, ow);
                  const double wt = wv[w_off + ky * k + kx];
                  double acc = 0.0;
                  for (int oy = oy0; oy <= oy1; ++oy) {
                    const std::size_t row = in_off + static_cast<std::size_t>(oy * stride - pad + ky) * wd;
                    const double* grow = go + static_cast<std::size_t>(oy) * ow;
                    for (int ox = ox0; ox <= ox1; ++ox) {
                      const std::size_t ix = row + ox * stride - pad + kx;
                      acc += grow[ox] * xv[ix];
                      if (gx) gx[ix] += wt * grow[ox];
                    }
                  }
                  if (gw) gw[w_off + ky * k + kx] += acc;
                }
              }
            }
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
  require_rank(x, 4, "conv_transpose2d input");
  require_rank(w, 4, "conv_transpose2d weight");
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(1), s = stride;
  if (w.dim(0) != cin || w.dim(2) != s || w.dim(3) != s) {
    throw DimensionError("conv_transpose2d: weight " + shape_str(w.shape()) +
                         " incompatible with input " + shape_str(x.shape()) +
                         " and stride " + std::to_string(s));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv_transpose2d: bias shape " + shape_str(bias.shape()));
  }
  const int oh = h * s, ow = wd * s;
  const std::size_t in_plane = static_cast<std::size_t>(h) * wd;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  std::vector<double> out(static_cast<std::size_t>(n) * cout * out_plane, 0.0);
  auto xv = x.values();
  auto wv = w.values();
  for (int b = 0; b < n; ++b) {
    for (int co = 0; co < cout; ++co) {
      double* o = out.data() + (static_cast<std::size_t>(b) * cout + co) * out_plane;
      if (bias.defined()) std::fill(o, o + out_plane, bias.values()[co]);
      for (int ci = 0; ci < cin; ++ci) {
        const double* in = xv.data() + (static_cast<std::size_t>(b) * cin + ci) * in_plane;
        const double* kw = wv.data() + (static_cast<std::size_t>(ci) * cout + co) * s * s;
        for (int y = 0; y < h; ++y) {
          for (int ky = 0; ky < s; ++ky) {
            double* orow = o + static_cast<std::size_t>(y * s + ky) * ow;
            for (int xx = 0; xx < wd; ++xx) {
              const double v = in[y * wd + xx];
              for (int kx = 0; kx < s; ++kx) orow[xx * s + kx] += v * kw[ky * s + kx];
            }
          }
        }
      }
    }
  }
  return Tensor::make_result(
      {n, cout, oh, ow}, std::move(out), {x, w, bias},
      [x, w, bias, n, cin, h, wd, cout, s, ow, in_plane, out_plane](detail::Node& self) {
        double* gx = grad_of(x);
        double* gw = grad_of(w);
        double* gb = grad_of(bias);
        auto xv = x.values();
        auto wv = w.values();
        for (int b = 0; b < n; ++b) {
          for (int co = 0; co < cout; ++co) {
            const double* go = self.grad.data() + (static_cast<std::size_t>(b) * cout + co) * out_plane;
            if (gb) {
              double acc = 0.0;
              for (std::size_t i = 0; i < out_plane; ++i) acc += go[i];
              gb[co] += acc;
            }
            for (int ci = 0; ci < cin; ++ci) {
              const std::size_t in_off = (static_cast<std::size_t>(b) * cin + ci) * in_plane;
              const std::size_t w_off = (static_cast<std::size_t>(ci) * cout + co) * s * s;
              for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < wd; ++xx) {
                  const double v = xv[in_off + y * wd + xx];
                  double gin = 0.0;
                  for (int ky = 0; ky < s; ++ky) {
                    const double* grow = go + static_cast<std::size_t>(y * s + ky) * ow + xx * s;
                    for (int kx = 0; kx < s; ++kx) {
                      gin += grow[kx] * wv[w_off + ky * s + kx];
                      if (gw) gw[w_off + ky * s + kx] += grow[kx] * v;
                    }
                  }
                  if (gx) gx[in_off + y * wd + xx] += gin;
                }
              }
            }
          }
        }
      });
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        double eps, BatchMoments* moments) {
  require_rank(x, 4, "batch_norm input");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != static_cast<std::size_t>(c)) {
    throw DimensionError("batch_norm: affine size mismatch for " + shape_str(x.shape()));
  }
  const double m = static_cast<double>(n) * static_cast<double>(plane);
  auto xv = x.values();
  std::vector<double> mu(c, 0.0), var(c, 0.0), inv_std(c);
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int b = 0; b < n; ++b) {
      const double* p = xv.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
    }
    mu[ch] = s / m;
    double q = 0.0;
    for (int b = 0; b < n; ++b) {
      const double* p = xv.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) q += (p[i] - mu[ch]) * (p[i] - mu[ch]);
    }
    var[ch] = q / m;
    inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
  }
  std::vector<double> xhat(x.size()), out(x.size());
  auto gv = gamma.values(), bv = beta.values();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[off + i] = (xv[off + i] - mu[ch]) * inv_std[ch];
        out[off + i] = gv[ch] * xhat[off + i] + bv[ch];
      }
    }
  }
  if (moments) *moments = {mu, var};
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std, n, c, plane, m](detail::Node& self) {
        double* gx = grad_of(x);
        double* gg = grad_of(gamma);
        double* gb = grad_of(beta);
        auto gv = gamma.values();
        const double* gy = self.grad.data();
        for (int ch = 0; ch < c; ++ch) {
          double sum_gy = 0.0, sum_gy_xhat = 0.0;
          for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_gy += gy[off + i];
              sum_gy_xhat += gy[off + i] * xhat[off + i];
            }
          }
          if (gg) gg[ch] += sum_gy_xhat;
          if (gb) gb[ch] += sum_gy;
          if (gx) {
            const double k = gv[ch] * inv_std[ch] / m;
            for (int b = 0; b < n; ++b) {
              const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
              for (std::size_t i = 0; i < plane; ++i) {
                gx[off + i] += k * (m * gy[off + i] - sum_gy - xhat[off + i] * sum_gy_xhat);
              }
            }
          }
        }
      });
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<double>& mean, const std::vector<double>& var,
                       double eps) {
  require_rank(x, 4, "batch_norm input");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  if (gamma.size() != static_cast<std::size_t>(c) || mean.size() != static_cast<std::size_t>(c) ||
      var.size() != static_cast<std::size_t>(c)) {
    throw DimensionError("batch_norm: statistics size mismatch for " + shape_str(x.shape()));
  }
  std::vector<double> inv_std(c);
  for (int ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
  auto xv = x.values();
  auto gv = gamma.values(), bv = beta.values();
  std::vector<double> out(x.size());
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        out[off + i] = gv[ch] * (xv[off + i] - mean[ch]) * inv_std[ch] + bv[ch];
      }
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, mean, inv_std, n, c, plane](detail::Node& self) {
        double* gx = grad_of(x);
        double* gg = grad_of(gamma);
        double* gb = grad_of(beta);
        auto xv = x.values();
        auto gv = gamma.values();
        for (int b = 0; b < n; ++b) {
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double gy = self.grad[off + i];
              const double xh = (xv[off + i] - mean[ch]) * inv_std[ch];
              if (gx) gx[off + i] += gy * gv[ch] * inv_std[ch];
              if (gg) gg[ch] += gy * xh;
              if (gb) gb[ch] += gy;
            }
          }
        }
      });
}

Tensor channel_mix(const Tensor& x, const Tensor& m) {
  require_rank(x, 4, "channel_mix input");
  require_rank(m, 2, "channel_mix matrix");
  const int n = x.dim(0), c = x.dim(1), r = m.dim(0);
  if (m.dim(1) != c) {
    throw DimensionError("channel_mix: matrix " + shape_str(m.shape()) +
                         " incompatible with input " + shape_str(x.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<double> out(static_cast<std::size_t>(n) * r * plane, 0.0);
  auto xv = x.values(), mv = m.values();
  for (int b = 0; b < n; ++b) {
    for (int ri = 0; ri < r; ++ri) {
      double* o = out.data() + (static_cast<std::size_t>(b) * r + ri) * plane;
      for (int ci = 0; ci < c; ++ci) {
        const double wt = mv[static_cast<std::size_t>(ri) * c + ci];
        const double* in = xv.data() + (static_cast<std::size_t>(b) * c + ci) * plane;
        for (std::size_t i = 0; i < plane; ++i) o[i] += wt * in[i];
      }
    }
  }
  return Tensor::make_result(
      {n, r, x.dim(2), x.dim(3)}, std::move(out), {x, m},
      [x, m, n, c, r, plane](detail::Node& self) {
        double* gx = grad_of(x);
        double* gm = grad_of(m);
        auto xv = x.values(), mv = m.values();
        for (int b = 0; b < n; ++b) {
          for (int ri = 0; ri < r; ++ri) {
            const double* go = self.grad.data() + (static_cast<std::size_t>(b) * r + ri) * plane;
            for (int ci = 0; ci < c; ++ci) {
              const std::size_t in_off = (static_cast<std::size_t>(b) * c + ci) * plane;
              const double wt = mv[static_cast<std::size_t>(ri) * c + ci];
              double acc = 0.0;
              for (std::size_t i = 0; i < plane; ++i) {
                acc += go[i] * xv[in_off + i];
                if (gx) gx[in_off + i] += wt * go[i];
              }
              if (gm) gm[static_cast<std::size_t>(ri) * c + ci] += acc;
            }
          }
        }
      });
}

Tensor mul_channel(const Tensor& x, const Tensor& s) {
  require_rank(x, 4, "mul_channel input");
  const int n = x.dim(0), c = x.dim(1);
  if (s.size() != static_cast<std::size_t>(c)) throw DimensionError("mul_channel: scale size mismatch");
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<double> out(x.size());
  auto xv = x.values(), sv = s.values();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[off + i] = xv[off + i] * sv[ch];
    }
  }
  return Tensor::make_result(x.shape(), std::move(out), {x, s}, [x, s, n, c, plane](detail::Node& self) {
    double* gx = grad_of(x);
    double* gs = grad_of(s);
    auto xv = x.values(), sv = s.values();
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          if (gx) gx[off + i] += self.grad[off + i] * sv[ch];
          if (gs) gs[ch] += self.grad[off + i] * xv[off + i];
        }
      }
    }
  });
}

Tensor softmax_channels(const Tensor& x) {
  require_rank(x, 4, "softmax_channels input");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = xv[base + i];
      for (int ch = 1; ch < c; ++ch) mx = std::max(mx, xv[base + ch * plane + i]);
      double z = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double e = std::exp(xv[base + ch * plane + i] - mx);
        out[base + ch * plane + i] = e;
        z += e;
      }
      for (int ch = 0; ch < c; ++ch) out[base + ch * plane + i] /= z;
    }
  }
  std::vector<double> probs = out;
  return Tensor::make_result(
      x.shape(), std::move(out), {x}, [x, probs = std::move(probs), n, c, plane](detail::Node& self) {
        double* gx = grad_of(x);
        if (!gx) return;
        for (int b = 0; b < n; ++b) {
          const std::size_t base = static_cast<std::size_t>(b) * c * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            double dot = 0.0;
            for (int ch = 0; ch < c; ++ch) {
              dot += self.grad[base + ch * plane + i] * probs[base + ch * plane + i];
            }
            for (int ch = 0; ch < c; ++ch) {
              const std::size_t j = base + ch * plane + i;
              gx[j] += probs[j] * (self.grad[j] - dot);
            }
          }
        }
      });
}

Tensor to_tokens(const Tensor& x) {
  require_rank(x, 4, "to_tokens input");
  const int n = x.dim(0), c = x.dim(1);
  const int plane = x.dim(2) * x.dim(3);
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int p = 0; p < plane; ++p)
        out[(static_cast<std::size_t>(b) * plane + p) * c + ch] = xv[(static_cast<std::size_t>(b) * c + ch) * plane + p];
  return Tensor::make_result({n, plane, c}, std::move(out), {x}, [x, n, c, plane](detail::Node& self) {
    if (double* g = grad_of(x)) {
      for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
          for (int p = 0; p < plane; ++p)
            g[(static_cast<std::size_t>(b) * c + ch) * plane + p] += self.grad[(static_cast<std::size_t>(b) * plane + p) * c + ch];
    }
  });
}

Tensor from_tokens(const Tensor& t, int h, int w) {
  require_rank(t, 3, "from_tokens input");
  const int n = t.dim(0), plane = t.dim(1), c = t.dim(2);
  if (plane != h * w) throw DimensionError("from_tokens: token count does not match spatial size");
  auto tv = t.values();
  std::vector<double> out(t.size());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int p = 0; p < plane; ++p)
        out[(static_cast<std::size_t>(b) * c + ch) * plane + p] = tv[(static_cast<std::size_t>(b) * plane + p) * c + ch];
  return Tensor::make_result({n, c, h, w}, std::move(out), {t}, [t, n, c, plane](detail::Node& self) {
    if (double* g = grad_of(t)) {
      for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
          for (int p = 0; p < plane; ++p)
            g[(static_cast<std::size_t>(b) * plane + p) * c + ch] += self.grad[(static_cast<std::size_t>(b) * c + ch) * plane + p];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(w, 2, "linear weight");
  const int kdim = w.dim(0), d = w.dim(1);
  if (x.rank() < 1 || x.shape().back() != kdim) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  if (bias.defined() && bias.size() != static_cast<std::size_t>(d)) {
    throw DimensionError("linear: bias size mismatch");
  }
  const std::size_t rows = x.size() / kdim;
  Shape out_shape = x.shape();
  out_shape.back() = d;
  auto xv = x.values(), wv = w.values();
  std::vector<double> out(rows * d, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data() + r * d;
    if (bias.defined()) std::copy(bias.values().begin(), bias.values().end(), o);
    for (int i = 0; i < kdim; ++i) {
      const double xi = xv[r * kdim + i];
      const double* wr = wv.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) o[j] += xi * wr[j];
    }
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), {x, w, bias},
                             [x, w, bias, rows, kdim, d](detail::Node& self) {
    double* gx = grad_of(x);
    double* gw = grad_of(w);
    double* gb = grad_of(bias);
    auto xv = x.values(), wv = w.values();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* go = self.grad.data() + r * d;
      if (gb) for (int j = 0; j < d; ++j) gb[j] += go[j];
      for (int i = 0; i < kdim; ++i) {
        const double* wr = wv.data() + static_cast<std::size_t>(i) * d;
        if (gx) {
          double acc = 0.0;
          for (int j = 0; j < d; ++j) acc += go[j] * wr[j];
          gx[r * kdim + i] += acc;
        }
        if (gw) {
          const double xi = xv[r * kdim + i];
          double* gwr = gw + static_cast<std::size_t>(i) * d;
          for (int j = 0; j < d; ++j) gwr[j] += xi * go[j];
        }
      }
    }
  });
}

Tensor add_row(const Tensor& x, const Tensor& v) {
  const std::size_t c = v.size();
  if (x.rank() < 1 || static_cast<std::size_t>(x.shape().back()) != c) {
    throw DimensionError("add_row: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
  }
  auto xv = x.values(), vv = v.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + vv[i % c];
  return Tensor::make_result(x.shape(), std::move(out), {x, v}, [x, v, c](detail::Node& self) {
    double* gx = grad_of(x);
    double* gv = grad_of(v);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (gx) gx[i] += self.grad[i];
      if (gv) gv[i % c] += self.grad[i];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (first.size() < 2) throw DimensionError("concat: rank must be >= 2");
  const int n = first[0];
  std::size_t inner = 1;
  for (std::size_t i = 2; i < first.size(); ++i) inner *= first[i];
  int total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || s[0] != n ||
        !std::equal(s.begin() + 2, s.end(), first.begin() + 2)) {
      throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
    }
    total += s[1];
  }
  Shape out_shape = first;
  out_shape[1] = total;
  std::vector<double> out(numel(out_shape));
  std::vector<int> offsets;
  int off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const int len = p.dim(1);
    auto pv = p.values();
    for (int b = 0; b < n; ++b) {
      std::copy_n(pv.data() + static_cast<std::size_t>(b) * len * inner, len * inner,
                  out.data() + (static_cast<std::size_t>(b) * total + off) * inner);
    }
    off += len;
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), parts,
                             [parts, offsets, n, total, inner](detail::Node& self) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      double* g = grad_of(parts[k]);
      if (!g) continue;
      const int len = parts[k].dim(1);
      for (int b = 0; b < n; ++b) {
        const double* src = self.grad.data() + (static_cast<std::size_t>(b) * total + offsets[k]) * inner;
        double* dst = g + static_cast<std::size_t>(b) * len * inner;
        for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool input");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  auto xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(n) * c, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += xv[i * plane + p];
    out[i] = s / static_cast<double>(plane);
  }
  return Tensor::make_result({n, c}, std::move(out), {x}, [x, plane](detail::Node& self) {
    if (double* g = grad_of(x)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const double gi = self.grad[i] / static_cast<double>(plane);
        for (std::size_t p = 0; p < plane; ++p) g[i * plane + p] += gi;
      }
    }
  });
}

Tensor avg_pool(const Tensor& x, int k) {
  require_rank(x, 4, "avg_pool input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k <= 0 || h % k != 0 || w % k != 0) {
    throw DimensionError("avg_pool: window " + std::to_string(k) + " does not tile " + shape_str(x.shape()));
  }
  const int oh = h / k, ow = w / k;
  const double inv = 1.0 / (static_cast<double>(k) * k);
  auto xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(n) * c * oh * ow, 0.0);
  for (int pl = 0; pl < n * c; ++pl)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        out[(static_cast<std::size_t>(pl) * oh + y / k) * ow + xx / k] +=
            inv * xv[(static_cast<std::size_t>(pl) * h + y) * w + xx];
  return Tensor::make_result({n, c, oh, ow}, std::move(out), {x}, [x, n, c, h, w, k, oh, ow, inv](detail::Node& self) {
    if (double* g = grad_of(x)) {
      for (int pl = 0; pl < n * c; ++pl)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx)
            g[(static_cast<std::size_t>(pl) * h + y) * w + xx] +=
                inv * self.grad[(static_cast<std::size_t>(pl) * oh + y / k) * ow + xx / k];
    }
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 std::vector<double>* weights) {
  require_rank(q, 3, "attention query");
  require_rank(k, 3, "attention key");
  require_rank(v, 3, "attention value");
  const int n = q.dim(0), m = q.dim(1), d = q.dim(2), l = k.dim(1);
  if (k.dim(0) != n || v.dim(0) != n || k.dim(2) != d || v.dim(2) != d || v.dim(1) != l) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                         ", v " + shape_str(v.shape()));
  }
  if (heads <= 0 || d % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide width " +
                      std::to_string(d));
  }
  const int dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  auto qv = q.values(), kv = k.values(), vv = v.values();
  std::vector<double> probs(static_cast<std::size_t>(n) * heads * m * l);
  std::vector<double> out(static_cast<std::size_t>(n) * m * d, 0.0);
  for (int b = 0; b < n; ++b) {
    for (int hd = 0; hd < heads; ++hd) {
      for (int i = 0; i < m; ++i) {
        double* row = probs.data() + ((static_cast<std::size_t>(b) * heads + hd) * m + i) * l;
        const double* qi = qv.data() + (static_cast<std::size_t>(b) * m + i) * d + hd * dh;
        double mx = -1e300;
        for (int j = 0; j < l; ++j) {
          const double* kj = kv.data() + (static_cast<std::size_t>(b) * l + j) * d + hd * dh;
          double s = 0.0;
          for (int e = 0; e < dh; ++e) s += qi[e] * kj[e];
          row[j] = s * sc;
          mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (int j = 0; j < l; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        double* oi = out.data() + (static_cast<std::size_t>(b) * m + i) * d + hd * dh;
        for (int j = 0; j < l; ++j) {
          row[j] /= z;
          const double* vj = vv.data() + (static_cast<std::size_t>(b) * l + j) * d + hd * dh;
          for (int e = 0; e < dh; ++e) oi[e] += row[j] * vj[e];
        }
      }
    }
  }
  if (weights) *weights = probs;
  return Tensor::make_result(
      {n, m, d}, std::move(out), {q, k, v},
      [q, k, v, probs = std::move(probs), n, m, d, l, heads, dh, sc](detail::Node& self) {
        double* gq = grad_of(q);
        double* gk = grad_of(k);
        double* gv = grad_of(v);
        auto qv = q.values(), kv = k.values(), vv = v.values();
        std::vector<double> dp(l), ds(l);
        for (int b = 0; b < n; ++b) {
          for (int hd = 0; hd < heads; ++hd) {
            for (int i = 0; i < m; ++i) {
              const double* row = probs.data() + ((static_cast<std::size_t>(b) * heads + hd) * m + i) * l;
              const double* go = self.grad.data() + (static_cast<std::size_t>(b) * m + i) * d + hd * dh;
              double dot = 0.0;
              for (int j = 0; j < l; ++j) {
                const std::size_t vj = (static_cast<std::size_t>(b) * l + j) * d + hd * dh;
                double s = 0.0;
                for (int e = 0; e < dh; ++e) {
                  s += go[e] * vv[vj + e];
                  if (gv) gv[vj + e] += row[j] * go[e];
                }
                dp[j] = s;
                dot += s * row[j];
              }
              for (int j = 0; j < l; ++j) ds[j] = row[j] * (dp[j] - dot) * sc;
              const std::size_t qi = (static_cast<std::size_t>(b) * m + i) * d + hd * dh;
              for (int j = 0; j < l; ++j) {
                const std::size_t kj = (static_cast<std::size_t>(b) * l + j) * d + hd * dh;
                for (int e = 0; e < dh; ++e) {
                  if (gq) gq[qi + e] += ds[j] * kv[kj + e];
                  if (gk) gk[kj + e] += ds[j] * qv[qi + e];
                }
              }
            }
          }
        }
      });
}

Tensor mask_embed(const Tensor& masks, const Tensor& emb) {
  require_rank(masks, 4, "mask_embed masks");
  require_rank(emb, 3, "mask_embed embeddings");
  const int n = masks.dim(0), kk = masks.dim(1), h = masks.dim(2), w = masks.dim(3);
  const int c = emb.dim(2);
  if (emb.dim(0) != n || emb.dim(1) != kk) {
    throw DimensionError("mask_embed: masks " + shape_str(masks.shape()) + " vs embeddings " +
                         shape_str(emb.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  auto mv = masks.values(), ev = emb.values();
  std::vector<double> out(static_cast<std::size_t>(n) * c * plane, 0.0);
  for (int b = 0; b < n; ++b)
    for (int j = 0; j < kk; ++j) {
      const double* mk = mv.data() + (static_cast<std::size_t>(b) * kk + j) * plane;
      const double* ek = ev.data() + (static_cast<std::size_t>(b) * kk + j) * c;
      for (int ch = 0; ch < c; ++ch) {
        double* o = out.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) o[p] += mk[p] * ek[ch];
      }
    }
  return Tensor::make_result({n, c, h, w}, std::move(out), {masks, emb},
                             [masks, emb, n, kk, c, plane](detail::Node& self) {
    double* gm = grad_of(masks);
    double* ge = grad_of(emb);
    auto mv = masks.values(), ev = emb.values();
    for (int b = 0; b < n; ++b)
      for (int j = 0; j < kk; ++j) {
        const std::size_t moff = (static_cast<std::size_t>(b) * kk + j) * plane;
        const std::size_t eoff = (static_cast<std::size_t>(b) * kk + j) * c;
        for (int ch = 0; ch < c; ++ch) {
          const double* go = self.grad.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
          double acc = 0.0;
          for (std::size_t p = 0; p < plane; ++p) {
            acc += go[p] * mv[moff + p];
            if (gm) gm[moff + p] += go[p] * ev[eoff + ch];
          }
          if (ge) ge[eoff + ch] += acc;
        }
      }
  });
}

Tensor pixel_dot(const Tensor& u, const Tensor& emb) {
  require_rank(u, 4, "pixel_dot features");
  require_rank(emb, 3, "pixel_dot embeddings");
  const int n = u.dim(0), c = u.dim(1), h = u.dim(2), w = u.dim(3);
  const int kk = emb.dim(1);
  if (emb.dim(0) != n || emb.dim(2) != c) {
    throw DimensionError("pixel_dot: features " + shape_str(u.shape()) + " vs embeddings " +
                         shape_str(emb.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  auto uv = u.values(), ev = emb.values();
  std::vector<double> out(static_cast<std::size_t>(n) * kk * plane, 0.0);
  for (int b = 0; b < n; ++b)
    for (int j = 0; j < kk; ++j) {
      double* o = out.data() + (static_cast<std::size_t>(b) * kk + j) * plane;
      const double* ek = ev.data() + (static_cast<std::size_t>(b) * kk + j) * c;
      for (int ch = 0; ch < c; ++ch) {
        const double* uc = uv.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) o[p] += ek[ch] * uc[p];
      }
    }
  return Tensor::make_result({n, kk, h, w}, std::move(out), {u, emb},
                             [u, emb, n, kk, c, plane](detail::Node& self) {
    double* gu = grad_of(u);
    double* ge = grad_of(emb);
    auto uv = u.values(), ev = emb.values();
    for (int b = 0; b < n; ++b)
      for (int j = 0; j < kk; ++j) {
        const double* go = self.grad.data() + (static_cast<std::size_t>(b) * kk + j) * plane;
        const std::size_t eoff = (static_cast<std::size_t>(b) * kk + j) * c;
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t uoff = (static_cast<std::size_t>(b) * c + ch) * plane;
          double acc = 0.0;
          for (std::size_t p = 0; p < plane; ++p) {
            acc += go[p] * uv[uoff + p];
            if (gu) gu[uoff + p] += go[p] * ev[eoff + ch];
          }
          if (ge) ge[eoff + ch] += acc;
        }
      }
  });
}

Tensor select_embedding(const Tensor& a, const Tensor& on, const Tensor& off,
                        const std::vector<double>& on_mask) {
  require_rank(a, 3, "select_embedding input");
  const int n = a.dim(0), kk = a.dim(1), e = a.dim(2);
  const Shape table{kk, e};
  if (on.shape() != table || off.shape() != table ||
      on_mask.size() != static_cast<std::size_t>(n) * kk) {
    throw DimensionError("select_embedding: table or mask shape mismatch for " + shape_str(a.shape()));
  }
  auto av = a.values(), onv = on.values(), offv = off.values();
  std::vector<double> out(a.size());
  for (int b = 0; b < n; ++b)
    for (int j = 0; j < kk; ++j) {
      const bool sel = on_mask[static_cast<std::size_t>(b) * kk + j] != 0.0;
      for (int c = 0; c < e; ++c) {
        const std::size_t i = (static_cast<std::size_t>(b) * kk + j) * e + c;
        const std::size_t t = static_cast<std::size_t>(j) * e + c;
        out[i] = sel ? av[i] + onv[t] : offv[t];
      }
    }
  return Tensor::make_result(a.shape(), std::move(out), {a, on, off},
                             [a, on, off, on_mask, n, kk, e](detail::Node& self) {
    double* ga = grad_of(a);
    double* gon = grad_of(on);
    double* goff = grad_of(off);
    for (int b = 0; b < n; ++b)
      for (int j = 0; j < kk; ++j) {
        const bool sel = on_mask[static_cast<std::size_t>(b) * kk + j] != 0.0;
        for (int c = 0; c < e; ++c) {
          const std::size_t i = (static_cast<std::size_t>(b) * kk + j) * e + c;
          const std::size_t t = static_cast<std::size_t>(j) * e + c;
          if (sel) {
            if (ga) ga[i] += self.grad[i];
            if (gon) gon[t] += self.grad[i];
          } else if (goff) {
            goff[t] += self.grad[i];
          }
        }
      }
  });
}

}  // namespace vidseg::nn
