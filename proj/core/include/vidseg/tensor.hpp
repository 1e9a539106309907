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
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vidseg {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array of doubles that records the operations producing it
/// so gradients can be propagated back to leaves with `backward()`.
///
/// Copies share storage, like a handle. Use `clone()` for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> values() const;
  // Writes bypass the graph. Only meant for leaves (optimizer updates,
  // finite-difference probes, initialization).
  std::span<double> mutable_values();
  double item() const;

  // Empty span when no gradient has reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  bool requires_grad() const;
  void set_requires_grad(bool on);
  void zero_grad();

  // Seeds d(this)/d(this) = 1 and accumulates into every reachable leaf.
  void backward() const;

  // Leaf copy of the values with no history.
  Tensor detach() const;
  // Deep copy that keeps `requires_grad`, dropping history.
  Tensor clone() const;

  // Used by op implementations.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::initializer_list<Tensor> parents,
                            std::function<void(detail::Node&)> backward);
  static Tensor make_result(Shape shape, std::vector<double> values,
                            const std::vector<Tensor>& parents,
                            std::function<void(detail::Node&)> backward);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace vidseg
