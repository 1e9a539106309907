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
#include <vector>

#include "vidseg/tensor.hpp"

namespace vidseg {

struct FlaggedCoordinate {
  std::size_t tensor = 0;  // position in the `wrt` list
  std::size_t index = 0;   // flat element index
};

struct GradCheckResult {
  // max |analytic - numeric| / max(1, |numeric|) over unflagged coordinates.
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +/- epsilon probe crossed a non-differentiable point.
  std::vector<FlaggedCoordinate> flagged;
};

// Builds a scalar from the current values of the leaves under test. When
// `branches` is non-null the objective records the outcome of every
// non-differentiable decision it made (e.g. ReLU input signs).
using GradObjective = std::function<Tensor(std::vector<char>* branches)>;

// Compares reverse-mode gradients with central differences for every element
// of every tensor in `wrt`. Epsilon must lie in [1e-6, 1e-3].
GradCheckResult gradcheck(const GradObjective& objective, std::vector<Tensor> wrt,
                          double epsilon);

}  // namespace vidseg
