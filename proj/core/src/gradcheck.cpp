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

#include "vidseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vidseg/errors.hpp"

namespace vidseg {

GradCheckResult gradcheck(const GradObjective& objective, std::vector<Tensor> wrt,
                          double epsilon) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw ValidationError("gradcheck: epsilon " + std::to_string(epsilon) +
                          " outside [1e-6, 1e-3]");
  }
  for (Tensor& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }

  std::vector<char> base_branches;
  Tensor out = objective(&base_branches);
  if (out.size() != 1) throw DimensionError("gradcheck: objective must be scalar");
  out.backward();

  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : wrt) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t.size(), 0.0);
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  std::vector<char> branches;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto vals = wrt[ti].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + epsilon;
      branches.clear();
      const double plus = objective(&branches).item();
      bool kink = branches != base_branches;
      vals[i] = orig - epsilon;
      branches.clear();
      const double minus = objective(&branches).item();
      kink = kink || branches != base_branches;
      vals[i] = orig;
      if (kink) {
        result.flagged.push_back({ti, i});
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double err = std::abs(analytic[ti][i] - numeric) / std::max(1.0, std::abs(numeric));
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace vidseg
