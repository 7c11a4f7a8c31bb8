// Copyright 2026 The adavsr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <vector>

#include "adavsr/tensor.hpp"

namespace adavsr {

/// Central-difference check of reverse-mode gradients.
///
/// Returns max over coordinates of
///   |analytic - (f(x+h e) - f(x-h e)) / 2h| / (|analytic| + 1e-8).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h = 1e-5);

/// Same check over every coordinate of several leaves that `loss` closes
/// over (typically a module's parameters plus its inputs). Leaf values are
/// perturbed in place and restored.
double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                         double h = 1e-5);

}  // namespace adavsr
