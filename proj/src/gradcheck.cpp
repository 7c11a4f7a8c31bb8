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

#include "adavsr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace adavsr {

double finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                         double h) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  backward(loss());

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    auto g = leaf.grad_data();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(leaf.size(), 0.0);
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[l][i];
      worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + 1e-8));
    }
  }
  return worst;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h) {
  Tensor leaf = x.detach();
  return finite_diff_check([&] { return f(leaf); }, {leaf}, h);
}

}  // namespace adavsr
