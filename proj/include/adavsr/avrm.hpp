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


// Audio-aware visual refinement. Each visual frame is cut into a sqrt(k) by
// sqrt(k) grid of regions; the frequency-domain audio stream scores the
// regions with additive attention, and the refined visual feature is the
// attention-weighted region mix projected to the model width.

#pragma once

#include <string>

#include "adavsr/frontend.hpp"
#include "adavsr/nn.hpp"
#include "adavsr/tensor.hpp"

namespace adavsr {

/// [T, C, H, W] -> [T, k, C]. Region i (row-major over the grid) is the mean
/// of its cell. Throws InputError unless k is a perfect square dividing H
/// and W on each side.
Tensor partition_regions(const Tensor& f_v, std::size_t k);

/// out[t, :] = sum_i w[t, i] * regions[t, i, :]; w is [T, k].
Tensor weighted_region_sum(const Tensor& w, const Tensor& regions);

struct AvrmParams {
  Tensor w1;  // [C1, d_att], applied to regions
  Tensor w2;  // [C1, d_att], applied to the audio query
  Tensor w3;  // [d_att, 1]
};

/// Scores e[t, i] = tanh(regions[t, i] W1 + f_a[t] W2) w3, weights
/// softmax over i. `f_a` is [T, C1], `regions` [T, k, C1]; returns [T, k].
Tensor region_attention(const Tensor& f_a, const Tensor& regions, const AvrmParams& params);

struct AvrmOutput {
  Tensor regions;   // [T1, k, C1]
  Tensor weights;   // [T1, k]
  Tensor mixed;     // [T1, C1], before projection
  Tensor enhanced;  // [T1, D1]
};

class Avrm {
 public:
  Avrm(ParameterStore& store, const std::string& name, std::size_t feature_dim,
       std::size_t model_dim, std::size_t regions, std::size_t attention_dim = 16);

  AvrmOutput operator()(const FeatureSeq& f_a, const SpatialFeatureSeq& f_v) const;

  /// The same projection applied to the plain region average; used when the
  /// refinement is switched off so the visual branch keeps its shape.
  Tensor uniform(const SpatialFeatureSeq& f_v) const;

  const AvrmParams& params() const { return params_; }
  const Linear& projection() const { return proj_; }
  std::size_t regions() const { return k_; }

 private:
  AvrmParams params_;
  Linear proj_;
  std::size_t k_;
};

}  // namespace adavsr
