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


// Cross-modal noise suppression masking. The time-domain audio stream
// queries the (spatially pooled) visual stream; the attended context drives
// a three-layer convolutional mask generator, and the mask is applied to the
// audio features with a residual connection.

#pragma once

#include <string>

#include "adavsr/frontend.hpp"
#include "adavsr/nn.hpp"
#include "adavsr/tensor.hpp"

namespace adavsr {

/// [T, C, H, W] -> [T, C] by averaging over the spatial grid.
Tensor spatial_mean_pool(const Tensor& f_v);

struct CrossAttnParams {
  Tensor w_q;  // [C1, D1]
  Tensor w_k;
  Tensor w_v;
};

struct CrossAttention {
  Tensor context;  // [T1, D1]
  Tensor weights;  // [T1, T1]; row t is the distribution of audio step t over visual steps
};

/// softmax((f_a W_q)(f_v W_k)^T / sqrt(D1)) (f_v W_v). Throws DimensionError
/// if the two streams disagree on T1 or C1.
CrossAttention cross_modal_attention(const Tensor& f_a, const Tensor& f_v_flat,
                                     const CrossAttnParams& params);

struct NoiseMask {
  Tensor m0;  // [T1, D1], ReLU(BN(Conv(context)))
  Tensor m;   // [T1, D1], entries in (0, 1)
};

/// Three width-3 convolutions with batch norm. Shape preserving in time.
class MaskGenerator {
 public:
  MaskGenerator() = default;
  MaskGenerator(ParameterStore& store, const std::string& name, std::size_t channels);
  NoiseMask operator()(const Tensor& context, bool training) const;

  Conv1d conv[3];
  BatchNorm bn[3];
};

/// enhanced = f_a + f_a * m, evaluated as f_a * (1 + m).
Tensor apply_mask(const Tensor& f_a, const Tensor& m);

struct CmnsmOutput {
  CrossAttention attention;
  NoiseMask mask;
  Tensor enhanced;  // [T1, D1]
};

class Cmnsm {
 public:
  /// Throws ConfigError unless feature_dim == model_dim; the residual in the
  /// enhancement step adds D1-wide mask products to C1-wide audio features.
  Cmnsm(ParameterStore& store, const std::string& name, std::size_t feature_dim,
        std::size_t model_dim);

  CmnsmOutput operator()(const FeatureSeq& f_a, const SpatialFeatureSeq& f_v, bool training) const;

  const CrossAttnParams& attention_params() const { return attn_; }
  const MaskGenerator& mask_generator() const { return mask_; }

 private:
  CrossAttnParams attn_;
  MaskGenerator mask_;
};

}  // namespace adavsr
