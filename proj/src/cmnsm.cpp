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


#include "adavsr/cmnsm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adavsr/errors.hpp"

namespace adavsr {

Tensor spatial_mean_pool(const Tensor& f_v) {
  if (f_v.rank() != 4) {
    throw DimensionError("spatial_mean_pool: expected [T, C, H, W], got " +
                         shape_to_string(f_v.shape()));
  }
  const std::size_t T = f_v.dim(0), C = f_v.dim(1), cells = f_v.dim(2) * f_v.dim(3);
  Tensor flat = reshape(f_v, {T * C, cells});
  Tensor avg = matmul(flat, Tensor::full({cells, 1}, 1.0 / static_cast<double>(cells)));
  return reshape(avg, {T, C});
}

CrossAttention cross_modal_attention(const Tensor& f_a, const Tensor& f_v_flat,
                                     const CrossAttnParams& params) {
  if (f_a.rank() != 2 || f_v_flat.rank() != 2 || f_a.shape() != f_v_flat.shape()) {
    throw DimensionError("cross_modal_attention: audio " + shape_to_string(f_a.shape()) +
                         " and visual " + shape_to_string(f_v_flat.shape()) + " disagree");
  }
  const double d = static_cast<double>(params.w_q.dim(1));
  Tensor q = matmul(f_a, params.w_q);
  Tensor k = matmul(f_v_flat, params.w_k);
  Tensor v = matmul(f_v_flat, params.w_v);
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(d));
  Tensor weights = softmax(scores, 1);
  return {matmul(weights, v), weights};
}

namespace {

// Logistic function kept inside the open interval (0, 1). In float64 the
// plain sigmoid rounds to exactly 1.0 once its argument passes about 36.7,
// and to 0.0 below about -745; the mask contract requires both ends open.
Tensor open_sigmoid(const Tensor& x) {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  auto xv = x.data();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    double s;
    if (v >= 0.0) {
      s = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      s = e / (1.0 + e);
    }
    y[i] = std::clamp(s, lo, hi);
  }
  return make_op_result("mask_sigmoid", x.shape(), std::move(y), {x},
                        [x](std::span<const double> g, std::span<const double> out) {
                          auto gx = grad_buffer(x);
                          for (std::size_t i = 0; i < out.size(); ++i)
                            gx[i] += g[i] * out[i] * (1.0 - out[i]);
                        });
}

}  // namespace

MaskGenerator::MaskGenerator(ParameterStore& store, const std::string& name,
                             std::size_t channels) {
  for (int i = 0; i < 3; ++i) {
    const std::string layer = name + ".conv" + std::to_string(i);
    conv[i] = Conv1d(store, layer, 3, channels, channels, 1, 1, /*with_bias=*/false);
    bn[i] = BatchNorm(store, name + ".bn" + std::to_string(i), channels);
  }
}

NoiseMask MaskGenerator::operator()(const Tensor& context, bool training) const {
  Tensor m0 = relu(bn[0](conv[0](context), training));
  Tensor h = relu(bn[1](conv[1](m0), training));
  return {m0, open_sigmoid(bn[2](conv[2](h), training))};
}

Tensor apply_mask(const Tensor& f_a, const Tensor& m) {
  if (f_a.shape() != m.shape()) {
    throw DimensionError("apply_mask: features " + shape_to_string(f_a.shape()) + " vs mask " +
                         shape_to_string(m.shape()));
  }
  return mul(f_a, add_scalar(m, 1.0));
}

Cmnsm::Cmnsm(ParameterStore& store, const std::string& name, std::size_t feature_dim,
             std::size_t model_dim) {
  if (feature_dim != model_dim) {
    throw ConfigError("cmnsm: feature dim C1=" + std::to_string(feature_dim) +
                      " must equal model dim D1=" + std::to_string(model_dim));
  }
  attn_.w_q = store.uniform(name + ".w_q", {feature_dim, model_dim}, feature_dim);
  attn_.w_k = store.uniform(name + ".w_k", {feature_dim, model_dim}, feature_dim);
  attn_.w_v = store.uniform(name + ".w_v", {feature_dim, model_dim}, feature_dim);
  mask_ = MaskGenerator(store, name + ".mask", model_dim);
}

CmnsmOutput Cmnsm::operator()(const FeatureSeq& f_a, const SpatialFeatureSeq& f_v,
                              bool training) const {
  CmnsmOutput out;
  out.attention = cross_modal_attention(f_a.data, spatial_mean_pool(f_v.data), attn_);
  out.mask = mask_(out.attention.context, training);
  out.enhanced = apply_mask(f_a.data, out.mask.m);
  return out;
}

}  // namespace adavsr
