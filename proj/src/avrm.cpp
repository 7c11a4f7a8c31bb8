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


#include "adavsr/avrm.hpp"

#include <cmath>

#include "adavsr/errors.hpp"

namespace adavsr {

namespace {

std::size_t grid_side(std::size_t k) {
  const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(k))));
  if (k == 0 || s * s != k) {
    throw InputError("region count k=" + std::to_string(k) + " is not a positive perfect square");
  }
  return s;
}

}  // namespace

Tensor partition_regions(const Tensor& f_v, std::size_t k) {
  if (f_v.rank() != 4) {
    throw DimensionError("partition_regions: expected [T, C, H, W], got " +
                         shape_to_string(f_v.shape()));
  }
  const std::size_t side = grid_side(k);
  const std::size_t T = f_v.dim(0), C = f_v.dim(1), H = f_v.dim(2), W = f_v.dim(3);
  if (H % side != 0 || W % side != 0) {
    throw InputError("partition_regions: spatial grid " + std::to_string(H) + "x" +
                     std::to_string(W) + " is not divisible by " + std::to_string(side));
  }
  const std::size_t ch = H / side, cw = W / side;
  const double inv = 1.0 / static_cast<double>(ch * cw);
  auto x = f_v.data();
  std::vector<double> out(T * k * C, 0.0);
  auto cell_index = [=](std::size_t h, std::size_t w) { return (h / ch) * side + w / cw; };
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          out[(t * k + cell_index(h, w)) * C + c] += x[((t * C + c) * H + h) * W + w];
  for (double& v : out) v *= inv;
  return make_op_result("partition_regions", {T, k, C}, std::move(out), {f_v},
                        [=](std::span<const double> g, std::span<const double>) {
                          auto gx = grad_buffer(f_v);
                          for (std::size_t t = 0; t < T; ++t)
                            for (std::size_t c = 0; c < C; ++c)
                              for (std::size_t h = 0; h < H; ++h)
                                for (std::size_t w = 0; w < W; ++w)
                                  gx[((t * C + c) * H + h) * W + w] +=
                                      inv * g[(t * k + cell_index(h, w)) * C + c];
                        });
}

Tensor weighted_region_sum(const Tensor& w, const Tensor& regions) {
  if (w.rank() != 2 || regions.rank() != 3 || regions.dim(0) != w.dim(0) ||
      regions.dim(1) != w.dim(1)) {
    throw DimensionError("weighted_region_sum: weights " + shape_to_string(w.shape()) +
                         " vs regions " + shape_to_string(regions.shape()));
  }
  const std::size_t T = w.dim(0), k = w.dim(1), C = regions.dim(2);
  auto wv = w.data();
  auto rv = regions.data();
  std::vector<double> out(T * C, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < C; ++c) out[t * C + c] += wv[t * k + i] * rv[(t * k + i) * C + c];
  return make_op_result("weighted_region_sum", {T, C}, std::move(out), {w, regions},
                        [=](std::span<const double> g, std::span<const double>) {
                          auto wv = w.data();
                          auto rv = regions.data();
                          if (w.requires_grad()) {
                            auto gw = grad_buffer(w);
                            for (std::size_t t = 0; t < T; ++t)
                              for (std::size_t i = 0; i < k; ++i)
                                for (std::size_t c = 0; c < C; ++c)
                                  gw[t * k + i] += g[t * C + c] * rv[(t * k + i) * C + c];
                          }
                          if (regions.requires_grad()) {
                            auto gr = grad_buffer(regions);
                            for (std::size_t t = 0; t < T; ++t)
                              for (std::size_t i = 0; i < k; ++i)
                                for (std::size_t c = 0; c < C; ++c)
                                  gr[(t * k + i) * C + c] += g[t * C + c] * wv[t * k + i];
                          }
                        });
}

Tensor region_attention(const Tensor& f_a, const Tensor& regions, const AvrmParams& params) {
  if (f_a.rank() != 2 || regions.rank() != 3 || f_a.dim(0) != regions.dim(0) ||
      f_a.dim(1) != regions.dim(2)) {
    throw DimensionError("region_attention: audio " + shape_to_string(f_a.shape()) +
                         " vs regions " + shape_to_string(regions.shape()));
  }
  const std::size_t T = regions.dim(0), k = regions.dim(1), C = regions.dim(2);
  Tensor keys = matmul(reshape(regions, {T * k, C}), params.w1);  // [T*k, d]
  // the 1-broadcast of the audio term: row t is copied to each of its k regions
  std::vector<std::size_t> repeat(T * k);
  for (std::size_t r = 0; r < T * k; ++r) repeat[r] = r / k;
  Tensor query = gather_rows(matmul(f_a, params.w2), repeat);
  Tensor scores = matmul(tanh(keys + query), params.w3);  // [T*k, 1]
  return softmax(reshape(scores, {T, k}), 1);
}

Avrm::Avrm(ParameterStore& store, const std::string& name, std::size_t feature_dim,
           std::size_t model_dim, std::size_t regions, std::size_t attention_dim)
    : k_(regions) {
  grid_side(regions);
  if (attention_dim == 0) throw ConfigError("avrm: attention width must be at least 1");
  params_.w1 = store.uniform(name + ".w1", {feature_dim, attention_dim}, feature_dim);
  params_.w2 = store.uniform(name + ".w2", {feature_dim, attention_dim}, feature_dim);
  params_.w3 = store.uniform(name + ".w3", {attention_dim, 1}, attention_dim);
  proj_ = Linear(store, name + ".proj", feature_dim, model_dim);
}

AvrmOutput Avrm::operator()(const FeatureSeq& f_a, const SpatialFeatureSeq& f_v) const {
  AvrmOutput out;
  out.regions = partition_regions(f_v.data, k_);
  out.weights = region_attention(f_a.data, out.regions, params_);
  out.mixed = weighted_region_sum(out.weights, out.regions);
  out.enhanced = proj_(out.mixed);
  return out;
}

Tensor Avrm::uniform(const SpatialFeatureSeq& f_v) const {
  Tensor regions = partition_regions(f_v.data, k_);
  Tensor w = Tensor::full({regions.dim(0), k_}, 1.0 / static_cast<double>(k_));
  return proj_(weighted_region_sum(w, regions));
}

}  // namespace adavsr
