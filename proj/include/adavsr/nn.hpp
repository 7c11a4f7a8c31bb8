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

// Parameter ownership and the small set of trainable layers shared by all
// modules.

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adavsr/tensor.hpp"

namespace adavsr {

/// Owns every trainable leaf and batch-norm buffer of one model instance.
/// Layers keep handles to the same tensors, so optimizer updates through the
/// store are visible to them.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  /// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), drawn from the store's RNG.
  Tensor uniform(const std::string& name, Shape shape, std::size_t fan_in);
  Tensor constant(const std::string& name, Shape shape, double value);
  BatchNormStats& batch_norm_stats(const std::string& name, std::size_t channels);
  void set_utterance_norm_stats(bool on);

  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  nlohmann::json to_json() const;
  /// Throws InputError when names or sizes disagree with this store.
  void load_json(const nlohmann::json& j);

 private:
  Tensor add(const std::string& name, Tensor t);

  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<BatchNormStats>>> bn_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], undefined when bias-free

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct Conv1d {
  Tensor kernel;  // [width, cin, cout]
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, std::size_t width, std::size_t cin,
         std::size_t cout, std::size_t stride, std::size_t padding, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct Conv2d {
  Tensor kernel;  // [kh, kw, cin, cout]
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, std::size_t size, std::size_t cin,
         std::size_t cout, std::size_t stride, std::size_t padding, bool with_bias = true);
  /// x[N, H, W, cin] -> [N, H', W', cout]
  Tensor operator()(const Tensor& x) const;
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  BatchNormStats* stats = nullptr;

  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& name, std::size_t channels);
  Tensor operator()(const Tensor& x, bool training) const {
    return batch_norm(x, gamma, beta, *stats, training);
  }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t channels);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

}  // namespace adavsr
