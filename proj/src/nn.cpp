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

#include "adavsr/nn.hpp"

#include <cmath>

namespace adavsr {

Tensor ParameterStore::add(const std::string& name, Tensor t) {
  for (const auto& [existing, _] : params_) {
    if (existing == name) throw ContractError("duplicate parameter name " + name);
  }
  t.set_requires_grad(true);
  params_.emplace_back(name, t);
  return t;
}

Tensor ParameterStore::uniform(const std::string& name, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng_);
  return add(name, Tensor::from(std::move(shape), std::move(values)));
}

Tensor ParameterStore::constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

BatchNormStats& ParameterStore::batch_norm_stats(const std::string& name, std::size_t channels) {
  bn_.emplace_back(name, std::make_unique<BatchNormStats>(channels));
  return *bn_.back().second;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void ParameterStore::set_utterance_norm_stats(bool on) {
  for (auto& [name, s] : bn_) s->utterance_stats = on;
}

nlohmann::json ParameterStore::to_json() const {
  nlohmann::json j;
  j["parameters"] = nlohmann::json::object();
  for (const auto& [name, t] : params_) j["parameters"][name] = t.to_vector();
  j["batch_norm"] = nlohmann::json::object();
  for (const auto& [name, s] : bn_) {
    j["batch_norm"][name] = {{"mean", s->running_mean}, {"var", s->running_var}};
  }
  return j;
}

void ParameterStore::load_json(const nlohmann::json& j) {
  const auto& params = j.at("parameters");
  if (params.size() != params_.size()) {
    throw InputError("checkpoint holds " + std::to_string(params.size()) +
                     " parameters, model expects " + std::to_string(params_.size()));
  }
  for (auto& [name, t] : params_) {
    if (!params.contains(name)) throw InputError("checkpoint is missing parameter " + name);
    auto values = params.at(name).get<std::vector<double>>();
    if (values.size() != t.size()) throw InputError("size mismatch for parameter " + name);
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
  const auto& bn = j.at("batch_norm");
  for (auto& [name, s] : bn_) {
    if (!bn.contains(name)) throw InputError("checkpoint is missing batch-norm stats " + name);
    auto m = bn.at(name).at("mean").get<std::vector<double>>();
    auto v = bn.at(name).at("var").get<std::vector<double>>();
    if (m.size() != s->running_mean.size() || v.size() != s->running_var.size()) {
      throw InputError("size mismatch for batch-norm stats " + name);
    }
    s->running_mean = std::move(m);
    s->running_var = std::move(v);
  }
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               bool with_bias)
    : weight(store.uniform(name + ".weight", {in, out}, in)) {
  if (with_bias) bias = store.constant(name + ".bias", {out}, 0.0);
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, std::size_t width,
               std::size_t cin, std::size_t cout, std::size_t stride_, std::size_t padding_,
               bool with_bias)
    : kernel(store.uniform(name + ".kernel", {width, cin, cout}, width * cin)),
      stride(stride_),
      padding(padding_) {
  if (with_bias) bias = store.constant(name + ".bias", {cout}, 0.0);
}

Tensor Conv1d::operator()(const Tensor& x) const {
  Tensor y = conv1d(x, kernel, stride, padding);
  return bias.node() ? add_row(y, bias) : y;
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, std::size_t size,
               std::size_t cin, std::size_t cout, std::size_t stride_, std::size_t padding_,
               bool with_bias)
    : kernel(store.uniform(name + ".kernel", {size, size, cin, cout}, size * size * cin)),
      stride(stride_),
      padding(padding_) {
  if (with_bias) bias = store.constant(name + ".bias", {cout}, 0.0);
}

Tensor Conv2d::operator()(const Tensor& x) const {
  Tensor y = conv2d(x, kernel, stride, padding);
  if (!bias.node()) return y;
  const Shape shape = y.shape();
  return reshape(add_row(reshape(y, {y.size() / shape.back(), shape.back()}), bias), shape);
}

BatchNorm::BatchNorm(ParameterStore& store, const std::string& name, std::size_t channels)
    : gamma(store.constant(name + ".gamma", {channels}, 1.0)),
      beta(store.constant(name + ".beta", {channels}, 0.0)),
      stats(&store.batch_norm_stats(name, channels)) {}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t channels)
    : gamma(store.constant(name + ".gamma", {channels}, 1.0)),
      beta(store.constant(name + ".beta", {channels}, 0.0)) {}

}  // namespace adavsr
