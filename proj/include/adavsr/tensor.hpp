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

// Dense float64 tensor with reverse-mode autodiff.
//
// Every op returns a fresh Tensor. When any input requires a gradient the
// result records its inputs and a backward closure; backward() walks that
// graph in reverse topological order (the "tape") and accumulates gradients
// into every requires_grad leaf.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adavsr/errors.hpp"

namespace adavsr {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  /// Raw write access. Only meaningful for leaves (parameters, inputs);
  /// mutating an interior node does not propagate.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const;
  /// Accumulated gradient (zeros if none was accumulated).
  Tensor grad() const;
  std::span<const double> grad_data() const;
  void zero_grad();

  /// Same values, no graph history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  friend Tensor make_op_result(std::string_view, Shape, std::vector<double>,
                               std::vector<Tensor>,
                               std::function<void(std::span<const double>,
                                                  std::span<const double>)>);

  std::shared_ptr<detail::Node> node_;
};

/// Backward closure: receives d(loss)/d(output) and the output's values; must
/// accumulate into its inputs via grad_buffer().
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<const double> out)>;

/// Builds an op result. Checks finiteness (NumericError naming `name`), and
/// wires `backward` only when an input requires a gradient and grad mode is
/// on. Exposed so modules can define fused differentiable ops.
Tensor make_op_result(std::string_view name, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs, BackwardFn backward);

/// Gradient accumulator of a tensor, allocated on first use.
std::span<double> grad_buffer(const Tensor& t);

/// Reverse accumulation from a scalar loss into every reachable leaf.
/// Throws ContractError if `loss` is not a single element.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- elementwise / structural ----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);

/// x[m,n] + row[n] broadcast over rows. Also realizes the ones-vector
/// broadcast of additive attention.
Tensor add_row(const Tensor& x, const Tensor& row);
/// x[m,n] * row[n] broadcast over rows.
Tensor mul_row(const Tensor& x, const Tensor& row);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor swish(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// out[i] = x[index[i]] along the first axis; duplicate indices accumulate
/// gradient.
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Log-softmax along the last axis.
Tensor log_softmax(const Tensor& x);

/// Each row divided by its L1 norm; all-zero rows stay zero.
Tensor row_l1_normalize(const Tensor& x);

// ---- layers as functions ---------------------------------------------------

/// x[..., in] * W[in, out] (+ b[out]).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());

/// x[T, Cin] with kernel[w, Cin, Cout]; zero padding, no bias.
Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t stride,
              std::size_t padding);

/// x[N, H, W, Cin] with kernel[kh, kw, Cin, Cout]; zero padding, no bias.
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride,
              std::size_t padding);

/// Per-channel conv over time. x[T, C], kernel[w, C], stride 1.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, std::size_t padding);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  // Normalize with the current input's statistics in eval mode too; the
  // running averages are then kept only for inspection.
  bool utterance_stats = false;

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Rows of x[T, C] are the batch. Training mode normalizes with batch
/// statistics and updates `stats`; eval mode uses the running statistics
/// unless `stats.utterance_stats` is set.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, bool training);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

}  // namespace adavsr
