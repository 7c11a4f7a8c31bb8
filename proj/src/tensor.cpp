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

#include "adavsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace adavsr {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return node;
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, std::string_view op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_to_string(x.shape()));
  }
}

template <typename F, typename DF>
Tensor unary(std::string_view name, const Tensor& x, F f, DF df) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_op_result(name, x.shape(), std::move(out), {x},
                        [x, df](std::span<const double> g, std::span<const double> y) {
                          if (!x.requires_grad()) return;
                          auto gx = grad_buffer(x);
                          auto xv = x.data();
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], y[i]);
                        });
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor::from: shape " + shape_to_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  for (auto s : shape) {
    if (s == 0) throw DimensionError("Tensor::from: zero extent in " + shape_to_string(shape));
  }
  return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return Tensor(new_node({1}, {value})); }

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return node_ ? node_->shape : kEmpty;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!node_) return {};
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) return {};
  return node_->value;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) {
    throw DimensionError("at(): index rank mismatch for " + shape_to_string(shape()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape()[axis]) throw DimensionError("at(): index out of range");
    flat = flat * shape()[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (node_) node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

Tensor Tensor::grad() const {
  if (!has_grad()) return zeros(shape());
  return Tensor(new_node(shape(), node_->grad));
}

std::span<const double> Tensor::grad_data() const {
  if (!has_grad()) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(new_node(shape(), to_vector())); }

// ---- graph -----------------------------------------------------------------

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_op_result(std::string_view name, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs, BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + std::string(name));
    }
  }
  auto node = new_node(std::move(shape), std::move(values));
  if (g_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) {
        if (t.requires_grad()) node->inputs.push_back(t.node());
      }
    }
  }
  return Tensor(std::move(node));
}

std::span<double> grad_buffer(const Tensor& t) {
  auto& node = *t.node();
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void backward(const Tensor& loss) {
  if (!loss.node() || loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of interior nodes.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].get();
      if (child->backward && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  grad_buffer(loss)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->grad.empty()) continue;
    node->backward(node->grad, node->value);
    // Interior gradients are not needed once propagated.
    if (node != loss.node().get()) std::vector<double>().swap(node->grad);
  }
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_op_result("add", a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const double> g, std::span<const double>) {
                          for (const auto* t : {&a, &b}) {
                            if (!t->requires_grad()) continue;
                            auto gt = grad_buffer(*t);
                            for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
                          }
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_op_result("sub", a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const double> g, std::span<const double>) {
                          if (a.requires_grad()) {
                            auto ga = grad_buffer(a);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          }
                          if (b.requires_grad()) {
                            auto gb = grad_buffer(b);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                          }
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op_result("mul", a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const double> g, std::span<const double>) {
                          auto av = a.data(), bv = b.data();
                          if (a.requires_grad()) {
                            auto ga = grad_buffer(a);
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                          }
                          if (b.requires_grad()) {
                            auto gb = grad_buffer(b);
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                          }
                        });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_rank(x, 2, "add_row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (row.size() != n) {
    throw DimensionError("add_row: row of shape " + shape_to_string(row.shape()) +
                         " does not broadcast over " + shape_to_string(x.shape()));
  }
  auto xv = x.data(), rv = row.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + rv[j];
  return make_op_result("add_row", x.shape(), std::move(out), {x, row},
                        [x, row, m, n](std::span<const double> g, std::span<const double>) {
                          if (x.requires_grad()) {
                            auto gx = grad_buffer(x);
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          }
                          if (row.requires_grad()) {
                            auto gr = grad_buffer(row);
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
                          }
                        });
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
  require_rank(x, 2, "mul_row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (row.size() != n) {
    throw DimensionError("mul_row: row of shape " + shape_to_string(row.shape()) +
                         " does not broadcast over " + shape_to_string(x.shape()));
  }
  auto xv = x.data(), rv = row.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * rv[j];
  return make_op_result("mul_row", x.shape(), std::move(out), {x, row},
                        [x, row, m, n](std::span<const double> g, std::span<const double>) {
                          auto xv = x.data(), rv = row.data();
                          if (x.requires_grad()) {
                            auto gx = grad_buffer(x);
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * rv[j];
                          }
                          if (row.requires_grad()) {
                            auto gr = grad_buffer(row);
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j] * xv[i * n + j];
                          }
                        });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor swish(const Tensor& x) {
  return unary(
      "swish", x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor sum(const Tensor& x) {
  auto xv = x.data();
  double total = 0.0;
  for (double v : xv) total += v;
  return make_op_result("sum", {1}, {total}, {x},
                        [x](std::span<const double> g, std::span<const double>) {
                          auto gx = grad_buffer(x);
                          for (auto& v : gx) v += g[0];
                        });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

// ---- linear algebra / structure ---------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto av = a.data(), bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op_result(
      "matmul", {m, n}, std::move(out), {a, b},
      [a, b, m, k, n](std::span<const double> g, std::span<const double>) {
        auto av = a.data(), bv = b.data();
        if (a.requires_grad()) {
          auto ga = grad_buffer(a);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* brow = bv.data() + p * n;
              const double* grow = g.data() + i * n;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + p] += acc;
            }
        }
        if (b.requires_grad()) {
          auto gb = grad_buffer(b);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av[i * k + p];
              if (aip == 0.0) continue;
              double* gbrow = gb.data() + p * n;
              const double* grow = g.data() + i * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
        }
      });
}

Tensor transpose(const Tensor& a) { return permute(a, {1, 0}); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                         shape_to_string(shape));
  }
  return make_op_result("reshape", std::move(shape), x.to_vector(), {x},
                        [x](std::span<const double> g, std::span<const double>) {
                          auto gx = grad_buffer(x);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                        });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) {
    throw DimensionError("permute: axes do not match rank of " + shape_to_string(x.shape()));
  }
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) throw DimensionError("permute: invalid axis permutation");
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[axes[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];

  // source offset for each destination element
  const std::size_t n = x.size();
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[axes[i]];
    src[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  auto xv = x.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[src[i]];
  return make_op_result("permute", std::move(out_shape), std::move(out), {x},
                        [x, src = std::move(src)](std::span<const double> g,
                                                  std::span<const double>) {
                          auto gx = grad_buffer(x);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[src[i]] += g[i];
                        });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || begin >= end || end > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_to_string(x.shape()));
  }
  const std::size_t row = x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  auto xv = x.data();
  std::vector<double> out(xv.begin() + begin * row, xv.begin() + end * row);
  return make_op_result("slice_rows", std::move(shape), std::move(out), {x},
                        [x, begin, row](std::span<const double> g, std::span<const double>) {
                          auto gx = grad_buffer(x);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[begin * row + i] += g[i];
                        });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_to_string(x.shape()));
  }
  const std::size_t w = end - begin;
  auto xv = x.data();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.begin() + i * n + begin, w, out.begin() + i * w);
  return make_op_result("slice_cols", {m, w}, std::move(out), {x},
                        [x, begin, m, n, w](std::span<const double> g, std::span<const double>) {
                          auto gx = grad_buffer(x);
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += g[i * w + j];
                        });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape shape = parts[0].shape();
  const std::size_t row = parts[0].size() / parts[0].dim(0);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(p.shape().begin() + 1, p.shape().end(),
                                                 shape.begin() + 1)) {
      throw DimensionError("concat_rows: incompatible " + shape_to_string(p.shape()) + " and " +
                           shape_to_string(shape));
    }
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(rows * row);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_op_result("concat_rows", std::move(shape), std::move(out), parts,
                        [parts](std::span<const double> g, std::span<const double>) {
                          std::size_t off = 0;
                          for (const auto& p : parts) {
                            if (p.requires_grad()) {
                              auto gp = grad_buffer(p);
                              for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
                            }
                            off += p.size();
                          }
                        });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m) {
      throw DimensionError("concat_cols: incompatible " + shape_to_string(p.shape()));
    }
    n += p.dim(1);
  }
  std::vector<double> out(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    auto pv = p.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(pv.begin() + i * w, w, out.begin() + i * n + col);
    col += w;
  }
  return make_op_result("concat_cols", {m, n}, std::move(out), parts,
                        [parts, m, n](std::span<const double> g, std::span<const double>) {
                          std::size_t col = 0;
                          for (const auto& p : parts) {
                            const std::size_t w = p.dim(1);
                            if (p.requires_grad()) {
                              auto gp = grad_buffer(p);
                              for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * n + col + j];
                            }
                            col += w;
                          }
                        });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index) {
  if (x.rank() < 1 || index.empty()) throw DimensionError("gather_rows: empty input");
  const std::size_t rows = x.dim(0);
  const std::size_t row = x.size() / rows;
  for (auto i : index) {
    if (i >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range for " +
                           shape_to_string(x.shape()));
    }
  }
  Shape shape = x.shape();
  shape[0] = index.size();
  auto xv = x.data();
  std::vector<double> out(index.size() * row);
  for (std::size_t r = 0; r < index.size(); ++r)
    std::copy_n(xv.begin() + index[r] * row, row, out.begin() + r * row);
  return make_op_result("gather_rows", std::move(shape), std::move(out), {x},
                        [x, index, row](std::span<const double> g, std::span<const double>) {
                          auto gx = grad_buffer(x);
                          for (std::size_t r = 0; r < index.size(); ++r)
                            for (std::size_t j = 0; j < row; ++j) gx[index[r] * row + j] += g[r * row + j];
                        });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(x.shape()));
  }
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  auto xv = x.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  return make_op_result("softmax", s, std::move(out), {x},
                        [x, outer, inner, n](std::span<const double> g, std::span<const double> y) {
                          auto gx = grad_buffer(x);
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t in = 0; in < inner; ++in) {
                              const std::size_t base = o * n * inner + in;
                              double dot = 0.0;
                              for (std::size_t j = 0; j < n; ++j)
                                dot += g[base + j * inner] * y[base + j * inner];
                              for (std::size_t j = 0; j < n; ++j) {
                                const std::size_t i = base + j * inner;
                                gx[i] += y[i] * (g[i] - dot);
                              }
                            }
                        });
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("log_softmax: empty tensor");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  auto xv = x.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = in[j] - lz;
  }
  return make_op_result("log_softmax", x.shape(), std::move(out), {x},
                        [x, rows, n](std::span<const double> g, std::span<const double> y) {
                          auto gx = grad_buffer(x);
                          for (std::size_t r = 0; r < rows; ++r) {
                            double gs = 0.0;
                            for (std::size_t j = 0; j < n; ++j) gs += g[r * n + j];
                            for (std::size_t j = 0; j < n; ++j)
                              gx[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gs;
                          }
                        });
}

Tensor row_l1_normalize(const Tensor& x) {
  require_rank(x, 2, "row_l1_normalize");
  const std::size_t m = x.dim(0), n = x.dim(1);
  auto xv = x.data();
  std::vector<double> norms(m, 0.0);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::abs(xv[i * n + j]);
    norms[i] = s;
    if (s > 0.0)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / s;
  }
  return make_op_result(
      "row_l1_normalize", x.shape(), std::move(out), {x},
      [x, m, n, norms = std::move(norms)](std::span<const double> g, std::span<const double> y) {
        auto gx = grad_buffer(x);
        auto xv = x.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double s = norms[i];
          if (s == 0.0) continue;
          double gy = 0.0;
          for (std::size_t j = 0; j < n; ++j) gy += g[i * n + j] * y[i * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            const double v = xv[i * n + j];
            const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
            gx[i * n + j] += (g[i * n + j] - sign * gy) / s;
          }
        }
      });
}

// ---- layers ----------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) +
                         " does not match weight " + shape_to_string(weight.shape()));
  }
  const bool flat = x.rank() != 2;
  Tensor x2 = flat ? reshape(x, {x.size() / weight.dim(0), weight.dim(0)}) : x;
  Tensor y = matmul(x2, weight);
  if (bias.node()) y = add_row(y, bias);
  if (flat) {
    Shape shape = x.shape();
    shape.back() = weight.dim(1);
    y = reshape(y, std::move(shape));
  }
  return y;
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  require_rank(x, 2, "conv1d");
  require_rank(kernel, 3, "conv1d kernel");
  const std::size_t T = x.dim(0), cin = x.dim(1);
  const std::size_t w = kernel.dim(0), cout = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv1d: kernel " + shape_to_string(kernel.shape()) +
                         " does not match input " + shape_to_string(x.shape()));
  }
  if (stride == 0) throw DimensionError("conv1d: stride must be positive");
  if (T + 2 * padding < w) {
    throw DimensionError("conv1d: kernel width " + std::to_string(w) +
                         " exceeds padded input length " + std::to_string(T + 2 * padding));
  }
  const std::size_t out_len = (T + 2 * padding - w) / stride + 1;
  auto xv = x.data(), kv = kernel.data();
  std::vector<double> out(out_len * cout, 0.0);
  for (std::size_t t = 0; t < out_len; ++t) {
    double* orow = out.data() + t * cout;
    for (std::size_t j = 0; j < w; ++j) {
      const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t * stride + j) -
                               static_cast<std::ptrdiff_t>(padding);
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
      const double* xrow = xv.data() + s * cin;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double xval = xrow[ci];
        if (xval == 0.0) continue;
        const double* krow = kv.data() + (j * cin + ci) * cout;
        for (std::size_t co = 0; co < cout; ++co) orow[co] += xval * krow[co];
      }
    }
  }
  return make_op_result(
      "conv1d", {out_len, cout}, std::move(out), {x, kernel},
      [=](std::span<const double> g, std::span<const double>) {
        auto xv = x.data(), kv = kernel.data();
        std::span<double> gx, gk;
        if (x.requires_grad()) gx = grad_buffer(x);
        if (kernel.requires_grad()) gk = grad_buffer(kernel);
        for (std::size_t t = 0; t < out_len; ++t) {
          const double* grow = g.data() + t * cout;
          for (std::size_t j = 0; j < w; ++j) {
            const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t * stride + j) -
                                     static_cast<std::ptrdiff_t>(padding);
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const std::size_t kbase = (j * cin + ci) * cout;
              if (!gx.empty()) {
                double acc = 0.0;
                for (std::size_t co = 0; co < cout; ++co) acc += grow[co] * kv[kbase + co];
                gx[s * cin + ci] += acc;
              }
              if (!gk.empty()) {
                const double xval = xv[s * cin + ci];
                if (xval == 0.0) continue;
                for (std::size_t co = 0; co < cout; ++co) gk[kbase + co] += xval * grow[co];
              }
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  require_rank(x, 4, "conv2d");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), cin = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != cin) {
    throw DimensionError("conv2d: kernel " + shape_to_string(kernel.shape()) +
                         " does not match input " + shape_to_string(x.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (H + 2 * padding < kh || W + 2 * padding < kw) {
    throw DimensionError("conv2d: kernel larger than padded input " + shape_to_string(x.shape()));
  }
  const std::size_t Ho = (H + 2 * padding - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - kw) / stride + 1;
  auto xv = x.data(), kv = kernel.data();
  std::vector<double> out(N * Ho * Wo * cout, 0.0);
  const auto P = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double* orow = out.data() + ((n * Ho + oy) * Wo + ox) * cout;
        for (std::size_t dy = 0; dy < kh; ++dy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + dy) - P;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t dx = 0; dx < kw; ++dx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + dx) - P;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const double* xrow = xv.data() + ((n * H + iy) * W + ix) * cin;
            const double* kblock = kv.data() + (dy * kw + dx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double xval = xrow[ci];
              if (xval == 0.0) continue;
              const double* krow = kblock + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) orow[co] += xval * krow[co];
            }
          }
        }
      }
  return make_op_result(
      "conv2d", {N, Ho, Wo, cout}, std::move(out), {x, kernel},
      [=](std::span<const double> g, std::span<const double>) {
        auto xv = x.data(), kv = kernel.data();
        std::span<double> gx, gk;
        if (x.requires_grad()) gx = grad_buffer(x);
        if (kernel.requires_grad()) gk = grad_buffer(kernel);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const double* grow = g.data() + ((n * Ho + oy) * Wo + ox) * cout;
              for (std::size_t dy = 0; dy < kh; ++dy) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + dy) - P;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t dx = 0; dx < kw; ++dx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + dx) - P;
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                  const std::size_t xbase = ((n * H + iy) * W + ix) * cin;
                  const std::size_t kbase = (dy * kw + dx) * cin * cout;
                  for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* krow = kv.data() + kbase + ci * cout;
                    if (!gx.empty()) {
                      double acc = 0.0;
                      for (std::size_t co = 0; co < cout; ++co) acc += grow[co] * krow[co];
                      gx[xbase + ci] += acc;
                    }
                    if (!gk.empty()) {
                      const double xval = xv[xbase + ci];
                      if (xval == 0.0) continue;
                      double* gkrow = gk.data() + kbase + ci * cout;
                      for (std::size_t co = 0; co < cout; ++co) gkrow[co] += xval * grow[co];
                    }
                  }
                }
              }
            }
      });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, std::size_t padding) {
  require_rank(x, 2, "depthwise_conv1d");
  require_rank(kernel, 2, "depthwise_conv1d kernel");
  const std::size_t T = x.dim(0), C = x.dim(1), w = kernel.dim(0);
  if (kernel.dim(1) != C) {
    throw DimensionError("depthwise_conv1d: kernel " + shape_to_string(kernel.shape()) +
                         " does not match input " + shape_to_string(x.shape()));
  }
  if (T + 2 * padding < w) throw DimensionError("depthwise_conv1d: kernel wider than input");
  const std::size_t out_len = T + 2 * padding - w + 1;
  auto xv = x.data(), kv = kernel.data();
  std::vector<double> out(out_len * C, 0.0);
  for (std::size_t t = 0; t < out_len; ++t)
    for (std::size_t j = 0; j < w; ++j) {
      const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(padding);
      if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
      for (std::size_t c = 0; c < C; ++c) out[t * C + c] += xv[s * C + c] * kv[j * C + c];
    }
  return make_op_result(
      "depthwise_conv1d", {out_len, C}, std::move(out), {x, kernel},
      [=](std::span<const double> g, std::span<const double>) {
        auto xv = x.data(), kv = kernel.data();
        std::span<double> gx, gk;
        if (x.requires_grad()) gx = grad_buffer(x);
        if (kernel.requires_grad()) gk = grad_buffer(kernel);
        for (std::size_t t = 0; t < out_len; ++t)
          for (std::size_t j = 0; j < w; ++j) {
            const std::ptrdiff_t s =
                static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(padding);
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
            for (std::size_t c = 0; c < C; ++c) {
              if (!gx.empty()) gx[s * C + c] += g[t * C + c] * kv[j * C + c];
              if (!gk.empty()) gk[j * C + c] += g[t * C + c] * xv[s * C + c];
            }
          }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, bool training) {
  require_rank(x, 2, "batch_norm");
  const std::size_t T = x.dim(0), C = x.dim(1);
  if (gamma.size() != C || beta.size() != C || stats.running_mean.size() != C) {
    throw DimensionError("batch_norm: parameters do not match " + shape_to_string(x.shape()));
  }
  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  std::vector<double> mu(C, 0.0), inv_std(C, 0.0);
  const bool batch_stats = training || stats.utterance_stats;
  if (batch_stats) {
    std::vector<double> var(C, 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) mu[c] += xv[t * C + c];
    for (auto& m : mu) m /= static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = xv[t * C + c] - mu[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < C; ++c) {
      const double biased = var[c] / static_cast<double>(T);
      inv_std[c] = 1.0 / std::sqrt(biased + stats.eps);
      if (!training) continue;
      const double unbiased = T > 1 ? var[c] / static_cast<double>(T - 1) : biased;
      stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu[c];
      stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
    }
  }
  std::vector<double> xhat(T * C), out(T * C);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t i = t * C + c;
      xhat[i] = (xv[i] - mu[c]) * inv_std[c];
      out[i] = gv[c] * xhat[i] + bv[c];
    }
  return make_op_result(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const double> g,
                                                                std::span<const double>) {
        auto gv = gamma.data();
        if (gamma.requires_grad() || beta.requires_grad()) {
          std::span<double> gg, gb;
          if (gamma.requires_grad()) gg = grad_buffer(gamma);
          if (beta.requires_grad()) gb = grad_buffer(beta);
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) {
              if (!gg.empty()) gg[c] += g[t * C + c] * xhat[t * C + c];
              if (!gb.empty()) gb[c] += g[t * C + c];
            }
        }
        if (!x.requires_grad()) return;
        auto gx = grad_buffer(x);
        if (!batch_stats) {
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) gx[t * C + c] += g[t * C + c] * gv[c] * inv_std[c];
          return;
        }
        const double n = static_cast<double>(T);
        for (std::size_t c = 0; c < C; ++c) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t t = 0; t < T; ++t) {
            const double d = g[t * C + c] * gv[c];
            sum_d += d;
            sum_dx += d * xhat[t * C + c];
          }
          for (std::size_t t = 0; t < T; ++t) {
            const double d = g[t * C + c] * gv[c];
            gx[t * C + c] += inv_std[c] / n * (n * d - sum_d - xhat[t * C + c] * sum_dx);
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t T = x.dim(0), C = x.dim(1);
  if (gamma.size() != C || beta.size() != C) {
    throw DimensionError("layer_norm: parameters do not match " + shape_to_string(x.shape()));
  }
  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  std::vector<double> xhat(T * C), inv_std(T), out(T * C);
  for (std::size_t t = 0; t < T; ++t) {
    double mu = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += xv[t * C + c];
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = xv[t * C + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(C);
    inv_std[t] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t i = t * C + c;
      xhat[i] = (xv[i] - mu) * inv_std[t];
      out[i] = gv[c] * xhat[i] + bv[c];
    }
  }
  return make_op_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const double> g,
                                                                std::span<const double>) {
        auto gv = gamma.data();
        std::span<double> gg, gb, gx;
        if (gamma.requires_grad()) gg = grad_buffer(gamma);
        if (beta.requires_grad()) gb = grad_buffer(beta);
        if (x.requires_grad()) gx = grad_buffer(x);
        const double n = static_cast<double>(C);
        for (std::size_t t = 0; t < T; ++t) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = t * C + c;
            if (!gg.empty()) gg[c] += g[i] * xhat[i];
            if (!gb.empty()) gb[c] += g[i];
            const double d = g[i] * gv[c];
            sum_d += d;
            sum_dx += d * xhat[i];
          }
          if (gx.empty()) continue;
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = t * C + c;
            const double d = g[i] * gv[c];
            gx[i] += inv_std[t] / n * (n * d - sum_d - xhat[i] * sum_dx);
          }
        }
      });
}

}  // namespace adavsr
