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

#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "adavsr/gradcheck.hpp"
#include "adavsr/nn.hpp"
#include "adavsr/tensor.hpp"
#include "test_util.hpp"

using namespace adavsr;
using adavsr::testing::random_tensor;
using adavsr::testing::weighted_sum;

namespace {

std::vector<double> scalar_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a[i * k + p] * b[p * n + j];
  return out;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto a = Tensor::from({2, 2}, {0.3, -1.5, 2.25, 7.0});
  EXPECT_EQ(matmul(eye, a).to_vector(), a.to_vector());
}

TEST(Matmul, HandExampleMatchesScalarLoop) {
  std::vector<double> a{1, 2, 3, 4}, b{5, 6};
  auto expected = scalar_matmul(a, b, 2, 2, 1);
  ASSERT_EQ(expected, (std::vector<double>{17, 39}));
  auto c = matmul(Tensor::from({2, 2}, a), Tensor::from({2, 1}, b));
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.to_vector(), expected);
}

TEST(Matmul, ZeroMatrixGivesZero) {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(matmul(Tensor::zeros({3, 2}), a).to_vector(), std::vector<double>(6, 0.0));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    ASSERT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), msg.rfind("[2,3]"));
  }
}

TEST(Softmax, SymmetricInputIsUniform) {
  auto y = softmax(Tensor::from({2}, {0, 0}), 0);
  EXPECT_DOUBLE_EQ(y.data()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 0.5);
}

TEST(Softmax, MatchesScalarOracle) {
  auto y = softmax(Tensor::from({3}, {1, 2, 3}), 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y.data()[i], std::exp(i + 1.0) / z, 1e-12);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto x = random_tensor({4, 5}, rng, -20, 20);
    auto y = softmax(x, 1);
    auto shifted = softmax(add_scalar(x, 3.75), 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        s += y.at({r, c});
        EXPECT_NEAR(y.at({r, c}), shifted.at({r, c}), 1e-15);
        EXPECT_GE(y.at({r, c}), 0.0);
      }
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
  }
}

TEST(Softmax, AlongLeadingAxis) {
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto y = softmax(x, 0);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y.at({0, c}) + y.at({1, c}), 1.0, 1e-15);
  EXPECT_NEAR(y.at({1, 0}), 1.0 / (1.0 + std::exp(-3.0)), 1e-12);
}

TEST(Activations, ScalarValues) {
  auto r = relu(Tensor::from({2}, {-3, 3}));
  EXPECT_EQ(r.to_vector(), (std::vector<double>{0, 3}));
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_NEAR(adavsr::tanh(Tensor::scalar(0.5)).item(), std::tanh(0.5), 1e-12);
}

TEST(Activations, Ranges) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({64}, rng, -30, 30);
  auto r = relu(x);
  auto s = sigmoid(scale(x, 0.5));
  auto t = adavsr::tanh(scale(x, 0.1));
  for (double v : r.data()) EXPECT_GE(v, 0.0);
  for (double v : s.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (double v : t.data()) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Conv1d, IdentityKernel) {
  auto x = Tensor::from({4, 1}, {1, -2, 3, 0.5});
  auto y = conv1d(x, Tensor::from({1, 1, 1}, {1}), 1, 0);
  EXPECT_EQ(y.to_vector(), x.to_vector());
}

TEST(Conv1d, HandExample) {
  // scalar loop: out[t] = x[t] + x[t+1]
  std::vector<double> x{1, 2, 3};
  std::vector<double> expected;
  for (std::size_t t = 0; t + 1 < x.size(); ++t) expected.push_back(x[t] * 1 + x[t + 1] * 1);
  auto y = conv1d(Tensor::from({3, 1}, x), Tensor::from({2, 1, 1}, {1, 1}), 1, 0);
  EXPECT_EQ(y.to_vector(), expected);
  EXPECT_EQ(expected, (std::vector<double>{3, 5}));
}

TEST(Conv1d, ZeroInputZeroOutput) {
  std::mt19937_64 rng(1);
  auto y = conv1d(Tensor::zeros({6, 2}), random_tensor({3, 2, 4}, rng), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv1d, OutputLengthFormula) {
  std::mt19937_64 rng(1);
  for (std::size_t T : {5u, 8u, 13u})
    for (std::size_t w : {1u, 3u, 4u})
      for (std::size_t stride : {1u, 2u, 3u})
        for (std::size_t pad : {0u, 1u, 2u}) {
          auto y = conv1d(Tensor::zeros({T, 1}), random_tensor({w, 1, 1}, rng), stride, pad);
          EXPECT_EQ(y.dim(0), (T + 2 * pad - w) / stride + 1);
        }
}

TEST(Conv1d, KernelWiderThanPaddedInputThrows) {
  EXPECT_THROW(conv1d(Tensor::zeros({2, 1}), Tensor::zeros({5, 1, 1}), 1, 1), DimensionError);
}

TEST(BatchNorm, ConstantColumnMapsToBeta) {
  BatchNormStats stats(2);
  auto x = Tensor::from({3, 2}, {4, 1, 4, 2, 4, 3});
  auto y = batch_norm(x, Tensor::from({2}, {2.0, 1.0}), Tensor::from({2}, {0.7, 0.0}), stats, true);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_DOUBLE_EQ(y.at({t, 0}), 0.7);
}

TEST(BatchNorm, StandardizedColumnIsNearlyUnchanged) {
  BatchNormStats stats(1);
  auto x = Tensor::from({2, 1}, {-1, 1});  // mean 0, biased var 1
  auto y = batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), stats, true);
  EXPECT_NEAR(y.data()[0], -1.0, 1e-5);
  EXPECT_NEAR(y.data()[1], 1.0, 1e-5);
}

TEST(BatchNorm, FourRowScalarOracle) {
  std::vector<double> col{0.5, -1.25, 2.0, 0.75};
  double mu = 0.0;
  for (double v : col) mu += v;
  mu /= 4.0;
  double var = 0.0;
  for (double v : col) var += (v - mu) * (v - mu);
  var /= 4.0;
  const double g = 1.5, b = -0.25;
  BatchNormStats stats(1);
  auto y = batch_norm(Tensor::from({4, 1}, col), Tensor::from({1}, {g}), Tensor::from({1}, {b}),
                      stats, true);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(y.data()[i], g * (col[i] - mu) / std::sqrt(var + 1e-5) + b, 1e-10);
  // running stats: momentum 0.1, unbiased variance
  EXPECT_NEAR(stats.running_mean[0], 0.1 * mu, 1e-15);
  EXPECT_NEAR(stats.running_var[0], 0.9 + 0.1 * var * 4.0 / 3.0, 1e-15);
}

TEST(BatchNorm, EvalModeUsesRunningStats) {
  BatchNormStats stats(1);
  stats.running_mean = {2.0};
  stats.running_var = {4.0};
  auto y = batch_norm(Tensor::from({2, 1}, {2.0, 6.0}), Tensor::ones({1}), Tensor::zeros({1}),
                      stats, false);
  EXPECT_NEAR(y.data()[0], 0.0, 1e-15);
  EXPECT_NEAR(y.data()[1], 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(stats.running_mean[0], 2.0);
}

TEST(Linear, IdentityWeight) {
  auto x = Tensor::from({2, 2}, {1.5, -2, 0.25, 8});
  auto y = linear(x, Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2}));
  EXPECT_EQ(y.to_vector(), x.to_vector());
}

TEST(Linear, HandExample) {
  const double x0 = 0.5, x1 = -2.0;
  const double w[2][2] = {{1.0, 2.0}, {3.0, -1.0}};
  auto y = linear(Tensor::from({1, 2}, {x0, x1}), Tensor::from({2, 2}, {1, 2, 3, -1}),
                  Tensor::from({2}, {0.1, 0.2}));
  EXPECT_NEAR(y.data()[0], x0 * w[0][0] + x1 * w[1][0] + 0.1, 1e-12);
  EXPECT_NEAR(y.data()[1], x0 * w[0][1] + x1 * w[1][1] + 0.2, 1e-12);
}

TEST(Linear, ZeroInputBroadcastsBias) {
  std::mt19937_64 rng(2);
  auto y = linear(Tensor::zeros({3, 4}), random_tensor({4, 2}, rng), Tensor::from({2}, {1, -1}));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(y.at({r, 0}), 1.0);
    EXPECT_EQ(y.at({r, 1}), -1.0);
  }
}

TEST(Linear, DimMismatchThrows) {
  EXPECT_THROW(linear(Tensor::zeros({2, 3}), Tensor::zeros({2, 2})), DimensionError);
}

TEST(Backward, SumGivesOnes) {
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}).set_requires_grad();
  backward(sum(x));
  EXPECT_EQ(x.grad().to_vector(), std::vector<double>(6, 1.0));
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  auto x = Tensor::from({3}, {1.5, -2, 0.25}).set_requires_grad();
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad().to_vector(), (std::vector<double>{3.0, -4.0, 0.5}));
}

TEST(Backward, NonScalarLossIsContractError) {
  auto x = Tensor::from({2}, {1, 2}).set_requires_grad();
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, AccumulatesAcrossCalls) {
  auto x = Tensor::from({2}, {1, 2}).set_requires_grad();
  backward(sum(x));
  backward(sum(x));
  EXPECT_EQ(x.grad().to_vector(), (std::vector<double>{2, 2}));
  x.zero_grad();
  EXPECT_EQ(x.grad().to_vector(), (std::vector<double>{0, 0}));
}

TEST(Backward, NoGradGuardSkipsRecording) {
  auto x = Tensor::from({2}, {1, 2}).set_requires_grad();
  NoGradGuard guard;
  EXPECT_FALSE(sum(x).requires_grad());
}

TEST(Numerics, NonFiniteResultIsSurfaced) {
  EXPECT_THROW(adavsr::exp(Tensor::scalar(1000.0)), NumericError);
}

TEST(Numerics, ForwardIsDeterministic) {
  std::mt19937_64 a(5), b(5);
  auto x1 = random_tensor({8, 4}, a);
  auto x2 = random_tensor({8, 4}, b);
  auto w = Tensor::from({3, 4, 2}, std::vector<double>(24, 0.3));
  auto y1 = softmax(conv1d(x1, w, 1, 1), 1);
  auto y2 = softmax(conv1d(x2, w, 1, 1), 1);
  EXPECT_EQ(y1.to_vector(), y2.to_vector());
}

TEST(FiniteDiff, SumIsExact) {
  std::mt19937_64 rng(11);
  auto x = random_tensor({3, 4}, rng);
  EXPECT_LT(finite_diff_check([](const Tensor& t) { return sum(t); }, x), 1e-9);
}

TEST(FiniteDiff, SoftmaxThenDot) {
  std::mt19937_64 rng(12);
  auto x = random_tensor({6}, rng);
  auto w = random_tensor({6}, rng);
  EXPECT_LT(finite_diff_check([&](const Tensor& t) { return sum(mul(softmax(t, 0), w)); }, x),
            1e-4);
}

// Every differentiable op against central differences on float64 inputs in
// [-1, 1] with at most 64 elements.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(100 + GetParam());
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto w = random_tensor({4, 2}, rng);
  auto row = random_tensor({4}, rng);

  std::vector<std::pair<std::string, std::function<Tensor()>>> cases = {
      {"add", [&] { return weighted_sum(add(a, b)); }},
      {"sub", [&] { return weighted_sum(sub(a, b)); }},
      {"mul", [&] { return weighted_sum(mul(a, b)); }},
      {"scale", [&] { return weighted_sum(scale(a, -1.7)); }},
      {"add_row", [&] { return weighted_sum(add_row(a, row)); }},
      {"mul_row", [&] { return weighted_sum(mul_row(a, row)); }},
      {"relu", [&] { return weighted_sum(relu(a)); }},
      {"sigmoid", [&] { return weighted_sum(sigmoid(a)); }},
      {"tanh", [&] { return weighted_sum(adavsr::tanh(a)); }},
      {"exp", [&] { return weighted_sum(adavsr::exp(a)); }},
      {"swish", [&] { return weighted_sum(swish(a)); }},
      {"mean", [&] { return mean(mul(a, b)); }},
      {"matmul", [&] { return weighted_sum(matmul(a, w)); }},
      {"transpose", [&] { return weighted_sum(transpose(a)); }},
      {"permute", [&] { return weighted_sum(permute(reshape(a, {3, 2, 2}), {2, 0, 1})); }},
      {"slice_rows", [&] { return weighted_sum(slice_rows(a, 1, 3)); }},
      {"slice_cols", [&] { return weighted_sum(slice_cols(a, 1, 3)); }},
      {"concat_rows", [&] { return weighted_sum(concat_rows({a, b})); }},
      {"concat_cols", [&] { return weighted_sum(concat_cols({a, b})); }},
      {"gather_rows", [&] { return weighted_sum(gather_rows(a, {2, 0, 2, 1})); }},
      {"softmax0", [&] { return weighted_sum(softmax(a, 0)); }},
      {"softmax1", [&] { return weighted_sum(softmax(a, 1)); }},
      {"log_softmax", [&] { return weighted_sum(log_softmax(a)); }},
      {"row_l1_normalize", [&] { return weighted_sum(row_l1_normalize(a)); }},
      {"linear", [&] { return weighted_sum(linear(a, w, slice_rows(row, 0, 2))); }},
      {"conv1d", [&] { return weighted_sum(conv1d(a, reshape(concat_rows({w, w, w}), {3, 4, 2}), 2, 1)); }},
      {"depthwise_conv1d", [&] { return weighted_sum(depthwise_conv1d(a, reshape(w, {2, 4}), 1)); }},
      {"conv2d", [&] { return weighted_sum(conv2d(reshape(a, {1, 3, 2, 2}), reshape(concat_rows({w, w}), {2, 2, 2, 2}), 1, 1)); }},
      {"batch_norm_train", [&] {
         static BatchNormStats stats(4);
         return weighted_sum(batch_norm(a, row, reshape(slice_rows(b, 0, 1), {4}), stats, true));
       }},
      {"batch_norm_eval", [&] {
         BatchNormStats stats(4);
         stats.running_mean = {0.1, -0.2, 0.3, 0.0};
         stats.running_var = {0.5, 1.5, 2.0, 1.0};
         return weighted_sum(batch_norm(a, row, reshape(slice_rows(b, 0, 1), {4}), stats, false));
       }},
      {"layer_norm", [&] { return weighted_sum(layer_norm(a, row, reshape(slice_rows(b, 1, 2), {4}))); }},
  };
  for (auto& [name, f] : cases) {
    const double err = finite_diff_check(f, {a, b, w, row});
    EXPECT_LT(err, 1e-4) << name;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomInputs, OpGradient, ::testing::Range(0, 3));

TEST(ParameterStore, UniformInitBoundsAndJsonRoundTrip) {
  ParameterStore store(42);
  Linear lin(store, "lin", 9, 4);
  for (double v : lin.weight.data()) EXPECT_LE(std::abs(v), 1.0 / 3.0);
  EXPECT_EQ(store.parameter_count(), 9u * 4u + 4u);

  ParameterStore other(7);
  Linear lin2(other, "lin", 9, 4);
  other.load_json(store.to_json());
  EXPECT_EQ(lin2.weight.to_vector(), lin.weight.to_vector());

  ParameterStore wrong(1);
  Linear lin3(wrong, "lin", 9, 5);
  EXPECT_THROW(wrong.load_json(store.to_json()), InputError);
}

TEST(BatchNorm, UtteranceStatsInEvalMatchTrainingOutputWithoutUpdating) {
  std::mt19937_64 rng(41);
  const Tensor x = adavsr::testing::random_tensor({6, 3}, rng, -2.0, 5.0);
  const Tensor gamma = adavsr::testing::random_tensor({3}, rng), beta = adavsr::testing::random_tensor({3}, rng);
  BatchNormStats train_stats(3), eval_stats(3);
  eval_stats.utterance_stats = true;
  const Tensor y_train = batch_norm(x, gamma, beta, train_stats, true);
  const Tensor y_eval = batch_norm(x, gamma, beta, eval_stats, false);
  EXPECT_EQ(y_train.to_vector(), y_eval.to_vector());
  EXPECT_EQ(eval_stats.running_mean, std::vector<double>(3, 0.0));
  EXPECT_EQ(eval_stats.running_var, std::vector<double>(3, 1.0));
  EXPECT_NE(train_stats.running_mean, std::vector<double>(3, 0.0));

  Tensor xg = x.detach().set_requires_grad();
  const double err = finite_diff_check(
      [&](const Tensor& in) { return adavsr::testing::weighted_sum(batch_norm(in, gamma, beta, eval_stats, false)); },
      xg);
  EXPECT_LT(err, 1e-6);
}
