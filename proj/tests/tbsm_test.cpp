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
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "adavsr/gradcheck.hpp"
#include "adavsr/tbsm.hpp"
#include "test_util.hpp"

using namespace adavsr;
using adavsr::testing::random_tensor;
using adavsr::testing::weighted_sum;

namespace {

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

LstmParams random_lstm(std::mt19937_64& rng, std::size_t in, std::size_t hidden) {
  return {random_tensor({in, 4 * hidden}, rng), random_tensor({hidden, 4 * hidden}, rng),
          random_tensor({4 * hidden}, rng)};
}

bool row_stochastic_or_zero(const Tensor& g) {
  const std::size_t n = g.dim(1);
  for (std::size_t i = 0; i < g.dim(0); ++i) {
    double s = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = g.at({i, j});
      if (v < 0.0) return false;
      any = any || v != 0.0;
      s += v;
    }
    if (any && std::abs(s - 1.0) > 1e-12) return false;
  }
  return true;
}

}  // namespace

TEST(Lstm, SingleStepSameBothDirections) {
  std::mt19937_64 rng(1);
  auto p = random_lstm(rng, 3, 4);
  auto x = random_tensor({1, 3}, rng);
  EXPECT_EQ(lstm(x, p, false).to_vector(), lstm(x, p, true).to_vector());
}

TEST(Lstm, ZeroParametersGiveZeroOutput) {
  LstmParams p{Tensor::zeros({3, 8}), Tensor::zeros({2, 8}), Tensor::zeros({8})};
  std::mt19937_64 rng(2);
  auto h = lstm(random_tensor({5, 3}, rng), p);
  for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, TwoStepScalarOracle) {
  // one input, one hidden unit; gate weights (i, f, g, o)
  const double w[4] = {0.5, -0.3, 0.8, 0.2}, u[4] = {-0.6, 0.4, 0.9, -0.1},
               b[4] = {0.1, 1.0, -0.2, 0.05};
  const double x[2] = {0.7, -1.1};
  LstmParams p{Tensor::from({1, 4}, {w[0], w[1], w[2], w[3]}),
               Tensor::from({1, 4}, {u[0], u[1], u[2], u[3]}),
               Tensor::from({4}, {b[0], b[1], b[2], b[3]})};
  auto step = [&](double xt, double h, double c, double& h_out, double& c_out) {
    const double i = logistic(w[0] * xt + u[0] * h + b[0]);
    const double f = logistic(w[1] * xt + u[1] * h + b[1]);
    const double g = std::tanh(w[2] * xt + u[2] * h + b[2]);
    const double o = logistic(w[3] * xt + u[3] * h + b[3]);
    c_out = f * c + i * g;
    h_out = o * std::tanh(c_out);
  };
  double h0, c0, h1, c1;
  step(x[0], 0.0, 0.0, h0, c0);
  step(x[1], h0, c0, h1, c1);
  auto fwd = lstm(Tensor::from({2, 1}, {x[0], x[1]}), p, false);
  EXPECT_NEAR(fwd.data()[0], h0, 1e-10);
  EXPECT_NEAR(fwd.data()[1], h1, 1e-10);
  double r1, rc1, r0, rc0;
  step(x[1], 0.0, 0.0, r1, rc1);
  step(x[0], r1, rc1, r0, rc0);
  auto bwd = lstm(Tensor::from({2, 1}, {x[0], x[1]}), p, true);
  EXPECT_NEAR(bwd.data()[0], r0, 1e-10);
  EXPECT_NEAR(bwd.data()[1], r1, 1e-10);
}

TEST(Lstm, GradientCheckBothDirections) {
  std::mt19937_64 rng(3);
  auto p = random_lstm(rng, 3, 2);
  auto x = random_tensor({4, 3}, rng);
  for (bool reverse : {false, true}) {
    auto loss = [&] { return weighted_sum(lstm(x, p, reverse)); };
    EXPECT_LT(finite_diff_check(loss, {x, p.w, p.u, p.b}), 1e-4) << "reverse=" << reverse;
  }
}

TEST(BiLstm, ShapeAndForgetBias) {
  ParameterStore store(4);
  BiLstm bi(store, "l", 5, 3);
  std::mt19937_64 rng(5);
  EXPECT_EQ(bi(random_tensor({7, 5}, rng)).shape(), (Shape{7, 6}));
  EXPECT_EQ(bi.fwd.b.to_vector(), (std::vector<double>{0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(bi.bwd.b.to_vector(), bi.fwd.b.to_vector());
}

TEST(ConnectionStrength, OrthogonalRowsGiveZero) {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto v = Tensor::from({2, 2}, {1, 0, 2, 0});
  auto a = Tensor::from({2, 2}, {0, 3, 0, -1});
  auto beta = connection_strength(v, a, eye, eye);
  for (double x : beta.beta_va.data()) EXPECT_EQ(x, 0.0);
}

TEST(ConnectionStrength, IdenticalRowsScaledSquaredNorm) {
  const std::vector<double> row{0.5, -1.0, 2.0, 0.25};
  auto eye = Tensor::from({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  auto x = Tensor::from({1, 4}, row);
  auto beta = connection_strength(x, x, eye, eye);
  double sq = 0.0;
  for (double r : row) sq += r * r;
  EXPECT_NEAR(beta.beta_va.item(), sq / std::sqrt(4.0), 1e-14);
}

TEST(ConnectionStrength, TransposeIdentityBitExact) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng() % 9, W = 2 * (1 + rng() % 4);
    auto beta = connection_strength(random_tensor({T, W}, rng), random_tensor({T, W}, rng),
                                    random_tensor({W, W}, rng), random_tensor({W, W}, rng));
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j)
        EXPECT_EQ(beta.beta_av.at({i, j}), beta.beta_va.at({j, i}));
  }
}

TEST(ConnectionStrength, LengthMismatchThrows) {
  auto w = Tensor::zeros({2, 2});
  EXPECT_THROW(connection_strength(Tensor::zeros({3, 2}), Tensor::zeros({2, 2}), w, w),
               DimensionError);
}

TEST(PruneNormalize, WorkedRow) {
  auto g = prune_normalize(Tensor::from({1, 3}, {0.3, 0.1, -0.2}), 0.095);
  EXPECT_NEAR(g.at({0, 0}), 0.75, 1e-15);
  EXPECT_NEAR(g.at({0, 1}), 0.25, 1e-15);
  EXPECT_EQ(g.at({0, 2}), 0.0);
}

TEST(PruneNormalize, ThresholdDropsSmallShares) {
  // shares after the first normalization: 0.6, 0.3, 0.1 -> 0.1 falls below 0.2
  auto g = prune_normalize(Tensor::from({1, 3}, {0.6, 0.3, 0.1}), 0.2);
  EXPECT_NEAR(g.at({0, 0}), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.at({0, 1}), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(g.at({0, 2}), 0.0);
}

TEST(PruneNormalize, ZeroTauKeepsPositiveSupport) {
  std::mt19937_64 rng(7);
  auto beta = random_tensor({5, 5}, rng, 0.01, 2.0);
  auto g = prune_normalize(beta, 0.0);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_GT(g.at({i, j}), 0.0);
      s += g.at({i, j});
    }
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
}

TEST(PruneNormalize, TauAboveOneZeroesEverything) {
  std::mt19937_64 rng(8);
  auto g = prune_normalize(random_tensor({6, 6}, rng), 1.01);
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(PruneNormalize, NegativeRowStaysZero) {
  auto g = prune_normalize(Tensor::from({2, 2}, {-1.0, -2.0, 1.0, 1.0}), 0.1);
  EXPECT_EQ(g.to_vector(), (std::vector<double>{0.0, 0.0, 0.5, 0.5}));
}

TEST(PruneNormalize, NegativeTauRejected) {
  EXPECT_THROW(prune_normalize(Tensor::zeros({2, 2}), -0.1), ConfigError);
}

TEST(PruneNormalize, RowStochasticOrZeroAndMonotoneInTau) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> tau_dist(0.0, 0.6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 1 + rng() % 8;
    auto beta = random_tensor({T, T}, rng);
    double t1 = tau_dist(rng), t2 = tau_dist(rng);
    if (t2 < t1) std::swap(t1, t2);
    auto g1 = prune_normalize(beta, t1);
    auto g2 = prune_normalize(beta, t2);
    ASSERT_TRUE(row_stochastic_or_zero(g1));
    ASSERT_TRUE(row_stochastic_or_zero(g2));
    for (std::size_t i = 0; i < g1.size(); ++i)
      if (g2.data()[i] != 0.0) ASSERT_NE(g1.data()[i], 0.0) << "trial " << trial;
  }
}

TEST(PruneNormalize, GradientCheck) {
  std::mt19937_64 rng(10);
  auto beta = random_tensor({4, 4}, rng);
  EXPECT_LT(finite_diff_check([](const Tensor& b) { return weighted_sum(prune_normalize(b, 0.15)); },
                              beta),
            1e-4);
}

TEST(Aggregate, ZeroGammaIsIdentity) {
  std::mt19937_64 rng(11);
  auto a = random_tensor({3, 4}, rng), v = random_tensor({3, 4}, rng);
  auto w = random_tensor({4, 4}, rng);
  auto out = aggregate(a, v, Tensor::zeros({3, 3}), Tensor::zeros({3, 3}), w, w);
  EXPECT_EQ(out.a_psp.to_vector(), a.to_vector());
  EXPECT_EQ(out.v_psp.to_vector(), v.to_vector());
}

TEST(Aggregate, IdentityGammaAndWeightsAddStreams) {
  std::mt19937_64 rng(12);
  auto a = random_tensor({2, 2}, rng), v = random_tensor({2, 2}, rng);
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto out = aggregate(a, v, eye, eye, eye, eye);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(out.a_psp.data()[i], v.data()[i] + a.data()[i]);
    EXPECT_EQ(out.v_psp.data()[i], a.data()[i] + v.data()[i]);
  }
}

TEST(Aggregate, RandomInstanceMatchesMatrixOracle) {
  std::mt19937_64 rng(13);
  const std::size_t T = 2, W = 3;
  auto a = random_tensor({T, W}, rng), v = random_tensor({T, W}, rng);
  auto g_av = random_tensor({T, T}, rng, 0, 1), g_va = random_tensor({T, T}, rng, 0, 1);
  auto w2v = random_tensor({W, W}, rng), w2a = random_tensor({W, W}, rng);
  auto out = aggregate(a, v, g_av, g_va, w2v, w2a);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < W; ++c) {
      double ya = a.at({t, c}), yv = v.at({t, c});
      for (std::size_t s = 0; s < T; ++s)
        for (std::size_t q = 0; q < W; ++q) {
          ya += g_av.at({t, s}) * v.at({s, q}) * w2v.at({q, c});
          yv += g_va.at({t, s}) * a.at({s, q}) * w2a.at({q, c});
        }
      EXPECT_NEAR(out.a_psp.at({t, c}), ya, 1e-10);
      EXPECT_NEAR(out.v_psp.at({t, c}), yv, 1e-10);
    }
}

TEST(Tbsm, FuseIdentityAndZeroVisual) {
  ParameterStore store(14);
  Tbsm module(store, "s", 2, 0.095);
  for (const auto& [name, p] : store.parameters()) {
    if (name.find("fuse") == std::string::npos) continue;
    auto d = Tensor(p).mutable_data();
    const bool weight = p.rank() == 2;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = weight && i % 5 == 0 ? 1.0 : 0.0;
  }
  std::mt19937_64 rng(15);
  auto a = random_tensor({3, 4}, rng);
  EXPECT_EQ(module.fuse(a, Tensor::zeros({3, 4})).to_vector(), a.to_vector());
}

TEST(Tbsm, FuseZeroInputsGiveBiasSum) {
  ParameterStore store(16);
  Tbsm module(store, "s", 2, 0.095);
  std::mt19937_64 rng(17);
  std::vector<double> ba, bv;
  for (const auto& [name, p] : store.parameters()) {
    if (name.find("fuse") == std::string::npos || p.rank() != 1) continue;
    auto d = Tensor(p).mutable_data();
    for (double& x : d) x = std::uniform_real_distribution<double>(-1, 1)(rng);
    (name.find("fuse_a") != std::string::npos ? ba : bv) = Tensor(p).to_vector();
  }
  auto y = module.fuse(Tensor::zeros({2, 4}), Tensor::zeros({2, 4}));
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y.at({t, c}), ba[c] + bv[c]);
}

TEST(Tbsm, FuseRandomScalarOracle) {
  ParameterStore store(18);
  Tbsm module(store, "s", 1, 0.095);
  std::mt19937_64 rng(19);
  auto a = random_tensor({2, 2}, rng), v = random_tensor({2, 2}, rng);
  Tensor wa, ba, wv, bv;
  for (const auto& [name, p] : store.parameters()) {
    if (name == "s.fuse_a.weight") wa = p;
    if (name == "s.fuse_a.bias") ba = p;
    if (name == "s.fuse_v.weight") wv = p;
    if (name == "s.fuse_v.bias") bv = p;
  }
  ASSERT_TRUE(wa.node() && ba.node() && wv.node() && bv.node());
  for (double& x : ba.mutable_data()) x = 0.3;
  for (double& x : bv.mutable_data()) x = -0.1;
  auto y = module.fuse(a, v);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t o = 0; o < 2; ++o) {
      double oracle = ba.data()[o] + bv.data()[o];
      for (std::size_t i = 0; i < 2; ++i)
        oracle += a.at({t, i}) * wa.at({i, o}) + v.at({t, i}) * wv.at({i, o});
      EXPECT_NEAR(y.at({t, o}), oracle, 1e-10);
    }
}

TEST(Tbsm, InfiniteTauPassesLstmOutputsThrough) {
  ParameterStore store(20);
  Tbsm module(store, "s", 3, std::numeric_limits<double>::infinity());
  std::mt19937_64 rng(21);
  auto out = module(random_tensor({5, 3}, rng), random_tensor({5, 3}, rng));
  for (double g : out.gamma_av.data()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(out.a_psp.to_vector(), out.a_lstm.to_vector());
  EXPECT_EQ(out.v_psp.to_vector(), out.v_lstm.to_vector());
}

TEST(Tbsm, ForwardShapesAndGammaRows) {
  ParameterStore store(22);
  Tbsm module(store, "s", 4, 0.095);
  std::mt19937_64 rng(23);
  auto out = module(random_tensor({6, 4}, rng), random_tensor({6, 4}, rng));
  EXPECT_EQ(out.fusion.shape(), (Shape{6, 8}));
  EXPECT_EQ(out.gamma_va.shape(), (Shape{6, 6}));
  EXPECT_TRUE(row_stochastic_or_zero(out.gamma_va));
  EXPECT_TRUE(row_stochastic_or_zero(out.gamma_av));
}

TEST(Tbsm, GradientCheckTinyShapes) {
  ParameterStore store(24);
  Tbsm module(store, "s", 3, 0.095);
  std::mt19937_64 rng(25);
  auto a = random_tensor({2, 3}, rng), v = random_tensor({2, 3}, rng);
  std::vector<Tensor> leaves{a, v};
  for (const auto& [_, p] : store.parameters()) leaves.push_back(p);
  auto loss = [&] { return weighted_sum(module(a, v).fusion); };
  EXPECT_LT(finite_diff_check(loss, leaves), 1e-4);
}

TEST(Tbsm, SelectionOffSkipsPairwiseStage) {
  ParameterStore with(26), without(26);
  Tbsm full(with, "s", 3, 0.095), plain(without, "s", 3, 0.095, false);
  EXPECT_GT(with.parameter_count(), without.parameter_count());
  std::mt19937_64 rng(27);
  auto out = plain(random_tensor({4, 3}, rng), random_tensor({4, 3}, rng));
  EXPECT_FALSE(out.gamma_va.node());
  EXPECT_EQ(out.a_psp.to_vector(), out.a_lstm.to_vector());
  EXPECT_EQ(out.v_psp.to_vector(), out.v_lstm.to_vector());
}
