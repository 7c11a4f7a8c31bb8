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


// Threshold-based selection. Both enhanced streams pass through their own
// BiLSTM; every (visual frame, audio frame) pair gets a scaled dot-product
// connection strength, weak pairs are pruned after normalization, and the
// survivors are aggregated residually into each stream before a sum fusion.

#pragma once

#include <string>

#include "adavsr/nn.hpp"
#include "adavsr/tensor.hpp"

namespace adavsr {

struct LstmParams {
  Tensor w;  // [in, 4H], gate order i, f, g, o
  Tensor u;  // [H, 4H]
  Tensor b;  // [4H]
};

/// One-direction LSTM over x[T, in] with zero initial state; returns h[T, H].
/// With `reverse` the sequence is consumed from t = T-1 down to 0 and h[t]
/// is the state after reading x[t].
Tensor lstm(const Tensor& x, const LstmParams& params, bool reverse = false);

class BiLstm {
 public:
  BiLstm() = default;
  /// Forget-gate bias starts at 1, the rest of the bias at 0.
  BiLstm(ParameterStore& store, const std::string& name, std::size_t input, std::size_t hidden);
  /// [T, in] -> [T, 2H], forward states first.
  Tensor operator()(const Tensor& x) const;

  LstmParams fwd, bwd;
};

struct ConnectionStrength {
  Tensor beta_va;  // [T, T], row: visual frame, column: audio frame
  Tensor beta_av;  // transpose of beta_va
};

/// beta_va = (v W1v)(a W1a)^T / sqrt(width), width = 2 D1.
ConnectionStrength connection_strength(const Tensor& v_lstm, const Tensor& a_lstm,
                                       const Tensor& w1_v, const Tensor& w1_a);

/// ReLU, row L1 normalization, zero every entry below tau, row L1
/// normalization again. Rows with nothing left stay all-zero.
Tensor prune_normalize(const Tensor& beta, double tau);

struct Aggregated {
  Tensor a_psp;
  Tensor v_psp;
};

/// a_psp = gamma_av (v W2v) + a,  v_psp = gamma_va (a W2a) + v.
Aggregated aggregate(const Tensor& a_lstm, const Tensor& v_lstm, const Tensor& gamma_av,
                     const Tensor& gamma_va, const Tensor& w2_v, const Tensor& w2_a);

struct TbsmOutput {
  Tensor a_lstm, v_lstm;
  Tensor beta_va, beta_av;
  Tensor gamma_va, gamma_av;
  Tensor a_psp, v_psp;
  Tensor fusion;  // [T, 2 D1]
};

class Tbsm {
 public:
  /// With `selection` off the pairwise stage (and its weights) is left out
  /// and the BiLSTM outputs go straight to fusion.
  Tbsm(ParameterStore& store, const std::string& name, std::size_t model_dim, double tau,
       bool selection = true);

  TbsmOutput operator()(const Tensor& enhanced_a, const Tensor& enhanced_v) const;

  Tensor fuse(const Tensor& a_psp, const Tensor& v_psp) const {
    return fuse_a_(a_psp) + fuse_v_(v_psp);
  }

  double tau() const { return tau_; }
  bool selection() const { return selection_; }
  const BiLstm& audio_lstm() const { return lstm_a_; }
  const BiLstm& visual_lstm() const { return lstm_v_; }

 private:
  BiLstm lstm_a_, lstm_v_;
  Tensor w1_v_, w1_a_, w2_v_, w2_a_;
  Linear fuse_a_, fuse_v_;
  double tau_;
  bool selection_;
};

}  // namespace adavsr
