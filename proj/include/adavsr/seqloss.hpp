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


// Back end and objective: fused features are projected down to f0, encoded
// by a small Conformer into f1, and scored two ways. A CTC head gives
// frame-level log-probabilities; an autoregressive Transformer decoder
// attends to f1 and is trained with a label-smoothed attention loss. The
// training objective mixes the two negative log-likelihoods with weight
// lambda on the attention term.

#pragma once

#include <string>
#include <vector>

#include "adavsr/nn.hpp"
#include "adavsr/tensor.hpp"

namespace adavsr {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t width = 16;
  std::size_t heads = 2;
  std::size_t conv_kernel = 7;
  std::size_t ff_width = 64;
};

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t width = 16;
  std::size_t heads = 2;
  std::size_t ff_width = 64;
  std::size_t vocab = 0;  // including blank, BOS and EOS
};

/// sin/cos table [length, width]: even columns sin(t / 10000^(2i/width)),
/// odd columns the matching cos.
Tensor positional_encoding(std::size_t length, std::size_t width);

/// Additive mask [n, n] with 0 on and below the diagonal and -1e30 above.
Tensor causal_mask(std::size_t n);

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t width,
                     std::size_t heads);
  /// query [Lq, d], memory [Lk, d]; `mask`, when given, is added to every
  /// head's [Lq, Lk] score matrix before the softmax.
  Tensor operator()(const Tensor& query, const Tensor& memory, const Tensor& mask = Tensor()) const;

  Linear q, k, v, o;
  std::size_t heads = 1;
};

/// fusion [T, 2 D1] -> relu(Linear 2D1->D1) -> Linear D1->D1/2.
class F0Projection {
 public:
  F0Projection() = default;
  F0Projection(ParameterStore& store, const std::string& name, std::size_t model_dim);
  Tensor operator()(const Tensor& fusion) const { return second(relu(first(fusion))); }

  Linear first, second;
};

class ConformerLayer {
 public:
  ConformerLayer() = default;
  ConformerLayer(ParameterStore& store, const std::string& name, const EncoderConfig& cfg);
  Tensor operator()(const Tensor& x, bool training) const;

  LayerNorm ff1_norm, attn_norm, conv_norm, ff2_norm, out_norm;
  Linear ff1_in, ff1_out, ff2_in, ff2_out;
  MultiHeadAttention attn;
  Linear pointwise_in, pointwise_out;
  Tensor depthwise;  // [kernel, width]
  BatchNorm conv_bn;
};

class ConformerEncoder {
 public:
  ConformerEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& cfg);
  /// f0 [T, width] -> f1 [T, width]; positional encodings are added first.
  Tensor operator()(const Tensor& f0, bool training) const;

  const std::vector<ConformerLayer>& layers() const { return layers_; }

 private:
  EncoderConfig cfg_;
  std::vector<ConformerLayer> layers_;
};

class TransformerDecoder {
 public:
  TransformerDecoder(ParameterStore& store, const std::string& name, const DecoderConfig& cfg);
  /// f1 [T, width], input tokens (BOS-led) of length L -> logits [L, vocab].
  Tensor operator()(const Tensor& f1, const std::vector<int>& tokens) const;

  const DecoderConfig& config() const { return cfg_; }

  struct Layer {
    LayerNorm self_norm, cross_norm, ff_norm;
    MultiHeadAttention self_attn, cross_attn;
    Linear ff_in, ff_out;
  };
  const std::vector<Layer>& layers() const { return layers_; }
  const Tensor& embedding() const { return embedding_; }

 private:
  DecoderConfig cfg_;
  Tensor embedding_;  // [vocab, width]
  std::vector<Layer> layers_;
  LayerNorm final_norm_;
  Linear out_;
};

/// Linear projection to the vocabulary followed by log-softmax.
class CtcHead {
 public:
  CtcHead(ParameterStore& store, const std::string& name, std::size_t width, std::size_t vocab)
      : proj_(store, name, width, vocab) {}
  Tensor operator()(const Tensor& f1) const { return log_softmax(proj_(f1)); }

 private:
  Linear proj_;
};

struct CtcLoss {
  Tensor loss;  // scalar; +inf (a constant) when infeasible
  bool feasible = true;
};

/// Negative log of the total probability of every frame alignment of
/// `target` (blank-interleaved) under per-frame log-probs [T, V], via the
/// log-space forward recursion. Targets need T >= |target| + number of
/// adjacent repeats; shorter inputs return {+inf, false}. Throws InputError
/// for tokens outside [1, V) or equal to `blank`.
CtcLoss ctc_loss(const Tensor& log_probs, const std::vector<int>& target, int blank = 0);

/// Mean over positions of KL(q_l || softmax(logits_l)), where q_l puts
/// 1 - smoothing on target[l] and smoothing / (V - 1) on every other token.
Tensor attention_loss(const Tensor& logits, const std::vector<int>& target,
                      double smoothing = 0.1);

/// lambda * att + (1 - lambda) * ctc. Throws ConfigError unless lambda is in [0, 1].
Tensor combined_loss(const Tensor& ctc, const Tensor& att, double lambda);

/// Per-frame argmax (lowest index on ties), merge repeats, drop blanks.
std::vector<int> greedy_decode(const Tensor& log_probs, int blank = 0);

}  // namespace adavsr
