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


#include "adavsr/seqloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adavsr/errors.hpp"

namespace adavsr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

Tensor glu(const Tensor& x) {
  const std::size_t half = x.dim(1) / 2;
  return mul(slice_cols(x, 0, half), sigmoid(slice_cols(x, half, 2 * half)));
}

}  // namespace

Tensor positional_encoding(std::size_t length, std::size_t width) {
  std::vector<double> pe(length * width);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / width);
      const double angle = static_cast<double>(t) * rate;
      pe[t * width + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({length, width}, std::move(pe));
}

Tensor causal_mask(std::size_t n) {
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -1e30;
  return Tensor::from({n, n}, std::move(m));
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name,
                                       std::size_t width, std::size_t heads_)
    : q(store, name + ".q", width, width),
      k(store, name + ".k", width, width),
      v(store, name + ".v", width, width),
      o(store, name + ".o", width, width),
      heads(heads_) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory,
                                      const Tensor& mask) const {
  const std::size_t width = q.weight.dim(1), dh = width / heads;
  Tensor Q = q(query), K = k(memory), V = v(memory);
  const double scale_by = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(Q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(K, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(V, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), scale_by);
    if (mask.node()) scores = scores + mask;
    parts.push_back(matmul(softmax(scores, 1), vh));
  }
  return o(heads == 1 ? parts.front() : concat_cols(parts));
}

F0Projection::F0Projection(ParameterStore& store, const std::string& name,
                           std::size_t model_dim) {
  if (model_dim % 2 != 0) throw ConfigError("f0 projection needs an even model width");
  first = Linear(store, name + ".first", 2 * model_dim, model_dim);
  second = Linear(store, name + ".second", model_dim, model_dim / 2);
}

ConformerLayer::ConformerLayer(ParameterStore& store, const std::string& name,
                               const EncoderConfig& cfg) {
  const std::size_t d = cfg.width;
  if (cfg.conv_kernel % 2 == 0) throw ConfigError("conformer conv kernel must be odd");
  ff1_norm = LayerNorm(store, name + ".ff1_norm", d);
  ff1_in = Linear(store, name + ".ff1_in", d, cfg.ff_width);
  ff1_out = Linear(store, name + ".ff1_out", cfg.ff_width, d);
  attn_norm = LayerNorm(store, name + ".attn_norm", d);
  attn = MultiHeadAttention(store, name + ".attn", d, cfg.heads);
  conv_norm = LayerNorm(store, name + ".conv_norm", d);
  pointwise_in = Linear(store, name + ".pw_in", d, 2 * d);
  depthwise = store.uniform(name + ".depthwise", {cfg.conv_kernel, d}, cfg.conv_kernel);
  conv_bn = BatchNorm(store, name + ".conv_bn", d);
  pointwise_out = Linear(store, name + ".pw_out", d, d);
  ff2_norm = LayerNorm(store, name + ".ff2_norm", d);
  ff2_in = Linear(store, name + ".ff2_in", d, cfg.ff_width);
  ff2_out = Linear(store, name + ".ff2_out", cfg.ff_width, d);
  out_norm = LayerNorm(store, name + ".out_norm", d);
}

Tensor ConformerLayer::operator()(const Tensor& x, bool training) const {
  Tensor h = x + scale(ff1_out(swish(ff1_in(ff1_norm(x)))), 0.5);
  Tensor a = attn_norm(h);
  h = h + attn(a, a);
  Tensor c = glu(pointwise_in(conv_norm(h)));
  c = depthwise_conv1d(c, depthwise, (depthwise.dim(0) - 1) / 2);
  h = h + pointwise_out(swish(conv_bn(c, training)));
  h = h + scale(ff2_out(swish(ff2_in(ff2_norm(h)))), 0.5);
  return out_norm(h);
}

ConformerEncoder::ConformerEncoder(ParameterStore& store, const std::string& name,
                                   const EncoderConfig& cfg)
    : cfg_(cfg) {
  for (std::size_t i = 0; i < cfg.layers; ++i)
    layers_.emplace_back(store, name + ".layer" + std::to_string(i), cfg);
}

Tensor ConformerEncoder::operator()(const Tensor& f0, bool training) const {
  if (f0.rank() != 2 || f0.dim(1) != cfg_.width || f0.dim(0) == 0) {
    throw DimensionError("conformer: expected [T, " + std::to_string(cfg_.width) + "], got " +
                         shape_to_string(f0.shape()));
  }
  Tensor h = f0 + positional_encoding(f0.dim(0), cfg_.width);
  for (const auto& layer : layers_) h = layer(h, training);
  return h;
}

TransformerDecoder::TransformerDecoder(ParameterStore& store, const std::string& name,
                                       const DecoderConfig& cfg)
    : cfg_(cfg) {
  if (cfg.vocab < 2) throw ConfigError("decoder vocabulary must have at least two tokens");
  const std::size_t d = cfg.width;
  embedding_ = store.uniform(name + ".embedding", {cfg.vocab, d}, 1);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string p = name + ".layer" + std::to_string(i);
    Layer l;
    l.self_norm = LayerNorm(store, p + ".self_norm", d);
    l.self_attn = MultiHeadAttention(store, p + ".self_attn", d, cfg.heads);
    l.cross_norm = LayerNorm(store, p + ".cross_norm", d);
    l.cross_attn = MultiHeadAttention(store, p + ".cross_attn", d, cfg.heads);
    l.ff_norm = LayerNorm(store, p + ".ff_norm", d);
    l.ff_in = Linear(store, p + ".ff_in", d, cfg.ff_width);
    l.ff_out = Linear(store, p + ".ff_out", cfg.ff_width, d);
    layers_.push_back(std::move(l));
  }
  final_norm_ = LayerNorm(store, name + ".final_norm", d);
  out_ = Linear(store, name + ".out", d, cfg.vocab);
}

Tensor TransformerDecoder::operator()(const Tensor& f1, const std::vector<int>& tokens) const {
  if (tokens.empty()) throw InputError("decoder: empty token sequence");
  if (f1.rank() != 2 || f1.dim(1) != cfg_.width) {
    throw DimensionError("decoder: memory " + shape_to_string(f1.shape()) +
                         " does not match width " + std::to_string(cfg_.width));
  }
  std::vector<std::size_t> ids(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= cfg_.vocab)
      throw InputError("decoder: token " + std::to_string(tokens[i]) + " out of range");
    ids[i] = static_cast<std::size_t>(tokens[i]);
  }
  const std::size_t L = ids.size();
  Tensor h = gather_rows(embedding_, ids) + positional_encoding(L, cfg_.width);
  const Tensor mask = causal_mask(L);
  for (const auto& l : layers_) {
    Tensor s = l.self_norm(h);
    h = h + l.self_attn(s, s, mask);
    h = h + l.cross_attn(l.cross_norm(h), f1);
    h = h + l.ff_out(relu(l.ff_in(l.ff_norm(h))));
  }
  return out_(final_norm_(h));
}

CtcLoss ctc_loss(const Tensor& log_probs, const std::vector<int>& target, int blank) {
  if (log_probs.rank() != 2) {
    throw DimensionError("ctc_loss: expected [T, V], got " + shape_to_string(log_probs.shape()));
  }
  const std::size_t T = log_probs.dim(0), V = log_probs.dim(1);
  if (blank < 0 || static_cast<std::size_t>(blank) >= V) throw InputError("ctc_loss: bad blank id");
  std::size_t repeats = 0;
  for (std::size_t u = 0; u < target.size(); ++u) {
    const int c = target[u];
    if (c < 0 || static_cast<std::size_t>(c) >= V || c == blank)
      throw InputError("ctc_loss: target token " + std::to_string(c) + " is not a label");
    if (u > 0 && target[u - 1] == c) ++repeats;
  }
  if (T == 0 || T < target.size() + repeats) {
    return {Tensor::scalar(std::numeric_limits<double>::infinity()), false};
  }

  // blank-interleaved target l' of length S = 2U + 1
  const std::size_t S = 2 * target.size() + 1;
  std::vector<std::size_t> ext(S, static_cast<std::size_t>(blank));
  for (std::size_t u = 0; u < target.size(); ++u) ext[2 * u + 1] = static_cast<std::size_t>(target[u]);
  auto skip_allowed = [&](std::size_t s) {
    return s >= 2 && ext[s] != static_cast<std::size_t>(blank) && ext[s] != ext[s - 2];
  };

  auto lp = log_probs.data();
  std::vector<double> alpha(T * S, kNegInf), beta(T * S, kNegInf);
  alpha[0] = lp[ext[0]];
  if (S > 1) alpha[1] = lp[ext[1]];
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (skip_allowed(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      if (a != kNegInf) alpha[t * S + s] = a + lp[t * V + ext[s]];
    }
  beta[(T - 1) * S + S - 1] = lp[(T - 1) * V + ext[S - 1]];
  if (S > 1) beta[(T - 1) * S + S - 2] = lp[(T - 1) * V + ext[S - 2]];
  for (std::size_t t = T - 1; t-- > 0;)
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s];
      if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && skip_allowed(s + 2)) b = log_add(b, beta[(t + 1) * S + s + 2]);
      if (b != kNegInf) beta[t * S + s] = b + lp[t * V + ext[s]];
    }
  double log_z = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_z = log_add(log_z, alpha[(T - 1) * S + S - 2]);

  Tensor loss = make_op_result(
      "ctc_loss", {1}, {-log_z}, {log_probs},
      [=, alpha = std::move(alpha), beta = std::move(beta), ext = std::move(ext)](
          std::span<const double> g, std::span<const double>) {
        auto gx = grad_buffer(log_probs);
        auto lp = log_probs.data();
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t s = 0; s < S; ++s) {
            const double ab = alpha[t * S + s] + beta[t * S + s];
            if (ab == kNegInf) continue;
            const std::size_t k = ext[s];
            gx[t * V + k] -= g[0] * std::exp(ab - lp[t * V + k] - log_z);
          }
      });
  return {loss, true};
}

Tensor attention_loss(const Tensor& logits, const std::vector<int>& target, double smoothing) {
  if (logits.rank() != 2 || logits.dim(0) != target.size() || target.empty()) {
    throw DimensionError("attention_loss: logits " + shape_to_string(logits.shape()) + " vs " +
                         std::to_string(target.size()) + " targets");
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0))
    throw ConfigError("attention_loss: smoothing must be in [0, 1)");
  const std::size_t L = logits.dim(0), V = logits.dim(1);
  const double on = 1.0 - smoothing, off = V > 1 ? smoothing / static_cast<double>(V - 1) : 0.0;
  auto xlogx = [](double q) { return q > 0.0 ? q * std::log(q) : 0.0; };
  const double neg_entropy = xlogx(on) + static_cast<double>(V - 1) * xlogx(off);

  auto z = logits.data();
  std::vector<double> probs(L * V);
  double total = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const int y = target[l];
    if (y < 0 || static_cast<std::size_t>(y) >= V)
      throw InputError("attention_loss: target token " + std::to_string(y) + " out of range");
    const double* row = &z[l * V];
    const double m = *std::max_element(row, row + V);
    double se = 0.0;
    for (std::size_t v = 0; v < V; ++v) se += std::exp(row[v] - m);
    const double lse = m + std::log(se);
    double cross = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      const double logp = row[v] - lse;
      probs[l * V + v] = std::exp(logp);
      const double q = v == static_cast<std::size_t>(y) ? on : off;
      if (q > 0.0) cross -= q * logp;
    }
    total += neg_entropy + cross;
  }
  std::vector<int> tgt = target;
  return make_op_result(
      "attention_loss", {1}, {total / static_cast<double>(L)}, {logits},
      [=, probs = std::move(probs), tgt = std::move(tgt)](std::span<const double> g,
                                                          std::span<const double>) {
        auto gx = grad_buffer(logits);
        const double w = g[0] / static_cast<double>(L);
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t v = 0; v < V; ++v) {
            const double q = v == static_cast<std::size_t>(tgt[l]) ? on : off;
            gx[l * V + v] += w * (probs[l * V + v] - q);
          }
      });
}

Tensor combined_loss(const Tensor& ctc, const Tensor& att, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("combined_loss: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  return scale(att, lambda) + scale(ctc, 1.0 - lambda);
}

std::vector<int> greedy_decode(const Tensor& log_probs, int blank) {
  if (log_probs.rank() != 2) {
    throw DimensionError("greedy_decode: expected [T, V], got " + shape_to_string(log_probs.shape()));
  }
  const std::size_t T = log_probs.dim(0), V = log_probs.dim(1);
  auto lp = log_probs.data();
  std::vector<int> out;
  int previous = -1;
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = &lp[t * V];
    const int best = static_cast<int>(std::max_element(row, row + V) - row);
    if (best != blank && best != previous) out.push_back(best);
    previous = best;
  }
  return out;
}

}  // namespace adavsr
