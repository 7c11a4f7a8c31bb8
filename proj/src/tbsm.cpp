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


#include "adavsr/tbsm.hpp"

#include <algorithm>
#include <cmath>

#include "adavsr/errors.hpp"

namespace adavsr {

namespace {

double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// Keeps entries >= tau; the kept set is fixed, so the gradient is a mask.
Tensor keep_at_least(const Tensor& x, double tau) {
  auto xv = x.data();
  std::vector<double> y(xv.size());
  std::vector<bool> kept(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    kept[i] = xv[i] >= tau;
    y[i] = kept[i] ? xv[i] : 0.0;
  }
  return make_op_result("threshold", x.shape(), std::move(y), {x},
                        [x, kept = std::move(kept)](std::span<const double> g,
                                                    std::span<const double>) {
                          auto gx = grad_buffer(x);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            if (kept[i]) gx[i] += g[i];
                        });
}

}  // namespace

Tensor lstm(const Tensor& x, const LstmParams& p, bool reverse) {
  if (x.rank() != 2 || p.w.rank() != 2 || x.dim(1) != p.w.dim(0)) {
    throw DimensionError("lstm: input " + shape_to_string(x.shape()) + " vs weight " +
                         shape_to_string(p.w.shape()));
  }
  const std::size_t T = x.dim(0), I = x.dim(1), H = p.u.dim(0), G = 4 * H;
  if (p.w.dim(1) != G || p.u.dim(1) != G || p.b.size() != G) {
    throw DimensionError("lstm: inconsistent gate widths");
  }
  auto xv = x.data();
  auto wv = p.w.data();
  auto uv = p.u.data();
  auto bv = p.b.data();

  // per time index: activated gates [i f g o], cell state, tanh(cell)
  std::vector<double> gates(T * G), cell(T * H), tcell(T * H), h(T * H);
  std::vector<double> z(G);
  auto order = [=](std::size_t s) { return reverse ? T - 1 - s : s; };
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = order(s);
    const double* h_prev = s > 0 ? &h[order(s - 1) * H] : nullptr;
    const double* c_prev = s > 0 ? &cell[order(s - 1) * H] : nullptr;
    for (std::size_t j = 0; j < G; ++j) z[j] = bv[j];
    for (std::size_t q = 0; q < I; ++q) {
      const double xq = xv[t * I + q];
      for (std::size_t j = 0; j < G; ++j) z[j] += xq * wv[q * G + j];
    }
    if (h_prev)
      for (std::size_t q = 0; q < H; ++q)
        for (std::size_t j = 0; j < G; ++j) z[j] += h_prev[q] * uv[q * G + j];
    double* a = &gates[t * G];
    for (std::size_t j = 0; j < H; ++j) {
      a[j] = logistic(z[j]);
      a[H + j] = logistic(z[H + j]);
      a[2 * H + j] = std::tanh(z[2 * H + j]);
      a[3 * H + j] = logistic(z[3 * H + j]);
      const double c = a[j] * a[2 * H + j] + (c_prev ? a[H + j] * c_prev[j] : 0.0);
      cell[t * H + j] = c;
      tcell[t * H + j] = std::tanh(c);
      h[t * H + j] = a[3 * H + j] * tcell[t * H + j];
    }
  }

  Tensor w = p.w, u = p.u, b = p.b;
  return make_op_result(
      "lstm", {T, H}, h, {x, w, u, b},
      [=, gates = std::move(gates), cell = std::move(cell), tcell = std::move(tcell)](
          std::span<const double> g, std::span<const double> hv) {
        auto gx = grad_buffer(x);
        auto gw = grad_buffer(w);
        auto gu = grad_buffer(u);
        auto gb = grad_buffer(b);
        auto xv = x.data();
        auto wv = w.data();
        auto uv = u.data();
        std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dz(G);
        for (std::size_t s = T; s-- > 0;) {
          const std::size_t t = order(s);
          const double* a = &gates[t * G];
          const double* c_prev = s > 0 ? &cell[order(s - 1) * H] : nullptr;
          const double* h_prev = s > 0 ? &hv[order(s - 1) * H] : nullptr;
          for (std::size_t j = 0; j < H; ++j) {
            const double dh = g[t * H + j] + dh_next[j];
            const double tc = tcell[t * H + j];
            const double i = a[j], f = a[H + j], gg = a[2 * H + j], o = a[3 * H + j];
            const double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * gg * i * (1.0 - i);
            dz[H + j] = c_prev ? dc * c_prev[j] * f * (1.0 - f) : 0.0;
            dz[2 * H + j] = dc * i * (1.0 - gg * gg);
            dz[3 * H + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
          }
          for (std::size_t j = 0; j < G; ++j) gb[j] += dz[j];
          for (std::size_t q = 0; q < I; ++q) {
            double acc = 0.0;
            const double xq = xv[t * I + q];
            for (std::size_t j = 0; j < G; ++j) {
              acc += dz[j] * wv[q * G + j];
              gw[q * G + j] += xq * dz[j];
            }
            gx[t * I + q] += acc;
          }
          for (std::size_t q = 0; q < H; ++q) {
            double acc = 0.0;
            for (std::size_t j = 0; j < G; ++j) {
              acc += dz[j] * uv[q * G + j];
              if (h_prev) gu[q * G + j] += h_prev[q] * dz[j];
            }
            dh_next[q] = acc;
          }
        }
      });
}

namespace {

LstmParams make_lstm(ParameterStore& store, const std::string& name, std::size_t input,
                     std::size_t hidden) {
  LstmParams p;
  p.w = store.uniform(name + ".w", {input, 4 * hidden}, hidden);
  p.u = store.uniform(name + ".u", {hidden, 4 * hidden}, hidden);
  std::vector<double> bias(4 * hidden, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
  p.b = store.constant(name + ".b", {4 * hidden}, 0.0);
  std::copy(bias.begin(), bias.end(), p.b.mutable_data().begin());
  return p;
}

}  // namespace

BiLstm::BiLstm(ParameterStore& store, const std::string& name, std::size_t input,
               std::size_t hidden)
    : fwd(make_lstm(store, name + ".fwd", input, hidden)),
      bwd(make_lstm(store, name + ".bwd", input, hidden)) {}

Tensor BiLstm::operator()(const Tensor& x) const {
  return concat_cols({lstm(x, fwd, false), lstm(x, bwd, true)});
}

ConnectionStrength connection_strength(const Tensor& v_lstm, const Tensor& a_lstm,
                                       const Tensor& w1_v, const Tensor& w1_a) {
  if (v_lstm.shape() != a_lstm.shape() || v_lstm.rank() != 2) {
    throw DimensionError("connection_strength: visual " + shape_to_string(v_lstm.shape()) +
                         " vs audio " + shape_to_string(a_lstm.shape()));
  }
  const double width = static_cast<double>(v_lstm.dim(1));
  Tensor beta_va =
      scale(matmul(matmul(v_lstm, w1_v), transpose(matmul(a_lstm, w1_a))), 1.0 / std::sqrt(width));
  return {beta_va, transpose(beta_va)};
}

Tensor prune_normalize(const Tensor& beta, double tau) {
  if (!(tau >= 0.0)) throw ConfigError("prune_normalize: tau must be nonnegative");
  return row_l1_normalize(keep_at_least(row_l1_normalize(relu(beta)), tau));
}

Aggregated aggregate(const Tensor& a_lstm, const Tensor& v_lstm, const Tensor& gamma_av,
                     const Tensor& gamma_va, const Tensor& w2_v, const Tensor& w2_a) {
  return {matmul(gamma_av, matmul(v_lstm, w2_v)) + a_lstm,
          matmul(gamma_va, matmul(a_lstm, w2_a)) + v_lstm};
}

Tbsm::Tbsm(ParameterStore& store, const std::string& name, std::size_t model_dim, double tau,
           bool selection)
    : tau_(tau), selection_(selection) {
  if (!(tau >= 0.0)) throw ConfigError("tbsm: tau must be nonnegative");
  const std::size_t width = 2 * model_dim;
  lstm_a_ = BiLstm(store, name + ".lstm_a", model_dim, model_dim);
  lstm_v_ = BiLstm(store, name + ".lstm_v", model_dim, model_dim);
  if (selection) {
    w1_v_ = store.uniform(name + ".w1_v", {width, width}, width);
    w1_a_ = store.uniform(name + ".w1_a", {width, width}, width);
    // Zero aggregation weights: training starts from the plain BiLSTM path
    // and the pairwise terms grow in as W2 leaves zero.
    w2_v_ = store.constant(name + ".w2_v", {width, width}, 0.0);
    w2_a_ = store.constant(name + ".w2_a", {width, width}, 0.0);
  }
  fuse_a_ = Linear(store, name + ".fuse_a", width, width);
  fuse_v_ = Linear(store, name + ".fuse_v", width, width);
}

TbsmOutput Tbsm::operator()(const Tensor& enhanced_a, const Tensor& enhanced_v) const {
  if (enhanced_a.shape() != enhanced_v.shape()) {
    throw DimensionError("tbsm: audio " + shape_to_string(enhanced_a.shape()) + " vs visual " +
                         shape_to_string(enhanced_v.shape()));
  }
  TbsmOutput out;
  out.a_lstm = lstm_a_(enhanced_a);
  out.v_lstm = lstm_v_(enhanced_v);
  if (selection_) {
    auto beta = connection_strength(out.v_lstm, out.a_lstm, w1_v_, w1_a_);
    out.beta_va = beta.beta_va;
    out.beta_av = beta.beta_av;
    out.gamma_va = prune_normalize(out.beta_va, tau_);
    out.gamma_av = prune_normalize(out.beta_av, tau_);
    auto agg = aggregate(out.a_lstm, out.v_lstm, out.gamma_av, out.gamma_va, w2_v_, w2_a_);
    out.a_psp = agg.a_psp;
    out.v_psp = agg.v_psp;
  } else {
    out.a_psp = out.a_lstm;
    out.v_psp = out.v_lstm;
  }
  out.fusion = fuse(out.a_psp, out.v_psp);
  return out;
}

}  // namespace adavsr
