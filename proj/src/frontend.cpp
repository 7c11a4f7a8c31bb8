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

#include "adavsr/frontend.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace adavsr {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_points(std::size_t n_mels) {
  const double lo = hz_to_mel(0.0), hi = hz_to_mel(kSampleRate / 2.0);
  std::vector<double> hz(n_mels + 2);
  for (std::size_t i = 0; i < hz.size(); ++i) {
    hz[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  return hz;
}

// Plan plus its aligned buffers; FFTW planning is not thread-safe.
struct FftPlan {
  std::size_t n;
  double* in;
  fftw_complex* out;
  fftw_plan plan;

  explicit FftPlan(std::size_t size) : n(size) {
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~FftPlan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
};

std::mutex g_plan_mutex;

FftPlan& plan_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<FftPlan>> plans;
  auto it = plans.find(n);
  if (it == plans.end()) {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    it = plans.emplace(n, std::make_unique<FftPlan>(n)).first;
  }
  return *it->second;
}

// Sum carried as an unevaluated hi + lo pair (Knuth two-sum), then divided
// with one correction step; the mean of n equal values is returned exactly.
class AccurateMean {
 public:
  void add(double v, double times = 1.0) {
    const double p = v * times;
    const double perr = std::fma(v, times, -p);
    two_sum(p);
    lo_ += perr;
  }
  double divide(double n) const {
    const double q = hi_ / n;
    const double r = std::fma(-q, n, hi_) + lo_;
    return q + r / n;
  }

 private:
  void two_sum(double v) {
    const double s = hi_ + v;
    const double bp = s - hi_;
    const double err = (hi_ - (s - bp)) + (v - bp);
    hi_ = s;
    lo_ += err;
  }
  double hi_ = 0.0;
  double lo_ = 0.0;
};

// Triangular weights [n_mels][n_fft/2+1].
const std::vector<std::vector<double>>& filterbank(std::size_t n_fft, std::size_t n_mels) {
  thread_local std::map<std::pair<std::size_t, std::size_t>, std::vector<std::vector<double>>> cache;
  auto key = std::make_pair(n_fft, n_mels);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const std::size_t bins = n_fft / 2 + 1;
  const auto hz = mel_points(n_mels);
  std::vector<std::vector<double>> fb(n_mels, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = hz[m], center = hz[m + 1], right = hz[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / static_cast<double>(n_fft);
      if (f > left && f <= center) fb[m][k] = (f - left) / (center - left);
      else if (f > center && f < right) fb[m][k] = (right - f) / (right - center);
    }
  }
  return cache.emplace(key, std::move(fb)).first->second;
}

}  // namespace

std::vector<double> mel_center_frequencies(std::size_t n_mels) {
  auto hz = mel_points(n_mels);
  return {hz.begin() + 1, hz.end() - 1};
}

Tensor stft_logmel(std::span<const double> waveform, std::size_t n_fft, std::size_t hop,
                   std::size_t n_mels) {
  if (n_fft == 0 || hop == 0 || n_mels == 0) throw InputError("stft_logmel: zero-sized parameter");
  if (waveform.size() < n_fft) {
    throw InputError("stft_logmel: waveform of " + std::to_string(waveform.size()) +
                     " samples is shorter than n_fft=" + std::to_string(n_fft));
  }
  const std::size_t frames = (waveform.size() - n_fft) / hop + 1;
  const std::size_t bins = n_fft / 2 + 1;
  std::vector<double> window(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n_fft));
  }
  const auto& fb = filterbank(n_fft, n_mels);
  auto& fft = plan_for(n_fft);
  std::vector<double> power(bins);
  std::vector<double> out(n_mels * frames);
  for (std::size_t s = 0; s < frames; ++s) {
    for (std::size_t i = 0; i < n_fft; ++i) fft.in[i] = waveform[s * hop + i] * window[i];
    fftw_execute(fft.plan);
    for (std::size_t k = 0; k < bins; ++k) {
      power[k] = fft.out[k][0] * fft.out[k][0] + fft.out[k][1] * fft.out[k][1];
    }
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += fb[m][k] * power[k];
      out[m * frames + s] = std::log(e + 1e-6);
    }
  }
  return Tensor::from({n_mels, frames}, std::move(out));
}

Tensor block_average_repeat(const Tensor& x, std::size_t block) {
  if (x.rank() != 2) throw DimensionError("block_average_repeat: expected [S, C], got " + shape_to_string(x.shape()));
  if (block == 0) throw InputError("block_average_repeat: block must be positive");
  const std::size_t S = x.dim(0), C = x.dim(1);
  auto xv = x.data();
  // weight[s] = how many of the `block` averaged rows row s contributes
  std::vector<double> weight(S, 1.0);
  std::vector<double> out(S * C);
  const double inv = 1.0 / static_cast<double>(block);
  for (std::size_t start = 0; start < S; start += block) {
    const std::size_t end = std::min(S, start + block);
    const std::size_t pad = block - (end - start);
    weight[end - 1] += static_cast<double>(pad);
    for (std::size_t c = 0; c < C; ++c) {
      AccurateMean acc;
      for (std::size_t s = start; s < end; ++s) acc.add(xv[s * C + c]);
      if (pad) acc.add(xv[(end - 1) * C + c], static_cast<double>(pad));
      const double m = acc.divide(static_cast<double>(block));
      for (std::size_t s = start; s < end; ++s) out[s * C + c] = m;
    }
  }
  return make_op_result(
      "block_average_repeat", x.shape(), std::move(out), {x},
      [x, S, C, block, inv, weight = std::move(weight)](std::span<const double> g,
                                                        std::span<const double>) {
        auto gx = grad_buffer(x);
        for (std::size_t start = 0; start < S; start += block) {
          const std::size_t end = std::min(S, start + block);
          for (std::size_t c = 0; c < C; ++c) {
            double gs = 0.0;
            for (std::size_t s = start; s < end; ++s) gs += g[s * C + c];
            for (std::size_t s = start; s < end; ++s) gx[s * C + c] += gs * inv * weight[s];
          }
        }
      });
}

Tensor resample_nearest(const Tensor& x, std::size_t length) {
  if (x.rank() < 1 || length == 0) throw DimensionError("resample_nearest: empty input");
  const std::size_t S = x.dim(0);
  std::vector<std::size_t> index(length);
  for (std::size_t t = 0; t < length; ++t) {
    const auto s = static_cast<std::size_t>((static_cast<double>(t) + 0.5) *
                                            static_cast<double>(S) / static_cast<double>(length));
    index[t] = std::min(S - 1, s);
  }
  return gather_rows(x, index);
}

Tensor normalize_utterance(const Tensor& x) {
  auto v = x.data();
  double mu = 0.0;
  for (double e : v) mu += e;
  mu /= static_cast<double>(v.size());
  double var = 0.0;
  for (double e : v) var += (e - mu) * (e - mu);
  var /= static_cast<double>(v.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mu) * inv;
  return Tensor::from(x.shape(), std::move(out));
}

// ---- encoders ----------------------------------------------------------------

TimeDomainEncoder::TimeDomainEncoder(ParameterStore& store, const std::string& name,
                                     std::size_t feature_dim)
    : stem_(store, name + ".stem", 80, 1, 16, 40, 20),
      down1_(store, name + ".down1", 4, 16, feature_dim, 4, 0),
      down2_(store, name + ".down2", 4, feature_dim, feature_dim, 4, 0) {
  for (int b = 0; b < 2; ++b)
    for (int l = 0; l < 2; ++l) {
      res_[b][l] = Conv1d(store, name + ".res" + std::to_string(b) + "." + std::to_string(l), 3,
                          feature_dim, feature_dim, 1, 1);
    }
}

FeatureSeq TimeDomainEncoder::operator()(const Tensor& waveform) const {
  const std::size_t n = waveform.size();
  if (n == 0 || n % kSamplesPerFrame != 0) {
    throw InputError("encode_time_domain: waveform length " + std::to_string(n) +
                     " is not a positive multiple of " + std::to_string(kSamplesPerFrame));
  }
  Tensor h = relu(stem_(reshape(waveform, {n, 1})));  // [16 T0, 16]
  h = relu(down1_(h));                                 // [4 T0, C1]
  h = relu(down2_(h));                                 // [T0, C1]
  for (const auto& block : res_) h = relu(add(h, block[1](relu(block[0](h)))));
  return {h, StreamTag::kTimeDomain};
}

FreqDomainEncoder::FreqDomainEncoder(ParameterStore& store, const std::string& name,
                                     std::size_t n_mels, std::size_t feature_dim,
                                     std::size_t average_block)
    : conv_(store, name + ".conv", 3, n_mels, feature_dim, 1, 0), block_(average_block) {}

FreqEncoding FreqDomainEncoder::encode(const Tensor& logmel, std::size_t out_frames) const {
  if (logmel.rank() != 2) throw DimensionError("encode_freq_domain: expected [F, S] log-mel");
  const std::size_t S = logmel.dim(1);
  // Edge-replicate padding keeps a time-constant spectrogram time-constant.
  std::vector<std::size_t> padded(S + 2);
  padded[0] = 0;
  for (std::size_t s = 0; s < S; ++s) padded[s + 1] = s;
  padded[S + 1] = S - 1;
  Tensor h = conv_(gather_rows(transpose(logmel), padded));  // [S, C1]
  Tensor averaged = block_average_repeat(h, block_);
  return {{resample_nearest(averaged, out_frames), StreamTag::kFreqDomain}, averaged};
}

VisualEncoder::VisualEncoder(ParameterStore& store, const std::string& name,
                             std::size_t in_channels, std::size_t feature_dim)
    : conv_{Conv2d(store, name + ".conv0", 3, in_channels, 8, 2, 1),
            Conv2d(store, name + ".conv1", 3, 8, 16, 2, 1),
            Conv2d(store, name + ".conv2", 3, 16, feature_dim, 2, 1)} {}

SpatialFeatureSeq VisualEncoder::operator()(const Tensor& frames) const {
  if (frames.rank() != 4) {
    throw InputError("encode_visual: expected [T, H, W, C] frames, got " +
                     shape_to_string(frames.shape()));
  }
  const std::size_t H = frames.dim(1), W = frames.dim(2);
  if (H < 8 || W < 8 || H % 8 != 0 || W % 8 != 0) {
    throw InputError("encode_visual: frame size " + std::to_string(H) + "x" + std::to_string(W) +
                     " is too small for three stride-2 layers (need multiples of 8)");
  }
  Tensor h = frames;
  for (const auto& conv : conv_) h = relu(conv(h));
  return {permute(h, {0, 3, 1, 2})};
}

}  // namespace adavsr
