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

// Audio dual-stream encoding and the spatial-preserving visual encoder.
//
// Both audio streams come from the same waveform:
//   time domain:  waveform -> strided conv1d stack -> (T1, C1)           f_a1
//   freq domain:  waveform -> log-mel -> conv1d -> 25-frame average and
//                 repeat -> nearest resample -> (T1, C1)                f_a2
// The visual encoder keeps its spatial grid: (T1, C1, H1, W1)           f_v

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adavsr/nn.hpp"
#include "adavsr/tensor.hpp"

namespace adavsr {

inline constexpr std::size_t kSampleRate = 16000;
inline constexpr std::size_t kVideoFps = 25;
inline constexpr std::size_t kSamplesPerFrame = kSampleRate / kVideoFps;  // 640

struct FrontendConfig {
  std::size_t frames = 24;   // T0
  std::size_t height = 24;   // H0
  std::size_t width = 24;    // W0
  std::size_t channels = 1;  // C0
  std::size_t feature_dim = 32;  // C1
  std::size_t n_fft = 400;
  std::size_t hop = 160;
  std::size_t n_mels = 40;
  std::size_t average_block = 25;

  std::size_t waveform_length() const { return frames * kSamplesPerFrame; }
  std::size_t spectrogram_frames() const { return (waveform_length() - n_fft) / hop + 1; }
};

/// One utterance. Token id 0 is reserved for the CTC blank.
struct RawSample {
  Tensor frames;    // [T0, H0, W0, C0], values in [0, 1]
  Tensor waveform;  // [T0 * 640] at 16 kHz
  Tensor logmel;    // [F, S]
  std::vector<int> transcript;
};

enum class StreamTag { kTimeDomain, kFreqDomain };

struct FeatureSeq {
  Tensor data;  // [T1, C1]
  StreamTag tag = StreamTag::kTimeDomain;
};

struct SpatialFeatureSeq {
  Tensor data;  // [T1, C1, H1, W1]
};

/// log(mel_filterbank * |STFT|^2 + 1e-6) with a periodic Hann window and an
/// HTK-scale triangular filterbank over [0, 8 kHz]. Returns [n_mels, S] with
/// S = floor((len - n_fft) / hop) + 1. Throws InputError if the waveform is
/// shorter than n_fft.
Tensor stft_logmel(std::span<const double> waveform, std::size_t n_fft, std::size_t hop,
                   std::size_t n_mels);

/// Center frequency (Hz) of each mel filter used by stft_logmel.
std::vector<double> mel_center_frequencies(std::size_t n_mels);

/// Each contiguous block of `block` rows is replaced by its mean, repeated
/// over the block. A trailing partial block is padded by repeating its last
/// row before averaging. Output shape equals input shape.
Tensor block_average_repeat(const Tensor& x, std::size_t block = 25);

/// Nearest-neighbour resampling along the first axis to `length` rows.
Tensor resample_nearest(const Tensor& x, std::size_t length);

/// Zero-mean, unit-variance scaling over all entries (utterance-level
/// normalization applied before encoding). Constant inputs map to zeros.
Tensor normalize_utterance(const Tensor& x);

/// Waveform -> f_a1. conv1d(w=80, stride 40) -> conv1d(w=4, s=4) x2 ->
/// two residual conv1d blocks; 640 samples collapse to one feature frame.
class TimeDomainEncoder {
 public:
  TimeDomainEncoder(ParameterStore& store, const std::string& name, std::size_t feature_dim);
  /// Throws InputError unless the length is a positive multiple of 640.
  FeatureSeq operator()(const Tensor& waveform) const;

 private:
  Conv1d stem_, down1_, down2_;
  Conv1d res_[2][2];
};

struct FreqEncoding {
  FeatureSeq features;  // [T1, C1]
  Tensor averaged;      // [S, C1], after block averaging, before resampling
};

/// Log-mel -> f_a2.
class FreqDomainEncoder {
 public:
  FreqDomainEncoder(ParameterStore& store, const std::string& name, std::size_t n_mels,
                    std::size_t feature_dim, std::size_t average_block);
  FreqEncoding encode(const Tensor& logmel, std::size_t out_frames) const;
  FeatureSeq operator()(const Tensor& logmel, std::size_t out_frames) const {
    return encode(logmel, out_frames).features;
  }

 private:
  Conv1d conv_;
  std::size_t block_;
};

/// Frames -> f_v. Three 3x3 stride-2 conv layers applied per frame; no
/// global pooling, so H1 = H0/8 and W1 = W0/8.
class VisualEncoder {
 public:
  VisualEncoder(ParameterStore& store, const std::string& name, std::size_t in_channels,
                std::size_t feature_dim);
  /// Throws InputError unless H0 and W0 are positive multiples of 8.
  SpatialFeatureSeq operator()(const Tensor& frames) const;

 private:
  Conv2d conv_[3];
};

}  // namespace adavsr
