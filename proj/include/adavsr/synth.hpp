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


// Synthetic audio-visual corpus. Each letter has an audio signature (a pair
// of tones) and a visual signature (the opening of a "mouth" patch). Letters
// are grouped so that neither modality alone separates every letter: tone
// pairs sit close in frequency, and mouth shapes are shared by two letters
// from different tone pairs. Frames also carry a distractor patch and pixel
// noise, and the video may lag the audio by a few frames.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adavsr/frontend.hpp"
#include "adavsr/tensor.hpp"

namespace adavsr {

/// Token ids: 0 blank, 1 space, 2.. letters 'a', 'b', ..., then BOS and EOS.
class Vocabulary {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kSpace = 1;

  explicit Vocabulary(std::size_t letters = 6);

  std::size_t letters() const { return letters_; }
  int letter(std::size_t i) const { return 2 + static_cast<int>(i); }
  int bos() const { return 2 + static_cast<int>(letters_); }
  int eos() const { return bos() + 1; }
  std::size_t size() const { return letters_ + 4; }

  /// Letters and spaces only; throws InputError on anything else.
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

 private:
  std::size_t letters_;
};

struct CorpusSpec {
  std::size_t n_samples = 512;
  std::uint64_t seed = 7;
  std::size_t frames = 24;  // T0
  std::size_t height = 24;
  std::size_t width = 24;
  std::size_t letters = 6;
  std::size_t min_words = 1, max_words = 3;
  std::size_t min_word_length = 1, max_word_length = 3;
  std::size_t min_token_frames = 2, max_token_frames = 3;
  double base_frequency = 200.0;  // Hz, lowest tone pair
  double pair_ratio = 2.25;       // spacing between tone pairs
  double twin_ratio = 1.5;        // spacing inside a tone pair
  // Each letter token is attenuated by a uniform draw from [0, range] dB, so
  // at a fixed utterance SNR the quiet tokens sit much deeper in the noise.
  double token_gain_range_db = 0.0;
  double pixel_noise = 0.08;
  bool distractor = true;
  std::size_t max_av_offset = 2;  // video lags audio by 0..max frames

  FrontendConfig frontend() const;
  nlohmann::json to_json() const;
  static CorpusSpec from_json(const nlohmann::json& j);
};

/// Primary tone of a letter in Hz (a second tone at 2x rides along).
double letter_frequency(const CorpusSpec& spec, std::size_t letter);
/// Mouth opening class of a letter; each class is shared by two letters.
std::size_t letter_viseme(const CorpusSpec& spec, std::size_t letter);

/// Deterministic in (spec, seed, index). Waveform, frames and log-mel are
/// float32-representable so the container round-trip is exact.
RawSample synth_sample(const CorpusSpec& spec, std::uint64_t seed, std::size_t index);

/// Adds white Gaussian noise rescaled so the realized noise power is exactly
/// P_signal / 10^(snr/10) up to rounding. snr = +inf returns the input.
/// Throws InputError for a zero-power signal.
std::vector<double> add_noise_snr(std::span<const double> waveform, double snr_db,
                                  std::uint64_t seed);

struct OcclusionSpec {
  double patch_fraction = 0.0;  // patch side as a fraction of the frame side
  double frame_fraction = 0.0;  // fraction of frames that get a patch
};

/// frames [T, H, W, C]; the chosen frames get one zeroed patch each at a
/// seeded location. Throws InputError if a fraction is outside [0, 1].
Tensor occlude_frames(const Tensor& frames, const OcclusionSpec& spec, std::uint64_t seed);

struct SpecAugmentSpec {
  std::size_t time_mask_width = 0;  // frames set to the spectrogram mean
  std::size_t cutout_bins = 0;      // cutout height in mel bins
  std::size_t cutout_frames = 0;    // cutout width in frames
};

/// logmel [F, S]. One contiguous time band is filled with the mean of the
/// input, then one rectangle is zeroed. Throws InputError if a mask does not
/// fit.
Tensor spec_augment(const Tensor& logmel, const SpecAugmentSpec& spec, std::uint64_t seed);

/// In-memory corpus plus its binary container:
///   "ADAVSR01" | u64 header length | JSON header | records
/// Each record holds frames, waveform and logmel as little-endian float32
/// in that order, then a u32 token count and that many i32 token ids.
struct Dataset {
  CorpusSpec spec;
  std::vector<RawSample> samples;

  static Dataset generate(const CorpusSpec& spec);
  void save(const std::filesystem::path& path) const;
  static Dataset load(const std::filesystem::path& path);
};

}  // namespace adavsr
