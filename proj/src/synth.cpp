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


#include "adavsr/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "adavsr/errors.hpp"

namespace adavsr {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'A', 'V', 'S', 'R', '0', '1'};
constexpr std::size_t kFeatureCell = 8;  // pixels per visual feature cell side

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// A transcript laid out on the video frame grid. label[t] is -1 for
// silence, else a token id.
struct Timeline {
  std::vector<int> tokens;
  std::vector<int> label;
};

Timeline draw_timeline(const CorpusSpec& spec, const Vocabulary& vocab, std::mt19937_64& rng) {
  Timeline tl;
  const std::size_t words = pick(rng, spec.min_words, spec.max_words);
  std::vector<std::size_t> spans;
  for (std::size_t w = 0; w < words; ++w) {
    if (w > 0) tl.tokens.push_back(Vocabulary::kSpace);
    const std::size_t len = pick(rng, spec.min_word_length, spec.max_word_length);
    for (std::size_t i = 0; i < len; ++i) {
      int tok;
      do {
        tok = vocab.letter(pick(rng, 0, spec.letters - 1));
      } while (!tl.tokens.empty() && tl.tokens.back() == tok);
      tl.tokens.push_back(tok);
    }
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < tl.tokens.size(); ++i) {
    spans.push_back(pick(rng, spec.min_token_frames, spec.max_token_frames));
    total += spans.back();
  }
  // shrink spans from the longest down until the utterance fits
  while (total > spec.frames) {
    auto it = std::max_element(spans.begin(), spans.end());
    if (*it <= 1) throw ConfigError("synth: transcript cannot fit in the frame budget");
    --*it;
    --total;
  }
  const std::size_t lead = pick(rng, 0, spec.frames - total);
  tl.label.assign(spec.frames, -1);
  std::size_t t = lead;
  for (std::size_t i = 0; i < tl.tokens.size(); ++i)
    for (std::size_t k = 0; k < spans[i]; ++k) tl.label[t++] = tl.tokens[i];
  return tl;
}

std::size_t mouth_height(const CorpusSpec& spec, const Vocabulary& vocab, int label) {
  if (label < vocab.letter(0) || label > vocab.letter(spec.letters - 1)) return 1;
  return 3 + 2 * letter_viseme(spec, static_cast<std::size_t>(label - vocab.letter(0)));
}

void draw_mouth(std::vector<double>& img, std::size_t W, std::size_t top, std::size_t left,
                std::size_t height) {
  const std::size_t cy = top + kFeatureCell / 2;
  const std::size_t y0 = cy - height / 2;
  for (std::size_t y = y0; y < y0 + height; ++y)
    for (std::size_t x = left + 1; x < left + kFeatureCell - 1; ++x) img[y * W + x] = 1.0;
}

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_u(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw InputError("dataset: truncated file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

void put_floats(std::ostream& os, const Tensor& t) {
  for (double v : t.data()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

Tensor get_floats(std::istream& is, Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = std::bit_cast<float>(static_cast<std::uint32_t>(get_u(is, 4)));
  return Tensor::from(std::move(shape), std::move(v));
}

Shape shape_from_json(const nlohmann::json& j) { return j.get<std::vector<std::size_t>>(); }

}  // namespace

// ---- vocabulary --------------------------------------------------------------

Vocabulary::Vocabulary(std::size_t letters) : letters_(letters) {
  if (letters == 0 || letters > 26) throw ConfigError("vocabulary: letters must be in [1, 26]");
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  for (char c : text) {
    if (c == ' ') {
      ids.push_back(kSpace);
    } else if (c >= 'a' && static_cast<std::size_t>(c - 'a') < letters_) {
      ids.push_back(letter(static_cast<std::size_t>(c - 'a')));
    } else {
      throw InputError(std::string("vocabulary: character '") + c + "' is not in the alphabet");
    }
  }
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string s;
  for (int id : ids) {
    if (id == kSpace) s += ' ';
    else if (id >= letter(0) && id < bos()) s += static_cast<char>('a' + (id - letter(0)));
  }
  return s;
}

// ---- spec --------------------------------------------------------------------

FrontendConfig CorpusSpec::frontend() const {
  FrontendConfig f;
  f.frames = frames;
  f.height = height;
  f.width = width;
  return f;
}

nlohmann::json CorpusSpec::to_json() const {
  return {{"n_samples", n_samples},
          {"seed", seed},
          {"frames", frames},
          {"height", height},
          {"width", width},
          {"letters", letters},
          {"min_words", min_words},
          {"max_words", max_words},
          {"min_word_length", min_word_length},
          {"max_word_length", max_word_length},
          {"min_token_frames", min_token_frames},
          {"max_token_frames", max_token_frames},
          {"base_frequency", base_frequency},
          {"pair_ratio", pair_ratio},
          {"twin_ratio", twin_ratio},
          {"token_gain_range_db", token_gain_range_db},
          {"pixel_noise", pixel_noise},
          {"distractor", distractor},
          {"max_av_offset", max_av_offset}};
}

CorpusSpec CorpusSpec::from_json(const nlohmann::json& j) {
  CorpusSpec s;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    get("n_samples", s.n_samples);
    get("seed", s.seed);
    get("frames", s.frames);
    get("height", s.height);
    get("width", s.width);
    get("letters", s.letters);
    get("min_words", s.min_words);
    get("max_words", s.max_words);
    get("min_word_length", s.min_word_length);
    get("max_word_length", s.max_word_length);
    get("min_token_frames", s.min_token_frames);
    get("max_token_frames", s.max_token_frames);
    get("base_frequency", s.base_frequency);
    get("pair_ratio", s.pair_ratio);
    get("twin_ratio", s.twin_ratio);
    get("token_gain_range_db", s.token_gain_range_db);
    get("pixel_noise", s.pixel_noise);
    get("distractor", s.distractor);
    get("max_av_offset", s.max_av_offset);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("corpus spec: ") + e.what());
  }
  if (s.letters == 0 || s.letters > 26) throw ConfigError("corpus spec: letters must be in [1, 26]");
  if (s.min_words == 0 || s.min_words > s.max_words || s.min_word_length == 0 ||
      s.min_word_length > s.max_word_length || s.min_token_frames == 0 ||
      s.min_token_frames > s.max_token_frames) {
    throw ConfigError("corpus spec: inconsistent length ranges");
  }
  if (s.height % (3 * kFeatureCell) != 0 || s.width % (3 * kFeatureCell) != 0) {
    throw ConfigError("corpus spec: frame sides must be multiples of 24");
  }
  if (s.frames == 0) throw ConfigError("corpus spec: frames must be positive");
  if (!(s.token_gain_range_db >= 0.0 && s.token_gain_range_db <= 60.0)) {
    throw ConfigError("corpus spec: token_gain_range_db must lie in [0, 60]");
  }
  return s;
}

double letter_frequency(const CorpusSpec& spec, std::size_t letter) {
  return spec.base_frequency * std::pow(spec.pair_ratio, static_cast<double>(letter / 2)) *
         (letter % 2 == 1 ? spec.twin_ratio : 1.0);
}

std::size_t letter_viseme(const CorpusSpec& spec, std::size_t letter) {
  return ((letter + 1) % spec.letters) / 2;
}

// ---- samples -----------------------------------------------------------------

RawSample synth_sample(const CorpusSpec& spec, std::uint64_t seed, std::size_t index) {
  const Vocabulary vocab(spec.letters);
  auto rng = keyed_rng(seed, index, 0);
  Timeline speech = draw_timeline(spec, vocab, rng);
  Timeline decoy = draw_timeline(spec, vocab, rng);
  const std::size_t T = spec.frames;

  // audio: two tones per letter under a raised-cosine envelope per token
  std::vector<double> wave(T * kSamplesPerFrame, 0.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> attenuation(0.0, spec.token_gain_range_db);
  for (std::size_t t = 0; t < T;) {
    const int lab = speech.label[t];
    std::size_t end = t;
    while (end < T && speech.label[end] == lab) ++end;
    if (lab >= vocab.letter(0)) {
      const double f = letter_frequency(spec, static_cast<std::size_t>(lab - vocab.letter(0)));
      const double p1 = phase(rng), p2 = phase(rng);
      const double gain = std::pow(10.0, -attenuation(rng) / 20.0);
      const std::size_t n0 = t * kSamplesPerFrame, n1 = end * kSamplesPerFrame;
      const double ramp = 80.0;
      for (std::size_t n = n0; n < n1; ++n) {
        const double pos = static_cast<double>(n - n0), rem = static_cast<double>(n1 - 1 - n);
        const double edge = std::min({1.0, pos / ramp, rem / ramp});
        const double env = 0.5 - 0.5 * std::cos(std::numbers::pi * edge);
        const double time = static_cast<double>(n) / kSampleRate;
        wave[n] = gain * env * (0.5 * std::sin(2.0 * std::numbers::pi * f * time + p1) +
                                0.25 * std::sin(4.0 * std::numbers::pi * f * time + p2));
      }
    }
    t = end;
  }
  for (double& v : wave) v = to_f32(v);

  // video: mouth in one grid cell, decoy mouth in another, both on a dark
  // background with additive pixel noise
  const std::size_t H = spec.height, W = spec.width;
  const std::size_t rows = H / kFeatureCell, cols = W / kFeatureCell;
  const std::size_t mouth_cell = pick(rng, 0, rows * cols - 1);
  std::size_t decoy_cell = pick(rng, 0, rows * cols - 2);
  if (decoy_cell >= mouth_cell) ++decoy_cell;
  const std::size_t offset = pick(rng, 0, spec.max_av_offset);
  std::normal_distribution<double> pixel(0.0, spec.pixel_noise);
  std::vector<double> frames(T * H * W);
  std::vector<double> img(H * W);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(img.begin(), img.end(), 0.0);
    const int shown = t >= offset ? speech.label[t - offset] : -1;
    draw_mouth(img, W, (mouth_cell / cols) * kFeatureCell, (mouth_cell % cols) * kFeatureCell,
               mouth_height(spec, vocab, shown));
    if (spec.distractor) {
      draw_mouth(img, W, (decoy_cell / cols) * kFeatureCell, (decoy_cell % cols) * kFeatureCell,
                 mouth_height(spec, vocab, decoy.label[t]));
    }
    for (std::size_t i = 0; i < H * W; ++i) {
      const double noisy = spec.pixel_noise > 0.0 ? img[i] + pixel(rng) : img[i];
      frames[t * H * W + i] = to_f32(std::clamp(noisy, 0.0, 1.0));
    }
  }

  RawSample s;
  s.frames = Tensor::from({T, H, W, 1}, std::move(frames));
  const FrontendConfig fc = spec.frontend();
  Tensor logmel = stft_logmel(wave, fc.n_fft, fc.hop, fc.n_mels);
  std::vector<double> lm = logmel.to_vector();
  for (double& v : lm) v = to_f32(v);
  s.logmel = Tensor::from(logmel.shape(), std::move(lm));
  const std::size_t samples = wave.size();
  s.waveform = Tensor::from({samples}, std::move(wave));
  s.transcript = speech.tokens;
  return s;
}

// ---- corruptions -------------------------------------------------------------

std::vector<double> add_noise_snr(std::span<const double> waveform, double snr_db,
                                  std::uint64_t seed) {
  std::vector<double> out(waveform.begin(), waveform.end());
  if (std::isinf(snr_db) && snr_db > 0) return out;
  if (std::isnan(snr_db)) throw InputError("add_noise_snr: SNR is NaN");
  double p_signal = 0.0;
  for (double v : waveform) p_signal += v * v;
  if (waveform.empty() || p_signal == 0.0) throw InputError("add_noise_snr: signal has zero power");
  p_signal /= static_cast<double>(waveform.size());

  auto rng = keyed_rng(seed, 0, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> noise(waveform.size());
  double p_noise = 0.0;
  for (double& n : noise) {
    n = gauss(rng);
    p_noise += n * n;
  }
  p_noise /= static_cast<double>(noise.size());
  const double target = p_signal / std::pow(10.0, snr_db / 10.0);
  const double gain = std::sqrt(target / p_noise);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += gain * noise[i];
  return out;
}

Tensor occlude_frames(const Tensor& frames, const OcclusionSpec& spec, std::uint64_t seed) {
  if (frames.rank() != 4) {
    throw DimensionError("occlude_frames: expected [T, H, W, C], got " +
                         shape_to_string(frames.shape()));
  }
  if (!(spec.patch_fraction >= 0.0 && spec.patch_fraction <= 1.0 && spec.frame_fraction >= 0.0 &&
        spec.frame_fraction <= 1.0)) {
    throw InputError("occlude_frames: fractions must lie in [0, 1]");
  }
  const std::size_t T = frames.dim(0), H = frames.dim(1), W = frames.dim(2), C = frames.dim(3);
  const auto ph = static_cast<std::size_t>(std::lround(spec.patch_fraction * H));
  const auto pw = static_cast<std::size_t>(std::lround(spec.patch_fraction * W));
  const auto count = static_cast<std::size_t>(std::lround(spec.frame_fraction * T));
  std::vector<double> out = frames.to_vector();
  if (ph == 0 || pw == 0 || count == 0) return Tensor::from(frames.shape(), std::move(out));

  auto rng = keyed_rng(seed, 0, 2);
  std::vector<std::size_t> order(T);
  for (std::size_t t = 0; t < T; ++t) order[t] = t;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t t = order[n];
    const std::size_t top = pick(rng, 0, H - ph), left = pick(rng, 0, W - pw);
    for (std::size_t y = top; y < top + ph; ++y)
      for (std::size_t x = left; x < left + pw; ++x)
        for (std::size_t c = 0; c < C; ++c) out[((t * H + y) * W + x) * C + c] = 0.0;
  }
  return Tensor::from(frames.shape(), std::move(out));
}

Tensor spec_augment(const Tensor& logmel, const SpecAugmentSpec& spec, std::uint64_t seed) {
  if (logmel.rank() != 2) {
    throw DimensionError("spec_augment: expected [F, S], got " + shape_to_string(logmel.shape()));
  }
  const std::size_t F = logmel.dim(0), S = logmel.dim(1);
  if (spec.time_mask_width > S || spec.cutout_frames > S || spec.cutout_bins > F) {
    throw InputError("spec_augment: mask larger than the spectrogram " +
                     shape_to_string(logmel.shape()));
  }
  std::vector<double> out = logmel.to_vector();
  auto rng = keyed_rng(seed, 0, 3);
  if (spec.time_mask_width > 0) {
    double mean = 0.0;
    for (double v : logmel.data()) mean += v;
    mean /= static_cast<double>(logmel.size());
    const std::size_t start = pick(rng, 0, S - spec.time_mask_width);
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t s = start; s < start + spec.time_mask_width; ++s) out[f * S + s] = mean;
  }
  if (spec.cutout_bins > 0 && spec.cutout_frames > 0) {
    const std::size_t f0 = pick(rng, 0, F - spec.cutout_bins);
    const std::size_t s0 = pick(rng, 0, S - spec.cutout_frames);
    for (std::size_t f = f0; f < f0 + spec.cutout_bins; ++f)
      for (std::size_t s = s0; s < s0 + spec.cutout_frames; ++s) out[f * S + s] = 0.0;
  }
  return Tensor::from(logmel.shape(), std::move(out));
}

// ---- container ---------------------------------------------------------------

Dataset Dataset::generate(const CorpusSpec& spec) {
  Dataset d;
  d.spec = spec;
  d.samples.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) d.samples.push_back(synth_sample(spec, spec.seed, i));
  return d;
}

void Dataset::save(const std::filesystem::path& path) const {
  const Vocabulary vocab(spec.letters);
  nlohmann::json header;
  header["count"] = samples.size();
  header["spec"] = spec.to_json();
  header["seed"] = spec.seed;
  std::vector<std::string> symbols{"<blank>", " "};
  for (std::size_t i = 0; i < vocab.letters(); ++i) symbols.emplace_back(1, static_cast<char>('a' + i));
  symbols.emplace_back("<bos>");
  symbols.emplace_back("<eos>");
  header["vocab"] = symbols;
  if (!samples.empty()) {
    header["shapes"] = {{"frames", samples[0].frames.shape()},
                        {"waveform", samples[0].waveform.shape()},
                        {"logmel", samples[0].logmel.shape()}};
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("dataset: cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& s : samples) {
    if (s.frames.shape() != samples[0].frames.shape() ||
        s.waveform.shape() != samples[0].waveform.shape() ||
        s.logmel.shape() != samples[0].logmel.shape()) {
      throw DimensionError("dataset: samples disagree in shape");
    }
    put_floats(os, s.frames);
    put_floats(os, s.waveform);
    put_floats(os, s.logmel);
    put_u32(os, static_cast<std::uint32_t>(s.transcript.size()));
    for (int id : s.transcript) put_u32(os, static_cast<std::uint32_t>(id));
  }
  if (!os) throw InputError("dataset: write failed for " + path.string());
}

Dataset Dataset::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("dataset: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) {
    throw InputError("dataset: " + path.string() + " is not an ADAVSR01 container");
  }
  const std::uint64_t length = get_u(is, 8);
  if (length > (1u << 24)) throw InputError("dataset: implausible header length");
  std::string text(length, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(length))) {
    throw InputError("dataset: truncated header");
  }
  Dataset d;
  std::size_t count = 0;
  Shape fs, ws, ls;
  try {
    const auto header = nlohmann::json::parse(text);
    d.spec = CorpusSpec::from_json(header.at("spec"));
    count = header.at("count").get<std::size_t>();
    if (count > 0) {
      fs = shape_from_json(header.at("shapes").at("frames"));
      ws = shape_from_json(header.at("shapes").at("waveform"));
      ls = shape_from_json(header.at("shapes").at("logmel"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("dataset: bad header: ") + e.what());
  }
  d.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    RawSample s;
    s.frames = get_floats(is, fs);
    s.waveform = get_floats(is, ws);
    s.logmel = get_floats(is, ls);
    const auto n = get_u(is, 4);
    if (n > 4096) throw InputError("dataset: implausible transcript length");
    s.transcript.resize(n);
    for (auto& id : s.transcript) id = static_cast<std::int32_t>(static_cast<std::uint32_t>(get_u(is, 4)));
    d.samples.push_back(std::move(s));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw InputError("dataset: trailing bytes");
  return d;
}

}  // namespace adavsr
