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


#include "adavsr/model.hpp"

#include <cmath>
#include <string>

#include "adavsr/errors.hpp"

namespace adavsr {

namespace {

FrontendConfig frontend_for(const ExperimentConfig& config, const CorpusSpec& corpus) {
  FrontendConfig fe = corpus.frontend();
  fe.feature_dim = config.feature_dim;
  return fe;
}

EncoderConfig encoder_config(const ExperimentConfig& c) {
  return {c.encoder_layers, c.model_dim / 2, c.encoder_heads, c.encoder_kernel, c.encoder_ff};
}

DecoderConfig decoder_config(const ExperimentConfig& c, std::size_t vocab) {
  return {c.decoder_layers, c.model_dim / 2, c.decoder_heads, c.decoder_ff, vocab};
}

bool needs_time_stream(const ExperimentConfig& c) { return c.encoding != AudioEncoding::kA2; }

bool needs_freq_stream(const ExperimentConfig& c) {
  return c.encoding == AudioEncoding::kA2 || (c.encoding == AudioEncoding::kA3 && c.use_avrm);
}

}  // namespace

ModelInput prepare_input(const RawSample& sample, const FrontendConfig& frontend,
                         const Corruption& corruption) {
  ModelInput in;
  in.frames = sample.frames;
  if (corruption.occlusion.frame_fraction > 0.0 && corruption.occlusion.patch_fraction > 0.0) {
    in.frames = occlude_frames(sample.frames, corruption.occlusion, corruption.seed ^ 0x0cc1u);
  }
  if (std::isinf(corruption.snr_db) && corruption.snr_db > 0) {
    in.waveform = sample.waveform;
    in.logmel = sample.logmel;
  } else {
    auto noisy = add_noise_snr(sample.waveform.data(), corruption.snr_db, corruption.seed);
    in.logmel = stft_logmel(noisy, frontend.n_fft, frontend.hop, frontend.n_mels);
    const std::size_t n = noisy.size();
    in.waveform = Tensor::from({n}, std::move(noisy));
  }
  const auto& sa = corruption.spec_augment;
  if (sa.time_mask_width > 0 || (sa.cutout_bins > 0 && sa.cutout_frames > 0)) {
    in.logmel = spec_augment(in.logmel, sa, corruption.seed ^ 0x5a5au);
  }
  return in;
}

AvsrModel::AvsrModel(const ExperimentConfig& config, const CorpusSpec& corpus, std::uint64_t seed)
    : config_(config),
      corpus_(corpus),
      frontend_(frontend_for(config, corpus)),
      vocab_(corpus.letters),
      store_(std::make_unique<ParameterStore>(seed)),
      visual_encoder_(*store_, "visual", frontend_.channels, config.feature_dim),
      norm_a_(*store_, "fusion_norm_a", config.model_dim),
      norm_v_(*store_, "fusion_norm_v", config.model_dim),
      fusion_norm_(*store_, "fusion_out_norm", 2 * config.model_dim),
      tbsm_(*store_, "tbsm", config.model_dim, config.tau, config.use_tbsm),
      f0_(*store_, "f0", config.model_dim),
      encoder_(*store_, "encoder", encoder_config(config)),
      ctc_head_(*store_, "ctc", config.model_dim / 2, vocab_.size()),
      decoder_(*store_, "decoder", decoder_config(config, vocab_.size())) {
  config_.validate();
  const std::size_t c1 = config.feature_dim, d1 = config.model_dim;
  if (needs_time_stream(config)) time_encoder_.emplace(*store_, "audio_time", c1);
  if (needs_freq_stream(config)) {
    freq_encoder_.emplace(*store_, "audio_freq", frontend_.n_mels, c1, frontend_.average_block);
  }
  if (config.use_cmnsm) cmnsm_.emplace(*store_, "cmnsm", c1, d1);
  if (config.use_avrm) {
    avrm_.emplace(*store_, "avrm", c1, d1, config.regions, config.attention_dim);
  } else {
    visual_pool_proj_ = Linear(*store_, "visual_pool.proj", c1, d1);
  }
  store_->set_utterance_norm_stats(config.utterance_norm);
}

Tensor AvsrModel::encode(const ModelInput& input, bool training) const {
  const std::size_t t0 = frontend_.frames;
  const SpatialFeatureSeq f_v = visual_encoder_(input.frames);

  std::optional<FeatureSeq> f_a1, f_a2;
  if (time_encoder_) f_a1 = (*time_encoder_)(normalize_utterance(input.waveform));
  if (freq_encoder_) f_a2 = (*freq_encoder_)(normalize_utterance(input.logmel), t0);

  // Which audio stream feeds which module.
  const FeatureSeq& noise_query = config_.encoding == AudioEncoding::kA2 ? *f_a2 : *f_a1;
  const FeatureSeq* region_query = nullptr;
  if (avrm_) region_query = config_.encoding == AudioEncoding::kA1 ? &*f_a1 : &*f_a2;

  const Tensor enhanced_a = cmnsm_ ? (*cmnsm_)(noise_query, f_v, training).enhanced : noise_query.data;
  const Tensor enhanced_v =
      avrm_ ? (*avrm_)(*region_query, f_v).enhanced : visual_pool_proj_(spatial_mean_pool(f_v.data));

  // Encoder features are rectified with per-channel offsets; centering them
  // over time lets the recurrent layers see the variation.
  const TbsmOutput fused = tbsm_(norm_a_(enhanced_a, training), norm_v_(enhanced_v, training));
  return encoder_(f0_(fusion_norm_(fused.fusion)), training);
}

LossBreakdown AvsrModel::loss(const ModelInput& input, const std::vector<int>& transcript,
                              bool training) const {
  const Tensor f1 = encode(input, training);
  const CtcLoss ctc = ctc_loss(ctc_head_(f1), transcript, Vocabulary::kBlank);
  if (!ctc.feasible) {
    throw NumericError("ctc: transcript of " + std::to_string(transcript.size()) +
                       " tokens does not fit " + std::to_string(f1.dim(0)) + " frames");
  }
  std::vector<int> decoder_in{vocab_.bos()};
  decoder_in.insert(decoder_in.end(), transcript.begin(), transcript.end());
  std::vector<int> decoder_target(transcript);
  decoder_target.push_back(vocab_.eos());
  const Tensor att = attention_loss(decoder_(f1, decoder_in), decoder_target, config_.label_smoothing);

  LossBreakdown out;
  out.total = combined_loss(ctc.loss, att, config_.lambda);
  out.ctc = ctc.loss.item();
  out.attention = att.item();
  return out;
}

std::vector<int> AvsrModel::transcribe(const ModelInput& input) const {
  NoGradGuard no_grad;
  return greedy_decode(ctc_head_(encode(input, false)), Vocabulary::kBlank);
}

}  // namespace adavsr
