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


// End-to-end audio-visual recognizer assembled from the front end, the three
// enhancement modules and the sequence back end. Modules switched off in the
// config are replaced by the plain path (audio features pass through,
// visual features are averaged over the grid, fusion skips the pairwise
// selection) and their weights are never created.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "adavsr/avrm.hpp"
#include "adavsr/cmnsm.hpp"
#include "adavsr/config.hpp"
#include "adavsr/frontend.hpp"
#include "adavsr/nn.hpp"
#include "adavsr/seqloss.hpp"
#include "adavsr/synth.hpp"
#include "adavsr/tbsm.hpp"

namespace adavsr {

/// The three model inputs after corruption, ready for the encoders.
struct ModelInput {
  Tensor frames;    // [T0, H0, W0, C0]
  Tensor waveform;  // [T0 * 640]
  Tensor logmel;    // [F, S], recomputed from the (noisy) waveform
};

struct Corruption {
  double snr_db = std::numeric_limits<double>::infinity();  // +inf keeps audio clean
  std::uint64_t seed = 0;
  SpecAugmentSpec spec_augment;
  OcclusionSpec occlusion;
};

ModelInput prepare_input(const RawSample& sample, const FrontendConfig& frontend,
                         const Corruption& corruption);

struct LossBreakdown {
  Tensor total;
  double ctc = 0.0;
  double attention = 0.0;
};

class AvsrModel {
 public:
  AvsrModel(const ExperimentConfig& config, const CorpusSpec& corpus, std::uint64_t seed);
  AvsrModel(const AvsrModel&) = delete;
  AvsrModel& operator=(const AvsrModel&) = delete;

  /// Encoder output f1 [T1, D1/2].
  Tensor encode(const ModelInput& input, bool training) const;
  Tensor ctc_log_probs(const Tensor& f1) const { return ctc_head_(f1); }

  /// Weighted CTC + attention loss for one utterance. Throws NumericError
  /// when the CTC target is unreachable for the input length.
  LossBreakdown loss(const ModelInput& input, const std::vector<int>& transcript,
                     bool training) const;

  /// Greedy CTC decoding in eval mode without recording a graph.
  std::vector<int> transcribe(const ModelInput& input) const;

  ParameterStore& store() { return *store_; }
  const ParameterStore& store() const { return *store_; }
  const ExperimentConfig& config() const { return config_; }
  const CorpusSpec& corpus() const { return corpus_; }
  const FrontendConfig& frontend() const { return frontend_; }
  const Vocabulary& vocabulary() const { return vocab_; }

 private:
  ExperimentConfig config_;
  CorpusSpec corpus_;
  FrontendConfig frontend_;
  Vocabulary vocab_;
  std::unique_ptr<ParameterStore> store_;

  std::optional<TimeDomainEncoder> time_encoder_;
  std::optional<FreqDomainEncoder> freq_encoder_;
  VisualEncoder visual_encoder_;
  std::optional<Cmnsm> cmnsm_;
  std::optional<Avrm> avrm_;
  Linear visual_pool_proj_;  // used when the refinement module is off
  BatchNorm norm_a_, norm_v_;  // per-channel standardization ahead of the BiLSTMs
  LayerNorm fusion_norm_;      // rescales the fused features ahead of the f0 projection
  Tbsm tbsm_;
  F0Projection f0_;
  ConformerEncoder encoder_;
  CtcHead ctc_head_;
  TransformerDecoder decoder_;
};

}  // namespace adavsr
