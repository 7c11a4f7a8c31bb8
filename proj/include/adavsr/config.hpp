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


// Experiment configuration as flat `key=value` text. Every field is written
// back on save, doubles with round-trip precision, so parse(to_text(c)) == c.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace adavsr {

enum class AudioEncoding { kA1, kA2, kA3 };

std::string to_string(AudioEncoding e);
AudioEncoding parse_encoding(const std::string& s);

struct ExperimentConfig {
  std::uint64_t seed = 1;

  // model
  AudioEncoding encoding = AudioEncoding::kA3;
  bool use_avrm = true;
  bool use_cmnsm = true;
  bool use_tbsm = true;
  std::size_t feature_dim = 32;  // C1
  std::size_t model_dim = 32;    // D1
  std::size_t regions = 9;       // k
  std::size_t attention_dim = 16;
  double tau = 0.095;
  double lambda = 0.9;
  double label_smoothing = 0.1;
  // Batch norm uses each utterance's own statistics at eval time as well.
  bool utterance_norm = true;
  std::size_t encoder_layers = 2;
  std::size_t encoder_heads = 2;
  std::size_t encoder_kernel = 7;
  std::size_t encoder_ff = 64;
  std::size_t decoder_layers = 2;
  std::size_t decoder_heads = 2;
  std::size_t decoder_ff = 64;

  // optimization
  std::size_t epochs = 10;
  std::size_t batch_size = 2;
  double lr_scale = 0.2;
  std::size_t warmup = 400;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double grad_clip = 5.0;  // global norm; 0 disables

  // corruption
  std::vector<double> train_snr{-5, 0, 5, 10, 15};
  double clean_fraction = 0.0;  // share of training draws left noise-free
  std::vector<double> eval_snr{-5, 0, 5, 10};
  std::size_t specaug_width = 0;
  std::size_t cutout_bins = 0;
  std::size_t cutout_frames = 0;
  double occlusion_patch = 0.0;
  double occlusion_frames = 0.0;

  // data
  std::string train_data;
  std::string test_data;
  std::size_t corpus_samples = 512;
  std::uint64_t corpus_seed = 7;
  double test_fraction = 0.25;

  // ablation
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3};
  double ablation_snr = -5.0;

  /// Throws ConfigError on unknown keys, malformed values or inconsistent
  /// settings.
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

}  // namespace adavsr
