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


// Training loop (Adam with a warmup/inverse-sqrt schedule), evaluation over
// noise conditions, checkpoints, and the module ablation driver.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adavsr/config.hpp"
#include "adavsr/model.hpp"
#include "adavsr/synth.hpp"

namespace adavsr {

/// scale * d^-0.5 * min(step^-0.5, step * warmup^-1.5), step counted from 1.
double noam_rate(std::size_t step, std::size_t model_width, std::size_t warmup, double scale);

class Adam {
 public:
  Adam(std::vector<Tensor> params, double beta1, double beta2, double eps);
  /// One update from the gradients currently held by the parameters.
  void step(double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// Scales every gradient so the global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<const Tensor> params, double max_norm);

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean combined loss per epoch
  std::vector<double> epoch_ctc;   // mean CTC term per epoch
  std::vector<double> epoch_attention;
  std::size_t steps = 0;
  double seconds = 0.0;
};

using LogFn = std::function<void(const std::string&)>;

/// Trains in place. The first epoch visits utterances shortest transcript
/// first; later epochs use a seeded shuffle. Each draw gets a training SNR
/// and optional augmentation from the config. A non-finite loss throws
/// NumericError naming the optimizer step.
TrainHistory train_model(AvsrModel& model, std::span<const RawSample> data, const LogFn& log = {});

struct EvalRow {
  std::string condition;  // "-5", "0", ..., "clean", "avg"
  double wer = 0.0;
  double cer = 0.0;
  std::size_t utterances = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double seconds = 0.0;

  const EvalRow& row(const std::string& condition) const;
  /// Fixed-precision CSV without timing, so equal inputs give equal bytes.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// One row per SNR in `snr_db`, then "clean", then "avg" (mean of the
/// others). Noise depends only on the condition and utterance index, so
/// every model sees identical test audio.
EvalReport evaluate(const AvsrModel& model, std::span<const RawSample> data,
                    std::span<const double> snr_db);

/// Parses a comma list of SNR values; the token "clean" is accepted and
/// ignored since the clean row is always reported.
std::vector<double> parse_snr_list(const std::string& text);

struct Split {
  std::vector<RawSample> train, test;
};
/// The last round(n * test_fraction) utterances form the test set.
Split split_dataset(const Dataset& data, double test_fraction);

/// Directory with config.txt, corpus.json, params.json and metrics.json.
void save_checkpoint(const std::filesystem::path& dir, const AvsrModel& model,
                     const TrainHistory& history);
std::unique_ptr<AvsrModel> load_checkpoint(const std::filesystem::path& dir);

/// Applies the ADAVSR_SEED environment variable, if set, to config.seed.
/// Throws ConfigError when it is not an unsigned integer.
void apply_seed_override(ExperimentConfig& config);

struct AblationRun {
  std::string name;  // row label
  bool avrm = false, cmnsm = false, tbsm = false;
  AudioEncoding encoding = AudioEncoding::kA3;
  std::vector<double> wer;  // one per seed
  double mean_wer() const;
};

struct AblationResult {
  std::vector<AblationRun> runs;
  double seconds = 0.0;
  const AblationRun& run(const std::string& name) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Baseline, each module alone, refinement+masking, the full model, and the
/// full model with only one audio stream, each trained once per ablation
/// seed on the generated corpus and scored by WER at config.ablation_snr.
AblationResult run_ablation(const ExperimentConfig& config, const LogFn& log = {});

}  // namespace adavsr
