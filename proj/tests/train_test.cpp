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


#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "adavsr/errors.hpp"
#include "adavsr/train.hpp"

using namespace adavsr;
namespace fs = std::filesystem;

namespace {

Dataset tiny_dataset(std::size_t n = 6, std::uint64_t seed = 7) {
  CorpusSpec spec;
  spec.n_samples = n;
  spec.seed = seed;
  return Dataset::generate(spec);
}

ExperimentConfig quick_config() {
  ExperimentConfig c;
  c.epochs = 1;
  c.batch_size = 2;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("adavsr_train_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Noam, MatchesClosedForm) {
  // Warmup branch: scale * d^-0.5 * step * warmup^-1.5.
  EXPECT_NEAR(noam_rate(1, 16, 400, 1.0), 0.25 * (1.0 / 8000.0), 1e-18);
  EXPECT_NEAR(noam_rate(100, 16, 400, 2.0), 2.0 * 0.25 * 100.0 / 8000.0, 1e-15);
  // Both branches meet at the warmup step.
  EXPECT_NEAR(noam_rate(400, 16, 400, 1.0), 0.25 / 20.0, 1e-15);
  // Decay branch.
  EXPECT_NEAR(noam_rate(1600, 16, 400, 1.0), 0.25 / 40.0, 1e-15);
  EXPECT_LT(noam_rate(401, 16, 400, 1.0), noam_rate(400, 16, 400, 1.0));
  EXPECT_GT(noam_rate(399, 16, 400, 1.0), noam_rate(398, 16, 400, 1.0));
}

TEST(Adam, FirstStepsMatchHandComputation) {
  Tensor w = Tensor::from({2}, {1.0, -2.0}).set_requires_grad();
  Adam adam({w}, 0.9, 0.999, 1e-8);
  // Bias-corrected first step moves each weight by lr * g / (|g| + eps).
  backward(sum(mul(w, Tensor::from({2}, {3.0, -0.5}))));
  adam.step(0.1);
  EXPECT_NEAR(w.data()[0], 1.0 - 0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(w.data()[1], -2.0 + 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);

  // Second step with gradient g2 = g1: moments stay equal to g after
  // correction, so the move is again lr * g / (|g| + eps).
  w.zero_grad();
  backward(sum(mul(w, Tensor::from({2}, {3.0, -0.5}))));
  const double before = w.data()[0];
  adam.step(0.1);
  EXPECT_NEAR(w.data()[0], before - 0.1 * 3.0 / (3.0 + 1e-8), 1e-14);
  EXPECT_EQ(adam.steps(), 2u);
}

TEST(Adam, ClipGradNormScalesToLimit) {
  Tensor a = Tensor::from({2}, {0.0, 0.0}).set_requires_grad();
  Tensor b = Tensor::from({1}, {0.0}).set_requires_grad();
  backward(add(sum(mul(a, Tensor::from({2}, {3.0, 0.0}))), sum(mul(b, Tensor::from({1}, {4.0})))));
  const std::vector<Tensor> params{a, b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad_data()[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad_data()[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad_data()[0], 0.8, 1e-15);
}

TEST(Snr, ListParsing) {
  EXPECT_EQ(parse_snr_list("-5,0, 5,clean"), (std::vector<double>{-5, 0, 5}));
  EXPECT_TRUE(parse_snr_list("clean").empty());
  EXPECT_THROW(parse_snr_list("-5,loud"), InputError);
  EXPECT_THROW(parse_snr_list("5dB"), InputError);
  EXPECT_THROW(parse_snr_list("inf"), InputError);
}

TEST(Split, TailIsTestSet) {
  const Dataset d = tiny_dataset(8);
  const Split s = split_dataset(d, 0.25);
  ASSERT_EQ(s.train.size(), 6u);
  ASSERT_EQ(s.test.size(), 2u);
  EXPECT_EQ(s.test[0].transcript, d.samples[6].transcript);
  EXPECT_THROW(split_dataset(d, 0.01), ConfigError);
}

TEST(Train, OneStepOnOneSampleLowersItsLoss) {
  const Dataset d = tiny_dataset(1);
  ExperimentConfig c = quick_config();
  c.batch_size = 1;
  c.clean_fraction = 1.0;
  c.lr_scale = 0.05;
  AvsrModel model(c, d.spec, c.seed);
  const ModelInput input = prepare_input(d.samples[0], model.frontend(), Corruption{});
  double before = 0.0;
  {
    NoGradGuard g;
    before = model.loss(input, d.samples[0].transcript, true).total.item();
  }
  const TrainHistory h = train_model(model, d.samples);
  EXPECT_EQ(h.steps, 1u);
  NoGradGuard g;
  const double after = model.loss(input, d.samples[0].transcript, true).total.item();
  EXPECT_LT(after, before);
}

TEST(Train, ZeroEpochCheckpointHoldsInitialWeights) {
  const Dataset d = tiny_dataset(2);
  ExperimentConfig c = quick_config();
  c.epochs = 0;
  AvsrModel model(c, d.spec, c.seed);
  const auto initial = model.store().to_json();
  const TrainHistory h = train_model(model, d.samples);
  EXPECT_EQ(h.steps, 0u);
  const fs::path dir = temp_dir("zero");
  save_checkpoint(dir, model, h);
  for (const char* f : {"config.txt", "corpus.json", "params.json", "metrics.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto loaded = load_checkpoint(dir);
  EXPECT_EQ(loaded->store().to_json(), initial);
  EXPECT_EQ(loaded->config(), c);
  fs::remove_all(dir);
}

TEST(Train, CheckpointReproducesEvaluation) {
  const Dataset d = tiny_dataset(4);
  const ExperimentConfig c = quick_config();
  AvsrModel model(c, d.spec, c.seed);
  const TrainHistory h = train_model(model, d.samples);
  const fs::path dir = temp_dir("roundtrip");
  save_checkpoint(dir, model, h);
  const auto loaded = load_checkpoint(dir);
  const std::vector<double> snr{0.0};
  EXPECT_EQ(evaluate(*loaded, d.samples, snr).to_csv(), evaluate(model, d.samples, snr).to_csv());
  fs::remove_all(dir);
}

TEST(Train, BrokenCheckpointsAreInputErrors) {
  EXPECT_THROW(load_checkpoint("/nonexistent/adavsr_ckpt"), InputError);
  const Dataset d = tiny_dataset(2);
  ExperimentConfig c = quick_config();
  c.epochs = 0;
  AvsrModel model(c, d.spec, c.seed);
  const fs::path dir = temp_dir("broken");
  save_checkpoint(dir, model, {});
  {
    std::ofstream os(dir / "params.json");
    os << "{\"parameters\": {}, \"batch_norm\": {}}";
  }
  EXPECT_THROW(load_checkpoint(dir), InputError);
  {
    std::ofstream os(dir / "params.json");
    os << "not json";
  }
  EXPECT_THROW(load_checkpoint(dir), InputError);
  fs::remove_all(dir);
}

TEST(Train, SameSeedGivesIdenticalRunsAndReports) {
  const Dataset d = tiny_dataset(4);
  const ExperimentConfig c = quick_config();
  AvsrModel a(c, d.spec, c.seed), b(c, d.spec, c.seed);
  const TrainHistory ha = train_model(a, d.samples), hb = train_model(b, d.samples);
  EXPECT_EQ(ha.epoch_loss, hb.epoch_loss);
  EXPECT_EQ(a.store().to_json(), b.store().to_json());
  const std::vector<double> snr{-5.0, 5.0};
  EXPECT_EQ(evaluate(a, d.samples, snr).to_csv(), evaluate(b, d.samples, snr).to_csv());
}

TEST(Train, NonFiniteWeightsAbortWithTheStep) {
  const Dataset d = tiny_dataset(2);
  AvsrModel model(quick_config(), d.spec, 1);
  Tensor w = model.store().parameters().front().second;
  w.mutable_data()[0] = std::nan("");
  try {
    train_model(model, d.samples);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("training step 1"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, RowsPerConditionPlusCleanAndAverage) {
  const Dataset d = tiny_dataset(3);
  const AvsrModel model(quick_config(), d.spec, 1);
  const std::vector<double> snr{-5.0, 0.0};
  const EvalReport r = evaluate(model, d.samples, snr);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[0].condition, "-5");
  EXPECT_EQ(r.rows[1].condition, "0");
  EXPECT_EQ(r.rows[2].condition, "clean");
  EXPECT_EQ(r.rows[3].condition, "avg");
  EXPECT_NEAR(r.row("avg").wer, (r.rows[0].wer + r.rows[1].wer + r.rows[2].wer) / 3.0, 1e-12);
  EXPECT_EQ(r.rows[0].utterances, 3u);
  EXPECT_THROW(r.row("10"), InputError);
  EXPECT_EQ(r.to_csv().rfind("condition,wer,cer,utterances\n", 0), 0u);
  EXPECT_TRUE(r.to_json().contains("seconds"));
}

TEST(Seed, EnvironmentOverride) {
  ExperimentConfig c;
  ::setenv("ADAVSR_SEED", "1234", 1);
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 1234u);
  ::setenv("ADAVSR_SEED", "12x", 1);
  EXPECT_THROW(apply_seed_override(c), ConfigError);
  ::unsetenv("ADAVSR_SEED");
  c.seed = 5;
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 5u);
}
