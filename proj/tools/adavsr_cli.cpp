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


// Command-line driver: corpus generation, training, evaluation and the
// module ablation. Exit status 0 on success, 1 for bad input or
// configuration, 2 when the numerics break down.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "adavsr/config.hpp"
#include "adavsr/errors.hpp"
#include "adavsr/synth.hpp"
#include "adavsr/train.hpp"

using namespace adavsr;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os << text;
}

void log_line(const std::string& line) { std::cerr << line << std::endl; }

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : ExperimentConfig::load(path);
  apply_seed_override(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual speech recognition on a synthetic corpus"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus file");
  std::string gen_spec, gen_out;
  std::optional<std::size_t> gen_samples;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--spec", gen_spec, "corpus spec JSON (defaults when omitted)");
  gen->add_option("--out", gen_out, "output corpus file")->required();
  gen->add_option("--samples", gen_samples, "override the number of utterances");
  gen->add_option("--seed", gen_seed, "override the corpus seed");

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint directory");
  std::string train_config, train_data, train_out;
  train->add_option("--config", train_config, "experiment config (key=value)");
  train->add_option("--data", train_data, "training corpus file")->required();
  train->add_option("--out", train_out, "checkpoint directory")->required();

  auto* eval = app.add_subcommand("eval", "score a checkpoint under several noise levels");
  std::string eval_ckpt, eval_data, eval_snr = "-5,0,5,10,clean", eval_report;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval->add_option("--data", eval_data, "test corpus file")->required();
  eval->add_option("--snr", eval_snr, "comma list of SNRs in dB; 'clean' is always added");
  eval->add_option("--report", eval_report, "CSV report path; a .json twin holds timing")
      ->required();
  std::size_t eval_examples = 0;
  eval->add_option("--examples", eval_examples, "print this many clean transcriptions to stderr");

  auto* ablate = app.add_subcommand("ablate", "train and score every module combination");
  std::string ablate_config, ablate_out;
  ablate->add_option("--config", ablate_config, "experiment config (key=value)");
  ablate->add_option("--out", ablate_out, "output directory")->required();

  auto* defaults = app.add_subcommand("defaults", "print the default experiment config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      CorpusSpec spec;
      if (!gen_spec.empty()) {
        std::ifstream is(gen_spec);
        if (!is) throw InputError("cannot open " + gen_spec);
        try {
          spec = CorpusSpec::from_json(nlohmann::json::parse(is));
        } catch (const nlohmann::json::exception& e) {
          throw InputError(gen_spec + ": " + e.what());
        }
      }
      if (gen_samples) spec.n_samples = *gen_samples;
      if (gen_seed) spec.seed = *gen_seed;
      const Dataset data = Dataset::generate(spec);
      if (fs::path(gen_out).has_parent_path()) fs::create_directories(fs::path(gen_out).parent_path());
      data.save(gen_out);
      std::cout << "wrote " << data.samples.size() << " utterances to " << gen_out << "\n";
    } else if (*train) {
      const ExperimentConfig cfg = load_config(train_config);
      const Dataset data = Dataset::load(train_data);
      AvsrModel model(cfg, data.spec, cfg.seed);
      log_line("parameters " + std::to_string(model.store().parameter_count()));
      const TrainHistory history = train_model(model, data.samples, log_line);
      save_checkpoint(train_out, model, history);
      std::cout << "checkpoint written to " << train_out << "\n";
    } else if (*eval) {
      const auto model = load_checkpoint(eval_ckpt);
      const Dataset data = Dataset::load(eval_data);
      const auto snr = parse_snr_list(eval_snr);
      const EvalReport report = evaluate(*model, data.samples, snr);
      const Vocabulary& vocab = model->vocabulary();
      for (std::size_t i = 0; i < std::min(eval_examples, data.samples.size()); ++i) {
        const ModelInput input = prepare_input(data.samples[i], model->frontend(), Corruption{});
        std::cerr << "ref: " << vocab.decode(data.samples[i].transcript)
                  << " | hyp: " << vocab.decode(model->transcribe(input)) << "\n";
      }
      write_file(eval_report, report.to_csv());
      write_file(fs::path(eval_report).replace_extension(".json"), report.to_json().dump(2) + "\n");
      std::cout << report.to_csv();
    } else if (*ablate) {
      const ExperimentConfig cfg = load_config(ablate_config);
      const AblationResult result = run_ablation(cfg, log_line);
      write_file(fs::path(ablate_out) / "ablation.csv", result.to_csv());
      write_file(fs::path(ablate_out) / "ablation.json", result.to_json().dump(2) + "\n");
      std::cout << result.to_csv();
    } else if (*defaults) {
      std::cout << ExperimentConfig{}.to_text();
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
