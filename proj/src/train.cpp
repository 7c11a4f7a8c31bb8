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


#include "adavsr/train.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "adavsr/errors.hpp"
#include "adavsr/metrics.hpp"

namespace adavsr {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  // splitmix64 finalizer folded over the arguments
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return step(step(step(a) ^ b) ^ c);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string format_fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string condition_name(double snr) {
  std::ostringstream os;
  os << snr;
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path.string());
  os << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

double noam_rate(std::size_t step, std::size_t model_width, std::size_t warmup, double scale) {
  const double s = static_cast<double>(std::max<std::size_t>(step, 1));
  const double w = static_cast<double>(warmup);
  return scale / std::sqrt(static_cast<double>(model_width)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad_data();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

double clip_grad_norm(std::span<const Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad_data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : grad_buffer(p)) g *= factor;
    }
  }
  return norm;
}

TrainHistory train_model(AvsrModel& model, std::span<const RawSample> data, const LogFn& log) {
  const ExperimentConfig& cfg = model.config();
  if (data.empty()) throw InputError("training set is empty");
  const auto start = std::chrono::steady_clock::now();

  std::vector<Tensor> params;
  for (const auto& [name, t] : model.store().parameters()) params.push_back(t);
  Adam adam(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  std::mt19937_64 rng(mix(cfg.seed, 0x7a41));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data[a].transcript.size() < data[b].transcript.size();
  });

  Corruption corruption;
  corruption.spec_augment = {cfg.specaug_width, cfg.cutout_bins, cfg.cutout_frames};
  corruption.occlusion = {cfg.occlusion_patch, cfg.occlusion_frames};
  const std::size_t width = cfg.model_dim / 2;

  TrainHistory history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0, epoch_ctc = 0.0, epoch_att = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      const std::size_t step = history.steps + 1;
      model.store().zero_grad();
      for (std::size_t b = begin; b < end; ++b) {
        const RawSample& sample = data[order[b]];
        const bool clean = unit(rng) < cfg.clean_fraction;
        corruption.snr_db = clean ? std::numeric_limits<double>::infinity()
                                  : cfg.train_snr[rng() % cfg.train_snr.size()];
        corruption.seed = mix(cfg.seed, step, b);
        double value = 0.0;
        try {
          const ModelInput input = prepare_input(sample, model.frontend(), corruption);
          const LossBreakdown loss = model.loss(input, sample.transcript, true);
          value = loss.total.item();
          epoch_ctc += loss.ctc;
          epoch_att += loss.attention;
          if (!std::isfinite(value)) throw NumericError("loss is not finite");
          backward(scale(loss.total, inv_batch));
        } catch (const NumericError& e) {
          throw NumericError("training step " + std::to_string(step) + ": " + e.what());
        }
        epoch_loss += value;
      }
      clip_grad_norm(params, cfg.grad_clip);
      adam.step(noam_rate(step, width, cfg.warmup, cfg.lr_scale));
      history.steps = step;
    }
    const double n = static_cast<double>(data.size());
    history.epoch_loss.push_back(epoch_loss / n);
    history.epoch_ctc.push_back(epoch_ctc / n);
    history.epoch_attention.push_back(epoch_att / n);
    if (log) {
      log("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(cfg.epochs) +
          " loss " + format_fixed(history.epoch_loss.back()) + " ctc " +
          format_fixed(history.epoch_ctc.back()) + " att " +
          format_fixed(history.epoch_attention.back()) + " steps " +
          std::to_string(history.steps) + " elapsed " + format_fixed(seconds_since(start), 1) + "s");
    }
  }
  model.store().zero_grad();
  history.seconds = seconds_since(start);
  return history;
}

const EvalRow& EvalReport::row(const std::string& condition) const {
  for (const auto& r : rows)
    if (r.condition == condition) return r;
  throw InputError("evaluation report has no condition '" + condition + "'");
}

std::string EvalReport::to_csv() const {
  std::string out = "condition,wer,cer,utterances\n";
  for (const auto& r : rows) {
    out += r.condition + "," + format_fixed(r.wer) + "," + format_fixed(r.cer) + "," +
           std::to_string(r.utterances) + "\n";
  }
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"condition", r.condition}, {"wer", r.wer}, {"cer", r.cer},
                         {"utterances", r.utterances}});
  }
  j["seconds"] = seconds;
  return j;
}

EvalReport evaluate(const AvsrModel& model, std::span<const RawSample> data,
                    std::span<const double> snr_db) {
  if (data.empty()) throw InputError("evaluation set is empty");
  const auto start = std::chrono::steady_clock::now();
  const Vocabulary& vocab = model.vocabulary();

  std::vector<std::pair<std::string, double>> conditions;
  for (double s : snr_db) conditions.emplace_back(condition_name(s), s);
  conditions.emplace_back("clean", std::numeric_limits<double>::infinity());

  EvalReport report;
  double wer_sum = 0.0, cer_sum = 0.0;
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    ErrorAccumulator acc;
    for (std::size_t i = 0; i < data.size(); ++i) {
      Corruption corruption;
      corruption.snr_db = conditions[c].second;
      corruption.seed = mix(0xe7a1, std::bit_cast<std::uint64_t>(conditions[c].second), i);
      const ModelInput input = prepare_input(data[i], model.frontend(), corruption);
      acc.add(vocab.decode(model.transcribe(input)), vocab.decode(data[i].transcript));
    }
    const ErrorRates r = acc.rates();
    report.rows.push_back({conditions[c].first, r.wer, r.cer, acc.utterances()});
    wer_sum += r.wer;
    cer_sum += r.cer;
  }
  const double n = static_cast<double>(conditions.size());
  report.rows.push_back({"avg", wer_sum / n, cer_sum / n, data.size()});
  report.seconds = seconds_since(start);
  return report;
}

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty() || item == "clean") continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !std::isfinite(v)) {
      throw InputError("snr list: cannot parse '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

Split split_dataset(const Dataset& data, double test_fraction) {
  const std::size_t n = data.samples.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_test == 0 || n_test >= n) throw ConfigError("split leaves an empty train or test set");
  Split s;
  s.train.assign(data.samples.begin(), data.samples.end() - static_cast<std::ptrdiff_t>(n_test));
  s.test.assign(data.samples.end() - static_cast<std::ptrdiff_t>(n_test), data.samples.end());
  return s;
}

void save_checkpoint(const std::filesystem::path& dir, const AvsrModel& model,
                     const TrainHistory& history) {
  std::filesystem::create_directories(dir);
  model.config().save(dir / "config.txt");
  write_text(dir / "corpus.json", model.corpus().to_json().dump(2) + "\n");
  write_text(dir / "params.json", model.store().to_json().dump() + "\n");
  nlohmann::json metrics{{"epoch_loss", history.epoch_loss},
                         {"epoch_ctc", history.epoch_ctc},
                         {"epoch_attention", history.epoch_attention},
                         {"steps", history.steps},
                         {"seconds", history.seconds},
                         {"parameters", model.store().parameter_count()}};
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
}

std::unique_ptr<AvsrModel> load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("no checkpoint directory " + dir.string());
  const ExperimentConfig cfg = ExperimentConfig::load(dir / "config.txt");
  CorpusSpec corpus;
  nlohmann::json params;
  try {
    corpus = CorpusSpec::from_json(nlohmann::json::parse(read_text(dir / "corpus.json")));
    params = nlohmann::json::parse(read_text(dir / "params.json"));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("checkpoint " + dir.string() + ": " + e.what());
  }
  auto model = std::make_unique<AvsrModel>(cfg, corpus, cfg.seed);
  try {
    model->store().load_json(params);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("checkpoint " + dir.string() + ": " + e.what());
  }
  return model;
}

void apply_seed_override(ExperimentConfig& config) {
  const char* env = std::getenv("ADAVSR_SEED");
  if (env == nullptr || *env == '\0') return;
  const std::string text(env);
  if (text.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("ADAVSR_SEED must be an unsigned integer, got '" + text + "'");
  }
  try {
    config.seed = std::stoull(text);
  } catch (const std::exception&) {
    throw ConfigError("ADAVSR_SEED is out of range: '" + text + "'");
  }
}

double AblationRun::mean_wer() const {
  if (wer.empty()) return 0.0;
  return std::accumulate(wer.begin(), wer.end(), 0.0) / static_cast<double>(wer.size());
}

const AblationRun& AblationResult::run(const std::string& name) const {
  for (const auto& r : runs)
    if (r.name == name) return r;
  throw InputError("ablation has no run '" + name + "'");
}

std::string AblationResult::to_csv() const {
  std::string out = "name,avrm,cmnsm,tbsm,encoding,mean_wer";
  const std::size_t seeds = runs.empty() ? 0 : runs.front().wer.size();
  for (std::size_t s = 0; s < seeds; ++s) out += ",wer_seed" + std::to_string(s + 1);
  out += "\n";
  for (const auto& r : runs) {
    out += r.name + "," + (r.avrm ? "1" : "0") + "," + (r.cmnsm ? "1" : "0") + "," +
           (r.tbsm ? "1" : "0") + "," + to_string(r.encoding) + "," + format_fixed(r.mean_wer());
    for (double w : r.wer) out += "," + format_fixed(w);
    out += "\n";
  }
  return out;
}

nlohmann::json AblationResult::to_json() const {
  nlohmann::json j;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    j["runs"].push_back({{"name", r.name},
                         {"avrm", r.avrm},
                         {"cmnsm", r.cmnsm},
                         {"tbsm", r.tbsm},
                         {"encoding", to_string(r.encoding)},
                         {"wer", r.wer},
                         {"mean_wer", r.mean_wer()}});
  }
  j["seconds"] = seconds;
  return j;
}

AblationResult run_ablation(const ExperimentConfig& config, const LogFn& log) {
  const auto start = std::chrono::steady_clock::now();
  CorpusSpec corpus;
  corpus.n_samples = config.corpus_samples;
  corpus.seed = config.corpus_seed;
  const Dataset data = Dataset::generate(corpus);
  const Split split = split_dataset(data, config.test_fraction);
  const std::vector<double> snr{config.ablation_snr};

  using E = AudioEncoding;
  AblationResult result;
  result.runs = {
      {"baseline", false, false, false, E::kA3, {}},
      {"avrm", true, false, false, E::kA3, {}},
      {"cmnsm", false, true, false, E::kA3, {}},
      {"tbsm", false, false, true, E::kA3, {}},
      {"avrm+cmnsm", true, true, false, E::kA3, {}},
      {"full", true, true, true, E::kA3, {}},
      {"full_a1", true, true, true, E::kA1, {}},
      {"full_a2", true, true, true, E::kA2, {}},
  };
  for (auto& run : result.runs) {
    for (std::uint64_t seed : config.ablation_seeds) {
      ExperimentConfig cfg = config;
      cfg.use_avrm = run.avrm;
      cfg.use_cmnsm = run.cmnsm;
      cfg.use_tbsm = run.tbsm;
      cfg.encoding = run.encoding;
      cfg.seed = seed;
      AvsrModel model(cfg, corpus, seed);
      train_model(model, split.train);
      const EvalReport report = evaluate(model, split.test, snr);
      run.wer.push_back(report.rows.front().wer);
      if (log) {
        log(run.name + " seed " + std::to_string(seed) + " wer " + format_fixed(run.wer.back(), 2) +
            " elapsed " + format_fixed(seconds_since(start), 1) + "s");
      }
    }
  }
  result.seconds = seconds_since(start);
  return result;
}

}  // namespace adavsr
