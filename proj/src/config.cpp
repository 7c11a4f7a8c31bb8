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


#include "adavsr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "adavsr/errors.hpp"

namespace adavsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("config: key '" + key + "' has malformed value '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw ConfigError("config: key '" + key + "' expects a boolean, got '" + value + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<T>) s += format_double(values[i]);
    else s += std::to_string(values[i]);
  }
  return s;
}

// One entry per key: how to read it into a config and how to print it.
struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> read;
  std::function<std::string(const ExperimentConfig&)> write;
};

template <typename T>
Field number(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v);
          },
          [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

Field flag(bool ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_bool(k, v);
          },
          [member](const ExperimentConfig& c) { return std::string(c.*member ? "1" : "0"); }};
}

Field text(std::string ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const ExperimentConfig& c) { return c.*member; }};
}

template <typename T>
Field list(std::vector<T> ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_list<T>(k, v);
          },
          [member](const ExperimentConfig& c) { return join(c.*member); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, Field>> table{
      {"seed", number(&C::seed)},
      {"encoding",
       {[](C& c, const std::string&, const std::string& v) { c.encoding = parse_encoding(v); },
        [](const C& c) { return to_string(c.encoding); }}},
      {"use_avrm", flag(&C::use_avrm)},
      {"use_cmnsm", flag(&C::use_cmnsm)},
      {"use_tbsm", flag(&C::use_tbsm)},
      {"feature_dim", number(&C::feature_dim)},
      {"model_dim", number(&C::model_dim)},
      {"regions", number(&C::regions)},
      {"attention_dim", number(&C::attention_dim)},
      {"tau", number(&C::tau)},
      {"lambda", number(&C::lambda)},
      {"label_smoothing", number(&C::label_smoothing)},
      {"utterance_norm", flag(&C::utterance_norm)},
      {"encoder_layers", number(&C::encoder_layers)},
      {"encoder_heads", number(&C::encoder_heads)},
      {"encoder_kernel", number(&C::encoder_kernel)},
      {"encoder_ff", number(&C::encoder_ff)},
      {"decoder_layers", number(&C::decoder_layers)},
      {"decoder_heads", number(&C::decoder_heads)},
      {"decoder_ff", number(&C::decoder_ff)},
      {"epochs", number(&C::epochs)},
      {"batch_size", number(&C::batch_size)},
      {"lr_scale", number(&C::lr_scale)},
      {"warmup", number(&C::warmup)},
      {"adam_beta1", number(&C::adam_beta1)},
      {"adam_beta2", number(&C::adam_beta2)},
      {"adam_eps", number(&C::adam_eps)},
      {"grad_clip", number(&C::grad_clip)},
      {"train_snr", list(&C::train_snr)},
      {"clean_fraction", number(&C::clean_fraction)},
      {"eval_snr", list(&C::eval_snr)},
      {"specaug_width", number(&C::specaug_width)},
      {"cutout_bins", number(&C::cutout_bins)},
      {"cutout_frames", number(&C::cutout_frames)},
      {"occlusion_patch", number(&C::occlusion_patch)},
      {"occlusion_frames", number(&C::occlusion_frames)},
      {"train_data", text(&C::train_data)},
      {"test_data", text(&C::test_data)},
      {"corpus_samples", number(&C::corpus_samples)},
      {"corpus_seed", number(&C::corpus_seed)},
      {"test_fraction", number(&C::test_fraction)},
      {"ablation_seeds", list(&C::ablation_seeds)},
      {"ablation_snr", number(&C::ablation_snr)},
  };
  return table;
}

}  // namespace

std::string to_string(AudioEncoding e) {
  switch (e) {
    case AudioEncoding::kA1: return "A1";
    case AudioEncoding::kA2: return "A2";
    case AudioEncoding::kA3: return "A3";
  }
  return "A3";
}

AudioEncoding parse_encoding(const std::string& s) {
  if (s == "A1") return AudioEncoding::kA1;
  if (s == "A2") return AudioEncoding::kA2;
  if (s == "A3") return AudioEncoding::kA3;
  throw ConfigError("config: encoding must be A1, A2 or A3, got '" + s + "'");
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  std::map<std::string, const Field*> index;
  for (const auto& [k, f] : fields()) index[k] = &f;
  ExperimentConfig c;
  std::istringstream is(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = index.find(key);
    if (it == index.end()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second->read(c, key, value);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + "=" + f.write(*this) + "\n";
  return out;
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw InputError("config: cannot write " + path.string());
  os << to_text();
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (feature_dim == 0 || model_dim == 0) fail("feature_dim and model_dim must be positive");
  if (model_dim % 2 != 0) fail("model_dim must be even");
  if (feature_dim != model_dim) fail("feature_dim must equal model_dim");
  if (!(tau >= 0.0)) fail("tau must be nonnegative");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must lie in [0, 1]");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must lie in [0, 1)");
  const std::size_t width = model_dim / 2;
  if (encoder_heads == 0 || width % encoder_heads != 0) fail("encoder heads must divide model_dim/2");
  if (decoder_heads == 0 || width % decoder_heads != 0) fail("decoder heads must divide model_dim/2");
  if (encoder_kernel % 2 == 0) fail("encoder_kernel must be odd");
  if (batch_size == 0) fail("batch_size must be positive");
  if (warmup == 0) fail("warmup must be positive");
  if (!(lr_scale > 0.0)) fail("lr_scale must be positive");
  if (train_snr.empty() && clean_fraction < 1.0) fail("train_snr is empty");
  if (!(clean_fraction >= 0.0 && clean_fraction <= 1.0)) fail("clean_fraction must lie in [0, 1]");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in (0, 1)");
  if (!(occlusion_patch >= 0.0 && occlusion_patch <= 1.0 && occlusion_frames >= 0.0 &&
        occlusion_frames <= 1.0)) {
    fail("occlusion fractions must lie in [0, 1]");
  }
  for (double s : train_snr)
    if (!std::isfinite(s)) fail("train_snr entries must be finite");
  if (ablation_seeds.empty()) fail("ablation_seeds is empty");
}

}  // namespace adavsr
