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


#include "adavsr/metrics.hpp"

#include <sstream>

namespace adavsr {

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  return words;
}

ErrorRates wer_cer(const std::string& hyp, const std::string& ref) {
  ErrorAccumulator acc;
  acc.add(hyp, ref);
  return acc.rates();
}

void ErrorAccumulator::add(const std::string& hyp, const std::string& ref) {
  const auto ref_words = split_words(ref);
  if (ref_words.empty()) throw InputError("error rate: reference transcript has no words");
  word_edits_ += edit_distance(ref_words, split_words(hyp)).distance;
  words_ += ref_words.size();
  char_edits_ += edit_distance(ref, hyp).distance;
  chars_ += ref.size();
  ++count_;
}

ErrorRates ErrorAccumulator::rates() const {
  if (words_ == 0) throw InputError("error rate: no reference words accumulated");
  return {100.0 * static_cast<double>(word_edits_) / static_cast<double>(words_),
          100.0 * static_cast<double>(char_edits_) / static_cast<double>(chars_)};
}

}  // namespace adavsr
