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


// Levenshtein alignment with substitution / deletion / insertion counts, and
// word / character error rates built on it.

#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "adavsr/errors.hpp"

namespace adavsr {

struct EditCounts {
  std::size_t distance = 0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;   // reference symbols missing from the hypothesis
  std::size_t insertions = 0;  // hypothesis symbols absent from the reference
};

/// Unit-cost edit distance from `ref` to `hyp`. The counts come from one
/// optimal alignment (diagonal moves preferred on ties, then deletions).
template <typename Seq>
EditCounts edit_distance(const Seq& ref, const Seq& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  EditCounts c;
  c.distance = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

/// Whitespace-separated words; runs of spaces count as one separator.
std::vector<std::string> split_words(const std::string& text);

struct ErrorRates {
  double wer = 0.0;  // percent
  double cer = 0.0;  // percent
};

/// Word and character error rates in percent. Throws InputError when the
/// reference has no words.
ErrorRates wer_cer(const std::string& hyp, const std::string& ref);

/// Corpus-level accumulation: total edits over total reference length.
class ErrorAccumulator {
 public:
  void add(const std::string& hyp, const std::string& ref);
  ErrorRates rates() const;
  std::size_t utterances() const { return count_; }

 private:
  std::size_t word_edits_ = 0, words_ = 0, char_edits_ = 0, chars_ = 0, count_ = 0;
};

}  // namespace adavsr
