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


#include <algorithm>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "adavsr/metrics.hpp"

using namespace adavsr;

namespace {

// Plain recursive Levenshtein with no table; exponential but fine for
// strings of length <= 4.
std::size_t naive_distance(const std::string& a, const std::string& b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  const std::string ra = a.substr(1), rb = b.substr(1);
  const std::size_t sub = naive_distance(ra, rb) + (a[0] == b[0] ? 0 : 1);
  return std::min({sub, naive_distance(ra, b) + 1, naive_distance(a, rb) + 1});
}

std::vector<std::string> all_strings(std::size_t max_len) {
  std::vector<std::string> out{""};
  std::vector<std::string> frontier{""};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::string> next;
    for (const auto& s : frontier)
      for (char c : std::string("abc")) next.push_back(s + c);
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST(EditDistance, Examples) {
  EXPECT_EQ(edit_distance(std::string("abc"), std::string("abc")).distance, 0u);
  const auto del = edit_distance(std::string("abc"), std::string(""));
  EXPECT_EQ(del.distance, 3u);
  EXPECT_EQ(del.deletions, 3u);
  const auto ins = edit_distance(std::string(""), std::string("ab"));
  EXPECT_EQ(ins.insertions, 2u);
  const auto k = edit_distance(std::string("kitten"), std::string("sitting"));
  EXPECT_EQ(k.distance, 3u);
  EXPECT_EQ(k.substitutions, 2u);
  EXPECT_EQ(k.insertions, 1u);
}

TEST(EditDistance, MatchesNaiveRecursionAndMetricAxioms) {
  const auto strings = all_strings(4);  // 121 strings over {a,b,c}
  std::vector<std::vector<std::size_t>> d(strings.size(), std::vector<std::size_t>(strings.size()));
  for (std::size_t i = 0; i < strings.size(); ++i)
    for (std::size_t j = 0; j < strings.size(); ++j) {
      const auto c = edit_distance(strings[i], strings[j]);
      d[i][j] = c.distance;
      ASSERT_EQ(c.distance, naive_distance(strings[i], strings[j])) << strings[i] << " " << strings[j];
      ASSERT_EQ(c.substitutions + c.deletions + c.insertions, c.distance);
      ASSERT_EQ(c.distance == 0, strings[i] == strings[j]);
    }
  for (std::size_t i = 0; i < strings.size(); ++i)
    for (std::size_t j = 0; j < strings.size(); ++j) {
      ASSERT_EQ(d[i][j], d[j][i]);
      for (std::size_t k = 0; k < strings.size(); ++k) ASSERT_LE(d[i][k], d[i][j] + d[j][k]);
    }
}

TEST(EditDistance, WorksOnWordSequences) {
  const auto c = edit_distance(split_words("the cat sat"), split_words("the  bat sat down"));
  EXPECT_EQ(c.distance, 2u);
  EXPECT_EQ(c.substitutions, 1u);
  EXPECT_EQ(c.insertions, 1u);
}

TEST(ErrorRates, PercentOfReferenceLength) {
  const auto r = wer_cer("a", "a b");
  EXPECT_DOUBLE_EQ(r.wer, 50.0);
  EXPECT_DOUBLE_EQ(r.cer, 100.0 * 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(wer_cer("a b", "a b").wer, 0.0);
}

TEST(ErrorRates, InsertionsCanExceedHundredPercent) {
  EXPECT_DOUBLE_EQ(wer_cer("x y z", "a").wer, 300.0);
}

TEST(ErrorRates, EmptyReferenceThrows) {
  EXPECT_THROW(wer_cer("a", ""), InputError);
  EXPECT_THROW(wer_cer("a", "   "), InputError);
  ErrorAccumulator acc;
  EXPECT_THROW(acc.rates(), InputError);
}

TEST(ErrorRates, CorpusLevelPoolsCounts) {
  ErrorAccumulator acc;
  acc.add("a", "a b");          // 1 of 2 words
  acc.add("c d e f", "c d e f"); // 0 of 4
  EXPECT_EQ(acc.utterances(), 2u);
  EXPECT_DOUBLE_EQ(acc.rates().wer, 100.0 / 6.0);
}
