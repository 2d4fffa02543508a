// Copyright 2026 The capsed Authors. All Rights Reserved.
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

#include <random>

#include <gtest/gtest.h>

#include "capsed/postprocess.h"
#include "evaluation_oracle.h"

namespace capsed {
namespace {

BinarySequence Bits(const std::string& s) {
  BinarySequence b;
  for (char c : s) b.push_back(c == '1');
  return b;
}

Tensor<float> Curve(const std::vector<float>& values) {
  return Tensor<float>(Shape{values.size(), 1}, values);
}

TEST(TagDecisionTest, StrictThreshold) {
  EXPECT_TRUE(TagDecision(Tensor<float>({3}), 0.3).empty());
  EXPECT_EQ(TagDecision(Tensor<float>::Vector({0.31f, 0.29f}), 0.3), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(TagDecision(Tensor<float>::Vector({0.5f}), 0.5).empty());
}

TEST(MorphologyTest, SizeZeroIsIdentity) {
  const auto x = Bits("1101001");
  EXPECT_EQ(Dilate(x, 0), x);
  EXPECT_EQ(Erode(x, 0), x);
  EXPECT_EQ(Closing(x, 0, 0), x);
  EXPECT_EQ(Closing(x, 1, 1), x);
}

TEST(MorphologyTest, WorkedExampleMatchesSetOracle) {
  const auto x = Bits("1101");
  // Element {-1, 0}: dilation fills the gap and spills past the left edge.
  EXPECT_EQ(Closing(x, 2, 1), Bits("1111"));
  EXPECT_EQ(Closing(x, 2, 1), testing::SetClosing(x, 2, 1));
  EXPECT_EQ(Dilate(Bits("0010000"), 3), Bits("0111000"));
  EXPECT_EQ(Erode(Bits("0111100"), 3), Bits("0011000"));
}

TEST(MorphologyTest, RandomSequencesMatchSetOracle) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution bit(0.4);
  std::uniform_int_distribution<int> len(1, 30), size(0, 11);
  for (int trial = 0; trial < 500; ++trial) {
    BinarySequence x(len(rng));
    for (auto& v : x) v = bit(rng);
    const int d = size(rng), e = size(rng);
    EXPECT_EQ(Closing(x, d, e), testing::SetClosing(x, d, e)) << "trial " << trial;
  }
}

TEST(MorphologyTest, ClosingIsIdempotentForEqualSizes) {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution bit(0.5);
  for (int trial = 0; trial < 300; ++trial) {
    BinarySequence x(40);
    for (auto& v : x) v = bit(rng);
    const std::size_t k = trial % 12;
    const auto once = Closing(x, k, k);
    EXPECT_EQ(Closing(once, k, k), once) << "size " << k;
    // Closing is extensive.
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_GE(once[i], x[i]);
  }
}

TEST(ExtractEventsTest, BelowThresholdGivesNothing) {
  PostprocessConfig c;
  EXPECT_TRUE(ExtractEvents(Curve(std::vector<float>(10, 0.59f)), {0}, {"a"}, c).empty());
}

TEST(ExtractEventsTest, IdentityMorphologyRun) {
  PostprocessConfig c;
  c.dilation_size = c.erosion_size = 0;
  c.slice_duration = 0.5;
  const auto events =
      ExtractEvents(Curve({0.9f, 0.9f, 0.9f, 0.9f, 0.9f, 0, 0, 0, 0, 0}), {0}, {"a"}, c);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0], (Event{"a", 0.0, 2.5}));
}

TEST(ExtractEventsTest, OnlyTaggedClassesEmitEvents) {
  PostprocessConfig c;
  c.dilation_size = c.erosion_size = 0;
  c.slice_duration = 1.0;
  Tensor<float> o(Shape{4, 2}, {0.9f, 0.9f, 0.1f, 0.9f, 0.9f, 0.1f, 0.9f, 0.9f});
  const auto events = ExtractEvents(o, {1}, {"a", "b"}, c);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0], (Event{"b", 0.0, 2.0}));
  EXPECT_EQ(events[1], (Event{"b", 3.0, 4.0}));
}

TEST(ExtractEventsTest, ClosingMergesFragments) {
  PostprocessConfig c;  // dilation 10, erosion 5
  c.slice_duration = 1.0;
  std::vector<float> o(30, 0.0f);
  for (int t : {10, 11, 14, 15}) o[t] = 0.8f;
  const auto events = ExtractEvents(Curve(o), {0}, {"a"}, c);
  ASSERT_EQ(events.size(), 1u);
  // Oracle: dilate {10,11,14,15} by [-5,4] -> [5,19]; erode by [-2,2] -> [7,17].
  EXPECT_EQ(events[0], (Event{"a", 7.0, 18.0}));
}

TEST(ExtractEventsTest, RaisingFrameThresholdNeverAddsActiveSlices) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> o(20);
    for (auto& v : o) v = u(rng);
    const auto lo = Binarize(Curve(o), 0, 0.4), hi = Binarize(Curve(o), 0, 0.7);
    for (std::size_t t = 0; t < o.size(); ++t) EXPECT_LE(hi[t], lo[t]);
  }
}

TEST(PostprocessConfigTest, Validation) {
  PostprocessConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.tag_threshold = 1.0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = {};
  c.slice_duration = 0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

}  // namespace
}  // namespace capsed
