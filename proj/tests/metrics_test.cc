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
#include <sstream>

#include <gtest/gtest.h>

#include "capsed/annotations.h"
#include "capsed/metrics.h"
#include "capsed/tensor_io.h"
#include "evaluation_oracle.h"

namespace capsed {
namespace {

const std::vector<std::string> kLabels = {"a", "b", "c"};

TEST(TaggingMetricsTest, Examples) {
  const TagList truth = {{"x", {"a", "b"}}, {"y", {"c"}}};
  auto perfect = TaggingMetrics(truth, truth);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);

  auto half = TaggingMetrics({{"x", {"a"}}}, {{"x", {"a", "b"}}});
  EXPECT_EQ(half.precision, 1.0);
  EXPECT_EQ(half.recall, 0.5);
  EXPECT_DOUBLE_EQ(half.f1, 2.0 / 3.0);

  auto none = TaggingMetrics({}, truth);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_EQ(none.fn, 3);
}

TEST(SegmentMetricsTest, WorkedExample) {
  // Reference active in segments 1-5, prediction in 4-8, of a 10 s clip.
  const EventList ref = {{"c", {{"a", 1.0, 6.0}}}};
  const EventList pred = {{"c", {{"a", 4.0, 9.0}}}};
  const auto s = SegmentMetrics(pred, ref, {{"c", 10.0}});
  EXPECT_EQ(s.tp, 2);
  EXPECT_EQ(s.fn, 3);
  EXPECT_EQ(s.fp, 3);
  EXPECT_EQ(s.substitutions, 0);
  EXPECT_EQ(s.deletions, 3);
  EXPECT_EQ(s.insertions, 3);
  EXPECT_EQ(s.reference_active, 5);
  EXPECT_DOUBLE_EQ(s.error_rate, 1.2);
}

TEST(SegmentMetricsTest, IdenticalAndEmptyPredictions) {
  const EventList ref = {{"c", {{"a", 0.5, 3.2}, {"b", 2.0, 2.5}}}};
  const auto same = SegmentMetrics(ref, ref, {{"c", 10.0}});
  EXPECT_EQ(same.error_rate, 0.0);
  EXPECT_EQ(same.f1, 1.0);
  const auto none = SegmentMetrics({}, ref, {{"c", 10.0}});
  EXPECT_EQ(none.error_rate, 1.0);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_EQ(none.deletions, none.reference_active);
}

TEST(SegmentMetricsTest, SubstitutionsAndInsertionHeavyErrorRate) {
  const EventList ref = {{"c", {{"a", 0.0, 1.0}}}};
  const auto sub = SegmentMetrics({{"c", {{"b", 0.0, 1.0}}}}, ref, {{"c", 2.0}});
  EXPECT_EQ(sub.substitutions, 1);
  EXPECT_EQ(sub.error_rate, 1.0);
  const auto ins = SegmentMetrics({{"c", {{"a", 0.0, 2.0}, {"b", 0.0, 2.0}}}}, ref, {{"c", 2.0}});
  EXPECT_EQ(ins.insertions, 3);
  EXPECT_GT(ins.error_rate, 1.0);
}

TEST(SegmentMetricsTest, TouchingBoundaryIsNotOverlap) {
  const EventList ref = {{"c", {{"a", 1.0, 2.0}}}};
  const auto s = SegmentMetrics(ref, ref, {{"c", 3.0}});
  EXPECT_EQ(s.reference_active, 1);
}

TEST(SegmentMetricsTest, Errors) {
  EXPECT_THROW(SegmentMetrics({{"c", {}}}, {}, {{"c", -1.0}}), std::invalid_argument);
  EXPECT_THROW(SegmentMetrics({{"c", {}}}, {}, {}), std::invalid_argument);
}

TEST(MetricsOracleTest, RandomCasesMatchBruteForce) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> n_clips(1, 4), quarter_len(4, 44);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> clips;
    std::map<std::string, double> durations;
    for (int c = n_clips(rng); c > 0; --c) {
      clips.push_back("clip" + std::to_string(c));
      durations[clips.back()] = quarter_len(rng) / 4.0;
    }
    const EventList ref = testing::RandomEvents(rng, clips, durations, kLabels);
    const EventList pred = testing::RandomEvents(rng, clips, durations, kLabels);

    const auto s = SegmentMetrics(pred, ref, durations);
    const auto o = testing::OracleSegments(pred, ref, durations, kLabels, 1.0);
    EXPECT_EQ(s.tp, o.tp);
    EXPECT_EQ(s.fp, o.fp);
    EXPECT_EQ(s.fn, o.fn);
    EXPECT_EQ(s.substitutions, o.s);
    EXPECT_EQ(s.deletions, o.d);
    EXPECT_EQ(s.insertions, o.i);
    EXPECT_EQ(s.reference_active, o.n);
    EXPECT_GE(s.error_rate, 0.0);

    const auto t = TaggingMetrics(TagsFromEvents(pred), TagsFromEvents(ref));
    const auto ot = testing::OracleTagging(TagsFromEvents(pred), TagsFromEvents(ref), kLabels);
    EXPECT_EQ(t.tp, ot.tp);
    EXPECT_EQ(t.fp, ot.fp);
    EXPECT_EQ(t.fn, ot.fn);
  }
}

TEST(MetricsReportTest, JsonHasAllCounts) {
  MetricsReport r;
  r.sed.error_rate = 1.2;
  const auto j = ToJson(r);
  for (const char* k : {"tp", "fp", "fn", "substitutions", "deletions", "insertions",
                        "reference_active", "error_rate", "f1"}) {
    EXPECT_TRUE(j["sed"].contains(k)) << k;
  }
  EXPECT_TRUE(j["tagging"].contains("precision"));
}

TEST(AnnotationsTest, EventListRoundTrip) {
  const EventList events = {{"b", {{"dog", 0.5, 1.25}, {"cat", 0.1, 0.2}}}, {"a", {}}};
  std::stringstream ss;
  WriteEvents(ss, events);
  EXPECT_EQ(ss.str(), "a\nb\t0.100000\t0.200000\tcat\nb\t0.500000\t1.250000\tdog\n");
  const EventList back = ReadEvents(ss);
  EXPECT_TRUE(back.at("a").empty());
  EXPECT_EQ(back.at("b"), (std::vector<Event>{{"cat", 0.1, 0.2}, {"dog", 0.5, 1.25}}));
}

TEST(AnnotationsTest, MalformedEventListsRejected) {
  for (const char* bad : {"c\t1.0\tdog\n", "c\tx\t2\tdog\n", "c\t2\t1\tdog\n", "\t1\t2\tdog\n"}) {
    std::stringstream ss(bad);
    EXPECT_THROW(ReadEvents(ss), FormatError) << bad;
  }
}

TEST(AnnotationsTest, WeakLabelsRoundTrip) {
  const TagList tags = {{"x", {"b", "a"}}, {"y", {}}};
  std::stringstream ss;
  WriteTags(ss, tags);
  EXPECT_EQ(ss.str(), "x,a;b\ny,\n");
  EXPECT_EQ(ReadTags(ss), tags);
  std::stringstream bad("x;a\n");
  EXPECT_THROW(ReadTags(bad), FormatError);
  std::stringstream empty_label("x,a;;b\n");
  EXPECT_THROW(ReadTags(empty_label), FormatError);
}

TEST(AnnotationsTest, WeakLabelsAreUnionOfStrongLabels) {
  const EventList events = {{"x", {{"a", 0, 1}, {"b", 2, 3}, {"a", 4, 5}}}, {"y", {}}};
  EXPECT_EQ(TagsFromEvents(events), (TagList{{"x", {"a", "b"}}, {"y", {}}}));
}

}  // namespace
}  // namespace capsed
