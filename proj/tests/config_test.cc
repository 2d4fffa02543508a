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

#include "capsed/config.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "capsed/pipeline.h"
#include "capsed/synth.h"
#include "capsed/tensor_io.h"

namespace capsed {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ErrorOf(const json& j, const RunConfig& base = RunConfig::Full()) {
  try {
    RunConfigFromJson(j, base);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, PresetsAreConsistent) {
  const RunConfig full = RunConfig::Full();
  EXPECT_NO_THROW(full.Validate());
  EXPECT_EQ(full.model.time_slices(), 30u);
  EXPECT_NEAR(full.slice_duration(), 1.0 / 3.0, 1e-3);
  const RunConfig desk = RunConfig::Desk();
  EXPECT_NO_THROW(desk.Validate());
  EXPECT_EQ(desk.model.time_slices(), 30u);
  EXPECT_EQ(desk.classes.size(), 3u);
  EXPECT_LE(desk.train.epochs, 10u);
}

TEST(ConfigTest, JsonRoundTrip) {
  for (const RunConfig& c : {RunConfig::Full(), RunConfig::Desk()}) {
    const std::string text = ToJson(c).dump();
    EXPECT_EQ(ToJson(RunConfigFromJson(json::parse(text), RunConfig::Full())).dump(), text);
  }
}

TEST(ConfigTest, PartialOverridesKeepBaseValues) {
  const RunConfig c = RunConfigFromJson(
      json::parse(R"({"train": {"learning_rate": 0.01}, "postprocess": {"tag_threshold": 0.4}})"),
      RunConfig::Desk());
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 0.01);
  EXPECT_DOUBLE_EQ(c.postprocess.tag_threshold, 0.4);
  EXPECT_DOUBLE_EQ(c.train.tag_threshold, 0.4);
  EXPECT_EQ(c.train.batch_size, RunConfig::Desk().train.batch_size);
  EXPECT_EQ(c.model.input_frames, RunConfig::Desk().model.input_frames);
}

TEST(ConfigTest, UnknownKeysNameTheirPath) {
  EXPECT_NE(ErrorOf(json::parse(R"({"train": {"lerning_rate": 0.1}})")).find("train.lerning_rate"),
            std::string::npos);
  EXPECT_NE(ErrorOf(json::parse(R"({"modle": {}})")).find("modle"), std::string::npos);
}

TEST(ConfigTest, TypeMismatchesAreRejected) {
  EXPECT_NE(ErrorOf(json::parse(R"({"train": {"batch_size": "many"}})")).find("train.batch_size"),
            std::string::npos);
  EXPECT_NE(ErrorOf(json::parse(R"({"train": {"batch_size": -3}})")), "");
  EXPECT_NE(ErrorOf(json::parse(R"({"classes": "tone"})")), "");
  EXPECT_NE(ErrorOf(json::parse(R"({"model": {"routing": {"squash_form": "other"}}})")), "");
  EXPECT_NE(ErrorOf(json::parse("[1, 2]")), "");
}

TEST(ConfigTest, CrossSectionConsistencyIsChecked) {
  EXPECT_NE(ErrorOf(json::parse(R"({"model": {"input_frames": 100}})")), "");
  EXPECT_NE(ErrorOf(json::parse(R"({"classes": ["a", "b"]})"), RunConfig::Desk()), "");
  EXPECT_NE(ErrorOf(json::parse(R"({"classes": ["a", "a", "b"]})"), RunConfig::Desk()), "");
  EXPECT_NE(ErrorOf(json::parse(R"({"postprocess": {"frame_threshold": 1.5}})")), "");
}

TEST(ConfigTest, LoadReportsMissingAndMalformedFiles) {
  const fs::path dir = fs::path(::testing::TempDir()) / "capsed_config";
  fs::create_directories(dir);
  EXPECT_THROW(LoadRunConfig(dir / "absent.json"), fs::filesystem_error);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(LoadRunConfig(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "good.json") << R"({"train": {"epochs": 3}})";
  EXPECT_EQ(LoadRunConfig(dir / "good.json", RunConfig::Desk()).train.epochs, 3u);
  fs::remove_all(dir);
}

TEST(ConfigTest, HashIgnoresPathsAndSeeds) {
  const RunConfig base = RunConfig::Desk();
  RunConfig c = base;
  c.paths.run_dir = "elsewhere";
  c.train.seed = 99;
  c.synth.seed = 5;
  EXPECT_EQ(ConfigHash(c), ConfigHash(base));
  c.train.learning_rate = 0.002;
  EXPECT_NE(ConfigHash(c), ConfigHash(base));
  EXPECT_NE(ConfigHash(RunConfig::Full()), ConfigHash(base));
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::path(::testing::TempDir()) / "capsed_pipeline";
    fs::remove_all(root_);
    config_ = RunConfig::Desk();
    config_.synth.clips_per_split = {{"train", 6}, {"validation", 3}, {"test", 3}};
    config_.synth.seed = 3;
    WriteCorpus(config_.synth, root_ / "data");
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static inline fs::path root_;
  static inline RunConfig config_;
};

TEST_F(PipelineTest, ExtractionIsIndependentOfWorkerCount) {
  ExtractFeatureSplits(config_, root_ / "data", root_ / "f1", 1);
  ExtractFeatureSplits(config_, root_ / "data", root_ / "f3", 3);
  for (const std::string split : {"train", "validation", "test"}) {
    const Manifest m1 = LoadManifest(ManifestPath(root_ / "f1", split));
    const Manifest m3 = LoadManifest(ManifestPath(root_ / "f3", split));
    ASSERT_EQ(m1.clips.size(), config_.synth.clips_per_split.at(split));
    ASSERT_EQ(m1.clips.size(), m3.clips.size());
    for (std::size_t i = 0; i < m1.clips.size(); ++i) {
      EXPECT_EQ(m1.clips[i].clip_id, m3.clips[i].clip_id);
      EXPECT_NEAR(m1.clips[i].duration, config_.synth.clip_seconds, 1e-6);
      const auto a = LoadTensor(root_ / "f1" / m1.clips[i].file);
      EXPECT_EQ(a, LoadTensor(root_ / "f3" / m3.clips[i].file));
      EXPECT_EQ(a.shape(), (Shape{config_.features.target_frames, config_.features.mel_bins}));
    }
  }
}

TEST_F(PipelineTest, TrainingFeaturesAreStandardized) {
  ExtractFeatureSplits(config_, root_ / "data", root_ / "fs", 1);
  const Dataset d = LoadDataset(root_ / "fs", "train", config_.classes);
  const std::size_t bins = config_.features.mel_bins;
  const std::size_t rows = d.features.size() / bins;
  for (std::size_t k = 0; k < bins; ++k) {
    double s = 0, ss = 0;
    for (std::size_t r = 0; r < rows; ++r) s += d.features[r * bins + k];
    const double mean = s / rows;
    for (std::size_t r = 0; r < rows; ++r) {
      ss += (d.features[r * bins + k] - mean) * (d.features[r * bins + k] - mean);
    }
    EXPECT_NEAR(mean, 0.0, 1e-3);
    EXPECT_NEAR(ss / rows, 1.0, 1e-3);
  }
  const TagList weak = LoadTags(root_ / "data" / "train_weak.csv");
  for (std::size_t n = 0; n < d.size(); ++n) {
    for (std::size_t l = 0; l < config_.classes.size(); ++l) {
      EXPECT_EQ(d.targets[n * config_.classes.size() + l],
                weak.at(d.clip_ids[n]).count(config_.classes[l]) ? 1.0f : 0.0f);
    }
  }
}

TEST_F(PipelineTest, MalformedManifestIsAFormatError) {
  const fs::path p = root_ / "broken_manifest.json";
  std::ofstream(p) << R"({"split": "x", "clips": [{"clip_id": 3}]})";
  EXPECT_THROW(LoadManifest(p), FormatError);
  std::ofstream(p) << "[";
  EXPECT_THROW(LoadManifest(p), FormatError);
  EXPECT_THROW(LoadManifest(root_ / "absent.json"), fs::filesystem_error);
}

TEST_F(PipelineTest, MissingTrainSplitIsRejected) {
  fs::create_directories(root_ / "empty");
  EXPECT_THROW(ExtractFeatureSplits(config_, root_ / "empty", root_ / "fe", 1), std::exception);
}

TEST(EvaluateTest, PerfectPredictionScoresOne) {
  const EventList ref{{"a", {{"tone", 1.0, 3.0}}}, {"b", {}}};
  const auto report = Evaluate(TagsFromEvents(ref), ref, TagsFromEvents(ref), ref,
                               {{"a", 10.0}, {"b", 10.0}});
  EXPECT_DOUBLE_EQ(report.tagging.f1, 1.0);
  EXPECT_DOUBLE_EQ(report.sed.f1, 1.0);
  EXPECT_DOUBLE_EQ(report.sed.error_rate, 0.0);
  EXPECT_EQ(MetricsJson(report), MetricsJson(report));
  EXPECT_EQ(MetricsJson(report).back(), '\n');
}

}  // namespace
}  // namespace capsed
