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

#include "capsed/training.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "gradient_check.h"

namespace capsed {
namespace {

namespace fs = std::filesystem;

ModelConfig TinyConfig() {
  ModelConfig c;
  c.input_frames = 8;
  c.mel_bins = 8;
  c.num_classes = 2;
  c.gated.filters_linear = c.gated.filters_gate = 4;
  c.gated.layers_per_block = 1;
  c.gated.blocks = 1;
  c.primary.filters = 4;
  c.primary.capsule_dim = 2;
  c.class_capsule_dim = 3;
  return c;
}

// Class 0 lights up the low bins, class 1 the high bins, over background
// noise. Clip i carries class i % 3 == 2 ? both : i % 3.
Dataset ToyDataset(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.3f);
  Dataset d;
  d.features = Tensor<float>({n, 8, 8});
  d.targets = Tensor<float>({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    d.clip_ids.push_back("clip_" + std::to_string(i));
    const bool low = i % 3 != 1;
    const bool high = i % 3 != 0;
    d.targets[i * 2] = low ? 1.0f : 0.0f;
    d.targets[i * 2 + 1] = high ? 1.0f : 0.0f;
    for (std::size_t t = 0; t < 8; ++t) {
      for (std::size_t f = 0; f < 8; ++f) {
        const bool on = (f < 4 && low && t < 5) || (f >= 4 && high && t >= 3);
        d.features[(i * 8 + t) * 8 + f] = (on ? 1.5f : -0.5f) + noise(rng);
      }
    }
  }
  return d;
}

TrainConfig ToyTrainConfig() {
  TrainConfig c;
  c.batch_size = 6;
  c.epochs = 4;
  c.learning_rate = 0.01;
  c.seed = 5;
  c.top_k = 2;
  return c;
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name)
      : path_(fs::path(::testing::TempDir()) / ("capsed_" + name)) {
    fs::remove_all(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(BceLossTest, SingleTermExample) {
  Graph<double> g;
  const auto loss = BceLoss(g.Constant(Tensor<double>::Vector({0.9})), Tensor<double>::Vector({1}));
  EXPECT_NEAR(loss.value().item(), 0.10536051565782628, 1e-6);
}

TEST(BceLossTest, SumsClassesAndAveragesBatch) {
  Graph<double> g;
  const auto y = Tensor<double>::Matrix({{0.9, 0.2}, {0.5, 0.7}});
  const auto t = Tensor<double>::Matrix({{1, 0}, {0, 1}});
  const double e = kBceEpsilon;
  const double want = (-std::log(0.9 + e) - std::log(0.8 + e) - std::log(0.5 + e) -
                       std::log(0.7 + e)) / 2;
  EXPECT_NEAR(BceLoss(g.Constant(y), t).value().item(), want, 1e-12);
}

TEST(BceLossTest, SaturatedOutputsStayFinite) {
  Graph<double> g;
  const auto loss =
      BceLoss(g.Constant(Tensor<double>::Vector({0.0, 1.0})), Tensor<double>::Vector({1, 0}));
  EXPECT_TRUE(std::isfinite(loss.value().item()));
  EXPECT_NEAR(loss.value().item(), -2 * std::log(kBceEpsilon), 1e-6);
}

TEST(BceLossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 20; ++trial) {
    ParamStore<double> params;
    Tensor<double> y({3, 4});
    Tensor<double> t({3, 4});
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = u(rng);
      t[i] = u(rng) > 0.5 ? 1 : 0;
    }
    params["y"] = y;
    auto r = testing::CheckGradients<double>(
        params, [&](Graph<double>& g) { return BceLoss(g.Param("y"), t); }, 1e-5);
    EXPECT_LT(r.max_relative_error, 1e-6);
  }
}

TEST(AdamTest, FirstStepMovesByLearningRateAgainstGradient) {
  ParamStore<float> params{{"w", Tensor<float>::Vector({1.0f, -2.0f, 0.5f})}};
  Gradients<float> grads{{"w", Tensor<float>::Vector({0.3f, -4.0f, 1e-3f})}};
  AdamState state;
  AdamStep(params, grads, state, 0.01);
  EXPECT_EQ(state.step, 1);
  EXPECT_NEAR(params["w"][0], 1.0f - 0.01f, 1e-6);
  EXPECT_NEAR(params["w"][1], -2.0f + 0.01f, 1e-6);
  EXPECT_NEAR(params["w"][2], 0.5f - 0.01f, 1e-5);
}

TEST(AdamTest, ZeroGradientLeavesParameterUnchanged) {
  ParamStore<float> params{{"w", Tensor<float>::Vector({1.0f, 2.0f})}};
  Gradients<float> grads{{"w", Tensor<float>::Vector({0.0f, 0.0f})}};
  AdamState state;
  for (int i = 0; i < 3; ++i) AdamStep(params, grads, state, 0.1);
  EXPECT_EQ(params["w"], Tensor<float>::Vector({1.0f, 2.0f}));
}

TEST(AdamTest, MatchesReferenceRecurrence) {
  // Reference: m = b1 m + (1-b1) g; v = b2 v + (1-b2) g^2;
  // w -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ParamStore<float> params{{"w", Tensor<float>::Vector({3.0f})}};
  AdamState state;
  double w = 3.0, m = 0, v = 0;
  for (int t = 1; t <= 25; ++t) {
    const double g = 2 * w;  // gradient of w^2
    Gradients<float> grads{{"w", Tensor<float>::Vector({static_cast<float>(2 * params["w"][0])})}};
    AdamStep(params, grads, state, lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(params["w"][0], w, 1e-4) << "step " << t;
  }
  EXPECT_LT(std::abs(w), 3.0);
}

TEST(ScheduleTest, DecaysEveryTwoEpochs) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(LearningRate(c, 0), 0.001);
  EXPECT_DOUBLE_EQ(LearningRate(c, 1), 0.001);
  EXPECT_NEAR(LearningRate(c, 2), 0.0009, 1e-15);
  EXPECT_NEAR(LearningRate(c, 3), 0.0009, 1e-15);
  EXPECT_NEAR(LearningRate(c, 4), 0.00081, 1e-15);
}

TEST(TrainConfigTest, RejectsInvalidValues) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = TrainConfig();
  c.learning_rate = -1;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = TrainConfig();
  c.top_k = 0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

TEST(BalancedSamplerTest, MinorityClassDrawnHalfTheTime) {
  std::vector<std::vector<std::size_t>> labels;
  for (int i = 0; i < 90; ++i) labels.push_back({0});
  for (int i = 0; i < 10; ++i) labels.push_back({1});
  const BalancedSampler sampler(labels, 2);
  std::mt19937_64 rng = EpochRng(11, 0);
  std::size_t minority = 0, total = 0;
  for (int b = 0; b < 200; ++b) {
    for (std::size_t i : sampler.Batch(44, rng)) {
      minority += i >= 90;
      ++total;
    }
  }
  const double frac = static_cast<double>(minority) / total;
  EXPECT_GT(frac, 0.45);
  EXPECT_LT(frac, 0.55);
}

TEST(BalancedSamplerTest, SameSeedSameBatches) {
  std::vector<std::vector<std::size_t>> labels{{0}, {1}, {0, 1}, {2}, {1}};
  const BalancedSampler sampler(labels, 3);
  std::mt19937_64 a = EpochRng(4, 2), b = EpochRng(4, 2), c = EpochRng(4, 3);
  const auto ba = sampler.Batch(32, a);
  EXPECT_EQ(ba, sampler.Batch(32, b));
  EXPECT_NE(ba, sampler.Batch(32, c));
}

TEST(BalancedSamplerTest, SkipsEmptyClassesAndRejectsAllEmpty) {
  const BalancedSampler sampler({{0}, {0}, {2}}, 4);
  EXPECT_EQ(sampler.empty_classes(), (std::vector<std::size_t>{1, 3}));
  std::mt19937_64 rng(1);
  for (std::size_t i : sampler.Batch(50, rng)) EXPECT_LT(i, 3u);
  EXPECT_THROW(BalancedSampler({{}, {}}, 2), std::invalid_argument);
}

TEST(CheckpointTest, RoundTripIsExact) {
  ScratchDir dir("ckpt_roundtrip");
  const ModelConfig config = TinyConfig();
  Checkpoint ck{InitModel<float>(config, 9), {}, {}};
  ck.model.batch_norm.begin()->second.running_mean[0] = 0.25f;
  ck.adam.step = 7;
  for (const auto& [name, p] : ck.model.params) {
    ck.adam.m[name] = Tensor<float>(p.shape(), 0.5f);
    ck.adam.v[name] = Tensor<float>(p.shape(), 0.125f);
  }
  ck.meta = {3, 0.5, 0.25, 0.875, 42, "abc"};
  SaveCheckpoint(dir.path() / CheckpointName(3), ck);
  const Checkpoint back = LoadCheckpoint(dir.path() / CheckpointName(3));
  EXPECT_EQ(back.model.params, ck.model.params);
  ASSERT_EQ(back.model.batch_norm.size(), ck.model.batch_norm.size());
  for (const auto& [name, bn] : ck.model.batch_norm) {
    EXPECT_EQ(back.model.batch_norm.at(name).running_mean, bn.running_mean);
    EXPECT_EQ(back.model.batch_norm.at(name).running_var, bn.running_var);
  }
  EXPECT_EQ(back.adam.step, 7);
  EXPECT_EQ(back.adam.m, ck.adam.m);
  EXPECT_EQ(back.adam.v, ck.adam.v);
  EXPECT_EQ(ToJson(back.meta), ToJson(ck.meta));
  EXPECT_EQ(CheckpointName(3), "epoch_003");
}

TEST(CheckpointTest, SelectionRanksByScoreThenLossThenEpoch) {
  ScratchDir dir("ckpt_select");
  const ModelConfig config = TinyConfig();
  const std::vector<CheckpointMeta> metas{
      {0, 1, 0.9, 0.5, 0, "h"}, {1, 1, 0.8, 0.9, 0, "h"}, {2, 1, 0.7, 0.9, 0, "h"},
      {3, 1, 0.7, 0.9, 0, "h"}, {4, 1, 0.1, 0.6, 0, "h"}};
  for (const auto& m : metas) {
    SaveCheckpoint(dir.path() / CheckpointName(m.epoch), {InitModel<float>(config, 1), {}, m});
  }
  EXPECT_EQ(ListCheckpoints(dir.path()).size(), 5u);
  const auto best = SelectCheckpoints(dir.path(), 3);
  ASSERT_EQ(best.size(), 3u);
  EXPECT_EQ(best[0].filename(), "epoch_002");
  EXPECT_EQ(best[1].filename(), "epoch_003");
  EXPECT_EQ(best[2].filename(), "epoch_001");
  EXPECT_EQ(SelectCheckpoints(dir.path(), 10).size(), 5u);
}

TEST(EnsembleTest, AveragesMemberPredictions) {
  ScratchDir dir("ensemble");
  const ModelConfig config = TinyConfig();
  const Dataset data = ToyDataset(5, 1);
  std::vector<fs::path> paths;
  for (std::uint64_t s : {1, 2}) {
    paths.push_back(dir.path() / CheckpointName(s));
    SaveCheckpoint(paths.back(), {InitModel<float>(config, s), {}, {}});
  }
  auto m1 = InitModel<float>(config, 1), m2 = InitModel<float>(config, 2);
  const auto p1 = PredictDataset(data, config, m1);
  const auto p2 = PredictDataset(data, config, m2);

  const auto single = EnsemblePredict({paths[0]}, config, data);
  const auto same = EnsemblePredict({paths[0], paths[0]}, config, data);
  const auto mixed = EnsemblePredict(paths, config, data);
  ASSERT_EQ(mixed.size(), 5u);
  for (std::size_t n = 0; n < 5; ++n) {
    EXPECT_EQ(single[n].y, p1[n].y);
    for (std::size_t i = 0; i < p1[n].y.size(); ++i) {
      EXPECT_NEAR(same[n].y[i], p1[n].y[i], 1e-7);
      EXPECT_NEAR(mixed[n].y[i], 0.5f * (p1[n].y[i] + p2[n].y[i]), 1e-6);
    }
    for (std::size_t i = 0; i < p1[n].o.size(); ++i) {
      EXPECT_NEAR(mixed[n].o[i], 0.5f * (p1[n].o[i] + p2[n].o[i]), 1e-6);
      EXPECT_NEAR(mixed[n].z[i], 0.5f * (p1[n].z[i] + p2[n].z[i]), 1e-6);
    }
  }
}

TEST(TrainTest, LossDecreasesOnSeparableData) {
  ScratchDir dir("train_decrease");
  TrainConfig c = ToyTrainConfig();
  c.epochs = 8;
  const auto log = Train(TinyConfig(), c, ToyDataset(36, 1), ToyDataset(12, 2), dir.path(), "h");
  ASSERT_EQ(log.size(), 8u);
  EXPECT_LT(log.back().train_loss, log.front().train_loss);
  EXPECT_LT(log.back().val_loss, log.front().val_loss);
  EXPECT_EQ(ListCheckpoints(dir.path()).size(), 8u);
  EXPECT_TRUE(fs::exists(dir.path() / "train_log.jsonl"));
}

TEST(TrainTest, ZeroLearningRateKeepsParameters) {
  ScratchDir dir("train_lr0");
  TrainConfig c = ToyTrainConfig();
  c.epochs = 1;
  c.learning_rate = 0;
  Train(TinyConfig(), c, ToyDataset(12, 1), ToyDataset(6, 2), dir.path(), "h");
  const Checkpoint ck = LoadCheckpoint(dir.path() / CheckpointName(0));
  EXPECT_EQ(ck.model.params, InitModel<float>(TinyConfig(), c.seed).params);
}

TEST(TrainTest, ResumedRunMatchesUninterruptedRun) {
  ScratchDir full("train_full"), split("train_split");
  const Dataset train = ToyDataset(24, 1), val = ToyDataset(6, 2);
  TrainConfig c = ToyTrainConfig();
  const auto full_log = Train(TinyConfig(), c, train, val, full.path(), "h");
  c.epochs = 2;
  Train(TinyConfig(), c, train, val, split.path(), "h");
  c.epochs = 4;
  const auto resumed_log = Train(TinyConfig(), c, train, val, split.path(), "h");
  ASSERT_EQ(resumed_log.size(), 2u);
  const Checkpoint a = LoadCheckpoint(full.path() / CheckpointName(3));
  const Checkpoint b = LoadCheckpoint(split.path() / CheckpointName(3));
  EXPECT_EQ(a.model.params, b.model.params);
  EXPECT_EQ(a.adam.m, b.adam.m);
  EXPECT_EQ(a.meta.val_f1, b.meta.val_f1);
  EXPECT_EQ(full_log.back().train_loss, resumed_log.back().train_loss);
}

TEST(TrainTest, ResumeRejectsChangedConfiguration) {
  ScratchDir dir("train_hash");
  TrainConfig c = ToyTrainConfig();
  c.epochs = 1;
  Train(TinyConfig(), c, ToyDataset(12, 1), ToyDataset(6, 2), dir.path(), "h1");
  c.epochs = 2;
  EXPECT_THROW(Train(TinyConfig(), c, ToyDataset(12, 1), ToyDataset(6, 2), dir.path(), "h2"),
               std::exception);
}

}  // namespace
}  // namespace capsed
