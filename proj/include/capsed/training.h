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

#ifndef CAPSED_TRAINING_H_
#define CAPSED_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "capsed/attention.h"
#include "capsed/autodiff.h"
#include "capsed/model.h"
#include "json.hpp"

namespace capsed {

inline constexpr double kBceEpsilon = 1e-7;

// -sum_l [t log(y + eps) + (1 - t) log(1 - y + eps)], averaged over the
// batch. y: [B x L] (or [L]); targets has the same shape.
template <typename T>
Var<T> BceLoss(Var<T> y, const Tensor<T>& targets);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::map<std::string, Tensor<float>> m;
  std::map<std::string, Tensor<float>> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of every parameter that has a gradient.
void AdamStep(ParamStore<float>& params, const Gradients<float>& grads, AdamState& state,
              double learning_rate, const AdamConfig& config = {});

struct TrainConfig {
  std::size_t batch_size = 44;
  std::size_t epochs = 30;
  double learning_rate = 0.001;
  double lr_decay = 0.9;
  std::size_t lr_decay_every = 2;  // epochs
  AdamConfig adam;
  std::uint64_t seed = 0;
  bool balance = true;
  std::size_t top_k = 5;  // checkpoints averaged at prediction time
  // Threshold for the validation tagging F-score used to rank checkpoints.
  double tag_threshold = 0.3;

  void Validate() const;
};

// learning_rate * lr_decay^floor(epoch / lr_decay_every), epochs from 0.
double LearningRate(const TrainConfig& config, std::size_t epoch);

// Deterministic generator for one epoch of a seeded run, so a run resumed at
// any epoch draws the same numbers as an uninterrupted one.
std::mt19937_64 EpochRng(std::uint64_t seed, std::size_t epoch);

// Draws batches in which every class is equally likely to be the reason a
// clip was picked: choose a class uniformly among those with examples, then a
// clip uniformly (with replacement) from that class's pool.
class BalancedSampler {
 public:
  // labels[i] holds the class indices of clip i.
  BalancedSampler(const std::vector<std::vector<std::size_t>>& labels, std::size_t num_classes);

  std::vector<std::size_t> Batch(std::size_t batch_size, std::mt19937_64& rng) const;
  // Classes without any clip; they are skipped when sampling.
  const std::vector<std::size_t>& empty_classes() const { return empty_classes_; }

 private:
  std::vector<std::vector<std::size_t>> pools_;
  std::vector<std::size_t> empty_classes_;
};

// Features and multi-hot targets for a set of clips.
struct Dataset {
  std::vector<std::string> clip_ids;
  Tensor<float> features;  // [N x frames x bins], standardized
  Tensor<float> targets;   // [N x L]

  std::size_t size() const { return clip_ids.size(); }
  std::vector<std::vector<std::size_t>> ClassIndices() const;
  // Rows `index` gathered into a batch.
  Tensor<float> GatherFeatures(const std::vector<std::size_t>& index) const;
  Tensor<float> GatherTargets(const std::vector<std::size_t>& index) const;
};

// Inference over a dataset in chunks.
std::vector<ClipPrediction<float>> PredictDataset(const Dataset& data, const ModelConfig& config,
                                                  ModelState<float>& state,
                                                  std::size_t chunk = 16);

// Mean BCE of clip predictions against targets.
double MeanBce(const std::vector<ClipPrediction<float>>& predictions, const Tensor<float>& targets);
// Micro F-score of {l : y_l > threshold} against targets.
double TaggingF1(const std::vector<ClipPrediction<float>>& predictions,
                 const Tensor<float>& targets, double threshold);

struct CheckpointMeta {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_f1 = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

nlohmann::ordered_json ToJson(const CheckpointMeta& meta);

struct Checkpoint {
  ModelState<float> model;
  AdamState adam;
  CheckpointMeta meta;
};

// Directory of CTSR tensors (params/, batch_norm/, adam/) plus meta.json.
void SaveCheckpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint LoadCheckpoint(const std::filesystem::path& dir);

// Name of the checkpoint directory of an epoch, e.g. "epoch_007".
std::string CheckpointName(std::size_t epoch);

// Every checkpoint directory under `run_dir`, ordered by epoch.
std::vector<std::filesystem::path> ListCheckpoints(const std::filesystem::path& run_dir);

// Best `k` checkpoints by validation F-score, then lower validation loss,
// then earlier epoch.
std::vector<std::filesystem::path> SelectCheckpoints(const std::filesystem::path& run_dir,
                                                     std::size_t k);

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_f1 = 0;
  double seconds = 0;
};

nlohmann::ordered_json ToJson(const EpochRecord& record);

// Called after every epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// Trains for config.epochs, writing <run_dir>/epoch_NNN checkpoints and
// <run_dir>/train_log.jsonl. An existing run directory is resumed from its
// latest checkpoint. Throws NumericError naming the batch when a loss or
// gradient is not finite.
std::vector<EpochRecord> Train(const ModelConfig& model_config, const TrainConfig& config,
                               const Dataset& train, const Dataset& validation,
                               const std::filesystem::path& run_dir,
                               const std::string& config_hash,
                               const EpochCallback& on_epoch = nullptr);

// Averages y, o and z over the given checkpoints.
std::vector<ClipPrediction<float>> EnsemblePredict(
    const std::vector<std::filesystem::path>& checkpoints, const ModelConfig& config,
    const Dataset& data);

}  // namespace capsed

#endif  // CAPSED_TRAINING_H_
