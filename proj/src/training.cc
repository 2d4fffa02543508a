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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "capsed/tensor_io.h"

namespace capsed {

template <typename T>
Var<T> BceLoss(Var<T> y, const Tensor<T>& targets) {
  if (y.shape() != targets.shape() || (y.shape().size() != 1 && y.shape().size() != 2)) {
    throw DimensionError("bce: predictions " + ShapeToString(y.shape()) + " vs targets " +
                         ShapeToString(targets.shape()));
  }
  const double batch = y.shape().size() == 2 ? static_cast<double>(y.shape()[0]) : 1.0;
  const Tensor<T>& yv = y.value();
  double loss = 0;
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double t = targets[i], p = yv[i];
    loss -= t * std::log(p + kBceEpsilon) + (1 - t) * std::log(1 - p + kBceEpsilon);
  }
  const int iy = y.id();
  return y.graph().Record(
      Tensor<T>::Scalar(static_cast<T>(loss / batch)), {iy},
      [iy, targets, batch](Graph<T>& g, const Tensor<T>& dout) {
        const Tensor<T>& p = g.value(iy);
        Tensor<T>& dy = g.GradBuffer(iy);
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double t = targets[i];
          const double d = -(t / (p[i] + kBceEpsilon) - (1 - t) / (1 - p[i] + kBceEpsilon));
          dy[i] += static_cast<T>(dout[0] * d / batch);
        }
      },
      "bce");
}

template Var<float> BceLoss(Var<float>, const Tensor<float>&);
template Var<double> BceLoss(Var<double>, const Tensor<double>&);

void AdamStep(ParamStore<float>& params, const Gradients<float>& grads, AdamState& state,
              double learning_rate, const AdamConfig& config) {
  ++state.step;
  const double c1 = 1 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(config.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Tensor<float>& p = params.at(name);
    if (g.shape() != p.shape()) {
      throw DimensionError("adam: gradient " + ShapeToString(g.shape()) + " for parameter " +
                           name + " " + ShapeToString(p.shape()));
    }
    auto [mi, m_new] = state.m.try_emplace(name, p.shape());
    auto [vi, v_new] = state.v.try_emplace(name, p.shape());
    Tensor<float>& m = mi->second;
    Tensor<float>& v = vi->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mn = config.beta1 * m[i] + (1 - config.beta1) * gi;
      const double vn = config.beta2 * v[i] + (1 - config.beta2) * gi * gi;
      m[i] = static_cast<float>(mn);
      v[i] = static_cast<float>(vn);
      p[i] -= static_cast<float>(learning_rate * (mn / c1) / (std::sqrt(vn / c2) + config.epsilon));
    }
  }
}

void TrainConfig::Validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (batch_size == 0) fail("batch_size must be at least 1");
  if (!(lr_decay > 0 && lr_decay <= 1)) fail("lr_decay must lie in (0, 1]");
  if (lr_decay_every == 0) fail("lr_decay_every must be positive");
  if (!(learning_rate >= 0)) fail("learning_rate must be non-negative");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.epsilon > 0)) {
    fail("adam needs beta1, beta2 in [0, 1) and epsilon > 0");
  }
  if (top_k == 0) fail("top_k must be at least 1");
  if (!(tag_threshold > 0 && tag_threshold < 1)) fail("tag_threshold must lie in (0, 1)");
}

double LearningRate(const TrainConfig& config, std::size_t epoch) {
  return config.learning_rate *
         std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_decay_every));
}

std::mt19937_64 EpochRng(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x7ea1u};
  return std::mt19937_64(seq);
}

namespace {

// Uniform integer in [0, n) that does not depend on the standard library's
// distribution implementation.
std::size_t UniformIndex(std::size_t n, std::mt19937_64& rng) {
  return std::min(static_cast<std::size_t>(UniformUnit(rng) * static_cast<double>(n)), n - 1);
}

}  // namespace

BalancedSampler::BalancedSampler(const std::vector<std::vector<std::size_t>>& labels,
                                 std::size_t num_classes)
    : pools_(num_classes) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t l : labels[i]) {
      if (l >= num_classes) throw std::out_of_range("balanced sampler: class index out of range");
      pools_[l].push_back(i);
    }
  }
  for (std::size_t l = 0; l < num_classes; ++l) {
    if (pools_[l].empty()) empty_classes_.push_back(l);
  }
  if (empty_classes_.size() == num_classes) {
    throw std::invalid_argument("balanced sampler: no class has any example");
  }
  pools_.erase(std::remove_if(pools_.begin(), pools_.end(), [](const auto& p) { return p.empty(); }),
               pools_.end());
}

std::vector<std::size_t> BalancedSampler::Batch(std::size_t batch_size,
                                                std::mt19937_64& rng) const {
  std::vector<std::size_t> batch(batch_size);
  for (auto& b : batch) {
    const auto& pool = pools_[UniformIndex(pools_.size(), rng)];
    b = pool[UniformIndex(pool.size(), rng)];
  }
  return batch;
}

std::vector<std::vector<std::size_t>> Dataset::ClassIndices() const {
  const std::size_t classes = targets.dim(1);
  std::vector<std::vector<std::size_t>> out(size());
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t l = 0; l < classes; ++l) {
      if (targets[i * classes + l] > 0.5f) out[i].push_back(l);
    }
  }
  return out;
}

namespace {

Tensor<float> GatherRows(const Tensor<float>& t, const std::vector<std::size_t>& index) {
  Shape shape = t.shape();
  const std::size_t row = t.size() / shape[0];
  shape[0] = index.size();
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= t.dim(0)) throw std::out_of_range("gather: row index out of range");
    std::copy_n(t.data().begin() + index[i] * row, row, out.data().begin() + i * row);
  }
  return out;
}

}  // namespace

Tensor<float> Dataset::GatherFeatures(const std::vector<std::size_t>& index) const {
  return GatherRows(features, index);
}

Tensor<float> Dataset::GatherTargets(const std::vector<std::size_t>& index) const {
  return GatherRows(targets, index);
}

std::vector<ClipPrediction<float>> PredictDataset(const Dataset& data, const ModelConfig& config,
                                                  ModelState<float>& state, std::size_t chunk) {
  std::vector<ClipPrediction<float>> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    std::vector<std::size_t> index(std::min(chunk, data.size() - start));
    std::iota(index.begin(), index.end(), start);
    for (auto& p : Predict(data.GatherFeatures(index), config, state)) out.push_back(std::move(p));
  }
  return out;
}

double MeanBce(const std::vector<ClipPrediction<float>>& predictions, const Tensor<float>& targets) {
  if (predictions.empty()) return 0;
  const std::size_t classes = targets.dim(1);
  double loss = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (std::size_t l = 0; l < classes; ++l) {
      const double t = targets[i * classes + l], p = predictions[i].y[l];
      loss -= t * std::log(p + kBceEpsilon) + (1 - t) * std::log(1 - p + kBceEpsilon);
    }
  }
  return loss / static_cast<double>(predictions.size());
}

double TaggingF1(const std::vector<ClipPrediction<float>>& predictions,
                 const Tensor<float>& targets, double threshold) {
  const std::size_t classes = targets.dim(1);
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (std::size_t l = 0; l < classes; ++l) {
      const bool p = predictions[i].y[l] > threshold;
      const bool t = targets[i * classes + l] > 0.5f;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
  }
  return 2 * tp + fp + fn > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
}

nlohmann::ordered_json ToJson(const CheckpointMeta& meta) {
  return {{"epoch", meta.epoch},       {"train_loss", meta.train_loss},
          {"val_loss", meta.val_loss}, {"val_f1", meta.val_f1},
          {"seed", meta.seed},         {"config_hash", meta.config_hash}};
}

nlohmann::ordered_json ToJson(const EpochRecord& r) {
  return {{"epoch", r.epoch},       {"learning_rate", r.learning_rate},
          {"train_loss", r.train_loss}, {"val_loss", r.val_loss},
          {"val_f1", r.val_f1},     {"seconds", r.seconds}};
}

std::string CheckpointName(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%03zu", epoch);
  return buf;
}

namespace fs = std::filesystem;

namespace {

void SaveTensorMap(const fs::path& dir, const std::map<std::string, Tensor<float>>& tensors) {
  fs::create_directories(dir);
  for (const auto& [name, t] : tensors) SaveTensor(dir / (name + ".ctsr"), t);
}

std::map<std::string, Tensor<float>> LoadTensorMap(const fs::path& dir,
                                                   const std::vector<std::string>& names) {
  std::map<std::string, Tensor<float>> out;
  for (const auto& name : names) out.emplace(name, LoadTensor(dir / (name + ".ctsr")));
  return out;
}

std::vector<std::string> Keys(const std::map<std::string, Tensor<float>>& m) {
  std::vector<std::string> keys;
  for (const auto& kv : m) keys.push_back(kv.first);
  return keys;
}

}  // namespace

void SaveCheckpoint(const fs::path& dir, const Checkpoint& c) {
  // Write beside the target and rename, so a crash never leaves a partial
  // checkpoint under the final name.
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  SaveTensorMap(tmp / "params", c.model.params);
  std::map<std::string, Tensor<float>> bn;
  nlohmann::ordered_json bn_meta = nlohmann::ordered_json::object();
  for (const auto& [name, s] : c.model.batch_norm) {
    bn[name + ".mean"] = s.running_mean;
    bn[name + ".var"] = s.running_var;
    bn_meta[name] = {{"momentum", s.momentum}, {"epsilon", s.epsilon}};
  }
  SaveTensorMap(tmp / "batch_norm", bn);
  SaveTensorMap(tmp / "adam" / "m", c.adam.m);
  SaveTensorMap(tmp / "adam" / "v", c.adam.v);
  nlohmann::ordered_json meta = ToJson(c.meta);
  meta["params"] = Keys(c.model.params);
  meta["batch_norm"] = bn_meta;
  meta["adam"] = {{"step", c.adam.step}, {"m", Keys(c.adam.m)}, {"v", Keys(c.adam.v)}};
  std::ofstream(tmp / "meta.json") << meta.dump(2) << "\n";
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Checkpoint LoadCheckpoint(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) {
    throw fs::filesystem_error("cannot open checkpoint metadata", dir / "meta.json",
                               std::make_error_code(std::errc::no_such_file_or_directory));
  }
  try {
    const nlohmann::json meta = nlohmann::json::parse(in);
    Checkpoint c;
    c.meta.epoch = meta.at("epoch").get<std::size_t>();
    c.meta.train_loss = meta.at("train_loss").get<double>();
    c.meta.val_loss = meta.at("val_loss").get<double>();
    c.meta.val_f1 = meta.at("val_f1").get<double>();
    c.meta.seed = meta.at("seed").get<std::uint64_t>();
    c.meta.config_hash = meta.at("config_hash").get<std::string>();
    c.model.params = LoadTensorMap(dir / "params", meta.at("params").get<std::vector<std::string>>());
    for (const auto& [name, s] : meta.at("batch_norm").items()) {
      BatchNormState<float> state;
      state.running_mean = LoadTensor(dir / "batch_norm" / (name + ".mean.ctsr"));
      state.running_var = LoadTensor(dir / "batch_norm" / (name + ".var.ctsr"));
      state.momentum = s.at("momentum").get<double>();
      state.epsilon = s.at("epsilon").get<double>();
      c.model.batch_norm.emplace(name, std::move(state));
    }
    const auto& adam = meta.at("adam");
    c.adam.step = adam.at("step").get<std::int64_t>();
    c.adam.m = LoadTensorMap(dir / "adam" / "m", adam.at("m").get<std::vector<std::string>>());
    c.adam.v = LoadTensorMap(dir / "adam" / "v", adam.at("v").get<std::vector<std::string>>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "meta.json").string() + ": " + e.what());
  }
}

std::vector<fs::path> ListCheckpoints(const fs::path& run_dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(run_dir)) return out;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("epoch_", 0) == 0 && name.find('.') == std::string::npos &&
        fs::exists(entry.path() / "meta.json")) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> SelectCheckpoints(const fs::path& run_dir, std::size_t k) {
  struct Ranked {
    CheckpointMeta meta;
    fs::path path;
  };
  std::vector<Ranked> all;
  for (const auto& p : ListCheckpoints(run_dir)) {
    std::ifstream in(p / "meta.json");
    const nlohmann::json j = nlohmann::json::parse(in);
    all.push_back({{j.at("epoch").get<std::size_t>(), 0, j.at("val_loss").get<double>(),
                    j.at("val_f1").get<double>(), 0, ""},
                   p});
  }
  std::stable_sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
    if (a.meta.val_f1 != b.meta.val_f1) return a.meta.val_f1 > b.meta.val_f1;
    if (a.meta.val_loss != b.meta.val_loss) return a.meta.val_loss < b.meta.val_loss;
    return a.meta.epoch < b.meta.epoch;
  });
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].path);
  return out;
}

namespace {

// Keeps log lines of epochs before `first_epoch`, dropping any written by an
// interrupted run past its last checkpoint.
void TruncateLog(const fs::path& log, std::size_t first_epoch) {
  std::ifstream in(log);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (nlohmann::json::parse(line).at("epoch").get<std::size_t>() < first_epoch) keep.push_back(line);
  }
  in.close();
  std::ofstream out(log, std::ios::trunc);
  for (const auto& l : keep) out << l << "\n";
}

std::vector<std::vector<std::size_t>> EpochBatches(const Dataset& train, const TrainConfig& config,
                                                   const BalancedSampler& sampler,
                                                   std::mt19937_64& rng) {
  const std::size_t n = train.size();
  const std::size_t count = (n + config.batch_size - 1) / config.batch_size;
  std::vector<std::vector<std::size_t>> batches;
  if (config.balance) {
    for (std::size_t b = 0; b < count; ++b) batches.push_back(sampler.Batch(config.batch_size, rng));
    return batches;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with the library-independent index draw.
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[UniformIndex(i, rng)]);
  for (std::size_t start = 0; start < n; start += config.batch_size) {
    batches.emplace_back(order.begin() + start,
                         order.begin() + std::min(n, start + config.batch_size));
  }
  return batches;
}

}  // namespace

std::vector<EpochRecord> Train(const ModelConfig& model_config, const TrainConfig& config,
                               const Dataset& train, const Dataset& validation,
                               const fs::path& run_dir, const std::string& config_hash,
                               const EpochCallback& on_epoch) {
  model_config.Validate();
  config.Validate();
  if (train.size() == 0) throw std::invalid_argument("train: empty training set");
  if (train.targets.dim(1) != model_config.num_classes ||
      validation.targets.dim(1) != model_config.num_classes) {
    throw DimensionError("train: target width does not match num_classes");
  }
  fs::create_directories(run_dir);

  Checkpoint state;
  std::size_t first_epoch = 0;
  if (const auto existing = ListCheckpoints(run_dir); !existing.empty()) {
    state = LoadCheckpoint(existing.back());
    if (state.meta.config_hash != config_hash || state.meta.seed != config.seed) {
      throw std::invalid_argument("train: " + run_dir.string() +
                                  " holds a run with a different configuration or seed");
    }
    first_epoch = state.meta.epoch + 1;
  } else {
    state.model = InitModel<float>(model_config, config.seed);
  }
  const fs::path log_path = run_dir / "train_log.jsonl";
  TruncateLog(log_path, first_epoch);

  const BalancedSampler sampler(train.ClassIndices(), model_config.num_classes);
  if (config.balance) {
    for (std::size_t l : sampler.empty_classes()) {
      std::cerr << "warning: class " << l << " has no training clips; skipped when balancing\n";
    }
  }

  std::vector<EpochRecord> records;
  for (std::size_t epoch = first_epoch; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng = EpochRng(config.seed, epoch);
    const double lr = LearningRate(config, epoch);
    const auto batches = EpochBatches(train, config, sampler, rng);
    double loss_sum = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      try {
        Graph<float> g(state.model.params);
        const ModelOutputs<float> out =
            ModelForward(g.Constant(train.GatherFeatures(batches[b])), model_config, state.model,
                         ForwardMode::Training(rng));
        Var<float> loss = BceLoss(out.y, train.GatherTargets(batches[b]));
        const Gradients<float> grads = g.Backward(loss);
        loss_sum += loss.value().item();
        AdamStep(state.model.params, grads, state.adam, lr, config.adam);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                           ": non-finite value (" + e.what() + ")");
      }
    }

    const auto val = PredictDataset(validation, model_config, state.model);
    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate = lr;
    record.train_loss = loss_sum / static_cast<double>(batches.size());
    record.val_loss = MeanBce(val, validation.targets);
    record.val_f1 = TaggingF1(val, validation.targets, config.tag_threshold);

    state.meta = {epoch, record.train_loss, record.val_loss, record.val_f1, config.seed, config_hash};
    const fs::path dir = run_dir / CheckpointName(epoch);
    SaveCheckpoint(dir, state);
    Tensor<float> val_y({validation.size(), model_config.num_classes});
    for (std::size_t i = 0; i < val.size(); ++i) {
      std::copy(val[i].y.data().begin(), val[i].y.data().end(),
                val_y.data().begin() + i * model_config.num_classes);
    }
    SaveTensor(dir / "val_predictions.ctsr", val_y);

    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream(log_path, std::ios::app) << ToJson(record).dump() << "\n";
    records.push_back(record);
    if (on_epoch && !on_epoch(record)) break;
  }
  return records;
}

std::vector<ClipPrediction<float>> EnsemblePredict(const std::vector<fs::path>& checkpoints,
                                                   const ModelConfig& config,
                                                   const Dataset& data) {
  if (checkpoints.empty()) throw std::invalid_argument("ensemble: no checkpoints");
  std::vector<ClipPrediction<float>> sum;
  for (const auto& path : checkpoints) {
    Checkpoint c = LoadCheckpoint(path);
    auto preds = PredictDataset(data, config, c.model);
    if (sum.empty()) {
      sum = std::move(preds);
      continue;
    }
    for (std::size_t i = 0; i < sum.size(); ++i) {
      for (auto [dst, src] : {std::pair{&sum[i].y, &preds[i].y}, std::pair{&sum[i].o, &preds[i].o},
                              std::pair{&sum[i].z, &preds[i].z}}) {
        for (std::size_t k = 0; k < dst->size(); ++k) (*dst)[k] += (*src)[k];
      }
    }
  }
  const float n = static_cast<float>(checkpoints.size());
  for (auto& p : sum) {
    for (Tensor<float>* t : {&p.y, &p.o, &p.z}) {
      for (auto& v : t->data()) v /= n;
    }
  }
  return sum;
}

}  // namespace capsed
