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

#include "capsed/pipeline.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "capsed/features.h"
#include "capsed/postprocess.h"
#include "capsed/tensor_io.h"
#include "capsed/wav.h"

namespace capsed {

namespace fs = std::filesystem;

std::map<std::string, double> Manifest::Durations() const {
  std::map<std::string, double> out;
  for (const auto& c : clips) out[c.clip_id] = c.duration;
  return out;
}

TagList Manifest::Tags() const {
  TagList out;
  for (const auto& c : clips) out[c.clip_id] = {c.labels.begin(), c.labels.end()};
  return out;
}

fs::path ManifestPath(const fs::path& features_dir, const std::string& split) {
  return features_dir / (split + "_manifest.json");
}

void SaveManifest(const fs::path& path, const Manifest& manifest, const FeatureConfig& f) {
  nlohmann::ordered_json clips = nlohmann::ordered_json::array();
  for (const auto& c : manifest.clips) {
    clips.push_back({{"clip_id", c.clip_id},
                     {"file", c.file},
                     {"duration", c.duration},
                     {"labels", c.labels}});
  }
  nlohmann::ordered_json j = {
      {"split", manifest.split},
      {"features",
       {{"sample_rate", f.sample_rate},
        {"hop_length", f.hop_length},
        {"frame_length", f.frame_length},
        {"mel_bins", f.mel_bins},
        {"target_frames", f.target_frames}}},
      {"clips", clips}};
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed to write " + path.string());
}

Manifest LoadManifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw fs::filesystem_error("cannot open manifest", path,
                               std::make_error_code(std::errc::no_such_file_or_directory));
  }
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    Manifest m;
    m.split = j.at("split").get<std::string>();
    std::set<std::string> seen;
    for (const auto& c : j.at("clips")) {
      ClipRecord r{c.at("clip_id").get<std::string>(), c.at("file").get<std::string>(),
                   c.at("duration").get<double>(),
                   c.at("labels").get<std::vector<std::string>>()};
      if (!seen.insert(r.clip_id).second) throw FormatError("duplicate clip id " + r.clip_id);
      if (!(r.duration >= 0)) throw FormatError("negative duration for " + r.clip_id);
      m.clips.push_back(std::move(r));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace {

// Runs fn(i) for i in [0, n) on `jobs` threads. The first exception is
// rethrown after all workers stop.
template <typename Fn>
void ParallelFor(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

void ExtractFeatureSplits(const RunConfig& config, const fs::path& data_dir,
                          const fs::path& features_dir, std::size_t jobs) {
  config.features.Validate();
  std::vector<std::string> splits;
  if (!fs::is_directory(data_dir)) {
    throw fs::filesystem_error("data directory not found", data_dir,
                               std::make_error_code(std::errc::no_such_file_or_directory));
  }
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = "_weak.csv";
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      splits.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(splits.begin(), splits.end());
  if (std::find(splits.begin(), splits.end(), "train") == splits.end()) {
    throw fs::filesystem_error("no train_weak.csv (needed to fit the standardizer)", data_dir,
                               std::make_error_code(std::errc::no_such_file_or_directory));
  }

  struct SplitFeatures {
    Manifest manifest;
    std::vector<Tensor<float>> raw;
  };
  std::map<std::string, SplitFeatures> all;
  for (const auto& split : splits) {
    const TagList tags = LoadTags(data_dir / (split + "_weak.csv"));
    SplitFeatures& s = all[split];
    s.manifest.split = split;
    for (const auto& [clip, labels] : tags) {
      s.manifest.clips.push_back({clip, split + "/" + clip + ".ctsr", 0, {labels.begin(), labels.end()}});
    }
    s.raw.resize(s.manifest.clips.size());
    ParallelFor(s.raw.size(), jobs, [&](std::size_t i) {
      ClipRecord& rec = s.manifest.clips[i];
      const Audio audio = ReadWav(data_dir / split / (rec.clip_id + ".wav"));
      rec.duration = audio.duration();
      s.raw[i] = ExtractFeatures(audio, config.features);
    });
  }

  const Standardizer standardizer = Standardizer::Fit(all.at("train").raw);
  standardizer.Save(features_dir / "standardizer");
  for (auto& [split, s] : all) {
    fs::create_directories(features_dir / split);
    for (std::size_t i = 0; i < s.raw.size(); ++i) {
      SaveTensor(features_dir / s.manifest.clips[i].file, standardizer.Apply(s.raw[i]));
    }
    SaveManifest(ManifestPath(features_dir, split), s.manifest, config.features);
  }
}

std::vector<std::string> ResolveClasses(const RunConfig& config, const fs::path& features_dir) {
  if (!config.classes.empty()) return config.classes;
  std::set<std::string> labels;
  for (const auto& c : LoadManifest(ManifestPath(features_dir, "train")).clips) {
    labels.insert(c.labels.begin(), c.labels.end());
  }
  return {labels.begin(), labels.end()};
}

Dataset LoadDataset(const fs::path& features_dir, const std::string& split,
                    const std::vector<std::string>& classes) {
  const Manifest m = LoadManifest(ManifestPath(features_dir, split));
  std::map<std::string, std::size_t> index;
  for (std::size_t l = 0; l < classes.size(); ++l) index[classes[l]] = l;
  Dataset d;
  if (m.clips.empty()) throw FormatError(split + " manifest lists no clips");
  Shape clip_shape;
  std::vector<float> features;
  d.targets = Tensor<float>({m.clips.size(), classes.size()});
  for (std::size_t i = 0; i < m.clips.size(); ++i) {
    const ClipRecord& c = m.clips[i];
    const Tensor<float> f = LoadTensor(features_dir / c.file);
    if (i == 0) clip_shape = f.shape();
    if (f.shape() != clip_shape) {
      throw FormatError(c.file + ": shape " + ShapeToString(f.shape()) + " differs from " +
                        ShapeToString(clip_shape));
    }
    features.insert(features.end(), f.data().begin(), f.data().end());
    for (const auto& label : c.labels) {
      const auto it = index.find(label);
      if (it == index.end()) throw FormatError(split + " clip " + c.clip_id + ": unknown label " + label);
      d.targets[i * classes.size() + it->second] = 1.0f;
    }
    d.clip_ids.push_back(c.clip_id);
  }
  Shape shape = clip_shape;
  shape.insert(shape.begin(), m.clips.size());
  d.features = Tensor<float>(shape, std::move(features));
  return d;
}

std::vector<EpochRecord> RunTraining(const RunConfig& config, const fs::path& features_dir,
                                     const fs::path& run_dir, const EpochCallback& on_epoch) {
  RunConfig c = config;
  c.classes = ResolveClasses(config, features_dir);
  c.model.num_classes = c.classes.size();
  c.train.tag_threshold = c.postprocess.tag_threshold;
  c.Validate();
  const Dataset train = LoadDataset(features_dir, "train", c.classes);
  const Dataset validation = LoadDataset(features_dir, "validation", c.classes);
  fs::create_directories(run_dir);
  std::ofstream(run_dir / "config.json") << ToJson(c).dump(2) << "\n";
  return Train(c.model, c.train, train, validation, run_dir, ConfigHash(c), on_epoch);
}

PredictionSet RunPrediction(const RunConfig& config, const fs::path& features_dir,
                            const std::string& split, const fs::path& run_dir) {
  RunConfig c = config;
  c.classes = ResolveClasses(config, features_dir);
  c.model.num_classes = c.classes.size();
  c.Validate();
  const auto checkpoints = SelectCheckpoints(run_dir, c.train.top_k);
  if (checkpoints.empty()) {
    throw fs::filesystem_error("no checkpoints in run directory", run_dir,
                               std::make_error_code(std::errc::no_such_file_or_directory));
  }
  const Dataset data = LoadDataset(features_dir, split, c.classes);
  PredictionSet out;
  out.clip_ids = data.clip_ids;
  out.clips = EnsemblePredict(checkpoints, c.model, data);
  PostprocessConfig post = c.postprocess;
  post.slice_duration = c.slice_duration();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto tags = TagDecision(out.clips[i].y, post.tag_threshold);
    auto& labels = out.tags[data.clip_ids[i]];
    for (std::size_t l : tags) labels.insert(c.classes[l]);
    out.events[data.clip_ids[i]] = ExtractEvents(out.clips[i].o, tags, c.classes, post);
  }
  return out;
}

void SavePredictions(const fs::path& dir, const PredictionSet& predictions) {
  fs::create_directories(dir);
  SaveTags(dir / "tags.csv", predictions.tags);
  SaveEvents(dir / "events.tsv", predictions.events);
}

MetricsReport Evaluate(const TagList& predicted_tags, const EventList& predicted_events,
                       const TagList& reference_tags, const EventList& reference_events,
                       const std::map<std::string, double>& durations, double resolution) {
  return {TaggingMetrics(predicted_tags, reference_tags),
          SegmentMetrics(predicted_events, reference_events, durations, resolution)};
}

std::string MetricsJson(const MetricsReport& report) { return ToJson(report).dump(2) + "\n"; }

}  // namespace capsed
