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

#ifndef CAPSED_PIPELINE_H_
#define CAPSED_PIPELINE_H_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "capsed/annotations.h"
#include "capsed/config.h"
#include "capsed/metrics.h"
#include "capsed/training.h"

namespace capsed {

struct ClipRecord {
  std::string clip_id;
  std::string file;  // relative to the manifest's directory
  double duration = 0;
  std::vector<std::string> labels;
};

// One split of extracted features: <features_dir>/<split>_manifest.json.
struct Manifest {
  std::string split;
  std::vector<ClipRecord> clips;

  std::map<std::string, double> Durations() const;
  TagList Tags() const;
};

void SaveManifest(const std::filesystem::path& path, const Manifest& manifest,
                  const FeatureConfig& features);
Manifest LoadManifest(const std::filesystem::path& path);

std::filesystem::path ManifestPath(const std::filesystem::path& features_dir,
                                   const std::string& split);

// Reads every <data_dir>/<split>_weak.csv with audio in <data_dir>/<split>/,
// fits the standardizer on the train split, and writes standardized CTSR
// features, manifests, and the standardizer under features_dir. `jobs`
// worker threads share the per-clip work; output does not depend on it.
void ExtractFeatureSplits(const RunConfig& config, const std::filesystem::path& data_dir,
                          const std::filesystem::path& features_dir, std::size_t jobs = 1);

// config.classes, or the sorted labels of the train manifest.
std::vector<std::string> ResolveClasses(const RunConfig& config,
                                        const std::filesystem::path& features_dir);

Dataset LoadDataset(const std::filesystem::path& features_dir, const std::string& split,
                    const std::vector<std::string>& classes);

// Trains on the train split and validates on the validation split.
std::vector<EpochRecord> RunTraining(const RunConfig& config,
                                     const std::filesystem::path& features_dir,
                                     const std::filesystem::path& run_dir,
                                     const EpochCallback& on_epoch = nullptr);

struct PredictionSet {
  std::vector<std::string> clip_ids;
  std::vector<ClipPrediction<float>> clips;
  TagList tags;
  EventList events;
};

// Top-k checkpoint ensemble, tag decision, and event extraction for a split.
PredictionSet RunPrediction(const RunConfig& config, const std::filesystem::path& features_dir,
                            const std::string& split, const std::filesystem::path& run_dir);

// tags.csv and events.tsv under `dir`.
void SavePredictions(const std::filesystem::path& dir, const PredictionSet& predictions);

MetricsReport Evaluate(const TagList& predicted_tags, const EventList& predicted_events,
                       const TagList& reference_tags, const EventList& reference_events,
                       const std::map<std::string, double>& durations, double resolution = 1.0);

// Byte-stable serialization of a report.
std::string MetricsJson(const MetricsReport& report);

}  // namespace capsed

#endif  // CAPSED_PIPELINE_H_
