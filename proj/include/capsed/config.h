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

#ifndef CAPSED_CONFIG_H_
#define CAPSED_CONFIG_H_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "capsed/features.h"
#include "capsed/model.h"
#include "capsed/postprocess.h"
#include "capsed/synth.h"
#include "capsed/training.h"
#include "json.hpp"

namespace capsed {

// Raised when a configuration document does not match the schema.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PathsConfig {
  std::string data_dir = "data";
  std::string features_dir = "features";
  std::string run_dir = "run";
  std::string predictions_dir = "predictions";
  std::string split = "test";  // split used by predict/evaluate
};

struct RunConfig {
  PathsConfig paths;
  // Class names in model output order. Empty: sorted labels of the training
  // split.
  std::vector<std::string> classes;
  SynthSpec synth;
  FeatureConfig features;
  ModelConfig model;
  TrainConfig train;
  // slice_duration 0 means features.clip_seconds() / model.time_slices().
  PostprocessConfig postprocess{.slice_duration = 0};

  static RunConfig Full();
  // Reduced model and features for the 3-class synthetic corpus.
  static RunConfig Desk();

  // Consistency across sections; throws ConfigError.
  void Validate() const;
  double slice_duration() const;
};

nlohmann::ordered_json ToJson(const RunConfig& config);
// Fields missing from `j` keep their value in `base`; unknown keys and type
// mismatches throw ConfigError naming the offending path.
RunConfig RunConfigFromJson(const nlohmann::json& j, RunConfig base = RunConfig::Full());
RunConfig LoadRunConfig(const std::filesystem::path& path, RunConfig base = RunConfig::Full());

// Stable hex digest of everything that affects training except paths and seed.
std::string ConfigHash(const RunConfig& config);

}  // namespace capsed

#endif  // CAPSED_CONFIG_H_
