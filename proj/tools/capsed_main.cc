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

// Command-line entry point: synth-data, extract-features, train, predict,
// evaluate, show-config.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "capsed/annotations.h"
#include "capsed/config.h"
#include "capsed/pipeline.h"
#include "capsed/synth.h"
#include "capsed/tensor_io.h"

namespace {

namespace fs = std::filesystem;
using capsed::RunConfig;

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingFile = 3,
  kMalformedInput = 4,
  kConfigError = 5,
  kNumericError = 6,
};

// Flags shared by every subcommand.
struct CommonFlags {
  std::string preset = "full";
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void AddCommon(CLI::App* cmd, CommonFlags& f, const std::string& out_help) {
  cmd->add_option("--preset", f.preset, "Built-in defaults the config file is applied over")
      ->check(CLI::IsMember({"full", "desk"}))
      ->capture_default_str();
  cmd->add_option("--config", f.config, "JSON run configuration; flags override its values");
  cmd->add_option("--seed", f.seed, "Seed for corpus generation and training");
  cmd->add_option("--out", f.out, out_help);
}

RunConfig ResolveConfig(const CommonFlags& f) {
  RunConfig c = f.preset == "desk" ? RunConfig::Desk() : RunConfig::Full();
  if (!f.config.empty()) c = capsed::LoadRunConfig(f.config, c);
  if (f.seed) {
    c.synth.seed = *f.seed;
    c.train.seed = *f.seed;
  }
  c.Validate();
  return c;
}

std::string Or(const std::string& flag, const std::string& fallback) {
  return flag.empty() ? fallback : flag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capsule-routing sound event detection: features, training, detection, scoring"};
  app.require_subcommand(1);

  CommonFlags synth_flags;
  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic weakly-labeled corpus");
  AddCommon(synth, synth_flags, "Corpus directory (default: paths.data_dir)");

  CommonFlags feat_flags;
  std::string feat_data;
  std::size_t jobs = 1;
  auto* feat = app.add_subcommand("extract-features", "Compute standardized logmel features");
  AddCommon(feat, feat_flags, "Feature directory (default: paths.features_dir)");
  feat->add_option("--data", feat_data, "Corpus directory (default: paths.data_dir)");
  feat->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  CommonFlags train_flags;
  std::string train_features;
  std::optional<std::size_t> epochs;
  auto* train = app.add_subcommand("train", "Train and checkpoint every epoch");
  AddCommon(train, train_flags, "Run directory for checkpoints and log (default: paths.run_dir)");
  train->add_option("--features", train_features, "Feature directory (default: paths.features_dir)");
  train->add_option("--epochs", epochs, "Override train.epochs");

  CommonFlags pred_flags;
  std::string pred_features, pred_run, pred_split;
  auto* pred = app.add_subcommand("predict", "Tag and localize events with the top-k checkpoints");
  AddCommon(pred, pred_flags, "Prediction directory (default: paths.predictions_dir)");
  pred->add_option("--features", pred_features, "Feature directory (default: paths.features_dir)");
  pred->add_option("--run", pred_run, "Run directory (default: paths.run_dir)");
  pred->add_option("--split", pred_split, "Split to predict (default: paths.split)");

  CommonFlags eval_flags;
  std::string eval_pred, eval_ref, eval_ref_tags, eval_manifest;
  double resolution = 1.0;
  auto* eval = app.add_subcommand("evaluate", "Score predictions against reference annotations");
  AddCommon(eval, eval_flags, "Metrics JSON path (default: standard output)");
  eval->add_option("--predictions", eval_pred, "Directory with tags.csv and events.tsv")->required();
  eval->add_option("--reference", eval_ref, "Reference event list (TSV)")->required();
  eval->add_option("--reference-tags", eval_ref_tags,
                   "Reference weak labels (CSV); default: labels of the reference events");
  eval->add_option("--manifest", eval_manifest,
                   "Feature manifest giving clip durations; default: features.clip_seconds for every clip");
  eval->add_option("--resolution", resolution, "Segment length in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CommonFlags show_flags;
  auto* show = app.add_subcommand("show-config", "Print the resolved configuration as JSON");
  AddCommon(show, show_flags, "Write to this path instead of standard output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) {
      const RunConfig c = ResolveConfig(synth_flags);
      capsed::SynthSpec spec = c.synth;
      capsed::WriteCorpus(spec, Or(synth_flags.out, c.paths.data_dir));
    } else if (feat->parsed()) {
      const RunConfig c = ResolveConfig(feat_flags);
      capsed::ExtractFeatureSplits(c, Or(feat_data, c.paths.data_dir),
                                   Or(feat_flags.out, c.paths.features_dir), jobs);
    } else if (train->parsed()) {
      RunConfig c = ResolveConfig(train_flags);
      if (epochs) c.train.epochs = *epochs;
      capsed::RunTraining(c, Or(train_features, c.paths.features_dir),
                          Or(train_flags.out, c.paths.run_dir), [](const capsed::EpochRecord& r) {
                            std::cout << capsed::ToJson(r).dump() << std::endl;
                            return true;
                          });
    } else if (pred->parsed()) {
      const RunConfig c = ResolveConfig(pred_flags);
      const auto p = capsed::RunPrediction(c, Or(pred_features, c.paths.features_dir),
                                           Or(pred_split, c.paths.split),
                                           Or(pred_run, c.paths.run_dir));
      capsed::SavePredictions(Or(pred_flags.out, c.paths.predictions_dir), p);
    } else if (eval->parsed()) {
      const RunConfig c = ResolveConfig(eval_flags);
      const fs::path pdir = eval_pred;
      const capsed::EventList ref = capsed::LoadEvents(eval_ref);
      const capsed::TagList ref_tags =
          eval_ref_tags.empty() ? capsed::TagsFromEvents(ref) : capsed::LoadTags(eval_ref_tags);
      const capsed::EventList pred_events = capsed::LoadEvents(pdir / "events.tsv");
      std::map<std::string, double> durations;
      if (!eval_manifest.empty()) {
        durations = capsed::LoadManifest(eval_manifest).Durations();
      } else {
        for (const auto* list : {&ref, &pred_events}) {
          for (const auto& kv : *list) durations[kv.first] = c.features.clip_seconds();
        }
      }
      const auto report = capsed::Evaluate(capsed::LoadTags(pdir / "tags.csv"), pred_events,
                                           ref_tags, ref, durations, resolution);
      const std::string json = capsed::MetricsJson(report);
      if (eval_flags.out.empty()) {
        std::cout << json;
      } else {
        std::ofstream(eval_flags.out) << json;
      }
    } else if (show->parsed()) {
      const std::string json = capsed::ToJson(ResolveConfig(show_flags)).dump(2) + "\n";
      if (show_flags.out.empty()) {
        std::cout << json;
      } else {
        std::ofstream(show_flags.out) << json;
      }
    }
  } catch (const capsed::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "missing file: " << e.what() << "\n";
    return kMissingFile;
  } catch (const capsed::FormatError& e) {
    std::cerr << "malformed input: " << e.what() << "\n";
    return kMalformedInput;
  } catch (const capsed::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
