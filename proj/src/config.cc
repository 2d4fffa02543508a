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

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

#include "capsed/tensor_io.h"

namespace capsed {

RunConfig RunConfig::Full() { return RunConfig{}; }

RunConfig RunConfig::Desk() {
  RunConfig c;
  c.classes = {"chirp", "noise_burst", "tone"};
  c.features = FeatureConfig::Desk();
  c.model = ModelConfig::Desk(3);
  c.train.batch_size = 8;
  c.train.epochs = 10;
  return c;
}

double RunConfig::slice_duration() const {
  if (postprocess.slice_duration > 0) return postprocess.slice_duration;
  return features.clip_seconds() / static_cast<double>(model.time_slices());
}

void RunConfig::Validate() const {
  try {
    features.Validate();
    model.Validate();
    train.Validate();
    synth.Validate();
    PostprocessConfig p = postprocess;
    p.slice_duration = slice_duration();
    p.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (model.input_frames != features.target_frames || model.mel_bins != features.mel_bins) {
    throw ConfigError("model input " + std::to_string(model.input_frames) + "x" +
                      std::to_string(model.mel_bins) + " does not match feature output " +
                      std::to_string(features.target_frames) + "x" +
                      std::to_string(features.mel_bins));
  }
  if (!classes.empty() && classes.size() != model.num_classes) {
    throw ConfigError(std::to_string(classes.size()) + " class names but model.num_classes = " +
                      std::to_string(model.num_classes));
  }
  if (std::set<std::string>(classes.begin(), classes.end()).size() != classes.size()) {
    throw ConfigError("duplicate class names");
  }
}

namespace {

const char* SquashName(SquashForm f) {
  return f == SquashForm::kQuadratic ? "quadratic" : "linear";
}

// Walks one JSON object, reading known keys and rejecting the rest.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void Get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    const nlohmann::json& v = *it;
    const std::string where = path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned()) {
        throw ConfigError(where + ": expected a non-negative integer");
      }
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      out = v.get<std::string>();
    } else {
      static_assert(std::is_same_v<T, std::vector<std::string>>);
      if (!v.is_array()) throw ConfigError(where + ": expected an array of strings");
      out.clear();
      for (const auto& e : v) {
        if (!e.is_string()) throw ConfigError(where + ": expected an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }

  // Child object; a missing key reads as an empty object.
  Reader Sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return Reader(it == j_.end() ? Empty() : *it, path_ + "." + key);
  }

  void Finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(path_ + "." + item.key() + ": unknown key");
    }
  }

 private:
  static const nlohmann::json& Empty() {
    static const nlohmann::json empty = nlohmann::json::object();
    return empty;
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

nlohmann::ordered_json ToJson(const RunConfig& c) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["paths"] = {{"data_dir", c.paths.data_dir},
                {"features_dir", c.paths.features_dir},
                {"run_dir", c.paths.run_dir},
                {"predictions_dir", c.paths.predictions_dir},
                {"split", c.paths.split}};
  j["classes"] = c.classes;
  ordered_json splits = ordered_json::object();
  for (const auto& [name, n] : c.synth.clips_per_split) splits[name] = n;
  j["synth"] = {{"n_classes", c.synth.n_classes},
                {"clips_per_split", splits},
                {"clip_seconds", c.synth.clip_seconds},
                {"sample_rate", c.synth.sample_rate},
                {"min_events", c.synth.min_events},
                {"max_events", c.synth.max_events},
                {"min_event_seconds", c.synth.min_event_seconds},
                {"max_event_seconds", c.synth.max_event_seconds},
                {"snr_db_min", c.synth.snr_db_min},
                {"snr_db_max", c.synth.snr_db_max},
                {"noise_rms", c.synth.noise_rms},
                {"seed", c.synth.seed}};
  const FeatureConfig& f = c.features;
  j["features"] = {{"sample_rate", f.sample_rate}, {"frame_length", f.frame_length},
                   {"hop_length", f.hop_length},   {"mel_bins", f.mel_bins},
                   {"target_frames", f.target_frames}, {"fmin", f.fmin},
                   {"fmax", f.fmax},               {"log_floor", f.log_floor}};
  const ModelConfig& m = c.model;
  j["model"] = {
      {"input_frames", m.input_frames},
      {"mel_bins", m.mel_bins},
      {"num_classes", m.num_classes},
      {"gated",
       {{"filters_linear", m.gated.filters_linear},
        {"filters_gate", m.gated.filters_gate},
        {"kernel_height", m.gated.kernel_height},
        {"kernel_width", m.gated.kernel_width},
        {"stride", m.gated.stride},
        {"layers_per_block", m.gated.layers_per_block},
        {"blocks", m.gated.blocks}}},
      {"primary",
       {{"filters", m.primary.filters},
        {"kernel_height", m.primary.kernel_height},
        {"kernel_width", m.primary.kernel_width},
        {"stride_time", m.primary.stride_time},
        {"stride_freq", m.primary.stride_freq},
        {"capsule_dim", m.primary.capsule_dim},
        {"batch_norm", m.primary.batch_norm}}},
      {"class_capsule_dim", m.class_capsule_dim},
      {"routing",
       {{"iterations", m.routing.iterations}, {"squash_form", SquashName(m.routing.squash_form)}}},
      {"gated_dropout", m.gated_dropout},
      {"primary_dropout", m.primary_dropout}};
  const TrainConfig& t = c.train;
  j["train"] = {{"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"learning_rate", t.learning_rate},
                {"lr_decay", t.lr_decay},
                {"lr_decay_every", t.lr_decay_every},
                {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"epsilon", t.adam.epsilon}}},
                {"seed", t.seed},
                {"balance", t.balance},
                {"top_k", t.top_k}};
  const PostprocessConfig& p = c.postprocess;
  j["postprocess"] = {{"tag_threshold", p.tag_threshold},
                      {"frame_threshold", p.frame_threshold},
                      {"dilation_size", p.dilation_size},
                      {"erosion_size", p.erosion_size},
                      {"slice_duration", p.slice_duration}};
  return j;
}

RunConfig RunConfigFromJson(const nlohmann::json& j, RunConfig c) {
  Reader root(j, "config");
  {
    Reader r = root.Sub("paths");
    r.Get("data_dir", c.paths.data_dir);
    r.Get("features_dir", c.paths.features_dir);
    r.Get("run_dir", c.paths.run_dir);
    r.Get("predictions_dir", c.paths.predictions_dir);
    r.Get("split", c.paths.split);
    r.Finish();
  }
  root.Get("classes", c.classes);
  {
    Reader r = root.Sub("synth");
    r.Get("n_classes", c.synth.n_classes);
    if (j.contains("synth") && j["synth"].contains("clips_per_split")) {
      const auto& splits = j["synth"]["clips_per_split"];
      if (!splits.is_object()) throw ConfigError("config.synth.clips_per_split: expected an object");
      c.synth.clips_per_split.clear();
      for (const auto& item : splits.items()) {
        if (!item.value().is_number_unsigned()) {
          throw ConfigError("config.synth.clips_per_split." + item.key() +
                            ": expected a non-negative integer");
        }
        c.synth.clips_per_split[item.key()] = item.value().get<std::size_t>();
      }
    }
    r.Sub("clips_per_split");
    r.Get("clip_seconds", c.synth.clip_seconds);
    r.Get("sample_rate", c.synth.sample_rate);
    r.Get("min_events", c.synth.min_events);
    r.Get("max_events", c.synth.max_events);
    r.Get("min_event_seconds", c.synth.min_event_seconds);
    r.Get("max_event_seconds", c.synth.max_event_seconds);
    r.Get("snr_db_min", c.synth.snr_db_min);
    r.Get("snr_db_max", c.synth.snr_db_max);
    r.Get("noise_rms", c.synth.noise_rms);
    r.Get("seed", c.synth.seed);
    r.Finish();
  }
  {
    Reader r = root.Sub("features");
    FeatureConfig& f = c.features;
    r.Get("sample_rate", f.sample_rate);
    r.Get("frame_length", f.frame_length);
    r.Get("hop_length", f.hop_length);
    r.Get("mel_bins", f.mel_bins);
    r.Get("target_frames", f.target_frames);
    r.Get("fmin", f.fmin);
    r.Get("fmax", f.fmax);
    r.Get("log_floor", f.log_floor);
    r.Finish();
  }
  {
    Reader r = root.Sub("model");
    ModelConfig& m = c.model;
    r.Get("input_frames", m.input_frames);
    r.Get("mel_bins", m.mel_bins);
    r.Get("num_classes", m.num_classes);
    Reader g = r.Sub("gated");
    g.Get("filters_linear", m.gated.filters_linear);
    g.Get("filters_gate", m.gated.filters_gate);
    g.Get("kernel_height", m.gated.kernel_height);
    g.Get("kernel_width", m.gated.kernel_width);
    g.Get("stride", m.gated.stride);
    g.Get("layers_per_block", m.gated.layers_per_block);
    g.Get("blocks", m.gated.blocks);
    g.Finish();
    Reader p = r.Sub("primary");
    p.Get("filters", m.primary.filters);
    p.Get("kernel_height", m.primary.kernel_height);
    p.Get("kernel_width", m.primary.kernel_width);
    p.Get("stride_time", m.primary.stride_time);
    p.Get("stride_freq", m.primary.stride_freq);
    p.Get("capsule_dim", m.primary.capsule_dim);
    p.Get("batch_norm", m.primary.batch_norm);
    p.Finish();
    r.Get("class_capsule_dim", m.class_capsule_dim);
    Reader routing = r.Sub("routing");
    routing.Get("iterations", m.routing.iterations);
    std::string form = SquashName(m.routing.squash_form);
    routing.Get("squash_form", form);
    if (form == "quadratic") {
      m.routing.squash_form = SquashForm::kQuadratic;
    } else if (form == "linear") {
      m.routing.squash_form = SquashForm::kLinear;
    } else {
      throw ConfigError("config.model.routing.squash_form: expected \"quadratic\" or \"linear\"");
    }
    routing.Finish();
    r.Get("gated_dropout", m.gated_dropout);
    r.Get("primary_dropout", m.primary_dropout);
    r.Finish();
  }
  {
    Reader r = root.Sub("train");
    TrainConfig& t = c.train;
    r.Get("batch_size", t.batch_size);
    r.Get("epochs", t.epochs);
    r.Get("learning_rate", t.learning_rate);
    r.Get("lr_decay", t.lr_decay);
    r.Get("lr_decay_every", t.lr_decay_every);
    Reader a = r.Sub("adam");
    a.Get("beta1", t.adam.beta1);
    a.Get("beta2", t.adam.beta2);
    a.Get("epsilon", t.adam.epsilon);
    a.Finish();
    r.Get("seed", t.seed);
    r.Get("balance", t.balance);
    r.Get("top_k", t.top_k);
    r.Finish();
  }
  {
    Reader r = root.Sub("postprocess");
    PostprocessConfig& p = c.postprocess;
    r.Get("tag_threshold", p.tag_threshold);
    r.Get("frame_threshold", p.frame_threshold);
    r.Get("dilation_size", p.dilation_size);
    r.Get("erosion_size", p.erosion_size);
    r.Get("slice_duration", p.slice_duration);
    r.Finish();
  }
  root.Finish();
  c.train.tag_threshold = c.postprocess.tag_threshold;
  c.Validate();
  return c;
}

RunConfig LoadRunConfig(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) {
    throw std::filesystem::filesystem_error(
        "cannot open config", path, std::make_error_code(std::errc::no_such_file_or_directory));
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return RunConfigFromJson(j, std::move(base));
}

std::string ConfigHash(const RunConfig& config) {
  nlohmann::ordered_json j = ToJson(config);
  j.erase("paths");
  j.erase("synth");
  j["train"].erase("seed");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace capsed
