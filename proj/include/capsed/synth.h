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

#ifndef CAPSED_SYNTH_H_
#define CAPSED_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "capsed/annotations.h"
#include "capsed/wav.h"

namespace capsed {

enum class EventKind { kTone, kNoiseBurst, kChirp };

// Weakly-labeled corpus of synthetic sound events over white background
// noise. Class c uses kind c % 3 around its own center frequency; centers are
// at least two mel bands apart.
struct SynthSpec {
  std::size_t n_classes = 3;
  std::map<std::string, std::size_t> clips_per_split = {
      {"train", 200}, {"validation", 50}, {"test", 50}};
  double clip_seconds = 10.0;
  int sample_rate = 16000;
  std::size_t min_events = 1;
  std::size_t max_events = 3;
  double min_event_seconds = 1.0;
  double max_event_seconds = 4.0;
  double snr_db_min = 3.0;
  double snr_db_max = 15.0;
  double noise_rms = 0.01;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct SynthClass {
  std::string name;
  EventKind kind;
  double center_hz;
};

std::vector<SynthClass> SynthClasses(const SynthSpec& spec);

struct SynthClip {
  std::string clip_id;
  Audio audio;
  std::vector<Event> events;  // sorted by onset
};

// Deterministic in (spec.seed, split, index).
SynthClip SynthesizeClip(const SynthSpec& spec, const std::string& split, std::size_t index);

// Writes <out>/<split>/<clip_id>.wav, <out>/<split>_weak.csv and
// <out>/<split>_strong.tsv for every split.
void WriteCorpus(const SynthSpec& spec, const std::filesystem::path& out);

}  // namespace capsed

#endif  // CAPSED_SYNTH_H_
