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

#include "capsed/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <tuple>

#include "capsed/features.h"
#include "capsed/layers.h"

namespace capsed {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFadeSeconds = 0.02;

// Mel band centers of the default 64-band filterbank; class frequencies are
// drawn from it so separations are counted in bands.
const std::vector<double>& BandCenters() {
  static const std::vector<double> centers = MelBandCenters(FeatureConfig());
  return centers;
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * UniformUnit(rng);
}

std::size_t UniformInt(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + std::min(static_cast<std::size_t>(UniformUnit(rng) * (hi - lo + 1)), hi - lo);
}

double Gaussian(std::mt19937_64& rng) {
  // Box-Muller on the library-independent uniform draw.
  const double u1 = 1.0 - UniformUnit(rng), u2 = UniformUnit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * kPi * u2);
}

std::vector<double> Waveform(const SynthClass& c, std::size_t n, int rate, std::mt19937_64& rng) {
  std::vector<double> w(n);
  const auto& bands = BandCenters();
  const auto band = std::lower_bound(bands.begin(), bands.end(), c.center_hz) - bands.begin();
  const double lo = bands[std::max<long>(band - 1, 0)];
  const double hi = bands[std::min<long>(band + 1, static_cast<long>(bands.size()) - 1)];
  switch (c.kind) {
    case EventKind::kTone: {
      const double phase = Uniform(rng, 0, 2 * kPi);
      for (std::size_t i = 0; i < n; ++i) w[i] = std::sin(2 * kPi * c.center_hz * i / rate + phase);
      break;
    }
    case EventKind::kNoiseBurst: {
      // Random-phase partials spread over the neighboring bands.
      constexpr int kPartials = 24;
      for (int k = 0; k < kPartials; ++k) {
        const double f = Uniform(rng, lo, hi), phase = Uniform(rng, 0, 2 * kPi);
        for (std::size_t i = 0; i < n; ++i) w[i] += std::sin(2 * kPi * f * i / rate + phase);
      }
      break;
    }
    case EventKind::kChirp: {
      const double seconds = static_cast<double>(n) / rate;
      const double slope = (hi - lo) / seconds;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        w[i] = std::sin(2 * kPi * (lo * t + 0.5 * slope * t * t));
      }
      break;
    }
  }
  // Unit RMS with short linear fades at both ends.
  double energy = 0;
  for (double v : w) energy += v * v;
  const double scale = energy > 0 ? 1.0 / std::sqrt(energy / n) : 0.0;
  const std::size_t fade = std::min(n / 2, static_cast<std::size_t>(kFadeSeconds * rate));
  for (std::size_t i = 0; i < n; ++i) {
    double g = scale;
    if (i < fade) g *= static_cast<double>(i) / fade;
    if (n - 1 - i < fade) g *= static_cast<double>(n - 1 - i) / fade;
    w[i] *= g;
  }
  return w;
}

}  // namespace

void SynthSpec::Validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("synth spec: " + what); };
  if (n_classes == 0) fail("n_classes must be positive");
  if (n_classes > 18) fail("at most 18 classes fit two mel bands apart");
  if (!(clip_seconds > 0) || sample_rate <= 0) fail("clip_seconds and sample_rate must be positive");
  if (min_events == 0 || min_events > max_events) fail("need 1 <= min_events <= max_events");
  if (!(min_event_seconds > 0 && min_event_seconds <= max_event_seconds &&
        max_event_seconds <= clip_seconds)) {
    fail("need 0 < min_event_seconds <= max_event_seconds <= clip_seconds");
  }
  if (!(snr_db_min <= snr_db_max)) fail("snr_db_min must not exceed snr_db_max");
  if (!(noise_rms >= 0)) fail("noise_rms must be non-negative");
  if (sample_rate < 16000) fail("sample_rate must be at least 16000 Hz");
}

std::vector<SynthClass> SynthClasses(const SynthSpec& spec) {
  static const char* kKindNames[] = {"tone", "noise_burst", "chirp"};
  const auto& bands = BandCenters();
  std::vector<SynthClass> classes;
  // Three classes: exactly 1 kHz (strongest in band 22), then the centers of
  // bands 35 and 49. Larger sets are spread evenly from band 4.
  const std::size_t step = spec.n_classes <= 3 ? 14 : 56 / spec.n_classes;
  const std::size_t first = spec.n_classes <= 3 ? 21 : 4;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const auto kind = static_cast<EventKind>(c % 3);
    std::string name = kKindNames[c % 3];
    if (spec.n_classes > 3) name += "_" + std::to_string(c);
    const double hz = (c == 0 && spec.n_classes <= 3) ? 1000.0 : bands[first + c * step];
    classes.push_back({name, kind, hz});
  }
  return classes;
}

SynthClip SynthesizeClip(const SynthSpec& spec, const std::string& split, std::size_t index) {
  spec.Validate();
  std::seed_seq seq(split.begin(), split.end());
  std::vector<std::uint32_t> split_key(2);
  seq.generate(split_key.begin(), split_key.end());
  std::seed_seq clip_seq{static_cast<std::uint32_t>(spec.seed),
                         static_cast<std::uint32_t>(spec.seed >> 32), split_key[0], split_key[1],
                         static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(clip_seq);

  const auto classes = SynthClasses(spec);
  const int rate = spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(spec.clip_seconds * rate));
  char id[64];
  std::snprintf(id, sizeof(id), "%s_%04zu", split.c_str(), index);
  SynthClip clip{id, {rate, {}}, {}};

  std::vector<double> mix(n);
  for (auto& v : mix) v = spec.noise_rms * Gaussian(rng);

  const std::size_t count = UniformInt(rng, spec.min_events, spec.max_events);
  for (std::size_t e = 0; e < count; ++e) {
    const SynthClass& c = classes[UniformInt(rng, 0, classes.size() - 1)];
    const double duration = Uniform(rng, spec.min_event_seconds, spec.max_event_seconds);
    const double onset = Uniform(rng, 0, spec.clip_seconds - duration);
    const auto start = static_cast<std::size_t>(std::llround(onset * rate));
    const std::size_t len = std::min(n - start, static_cast<std::size_t>(std::llround(duration * rate)));
    const double snr_db = Uniform(rng, spec.snr_db_min, spec.snr_db_max);
    const double amplitude = spec.noise_rms * std::pow(10.0, snr_db / 20.0);
    const std::vector<double> w = Waveform(c, len, rate, rng);
    for (std::size_t i = 0; i < len; ++i) mix[start + i] += amplitude * w[i];
    clip.events.push_back({c.name, static_cast<double>(start) / rate,
                           static_cast<double>(start + len) / rate});
  }

  // Overlapping events of one class are annotated as a single event.
  std::sort(clip.events.begin(), clip.events.end(),
            [](const Event& a, const Event& b) { return std::tie(a.label, a.onset) < std::tie(b.label, b.onset); });
  std::vector<Event> merged;
  for (const Event& e : clip.events) {
    if (!merged.empty() && merged.back().label == e.label && e.onset <= merged.back().offset) {
      merged.back().offset = std::max(merged.back().offset, e.offset);
    } else {
      merged.push_back(e);
    }
  }
  std::sort(merged.begin(), merged.end());
  std::stable_sort(merged.begin(), merged.end(),
                   [](const Event& a, const Event& b) { return a.onset < b.onset; });
  clip.events = std::move(merged);

  double peak = 0;
  for (double v : mix) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.99 ? 0.99 / peak : 1.0;
  clip.audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.audio.samples[i] = static_cast<float>(mix[i] * gain);
  return clip;
}

void WriteCorpus(const SynthSpec& spec, const std::filesystem::path& out) {
  spec.Validate();
  for (const auto& [split, count] : spec.clips_per_split) {
    std::filesystem::create_directories(out / split);
    EventList strong;
    for (std::size_t i = 0; i < count; ++i) {
      SynthClip clip = SynthesizeClip(spec, split, i);
      WriteWav(out / split / (clip.clip_id + ".wav"), clip.audio);
      strong[clip.clip_id] = std::move(clip.events);
    }
    SaveEvents(out / (split + "_strong.tsv"), strong);
    SaveTags(out / (split + "_weak.csv"), TagsFromEvents(strong));
  }
}

}  // namespace capsed
