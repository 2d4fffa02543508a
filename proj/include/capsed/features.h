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

#ifndef CAPSED_FEATURES_H_
#define CAPSED_FEATURES_H_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "capsed/tensor.h"
#include "capsed/wav.h"

namespace capsed {

struct FeatureConfig {
  int sample_rate = 16000;
  std::size_t frame_length = 1024;  // 64 ms
  // 10 s * 16000 / 240 frames, so a 10 s clip gives exactly 240 frames.
  std::size_t hop_length = 666;
  std::size_t mel_bins = 64;
  std::size_t target_frames = 240;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;

  // Same 64 ms frames at a coarser hop: 120 frames per 10 s clip.
  static FeatureConfig Desk();

  std::size_t fft_size() const;  // next power of two >= frame_length
  // Seconds covered by target_frames.
  double clip_seconds() const {
    return static_cast<double>(target_frames * hop_length) / sample_rate;
  }
  // Value of a frame of digital silence.
  double silence_value() const;
  void Validate() const;
};

// Band-limited (Kaiser-windowed sinc) resampling to `target_rate`. Output has
// round(n * target_rate / source_rate) samples; equal rates return the input.
std::vector<float> Resample(std::span<const float> signal, int source_rate, int target_rate);

double HzToMel(double hz);
double MelToHz(double mel);

// Triangular filters with unit peak, [mel_bins x (fft_size/2 + 1)].
Tensor<double> MelFilterbank(const FeatureConfig& config);
// Center frequency of each filter in Hz.
std::vector<double> MelBandCenters(const FeatureConfig& config);

// Frames start every hop_length samples; there are floor(n / hop_length) of
// them and the final ones read zeros past the end. Returns [frames x bins].
// Throws std::invalid_argument when the signal is shorter than one frame.
Tensor<float> LogMel(std::span<const float> signal, const FeatureConfig& config);

// Crops the tail or appends silence-valued frames up to target_frames.
Tensor<float> PadOrCrop(const Tensor<float>& features, std::size_t target_frames,
                        float pad_value);

// Resample + logmel + pad/crop for one decoded clip.
Tensor<float> ExtractFeatures(const Audio& audio, const FeatureConfig& config);

inline constexpr double kMinStd = 1e-6;

struct Standardizer {
  Tensor<float> mean;      // [bins]
  Tensor<float> variance;  // [bins]
  std::size_t frames = 0;  // frames the statistics were fit on

  static Standardizer Fit(const std::vector<Tensor<float>>& features);
  Tensor<float> Apply(const Tensor<float>& features) const;
  Tensor<float> Invert(const Tensor<float>& standardized) const;

  // <dir>/standardizer.json plus the two CTSR tensors it references.
  void Save(const std::filesystem::path& dir) const;
  static Standardizer Load(const std::filesystem::path& dir);
};

}  // namespace capsed

#endif  // CAPSED_FEATURES_H_
