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

#ifndef CAPSED_WAV_H_
#define CAPSED_WAV_H_

#include <filesystem>
#include <span>
#include <vector>

namespace capsed {

struct Audio {
  int sample_rate = 0;
  std::vector<float> samples;  // mono, full scale [-1, 1]

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Reads 16-bit PCM RIFF/WAVE. Multichannel input is averaged to mono.
// Throws FormatError for anything else.
Audio ReadWav(const std::filesystem::path& path);
Audio DecodeWav(std::span<const unsigned char> bytes);

// Writes mono 16-bit PCM, clipping to [-1, 1] and rounding to nearest.
void WriteWav(const std::filesystem::path& path, const Audio& audio);
std::vector<unsigned char> EncodeWav(const Audio& audio);

}  // namespace capsed

#endif  // CAPSED_WAV_H_
