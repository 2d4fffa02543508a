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

#ifndef CAPSED_POSTPROCESS_H_
#define CAPSED_POSTPROCESS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "capsed/annotations.h"
#include "capsed/tensor.h"

namespace capsed {

struct PostprocessConfig {
  double tag_threshold = 0.3;    // tau_1, on y
  double frame_threshold = 0.6;  // tau_2, on o
  std::size_t dilation_size = 10;
  std::size_t erosion_size = 5;
  double slice_duration = 1.0 / 3.0;  // seconds per time slice

  void Validate() const;
};

using BinarySequence = std::vector<std::uint8_t>;

// Classes l with y_l > threshold (strict).
std::vector<std::size_t> TagDecision(const Tensor<float>& y, double threshold);

BinarySequence Binarize(const Tensor<float>& o, std::size_t column, double threshold);

// Flat structuring element of `size` cells with offsets
// [-floor(size/2), ceil(size/2) - 1]; size 0 leaves the sequence unchanged.
// Cells outside the sequence are 0. Closing runs dilation and erosion on an
// unbounded zero background before cropping, so runs touching either end are
// not shortened by the border.
BinarySequence Dilate(const BinarySequence& x, std::size_t size);
BinarySequence Erode(const BinarySequence& x, std::size_t size);
BinarySequence Closing(const BinarySequence& x, std::size_t dilation_size,
                       std::size_t erosion_size);

// Events for the tagged classes of one clip. o: [T x L].
std::vector<Event> ExtractEvents(const Tensor<float>& o, const std::vector<std::size_t>& tags,
                                 const std::vector<std::string>& class_names,
                                 const PostprocessConfig& config);

}  // namespace capsed

#endif  // CAPSED_POSTPROCESS_H_
