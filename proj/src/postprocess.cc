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

#include "capsed/postprocess.h"

#include <algorithm>
#include <stdexcept>

namespace capsed {

void PostprocessConfig::Validate() const {
  auto open_unit = [](double v) { return v > 0 && v < 1; };
  if (!open_unit(tag_threshold) || !open_unit(frame_threshold)) {
    throw std::invalid_argument("postprocess: thresholds must lie in (0, 1)");
  }
  if (!(slice_duration > 0)) throw std::invalid_argument("postprocess: slice_duration must be positive");
}

std::vector<std::size_t> TagDecision(const Tensor<float>& y, double threshold) {
  std::vector<std::size_t> tags;
  for (std::size_t l = 0; l < y.size(); ++l) {
    if (y[l] > threshold) tags.push_back(l);
  }
  return tags;
}

BinarySequence Binarize(const Tensor<float>& o, std::size_t column, double threshold) {
  if (o.rank() != 2 || column >= o.dim(1)) {
    throw DimensionError("binarize: column " + std::to_string(column) + " of " +
                         ShapeToString(o.shape()));
  }
  BinarySequence b(o.dim(0));
  for (std::size_t t = 0; t < b.size(); ++t) b[t] = o[t * o.dim(1) + column] > threshold;
  return b;
}

namespace {

struct Window {
  long lo, hi;  // inclusive offsets
};

Window Offsets(std::size_t size) {
  const long k = static_cast<long>(size);
  return {-(k / 2), (k + 1) / 2 - 1};
}

// Dilation or erosion of x, where x[i] is defined for i in [0, n) and zero
// elsewhere, evaluated at positions [begin, begin + count).
BinarySequence Apply(const BinarySequence& x, long begin, std::size_t count, std::size_t size,
                     bool dilate) {
  const Window w = Offsets(size);
  const long n = static_cast<long>(x.size());
  auto at = [&](long i) -> bool { return i >= 0 && i < n && x[i]; };
  BinarySequence out(count);
  for (std::size_t j = 0; j < count; ++j) {
    const long t = begin + static_cast<long>(j);
    if (size == 0) {
      out[j] = at(t);
      continue;
    }
    bool v = !dilate;
    for (long b = w.lo; b <= w.hi; ++b) {
      // Dilation: exists b with x[t - b]; erosion: all b with x[t + b].
      if (dilate && at(t - b)) {
        v = true;
        break;
      }
      if (!dilate && !at(t + b)) {
        v = false;
        break;
      }
    }
    out[j] = v;
  }
  return out;
}

}  // namespace

BinarySequence Dilate(const BinarySequence& x, std::size_t size) {
  return Apply(x, 0, x.size(), size, true);
}

BinarySequence Erode(const BinarySequence& x, std::size_t size) {
  return Apply(x, 0, x.size(), size, false);
}

BinarySequence Closing(const BinarySequence& x, std::size_t dilation_size,
                       std::size_t erosion_size) {
  // The dilation can only spread dilation_size cells past either end, and the
  // erosion at cells inside [0, n) reads at most erosion_size cells away, so a
  // margin of their sum holds everything the erosion needs.
  const long margin = static_cast<long>(dilation_size + erosion_size);
  const BinarySequence wide = Apply(x, -margin, x.size() + 2 * margin, dilation_size, true);
  BinarySequence eroded = Apply(wide, 0, wide.size(), erosion_size, false);
  return BinarySequence(eroded.begin() + margin, eroded.begin() + margin + x.size());
}

std::vector<Event> ExtractEvents(const Tensor<float>& o, const std::vector<std::size_t>& tags,
                                 const std::vector<std::string>& class_names,
                                 const PostprocessConfig& config) {
  if (o.rank() != 2 || o.dim(1) != class_names.size()) {
    throw DimensionError("extract events: curves " + ShapeToString(o.shape()) + " vs " +
                         std::to_string(class_names.size()) + " class names");
  }
  std::vector<Event> events;
  for (std::size_t l : tags) {
    const BinarySequence active = Closing(Binarize(o, l, config.frame_threshold),
                                          config.dilation_size, config.erosion_size);
    for (std::size_t t = 0; t < active.size();) {
      if (!active[t]) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end + 1 < active.size() && active[end + 1]) ++end;
      events.push_back({class_names[l], t * config.slice_duration, (end + 1) * config.slice_duration});
      t = end + 1;
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.onset < b.onset; });
  return events;
}

}  // namespace capsed
