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

#ifndef CAPSED_METRICS_H_
#define CAPSED_METRICS_H_

#include <map>
#include <string>

#include "capsed/annotations.h"
#include "json.hpp"

namespace capsed {

struct TaggingScores {
  long tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
};

struct SegmentScores {
  long tp = 0, fp = 0, fn = 0;
  long substitutions = 0, deletions = 0, insertions = 0, reference_active = 0;
  double precision = 0, recall = 0, f1 = 0;
  double error_rate = 0;  // 0 when no segment has reference activity
  double resolution = 1.0;
};

struct MetricsReport {
  TaggingScores tagging;
  SegmentScores sed;
};

// Micro-averaged over every (clip, class) pair. Clips absent from one side
// count as having no labels there. Zero denominators give 0.
TaggingScores TaggingMetrics(const TagList& predicted, const TagList& reference);

// Segment-based scores. Each clip is split into ceil(duration / resolution)
// segments; an event marks a segment active for its class when their
// intervals overlap by a positive amount. Every clip in `predicted` or
// `reference` needs a duration.
SegmentScores SegmentMetrics(const EventList& predicted, const EventList& reference,
                             const std::map<std::string, double>& durations,
                             double resolution = 1.0);

nlohmann::ordered_json ToJson(const MetricsReport& report);

}  // namespace capsed

#endif  // CAPSED_METRICS_H_
