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

#include "capsed/metrics.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace capsed {
namespace {

double Ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / den : 0.0; }

double FScore(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

}  // namespace

TaggingScores TaggingMetrics(const TagList& predicted, const TagList& reference) {
  static const std::set<std::string> kNone;
  auto lookup = [](const TagList& t, const std::string& clip) -> const std::set<std::string>& {
    auto it = t.find(clip);
    return it == t.end() ? kNone : it->second;
  };
  std::set<std::string> clips;
  for (const auto& [clip, _] : predicted) clips.insert(clip);
  for (const auto& [clip, _] : reference) clips.insert(clip);
  TaggingScores s;
  for (const auto& clip : clips) {
    const auto& pred = lookup(predicted, clip);
    const auto& ref = lookup(reference, clip);
    for (const auto& l : pred) (ref.count(l) ? s.tp : s.fp)++;
    for (const auto& l : ref) s.fn += pred.count(l) == 0;
  }
  s.precision = Ratio(s.tp, s.tp + s.fp);
  s.recall = Ratio(s.tp, s.tp + s.fn);
  s.f1 = FScore(s.precision, s.recall);
  return s;
}

namespace {

// Active (segment, label) cells of one clip.
std::vector<std::set<std::string>> Activity(const std::vector<Event>& events,
                                            std::size_t segments, double resolution) {
  std::vector<std::set<std::string>> active(segments);
  for (const Event& e : events) {
    for (std::size_t k = 0; k < segments; ++k) {
      const double start = k * resolution, end = (k + 1) * resolution;
      if (e.onset < end && e.offset > start) active[k].insert(e.label);
    }
  }
  return active;
}

}  // namespace

SegmentScores SegmentMetrics(const EventList& predicted, const EventList& reference,
                             const std::map<std::string, double>& durations, double resolution) {
  if (!(resolution > 0)) throw std::invalid_argument("segment metrics: resolution must be positive");
  static const std::vector<Event> kNone;
  std::set<std::string> clips;
  for (const auto& [clip, _] : predicted) clips.insert(clip);
  for (const auto& [clip, _] : reference) clips.insert(clip);
  SegmentScores s;
  s.resolution = resolution;
  for (const auto& clip : clips) {
    auto d = durations.find(clip);
    if (d == durations.end()) throw std::invalid_argument("segment metrics: no duration for clip " + clip);
    if (!(d->second >= 0)) throw std::invalid_argument("segment metrics: negative duration for clip " + clip);
    const auto segments = static_cast<std::size_t>(std::ceil(d->second / resolution));
    auto p = predicted.find(clip);
    auto r = reference.find(clip);
    const auto pred = Activity(p == predicted.end() ? kNone : p->second, segments, resolution);
    const auto ref = Activity(r == reference.end() ? kNone : r->second, segments, resolution);
    for (std::size_t k = 0; k < segments; ++k) {
      long tp = 0, fp = 0, fn = 0;
      for (const auto& l : pred[k]) (ref[k].count(l) ? tp : fp)++;
      for (const auto& l : ref[k]) fn += pred[k].count(l) == 0;
      s.tp += tp;
      s.fp += fp;
      s.fn += fn;
      s.substitutions += std::min(fn, fp);
      s.deletions += std::max(0L, fn - fp);
      s.insertions += std::max(0L, fp - fn);
      s.reference_active += static_cast<long>(ref[k].size());
    }
  }
  s.precision = Ratio(s.tp, s.tp + s.fp);
  s.recall = Ratio(s.tp, s.tp + s.fn);
  s.f1 = FScore(s.precision, s.recall);
  s.error_rate = Ratio(s.substitutions + s.deletions + s.insertions, s.reference_active);
  return s;
}

nlohmann::ordered_json ToJson(const MetricsReport& report) {
  const TaggingScores& t = report.tagging;
  const SegmentScores& s = report.sed;
  nlohmann::ordered_json j;
  j["tagging"] = {{"precision", t.precision}, {"recall", t.recall}, {"f1", t.f1},
                  {"tp", t.tp},               {"fp", t.fp},         {"fn", t.fn}};
  j["sed"] = {{"resolution_s", s.resolution},
              {"precision", s.precision},
              {"recall", s.recall},
              {"f1", s.f1},
              {"error_rate", s.error_rate},
              {"tp", s.tp},
              {"fp", s.fp},
              {"fn", s.fn},
              {"substitutions", s.substitutions},
              {"deletions", s.deletions},
              {"insertions", s.insertions},
              {"reference_active", s.reference_active}};
  return j;
}

}  // namespace capsed
