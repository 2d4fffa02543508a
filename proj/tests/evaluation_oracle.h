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

// Brute-force references for the postprocessing and metrics code, written
// from the set and table definitions rather than from the library code.

#ifndef CAPSED_TESTS_EVALUATION_ORACLE_H_
#define CAPSED_TESTS_EVALUATION_ORACLE_H_

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "capsed/annotations.h"

namespace capsed::testing {

// Minkowski closing over index sets. The structuring element of size k is
// {-floor(k/2), ..., ceil(k/2) - 1}; size 0 means no operation.
inline std::vector<std::uint8_t> SetClosing(const std::vector<std::uint8_t>& x, int dilation,
                                            int erosion) {
  const int n = static_cast<int>(x.size());
  auto element = [](int k) {
    std::vector<int> b;
    for (int i = -(k / 2); i <= (k + 1) / 2 - 1; ++i) b.push_back(i);
    return b;
  };
  std::set<int> set;
  for (int i = 0; i < n; ++i) {
    if (x[i]) set.insert(i);
  }
  if (dilation > 0) {
    std::set<int> d;
    for (int i : set)
      for (int b : element(dilation)) d.insert(i + b);
    set = d;
  }
  if (erosion > 0) {
    std::set<int> e;
    const auto be = element(erosion);
    for (int t = -n - 50; t < 2 * n + 50; ++t) {
      bool all = true;
      for (int b : be) all = all && set.count(t + b);
      if (all) e.insert(t);
    }
    set = e;
  }
  std::vector<std::uint8_t> out(n);
  for (int i = 0; i < n; ++i) out[i] = set.count(i) ? 1 : 0;
  return out;
}

struct OracleCounts {
  long tp = 0, fp = 0, fn = 0, s = 0, d = 0, i = 0, n = 0;
};

inline OracleCounts OracleTagging(const TagList& predicted, const TagList& reference,
                                  const std::vector<std::string>& labels) {
  std::set<std::string> clips;
  for (const auto& kv : predicted) clips.insert(kv.first);
  for (const auto& kv : reference) clips.insert(kv.first);
  OracleCounts c;
  for (const auto& clip : clips) {
    for (const auto& l : labels) {
      const bool p = predicted.count(clip) && predicted.at(clip).count(l);
      const bool r = reference.count(clip) && reference.at(clip).count(l);
      c.tp += p && r;
      c.fp += p && !r;
      c.fn += !p && r;
    }
  }
  return c;
}

// Segment tables: active[label][segment] from interval intersection length.
inline OracleCounts OracleSegments(const EventList& predicted, const EventList& reference,
                                   const std::map<std::string, double>& durations,
                                   const std::vector<std::string>& labels, double resolution) {
  OracleCounts c;
  for (const auto& [clip, duration] : durations) {
    const int segments = static_cast<int>(std::ceil(duration / resolution));
    auto table = [&](const EventList& list) {
      std::map<std::string, std::vector<bool>> t;
      for (const auto& l : labels) t[l] = std::vector<bool>(segments, false);
      if (!list.count(clip)) return t;
      for (const Event& e : list.at(clip)) {
        for (int k = 0; k < segments; ++k) {
          const double overlap =
              std::min(e.offset, (k + 1) * resolution) - std::max(e.onset, k * resolution);
          if (overlap > 0) t[e.label][k] = true;
        }
      }
      return t;
    };
    auto p = table(predicted), r = table(reference);
    for (int k = 0; k < segments; ++k) {
      long tp = 0, fp = 0, fn = 0, n = 0;
      for (const auto& l : labels) {
        tp += p[l][k] && r[l][k];
        fp += p[l][k] && !r[l][k];
        fn += !p[l][k] && r[l][k];
        n += r[l][k];
      }
      c.tp += tp;
      c.fp += fp;
      c.fn += fn;
      c.n += n;
      c.s += std::min(fn, fp);
      c.d += fn > fp ? fn - fp : 0;
      c.i += fp > fn ? fp - fn : 0;
    }
  }
  return c;
}

// Random event list over `clips` clips with quarter-second boundaries, so
// events often start or end exactly on a segment edge.
inline EventList RandomEvents(std::mt19937_64& rng, const std::vector<std::string>& clips,
                              const std::map<std::string, double>& durations,
                              const std::vector<std::string>& labels) {
  EventList out;
  std::uniform_int_distribution<int> count(0, 4), label(0, static_cast<int>(labels.size()) - 1);
  for (const auto& clip : clips) {
    auto& list = out[clip];
    const int quarters = static_cast<int>(durations.at(clip) * 4);
    std::uniform_int_distribution<int> q(0, quarters - 1);
    for (int e = count(rng); e > 0; --e) {
      const int a = q(rng);
      const int b = std::uniform_int_distribution<int>(a + 1, quarters)(rng);
      list.push_back({labels[label(rng)], a / 4.0, b / 4.0});
    }
  }
  return out;
}

}  // namespace capsed::testing

#endif  // CAPSED_TESTS_EVALUATION_ORACLE_H_
