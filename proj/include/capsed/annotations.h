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

#ifndef CAPSED_ANNOTATIONS_H_
#define CAPSED_ANNOTATIONS_H_

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace capsed {

struct Event {
  std::string label;
  double onset = 0;   // seconds
  double offset = 0;  // seconds

  auto operator<=>(const Event&) const = default;
};

// clip_id -> events sorted by onset. A clip may map to an empty list.
using EventList = std::map<std::string, std::vector<Event>>;
// clip_id -> clip-level labels.
using TagList = std::map<std::string, std::set<std::string>>;

// Tab-separated `clip_id onset offset label` with 6-decimal seconds. A line
// holding only a clip id declares a clip without events.
void WriteEvents(std::ostream& out, const EventList& events);
EventList ReadEvents(std::istream& in);
void SaveEvents(const std::filesystem::path& path, const EventList& events);
EventList LoadEvents(const std::filesystem::path& path);

// CSV `clip_id,label1;label2;...`.
void WriteTags(std::ostream& out, const TagList& tags);
TagList ReadTags(std::istream& in);
void SaveTags(const std::filesystem::path& path, const TagList& tags);
TagList LoadTags(const std::filesystem::path& path);

// Clip-level labels implied by strong annotations.
TagList TagsFromEvents(const EventList& events);

}  // namespace capsed

#endif  // CAPSED_ANNOTATIONS_H_
