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

#include "capsed/annotations.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "capsed/tensor_io.h"

namespace capsed {
namespace {

std::vector<std::string> Split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t end = s.find(sep, start);
    parts.push_back(s.substr(start, end - start));
    if (end == std::string::npos) return parts;
    start = end + 1;
  }
}

std::string StripCr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

double ParseSeconds(const std::string& field, int line_no) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != field.size() || field.empty() || !std::isfinite(v)) {
    throw FormatError("event list line " + std::to_string(line_no) + ": bad time '" + field + "'");
  }
  return v;
}

std::ifstream OpenOrThrow(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::filesystem::filesystem_error(
        "cannot open", path, std::make_error_code(std::errc::no_such_file_or_directory));
  }
  return in;
}

}  // namespace

void WriteEvents(std::ostream& out, const EventList& events) {
  char buf[64];
  for (const auto& [clip, list] : events) {
    if (list.empty()) {
      out << clip << "\n";
      continue;
    }
    std::vector<Event> sorted = list;
    std::sort(sorted.begin(), sorted.end(), [](const Event& a, const Event& b) {
      return std::tie(a.onset, a.offset, a.label) < std::tie(b.onset, b.offset, b.label);
    });
    for (const Event& e : sorted) {
      std::snprintf(buf, sizeof(buf), "\t%.6f\t%.6f\t", e.onset, e.offset);
      out << clip << buf << e.label << "\n";
    }
  }
}

EventList ReadEvents(std::istream& in) {
  EventList events;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = StripCr(line);
    if (line.empty()) continue;
    const std::vector<std::string> f = Split(line, '\t');
    if (f[0].empty()) throw FormatError("event list line " + std::to_string(line_no) + ": empty clip id");
    auto& list = events[f[0]];
    if (f.size() == 1) continue;
    if (f.size() != 4 || f[3].empty()) {
      throw FormatError("event list line " + std::to_string(line_no) +
                        ": expected clip_id, onset, offset, label separated by tabs");
    }
    Event e{f[3], ParseSeconds(f[1], line_no), ParseSeconds(f[2], line_no)};
    if (!(e.onset >= 0 && e.onset < e.offset)) {
      throw FormatError("event list line " + std::to_string(line_no) + ": need 0 <= onset < offset");
    }
    list.push_back(std::move(e));
  }
  for (auto& [clip, list] : events) std::stable_sort(list.begin(), list.end(),
      [](const Event& a, const Event& b) { return a.onset < b.onset; });
  return events;
}

void SaveEvents(const std::filesystem::path& path, const EventList& events) {
  std::ofstream out(path);
  WriteEvents(out, events);
  if (!out) throw std::runtime_error("failed to write " + path.string());
}

EventList LoadEvents(const std::filesystem::path& path) {
  std::ifstream in = OpenOrThrow(path);
  try {
    return ReadEvents(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void WriteTags(std::ostream& out, const TagList& tags) {
  for (const auto& [clip, labels] : tags) {
    out << clip << ",";
    bool first = true;
    for (const auto& l : labels) {
      out << (first ? "" : ";") << l;
      first = false;
    }
    out << "\n";
  }
}

TagList ReadTags(std::istream& in) {
  TagList tags;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = StripCr(line);
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || line.find(',', comma + 1) != std::string::npos) {
      throw FormatError("weak label line " + std::to_string(line_no) +
                        ": expected clip_id,label1;label2");
    }
    auto& labels = tags[line.substr(0, comma)];
    const std::string rest = line.substr(comma + 1);
    if (rest.empty()) continue;
    for (const std::string& l : Split(rest, ';')) {
      if (l.empty()) throw FormatError("weak label line " + std::to_string(line_no) + ": empty label");
      labels.insert(l);
    }
  }
  return tags;
}

void SaveTags(const std::filesystem::path& path, const TagList& tags) {
  std::ofstream out(path);
  WriteTags(out, tags);
  if (!out) throw std::runtime_error("failed to write " + path.string());
}

TagList LoadTags(const std::filesystem::path& path) {
  std::ifstream in = OpenOrThrow(path);
  try {
    return ReadTags(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TagList TagsFromEvents(const EventList& events) {
  TagList tags;
  for (const auto& [clip, list] : events) {
    auto& labels = tags[clip];
    for (const Event& e : list) labels.insert(e.label);
  }
  return tags;
}

}  // namespace capsed
