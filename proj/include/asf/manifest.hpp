/*
 * Copyright 2026 The asf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "asf/common.hpp"

namespace asf {

// Dataset manifests are plain CSV. Single-head:
//   clip_id,audio_path,start_s,stop_s,label,split,tags
// Two-head:
//   clip_id,audio_path,start_s,stop_s,verb_label,noun_label,split,tags
// tags is a semicolon-separated list; fields must not contain commas.

struct ManifestRow {
  std::string clip_id;
  std::string audio_path;
  double start_s = 0.0;
  double stop_s = 0.0;
  std::vector<int> labels;  // 1 or 2 entries
  std::string split;        // train | val | test
  std::vector<std::string> tags;
};

struct Manifest {
  bool two_head = false;
  std::vector<ManifestRow> rows;

  std::vector<ManifestRow> split_rows(const std::string& split) const {
    std::vector<ManifestRow> out;
    for (const auto& r : rows) {
      if (r.split == split) out.push_back(r);
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_string(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (const char ch : s) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  return parts;
}

inline std::string join_string(const std::vector<std::string>& parts,
                               char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace detail

inline const char* kManifestHeaderSingle =
    "clip_id,audio_path,start_s,stop_s,label,split,tags";
inline const char* kManifestHeaderTwoHead =
    "clip_id,audio_path,start_s,stop_s,verb_label,noun_label,split,tags";

inline Manifest parse_manifest_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "manifest: empty file");
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) {
    line.pop_back();
  }
  Manifest m;
  if (line == kManifestHeaderSingle) {
    m.two_head = false;
  } else if (line == kManifestHeaderTwoHead) {
    m.two_head = true;
  } else {
    fail("manifest: unrecognized header '", line, "'");
  }
  const std::size_t n_fields = m.two_head ? 8 : 7;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) {
      line.pop_back();
    }
    if (line.empty()) continue;
    const auto fields = detail::split_string(line, ',');
    check(fields.size() == n_fields, "manifest line ", line_no, ": expected ",
          n_fields, " fields, got ", fields.size());
    ManifestRow r;
    std::size_t f = 0;
    r.clip_id = fields[f++];
    r.audio_path = fields[f++];
    try {
      r.start_s = std::stod(fields[f++]);
      r.stop_s = std::stod(fields[f++]);
      r.labels.push_back(std::stoi(fields[f++]));
      if (m.two_head) r.labels.push_back(std::stoi(fields[f++]));
    } catch (const std::exception&) {
      fail("manifest line ", line_no, ": malformed numeric field");
    }
    r.split = fields[f++];
    const std::string tag_field = fields[f++];
    if (!tag_field.empty()) {
      r.tags = detail::split_string(tag_field, ';');
    }
    check(r.start_s < r.stop_s, "manifest line ", line_no, ": start_s ",
          r.start_s, " must be < stop_s ", r.stop_s);
    check(r.split == "train" || r.split == "val" || r.split == "test",
          "manifest line ", line_no, ": unknown split '", r.split, "'");
    for (const int l : r.labels) {
      check(l >= 0, "manifest line ", line_no, ": negative label");
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  check(is.good(), "manifest: cannot open ", path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_manifest_text(ss.str());
}

inline std::string serialize_manifest(const Manifest& m) {
  std::ostringstream os;
  os << (m.two_head ? kManifestHeaderTwoHead : kManifestHeaderSingle) << "\n";
  for (const auto& r : m.rows) {
    check(r.labels.size() == (m.two_head ? 2u : 1u),
          "manifest: row ", r.clip_id, " label arity mismatch");
    for (const auto* s : {&r.clip_id, &r.audio_path, &r.split}) {
      check(s->find(',') == std::string::npos, "manifest: field '", *s,
            "' must not contain commas");
    }
    os << r.clip_id << ',' << r.audio_path << ',';
    // shortest round-trip formatting keeps parse(serialize(m)) == m
    os.precision(17);
    os << r.start_s << ',' << r.stop_s << ',';
    os << r.labels[0] << ',';
    if (m.two_head) os << r.labels[1] << ',';
    os << r.split << ',' << detail::join_string(r.tags, ';') << "\n";
  }
  return os.str();
}

inline void save_manifest(const Manifest& m,
                          const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  check(os.good(), "manifest: cannot open ", path.string(), " for writing");
  os << serialize_manifest(m);
  check(os.good(), "manifest: write failed");
}

/// Checks labels against head class counts and (optionally) that audio paths
/// resolve relative to base_dir.
inline void validate_manifest(const Manifest& m,
                              const std::vector<int>& num_classes,
                              const std::filesystem::path& base_dir = {},
                              bool check_paths = false) {
  check(m.two_head == (num_classes.size() == 2),
        "manifest head arity does not match configured class counts");
  for (const auto& r : m.rows) {
    for (std::size_t h = 0; h < r.labels.size(); ++h) {
      check(r.labels[h] < num_classes[h], "manifest: clip ", r.clip_id,
            " label ", r.labels[h], " out of range for head ", h, " (",
            num_classes[h], " classes)");
    }
    if (check_paths) {
      const auto p = base_dir / r.audio_path;
      check(std::filesystem::exists(p), "manifest: clip ", r.clip_id,
            " audio path ", p.string(), " does not exist");
    }
  }
}

}  // namespace asf
