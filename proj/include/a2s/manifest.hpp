// Copyright 2026 The a2s Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// The JSON-lines clip manifest shared by every pipeline stage. Paths inside a
// manifest are relative to the manifest's own directory so run outputs stay
// relocatable and byte-reproducible.

#ifndef A2S_MANIFEST_HPP_
#define A2S_MANIFEST_HPP_

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "a2s/common.hpp"

namespace a2s {

using ojson = nlohmann::ordered_json;

// One clip of one long recording. `clip_idx` is the position within the
// recording; `neighbor_idxs` lists the other clips of the same recording
// ordered by temporal distance (ties toward the earlier clip).
struct ClipRecord {
  std::string video_id;
  int clip_idx = 0;
  std::string wav_path;
  std::string feat_path;
  int label = -1;  // dominant action class, -1 when the clip has no event
  std::string split;
  std::vector<int> neighbor_idxs;
  std::string gt_action_path;
  std::string gt_ambient_path;
  std::string scenario;

  std::string key() const { return video_id + "/" + std::to_string(clip_idx); }

  ojson to_json() const {
    ojson j;
    j["video_id"] = video_id;
    j["clip_idx"] = clip_idx;
    j["wav_path"] = wav_path;
    j["feat_path"] = feat_path;
    j["label"] = label;
    j["split"] = split;
    j["neighbor_idxs"] = neighbor_idxs;
    j["gt_action_path"] = gt_action_path;
    j["gt_ambient_path"] = gt_ambient_path;
    j["scenario"] = scenario;
    return j;
  }

  static ClipRecord from_json(const ojson& j) {
    ClipRecord r;
    r.video_id = j.at("video_id").get<std::string>();
    r.clip_idx = j.at("clip_idx").get<int>();
    r.wav_path = j.at("wav_path").get<std::string>();
    r.feat_path = j.at("feat_path").get<std::string>();
    r.label = j.at("label").get<int>();
    r.split = j.at("split").get<std::string>();
    r.neighbor_idxs = j.at("neighbor_idxs").get<std::vector<int>>();
    r.gt_action_path = j.at("gt_action_path").get<std::string>();
    r.gt_ambient_path = j.at("gt_ambient_path").get<std::string>();
    r.scenario = j.at("scenario").get<std::string>();
    return r;
  }
};

struct Manifest {
  std::vector<ClipRecord> clips;
  std::filesystem::path dir;  // directory the relative paths resolve against

  std::filesystem::path resolve(const std::string& rel) const { return dir / rel; }

  std::vector<ClipRecord> split(const std::string& name) const {
    std::vector<ClipRecord> out;
    for (const auto& c : clips) {
      if (c.split == name) out.push_back(c);
    }
    return out;
  }

  // All clips belonging to the given recording, ordered by clip_idx.
  std::vector<ClipRecord> recording(const std::string& video_id) const {
    std::vector<ClipRecord> out;
    for (const auto& c : clips) {
      if (c.video_id == video_id) out.push_back(c);
    }
    std::sort(out.begin(), out.end(),
              [](const ClipRecord& a, const ClipRecord& b) { return a.clip_idx < b.clip_idx; });
    return out;
  }

  const ClipRecord* find(const std::string& video_id, int clip_idx) const {
    for (const auto& c : clips) {
      if (c.video_id == video_id && c.clip_idx == clip_idx) return &c;
    }
    return nullptr;
  }
};

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ostringstream os;
  for (const auto& c : m.clips) os << c.to_json().dump() << "\n";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open manifest for write: " + path.string());
  const std::string s = os.str();
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!f) throw IoError("manifest write failed: " + path.string());
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open manifest: " + path.string());
  Manifest m;
  m.dir = path.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      m.clips.push_back(ClipRecord::from_json(ojson::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest parse error at " + path.string() + ":" + std::to_string(lineno) +
                    ": " + e.what());
    }
  }
  return m;
}

}  // namespace a2s

#endif  // A2S_MANIFEST_HPP_
