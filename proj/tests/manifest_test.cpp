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

#include "a2s/manifest.hpp"

#include "a2s/io.hpp"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

namespace a2s {
namespace {

namespace fs = std::filesystem;

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("a2s_manifest_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  fs::path dir_;
};

ClipRecord make_record(const std::string& vid, int idx, const std::string& split) {
  ClipRecord r;
  r.video_id = vid;
  r.clip_idx = idx;
  r.wav_path = "wav/" + vid + "_" + std::to_string(idx) + ".wav";
  r.feat_path = "feats/" + vid + "_" + std::to_string(idx) + ".a2st";
  r.label = idx % 3;
  r.split = split;
  r.neighbor_idxs = {idx + 1, idx + 2};
  r.gt_action_path = "gt/a.wav";
  r.gt_ambient_path = "gt/b.wav";
  r.scenario = "kitchen";
  return r;
}

TEST_F(ManifestTest, RoundTripPreservesAllFields) {
  Manifest m;
  m.clips.push_back(make_record("vid0000", 0, "train"));
  m.clips.push_back(make_record("vid0000", 1, "train"));
  m.clips.push_back(make_record("vid0001", 0, "val"));
  save_manifest(dir_ / "manifest.jsonl", m);

  Manifest back = load_manifest(dir_ / "manifest.jsonl");
  ASSERT_EQ(back.clips.size(), 3u);
  EXPECT_EQ(back.dir, dir_);
  for (size_t i = 0; i < m.clips.size(); ++i) {
    const ClipRecord& a = m.clips[i];
    const ClipRecord& b = back.clips[i];
    EXPECT_EQ(a.video_id, b.video_id);
    EXPECT_EQ(a.clip_idx, b.clip_idx);
    EXPECT_EQ(a.wav_path, b.wav_path);
    EXPECT_EQ(a.feat_path, b.feat_path);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.split, b.split);
    EXPECT_EQ(a.neighbor_idxs, b.neighbor_idxs);
    EXPECT_EQ(a.gt_action_path, b.gt_action_path);
    EXPECT_EQ(a.gt_ambient_path, b.gt_ambient_path);
    EXPECT_EQ(a.scenario, b.scenario);
  }
}

TEST_F(ManifestTest, SaveIsByteDeterministic) {
  Manifest m;
  m.clips.push_back(make_record("vid0000", 0, "train"));
  m.clips.push_back(make_record("vid0001", 4, "test"));
  save_manifest(dir_ / "a.jsonl", m);
  save_manifest(dir_ / "b.jsonl", m);
  EXPECT_EQ(read_text_file(dir_ / "a.jsonl"), read_text_file(dir_ / "b.jsonl"));
}

TEST_F(ManifestTest, ResolveJoinsAgainstManifestDir) {
  Manifest m;
  m.clips.push_back(make_record("vid0000", 0, "train"));
  save_manifest(dir_ / "manifest.jsonl", m);
  Manifest back = load_manifest(dir_ / "manifest.jsonl");
  EXPECT_EQ(back.resolve(back.clips[0].wav_path), dir_ / "wav/vid0000_0.wav");
}

TEST_F(ManifestTest, SplitAndRecordingHelpers) {
  Manifest m;
  m.clips.push_back(make_record("vidB", 1, "train"));
  m.clips.push_back(make_record("vidA", 2, "val"));
  m.clips.push_back(make_record("vidB", 0, "train"));
  EXPECT_EQ(m.split("train").size(), 2u);
  EXPECT_EQ(m.split("val").size(), 1u);
  EXPECT_EQ(m.split("test").size(), 0u);
  const auto rec = m.recording("vidB");
  ASSERT_EQ(rec.size(), 2u);
  EXPECT_EQ(rec[0].clip_idx, 0);  // sorted by clip_idx
  EXPECT_EQ(rec[1].clip_idx, 1);
  ASSERT_NE(m.find("vidA", 2), nullptr);
  EXPECT_EQ(m.find("vidA", 3), nullptr);
}

TEST_F(ManifestTest, MissingFileThrowsIoError) {
  EXPECT_THROW(load_manifest(dir_ / "nope.jsonl"), IoError);
}

TEST_F(ManifestTest, MalformedLineThrowsWithLineNumber) {
  write_text_file(dir_ / "bad.jsonl",
                  make_record("vid0000", 0, "train").to_json().dump() + "\nnot json at all\n");
  try {
    load_manifest(dir_ / "bad.jsonl");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST_F(ManifestTest, MissingFieldThrows) {
  ojson j = make_record("vid0000", 0, "train").to_json();
  j.erase("split");
  write_text_file(dir_ / "partial.jsonl", j.dump() + "\n");
  EXPECT_THROW(load_manifest(dir_ / "partial.jsonl"), IoError);
}

TEST_F(ManifestTest, EmptyAndBlankLinesAreSkipped) {
  write_text_file(dir_ / "gaps.jsonl",
                  "\n" + make_record("vid0000", 0, "train").to_json().dump() + "\n\n");
  Manifest back = load_manifest(dir_ / "gaps.jsonl");
  EXPECT_EQ(back.clips.size(), 1u);
}

}  // namespace
}  // namespace a2s
