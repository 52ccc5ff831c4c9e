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

#include "a2s/curation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "a2s/synthworld.hpp"

namespace a2s::curation {
namespace {

namespace fs = std::filesystem;

TEST(ExtractClips, SpansUseSymmetricMargin) {
  const auto spans = extract_clips(60.0, {10.0});
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_DOUBLE_EQ(spans[0].first, 8.5);
  EXPECT_DOUBLE_EQ(spans[0].second, 11.5);
}

TEST(ExtractClips, EdgeClippedSpansAreDropped) {
  EXPECT_TRUE(extract_clips(60.0, {0.5}).empty());   // would start at -1.0
  EXPECT_TRUE(extract_clips(60.0, {59.0}).empty());  // would end at 60.5
  // Exactly at the edges is allowed.
  EXPECT_EQ(extract_clips(60.0, {1.5}).size(), 1u);
  EXPECT_EQ(extract_clips(60.0, {58.5}).size(), 1u);
}

TEST(ExtractClips, NineInteriorTimestampsGiveNineThreeSecondSpans) {
  std::vector<double> ts;
  for (int n = 2; n <= 10; ++n) ts.push_back(static_cast<double>(n));
  const auto spans = extract_clips(60.0, ts);
  ASSERT_EQ(spans.size(), 9u);
  for (const auto& [lo, hi] : spans) EXPECT_DOUBLE_EQ(hi - lo, 3.0);
}

TEST(ExtractClips, EmptyListIsEmptyOutputAndOutOfRangeThrows) {
  EXPECT_TRUE(extract_clips(60.0, {}).empty());
  EXPECT_THROW(extract_clips(60.0, {-0.1}), InputError);
  EXPECT_THROW(extract_clips(60.0, {60.1}), InputError);
  EXPECT_THROW(extract_clips(0.0, {0.0}), InputError);
}

// ---------------------------------------------------------------------------

class CurationFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("a2s_cur_" + std::to_string(::getpid()));
    fs::create_directories(dir_ / "wav");
    manifest_.dir = dir_;
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  // Adds a clip whose wav holds the given samples (empty = skip writing).
  ClipRecord& add_clip(const std::string& vid, int idx, const std::vector<float>& samples,
                       const std::string& scenario = "kitchen", bool write_file = true) {
    ClipRecord r;
    r.video_id = vid;
    r.clip_idx = idx;
    r.wav_path = "wav/" + vid + "_" + std::to_string(idx) + ".wav";
    r.feat_path = "feats/none.a2st";
    r.split = "train";
    r.scenario = scenario;
    if (write_file) write_wav(dir_ / r.wav_path, samples, 16000);
    manifest_.clips.push_back(r);
    return manifest_.clips.back();
  }

  static std::vector<float> tone(double freq, double amp, int n = 48000) {
    std::vector<float> s(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<size_t>(i)] = static_cast<float>(amp * std::sin(2.0 * M_PI * freq * i / 16000.0));
    }
    return s;
  }

  static std::set<std::string> keys(const Manifest& m) {
    std::set<std::string> out;
    for (const auto& c : m.clips) out.insert(c.key());
    return out;
  }

  fs::path dir_;
  Manifest manifest_;
};

TEST_F(CurationFixture, FilterSilentRemovesDigitalSilenceOnly) {
  add_clip("v0", 0, std::vector<float>(48000, 0.0f));          // removed: silent
  add_clip("v0", 1, tone(440.0, 0.5));                         // kept
  add_clip("v0", 2, std::vector<float>(48000, 1.0f / 32767));  // kept: one quantum
  add_clip("v0", 3, {}, "kitchen", false);                     // removed: unreadable
  const FilterReport rep = filter_silent(&manifest_);
  EXPECT_EQ(rep.stage, "silent");
  EXPECT_EQ(rep.input_count, 4);
  EXPECT_EQ(rep.removed_count, 2);
  EXPECT_EQ(rep.output_count, 2);
  ASSERT_EQ(rep.reasons.size(), 2u);
  EXPECT_EQ(rep.reasons[0].first, "v0/0");
  EXPECT_EQ(rep.reasons[0].second, "silent");
  EXPECT_EQ(rep.reasons[1].first, "v0/3");
  EXPECT_EQ(rep.reasons[1].second, "io");
  EXPECT_EQ(keys(manifest_), (std::set<std::string>{"v0/1", "v0/2"}));
}

TEST_F(CurationFixture, FilterScenarioMatchesBruteForceMembership) {
  const std::vector<std::string> scenarios = {"kitchen", "garage", "banned", "kitchen", "lab"};
  for (int i = 0; i < 5; ++i) add_clip("v0", i, tone(300.0, 0.2), scenarios[static_cast<size_t>(i)]);

  Manifest ident = manifest_;
  EXPECT_EQ(filter_scenario(&ident, {}).removed_count, 0);
  EXPECT_EQ(ident.clips.size(), 5u);

  Manifest all = manifest_;
  EXPECT_EQ(filter_scenario(&all, {"kitchen", "garage", "banned", "lab"}).output_count, 0);

  const std::set<std::string> blocklist = {"banned", "lab"};
  int want_removed = 0;
  for (const auto& c : manifest_.clips) want_removed += blocklist.count(c.scenario) ? 1 : 0;
  const FilterReport rep = filter_scenario(&manifest_, blocklist);
  EXPECT_EQ(rep.removed_count, want_removed);
  EXPECT_EQ(rep.removed_count, 2);
  for (const auto& [key, why] : rep.reasons) EXPECT_EQ(why, "scenario");
}

TEST_F(CurationFixture, FilterTagsThresholdIsStrict) {
  for (int i = 0; i < 4; ++i) add_clip("v0", i, tone(500.0, 0.2));
  const Tagger tagger = [](const Manifest&, const ClipRecord& c) {
    TagResult t;
    t.clip_id = c.key();
    if (c.clip_idx == 0) t.p_speech = 0.9;   // removed (speech)
    if (c.clip_idx == 1) t.p_speech = 0.5;   // kept: strict >
    if (c.clip_idx == 2) t.p_music = 0.51;   // removed (music)
    return t;
  };
  const FilterReport rep = filter_tags(&manifest_, tagger, 0.5);
  EXPECT_EQ(rep.removed_count, 2);
  EXPECT_EQ(rep.reasons[0].first, "v0/0");
  EXPECT_EQ(rep.reasons[0].second, "speech");
  EXPECT_EQ(rep.reasons[1].first, "v0/2");
  EXPECT_EQ(rep.reasons[1].second, "music");
  EXPECT_EQ(keys(manifest_), (std::set<std::string>{"v0/1", "v0/3"}));
}

TEST_F(CurationFixture, TaggerFailureKeepsClipAndLogs) {
  add_clip("v0", 0, tone(500.0, 0.2));
  add_clip("v0", 1, tone(500.0, 0.2));
  const Tagger tagger = [](const Manifest&, const ClipRecord& c) -> TagResult {
    if (c.clip_idx == 0) throw InputError("synthetic tagger failure");
    TagResult t;
    t.p_speech = 1.5;  // out of range -> kept, logged
    return t;
  };
  const FilterReport rep = filter_tags(&manifest_, tagger, 0.5);
  EXPECT_EQ(rep.removed_count, 0);
  ASSERT_EQ(rep.notes.size(), 2u);
  EXPECT_NE(rep.notes[0].find("v0/0"), std::string::npos);
  EXPECT_EQ(manifest_.clips.size(), 2u);
}

TEST_F(CurationFixture, DefaultTaggerFlagsSpeechBandTone) {
  add_clip("v0", 0, tone(200.0, 0.3));  // pure speech-band tone
  const TagResult t = default_tagger(manifest_, manifest_.clips[0]);
  EXPECT_GT(t.p_speech, 0.5);
  const FilterReport rep = filter_tags(&manifest_, default_tagger, 0.5);
  EXPECT_EQ(rep.removed_count, 1);
}

TEST_F(CurationFixture, DefaultTaggerFlagsHarmonicComb) {
  std::vector<float> comb(48000, 0.0f);
  for (int h = 1; h <= 8; ++h) {
    const auto part = tone(220.0 * h, 0.08);
    for (size_t i = 0; i < comb.size(); ++i) comb[i] += part[i];
  }
  add_clip("v0", 0, comb);
  const TagResult t = default_tagger(manifest_, manifest_.clips[0]);
  EXPECT_GT(t.p_music, 0.5);
  EXPECT_LT(t.p_speech, 0.5);
}

TEST_F(CurationFixture, DefaultTaggerKeepsNormalSyntheticClips) {
  const auto clips = synth::gen_long_video(0, 4, 8);
  for (int i = 0; i < 4; ++i) add_clip("v0", i, clips[static_cast<size_t>(i)].mix.samples);
  for (const auto& c : manifest_.clips) {
    const TagResult t = default_tagger(manifest_, c);
    EXPECT_LE(t.p_speech, 0.5) << c.key();
    EXPECT_LE(t.p_music, 0.5) << c.key();
  }
}

TEST_F(CurationFixture, DefaultTaggerThrowsOnShortClip) {
  add_clip("v0", 0, tone(200.0, 0.3, 1000));
  EXPECT_THROW(default_tagger(manifest_, manifest_.clips[0]), InputError);
  // Through the filter it is kept and logged, not removed.
  const FilterReport rep = filter_tags(&manifest_, default_tagger, 0.5);
  EXPECT_EQ(rep.removed_count, 0);
  EXPECT_EQ(rep.notes.size(), 1u);
}

TEST_F(CurationFixture, FilterEnergyUsesStrictFloorAgainstVideoPeak) {
  add_clip("v0", 0, tone(440.0, 1.0));     // video peak
  add_clip("v0", 1, tone(440.0, 1e-3));    // exactly -60 dB -> kept
  add_clip("v0", 2, tone(440.0, 1e-4));    // -80 dB -> removed
  add_clip("v1", 0, tone(440.0, 0.01));    // its own video's peak -> kept
  const FilterReport rep = filter_energy(&manifest_, -60.0);
  EXPECT_EQ(rep.removed_count, 1);
  EXPECT_EQ(rep.reasons[0].first, "v0/2");
  EXPECT_EQ(rep.reasons[0].second, "energy");
  EXPECT_EQ(keys(manifest_), (std::set<std::string>{"v0/0", "v0/1", "v1/0"}));
}

TEST_F(CurationFixture, FilterEnergyRejectsBadFloor)
{
  add_clip("v0", 0, tone(440.0, 0.5));
  EXPECT_THROW(filter_energy(&manifest_, 10.0), InputError);
  EXPECT_THROW(filter_tags(&manifest_, default_tagger, 1.5), InputError);
  EXPECT_THROW(filter_tags(&manifest_, Tagger(), 0.5), InputError);
}

TEST_F(CurationFixture, EmptyManifestGivesFourZeroReports) {
  const CurationResult res = run_pipeline(manifest_, {});
  EXPECT_TRUE(res.manifest.clips.empty());
  ASSERT_EQ(res.reports.size(), 4u);
  for (const auto& r : res.reports) {
    EXPECT_EQ(r.input_count, 0);
    EXPECT_EQ(r.removed_count, 0);
    EXPECT_EQ(r.output_count, 0);
  }
}

TEST_F(CurationFixture, ReportJsonShape) {
  add_clip("v0", 0, std::vector<float>(48000, 0.0f));
  const FilterReport rep = filter_silent(&manifest_);
  const ojson j = rep.to_json();
  EXPECT_EQ(j["stage"], "silent");
  EXPECT_EQ(j["input_count"], 1);
  EXPECT_EQ(j["removed_count"], 1);
  EXPECT_EQ(j["output_count"], 0);
  EXPECT_EQ(j["reasons"]["v0/0"], "silent");
}

// ---------------------------------------------------------------------------
// Whole-pipeline behavior on a generated dataset with planted violations.

class PipelineFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("a2s_pipe_" + std::to_string(::getpid()));
    synth::SynthConfig cfg;
    cfg.out_dir = dir_;
    cfg.n_videos = 12;
    cfg.n_clips = 4;
    cfg.seed = 9;
    cfg.fault_silent = 0.05;
    cfg.fault_speech = 0.05;
    cfg.fault_music = 0.05;
    cfg.fault_low_energy = 0.05;
    cfg.fault_blocked_scenario = 0.05;
    manifest_ = synth::build_dataset(cfg);
    faults_ = ojson::parse(read_text_file(dir_ / "faults.json"));
    config_.blocklist = {synth::kBlockedScenarioName};
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  fs::path dir_;
  Manifest manifest_;
  ojson faults_;
  CurationConfig config_;
};

TEST_F(PipelineFixture, PlantedFaultsAreRemovedAtTheirDesignatedStage) {
  ASSERT_EQ(faults_.size(), 10u);  // 5 kinds x round(0.05 * 48) = 2
  const CurationResult res = run_pipeline(manifest_, config_);

  // Map each fault kind to the stage expected to remove it and its reason.
  const std::map<std::string, std::pair<std::string, std::string>> expect = {
      {"silent", {"silent", "silent"}},
      {"speech", {"tags", "speech"}},
      {"music", {"tags", "music"}},
      {"low_energy", {"energy", "energy"}},
      {"blocked_scenario", {"scenario", "scenario"}},
  };
  std::map<std::string, std::map<std::string, std::string>> removed_by_stage;
  for (const auto& rep : res.reports) {
    for (const auto& [key, why] : rep.reasons) removed_by_stage[rep.stage][key] = why;
  }
  for (const auto& [key, kind] : faults_.items()) {
    const auto& [stage, why] = expect.at(kind.get<std::string>());
    ASSERT_TRUE(removed_by_stage[stage].count(key))
        << key << " (" << kind << ") not removed at stage " << stage;
    EXPECT_EQ(removed_by_stage[stage][key], why) << key;
  }

  // Exactly the planted clips are removed; everything else survives.
  int total_removed = 0;
  for (const auto& rep : res.reports) total_removed += rep.removed_count;
  EXPECT_EQ(total_removed, static_cast<int>(faults_.size()));
  EXPECT_EQ(res.manifest.clips.size(), manifest_.clips.size() - faults_.size());

  // Chain consistency: each stage's input is the previous stage's output.
  EXPECT_EQ(res.reports[0].input_count, static_cast<int>(manifest_.clips.size()));
  for (size_t i = 1; i < res.reports.size(); ++i) {
    EXPECT_EQ(res.reports[i].input_count, res.reports[i - 1].output_count);
  }
}

TEST_F(PipelineFixture, EveryRemovedClipHasExactlyOneStageReason) {
  const CurationResult res = run_pipeline(manifest_, config_);
  std::map<std::string, int> reason_count;
  for (const auto& rep : res.reports) {
    for (const auto& [key, why] : rep.reasons) ++reason_count[key];
  }
  std::set<std::string> survivors;
  for (const auto& c : res.manifest.clips) survivors.insert(c.key());
  for (const auto& c : manifest_.clips) {
    const int n = reason_count.count(c.key()) ? reason_count[c.key()] : 0;
    if (survivors.count(c.key())) {
      EXPECT_EQ(n, 0) << c.key();
    } else {
      EXPECT_EQ(n, 1) << c.key();
    }
  }
}

TEST_F(PipelineFixture, PipelineIsIdempotent) {
  const CurationResult once = run_pipeline(manifest_, config_);
  const CurationResult twice = run_pipeline(once.manifest, config_);
  EXPECT_EQ(twice.manifest.clips.size(), once.manifest.clips.size());
  for (const auto& rep : twice.reports) EXPECT_EQ(rep.removed_count, 0) << rep.stage;
}

TEST_F(PipelineFixture, StageOrderDoesNotChangeSurvivorSet) {
  using Stage = std::function<void(Manifest*)>;
  const Tagger tagger = default_tagger;
  std::vector<Stage> stages = {
      [](Manifest* m) { filter_silent(m); },
      [this](Manifest* m) { filter_scenario(m, config_.blocklist); },
      [&tagger](Manifest* m) { filter_tags(m, tagger, 0.5); },
      [](Manifest* m) { filter_energy(m, -60.0); },
  };
  const auto survivors_for = [&](const std::vector<int>& order) {
    Manifest m = manifest_;
    for (int i : order) stages[static_cast<size_t>(i)](&m);
    std::set<std::string> out;
    for (const auto& c : m.clips) out.insert(c.key());
    return out;
  };
  const std::set<std::string> canonical = survivors_for({0, 1, 2, 3});
  for (const std::vector<int>& order :
       {std::vector<int>{3, 2, 1, 0}, {1, 3, 0, 2}, {2, 0, 3, 1}}) {
    EXPECT_EQ(survivors_for(order), canonical);
  }
}

TEST_F(PipelineFixture, NoViolationsMeansIdentity) {
  synth::SynthConfig cfg;
  cfg.out_dir = dir_ / "clean";
  cfg.n_videos = 4;
  cfg.n_clips = 4;
  const Manifest clean = synth::build_dataset(cfg);
  const CurationResult res = run_pipeline(clean, config_);
  EXPECT_EQ(res.manifest.clips.size(), clean.clips.size());
  for (const auto& rep : res.reports) EXPECT_EQ(rep.removed_count, 0) << rep.stage;
}

}  // namespace
}  // namespace a2s::curation
