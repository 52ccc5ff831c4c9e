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

#include "a2s/synthworld.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "a2s/dsp.hpp"

namespace a2s::synth {
namespace {

namespace fs = std::filesystem;

// Energy-weighted spectral centroid in Hz, the oracle for class separation.
double spectral_centroid_hz(const Waveform& w) {
  std::vector<double> x(w.samples.begin(), w.samples.end());
  const int64_t n = next_pow2(static_cast<int64_t>(x.size()));
  const auto spec = rfft(x, n);
  double num = 0.0, den = 0.0;
  for (size_t k = 1; k < spec.size(); ++k) {
    const double p = std::norm(spec[k]);
    const double f = static_cast<double>(k) * w.sample_rate / static_cast<double>(n);
    num += f * p;
    den += p;
  }
  return den > 0.0 ? num / den : 0.0;
}

// Spectral tilt estimate in dB/octave from two one-octave bands.
double measured_tilt_db_per_oct(const std::vector<float>& samples, int rate) {
  std::vector<double> x(samples.begin(), samples.end());
  const int64_t n = next_pow2(static_cast<int64_t>(x.size()));
  const auto spec = rfft(x, n);
  const auto band = [&](double lo, double hi) {
    double e = 0.0;
    for (size_t k = 1; k < spec.size(); ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(n);
      if (f >= lo && f < hi) e += std::norm(spec[k]);
    }
    return e;
  };
  const double e_lo = band(400.0, 800.0);
  const double e_hi = band(3200.0, 6400.0);
  // Equal-log-width bands three octaves apart; the 8x width ratio cancels in
  // the density estimate: tilt = (10*log10(E_hi/E_lo) - 10*log10(8)) / 3.
  return (10.0 * std::log10(e_hi / e_lo) - 10.0 * std::log10(8.0)) / 3.0;
}

TEST(RenderEvent, ZeroGainIsAllZero) {
  RenderParams p;
  const Waveform w = render_event({0.5, 0.2, 1, 0.0}, p);
  for (float s : w.samples) EXPECT_EQ(s, 0.0f);
}

TEST(RenderEvent, SupportIsExactlyWithinOnsetWindow) {
  RenderParams p;
  const ActionEvent ev{1.0, 0.3, 2, 0.4};
  const Waveform w = render_event(ev, p);
  ASSERT_EQ(w.size(), 48000);
  bool any_nonzero = false;
  for (int64_t i = 0; i < w.size(); ++i) {
    const double t = static_cast<double>(i) / p.sample_rate;
    if (t < ev.onset_s || t > ev.onset_s + ev.dur_s) {
      ASSERT_EQ(w.samples[static_cast<size_t>(i)], 0.0f) << "leak at t=" << t;
    } else if (w.samples[static_cast<size_t>(i)] != 0.0f) {
      any_nonzero = true;
    }
  }
  EXPECT_TRUE(any_nonzero);
}

TEST(RenderEvent, ClassCentroidsDifferByMoreThanOneOctave) {
  RenderParams p;
  const Waveform w0 = render_event({0.5, 0.3, 0, 0.4}, p);
  const Waveform w1 = render_event({0.5, 0.3, 1, 0.4}, p);
  const double c0 = spectral_centroid_hz(w0);
  const double c1 = spectral_centroid_hz(w1);
  EXPECT_GT(c1 / c0, 2.0) << "c0=" << c0 << " c1=" << c1;
}

TEST(RenderEvent, CentroidTracksCarrierForAllClasses) {
  RenderParams p;
  for (int c = 0; c < kMaxClasses; ++c) {
    const Waveform w = render_event({0.5, 0.3, c, 0.4}, p);
    const double centroid = spectral_centroid_hz(w);
    const double carrier = class_carrier_hz(c);
    // The 0.3-amplitude second partial pulls the centroid up by < 20%.
    EXPECT_GT(centroid, 0.9 * carrier);
    EXPECT_LT(centroid, 1.35 * carrier);
  }
}

TEST(RenderEvent, RejectsEventsExceedingClip) {
  RenderParams p;
  EXPECT_THROW(render_event({2.8, 0.4, 0, 0.3}, p), InputError);   // 3.2 > 3.0
  EXPECT_THROW(render_event({-0.1, 0.2, 0, 0.3}, p), InputError);  // negative onset
  EXPECT_THROW(render_event({0.5, 0.04, 0, 0.3}, p), InputError);  // too short
  EXPECT_THROW(render_event({0.5, 0.41, 0, 0.3}, p), InputError);  // too long
  EXPECT_THROW(render_event({0.5, 0.2, 9, 0.3}, p), InputError);   // class out of range
  EXPECT_THROW(render_event({0.5, 0.2, 0, -0.1}, p), InputError);  // negative gain
  EXPECT_NO_THROW(render_event({2.6, 0.4, 0, 0.3}, p));            // exactly at the edge
}

TEST(GenLongVideo, RejectsDegenerateArguments) {
  EXPECT_THROW(gen_long_video(0, 1, 8), InputError);
  EXPECT_THROW(gen_long_video(0, 8, 1), InputError);
  EXPECT_THROW(gen_long_video(0, 8, 9), InputError);
  EXPECT_NO_THROW(gen_long_video(0, 2, 2));
}

TEST(GenLongVideo, AmbientLevelSpreadUnderThreeDb) {
  const auto clips = gen_long_video(0, 8, 8);
  ASSERT_EQ(clips.size(), 8u);
  double lo = 1e9, hi = -1e9;
  for (const auto& c : clips) {
    const double lvl = ambient_level(c.ambient);
    lo = std::min(lo, lvl);
    hi = std::max(hi, lvl);
  }
  EXPECT_LT(hi - lo, 3.0) << "spread " << (hi - lo) << " dB";
}

TEST(GenLongVideo, BedIsStationaryAcrossRecording) {
  const auto clips = gen_long_video(7, 10, 8);
  // Windowed energy std over the whole concatenated ambient bed < 3 dB.
  std::vector<float> bed;
  for (const auto& c : clips) bed.insert(bed.end(), c.ambient.samples.begin(), c.ambient.samples.end());
  const int64_t win = 8000, hop = 2000;
  std::vector<double> energies_db;
  for (int64_t s = 0; s + win <= static_cast<int64_t>(bed.size()); s += hop) {
    double e = 0.0;
    for (int64_t i = s; i < s + win; ++i) e += static_cast<double>(bed[static_cast<size_t>(i)]) * bed[static_cast<size_t>(i)];
    energies_db.push_back(10.0 * std::log10(e / win + 1e-20));
  }
  double mean = 0.0;
  for (double e : energies_db) mean += e;
  mean /= static_cast<double>(energies_db.size());
  double var = 0.0;
  for (double e : energies_db) var += (e - mean) * (e - mean);
  const double sd = std::sqrt(var / static_cast<double>(energies_db.size()));
  EXPECT_LT(sd, 3.0) << "windowed energy std " << sd << " dB";
}

TEST(GenLongVideo, MixtureEqualsActionPlusAmbient) {
  const auto clips = gen_long_video(3, 6, 8);
  for (const auto& c : clips) {
    for (int64_t i = 0; i < c.mix.size(); ++i) {
      const float want = c.action.samples[static_cast<size_t>(i)] + c.ambient.samples[static_cast<size_t>(i)];
      ASSERT_NEAR(c.mix.samples[static_cast<size_t>(i)], want, 1e-6f);
    }
  }
}

TEST(GenLongVideo, MixturePeakBounded) {
  for (uint64_t seed : {0ull, 1ull, 2ull, 3ull, 4ull}) {
    const auto clips = gen_long_video(seed, 8, 8);
    for (const auto& c : clips) {
      for (float s : c.mix.samples) ASSERT_LE(std::abs(s), 1.0f);
    }
  }
}

TEST(GenLongVideo, ZeroGainEventsLeaveMixtureEqualToAmbient) {
  RenderParams p;
  p.event_gain_lo = 0.0;
  p.event_gain_hi = 0.0;
  const auto clips = gen_long_video(11, 4, 2, p);
  for (const auto& c : clips) {
    for (float s : c.action.samples) ASSERT_EQ(s, 0.0f);
    for (int64_t i = 0; i < c.mix.size(); ++i) {
      ASSERT_EQ(c.mix.samples[static_cast<size_t>(i)], c.ambient.samples[static_cast<size_t>(i)]);
    }
  }
}

TEST(GenLongVideo, DifferentSeedsGiveDistinctTiltAndSceneDescriptors) {
  // Find two seeds whose drawn tilts differ by > 1.5 dB/oct, then confirm the
  // rendered spectra and scene descriptors actually differ.
  const auto a = gen_long_video(0, 4, 8);
  const auto b = gen_long_video(1, 4, 8);
  const double tilt_a = a[0].ambient_spec.tilt_db_per_oct;
  const double tilt_b = b[0].ambient_spec.tilt_db_per_oct;
  ASSERT_NE(tilt_a, tilt_b);

  std::vector<float> bed_a, bed_b;
  for (const auto& c : a) bed_a.insert(bed_a.end(), c.ambient.samples.begin(), c.ambient.samples.end());
  for (const auto& c : b) bed_b.insert(bed_b.end(), c.ambient.samples.begin(), c.ambient.samples.end());
  const double est_a = measured_tilt_db_per_oct(bed_a, 16000);
  const double est_b = measured_tilt_db_per_oct(bed_b, 16000);
  EXPECT_NEAR(est_a, tilt_a, 1.0);
  EXPECT_NEAR(est_b, tilt_b, 1.0);
  if (std::abs(tilt_a - tilt_b) > 1.5) {
    EXPECT_GT(std::abs(est_a - est_b), 0.5);
  }

  // Scene descriptor sub-vectors differ between the recordings.
  const int k = 8;
  double diff = 0.0;
  for (int s = 0; s < 15; ++s) {
    diff += std::abs(a[0].video_feats.at(0, k + 1 + s) - b[0].video_feats.at(0, k + 1 + s));
  }
  EXPECT_GT(diff, 0.1);
}

TEST(GenLongVideo, SceneDescriptorDeterministicGivenSeed) {
  const auto a = gen_long_video(5, 4, 8);
  const auto b = gen_long_video(5, 4, 8);
  for (size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].video_feats.data, b[i].video_feats.data);
    ASSERT_EQ(a[i].mix.samples, b[i].mix.samples);
  }
}

TEST(GenLongVideo, EventFramesAlignWithActionSupport) {
  RenderParams p;
  for (uint64_t seed : {0ull, 5ull, 9ull}) {
    const auto clips = gen_long_video(seed, 8, 8, p);
    const double frame_dt = p.clip_s / p.video_frames;
    for (const auto& c : clips) {
      for (int f = 0; f < p.video_frames; ++f) {
        bool active = false;
        for (int k = 0; k < 8; ++k) active = active || c.video_feats.at(f, k) > 0.5f;
        const double f_lo = f * frame_dt, f_hi = f_lo + frame_dt;
        // Nonzero action support inside the frame (exact, by construction).
        bool support = false;
        const int64_t s_lo = static_cast<int64_t>(std::floor(f_lo * p.sample_rate));
        const int64_t s_hi = std::min<int64_t>(c.action.size(), static_cast<int64_t>(std::ceil(f_hi * p.sample_rate)));
        for (int64_t i = s_lo; i < s_hi; ++i) support = support || c.action.samples[static_cast<size_t>(i)] != 0.0f;
        if (support) {
          EXPECT_TRUE(active) << "frame " << f << " has action support but no one-hot";
        }
        if (active) {
          // One-frame (0.2 s) slack in the other direction.
          bool near_support = false;
          const int64_t n_lo = std::max<int64_t>(0, s_lo - static_cast<int64_t>(0.2 * p.sample_rate));
          const int64_t n_hi = std::min<int64_t>(c.action.size(), s_hi + static_cast<int64_t>(0.2 * p.sample_rate));
          for (int64_t i = n_lo; i < n_hi; ++i) near_support = near_support || c.action.samples[static_cast<size_t>(i)] != 0.0f;
          EXPECT_TRUE(near_support) << "frame " << f << " active without nearby action support";
        }
      }
    }
  }
}

TEST(GenLongVideo, LabelsMatchOneHotColumnAndEvents) {
  const auto clips = gen_long_video(2, 8, 8);
  for (const auto& c : clips) {
    if (c.events.empty()) {
      EXPECT_EQ(c.label, -1);
      continue;
    }
    ASSERT_GE(c.label, 0);
    ASSERT_LT(c.label, 8);
    for (const auto& ev : c.events) EXPECT_EQ(ev.class_id, c.label);
    bool saw_hot = false;
    for (int f = 0; f < c.video_feats.dim(0); ++f) {
      for (int k = 0; k < 8; ++k) {
        if (c.video_feats.at(f, k) > 0.5f) {
          EXPECT_EQ(k, c.label);
          saw_hot = true;
        }
      }
    }
    EXPECT_TRUE(saw_hot);
  }
}

TEST(GenLongVideo, NeighborOrderingByTemporalDistanceTiesEarlier) {
  const auto clips = gen_long_video(0, 8, 8);
  const std::vector<int> want = {2, 4, 1, 5, 0, 6, 7};
  EXPECT_EQ(clips[3].neighbor_idxs, want);
  const std::vector<int> want0 = {1, 2, 3, 4, 5, 6, 7};
  EXPECT_EQ(clips[0].neighbor_idxs, want0);
  const std::vector<int> want7 = {6, 5, 4, 3, 2, 1, 0};
  EXPECT_EQ(clips[7].neighbor_idxs, want7);
}

TEST(GenLongVideo, FeatureShapeMatchesParams) {
  RenderParams p;
  p.video_frames = 24;
  const auto clips = gen_long_video(1, 3, 4, p);
  ASSERT_EQ(clips[0].video_feats.dim(0), 24);
  ASSERT_EQ(clips[0].video_feats.dim(1), 4 + 1 + 15);
}

// ---------------------------------------------------------------------------

class BuildDatasetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("a2s_synth_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  fs::path dir_;
};

TEST_F(BuildDatasetTest, FiftyVideosByEightClipsGiveFourHundredRows) {
  SynthConfig cfg;
  cfg.out_dir = dir_ / "d50";
  cfg.n_videos = 50;
  cfg.n_clips = 8;
  const Manifest m = build_dataset(cfg);
  EXPECT_EQ(m.clips.size(), 400u);
  const Manifest back = load_manifest(cfg.out_dir / "manifest.jsonl");
  EXPECT_EQ(back.clips.size(), 400u);
}

TEST_F(BuildDatasetTest, SameSeedTwiceIsByteIdentical) {
  SynthConfig cfg;
  cfg.n_videos = 4;
  cfg.n_clips = 4;
  cfg.seed = 42;
  cfg.fault_silent = 0.1;  // faults must be deterministic too
  cfg.out_dir = dir_ / "a";
  build_dataset(cfg);
  cfg.out_dir = dir_ / "b";
  build_dataset(cfg);
  EXPECT_EQ(read_text_file(dir_ / "a/manifest.jsonl"), read_text_file(dir_ / "b/manifest.jsonl"));
  EXPECT_EQ(read_text_file(dir_ / "a/faults.json"), read_text_file(dir_ / "b/faults.json"));
  const Manifest m = load_manifest(dir_ / "a/manifest.jsonl");
  for (const auto& rel :
       {m.clips[0].wav_path, m.clips[5].gt_ambient_path, m.clips[9].feat_path}) {
    std::ifstream fa(dir_ / "a" / rel, std::ios::binary);
    std::ifstream fb(dir_ / "b" / rel, std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    ASSERT_FALSE(ba.empty());
    EXPECT_EQ(ba, bb) << rel;
  }
}

TEST_F(BuildDatasetTest, SplitsPartitionVideosWithRequestedFractions) {
  SynthConfig cfg;
  cfg.out_dir = dir_ / "splits";
  cfg.n_videos = 20;
  cfg.n_clips = 2;
  cfg.train_frac = 0.8;
  cfg.val_frac = 0.1;
  const Manifest m = build_dataset(cfg);
  std::map<std::string, std::set<std::string>> split_videos;
  for (const auto& c : m.clips) split_videos[c.split].insert(c.video_id);
  EXPECT_EQ(split_videos["train"].size(), 16u);
  EXPECT_EQ(split_videos["val"].size(), 2u);
  EXPECT_EQ(split_videos["test"].size(), 2u);
  // No video id appears in two splits.
  for (const auto& [sa, va] : split_videos) {
    for (const auto& [sb, vb] : split_videos) {
      if (sa == sb) continue;
      for (const auto& v : va) EXPECT_EQ(vb.count(v), 0u) << v << " straddles " << sa << "/" << sb;
    }
  }
}

TEST_F(BuildDatasetTest, AdditivityHoldsAfterPcm16RoundTrip) {
  SynthConfig cfg;
  cfg.out_dir = dir_ / "add";
  cfg.n_videos = 2;
  cfg.n_clips = 4;
  const Manifest m = build_dataset(cfg);
  for (const auto& c : m.clips) {
    int rate = 0;
    const auto mix = read_wav(m.resolve(c.wav_path), &rate);
    const auto act = read_wav(m.resolve(c.gt_action_path), &rate);
    const auto amb = read_wav(m.resolve(c.gt_ambient_path), &rate);
    ASSERT_EQ(rate, 16000);
    ASSERT_EQ(mix.size(), act.size());
    ASSERT_EQ(mix.size(), amb.size());
    for (size_t i = 0; i < mix.size(); ++i) {
      ASSERT_NEAR(mix[i], act[i] + amb[i], 1e-6f) << c.key() << " sample " << i;
    }
  }
}

TEST_F(BuildDatasetTest, AmbientSpreadHoldsOnFiles) {
  SynthConfig cfg;
  cfg.out_dir = dir_ / "spread";
  cfg.n_videos = 3;
  cfg.n_clips = 6;
  const Manifest m = build_dataset(cfg);
  for (int v = 0; v < 3; ++v) {
    char vid[16];
    std::snprintf(vid, sizeof(vid), "vid%04d", v);
    double lo = 1e9, hi = -1e9;
    for (const auto& c : m.recording(vid)) {
      int rate = 0;
      Waveform w;
      w.samples = read_wav(m.resolve(c.gt_ambient_path), &rate);
      w.sample_rate = rate;
      const double lvl = ambient_level(w);
      lo = std::min(lo, lvl);
      hi = std::max(hi, lvl);
    }
    EXPECT_LT(hi - lo, 3.0) << vid;
  }
}

TEST_F(BuildDatasetTest, FaultInjectionProducesDesignatedViolations) {
  SynthConfig cfg;
  cfg.out_dir = dir_ / "faults";
  cfg.n_videos = 12;
  cfg.n_clips = 4;
  cfg.seed = 3;
  cfg.fault_silent = 0.05;
  cfg.fault_low_energy = 0.05;
  cfg.fault_blocked_scenario = 0.05;
  const Manifest m = build_dataset(cfg);
  const ojson log = ojson::parse(read_text_file(cfg.out_dir / "faults.json"));
  EXPECT_EQ(log.size(), 6u);  // 3 kinds x round(0.05 * 48) = 2 each

  std::map<std::string, float> video_peak;
  std::map<std::string, float> clip_peak;
  for (const auto& c : m.clips) {
    int rate = 0;
    const auto s = read_wav(m.resolve(c.wav_path), &rate);
    float pk = 0.0f;
    for (float x : s) pk = std::max(pk, std::abs(x));
    clip_peak[c.key()] = pk;
    video_peak[c.video_id] = std::max(video_peak[c.video_id], pk);
  }
  int n_silent = 0, n_low = 0, n_blocked = 0;
  for (const auto& [key, kind] : log.items()) {
    const auto slash = key.find('/');
    const ClipRecord* rec = m.find(key.substr(0, slash), std::stoi(key.substr(slash + 1)));
    ASSERT_NE(rec, nullptr) << key;
    if (kind == "silent") {
      ++n_silent;
      EXPECT_EQ(clip_peak[key], 0.0f);
    } else if (kind == "low_energy") {
      ++n_low;
      EXPECT_GT(clip_peak[key], 0.0f);
      EXPECT_LT(peak_db_ratio(clip_peak[key], video_peak[rec->video_id]), -60.0);
    } else if (kind == "blocked_scenario") {
      ++n_blocked;
      EXPECT_EQ(rec->scenario, kBlockedScenarioName);
    }
  }
  EXPECT_EQ(n_silent, 2);
  EXPECT_EQ(n_low, 2);
  EXPECT_EQ(n_blocked, 2);
}

TEST_F(BuildDatasetTest, RejectsBadConfig) {
  SynthConfig cfg;
  cfg.out_dir = dir_ / "bad";
  cfg.n_videos = 0;
  EXPECT_THROW(build_dataset(cfg), InputError);
  cfg.n_videos = 2;
  cfg.n_clips = 1;
  EXPECT_THROW(build_dataset(cfg), InputError);
  cfg.n_clips = 2;
  cfg.train_frac = 0.5;
  cfg.val_frac = 0.6;
  EXPECT_THROW(build_dataset(cfg), InputError);
}

}  // namespace
}  // namespace a2s::synth
