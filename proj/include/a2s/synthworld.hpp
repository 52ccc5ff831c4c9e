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
// Synthetic dataset generator: long recordings made of consecutive clips that
// share one stationary ambient noise bed, with short class-parametric action
// transients and a synthetic video feature stream. Ground-truth action and
// ambient tracks are written alongside every mixture so separation metrics
// have an exact reference.

#ifndef A2S_SYNTHWORLD_HPP_
#define A2S_SYNTHWORLD_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "a2s/common.hpp"
#include "a2s/dsp.hpp"
#include "a2s/fft.hpp"
#include "a2s/io.hpp"
#include "a2s/manifest.hpp"
#include "a2s/rng.hpp"
#include "a2s/tensor.hpp"

namespace a2s::synth {

constexpr int kMaxClasses = 8;

// One carrier frequency per action class, spread so adjacent classes are
// roughly an octave apart and all stay below Nyquist at 16 kHz.
inline double class_carrier_hz(int class_id) {
  static constexpr double kCarriers[kMaxClasses] = {180.0,  420.0,  900.0,  1800.0,
                                                    3200.0, 4600.0, 6000.0, 7200.0};
  if (class_id < 0 || class_id >= kMaxClasses) {
    throw InputError("class_id out of range: " + std::to_string(class_id));
  }
  return kCarriers[class_id];
}

struct AmbientSpec {
  double level_db = -30.0;        // target mean power in dBFS
  double tilt_db_per_oct = 0.0;   // spectral slope relative to 1 kHz
  uint64_t seed = 0;              // noise realization seed

  void validate() const {
    if (!(level_db >= -70.0 && level_db <= -10.0)) {
      throw InputError("AmbientSpec.level_db must lie in [-70, -10], got " +
                       std::to_string(level_db));
    }
    if (!std::isfinite(tilt_db_per_oct)) throw InputError("AmbientSpec.tilt must be finite");
  }
};

struct ActionEvent {
  double onset_s = 0.0;
  double dur_s = 0.1;
  int class_id = 0;
  double gain = 0.3;
};

struct RenderParams {
  int sample_rate = 16000;
  double clip_s = 3.0;
  int video_frames = 16;  // T_v; ~5 fps for a 3 s clip
  int scene_dim = 15;
  double scene_noise = 0.12;  // per-clip jitter on the scene descriptor
  double event_gain_lo = 0.15;
  double event_gain_hi = 0.45;

  int64_t clip_samples() const {
    return static_cast<int64_t>(std::llround(clip_s * sample_rate));
  }
};

inline void validate_event(const ActionEvent& ev, double clip_s, int n_classes) {
  if (!(ev.dur_s >= 0.05 && ev.dur_s <= 0.4)) {
    throw InputError("event dur_s must lie in [0.05, 0.4], got " + std::to_string(ev.dur_s));
  }
  if (ev.onset_s < 0.0) throw InputError("event onset_s must be >= 0");
  if (ev.onset_s + ev.dur_s > clip_s) {
    throw InputError("event exceeds clip: onset " + std::to_string(ev.onset_s) + " + dur " +
                     std::to_string(ev.dur_s) + " > " + std::to_string(clip_s));
  }
  if (ev.class_id < 0 || ev.class_id >= n_classes) {
    throw InputError("event class_id " + std::to_string(ev.class_id) + " not < K=" +
                     std::to_string(n_classes));
  }
  if (!(ev.gain >= 0.0) || !std::isfinite(ev.gain)) {
    throw InputError("event gain must be finite and >= 0");
  }
}

// Renders one transient into a zero clip-length buffer. The waveform is a
// decaying two-partial tone gated to exactly [onset, onset+dur].
inline Waveform render_event(const ActionEvent& ev, const RenderParams& p,
                             int n_classes = kMaxClasses) {
  validate_event(ev, p.clip_s, n_classes);
  Waveform w = Waveform::zeros(p.clip_samples(), p.sample_rate);
  const double f = class_carrier_hz(ev.class_id);
  const int64_t first = static_cast<int64_t>(std::ceil(ev.onset_s * p.sample_rate));
  const int64_t last = static_cast<int64_t>(std::floor((ev.onset_s + ev.dur_s) * p.sample_rate));
  const double tau = ev.dur_s / 4.0;
  for (int64_t i = first; i <= std::min<int64_t>(last, w.size() - 1); ++i) {
    const double t = static_cast<double>(i) / p.sample_rate - ev.onset_s;
    if (t < 0.0 || t > ev.dur_s) continue;
    const double attack = std::min(1.0, t / 0.005);
    const double decay = std::exp(-t / tau);
    const double release = std::min(1.0, (ev.dur_s - t) / (0.05 * ev.dur_s));
    const double carrier = std::sin(2.0 * M_PI * f * t) + 0.3 * std::sin(4.0 * M_PI * f * t + 0.7);
    w.samples[static_cast<size_t>(i)] =
        static_cast<float>(ev.gain * attack * decay * std::min(release, 1.0) * carrier);
  }
  return w;
}

namespace detail {

// Stationary colored noise with power slope `tilt` dB/octave about 1 kHz,
// synthesized by overlap-adding FFT-shaped white noise blocks under a
// sqrt-Hann window (squared windows at 50% overlap sum to exactly one, so the
// stream has constant power and no block seams).
inline std::vector<double> render_ambient_bed(const AmbientSpec& spec, int64_t n_samples,
                                              int sample_rate) {
  spec.validate();
  const int64_t block = 32768;
  const int64_t hop = block / 2;
  std::vector<double> window(static_cast<size_t>(block));
  for (int64_t i = 0; i < block; ++i) {
    const double hann = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / static_cast<double>(block)));
    window[static_cast<size_t>(i)] = std::sqrt(hann);
  }
  const int64_t n_bins = block / 2 + 1;
  std::vector<double> gain(static_cast<size_t>(n_bins));
  const double expo = spec.tilt_db_per_oct / (20.0 * std::log10(2.0));
  for (int64_t k = 0; k < n_bins; ++k) {
    const double f = std::max(20.0, k * static_cast<double>(sample_rate) / block);
    gain[static_cast<size_t>(k)] = std::pow(f / 1000.0, expo);
  }
  gain[0] = 0.0;  // zero-mean output

  Rng rng(spec.seed);
  std::vector<double> bed(static_cast<size_t>(n_samples), 0.0);
  std::vector<double> white(static_cast<size_t>(block));
  for (int64_t start = -hop; start < n_samples; start += hop) {
    for (auto& x : white) x = rng.gaussian();
    std::vector<std::complex<double>> spec_bins = rfft(white, block);
    for (int64_t k = 0; k < n_bins; ++k) spec_bins[static_cast<size_t>(k)] *= gain[static_cast<size_t>(k)];
    std::vector<double> shaped = irfft(spec_bins, block);
    const int64_t lo = std::max<int64_t>(0, -start);
    const int64_t hi = std::min<int64_t>(block, n_samples - start);
    for (int64_t i = lo; i < hi; ++i) {
      bed[static_cast<size_t>(start + i)] += shaped[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
    }
  }

  double sumsq = 0.0;
  for (double x : bed) sumsq += x * x;
  const double rms = std::sqrt(sumsq / std::max<int64_t>(1, n_samples));
  const double target = std::pow(10.0, spec.level_db / 20.0);
  const double scale = rms > 0.0 ? target / rms : 0.0;
  for (auto& x : bed) x *= scale;
  return bed;
}

}  // namespace detail

// Deterministic linear map from (level_db, tilt) to the scene-descriptor
// space. The projection matrix is fixed (seeded constants), so two ambient
// specs always map to the same base descriptor.
inline std::vector<double> scene_descriptor_base(const AmbientSpec& spec, int dim) {
  Rng proj(0xd35c21b7ULL);
  const double level_n = (spec.level_db + 37.0) / 15.0;
  const double tilt_n = (spec.tilt_db_per_oct + 1.5) / 4.5;
  std::vector<double> out(static_cast<size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    const double w0 = proj.uniform(-1.0, 1.0);
    const double w1 = proj.uniform(-1.0, 1.0);
    const double b = proj.uniform(-0.3, 0.3);
    out[static_cast<size_t>(i)] = std::tanh(w0 * level_n + w1 * tilt_n + b);
  }
  return out;
}

struct RenderedClip {
  std::string video_id;
  int clip_idx = 0;
  Waveform mix;
  Waveform action;
  Waveform ambient;
  Tensor video_feats;  // (T_v, K + 1 + scene_dim)
  int label = -1;
  std::vector<int> neighbor_idxs;
  std::string scenario;
  AmbientSpec ambient_spec;
  std::vector<ActionEvent> events;
};

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> kNames = {"kitchen", "workshop", "street",  "forest",
                                                  "office",  "garage",   "rooftop", "basement"};
  return kNames;
}

// Generates one long recording sliced into `n_clips` consecutive clips. All
// clips share a single ambient realization; each clip carries 0-3 transient
// events of one class. Video features encode per-frame event activity (class
// one-hot), event progress (onset ramp), and a noisy scene descriptor that
// correlates with the ambient spec.
inline std::vector<RenderedClip> gen_long_video(uint64_t seed, int n_clips, int n_classes,
                                                const RenderParams& p = {}) {
  if (n_clips < 2) throw InputError("gen_long_video requires n_clips >= 2 for neighbor sampling");
  if (n_classes < 2 || n_classes > kMaxClasses) {
    throw InputError("gen_long_video requires 2 <= K <= " + std::to_string(kMaxClasses));
  }
  Rng rng(splitmix64(seed ^ 0x10e6a1dULL));
  AmbientSpec spec;
  spec.level_db = rng.uniform(-52.0, -22.0);
  spec.tilt_db_per_oct = rng.uniform(-6.0, 3.0);
  spec.seed = rng.raw();
  const std::string scenario =
      scenario_names()[rng.uniform_int(static_cast<uint64_t>(scenario_names().size()))];

  const int64_t clip_n = p.clip_samples();
  const std::vector<double> bed =
      detail::render_ambient_bed(spec, clip_n * n_clips, p.sample_rate);
  const std::vector<double> scene_base = scene_descriptor_base(spec, p.scene_dim);
  const int d_v = n_classes + 1 + p.scene_dim;
  const double frame_dt = p.clip_s / p.video_frames;

  std::vector<RenderedClip> clips(static_cast<size_t>(n_clips));
  for (int ci = 0; ci < n_clips; ++ci) {
    RenderedClip& clip = clips[static_cast<size_t>(ci)];
    clip.clip_idx = ci;
    clip.scenario = scenario;
    clip.ambient_spec = spec;

    const double u = rng.uniform();
    int n_events = u < 0.10 ? 0 : u < 0.55 ? 1 : u < 0.85 ? 2 : 3;
    const int clip_class = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_classes)));
    clip.action = Waveform::zeros(clip_n, p.sample_rate);
    for (int e = 0; e < n_events; ++e) {
      ActionEvent ev;
      ev.class_id = clip_class;
      ev.dur_s = rng.uniform(0.05, 0.4);
      ev.onset_s = rng.uniform(0.02, p.clip_s - ev.dur_s - 0.02);
      ev.gain = rng.uniform(p.event_gain_lo, p.event_gain_hi);
      clip.events.push_back(ev);
      const Waveform one = render_event(ev, p, n_classes);
      for (int64_t i = 0; i < clip_n; ++i) clip.action.samples[static_cast<size_t>(i)] += one.samples[static_cast<size_t>(i)];
    }
    std::sort(clip.events.begin(), clip.events.end(),
              [](const ActionEvent& a, const ActionEvent& b) { return a.onset_s < b.onset_s; });
    clip.label = n_events > 0 ? clip_class : -1;

    clip.ambient = Waveform::zeros(clip_n, p.sample_rate);
    clip.mix = Waveform::zeros(clip_n, p.sample_rate);
    for (int64_t i = 0; i < clip_n; ++i) {
      const float amb = static_cast<float>(bed[static_cast<size_t>(ci * clip_n + i)]);
      clip.ambient.samples[static_cast<size_t>(i)] = amb;
      clip.mix.samples[static_cast<size_t>(i)] = amb + clip.action.samples[static_cast<size_t>(i)];
    }

    // Scene descriptor jitter is a deterministic function of (ambient seed,
    // clip index) so reruns are byte-identical.
    Rng jitter(splitmix64(spec.seed ^ (0x5ce9eULL + static_cast<uint64_t>(ci) * 0x9e3779b97f4a7c15ULL)));
    std::vector<double> scene(scene_base);
    for (auto& s : scene) s += p.scene_noise * jitter.gaussian();

    clip.video_feats = Tensor::zeros({p.video_frames, d_v});
    for (int fidx = 0; fidx < p.video_frames; ++fidx) {
      const double f_lo = fidx * frame_dt;
      const double f_hi = f_lo + frame_dt;
      const double f_center = f_lo + 0.5 * frame_dt;
      double ramp = 0.0;
      bool active = false;
      for (const ActionEvent& ev : clip.events) {
        if (ev.onset_s < f_hi && ev.onset_s + ev.dur_s > f_lo) {
          active = true;
          ramp = std::max(ramp, std::clamp((f_center - ev.onset_s) / ev.dur_s, 0.0, 1.0));
        }
      }
      if (active) clip.video_feats.at(fidx, clip_class) = 1.0f;
      clip.video_feats.at(fidx, n_classes) = static_cast<float>(ramp);
      for (int s = 0; s < p.scene_dim; ++s) {
        clip.video_feats.at(fidx, n_classes + 1 + s) = static_cast<float>(scene[static_cast<size_t>(s)]);
      }
    }
  }

  // Keep mixture peak <= 1 without disturbing within-recording level spread:
  // rescale the whole recording if any clip would clip.
  float peak = 0.0f;
  for (const auto& c : clips) {
    for (float s : c.mix.samples) peak = std::max(peak, std::abs(s));
  }
  if (peak > 0.99f) {
    const float s = 0.99f / peak;
    for (auto& c : clips) {
      for (auto& x : c.mix.samples) x *= s;
      for (auto& x : c.action.samples) x *= s;
      for (auto& x : c.ambient.samples) x *= s;
    }
  }

  for (int ci = 0; ci < n_clips; ++ci) {
    auto& nb = clips[static_cast<size_t>(ci)].neighbor_idxs;
    for (int j = 0; j < n_clips; ++j) {
      if (j != ci) nb.push_back(j);
    }
    std::sort(nb.begin(), nb.end(), [ci](int a, int b) {
      const int da = std::abs(a - ci), db = std::abs(b - ci);
      return da != db ? da < db : a < b;
    });
  }
  return clips;
}

// ---------------------------------------------------------------------------
// Dataset writer

enum class FaultKind { kNone, kSilent, kSpeech, kMusic, kLowEnergy, kBlockedScenario };

inline const char* fault_name(FaultKind k) {
  switch (k) {
    case FaultKind::kSilent: return "silent";
    case FaultKind::kSpeech: return "speech";
    case FaultKind::kMusic: return "music";
    case FaultKind::kLowEnergy: return "low_energy";
    case FaultKind::kBlockedScenario: return "blocked_scenario";
    default: return "none";
  }
}

constexpr const char* kBlockedScenarioName = "banned_rig";

struct SynthConfig {
  std::filesystem::path out_dir;
  uint64_t seed = 0;
  int n_videos = 50;
  int n_clips = 8;
  int n_classes = 8;
  double train_frac = 0.8;
  double val_frac = 0.1;
  RenderParams render;
  // Fractions of clips mutated into curation-stage violations (0 disables).
  double fault_silent = 0.0;
  double fault_speech = 0.0;
  double fault_music = 0.0;
  double fault_low_energy = 0.0;
  double fault_blocked_scenario = 0.0;

  void validate() const {
    if (n_videos < 1) throw InputError("n_videos must be >= 1");
    if (n_clips < 2) throw InputError("n_clips must be >= 2");
    if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0) {
      throw InputError("split fractions must satisfy 0 < train, 0 <= val, train+val < 1");
    }
    for (double f : {fault_silent, fault_speech, fault_music, fault_low_energy,
                     fault_blocked_scenario}) {
      if (f < 0.0 || f > 0.5) throw InputError("fault fractions must lie in [0, 0.5]");
    }
  }
};

namespace detail {

inline int32_t quantize_i16(float x) {
  const double clamped = std::clamp(static_cast<double>(x), -1.0, 1.0);
  return static_cast<int32_t>(std::lrint(clamped * 32767.0));
}

// Mutates a rendered clip into the requested violation. Tracks stay additive.
inline void apply_fault(RenderedClip* clip, FaultKind kind, const RenderParams& p) {
  const int64_t n = clip->mix.size();
  switch (kind) {
    case FaultKind::kSilent:
      std::fill(clip->mix.samples.begin(), clip->mix.samples.end(), 0.0f);
      std::fill(clip->action.samples.begin(), clip->action.samples.end(), 0.0f);
      std::fill(clip->ambient.samples.begin(), clip->ambient.samples.end(), 0.0f);
      break;
    case FaultKind::kSpeech:
      // Sustained low-band tone complex (speech-band energy dominates).
      for (int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / p.sample_rate;
        double v = 0.0;
        for (double f : {130.0, 210.0, 290.0, 370.0}) v += 0.15 * std::sin(2.0 * M_PI * f * t);
        clip->action.samples[static_cast<size_t>(i)] += static_cast<float>(v);
        clip->mix.samples[static_cast<size_t>(i)] += static_cast<float>(v);
      }
      break;
    case FaultKind::kMusic:
      // Sustained harmonic comb on a 220 Hz fundamental.
      for (int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / p.sample_rate;
        double v = 0.0;
        for (int h = 1; h <= 8; ++h) v += 0.08 * std::sin(2.0 * M_PI * 220.0 * h * t + 0.1 * h);
        clip->action.samples[static_cast<size_t>(i)] += static_cast<float>(v);
        clip->mix.samples[static_cast<size_t>(i)] += static_cast<float>(v);
      }
      break;
    case FaultKind::kLowEnergy: {
      // Not digitally silent, but >= 60 dB below the recording's peak.
      const float s = 3e-4f;
      for (auto& x : clip->mix.samples) x *= s;
      for (auto& x : clip->action.samples) x *= s;
      for (auto& x : clip->ambient.samples) x *= s;
      break;
    }
    case FaultKind::kBlockedScenario:
      clip->scenario = kBlockedScenarioName;
      break;
    case FaultKind::kNone:
      break;
  }
}

}  // namespace detail

// Writes WAVs (mixture + ground-truth action/ambient), per-clip feature
// tensors, a JSONL manifest with splits by video_id, and a fault log. The
// ambient ground truth is stored as the PCM16 difference mixture - action so
// additivity survives quantization exactly.
inline Manifest build_dataset(const SynthConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out = cfg.out_dir;
  std::error_code ec;
  fs::create_directories(out / "wav", ec);
  fs::create_directories(out / "gt", ec);
  fs::create_directories(out / "feats", ec);
  if (!fs::exists(out / "wav")) throw IoError("cannot create dataset dir: " + out.string());

  Rng seed_rng(splitmix64(cfg.seed ^ 0xda7a5e7ULL));
  std::vector<uint64_t> video_seeds(static_cast<size_t>(cfg.n_videos));
  for (auto& s : video_seeds) s = seed_rng.raw();

  // Split assignment by video id: no recording straddles splits.
  std::vector<int> order(static_cast<size_t>(cfg.n_videos));
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(splitmix64(cfg.seed ^ 0x5b117a11ULL));
  split_rng.shuffle(order);
  std::vector<std::string> split_of(static_cast<size_t>(cfg.n_videos), "train");
  int n_train = static_cast<int>(std::lround(cfg.train_frac * cfg.n_videos));
  int n_val = static_cast<int>(std::lround(cfg.val_frac * cfg.n_videos));
  if (cfg.n_videos >= 3) {
    n_train = std::clamp(n_train, 1, cfg.n_videos - 2);
    n_val = std::clamp(n_val, 1, cfg.n_videos - n_train - 1);
  } else {
    n_train = std::min(n_train, cfg.n_videos);
    n_val = std::min(n_val, cfg.n_videos - n_train);
  }
  for (int i = 0; i < cfg.n_videos; ++i) {
    const int v = order[static_cast<size_t>(i)];
    split_of[static_cast<size_t>(v)] = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
  }

  // Deterministic fault assignment over the flat clip list.
  const int total_clips = cfg.n_videos * cfg.n_clips;
  std::vector<FaultKind> fault_of(static_cast<size_t>(total_clips), FaultKind::kNone);
  {
    std::vector<int> clip_order(static_cast<size_t>(total_clips));
    std::iota(clip_order.begin(), clip_order.end(), 0);
    Rng fault_rng(splitmix64(cfg.seed ^ 0xfa17ULL));
    fault_rng.shuffle(clip_order);
    size_t cursor = 0;
    const auto take = [&](double frac, FaultKind kind) {
      const int n = static_cast<int>(std::lround(frac * total_clips));
      for (int i = 0; i < n && cursor < clip_order.size(); ++i, ++cursor) {
        fault_of[static_cast<size_t>(clip_order[cursor])] = kind;
      }
    };
    take(cfg.fault_silent, FaultKind::kSilent);
    take(cfg.fault_speech, FaultKind::kSpeech);
    take(cfg.fault_music, FaultKind::kMusic);
    take(cfg.fault_low_energy, FaultKind::kLowEnergy);
    take(cfg.fault_blocked_scenario, FaultKind::kBlockedScenario);
  }

  Manifest manifest;
  manifest.dir = out;
  ojson fault_log = ojson::object();
  char name[64];

  for (int v = 0; v < cfg.n_videos; ++v) {
    std::snprintf(name, sizeof(name), "vid%04d", v);
    const std::string video_id = name;
    std::vector<RenderedClip> clips =
        gen_long_video(video_seeds[static_cast<size_t>(v)], cfg.n_clips, cfg.n_classes, cfg.render);
    for (int ci = 0; ci < cfg.n_clips; ++ci) {
      RenderedClip& clip = clips[static_cast<size_t>(ci)];
      clip.video_id = video_id;
      const FaultKind fk = fault_of[static_cast<size_t>(v * cfg.n_clips + ci)];
      if (fk != FaultKind::kNone) {
        detail::apply_fault(&clip, fk, cfg.render);
        fault_log[video_id + "/" + std::to_string(ci)] = fault_name(fk);
      }

      std::snprintf(name, sizeof(name), "%s_%03d", video_id.c_str(), ci);
      const std::string stem = name;
      ClipRecord rec;
      rec.video_id = video_id;
      rec.clip_idx = ci;
      rec.wav_path = "wav/" + stem + ".wav";
      rec.feat_path = "feats/" + stem + ".a2st";
      rec.label = clip.label;
      rec.split = split_of[static_cast<size_t>(v)];
      rec.neighbor_idxs = clip.neighbor_idxs;
      rec.gt_action_path = "gt/" + stem + ".action.wav";
      rec.gt_ambient_path = "gt/" + stem + ".ambient.wav";
      rec.scenario = clip.scenario;

      // PCM16-exact additivity: ambient is written as the quantized-mixture
      // minus quantized-action difference.
      const int64_t n = clip.mix.size();
      std::vector<float> amb_q(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) {
        const int32_t mq = detail::quantize_i16(clip.mix.samples[static_cast<size_t>(i)]);
        const int32_t aq = detail::quantize_i16(clip.action.samples[static_cast<size_t>(i)]);
        amb_q[static_cast<size_t>(i)] = static_cast<float>(mq - aq) / 32767.0f;
      }
      write_wav(out / rec.wav_path, clip.mix.samples, cfg.render.sample_rate);
      write_wav(out / rec.gt_action_path, clip.action.samples, cfg.render.sample_rate);
      write_wav(out / rec.gt_ambient_path, amb_q, cfg.render.sample_rate);
      save_tensor(out / rec.feat_path, clip.video_feats);
      manifest.clips.push_back(std::move(rec));
    }
  }

  save_manifest(out / "manifest.jsonl", manifest);
  write_text_file(out / "faults.json", fault_log.dump(2) + "\n");
  return manifest;
}

}  // namespace a2s::synth

#endif  // A2S_SYNTHWORLD_HPP_
