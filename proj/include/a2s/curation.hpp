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
// Four-stage clip curation pipeline: silence -> scenario blocklist -> audio
// tags (speech/music) -> relative energy. Each stage is an independent
// predicate over clips, so the final survivor set does not depend on stage
// order; the canonical order just attributes each removal to one stage.

#ifndef A2S_CURATION_HPP_
#define A2S_CURATION_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "a2s/common.hpp"
#include "a2s/dsp.hpp"
#include "a2s/fft.hpp"
#include "a2s/io.hpp"
#include "a2s/manifest.hpp"

namespace a2s::curation {

struct TagResult {
  std::string clip_id;
  double p_speech = 0.0;
  double p_music = 0.0;
};

// Maps one manifest clip to tag probabilities; may throw on failure (the
// pipeline keeps the clip and logs the failure).
using Tagger = std::function<TagResult(const Manifest&, const ClipRecord&)>;

struct FilterReport {
  std::string stage;
  int input_count = 0;
  int removed_count = 0;
  int output_count = 0;
  std::vector<std::pair<std::string, std::string>> reasons;  // (clip key, reason)
  std::vector<std::string> notes;                            // non-fatal issues, e.g. tagger failures

  ojson to_json() const {
    ojson j;
    j["stage"] = stage;
    j["input_count"] = input_count;
    j["removed_count"] = removed_count;
    j["output_count"] = output_count;
    ojson r = ojson::object();
    for (const auto& [key, why] : reasons) r[key] = why;
    j["reasons"] = r;
    j["notes"] = notes;
    return j;
  }
};

inline ojson reports_to_json(const std::vector<FilterReport>& reports) {
  ojson arr = ojson::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  return arr;
}

// Spans [t - margin, t + margin] around action timestamps; spans that would
// poke past either end of the recording are dropped rather than clipped.
inline std::vector<std::pair<double, double>> extract_clips(double recording_dur_s,
                                                            const std::vector<double>& timestamps,
                                                            double margin_s = 1.5) {
  if (!(recording_dur_s > 0.0)) throw InputError("recording duration must be positive");
  if (!(margin_s > 0.0)) throw InputError("margin_s must be positive");
  std::vector<std::pair<double, double>> spans;
  for (double t : timestamps) {
    if (t < 0.0 || t > recording_dur_s) {
      throw InputError("timestamp " + std::to_string(t) + " outside recording of " +
                       std::to_string(recording_dur_s) + " s");
    }
    const double lo = t - margin_s;
    const double hi = t + margin_s;
    if (lo < 0.0 || hi > recording_dur_s) continue;
    spans.emplace_back(lo, hi);
  }
  return spans;
}

namespace detail {

template <typename Pred>
FilterReport apply_filter(Manifest* m, const std::string& stage, Pred&& removal_reason) {
  FilterReport rep;
  rep.stage = stage;
  rep.input_count = static_cast<int>(m->clips.size());
  std::vector<ClipRecord> kept;
  kept.reserve(m->clips.size());
  for (const ClipRecord& c : m->clips) {
    std::string why = removal_reason(c, &rep);
    if (why.empty()) {
      kept.push_back(c);
    } else {
      rep.reasons.emplace_back(c.key(), std::move(why));
    }
  }
  m->clips = std::move(kept);
  rep.removed_count = static_cast<int>(rep.reasons.size());
  rep.output_count = rep.input_count - rep.removed_count;
  return rep;
}

inline float wav_peak(const Manifest& m, const ClipRecord& c) {
  int rate = 0;
  const std::vector<float> s = read_wav(m.resolve(c.wav_path), &rate);
  float peak = 0.0f;
  for (float x : s) peak = std::max(peak, std::abs(x));
  return peak;
}

}  // namespace detail

// Stage 1: drop digitally silent clips (max |sample| == 0). Unreadable files
// are removed with reason "io".
inline FilterReport filter_silent(Manifest* m) {
  return detail::apply_filter(m, "silent", [m](const ClipRecord& c, FilterReport*) -> std::string {
    float peak = 0.0f;
    try {
      peak = detail::wav_peak(*m, c);
    } catch (const IoError&) {
      return "io";
    }
    return peak == 0.0f ? "silent" : "";
  });
}

// Stage 2: drop clips whose scenario tag is blocklisted.
inline FilterReport filter_scenario(Manifest* m, const std::set<std::string>& blocklist) {
  return detail::apply_filter(m, "scenario",
                              [&blocklist](const ClipRecord& c, FilterReport*) -> std::string {
                                return blocklist.count(c.scenario) ? "scenario" : "";
                              });
}

// Stage 3: drop clips the tagger flags as speech or music with probability
// strictly above the threshold. Tagger failures keep the clip and are logged.
inline FilterReport filter_tags(Manifest* m, const Tagger& tagger, double threshold = 0.5) {
  if (!tagger) throw InputError("filter_tags requires a tagger");
  if (threshold < 0.0 || threshold > 1.0) throw InputError("tag threshold must lie in [0, 1]");
  return detail::apply_filter(
      m, "tags", [m, &tagger, threshold](const ClipRecord& c, FilterReport* rep) -> std::string {
        TagResult t;
        try {
          t = tagger(*m, c);
        } catch (const std::exception& e) {
          rep->notes.push_back("tagger failure on " + c.key() + ": " + e.what() + " (kept)");
          return "";
        }
        if (t.p_speech < 0.0 || t.p_speech > 1.0 || t.p_music < 0.0 || t.p_music > 1.0) {
          rep->notes.push_back("tagger returned out-of-range probability on " + c.key() +
                               " (kept)");
          return "";
        }
        if (std::max(t.p_speech, t.p_music) > threshold) {
          return t.p_speech >= t.p_music ? "speech" : "music";
        }
        return "";
      });
}

// Stage 4: drop clips whose peak is more than |floor_db| below the loudest
// clip of the same recording (strict <; the boundary clip survives).
inline FilterReport filter_energy(Manifest* m, double floor_db = -60.0) {
  if (!std::isfinite(floor_db) || floor_db >= 0.0) {
    throw InputError("energy floor must be a negative dB value");
  }
  std::map<std::string, float> video_peak;
  std::map<std::string, float> clip_peak;
  std::set<std::string> unreadable;
  for (const ClipRecord& c : m->clips) {
    float peak = 0.0f;
    try {
      peak = detail::wav_peak(*m, c);
    } catch (const IoError&) {
      unreadable.insert(c.key());
      continue;
    }
    clip_peak[c.key()] = peak;
    auto [it, fresh] = video_peak.try_emplace(c.video_id, peak);
    if (!fresh) it->second = std::max(it->second, peak);
  }
  return detail::apply_filter(
      m, "energy", [&](const ClipRecord& c, FilterReport*) -> std::string {
        if (unreadable.count(c.key())) return "io";
        const float vp = video_peak.at(c.video_id);
        if (vp <= 0.0f) return "energy";  // whole recording digitally silent
        const double ratio_db = peak_db_ratio(clip_peak.at(c.key()), vp);
        return ratio_db < floor_db ? "energy" : "";
      });
}

// Shipped default tagger: windowed band-energy heuristics. Speech score is
// the 100-400 Hz energy fraction; music score is the best harmonic-comb
// energy fraction (fundamental swept over 100-500 Hz). Both are evaluated
// per ~0.5 s window and aggregated as the minimum over *quiet* windows
// (total energy within 6 dB of the quietest window). Sustained speech or
// music raises every window including quiet ones; legitimate transient
// action sounds only contaminate loud windows, which are ignored, so they
// cannot trigger removal.
inline TagResult default_tagger(const Manifest& m, const ClipRecord& c) {
  int rate = 0;
  const std::vector<float> s = read_wav(m.resolve(c.wav_path), &rate);
  const int64_t win = 8192;
  const int64_t hop = 4096;
  if (static_cast<int64_t>(s.size()) < win) {
    throw InputError("clip too short to tag: " + c.key());
  }
  TagResult out;
  out.clip_id = c.key();

  const double bin_hz = static_cast<double>(rate) / static_cast<double>(win);
  const auto band_power = [&](const std::vector<double>& p, double f_lo, double f_hi) {
    const int64_t k_lo = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(f_lo / bin_hz)));
    const int64_t k_hi =
        std::min<int64_t>(static_cast<int64_t>(p.size()) - 1,
                          static_cast<int64_t>(std::floor(f_hi / bin_hz)));
    double e = 0.0;
    for (int64_t k = k_lo; k <= k_hi; ++k) e += p[static_cast<size_t>(k)];
    return e;
  };

  std::vector<double> totals, speech_ratios, music_ratios;
  std::vector<double> buf(static_cast<size_t>(win));
  std::vector<double> hann(static_cast<size_t>(win));
  for (int64_t i = 0; i < win; ++i) {
    hann[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(win));
  }
  for (int64_t start = 0; start + win <= static_cast<int64_t>(s.size()); start += hop) {
    // Hann window keeps sinusoid energy within a few bins (leakage control).
    for (int64_t i = 0; i < win; ++i) {
      buf[static_cast<size_t>(i)] = s[static_cast<size_t>(start + i)] * hann[static_cast<size_t>(i)];
    }
    const std::vector<std::complex<double>> spec = rfft(buf, win);
    std::vector<double> power(spec.size());
    for (size_t k = 1; k < spec.size(); ++k) power[k] = std::norm(spec[k]);
    power[0] = 0.0;
    const double total = band_power(power, 20.0, 8000.0);
    totals.push_back(total);
    if (total <= 0.0) {
      speech_ratios.push_back(0.0);
      music_ratios.push_back(0.0);
      continue;
    }
    speech_ratios.push_back(band_power(power, 100.0, 400.0) / total);
    double best_comb = 0.0;
    for (double f0 = 100.0; f0 <= 500.0; f0 += bin_hz) {
      double comb = 0.0;
      for (int h = 1; h <= 8; ++h) {
        const double fh = f0 * h;
        if (fh > 7800.0) break;
        // Width grows with fh to absorb the f0 grid quantization error,
        // which scales with the harmonic number.
        const double half_width = 2.0 * bin_hz + 0.002 * fh;
        comb += band_power(power, fh - half_width, fh + half_width);
      }
      best_comb = std::max(best_comb, comb / total);
    }
    music_ratios.push_back(best_comb);
  }

  const double floor_energy = *std::min_element(totals.begin(), totals.end());
  double speech_min = 1.0;
  double music_min = 1.0;
  for (size_t w = 0; w < totals.size(); ++w) {
    if (totals[w] > 4.0 * floor_energy && totals[w] > 0.0) continue;  // loud window: skip
    speech_min = std::min(speech_min, speech_ratios[w]);
    music_min = std::min(music_min, music_ratios[w]);
  }
  out.p_speech = std::clamp(speech_min, 0.0, 1.0);
  out.p_music = std::clamp(music_min, 0.0, 1.0);
  return out;
}

struct CurationConfig {
  std::set<std::string> blocklist;
  double tag_threshold = 0.5;
  double energy_floor_db = -60.0;
  Tagger tagger;  // defaults to default_tagger when unset
};

struct CurationResult {
  Manifest manifest;
  std::vector<FilterReport> reports;
};

// Canonical stage order: silent -> scenario -> tags -> energy.
inline CurationResult run_pipeline(const Manifest& in, const CurationConfig& cfg) {
  CurationResult res;
  res.manifest = in;
  Tagger tagger = cfg.tagger ? cfg.tagger : Tagger(default_tagger);
  res.reports.push_back(filter_silent(&res.manifest));
  res.reports.push_back(filter_scenario(&res.manifest, cfg.blocklist));
  res.reports.push_back(filter_tags(&res.manifest, tagger, cfg.tag_threshold));
  res.reports.push_back(filter_energy(&res.manifest, cfg.energy_floor_db));
  return res;
}

}  // namespace a2s::curation

#endif  // A2S_CURATION_HPP_
