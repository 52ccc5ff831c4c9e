// Copyright 2026 The a2s Authors
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

// Audio-condition selection. During training the condition is a clip sampled
// uniformly from the temporal neighborhood of the target clip within the same
// recording; at inference it is chosen by embedding retrieval, by a
// lowest-ambient pool scan, or from a user-provided file.

#ifndef A2S_CONDITIONING_HPP_
#define A2S_CONDITIONING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "a2s/avsim.hpp"
#include "a2s/common.hpp"
#include "a2s/dsp.hpp"
#include "a2s/io.hpp"
#include "a2s/manifest.hpp"
#include "a2s/rng.hpp"
#include "a2s/tensor.hpp"

namespace a2s {
namespace cond {

// ---------------------------------------------------------------------------
// Policy and mode types.
// ---------------------------------------------------------------------------

// Neighbor sampling considers the X temporally nearest clips of the same
// recording (fewer near recording boundaries, by truncation).
struct NeighborPolicy {
  int x = 6;

  void validate() const {
    if (x < 1) throw ConfigError("NeighborPolicy: x must be >= 1");
  }
};

enum class ConditionMode { kRetrieval, kLowAmbient, kProvided };

inline const char* mode_to_string(ConditionMode m) {
  switch (m) {
    case ConditionMode::kRetrieval: return "retrieval";
    case ConditionMode::kLowAmbient: return "low_ambient";
    case ConditionMode::kProvided: return "provided";
  }
  throw InputError("mode_to_string: unknown mode");
}

// Accepts "file" as an alias for "provided": the CLI exposes the mode as
// `--cond-mode retrieval|low_ambient|file`.
inline ConditionMode mode_from_string(const std::string& s) {
  if (s == "retrieval") return ConditionMode::kRetrieval;
  if (s == "low_ambient") return ConditionMode::kLowAmbient;
  if (s == "provided" || s == "file") return ConditionMode::kProvided;
  throw ConfigError("unknown condition mode: " + s +
                    " (expected retrieval|low_ambient|provided)");
}

struct ConditionChoice {
  ConditionMode mode = ConditionMode::kRetrieval;
  std::filesystem::path provided_path;  // required iff mode == kProvided

  void validate() const {
    const bool has_path = !provided_path.empty();
    if (mode == ConditionMode::kProvided && !has_path) {
      throw ConfigError("condition mode 'provided' requires a file path");
    }
    if (mode != ConditionMode::kProvided && has_path) {
      throw ConfigError("provided_path is only valid with condition mode 'provided'");
    }
  }
};

// ---------------------------------------------------------------------------
// Training-time neighbor sampling.
// ---------------------------------------------------------------------------

// The <= policy.x same-recording clips nearest to `clip` by |clip_idx| delta,
// excluding the clip itself. Equidistant pairs order the earlier index first,
// so truncation to x keeps the earlier clip. The result is sorted by
// ascending clip_idx for stable downstream iteration.
inline std::vector<ClipRecord> neighbor_candidates(const Manifest& manifest,
                                                   const ClipRecord& clip,
                                                   const NeighborPolicy& policy) {
  policy.validate();
  std::vector<ClipRecord> siblings = manifest.recording(clip.video_id);
  std::vector<ClipRecord> others;
  for (auto& s : siblings) {
    if (s.clip_idx != clip.clip_idx) others.push_back(std::move(s));
  }
  if (others.empty()) {
    throw InputError("sample_neighbor: recording " + clip.video_id +
                     " has no other clips (curation guarantees >= 2)");
  }
  std::stable_sort(others.begin(), others.end(),
                   [&clip](const ClipRecord& a, const ClipRecord& b) {
                     const int da = std::abs(a.clip_idx - clip.clip_idx);
                     const int db = std::abs(b.clip_idx - clip.clip_idx);
                     return da != db ? da < db : a.clip_idx < b.clip_idx;
                   });
  if (static_cast<int>(others.size()) > policy.x) {
    others.resize(static_cast<size_t>(policy.x));
  }
  std::sort(others.begin(), others.end(),
            [](const ClipRecord& a, const ClipRecord& b) { return a.clip_idx < b.clip_idx; });
  return others;
}

// Uniform draw from the candidate set.
inline ClipRecord sample_neighbor(const Manifest& manifest, const ClipRecord& clip,
                                  const NeighborPolicy& policy, Rng& rng) {
  const auto cands = neighbor_candidates(manifest, clip, policy);
  return cands[static_cast<size_t>(rng.uniform_int(static_cast<uint64_t>(cands.size())))];
}

// Fraction of neighbor candidates sharing the query clip's label, averaged
// over every manifest clip with at least one candidate (exhaustive count, no
// sampling noise). Clips without events carry label -1, which matches other
// event-free clips.
inline double neighbor_semantic_overlap_rate(const Manifest& manifest,
                                             const NeighborPolicy& policy = {}) {
  policy.validate();
  double total = 0.0;
  int counted = 0;
  for (const auto& clip : manifest.clips) {
    std::vector<ClipRecord> siblings = manifest.recording(clip.video_id);
    if (siblings.size() < 2) continue;
    const auto cands = neighbor_candidates(manifest, clip, policy);
    int same = 0;
    for (const auto& c : cands) {
      if (c.label == clip.label) ++same;
    }
    total += static_cast<double>(same) / static_cast<double>(cands.size());
    ++counted;
  }
  if (counted == 0) {
    throw InputError("neighbor_semantic_overlap_rate: no recording has >= 2 clips");
  }
  return total / counted;
}

// ---------------------------------------------------------------------------
// Inference-time condition selection.
// ---------------------------------------------------------------------------

// Everything a condition mode may need; retrieval requires all three fields,
// low_ambient only the pool, provided none.
struct ConditionSource {
  const Manifest* pool = nullptr;
  avsim::AVSimModel* model = nullptr;
  const avsim::EmbeddingIndex* index = nullptr;
};

struct SelectedCondition {
  Waveform audio;
  std::string source;  // clip key or file path, logged per generation for audit
};

inline Waveform load_clip_waveform(const Manifest& pool, const ClipRecord& rec) {
  Waveform w;
  int sr = 0;
  w.samples = read_wav(pool.resolve(rec.wav_path), &sr);
  w.sample_rate = sr;
  return w;
}

// Pool clip minimizing the windowed ambient-level measure; ties keep the
// first clip in manifest order. Used for action-focused generation, where an
// all-zero condition would be out of distribution.
inline std::pair<ClipRecord, double> lowest_ambient_clip(const Manifest& pool) {
  if (pool.clips.empty()) throw InputError("lowest_ambient_clip: empty pool");
  const ClipRecord* best = nullptr;
  double best_level = std::numeric_limits<double>::infinity();
  for (const auto& rec : pool.clips) {
    const double level = ambient_level(load_clip_waveform(pool, rec));
    if (level < best_level) {
      best_level = level;
      best = &rec;
    }
  }
  return {*best, best_level};
}

inline SelectedCondition select_condition(const Tensor& video_feats,
                                          const ConditionChoice& choice,
                                          const ConditionSource& src) {
  choice.validate();
  switch (choice.mode) {
    case ConditionMode::kRetrieval: {
      if (src.index == nullptr || src.model == nullptr || src.pool == nullptr) {
        throw InputError("select_condition: retrieval mode needs an index, an embedding "
                         "model, and the pool manifest");
      }
      const avsim::Embedding q =
          avsim::embed_video(*src.model, avsim::video_encoder_input(video_feats), "query");
      const std::string clip_id = avsim::retrieve(*src.index, q.vector);
      for (const auto& rec : src.pool->clips) {
        if (rec.key() == clip_id) {
          return {load_clip_waveform(*src.pool, rec), clip_id};
        }
      }
      throw InputError("select_condition: retrieved clip " + clip_id +
                       " is not in the pool manifest");
    }
    case ConditionMode::kLowAmbient: {
      if (src.pool == nullptr) {
        throw InputError("select_condition: low_ambient mode needs the pool manifest");
      }
      const auto [rec, level] = lowest_ambient_clip(*src.pool);
      (void)level;
      return {load_clip_waveform(*src.pool, rec), rec.key()};
    }
    case ConditionMode::kProvided: {
      Waveform w;
      int sr = 0;
      w.samples = read_wav(choice.provided_path, &sr);
      w.sample_rate = sr;
      return {std::move(w), choice.provided_path.string()};
    }
  }
  throw InputError("select_condition: unknown mode");
}

}  // namespace cond
}  // namespace a2s

#endif  // A2S_CONDITIONING_HPP_
