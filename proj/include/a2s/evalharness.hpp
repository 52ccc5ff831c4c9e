// Quantitative evaluation: Frechet audio distance over embedding statistics,
// an audio-visual synchronization classifier, ambient-controllability curves,
// a class-accuracy probe, and ground-truth separation metrics that are only
// computable on synthetic data with known action/ambient stems.
#ifndef A2S_EVALHARNESS_HPP_
#define A2S_EVALHARNESS_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "a2s/autograd.hpp"
#include "a2s/avldm.hpp"
#include "a2s/avsim.hpp"
#include "a2s/common.hpp"
#include "a2s/dsp.hpp"
#include "a2s/io.hpp"
#include "a2s/manifest.hpp"
#include "a2s/nn.hpp"
#include "a2s/rng.hpp"

namespace a2s {
namespace evalharness {

// ---------------------------------------------------------------------------
// Embedding statistics and Frechet audio distance.
// ---------------------------------------------------------------------------

// Gaussian fit of a set of clip embeddings: sample mean and sample covariance
// (denominator n-1; the zero matrix when n < 2).
struct EmbeddingStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int64_t n = 0;

  int64_t dim() const { return mean.size(); }

  // A full-rank covariance estimate needs at least dim+1 samples; below that
  // the FAD is still defined through the eigenvalue clamp but callers should
  // surface a warning.
  bool full_rank_estimate() const { return n >= dim() + 1; }

  void validate() const {
    if (mean.size() < 1) throw InputError("EmbeddingStats: empty mean");
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
      throw InputError("EmbeddingStats: covariance shape does not match mean dimension");
    }
    if (n < 1) throw InputError("EmbeddingStats: sample count must be >= 1");
    const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
    if (!(asym <= 1e-8 * std::max(1.0, cov.cwiseAbs().maxCoeff()))) {
      throw InputError("EmbeddingStats: covariance is not symmetric");
    }
    for (int64_t i = 0; i < mean.size(); ++i) {
      if (!std::isfinite(mean[i])) throw InputError("EmbeddingStats: non-finite mean");
    }
    if (!cov.allFinite()) throw InputError("EmbeddingStats: non-finite covariance");
  }
};

namespace detail {

// Symmetric PSD square root: eigendecompose 0.5*(M + M^T), clamp negative
// eigenvalues to zero, rebuild. The clamp makes the computation robust to the
// slightly indefinite covariances produced by finite-sample estimation.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw TrainingError("psd_sqrt: eigendecomposition failed");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Frechet distance between two Gaussian fits:
//   ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
// The cross term uses Tr((S_a S_b)^{1/2}) = Tr((S_b^{1/2} S_a S_b^{1/2})^{1/2})
// so every square root is of a symmetric matrix; negative eigenvalues are
// clamped at zero and the final value at 0.0.
inline double fad(const EmbeddingStats& a, const EmbeddingStats& b) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim()) {
    throw InputError("fad: embedding dimensions differ (" + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()) + ")");
  }
  const Eigen::MatrixXd rb = detail::psd_sqrt(b.cov);
  const Eigen::MatrixXd inner = rb * a.cov * rb;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()));
  if (es.info() != Eigen::Success) throw TrainingError("fad: eigendecomposition failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d2 = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d2);
}

// ---------------------------------------------------------------------------
// Embedders.
// ---------------------------------------------------------------------------

using AudioEmbedder = std::function<std::vector<float>(const Waveform&)>;

// Deterministic mel-statistics embedder: per mel band the (mean, population
// std, mean |delta| between consecutive frames) over the clip's content
// frames, in log-mel units. Dimension 3 * n_mels; bit-reproducible.
inline AudioEmbedder make_mel_stats_embedder(const MelConfig& mel) {
  return [mel](const Waveform& w) {
    if (w.sample_rate != mel.sample_rate) {
      throw InputError("mel_stats_embedder: clip sample rate " + std::to_string(w.sample_rate) +
                       " != configured " + std::to_string(mel.sample_rate));
    }
    const MelSpectrogram m = wav_to_mel(w, mel);
    const int64_t frames = m.content_frames;
    const int64_t bands = m.config.n_mels;
    if (frames < 2) throw InputError("mel_stats_embedder: clip shorter than two mel frames");
    std::vector<float> out(static_cast<size_t>(3 * bands));
    for (int64_t b = 0; b < bands; ++b) {
      double sum = 0.0, sumsq = 0.0, dsum = 0.0;
      for (int64_t f = 0; f < frames; ++f) {
        const double v = static_cast<double>(m.values[f * bands + b]);
        sum += v;
        sumsq += v * v;
        if (f > 0) {
          dsum += std::fabs(v - static_cast<double>(m.values[(f - 1) * bands + b]));
        }
      }
      const double mean = sum / static_cast<double>(frames);
      const double var = std::max(0.0, sumsq / static_cast<double>(frames) - mean * mean);
      out[static_cast<size_t>(b)] = static_cast<float>(mean);
      out[static_cast<size_t>(bands + b)] = static_cast<float>(std::sqrt(var));
      out[static_cast<size_t>(2 * bands + b)] =
          static_cast<float>(dsum / static_cast<double>(frames - 1));
    }
    return out;
  };
}

// Frozen contrastive audio encoder as the default FAD embedding space. The
// model is copied so the embedder owns its weights.
inline AudioEmbedder make_avsim_fad_embedder(const avsim::AVSimModel& model) {
  auto m = std::make_shared<avsim::AVSimModel>(model);
  return [m](const Waveform& w) {
    if (w.sample_rate != m->cfg.mel.sample_rate) {
      throw InputError("avsim_fad_embedder: clip sample rate " + std::to_string(w.sample_rate) +
                       " != configured " + std::to_string(m->cfg.mel.sample_rate));
    }
    const Tensor in = avsim::audio_encoder_input(wav_to_mel(w, m->cfg.mel));
    return avsim::detail::embed_one(m->audio, in);
  };
}

// Embed every clip and fit the Gaussian. Embeddings are sorted into a
// canonical order before accumulation so the statistics are invariant to the
// order of the input clips, bit for bit.
inline EmbeddingStats embed_for_fad(const std::vector<Waveform>& clips,
                                    const AudioEmbedder& embedder) {
  if (clips.empty()) throw InputError("embed_for_fad: no clips");
  std::vector<std::vector<float>> embs;
  embs.reserve(clips.size());
  for (const Waveform& w : clips) {
    std::vector<float> e = embedder(w);
    if (e.empty()) throw InputError("embed_for_fad: embedder returned an empty vector");
    if (!embs.empty() && e.size() != embs.front().size()) {
      throw InputError("embed_for_fad: inconsistent embedding dimensions across clips");
    }
    for (float x : e) {
      if (!std::isfinite(x)) throw InputError("embed_for_fad: non-finite embedding value");
    }
    embs.push_back(std::move(e));
  }
  std::sort(embs.begin(), embs.end());
  const int64_t n = static_cast<int64_t>(embs.size());
  const int64_t d = static_cast<int64_t>(embs.front().size());
  EmbeddingStats st;
  st.n = n;
  st.mean = Eigen::VectorXd::Zero(d);
  st.cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& e : embs) {
    for (int64_t i = 0; i < d; ++i) st.mean[i] += static_cast<double>(e[static_cast<size_t>(i)]);
  }
  st.mean /= static_cast<double>(n);
  if (n >= 2) {
    for (const auto& e : embs) {
      Eigen::VectorXd c(d);
      for (int64_t i = 0; i < d; ++i) {
        c[i] = static_cast<double>(e[static_cast<size_t>(i)]) - st.mean[i];
      }
      st.cov.noalias() += c * c.transpose();
    }
    st.cov /= static_cast<double>(n - 1);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Rank correlation.
// ---------------------------------------------------------------------------

// 1-based ranks with ties assigned the average of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Spearman rank correlation. Defined as 0 when either side has zero rank
// variance (e.g. a generator whose output level never moves).
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InputError("spearman_rho: size mismatch");
  if (x.size() < 2) throw InputError("spearman_rho: need at least 2 points");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Synchronization dataset.
// ---------------------------------------------------------------------------

enum class NegativeKind { kNone, kShifted, kUnpaired };

inline const char* negative_kind_name(NegativeKind k) {
  switch (k) {
    case NegativeKind::kNone: return "none";
    case NegativeKind::kShifted: return "shifted";
    case NegativeKind::kUnpaired: return "unpaired";
  }
  return "?";
}

// A planned example: indices into the split's record list plus the draw's
// label, negative kind, and signed circular shift in seconds.
struct SyncPlan {
  size_t video_clip = 0;
  size_t audio_clip = 0;
  bool positive = false;
  NegativeKind kind = NegativeKind::kNone;
  double shift_s = 0.0;
};

// Draw `count` examples: 50% positives, 25% unpaired negatives (audio from a
// clip of a different recording), 25% shifted negatives (circular shift with
// magnitude uniform in [shift_min_s, shift_max_s], either sign).
inline std::vector<SyncPlan> plan_sync_examples(const Manifest& manifest, const std::string& split,
                                                int count, double shift_min_s, double shift_max_s,
                                                Rng& rng) {
  if (count < 1) throw InputError("plan_sync_examples: count must be >= 1");
  if (!(shift_min_s > 0.0) || !(shift_max_s >= shift_min_s)) {
    throw InputError("plan_sync_examples: need 0 < shift_min_s <= shift_max_s");
  }
  const std::vector<ClipRecord> recs = manifest.split(split);
  if (recs.size() < 2) throw InputError("plan_sync_examples: split '" + split + "' has < 2 clips");
  bool two_recordings = false;
  for (const auto& r : recs) {
    if (r.video_id != recs.front().video_id) {
      two_recordings = true;
      break;
    }
  }
  if (!two_recordings) {
    throw InputError("plan_sync_examples: split '" + split +
                     "' needs clips from at least 2 recordings for unpaired negatives");
  }
  std::vector<SyncPlan> plans;
  plans.reserve(static_cast<size_t>(count));
  for (int e = 0; e < count; ++e) {
    SyncPlan p;
    p.video_clip = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(recs.size())));
    const double u = rng.uniform();
    if (u < 0.5) {
      p.audio_clip = p.video_clip;
      p.positive = true;
      p.kind = NegativeKind::kNone;
    } else if (u < 0.75) {
      p.kind = NegativeKind::kUnpaired;
      do {
        p.audio_clip = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(recs.size())));
      } while (recs[p.audio_clip].video_id == recs[p.video_clip].video_id);
    } else {
      p.kind = NegativeKind::kShifted;
      p.audio_clip = p.video_clip;
      const double mag = rng.uniform(shift_min_s, shift_max_s);
      p.shift_s = rng.uniform() < 0.5 ? -mag : mag;
    }
    plans.push_back(p);
  }
  return plans;
}

// Circular shift: positive delays the audio (rotates right). Preserves the
// sample multiset exactly.
inline Waveform circular_shift(const Waveform& w, int64_t shift) {
  Waveform out = w;
  const int64_t n = w.size();
  if (n == 0) return out;
  int64_t s = shift % n;
  if (s < 0) s += n;
  for (int64_t i = 0; i < n; ++i) {
    out.samples[static_cast<size_t>((i + s) % n)] = w.samples[static_cast<size_t>(i)];
  }
  return out;
}

// A materialized example: the video's per-frame features plus the (possibly
// substituted or shifted) audio.
struct SyncExample {
  std::string video_key;
  std::string audio_key;
  Tensor video_feats;  // (frames, feat_dim)
  Waveform audio;
  bool positive = false;
  NegativeKind kind = NegativeKind::kNone;
  double shift_s = 0.0;
};

inline std::vector<SyncExample> materialize_sync_examples(const Manifest& manifest,
                                                          const std::string& split,
                                                          const std::vector<SyncPlan>& plans) {
  const std::vector<ClipRecord> recs = manifest.split(split);
  std::map<size_t, Waveform> wav_cache;
  std::map<size_t, Tensor> feat_cache;
  auto wav_of = [&](size_t i) -> const Waveform& {
    auto it = wav_cache.find(i);
    if (it == wav_cache.end()) {
      Waveform w;
      int sr = 0;
      w.samples = read_wav(manifest.resolve(recs[i].wav_path), &sr);
      w.sample_rate = sr;
      it = wav_cache.emplace(i, std::move(w)).first;
    }
    return it->second;
  };
  auto feats_of = [&](size_t i) -> const Tensor& {
    auto it = feat_cache.find(i);
    if (it == feat_cache.end()) {
      it = feat_cache.emplace(i, load_tensor(manifest.resolve(recs[i].feat_path))).first;
    }
    return it->second;
  };
  std::vector<SyncExample> out;
  out.reserve(plans.size());
  for (const SyncPlan& p : plans) {
    if (p.video_clip >= recs.size() || p.audio_clip >= recs.size()) {
      throw InputError("materialize_sync_examples: plan index out of range");
    }
    SyncExample e;
    e.video_key = recs[p.video_clip].key();
    e.audio_key = recs[p.audio_clip].key();
    e.video_feats = feats_of(p.video_clip);
    e.positive = p.positive;
    e.kind = p.kind;
    e.shift_s = p.shift_s;
    const Waveform& w = wav_of(p.audio_clip);
    if (p.kind == NegativeKind::kShifted) {
      const int64_t s = static_cast<int64_t>(std::llround(p.shift_s * w.sample_rate));
      e.audio = circular_shift(w, s);
    } else {
      e.audio = w;
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<SyncExample> build_sync_dataset(const Manifest& manifest,
                                                   const std::string& split, int count,
                                                   double shift_min_s, double shift_max_s,
                                                   Rng& rng) {
  return materialize_sync_examples(
      manifest, split, plan_sync_examples(manifest, split, count, shift_min_s, shift_max_s, rng));
}

// ---------------------------------------------------------------------------
// Synchronization classifier.
// ---------------------------------------------------------------------------

struct AVSyncConfig {
  int embed_dim = 32;
  int hidden = 48;
  int head_hidden = 64;
  int train_examples = 256;
  int val_examples = 128;
  double lr = 3e-3;
  int epochs = 6;
  int batch_size = 16;
  uint64_t seed = 0;
  double shift_min_s = 0.5;
  double shift_max_s = 1.5;
  MelConfig mel;

  void validate() const {
    if (embed_dim < 4) throw ConfigError("avsync: embed_dim must be >= 4");
    if (hidden < 1) throw ConfigError("avsync: hidden must be >= 1");
    if (head_hidden < 1) throw ConfigError("avsync: head_hidden must be >= 1");
    if (train_examples < 2) throw ConfigError("avsync: train_examples must be >= 2");
    if (val_examples < 2) throw ConfigError("avsync: val_examples must be >= 2");
    if (!(lr > 0.0)) throw ConfigError("avsync: lr must be > 0");
    if (epochs < 0) throw ConfigError("avsync: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("avsync: batch_size must be >= 1");
    if (!(shift_min_s > 0.0) || !(shift_max_s >= shift_min_s)) {
      throw ConfigError("avsync: need 0 < shift_min_s <= shift_max_s");
    }
  }

  ojson to_json() const {
    ojson j;
    j["embed_dim"] = embed_dim;
    j["hidden"] = hidden;
    j["head_hidden"] = head_hidden;
    j["train_examples"] = train_examples;
    j["val_examples"] = val_examples;
    j["lr"] = lr;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["shift_min_s"] = shift_min_s;
    j["shift_max_s"] = shift_max_s;
    j["mel"] = {{"sample_rate", mel.sample_rate}, {"fft_size", mel.fft_size},
                {"hop", mel.hop},                 {"n_mels", mel.n_mels},
                {"pad_to_frames", mel.pad_to_frames}, {"fmin", mel.fmin},
                {"fmax", mel.fmax}};
    return j;
  }

  static AVSyncConfig from_json(const ojson& j) {
    AVSyncConfig c;
    c.embed_dim = j.at("embed_dim").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.head_hidden = j.at("head_hidden").get<int>();
    c.train_examples = j.at("train_examples").get<int>();
    c.val_examples = j.at("val_examples").get<int>();
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.shift_min_s = j.at("shift_min_s").get<double>();
    c.shift_max_s = j.at("shift_max_s").get<double>();
    const auto& m = j.at("mel");
    c.mel.sample_rate = m.at("sample_rate").get<int>();
    c.mel.fft_size = m.at("fft_size").get<int>();
    c.mel.hop = m.at("hop").get<int>();
    c.mel.n_mels = m.at("n_mels").get<int>();
    c.mel.pad_to_frames = m.at("pad_to_frames").get<int>();
    c.mel.fmin = m.at("fmin").get<double>();
    c.mel.fmax = m.at("fmax").get<double>();
    return c;
  }
};

// Audio encoder + video encoder + 3-layer head on the concatenated pooled
// (unit-normalized) features; a single logit, positive = synchronized.
struct AVSyncModel {
  AVSyncConfig cfg;
  avsim::AudioEncoder audio;
  avsim::VideoEncoder video;
  nn::LinearT<float> h0, h1, h2;
  int video_feat_dim = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> epoch_losses;

  void init(const AVSyncConfig& config, int feat_dim) {
    config.validate();
    if (feat_dim < 1) throw ConfigError("avsync: video feature dimension must be >= 1");
    cfg = config;
    video_feat_dim = feat_dim;
    audio.init("sync_audio", cfg.mel.n_mels + 1, cfg.hidden, cfg.embed_dim, 5, 2, 2,
               splitmix64(cfg.seed ^ 0x57acad10ULL));
    video.init("sync_video", feat_dim + 1, cfg.hidden, cfg.embed_dim, 3, 1, 2,
               splitmix64(cfg.seed ^ 0x57ac71deULL));
    Rng hrng(splitmix64(cfg.seed ^ 0x57ac6eadULL));
    nn::ParamRegistry scratch;
    h0.init("sync_head.h0", 2 * cfg.embed_dim, cfg.head_hidden, hrng, scratch, 1.0);
    h1.init("sync_head.h1", cfg.head_hidden, cfg.head_hidden, hrng, scratch, 1.0);
    h2.init("sync_head.h2", cfg.head_hidden, 1, hrng, scratch, 1.0);
  }

  void register_params(nn::ParamRegistry* reg) {
    audio.register_params(reg);
    video.register_params(reg);
    reg->add(&h0.w);
    reg->add(&h0.b);
    reg->add(&h1.w);
    reg->add(&h1.b);
    reg->add(&h2.w);
    reg->add(&h2.b);
  }

  // a_in: (n_mels+1, 1, frames); v_in: (feat_dim+1, 1, frames) -> (1, 1) logit.
  int logit_node(Tape& t, int a_in, int v_in) {
    const int ea = ag::normalize_rows(t, audio.forward(t, a_in));
    const int ev = ag::normalize_rows(t, video.forward(t, v_in));
    const int cat =
        ag::transpose(t, ag::concat_rows(t, {ag::transpose(t, ea), ag::transpose(t, ev)}));
    int h = ag::silu(t, h0.forward(t, cat));
    h = ag::silu(t, h1.forward(t, h));
    return h2.forward(t, h);
  }
};

namespace detail {

struct SyncTensors {
  Tensor audio_in;  // (n_mels+1, 1, frames)
  Tensor video_in;  // (feat_dim+1, 1, frames)
  float target = 0.0f;
};

inline std::vector<SyncTensors> sync_tensors(const std::vector<SyncExample>& examples,
                                             const MelConfig& mel) {
  std::vector<SyncTensors> out;
  out.reserve(examples.size());
  for (const SyncExample& e : examples) {
    SyncTensors st;
    st.audio_in = avsim::audio_encoder_input(wav_to_mel(e.audio, mel));
    st.video_in = avsim::video_encoder_input(e.video_feats);
    st.target = e.positive ? 1.0f : 0.0f;
    out.push_back(std::move(st));
  }
  return out;
}

// Mean BCE over fixed-order full batches, no updates.
inline double avsync_eval_loss(AVSyncModel& m, const std::vector<SyncTensors>& xs) {
  const size_t batch = std::min<size_t>(static_cast<size_t>(m.cfg.batch_size), xs.size());
  const auto batches = avsim::detail::fixed_batches(xs.size(), batch);
  if (batches.empty()) throw InputError("avsync_eval_loss: fewer examples than one batch");
  double total = 0.0;
  for (const auto& idxs : batches) {
    Tape t;
    std::vector<int> rows;
    Tensor targets({static_cast<int64_t>(idxs.size()), 1});
    for (size_t k = 0; k < idxs.size(); ++k) {
      const SyncTensors& x = xs[idxs[k]];
      rows.push_back(m.logit_node(t, t.constant(x.audio_in), t.constant(x.video_in)));
      targets[static_cast<int64_t>(k)] = x.target;
    }
    const int loss = ag::bce_logits(t, ag::concat_rows(t, rows), targets);
    total += static_cast<double>(t.val(loss)[0]);
  }
  return total / static_cast<double>(batches.size());
}

inline double avsync_accuracy(AVSyncModel& m, const std::vector<SyncTensors>& xs) {
  if (xs.empty()) throw InputError("avsync_accuracy: no examples");
  int correct = 0;
  for (const SyncTensors& x : xs) {
    Tape t;
    const int logit = m.logit_node(t, t.constant(x.audio_in), t.constant(x.video_in));
    const bool pred = t.val(logit)[0] > 0.0f;
    if (pred == (x.target > 0.5f)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xs.size());
}

}  // namespace detail

// Trains the binary synchronization classifier on sync examples drawn from
// the train split; validation accuracy is measured on examples drawn from the
// val split. Deterministic under a fixed cfg.seed.
inline AVSyncModel train_avsync(const Manifest& manifest, const AVSyncConfig& cfg) {
  cfg.validate();
  Rng train_rng(splitmix64(cfg.seed ^ 0x57acbafdULL));
  const auto train_examples = build_sync_dataset(manifest, "train", cfg.train_examples,
                                                 cfg.shift_min_s, cfg.shift_max_s, train_rng);
  Rng val_rng(splitmix64(cfg.seed ^ 0x57ac0feeULL));
  const auto val_examples = build_sync_dataset(manifest, "val", cfg.val_examples, cfg.shift_min_s,
                                               cfg.shift_max_s, val_rng);
  const int feat_dim = static_cast<int>(train_examples.front().video_feats.dim(1));

  AVSyncModel m;
  m.init(cfg, feat_dim);

  const auto train_x = detail::sync_tensors(train_examples, cfg.mel);
  const auto val_x = detail::sync_tensors(val_examples, cfg.mel);
  for (const auto& x : train_x) {
    if (x.audio_in.shape != train_x.front().audio_in.shape ||
        x.video_in.shape != train_x.front().video_in.shape) {
      throw InputError("train_avsync: inconsistent example shapes across the train split");
    }
  }
  m.initial_loss = detail::avsync_eval_loss(m, train_x);

  nn::ParamRegistry reg;
  m.register_params(&reg);
  nn::AdamW opt(cfg.lr);

  std::vector<size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t batch = std::min<size_t>(static_cast<size_t>(cfg.batch_size), train_x.size());
  const int steps_per_epoch = static_cast<int>(train_x.size() / batch);
  const int total_steps = std::max(1, cfg.epochs * steps_per_epoch);
  int global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(splitmix64(cfg.seed ^ (0x57ac5efULL + static_cast<uint64_t>(epoch))));
    shuffle_rng.shuffle(order);
    double epoch_total = 0.0;
    int steps = 0;
    for (size_t start = 0; start + batch <= order.size(); start += batch) {
      const double frac = static_cast<double>(global_step) / total_steps;
      opt.set_lr(cfg.lr * (0.55 + 0.45 * std::cos(M_PI * frac)));
      ++global_step;
      Tape t;
      std::vector<int> rows;
      Tensor targets({static_cast<int64_t>(batch), 1});
      for (size_t k = 0; k < batch; ++k) {
        const detail::SyncTensors& x = train_x[order[start + k]];
        rows.push_back(m.logit_node(t, t.constant(x.audio_in), t.constant(x.video_in)));
        targets[static_cast<int64_t>(k)] = x.target;
      }
      const int loss = ag::bce_logits(t, ag::concat_rows(t, rows), targets);
      const double lv = static_cast<double>(t.val(loss)[0]);
      if (!std::isfinite(lv)) {
        std::ostringstream diag;
        diag << "train_avsync diverged: loss=" << lv << " at epoch " << epoch << " step " << steps
             << " (lr=" << cfg.lr << ")";
        throw TrainingError(diag.str());
      }
      reg.zero_grads();
      t.backward(loss);
      opt.step(reg.params());
      epoch_total += lv;
      ++steps;
    }
    if (steps == 0) throw InputError("train_avsync: train set smaller than one batch");
    m.epoch_losses.push_back(epoch_total / steps);
  }
  m.final_loss = m.epoch_losses.empty() ? m.initial_loss : m.epoch_losses.back();
  m.val_accuracy = detail::avsync_accuracy(m, val_x);
  return m;
}

// Raw classifier logit for one (video features, audio) pair.
inline double avsync_logit(AVSyncModel& m, const Tensor& video_feats, const Waveform& audio) {
  if (audio.sample_rate != m.cfg.mel.sample_rate) {
    throw InputError("avsync_logit: clip sample rate " + std::to_string(audio.sample_rate) +
                     " != configured " + std::to_string(m.cfg.mel.sample_rate));
  }
  Tape t;
  const int logit =
      m.logit_node(t, t.constant(avsim::audio_encoder_input(wav_to_mel(audio, m.cfg.mel))),
                   t.constant(avsim::video_encoder_input(video_feats)));
  return static_cast<double>(t.val(logit)[0]);
}

// A (video features, audio) pair under evaluation, e.g. a persisted generation.
struct GenPair {
  Tensor video_feats;
  Waveform audio;
};

// Fraction of pairs the classifier calls synchronized.
inline double avsync_score(AVSyncModel& m, const std::vector<GenPair>& pairs) {
  if (pairs.empty()) throw InputError("avsync_score: no pairs");
  int positive = 0;
  for (const GenPair& p : pairs) {
    if (avsync_logit(m, p.video_feats, p.audio) > 0.0) ++positive;
  }
  return static_cast<double>(positive) / static_cast<double>(pairs.size());
}

namespace detail {

inline ojson avsync_meta(const AVSyncModel& m) {
  ojson j;
  j["module"] = "avsync";
  j["config"] = m.cfg.to_json();
  j["video_feat_dim"] = m.video_feat_dim;
  j["initial_loss"] = m.initial_loss;
  j["final_loss"] = m.final_loss;
  j["val_accuracy"] = m.val_accuracy;
  j["epoch_losses"] = m.epoch_losses;
  return j;
}

}  // namespace detail

inline void save_avsync(AVSyncModel& m, const std::filesystem::path& path) {
  Checkpoint ck;
  ck.meta = detail::avsync_meta(m).dump();
  nn::ParamRegistry reg;
  m.register_params(&reg);
  reg.save(&ck);
  ck.save(path);
}

inline AVSyncModel load_avsync(const std::filesystem::path& path) {
  Checkpoint ck = Checkpoint::load(path);
  ojson j;
  try {
    j = ojson::parse(ck.meta);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad avsync checkpoint meta in " + path.string() + ": " + e.what());
  }
  if (j.value("module", "") != "avsync") {
    throw IoError("checkpoint " + path.string() + " is not a sync classifier");
  }
  AVSyncModel m;
  m.init(AVSyncConfig::from_json(j.at("config")), j.at("video_feat_dim").get<int>());
  m.initial_loss = j.at("initial_loss").get<double>();
  m.final_loss = j.at("final_loss").get<double>();
  m.val_accuracy = j.at("val_accuracy").get<double>();
  m.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
  nn::ParamRegistry reg;
  m.register_params(&reg);
  reg.load(ck);
  return m;
}

// ---------------------------------------------------------------------------
// Class-accuracy probe.
// ---------------------------------------------------------------------------

struct ClassProbeConfig {
  int n_classes = 4;
  int hidden = 32;
  int embed_dim = 32;
  double lr = 3e-3;
  int epochs = 8;
  int batch_size = 16;
  uint64_t seed = 0;
  MelConfig mel;

  void validate() const {
    if (n_classes < 2) throw ConfigError("class_probe: n_classes must be >= 2");
    if (hidden < 1) throw ConfigError("class_probe: hidden must be >= 1");
    if (embed_dim < 4) throw ConfigError("class_probe: embed_dim must be >= 4");
    if (!(lr > 0.0)) throw ConfigError("class_probe: lr must be > 0");
    if (epochs < 0) throw ConfigError("class_probe: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("class_probe: batch_size must be >= 1");
  }

  ojson to_json() const {
    ojson j;
    j["n_classes"] = n_classes;
    j["hidden"] = hidden;
    j["embed_dim"] = embed_dim;
    j["lr"] = lr;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["mel"] = {{"sample_rate", mel.sample_rate}, {"fft_size", mel.fft_size},
                {"hop", mel.hop},                 {"n_mels", mel.n_mels},
                {"pad_to_frames", mel.pad_to_frames}, {"fmin", mel.fmin},
                {"fmax", mel.fmax}};
    return j;
  }

  static ClassProbeConfig from_json(const ojson& j) {
    ClassProbeConfig c;
    c.n_classes = j.at("n_classes").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.lr =ج_unused_placeholder;
    return c;
  }
};

}  // namespace evalharness
}  // namespace a2s

#endif  // A2S_EVALHARNESS_HPP_
