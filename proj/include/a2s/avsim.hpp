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

// Contrastive audio-visual similarity (AV-Sim): a pair of small temporal
// convolution encoders trained with an audio-anchored InfoNCE objective, plus
// the audio-embedding index that powers retrieval-augmented conditioning.

#ifndef A2S_AVSIM_HPP_
#define A2S_AVSIM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "a2s/autograd.hpp"
#include "a2s/common.hpp"
#include "a2s/dsp.hpp"
#include "a2s/io.hpp"
#include "a2s/manifest.hpp"
#include "a2s/nn.hpp"
#include "a2s/rng.hpp"
#include "a2s/tensor.hpp"
#include "nlohmann/json.hpp"

namespace a2s {
namespace avsim {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

struct AVSimConfig {
  int embed_dim = 32;         // >= 8
  double temperature = 0.07;  // > 0
  int batch_size = 24;        // >= 2
  double lr = 5e-3;
  int epochs = 5;
  uint64_t seed = 0;
  bool symmetric = false;  // one-directional (audio-anchored) by default
  int hidden = 48;
  MelConfig mel;

  void validate() const {
    if (embed_dim < 8) throw ConfigError("avsim: embed_dim must be >= 8");
    if (!(temperature > 0.0)) throw ConfigError("avsim: temperature must be > 0");
    if (batch_size < 2) throw ConfigError("avsim: batch_size must be >= 2");
    if (!(lr > 0.0)) throw ConfigError("avsim: lr must be > 0");
    if (epochs < 0) throw ConfigError("avsim: epochs must be >= 0");
    if (hidden < 1) throw ConfigError("avsim: hidden must be >= 1");
  }

  ojson to_json() const {
    ojson j;
    j["embed_dim"] = embed_dim;
    j["temperature"] = temperature;
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["symmetric"] = symmetric;
    j["hidden"] = hidden;
    j["mel"] = {{"sample_rate", mel.sample_rate}, {"fft_size", mel.fft_size},
                {"hop", mel.hop},                 {"n_mels", mel.n_mels},
                {"pad_to_frames", mel.pad_to_frames}, {"fmin", mel.fmin},
                {"fmax", mel.fmax}};
    return j;
  }

  static AVSimConfig from_json(const ojson& j) {
    AVSimConfig c;
    c.embed_dim = j.at("embed_dim").get<int>();
    c.temperature = j.at("temperature").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.symmetric = j.at("symmetric").get<bool>();
    c.hidden = j.at("hidden").get<int>();
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

// A unit-norm embedding of one clip in one modality.
struct Embedding {
  std::vector<float> vector;
  std::string modality;  // "audio" | "video"
  std::string clip_id;
};

// ---------------------------------------------------------------------------
// InfoNCE loss.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_embedding_batch(const Tensor& a, const Tensor& v) {
  if (a.rank() != 2 || v.rank() != 2) throw InputError("infonce: embeddings must be rank-2");
  if (a.shape != v.shape) throw InputError("infonce: audio/video batch shapes differ");
  if (a.dim(0) < 2) {
    throw InputError("infonce: batch size 1 is degenerate (loss identically 0); need >= 2");
  }
  for (const Tensor* m : {&a, &v}) {
    for (int64_t r = 0; r < m->dim(0); ++r) {
      double sq = 0.0;
      for (int64_t j = 0; j < m->dim(1); ++j) {
        const double x = (*m)[r * m->dim(1) + j];
        sq += x * x;
      }
      if (std::fabs(std::sqrt(sq) - 1.0) > 1e-4) {
        throw InputError("infonce: embedding row " + std::to_string(r) + " is not unit-norm");
      }
    }
  }
}

// Audio-anchored direction: row t holds sims of audio t against every video.
inline double infonce_one_direction(const Tensor& anchors, const Tensor& others, double tau) {
  const int64_t b = anchors.dim(0), d = anchors.dim(1);
  double total = 0.0;
  for (int64_t t = 0; t < b; ++t) {
    std::vector<double> logits(static_cast<size_t>(b));
    for (int64_t l = 0; l < b; ++l) {
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        dot += static_cast<double>(anchors[t * d + j]) * static_cast<double>(others[l * d + j]);
      }
      logits[static_cast<size_t>(l)] = dot / tau;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double z : logits) denom += std::exp(z - mx);
    total += -(logits[static_cast<size_t>(t)] - mx - std::log(denom));
  }
  return total / static_cast<double>(b);
}

}  // namespace detail

// -(1/B) sum_t log[ exp(eA_t . eV_t / tau) / sum_l exp(eA_t . eV_l / tau) ].
// Audio-anchored and one-directional unless `symmetric` is set, in which case
// the video-anchored direction is averaged in.
inline double infonce_loss(const Tensor& audio_embs, const Tensor& video_embs, double tau,
                           bool symmetric = false) {
  if (!(tau > 0.0)) throw InputError("infonce: tau must be > 0");
  detail::check_embedding_batch(audio_embs, video_embs);
  const double la = detail::infonce_one_direction(audio_embs, video_embs, tau);
  if (!symmetric) return la;
  const double lv = detail::infonce_one_direction(video_embs, audio_embs, tau);
  return 0.5 * (la + lv);
}

namespace detail {

// Tape node version used during training; eA/eV are (B, D) unit-norm rows.
inline int infonce_node(Tape& t, int e_audio, int e_video, double tau, bool symmetric) {
  const int sims = ag::matmul_nt(t, e_audio, e_video);
  const int logits = ag::scale(t, sims, 1.0 / tau);
  const int loss_a = ag::scale(t, ag::mean_log_diag(t, ag::softmax_rows(t, logits)), -1.0);
  if (!symmetric) return loss_a;
  const int logits_v = ag::transpose(t, logits);
  const int loss_v = ag::scale(t, ag::mean_log_diag(t, ag::softmax_rows(t, logits_v)), -1.0);
  return ag::scale(t, ag::add(t, loss_a, loss_v), 0.5);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Encoders: 2-layer temporal convolution + mean-pool + linear head.
// ---------------------------------------------------------------------------

// Input layout is (channels, 1, time); the final channel is a time ramp.
struct TemporalEncoder {
  nn::Conv2dT<float> c1, c2;
  nn::LinearT<float> head;
  std::string prefix;  // parameter name prefix, "audio" or "video"
  int in_channels = 0, hidden = 0, embed_dim = 0;
  int kernel = 5, stride1 = 2, stride2 = 2;

  void init(const std::string& prefix_, int in_ch, int hid, int dim, int kernel_, int s1, int s2,
            uint64_t seed) {
    prefix = prefix_;
    in_channels = in_ch;
    hidden = hid;
    embed_dim = dim;
    kernel = kernel_;
    stride1 = s1;
    stride2 = s2;
    ParamRegistry scratch;
    Rng rng(splitmix64(seed ^ 0xe7c0de5ULL));
    // Small weight scales plus a fixed unit-vector head bias start the encoder
    // near-collapsed: every input maps to almost the same embedding, so an
    // untrained model scores InfoNCE at the uniform-softmax value log(B).
    c1.init(prefix + ".c1", in_ch, hid, 1, kernel, s1, 0, rng, scratch, 0.25);
    c2.init(prefix + ".c2", hid, hid, 1, kernel, s2, 0, rng, scratch, 0.25);
    // The head sees the conv features next to the per-channel input means, a
    // direct path to time-averaged level information.
    head.init(prefix + ".head", hid + in_ch, dim, rng, scratch, 0.05);
    Rng brng(splitmix64(seed ^ 0xb1a5aceULL));
    std::vector<double> anchor(static_cast<size_t>(dim));
    double sq = 0.0;
    for (auto& x : anchor) {
      x = brng.gaussian();
      sq += x * x;
    }
    const double nrm = std::sqrt(std::max(sq, 1e-12));
    for (int i = 0; i < dim; ++i) {
      head.b.value[i] = static_cast<float>(anchor[static_cast<size_t>(i)] / nrm);
    }
  }

  void register_params(ParamRegistry* reg) {
    reg->add(&c1.w);
    reg->add(&c1.b);
    reg->add(&c2.w);
    reg->add(&c2.b);
    reg->add(&head.w);
    reg->add(&head.b);
  }

  // x: node holding (in_channels, 1, T) -> (1, embed_dim), unnormalized.
  int forward(Tape& t, int x) {
    // Copy dims up front: references into the tape go stale as nodes are
    // pushed and its storage reallocates.
    const std::vector<int64_t> xshape = t.val(x).shape;
    if (xshape.size() != 3 || xshape[0] != in_channels || xshape[1] != 1) {
      throw InputError(prefix + " encoder: expected input (" + std::to_string(in_channels) +
                       ", 1, T)");
    }
    const int64_t t1 = (xshape[2] - kernel) / stride1 + 1;
    const int64_t t2 = t1 >= kernel ? (t1 - kernel) / stride2 + 1 : 0;
    if (xshape[2] < kernel || t2 < 1) {
      throw InputError(prefix + " encoder: input too short for two stride-" +
                       std::to_string(stride1) + "/" + std::to_string(stride2) + " convolutions");
    }
    int h = ag::silu(t, c1.forward(t, x));
    h = ag::silu(t, c2.forward(t, h));
    h = ag::reshape(t, h, {static_cast<int64_t>(hidden), t2});
    h = ag::mean_rows(t, ag::transpose(t, h));  // (1, hidden)
    int means = ag::reshape(t, x, {xshape[0], xshape[2]});
    means = ag::mean_rows(t, ag::transpose(t, means));  // (1, in_channels)
    const int cat = ag::transpose(
        t, ag::concat_rows(t, {ag::transpose(t, h), ag::transpose(t, means)}));
    return head.forward(t, cat);  // (1, embed_dim)
  }
};

using AudioEncoder = TemporalEncoder;
using VideoEncoder = TemporalEncoder;

// Log-mel clip -> encoder input (n_mels + 1, 1, pad_to_frames) in ~[-1, 1].
inline Tensor audio_encoder_input(const MelSpectrogram& mel) {
  const Tensor unit = mel_to_unit(mel.values);
  const int64_t frames = unit.dim(0), bands = unit.dim(1);
  Tensor x({bands + 1, 1, frames});
  for (int64_t b = 0; b < bands; ++b) {
    for (int64_t f = 0; f < frames; ++f) x[(b * frames) + f] = unit[f * bands + b];
  }
  for (int64_t f = 0; f < frames; ++f) {
    x[bands * frames + f] =
        frames > 1 ? static_cast<float>(2.0 * f / (frames - 1) - 1.0) : 0.0f;
  }
  return x;
}

// Per-frame video features (T, D) -> encoder input (D + 1, 1, T).
inline Tensor video_encoder_input(const Tensor& feats) {
  if (feats.rank() != 2) throw InputError("video_encoder_input: expected (frames, dims)");
  const int64_t frames = feats.dim(0), dims = feats.dim(1);
  Tensor x({dims + 1, 1, frames});
  for (int64_t d = 0; d < dims; ++d) {
    for (int64_t f = 0; f < frames; ++f) x[d * frames + f] = feats[f * dims + d];
  }
  for (int64_t f = 0; f < frames; ++f) {
    x[dims * frames + f] =
        frames > 1 ? static_cast<float>(2.0 * f / (frames - 1) - 1.0) : 0.0f;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Cached per-clip encoder inputs.
// ---------------------------------------------------------------------------

struct ClipTensors {
  std::string clip_id;
  Tensor audio_in;  // (n_mels + 1, 1, frames)
  Tensor video_in;  // (feat_dim + 1, 1, video_frames)
};

inline std::vector<ClipTensors> load_clip_tensors(const Manifest& m, const std::string& split,
                                                  const MelConfig& mel_cfg) {
  std::vector<ClipTensors> out;
  for (const ClipRecord& rec : m.split(split)) {
    ClipTensors ct;
    ct.clip_id = rec.key();
    int sr = 0;
    Waveform w;
    w.samples = read_wav(m.resolve(rec.wav_path), &sr);
    w.sample_rate = sr;
    if (sr != mel_cfg.sample_rate) {
      throw InputError("load_clip_tensors: " + rec.key() + " sample rate " + std::to_string(sr) +
                       " != configured " + std::to_string(mel_cfg.sample_rate));
    }
    ct.audio_in = audio_encoder_input(wav_to_mel(w, mel_cfg));
    ct.video_in = video_encoder_input(load_tensor(m.resolve(rec.feat_path)));
    out.push_back(std::move(ct));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

struct AVSimModel {
  AVSimConfig cfg;
  AudioEncoder audio;
  VideoEncoder video;
  int video_feat_dim = 0;
  int effective_batch = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
};

namespace detail {

// Embeddings for a set of clips on one tape: a pair of (B, D) unit-norm nodes.
inline std::pair<int, int> embed_batch_nodes(Tape& t, AVSimModel& m,
                                             const std::vector<ClipTensors>& clips,
                                             const std::vector<size_t>& idxs) {
  std::vector<int> a_rows, v_rows;
  a_rows.reserve(idxs.size());
  v_rows.reserve(idxs.size());
  for (size_t i : idxs) {
    a_rows.push_back(m.audio.forward(t, t.constant(clips[i].audio_in)));
    v_rows.push_back(m.video.forward(t, t.constant(clips[i].video_in)));
  }
  const int ea = ag::normalize_rows(t, ag::concat_rows(t, a_rows));
  const int ev = ag::normalize_rows(t, ag::concat_rows(t, v_rows));
  return {ea, ev};
}

inline std::vector<std::vector<size_t>> fixed_batches(size_t n, size_t batch) {
  std::vector<std::vector<size_t>> out;
  for (size_t start = 0; start + batch <= n; start += batch) {
    std::vector<size_t> b(batch);
    std::iota(b.begin(), b.end(), start);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace detail

// Mean InfoNCE loss over fixed-order full batches, without parameter updates.
inline double avsim_eval_loss(AVSimModel& m, const std::vector<ClipTensors>& clips) {
  if (m.effective_batch < 2) throw InputError("avsim_eval_loss: model batch size must be >= 2");
  const auto batches = detail::fixed_batches(clips.size(), static_cast<size_t>(m.effective_batch));
  if (batches.empty()) throw InputError("avsim_eval_loss: fewer clips than one batch");
  double total = 0.0;
  for (const auto& idxs : batches) {
    Tape t;
    auto [ea, ev] = detail::embed_batch_nodes(t, m, clips, idxs);
    const int loss = detail::infonce_node(t, ea, ev, m.cfg.temperature, m.cfg.symmetric);
    total += static_cast<double>(t.val(loss)[0]);
  }
  return total / static_cast<double>(batches.size());
}

// Trains the audio/video encoder pair on the manifest's train split.
// Deterministic under a fixed cfg.seed; aborts with TrainingError if the loss
// turns non-finite.
inline AVSimModel train_avsim(const Manifest& manifest, const AVSimConfig& cfg) {
  cfg.validate();
  const auto clips = load_clip_tensors(manifest, "train", cfg.mel);
  if (clips.size() < 2) throw InputError("train_avsim: train split needs at least 2 clips");

  AVSimModel m;
  m.cfg = cfg;
  m.effective_batch = static_cast<int>(
      std::min<size_t>(static_cast<size_t>(cfg.batch_size), clips.size()));
  m.video_feat_dim = static_cast<int>(clips.front().video_in.dim(0)) - 1;
  for (const auto& c : clips) {
    if (c.video_in.shape != clips.front().video_in.shape ||
        c.audio_in.shape != clips.front().audio_in.shape) {
      throw InputError("train_avsim: inconsistent feature shapes across clips (" + c.clip_id +
                       ")");
    }
  }
  m.audio.init("audio", cfg.mel.n_mels + 1, cfg.hidden, cfg.embed_dim, 5, 2, 2,
               splitmix64(cfg.seed ^ 0xad10ULL));
  m.video.init("video", m.video_feat_dim + 1, cfg.hidden, cfg.embed_dim, 3, 1, 2,
               splitmix64(cfg.seed ^ 0x71de0ULL));

  m.initial_loss = avsim_eval_loss(m, clips);

  ParamRegistry reg;
  m.audio.register_params(&reg);
  m.video.register_params(&reg);
  nn::AdamW opt(cfg.lr);

  std::vector<size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = static_cast<size_t>(m.effective_batch);
  const int steps_per_epoch = static_cast<int>(clips.size() / batch);
  const int total_steps = std::max(1, cfg.epochs * steps_per_epoch);
  int global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(splitmix64(cfg.seed ^ (0x5eedfULL + static_cast<uint64_t>(epoch))));
    shuffle_rng.shuffle(order);
    double epoch_total = 0.0;
    int steps = 0;
    for (size_t start = 0; start + batch <= order.size(); start += batch) {
      // Cosine decay to a tenth of the base rate quiets the tail of training.
      const double frac = static_cast<double>(global_step) / total_steps;
      opt.set_lr(cfg.lr * (0.55 + 0.45 * std::cos(M_PI * frac)));
      ++global_step;
      Tape t;
      std::vector<size_t> idxs(order.begin() + static_cast<int64_t>(start),
                               order.begin() + static_cast<int64_t>(start + batch));
      auto [ea, ev] = detail::embed_batch_nodes(t, m, clips, idxs);
      const int loss = detail::infonce_node(t, ea, ev, cfg.temperature, cfg.symmetric);
      const double lv = static_cast<double>(t.val(loss)[0]);
      if (!std::isfinite(lv)) {
        std::ostringstream diag;
        diag << "train_avsim diverged: loss=" << lv << " at epoch " << epoch << " step " << steps
             << " (lr=" << cfg.lr << ", batch=" << batch << ")";
        throw TrainingError(diag.str());
      }
      reg.zero_grads();
      t.backward(loss);
      opt.step(reg.params());
      epoch_total += lv;
      ++steps;
    }
    if (steps == 0) throw InputError("train_avsim: train split smaller than one batch");
    m.epoch_losses.push_back(epoch_total / steps);
  }
  m.final_loss = m.epoch_losses.empty() ? m.initial_loss : m.epoch_losses.back();
  return m;
}

// ---------------------------------------------------------------------------
// Inference-time embedding helpers.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<float> embed_one(TemporalEncoder& enc, const Tensor& input) {
  Tape t;
  const int node = enc.forward(t, t.constant(input));
  const auto& v = t.val(node);  // (1, D)
  double sq = 0.0;
  for (int64_t i = 0; i < v.numel(); ++i) sq += static_cast<double>(v[i]) * v[i];
  const double nrm = std::sqrt(sq + 1e-12);
  std::vector<float> out(static_cast<size_t>(v.numel()));
  for (int64_t i = 0; i < v.numel(); ++i) out[static_cast<size_t>(i)] =
      static_cast<float>(v[i] / nrm);
  return out;
}

}  // namespace detail

inline Embedding embed_audio(AVSimModel& m, const Tensor& audio_in, const std::string& clip_id) {
  return Embedding{detail::embed_one(m.audio, audio_in), "audio", clip_id};
}

inline Embedding embed_video(AVSimModel& m, const Tensor& video_in, const std::string& clip_id) {
  return Embedding{detail::embed_one(m.video, video_in), "video", clip_id};
}

// Fraction of clips whose audio embedding ranks its own video embedding top-1
// against every other clip's video embedding. Chance level is 1/n.
inline double retrieval_top1(AVSimModel& m, const std::vector<ClipTensors>& clips) {
  if (clips.empty()) throw InputError("retrieval_top1: no clips");
  std::vector<std::vector<float>> ea, ev;
  for (const auto& c : clips) {
    ea.push_back(detail::embed_one(m.audio, c.audio_in));
    ev.push_back(detail::embed_one(m.video, c.video_in));
  }
  int hits = 0;
  for (size_t i = 0; i < clips.size(); ++i) {
    size_t best = 0;
    double best_dot = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < clips.size(); ++j) {
      double dot = 0.0;
      for (size_t k = 0; k < ea[i].size(); ++k) {
        dot += static_cast<double>(ea[i][k]) * ev[j][k];
      }
      if (dot > best_dot) {
        best_dot = dot;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(clips.size());
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

namespace detail {

inline ojson encoder_meta(const AVSimModel& m, const std::string& role) {
  const TemporalEncoder& enc = role == "audio" ? m.audio : m.video;
  ojson j;
  j["module"] = "avsim";
  j["role"] = role;
  j["config"] = m.cfg.to_json();
  j["in_channels"] = enc.in_channels;
  j["video_feat_dim"] = m.video_feat_dim;
  j["effective_batch"] = m.effective_batch;
  j["initial_loss"] = m.initial_loss;
  j["final_loss"] = m.final_loss;
  return j;
}

}  // namespace detail

inline void save_avsim(AVSimModel& m, const std::filesystem::path& audio_path,
                       const std::filesystem::path& video_path) {
  for (const std::string role : {"audio", "video"}) {
    Checkpoint ck;
    ck.meta = detail::encoder_meta(m, role).dump();
    ParamRegistry reg;
    (role == "audio" ? m.audio : m.video).register_params(&reg);
    reg.save(&ck);
    ck.save(role == "audio" ? audio_path : video_path);
  }
}

inline AVSimModel load_avsim(const std::filesystem::path& audio_path,
                             const std::filesystem::path& video_path) {
  AVSimModel m;
  for (const std::string role : {"audio", "video"}) {
    const auto path = role == "audio" ? audio_path : video_path;
    Checkpoint ck = Checkpoint::load(path);
    ojson j;
    try {
      j = ojson::parse(ck.meta);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad avsim checkpoint meta in " + path.string() + ": " + e.what());
    }
    if (j.value("module", "") != "avsim" || j.value("role", "") != role) {
      throw IoError("checkpoint " + path.string() + " is not an avsim " + role + " encoder");
    }
    m.cfg = AVSimConfig::from_json(j.at("config"));
    m.video_feat_dim = j.at("video_feat_dim").get<int>();
    m.effective_batch = j.at("effective_batch").get<int>();
    m.initial_loss = j.at("initial_loss").get<double>();
    m.final_loss = j.at("final_loss").get<double>();
    TemporalEncoder& enc = role == "audio" ? m.audio : m.video;
    if (role == "audio") {
      enc.init("audio", m.cfg.mel.n_mels + 1, m.cfg.hidden, m.cfg.embed_dim, 5, 2, 2, 0);
    } else {
      enc.init("video", m.video_feat_dim + 1, m.cfg.hidden, m.cfg.embed_dim, 3, 1, 2, 0);
    }
    ParamRegistry reg;
    enc.register_params(&reg);
    reg.load(ck);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Embedding index for retrieval-augmented conditioning.
// ---------------------------------------------------------------------------

inline constexpr char kIndexMagic[8] = {'A', '2', 'S', 'I', 'N', 'D', 'X', '1'};

class EmbeddingIndex {
 public:
  struct Entry {
    std::string clip_id;
    std::vector<float> vec;
  };

  EmbeddingIndex() = default;
  explicit EmbeddingIndex(int dim) : dim_(dim) {
    if (dim < 1) throw InputError("EmbeddingIndex: dim must be >= 1");
  }

  int dim() const { return dim_; }
  size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  // Stores a unit-renormalized copy; duplicate clip_ids are rejected.
  void add(const std::string& clip_id, std::vector<float> vec) {
    if (dim_ == 0) dim_ = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != dim_) {
      throw InputError("EmbeddingIndex: vector dim mismatch for " + clip_id);
    }
    for (const auto& e : entries_) {
      if (e.clip_id == clip_id) throw InputError("EmbeddingIndex: duplicate clip_id " + clip_id);
    }
    double sq = 0.0;
    for (float x : vec) sq += static_cast<double>(x) * x;
    if (sq < 1e-12) throw InputError("EmbeddingIndex: zero-norm embedding for " + clip_id);
    const double nrm = std::sqrt(sq);
    for (auto& x : vec) x = static_cast<float>(x / nrm);
    entries_.push_back(Entry{clip_id, std::move(vec)});
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os.write(kIndexMagic, 8);
    a2s::detail::write_pod<uint32_t>(os, static_cast<uint32_t>(dim_));
    a2s::detail::write_pod<uint64_t>(os, entries_.size());
    for (const auto& e : entries_) {
      a2s::detail::write_string(os, e.clip_id);
      os.write(reinterpret_cast<const char*>(e.vec.data()),
               static_cast<std::streamsize>(e.vec.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed: " + path.string());
  }

  static EmbeddingIndex load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open index: " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kIndexMagic, 8) != 0) {
      throw IoError("not an embedding index file: " + path.string());
    }
    EmbeddingIndex idx;
    idx.dim_ = static_cast<int>(a2s::detail::read_pod<uint32_t>(is));
    const uint64_t count = a2s::detail::read_pod<uint64_t>(is);
    for (uint64_t i = 0; i < count; ++i) {
      Entry e;
      e.clip_id = a2s::detail::read_string(is);
      e.vec.resize(static_cast<size_t>(idx.dim_));
      is.read(reinterpret_cast<char*>(e.vec.data()),
              static_cast<std::streamsize>(e.vec.size() * sizeof(float)));
      if (!is) throw IoError("truncated index file: " + path.string());
      idx.entries_.push_back(std::move(e));
    }
    return idx;
  }

 private:
  int dim_ = 0;
  std::vector<Entry> entries_;
};

// Returns the clip_id maximizing the dot product with the query; exact ties
// break toward the lexicographically smallest clip_id, so the result does not
// depend on insertion order.
inline std::string retrieve(const EmbeddingIndex& index, const std::vector<float>& video_emb) {
  if (index.size() == 0) throw InputError("retrieve: empty index");
  if (static_cast<int>(video_emb.size()) != index.dim()) {
    throw InputError("retrieve: query dim mismatch");
  }
  double sq = 0.0;
  for (float x : video_emb) sq += static_cast<double>(x) * x;
  if (std::fabs(std::sqrt(sq) - 1.0) > 1e-3) {
    throw InputError("retrieve: query embedding is not unit-norm");
  }
  const EmbeddingIndex::Entry* best = nullptr;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (const auto& e : index.entries()) {
    double dot = 0.0;
    for (size_t k = 0; k < video_emb.size(); ++k) {
      dot += static_cast<double>(e.vec[k]) * static_cast<double>(video_emb[k]);
    }
    if (dot > best_dot || (dot == best_dot && best != nullptr && e.clip_id < best->clip_id)) {
      best_dot = dot;
      best = &e;
    }
  }
  return best->clip_id;
}

// Produces the audio embedding for one manifest clip.
using ClipEmbedder = std::function<std::vector<float>(const ClipRecord&)>;

// Embedder backed by a trained audio encoder; the model and manifest must
// outlive the returned callable.
inline ClipEmbedder make_audio_embedder(AVSimModel& m, const Manifest& manifest) {
  return [&m, &manifest](const ClipRecord& rec) {
    int sr = 0;
    Waveform w;
    w.samples = read_wav(manifest.resolve(rec.wav_path), &sr);
    w.sample_rate = sr;
    return detail::embed_one(m.audio, audio_encoder_input(wav_to_mel(w, m.cfg.mel)));
  };
}

// Uniform subsample (without replacement) of the train split, embedded with
// `embedder`. pool_size <= 0 selects the full train split. If out_path is
// non-empty the index is persisted there.
inline EmbeddingIndex build_index(const Manifest& manifest, const ClipEmbedder& embedder,
                                  int pool_size, uint64_t seed,
                                  const std::filesystem::path& out_path = {}) {
  if (!embedder) throw InputError("build_index: null embedder");
  const auto train = manifest.split("train");
  if (train.empty()) throw InputError("build_index: empty train split");
  const int n = static_cast<int>(train.size());
  if (pool_size > n) {
    throw InputError("build_index: pool_size " + std::to_string(pool_size) + " exceeds " +
                     std::to_string(n) + " available train clips");
  }
  const int take = pool_size <= 0 ? n : pool_size;
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(splitmix64(seed ^ 0x1dcb00ULL));
  rng.shuffle(order);
  order.resize(static_cast<size_t>(take));
  std::sort(order.begin(), order.end());
  EmbeddingIndex idx;
  for (int i : order) {
    const ClipRecord& rec = train[static_cast<size_t>(i)];
    idx.add(rec.key(), embedder(rec));
  }
  if (!out_path.empty()) idx.save(out_path);
  return idx;
}

}  // namespace avsim
}  // namespace a2s

#endif  // A2S_AVSIM_HPP_
