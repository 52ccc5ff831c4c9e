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

// Convolutional variational autoencoder over log-mel spectrograms. The
// encoder compresses a (channels, n_mels, frames) image by 8x in each spatial
// dimension into a 4-channel latent; the decoder inverts the shape exactly.
// Trained with reconstruction MSE plus a small KL penalty, then frozen and
// reused by the latent diffusion model.

#ifndef A2S_VAE_HPP_
#define A2S_VAE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
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
namespace vae {

using ojson = nlohmann::ordered_json;

namespace detail {

inline ojson mel_to_json(const MelConfig& m) {
  ojson j;
  j["sample_rate"] = m.sample_rate;
  j["fft_size"] = m.fft_size;
  j["hop"] = m.hop;
  j["n_mels"] = m.n_mels;
  j["pad_to_frames"] = m.pad_to_frames;
  j["fmin"] = m.fmin;
  j["fmax"] = m.fmax;
  return j;
}

inline MelConfig mel_from_json(const ojson& j) {
  MelConfig m;
  m.sample_rate = j.at("sample_rate").get<int>();
  m.fft_size = j.at("fft_size").get<int>();
  m.hop = j.at("hop").get<int>();
  m.n_mels = j.at("n_mels").get<int>();
  m.pad_to_frames = j.at("pad_to_frames").get<int>();
  m.fmin = j.at("fmin").get<double>();
  m.fmax = j.at("fmax").get<double>();
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

struct VAEConfig {
  MelConfig mel;            // input geometry: height = n_mels, width = pad_to_frames
  int in_channels = 1;      // 3 duplicates the mel across channels (paper-shapes profile)
  int base_channels = 24;
  int latent_channels = 4;
  double kl_weight = 1e-6;
  double lr = 2e-3;
  int epochs = 10;
  int batch_size = 8;
  uint64_t seed = 0;

  int height() const { return mel.n_mels; }
  int width() const { return mel.pad_to_frames; }
  int latent_height() const { return mel.n_mels / 8; }
  int latent_width() const { return mel.pad_to_frames / 8; }

  std::vector<int64_t> input_shape() const { return {in_channels, height(), width()}; }
  std::vector<int64_t> latent_shape() const {
    return {latent_channels, latent_height(), latent_width()};
  }

  void validate() const {
    if (in_channels != 1 && in_channels != 3) {
      throw ConfigError("vae: in_channels must be 1 or 3 (mel duplication)");
    }
    if (height() % 8 != 0 || width() % 8 != 0 || height() < 8 || width() < 8) {
      throw ConfigError("vae: mel height and width must be positive multiples of 8");
    }
    if (base_channels < 4) throw ConfigError("vae: base_channels must be >= 4");
    if (latent_channels < 1) throw ConfigError("vae: latent_channels must be >= 1");
    if (kl_weight < 0.0) throw ConfigError("vae: kl_weight must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("vae: lr must be > 0");
    if (epochs < 0) throw ConfigError("vae: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("vae: batch_size must be >= 1");
  }

  ojson to_json() const {
    ojson j;
    j["mel"] = detail::mel_to_json(mel);
    j["in_channels"] = in_channels;
    j["base_channels"] = base_channels;
    j["latent_channels"] = latent_channels;
    j["kl_weight"] = kl_weight;
    j["lr"] = lr;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    return j;
  }

  static VAEConfig from_json(const ojson& j) {
    VAEConfig c;
    c.mel = detail::mel_from_json(j.at("mel"));
    c.in_channels = j.at("in_channels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.latent_channels = j.at("latent_channels").get<int>();
    c.kl_weight = j.at("kl_weight").get<double>();
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
  }
};

// A point in the VAE latent space: (latent_channels, height/8, width/8).
struct LatentTensor {
  Tensor values;

  void validate(const VAEConfig& cfg) const {
    if (values.shape != cfg.latent_shape()) {
      std::ostringstream os;
      os << "latent shape mismatch: got (";
      for (size_t i = 0; i < values.shape.size(); ++i) {
        os << values.shape[i] << (i + 1 < values.shape.size() ? "," : "");
      }
      os << "), config expects (" << cfg.latent_channels << "," << cfg.latent_height() << ","
         << cfg.latent_width() << ")";
      throw ConfigError(os.str());
    }
    if (!values.all_finite()) throw InputError("latent contains non-finite values");
  }
};

// ---------------------------------------------------------------------------
// Input/output adapters between MelSpectrogram and the (C, H, W) image form.
// ---------------------------------------------------------------------------

// (frames, n_mels) log-mel -> (in_channels, n_mels, frames) unit-range image.
// All channels are copies when in_channels is 3.
inline Tensor vae_input_from_mel(const MelSpectrogram& m, const VAEConfig& cfg) {
  if (m.values.rank() != 2 || m.values.dim(0) != cfg.width() || m.values.dim(1) != cfg.height()) {
    throw ConfigError("vae: mel spectrogram shape does not match the configured geometry");
  }
  const Tensor unit = mel_to_unit(m.values);
  Tensor out({cfg.in_channels, cfg.height(), cfg.width()});
  for (int64_t h = 0; h < cfg.height(); ++h) {
    for (int64_t w = 0; w < cfg.width(); ++w) {
      const float v = unit[w * cfg.height() + h];
      for (int64_t c = 0; c < cfg.in_channels; ++c) {
        out[(c * cfg.height() + h) * cfg.width() + w] = v;
      }
    }
  }
  return out;
}

// Inverse adapter: averages channels, transposes back to (frames, n_mels),
// and restores the log-mel range. content_frames/n_samples default to the
// full padded width when unknown.
inline MelSpectrogram mel_from_vae_output(const Tensor& x, const VAEConfig& cfg,
                                          int content_frames = 0, int64_t n_samples = 0) {
  if (x.shape != cfg.input_shape()) {
    throw ConfigError("vae: output image shape does not match the configured geometry");
  }
  Tensor unit({cfg.width(), cfg.height()});
  for (int64_t w = 0; w < cfg.width(); ++w) {
    for (int64_t h = 0; h < cfg.height(); ++h) {
      double acc = 0.0;
      for (int64_t c = 0; c < cfg.in_channels; ++c) {
        acc += x[(c * cfg.height() + h) * cfg.width() + w];
      }
      unit[w * cfg.height() + h] = static_cast<float>(acc / cfg.in_channels);
    }
  }
  MelSpectrogram m;
  m.config = cfg.mel;
  m.values = unit_to_mel(unit);
  m.content_frames = content_frames > 0 ? content_frames : cfg.width();
  m.n_samples = n_samples;
  return m;
}

// ---------------------------------------------------------------------------
// Model.
// ---------------------------------------------------------------------------

struct VAEModel {
  VAEConfig cfg;
  // Encoder: a full-resolution stem with few channels (cheap where the image
  // is large), then three stride-2 stages and two latent heads.
  nn::Conv2dT<float> e0, e1, e2, e3, mu_head, logvar_head;
  // Decoder: nearest-neighbor upsampling between stride-1 convolutions,
  // tapering channels as resolution grows.
  nn::Conv2dT<float> d0, d1, d2, out;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;

  void init(const VAEConfig& config) {
    cfg = config;
    cfg.validate();
    Rng rng(splitmix64(cfg.seed ^ 0x7ae5eedULL));
    ParamRegistry scratch;
    const int b = cfg.base_channels;
    const int half = std::max(4, b / 2);
    e0.init("vae.e0", cfg.in_channels, half, 3, 3, 1, 1, rng, scratch);
    e1.init("vae.e1", half, b, 3, 3, 2, 1, rng, scratch);
    e2.init("vae.e2", b, 2 * b, 3, 3, 2, 1, rng, scratch);
    e3.init("vae.e3", 2 * b, 2 * b, 3, 3, 2, 1, rng, scratch);
    mu_head.init("vae.mu", 2 * b, cfg.latent_channels, 3, 3, 1, 1, rng, scratch);
    logvar_head.init("vae.logvar", 2 * b, cfg.latent_channels, 3, 3, 1, 1, rng, scratch, 0.1);
    // Start with a small posterior spread so early reconstruction gradients
    // are not swamped by unit-variance latent noise.
    logvar_head.b.value.fill(-4.0f);
    d0.init("vae.d0", cfg.latent_channels, 2 * b, 3, 3, 1, 1, rng, scratch);
    d1.init("vae.d1", 2 * b, b, 3, 3, 1, 1, rng, scratch);
    d2.init("vae.d2", b, half, 3, 3, 1, 1, rng, scratch);
    out.init("vae.out", half, cfg.in_channels, 3, 3, 1, 1, rng, scratch);
  }

  void register_params(ParamRegistry* reg) {
    for (nn::Conv2dT<float>* c : {&e0, &e1, &e2, &e3, &mu_head, &logvar_head,
                                  &d0, &d1, &d2, &out}) {
      reg->add(&c->w);
      reg->add(&c->b);
    }
  }

  // x: (in_channels, H, W) node -> mu node (latent shape); *logvar_node gets
  // the matching log-variance node.
  int encode_node(Tape& t, int x, int* logvar_node = nullptr) {
    if (t.val(x).shape != cfg.input_shape()) {
      throw ConfigError("vae encode: input shape does not match the configured geometry");
    }
    int h = ag::silu(t, e0.forward(t, x));
    h = ag::silu(t, e1.forward(t, h));
    h = ag::silu(t, e2.forward(t, h));
    h = ag::silu(t, e3.forward(t, h));
    const int mu = mu_head.forward(t, h);
    if (logvar_node != nullptr) *logvar_node = logvar_head.forward(t, h);
    return mu;
  }

  // z: latent node -> reconstructed (in_channels, H, W) node.
  int decode_node(Tape& t, int z) {
    if (t.val(z).shape != cfg.latent_shape()) {
      throw ConfigError("vae decode: latent shape does not match the configured geometry");
    }
    int h = ag::silu(t, d0.forward(t, z));
    h = ag::silu(t, d1.forward(t, ag::upsample_nearest2x(t, h)));
    h = ag::silu(t, d2.forward(t, ag::upsample_nearest2x(t, h)));
    return out.forward(t, ag::upsample_nearest2x(t, h));
  }
};

// Deterministic encoding: the posterior mean.
inline LatentTensor vae_encode(VAEModel& m, const MelSpectrogram& mel) {
  const Tensor x = vae_input_from_mel(mel, m.cfg);
  Tape t;
  const int mu = m.encode_node(t, t.constant(x));
  return LatentTensor{t.val(mu)};
}

inline MelSpectrogram vae_decode(VAEModel& m, const LatentTensor& z, int content_frames = 0,
                                 int64_t n_samples = 0) {
  z.validate(m.cfg);
  Tape t;
  const int xhat = m.decode_node(t, t.constant(z.values));
  return mel_from_vae_output(t.val(xhat), m.cfg, content_frames, n_samples);
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

namespace detail {

// recon MSE + kl_weight * KL(q(z|x) || N(0, I)), both as per-element means.
// With eps == nullptr the latent is the posterior mean (deterministic eval).
inline int loss_node(Tape& t, VAEModel& m, const Tensor& x, const Tensor* eps) {
  const int xn = t.constant(x);
  int logvar = -1;
  const int mu = m.encode_node(t, xn, &logvar);
  int z = mu;
  if (eps != nullptr) {
    const int std_dev = ag::exp_op(t, ag::scale(t, logvar, 0.5));
    z = ag::add(t, mu, ag::mul(t, std_dev, t.constant(*eps)));
  }
  const int xhat = m.decode_node(t, z);
  const int recon = ag::mse(t, xhat, x);
  // KL per element: -0.5 * (1 + logvar - mu^2 - exp(logvar)).
  const int ones = t.constant(Tensor::full(m.cfg.latent_shape(), 1.0f));
  const int inner = ag::sub(t, ag::sub(t, ag::add(t, ones, logvar), ag::mul(t, mu, mu)),
                            ag::exp_op(t, logvar));
  const int kl = ag::scale(t, ag::mean_all(t, inner), -0.5);
  return ag::add(t, recon, ag::scale(t, kl, m.cfg.kl_weight));
}

inline double eval_loss(VAEModel& m, const std::vector<Tensor>& inputs, size_t max_n = 32) {
  const size_t n = std::min(inputs.size(), max_n);
  if (n == 0) throw InputError("vae eval: no inputs");
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    Tape t;
    total += static_cast<double>(t.val(loss_node(t, m, inputs[i], nullptr))[0]);
  }
  return total / static_cast<double>(n);
}

}  // namespace detail

inline std::vector<Tensor> load_split_inputs(const Manifest& manifest, const std::string& split,
                                             const VAEConfig& cfg) {
  std::vector<Tensor> inputs;
  for (const auto& rec : manifest.split(split)) {
    Waveform w;
    int sr = 0;
    w.samples = read_wav(manifest.resolve(rec.wav_path), &sr);
    w.sample_rate = sr;
    if (sr != cfg.mel.sample_rate) {
      throw InputError("vae: clip " + rec.key() + " sample rate " + std::to_string(sr) +
                       " does not match mel config " + std::to_string(cfg.mel.sample_rate));
    }
    inputs.push_back(vae_input_from_mel(wav_to_mel(w, cfg.mel), cfg));
  }
  return inputs;
}

inline VAEModel train_vae(const Manifest& manifest, const VAEConfig& cfg) {
  cfg.validate();
  VAEModel m;
  m.init(cfg);
  const std::vector<Tensor> inputs = load_split_inputs(manifest, "train", cfg);
  if (inputs.empty()) throw InputError("train_vae: empty train split");

  m.initial_loss = detail::eval_loss(m, inputs);
  ParamRegistry reg;
  m.register_params(&reg);
  nn::AdamW opt(cfg.lr);
  Rng noise_rng(splitmix64(cfg.seed ^ 0x40153ULL));

  std::vector<size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = std::min<size_t>(static_cast<size_t>(cfg.batch_size), inputs.size());
  const size_t steps_per_epoch = inputs.size() / batch;
  const size_t total_steps = std::max<size_t>(1, static_cast<size_t>(cfg.epochs) * steps_per_epoch);
  size_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(splitmix64(cfg.seed ^ (0xe90c4ULL + static_cast<uint64_t>(epoch))));
    shuffle_rng.shuffle(order);
    double epoch_total = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start + batch <= order.size(); start += batch) {
      // Cosine decay to a tenth of the base rate quiets the tail of training.
      const double frac = static_cast<double>(global_step) / static_cast<double>(total_steps);
      opt.set_lr(cfg.lr * (0.55 + 0.45 * std::cos(M_PI * frac)));
      ++global_step;
      reg.zero_grads();
      for (size_t k = 0; k < batch; ++k) {
        const Tensor& x = inputs[order[start + k]];
        const Tensor eps = Tensor::randn(cfg.latent_shape(), noise_rng);
        Tape t;
        const int loss = detail::loss_node(t, m, x, &eps);
        const double lv = static_cast<double>(t.val(loss)[0]);
        if (!std::isfinite(lv)) {
          std::ostringstream diag;
          diag << "train_vae diverged: loss=" << lv << " at epoch " << epoch << " example "
               << seen << " (lr=" << cfg.lr << ")";
          throw TrainingError(diag.str());
        }
        // Mean-of-batch gradient: scale each example's root before backward.
        t.backward(ag::scale(t, loss, 1.0 / static_cast<double>(batch)));
        epoch_total += lv;
        ++seen;
      }
      opt.step(reg.params());
    }
    if (seen == 0) throw InputError("train_vae: train split smaller than one batch");
    m.epoch_losses.push_back(epoch_total / static_cast<double>(seen));
  }
  m.final_loss = detail::eval_loss(m, inputs);
  return m;
}

// Pooled reconstruction error and data variance over one split, in the
// log-mel domain (ratio is invariant to the affine unit-range mapping).
struct ReconStats {
  double mse = 0.0;
  double variance = 0.0;
  int n_clips = 0;
};

inline ReconStats vae_recon_stats(VAEModel& m, const Manifest& manifest,
                                  const std::string& split) {
  const std::vector<Tensor> inputs = load_split_inputs(manifest, split, m.cfg);
  if (inputs.empty()) throw InputError("vae_recon_stats: split '" + split + "' is empty");
  const double s = kMelUnitScale;  // unit -> log-mel scale factor
  double sum = 0.0, sumsq = 0.0, err = 0.0;
  int64_t count = 0;
  for (const Tensor& x : inputs) {
    Tape t;
    const int xhat = m.decode_node(t, m.encode_node(t, t.constant(x)));
    const Tensor& r = t.val(xhat);
    for (int64_t i = 0; i < x.numel(); ++i) {
      const double v = static_cast<double>(x[i]) * s;
      const double d = (static_cast<double>(r[i]) - static_cast<double>(x[i])) * s;
      sum += v;
      sumsq += v * v;
      err += d * d;
    }
    count += x.numel();
  }
  ReconStats st;
  st.n_clips = static_cast<int>(inputs.size());
  const double mean = sum / static_cast<double>(count);
  st.variance = sumsq / static_cast<double>(count) - mean * mean;
  st.mse = err / static_cast<double>(count);
  return st;
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

inline void save_vae(VAEModel& m, const std::filesystem::path& path) {
  Checkpoint ck;
  ojson meta;
  meta["module"] = "vae";
  meta["config"] = m.cfg.to_json();
  meta["initial_loss"] = m.initial_loss;
  meta["final_loss"] = m.final_loss;
  meta["epoch_losses"] = m.epoch_losses;
  ck.meta = meta.dump();
  ParamRegistry reg;
  m.register_params(&reg);
  reg.save(&ck);
  ck.save(path);
}

inline VAEModel load_vae(const std::filesystem::path& path) {
  Checkpoint ck = Checkpoint::load(path);
  ojson meta;
  try {
    meta = ojson::parse(ck.meta);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad vae checkpoint meta in " + path.string() + ": " + e.what());
  }
  if (meta.value("module", "") != "vae") {
    throw IoError("checkpoint " + path.string() + " is not a vae checkpoint");
  }
  VAEModel m;
  m.init(VAEConfig::from_json(meta.at("config")));
  m.initial_loss = meta.at("initial_loss").get<double>();
  m.final_loss = meta.at("final_loss").get<double>();
  m.epoch_losses = meta.at("epoch_losses").get<std::vector<double>>();
  ParamRegistry reg;
  m.register_params(&reg);
  reg.load(ck);
  return m;
}

}  // namespace vae
}  // namespace a2s

#endif  // A2S_VAE_HPP_
