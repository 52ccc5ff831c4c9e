// Latent diffusion model for ambient-aware video-to-audio generation.
//
// A small U-Net predicts the noise added to VAE mel-latents. Denoising is
// conditioned, via cross-attention, on two token streams:
//   c_v : per-frame video features, linearly projected to the context width
//   c_a : the mel-latent of a *conditioning* audio clip (a temporal neighbor
//         during training; a retrieved / low-ambient / caller-provided clip
//         at inference), one token per latent time column.
// Classifier-free guidance is trained in by dropping c_v with probability
// drop_cv (the audio condition is never dropped for the full model), and is
// applied at sampling time with weight omega.
//
// The U-Net is templated on the scalar type so gradient checks can run the
// exact same code in double precision.

#ifndef A2S_AVLDM_HPP_
#define A2S_AVLDM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "a2s/autograd.hpp"
#include "a2s/common.hpp"
#include "a2s/conditioning.hpp"
#include "a2s/diffusion.hpp"
#include "a2s/dsp.hpp"
#include "a2s/io.hpp"
#include "a2s/manifest.hpp"
#include "a2s/nn.hpp"
#include "a2s/rng.hpp"
#include "a2s/tensor.hpp"
#include "a2s/vae.hpp"

namespace a2s::avldm {

// ---------------------------------------------------------------------------
// Sampling-time configuration.
// ---------------------------------------------------------------------------

enum class SamplerKind { kDdpm, kDpmSolver2 };

inline std::string sampler_to_string(SamplerKind s) {
  return s == SamplerKind::kDdpm ? "ddpm" : "dpm_solver2";
}

inline SamplerKind sampler_from_string(const std::string& s) {
  if (s == "ddpm") return SamplerKind::kDdpm;
  if (s == "dpm_solver2") return SamplerKind::kDpmSolver2;
  throw ConfigError("unknown sampler: '" + s + "' (expected ddpm|dpm_solver2)");
}

struct GuidanceConfig {
  double omega = 6.5;                          // CFG weight; 1.0 disables guidance
  int steps = 25;                              // grid size for dpm_solver2
  SamplerKind sampler = SamplerKind::kDpmSolver2;
  CfgNullMode null_mode = CfgNullMode::kBoth;  // which streams the uncond branch nulls

  void validate() const {
    if (!std::isfinite(omega)) throw ConfigError("guidance: omega must be finite");
    if (steps < 1) throw ConfigError("guidance: steps must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Model / training configuration.
// ---------------------------------------------------------------------------

struct LdmConfig {
  // Context geometry.
  int d_c = 128;            // context token width
  int t_v = 16;             // video tokens (frames after resampling)
  int t_a = 12;             // audio tokens; must equal the latent width
  int video_feat_dim = 24;  // columns of the raw video feature matrix

  // U-Net size.
  int base_channels = 48;
  int time_dim = 128;  // sinusoidal time feature / embedding width (even)
  int gn_groups = 8;

  // Diffusion schedule.
  int t_steps = 1000;
  double beta_1 = 8.5e-4;
  double beta_t = 1.2e-2;

  // Generation length.
  double clip_seconds = 3.0;

  // Training.
  double drop_cv = 0.2;        // P(video condition dropped) per train step
  bool unconditional = false;  // ablation arm: train with both streams null
  double lr = 2e-3;
  int epochs = 8;
  int batch_size = 8;
  uint64_t seed = 0;

  void validate() const {
    if (d_c < 2) throw ConfigError("ldm: d_c must be >= 2");
    if (t_v < 1) throw ConfigError("ldm: t_v must be >= 1");
    if (t_a < 1) throw ConfigError("ldm: t_a must be >= 1");
    if (video_feat_dim < 1) throw ConfigError("ldm: video_feat_dim must be >= 1");
    if (base_channels < 2) throw ConfigError("ldm: base_channels must be >= 2");
    if (gn_groups < 1 || base_channels % gn_groups != 0) {
      throw ConfigError("ldm: base_channels must be a positive multiple of gn_groups");
    }
    if (time_dim < 2 || time_dim % 2 != 0) {
      throw ConfigError("ldm: time_dim must be an even value >= 2");
    }
    if (t_steps < 1) throw ConfigError("ldm: t_steps must be >= 1");
    if (!(beta_1 > 0.0) || !(beta_t > 0.0) || beta_1 > beta_t || beta_t >= 1.0) {
      throw ConfigError("ldm: betas must satisfy 0 < beta_1 <= beta_t < 1");
    }
    if (!(clip_seconds > 0.0)) throw ConfigError("ldm: clip_seconds must be positive");
    if (drop_cv < 0.0 || drop_cv > 1.0) throw ConfigError("ldm: drop_cv must be in [0, 1]");
    if (!(lr > 0.0)) throw ConfigError("ldm: lr must be positive");
    if (epochs < 0) throw ConfigError("ldm: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("ldm: batch_size must be >= 1");
  }

  ojson to_json() const {
    ojson j;
    j["d_c"] = d_c;
    j["t_v"] = t_v;
    j["t_a"] = t_a;
    j["video_feat_dim"] = video_feat_dim;
    j["base_channels"] = base_channels;
    j["time_dim"] = time_dim;
    j["gn_groups"] = gn_groups;
    j["t_steps"] = t_steps;
    j["beta_1"] = beta_1;
    j["beta_t"] = beta_t;
    j["clip_seconds"] = clip_seconds;
    j["drop_cv"] = drop_cv;
    j["unconditional"] = unconditional;
    j["lr"] = lr;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    return j;
  }

  static LdmConfig from_json(const ojson& j) {
    LdmConfig c;
    c.d_c = j.value("d_c", c.d_c);
    c.t_v = j.value("t_v", c.t_v);
    c.t_a = j.value("t_a", c.t_a);
    c.video_feat_dim = j.value("video_feat_dim", c.video_feat_dim);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.time_dim = j.value("time_dim", c.time_dim);
    c.gn_groups = j.value("gn_groups", c.gn_groups);
    c.t_steps = j.value("t_steps", c.t_steps);
    c.beta_1 = j.value("beta_1", c.beta_1);
    c.beta_t = j.value("beta_t", c.beta_t);
    c.clip_seconds = j.value("clip_seconds", c.clip_seconds);
    c.drop_cv = j.value("drop_cv", c.drop_cv);
    c.unconditional = j.value("unconditional", c.unconditional);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Projected conditions for one example.
//
// c_v/c_a hold *projected* context tokens. A null flag means the stream is
// replaced by its learned position embeddings alone, which is exactly what a
// zero token tensor produces; the model never sees a "missing" shape.
// ---------------------------------------------------------------------------

struct ConditionBundle {
  Tensor c_v;  // (t_v, d_c)
  Tensor c_a;  // (t_a, d_c)
  bool null_cv = false;
  bool null_ca = false;

  void validate(const LdmConfig& cfg) const {
    const std::vector<int64_t> sv{cfg.t_v, cfg.d_c};
    const std::vector<int64_t> sa{cfg.t_a, cfg.d_c};
    if (!null_cv && c_v.shape != sv) {
      throw ConfigError("condition bundle: c_v must be (" + std::to_string(cfg.t_v) + ", " +
                        std::to_string(cfg.d_c) + ")");
    }
    if (!null_ca && c_a.shape != sa) {
      throw ConfigError("condition bundle: c_a must be (" + std::to_string(cfg.t_a) + ", " +
                        std::to_string(cfg.d_c) + ")");
    }
  }
};

// ---------------------------------------------------------------------------
// Video feature resampling (nearest frame), so clips rendered at a different
// fps still produce exactly t_v tokens.
// ---------------------------------------------------------------------------

inline Tensor resample_video_rows(const Tensor& feats, int target_rows) {
  if (feats.rank() != 2 || feats.shape[0] < 1) {
    throw InputError("resample_video_rows: features must be a non-empty (frames, dim) matrix");
  }
  if (target_rows < 1) throw InputError("resample_video_rows: target_rows must be >= 1");
  const int64_t src = feats.shape[0];
  const int64_t dim = feats.shape[1];
  if (src == target_rows) return feats;
  Tensor out({target_rows, dim});
  for (int64_t i = 0; i < target_rows; ++i) {
    auto j = static_cast<int64_t>((static_cast<double>(i) + 0.5) * static_cast<double>(src) /
                                  static_cast<double>(target_rows));
    j = std::clamp<int64_t>(j, 0, src - 1);
    for (int64_t d = 0; d < dim; ++d) out[i * dim + d] = feats[j * dim + d];
  }
  return out;
}

// ---------------------------------------------------------------------------
// U-Net building blocks.
// ---------------------------------------------------------------------------

template <typename S>
struct ResBlockT {
  nn::GroupNormT<S> gn_a, gn_b;
  nn::Conv2dT<S> conv_a, conv_b;
  nn::LinearT<S> time_lin;

  // conv_b starts at zero so the block is the identity at initialization.
  void init(const std::string& name, int64_t channels, int64_t time_dim, int groups, Rng& rng,
            ParamRegistryT<S>& reg) {
    gn_a.init(name + ".gn_a", channels, groups, reg);
    conv_a.init(name + ".conv_a", channels, channels, 3, 3, 1, 1, rng, reg);
    time_lin.init(name + ".time", time_dim, channels, rng, reg);
    gn_b.init(name + ".gn_b", channels, groups, reg);
    conv_b.init(name + ".conv_b", channels, channels, 3, 3, 1, 1, rng, reg, 0.0);
  }

  void set_groups(int groups) {
    gn_a.groups = groups;
    gn_b.groups = groups;
  }

  // x: (C, H, W), temb: (1, time_dim) -> (C, H, W)
  int forward(TapeT<S>& t, int x, int temb) {
    int h = ag::conv2d(t, ag::silu(t, gn_a.forward(t, x)), t.param(conv_a.w), t.param(conv_a.b),
                       3, 3, 1, 1);
    h = ag::add_channel(t, h, time_lin.forward(t, temb));
    h = ag::conv2d(t, ag::silu(t, gn_b.forward(t, h)), t.param(conv_b.w), t.param(conv_b.b), 3, 3,
                   1, 1);
    return ag::add(t, x, h);
  }
};

template <typename S>
struct AttnBlockT {
  nn::GroupNormT<S> norm;
  nn::CrossAttentionT<S> attn;
  int64_t channels = 0;

  // Output projection starts at zero so the block is the identity at init.
  void init(const std::string& name, int64_t channels_, int64_t d_ctx, int groups, Rng& rng,
            ParamRegistryT<S>& reg) {
    channels = channels_;
    norm.init(name + ".norm", channels, groups, reg);
    attn.init(name + ".attn", channels, d_ctx, channels, rng, reg, 0.0);
  }

  // x: (C, H, W), ctx: (T_ctx, d_ctx) -> (C, H, W)
  int forward(TapeT<S>& t, int x, int ctx) {
    const auto shape = t.val(x).shape;  // copy: tape references go stale on push
    const int64_t hw = shape[1] * shape[2];
    int tok = ag::transpose(t, ag::reshape(t, norm.forward(t, x), {channels, hw}));
    tok = attn.forward(t, tok, ctx);  // (HW, C)
    const int back = ag::reshape(t, ag::transpose(t, tok), {channels, shape[1], shape[2]});
    return ag::add(t, x, back);
  }
};

// ---------------------------------------------------------------------------
// The denoiser U-Net. Two resolutions with cross-attention at each, plus a
// bottleneck ResBlock. Video/audio token projections and per-stream position
// embeddings are part of the model and train jointly.
// ---------------------------------------------------------------------------

template <typename S>
struct UNetT {
  LdmConfig cfg;
  int64_t latent_c = 0, latent_h = 0, latent_w = 0;

  nn::LinearT<S> time0, time1;
  nn::Conv2dT<S> conv_in;
  ResBlockT<S> rb1;
  AttnBlockT<S> att1;
  nn::Conv2dT<S> down;
  ResBlockT<S> rb2;
  AttnBlockT<S> att2;
  ResBlockT<S> mid;
  nn::Conv2dT<S> up_conv;
  nn::Conv2dT<S> merge;
  ResBlockT<S> rb3;
  AttnBlockT<S> att3;
  nn::GroupNormT<S> out_norm;
  nn::Conv2dT<S> out_conv;

  ParamT<S> pos_v, pos_a;               // (t_v, d_c), (t_a, d_c)
  nn::LinearT<S> video_proj;            // video_feat_dim -> d_c
  nn::LinearT<S> audio_proj0, audio_proj1;  // latent column (C*H) -> d_c -> d_c

  void init(const LdmConfig& config, const std::vector<int64_t>& latent_shape) {
    config.validate();
    cfg = config;
    if (latent_shape.size() != 3) throw ConfigError("unet: latent shape must be (C, H, W)");
    latent_c = latent_shape[0];
    latent_h = latent_shape[1];
    latent_w = latent_shape[2];
    if (latent_h % 2 != 0 || latent_w % 2 != 0) {
      throw ConfigError("unet: latent height and width must be even");
    }
    if (cfg.t_a != latent_w) {
      throw ConfigError("unet: t_a (" + std::to_string(cfg.t_a) +
                        ") must equal the latent width (" + std::to_string(latent_w) + ")");
    }
    Rng rng(splitmix64(cfg.seed ^ 0x1d3a5f7ULL));
    ParamRegistryT<S> scratch;  // init-time registry; callers re-register
    const int64_t b = cfg.base_channels;
    const int g = cfg.gn_groups;

    time0.init("unet.time0", cfg.time_dim, cfg.time_dim, rng, scratch);
    time1.init("unet.time1", cfg.time_dim, cfg.time_dim, rng, scratch);

    conv_in.init("unet.conv_in", latent_c, b, 3, 3, 1, 1, rng, scratch);
    rb1.init("unet.rb1", b, cfg.time_dim, g, rng, scratch);
    att1.init("unet.att1", b, cfg.d_c, g, rng, scratch);
    down.init("unet.down", b, 2 * b, 3, 3, 2, 1, rng, scratch);
    rb2.init("unet.rb2", 2 * b, cfg.time_dim, g, rng, scratch);
    att2.init("unet.att2", 2 * b, cfg.d_c, g, rng, scratch);
    mid.init("unet.mid", 2 * b, cfg.time_dim, g, rng, scratch);
    up_conv.init("unet.up", 2 * b, b, 3, 3, 1, 1, rng, scratch);
    merge.init("unet.merge", 2 * b, b, 3, 3, 1, 1, rng, scratch);
    rb3.init("unet.rb3", b, cfg.time_dim, g, rng, scratch);
    att3.init("unet.att3", b, cfg.d_c, g, rng, scratch);
    out_norm.init("unet.out_norm", b, g, scratch);
    // Zero-initialized head: the untrained model predicts eps == 0 exactly.
    out_conv.init("unet.out_conv", b, latent_c, 3, 3, 1, 1, rng, scratch, 0.0);

    pos_v.init("unet.pos_v", kaiming_scaled(rng, cfg.t_v, cfg.d_c));
    pos_a.init("unet.pos_a", kaiming_scaled(rng, cfg.t_a, cfg.d_c));
    video_proj.init("unet.video_proj", cfg.video_feat_dim, cfg.d_c, rng, scratch);
    audio_proj0.init("unet.audio_proj0", latent_c * latent_h, cfg.d_c, rng, scratch);
    audio_proj1.init("unet.audio_proj1", cfg.d_c, cfg.d_c, rng, scratch);
  }

  void register_params(ParamRegistryT<S>* reg) {
    for (auto* lin : {&time0, &time1, &video_proj, &audio_proj0, &audio_proj1}) {
      reg->add(&lin->w);
      reg->add(&lin->b);
    }
    for (auto* c : {&conv_in, &down, &up_conv, &merge, &out_conv}) {
      reg->add(&c->w);
      reg->add(&c->b);
    }
    for (auto* rb : {&rb1, &rb2, &mid, &rb3}) {
      reg->add(&rb->gn_a.gamma);
      reg->add(&rb->gn_a.beta);
      reg->add(&rb->conv_a.w);
      reg->add(&rb->conv_a.b);
      reg->add(&rb->time_lin.w);
      reg->add(&rb->time_lin.b);
      reg->add(&rb->gn_b.gamma);
      reg->add(&rb->gn_b.beta);
      reg->add(&rb->conv_b.w);
      reg->add(&rb->conv_b.b);
    }
    for (auto* ab : {&att1, &att2, &att3}) {
      reg->add(&ab->norm.gamma);
      reg->add(&ab->norm.beta);
      reg->add(&ab->attn.wq);
      reg->add(&ab->attn.wk);
      reg->add(&ab->attn.wv);
      reg->add(&ab->attn.wo);
    }
    reg->add(&pos_v);
    reg->add(&pos_a);
  }

  // Raw video features (t_v, video_feat_dim) -> projected tokens (t_v, d_c).
  int video_token_node(TapeT<S>& t, const TensorT<S>& feats) {
    if (feats.shape != std::vector<int64_t>{cfg.t_v, cfg.video_feat_dim}) {
      throw ConfigError("unet: video features must be (" + std::to_string(cfg.t_v) + ", " +
                        std::to_string(cfg.video_feat_dim) + ")");
    }
    return video_proj.forward(t, t.constant(feats));
  }

  // Audio latent (C, H, W) -> projected tokens (t_a, d_c), one per time column.
  int audio_token_node(TapeT<S>& t, const TensorT<S>& latent) {
    if (latent.shape != std::vector<int64_t>{latent_c, latent_h, latent_w}) {
      throw ConfigError("unet: audio latent must be (" + std::to_string(latent_c) + ", " +
                        std::to_string(latent_h) + ", " + std::to_string(latent_w) + ")");
    }
    int cols = ag::transpose(t, ag::reshape(t, t.constant(latent), {latent_c * latent_h, latent_w}));
    cols = ag::silu(t, audio_proj0.forward(t, cols));
    return audio_proj1.forward(t, cols);  // (t_a, d_c)
  }

  // Context rows: position embeddings plus tokens; a null stream (-1) is the
  // position embeddings alone, identical to passing zero tokens.
  int context_node(TapeT<S>& t, int cv_tok, int ca_tok) {
    const int pv = cv_tok < 0 ? t.param(pos_v) : ag::add(t, t.param(pos_v), cv_tok);
    const int pa = ca_tok < 0 ? t.param(pos_a) : ag::add(t, t.param(pos_a), ca_tok);
    return ag::concat_rows(t, {pv, pa});
  }

  // eps prediction: z_t constant (C, H, W) + timestep + context node.
  int eps_node(TapeT<S>& t, int z_t, int t_step, int ctx) {
    const int tfeat = t.constant(nn::sinusoidal_time_features<S>(t_step, cfg.time_dim));
    const int temb = ag::silu(t, time1.forward(t, ag::silu(t, time0.forward(t, tfeat))));

    const int h0 = conv_in.forward(t, z_t);
    const int h1 = att1.forward(t, rb1.forward(t, h0, temb), ctx);
    int h2 = down.forward(t, h1);
    h2 = att2.forward(t, rb2.forward(t, h2, temb), ctx);
    const int h3 = mid.forward(t, h2, temb);
    int u = up_conv.forward(t, ag::upsample_nearest2x(t, h3));
    u = merge.forward(t, ag::concat_channels(t, u, h1));
    u = att3.forward(t, rb3.forward(t, u, temb), ctx);
    return out_conv.forward(t, ag::silu(t, out_norm.forward(t, u)));
  }

 private:
  static TensorT<S> kaiming_scaled(Rng& rng, int64_t rows, int64_t cols) {
    TensorT<S> t({rows, cols});
    const double sd = 0.02;  // small position embeddings, GPT-style init
    for (auto& v : t.data) v = static_cast<S>(rng.gaussian() * sd);
    return t;
  }
};

using UNet = UNetT<float>;

// ---------------------------------------------------------------------------
// The on-tape denoising loss used for training and gradient checks:
//   || eps_hat(q_sample(z0, t, eps), t, ctx) - eps ||^2 / numel
// Conditions are raw inputs (video features / neighbor latent); pass nullptr
// to null a stream.
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> q_sample_t(const TensorT<S>& z0, int t_step, const TensorT<S>& eps,
                      const DiffusionSchedule& sched) {
  sched.check_t(t_step);
  if (z0.shape != eps.shape) throw InputError("q_sample: shape mismatch");
  const S a = static_cast<S>(sched.a_of(t_step));
  const S s = static_cast<S>(sched.s_of(t_step));
  TensorT<S> out(z0.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + s * eps[i];
  return out;
}

template <typename S>
int denoise_loss_node(TapeT<S>& t, UNetT<S>& unet, const DiffusionSchedule& sched,
                      const TensorT<S>& z0, int t_step, const TensorT<S>& eps,
                      const TensorT<S>* video_feats, const TensorT<S>* audio_latent) {
  const int z_t = t.constant(q_sample_t(z0, t_step, eps, sched));
  const int cv = video_feats ? unet.video_token_node(t, *video_feats) : -1;
  const int ca = audio_latent ? unet.audio_token_node(t, *audio_latent) : -1;
  const int ctx = unet.context_node(t, cv, ca);
  return ag::mse(t, unet.eps_node(t, z_t, t_step, ctx), eps);
}

// ---------------------------------------------------------------------------
// Model bundle: config, frozen VAE, U-Net, schedule, training record.
// ---------------------------------------------------------------------------

struct TrainCounters {
  int64_t steps = 0;    // training examples seen
  int64_t cv_null = 0;  // examples with the video stream nulled
  int64_t ca_null = 0;  // examples with the audio stream nulled
};

struct LdmModel {
  LdmConfig cfg;
  vae::VAEModel vae;  // frozen after its own training
  UNet unet;
  DiffusionSchedule sched;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
  TrainCounters counters;

  void init(const LdmConfig& config, const vae::VAEModel& vae_model) {
    cfg = config;
    cfg.validate();
    vae = vae_model;
    sched = DiffusionSchedule::scaled_linear(cfg.t_steps, cfg.beta_1, cfg.beta_t);
    unet.init(cfg, vae.cfg.latent_shape());
  }
};

// Project raw inputs into a condition bundle with the model's own projections.
inline ConditionBundle project_conditions(LdmModel& m, const Tensor& video_feats,
                                          const vae::LatentTensor& audio_latent) {
  audio_latent.validate(m.vae.cfg);
  ConditionBundle b;
  Tape t;
  const int cv = m.unet.video_token_node(t, resample_video_rows(video_feats, m.cfg.t_v));
  const int ca = m.unet.audio_token_node(t, audio_latent.values);
  b.c_v = t.val(cv);
  b.c_a = t.val(ca);
  if (m.cfg.unconditional) {
    b.null_cv = true;
    b.null_ca = true;
  }
  return b;
}

// Wrap the model + a projected bundle as the guidance-facing callable.
// Null flags from the bundle OR the per-call arguments apply.
inline CondEpsModel make_cond_eps(LdmModel& m, const ConditionBundle& bundle) {
  bundle.validate(m.cfg);
  return [&m, bundle](const Tensor& z, int t_step, bool null_cv, bool null_ca) {
    Tape t;
    const bool ncv = null_cv || bundle.null_cv;
    const bool nca = null_ca || bundle.null_ca;
    const int cv_tok = ncv ? -1 : t.constant(bundle.c_v);
    const int ca_tok = nca ? -1 : t.constant(bundle.c_a);
    const int ctx = m.unet.context_node(t, cv_tok, ca_tok);
    return t.val(m.unet.eps_node(t, t.constant(z), t_step, ctx));
  };
}

// ---------------------------------------------------------------------------
// Spec-facing denoising loss over a CondEpsModel (no gradients): one noise
// draw at a fixed (t, eps), and a randomized wrapper that samples t ~ U{1..T},
// eps ~ N(0, I) and drops c_v with the given probability.
// ---------------------------------------------------------------------------

inline double denoise_loss_at(const CondEpsModel& model, const Tensor& z0,
                              const ConditionBundle& cond, int t_step, const Tensor& eps,
                              const DiffusionSchedule& sched, bool drop_cv_now) {
  const Tensor z_t = q_sample(z0, t_step, eps, sched);
  const Tensor pred = model(z_t, t_step, drop_cv_now || cond.null_cv, cond.null_ca);
  if (pred.shape != eps.shape) throw InputError("denoise_loss: eps prediction shape mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < eps.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(eps[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(eps.numel());
}

struct DropStats {
  int64_t draws = 0;
  int64_t cv_dropped = 0;
  int64_t ca_dropped = 0;
};

inline double denoise_loss(const CondEpsModel& model, const Tensor& z0,
                           const ConditionBundle& cond, const DiffusionSchedule& sched, Rng& rng,
                           double drop_cv_prob = 0.2, DropStats* stats = nullptr) {
  if (drop_cv_prob < 0.0 || drop_cv_prob > 1.0) {
    throw ConfigError("denoise_loss: drop_cv_prob must be in [0, 1]");
  }
  const int t_step = 1 + static_cast<int>(rng.uniform_int(static_cast<int64_t>(sched.T)));
  Tensor eps = Tensor::randn(z0.shape, rng);
  const bool drop = rng.uniform() < drop_cv_prob;
  if (stats) {
    stats->draws += 1;
    if (drop || cond.null_cv) stats->cv_dropped += 1;
    if (cond.null_ca) stats->ca_dropped += 1;
  }
  return denoise_loss_at(model, z0, cond, t_step, eps, sched, drop);
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

namespace detail {

struct TrainExample {
  ClipRecord rec;
  Tensor z0;           // (C, H, W) mel latent
  Tensor video_feats;  // (t_v, video_feat_dim)
};

// Encode every clip of a split once; latents double as neighbor conditions.
inline std::vector<TrainExample> load_split_examples(const Manifest& manifest,
                                                     const std::string& split, LdmModel& m) {
  std::vector<TrainExample> out;
  for (const auto& rec : manifest.split(split)) {
    TrainExample ex;
    ex.rec = rec;
    Waveform wav;
    int sr = 0;
    wav.samples = read_wav(manifest.resolve(rec.wav_path), &sr);
    wav.sample_rate = sr;
    if (sr != m.vae.cfg.mel.sample_rate) {
      throw InputError("ldm: clip " + rec.key() + " sample rate " + std::to_string(sr) +
                       " != config " + std::to_string(m.vae.cfg.mel.sample_rate));
    }
    ex.z0 = vae::vae_encode(m.vae, wav_to_mel(wav, m.vae.cfg.mel)).values;
    const Tensor feats = load_tensor(manifest.resolve(rec.feat_path));
    if (feats.rank() != 2 || feats.shape[1] != m.cfg.video_feat_dim) {
      throw InputError("ldm: clip " + rec.key() + " video features have dim " +
                       (feats.rank() == 2 ? std::to_string(feats.shape[1]) : "?") +
                       ", config expects " + std::to_string(m.cfg.video_feat_dim));
    }
    ex.video_feats = resample_video_rows(feats, m.cfg.t_v);
    out.push_back(std::move(ex));
  }
  return out;
}

// Deterministic probe loss: fixed (t, eps, neighbor) draws from a fixed seed,
// conditions always on (or always null for unconditional models).
inline double eval_probe_loss(LdmModel& m, const std::vector<TrainExample>& examples,
                              const std::map<std::string, size_t>& by_key,
                              const Manifest& manifest, const cond::NeighborPolicy& policy,
                              uint64_t seed, size_t max_n = 32) {
  const size_t n = std::min(max_n, examples.size());
  if (n == 0) throw InputError("ldm: no examples to evaluate");
  Rng rng(splitmix64(seed ^ 0x5eedc0deULL));
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const auto& ex = examples[i];
    const int t_step = 1 + static_cast<int>(rng.uniform_int(static_cast<int64_t>(m.sched.T)));
    const Tensor eps = Tensor::randn(ex.z0.shape, rng);
    const Tensor* neighbor = nullptr;
    if (!m.cfg.unconditional) {
      const ClipRecord nb = cond::sample_neighbor(manifest, ex.rec, policy, rng);
      neighbor = &examples[by_key.at(nb.key())].z0;
    }
    Tape t;
    const int loss = denoise_loss_node<float>(t, m.unet, m.sched, ex.z0, t_step, eps,
                                              m.cfg.unconditional ? nullptr : &ex.video_feats,
                                              neighbor);
    total += static_cast<double>(t.val(loss)[0]);
  }
  return total / static_cast<double>(n);
}

}  // namespace detail

inline LdmModel train_ldm(const Manifest& manifest, const vae::VAEModel& vae_model,
                          const LdmConfig& cfg, const cond::NeighborPolicy& policy = {}) {
  cfg.validate();
  policy.validate();
  LdmModel m;
  m.init(cfg, vae_model);

  auto examples = detail::load_split_examples(manifest, "train", m);
  if (examples.empty()) throw InputError("ldm: manifest has no train clips");
  std::map<std::string, size_t> by_key;
  for (size_t i = 0; i < examples.size(); ++i) by_key.emplace(examples[i].rec.key(), i);

  const uint64_t probe_seed = splitmix64(cfg.seed ^ 0xe7a1ULL);
  m.initial_loss =
      detail::eval_probe_loss(m, examples, by_key, manifest, policy, probe_seed);

  ParamRegistry reg;
  m.unet.register_params(&reg);  // VAE params stay out: frozen by construction
  nn::AdamWT<float> opt(cfg.lr);
  Rng draw_rng(splitmix64(cfg.seed ^ 0x11dfeedULL));

  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(examples.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = std::max<int64_t>(1, steps_per_epoch * cfg.epochs);
  int64_t global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(splitmix64(cfg.seed ^ (0x51abcdULL + static_cast<uint64_t>(epoch))));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t epoch_examples = 0;

    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double frac =
          static_cast<double>(global_step) / static_cast<double>(total_steps);
      opt.set_lr(cfg.lr * (0.55 + 0.45 * std::cos(M_PI * frac)));
      reg.zero_grads();

      for (size_t k = start; k < stop; ++k) {
        const auto& ex = examples[order[k]];
        const int t_step =
            1 + static_cast<int>(draw_rng.uniform_int(static_cast<int64_t>(m.sched.T)));
        const Tensor eps = Tensor::randn(ex.z0.shape, draw_rng);
        const bool drop_cv = cfg.unconditional || draw_rng.uniform() < cfg.drop_cv;
        const bool drop_ca = cfg.unconditional;  // full model never drops c_a

        const Tensor* feats = drop_cv ? nullptr : &ex.video_feats;
        const Tensor* neighbor = nullptr;
        if (!drop_ca) {
          const ClipRecord nb = cond::sample_neighbor(manifest, ex.rec, policy, draw_rng);
          neighbor = &examples[by_key.at(nb.key())].z0;
        }

        Tape t;
        const int loss =
            denoise_loss_node<float>(t, m.unet, m.sched, ex.z0, t_step, eps, feats, neighbor);
        const double loss_val = static_cast<double>(t.val(loss)[0]);
        if (!std::isfinite(loss_val)) {
          throw TrainingError("train_ldm diverged: loss=" + std::to_string(loss_val) +
                              " at epoch " + std::to_string(epoch) + " example " +
                              std::to_string(k) + " (lr=" + std::to_string(opt.lr()) + ")");
        }
        t.backward(ag::scale(t, loss, 1.0 / static_cast<double>(stop - start)));

        m.counters.steps += 1;
        if (drop_cv) m.counters.cv_null += 1;
        if (drop_ca) m.counters.ca_null += 1;
        epoch_loss += loss_val;
        epoch_examples += 1;
      }
      opt.step(reg.params());
      global_step += 1;
    }
    m.epoch_losses.push_back(epoch_loss / static_cast<double>(std::max<int64_t>(1, epoch_examples)));
  }

  m.final_loss = detail::eval_probe_loss(m, examples, by_key, manifest, policy, probe_seed);
  return m;
}

// ---------------------------------------------------------------------------
// Generation: sample a latent with CFG, decode, vocode. Returns a waveform of
// exactly the configured clip length.
// ---------------------------------------------------------------------------

inline Waveform generate(LdmModel& m, const Tensor& video_feats, const Waveform& audio_cond,
                         const GuidanceConfig& g, uint64_t seed) {
  g.validate();
  if (video_feats.rank() != 2 || video_feats.shape[1] != m.cfg.video_feat_dim) {
    throw ConfigError("generate: video features must be (frames, " +
                      std::to_string(m.cfg.video_feat_dim) + ")");
  }
  for (float v : video_feats.data) {
    if (!std::isfinite(v)) throw InputError("generate: non-finite video features");
  }
  if (audio_cond.sample_rate != m.vae.cfg.mel.sample_rate) {
    throw ConfigError("generate: condition sample rate " + std::to_string(audio_cond.sample_rate) +
                      " != config " + std::to_string(m.vae.cfg.mel.sample_rate));
  }

  const vae::LatentTensor cond_latent =
      vae::vae_encode(m.vae, wav_to_mel(audio_cond, m.vae.cfg.mel));
  ConditionBundle bundle = project_conditions(m, video_feats, cond_latent);
  const CondEpsModel cond_eps = make_cond_eps(m, bundle);
  const EpsModel eps_fn = [&cond_eps, &g](const Tensor& z, int t_step) {
    return cfg_epsilon(cond_eps, z, t_step, g.omega, g.null_mode);
  };

  Rng rng(splitmix64(seed ^ 0x6e5a7eULL));
  const std::vector<int64_t> shape = m.vae.cfg.latent_shape();
  Tensor z = g.sampler == SamplerKind::kDdpm
                 ? ddpm_sample(eps_fn, shape, m.sched, rng)
                 : dpm_solver_sample(eps_fn, shape, m.sched, g.steps, rng);
  for (float v : z.data) {
    if (!std::isfinite(v)) throw TrainingError("generate: sampler produced non-finite latent");
  }

  const int sr = m.vae.cfg.mel.sample_rate;
  const int64_t n_samples = static_cast<int64_t>(std::llround(m.cfg.clip_seconds * sr));
  const int64_t content_frames = n_samples / m.vae.cfg.mel.hop + 1;
  const MelSpectrogram mel =
      vae::vae_decode(m.vae, vae::LatentTensor{std::move(z)}, content_frames, n_samples);
  return mel_to_wav_griffinlim(mel, m.vae.cfg.mel);
}

// ---------------------------------------------------------------------------
// Checkpointing: one self-contained file holding config, schedule/shape/seed
// metadata, training record, and both the U-Net and the frozen VAE weights.
// ---------------------------------------------------------------------------

inline void save_ldm(LdmModel& m, const std::filesystem::path& path) {
  Checkpoint ck;
  ojson j;
  j["module"] = "avldm";
  j["config"] = m.cfg.to_json();
  j["vae_config"] = m.vae.cfg.to_json();
  j["latent_shape"] = m.vae.cfg.latent_shape();
  j["initial_loss"] = m.initial_loss;
  j["final_loss"] = m.final_loss;
  j["epoch_losses"] = m.epoch_losses;
  j["counter_steps"] = m.counters.steps;
  j["counter_cv_null"] = m.counters.cv_null;
  j["counter_ca_null"] = m.counters.ca_null;
  ck.meta = j.dump();
  ParamRegistry reg;
  m.unet.register_params(&reg);
  m.vae.register_params(&reg);
  reg.save(&ck);
  ck.save(path);
}

inline LdmModel load_ldm(const std::filesystem::path& path) {
  Checkpoint ck = Checkpoint::load(path);
  ojson j;
  try {
    j = ojson::parse(ck.meta);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad ldm checkpoint meta in " + path.string() + ": " + e.what());
  }
  if (j.value("module", "") != "avldm") {
    throw IoError("checkpoint " + path.string() + " is not an avldm model");
  }
  LdmModel m;
  m.cfg = LdmConfig::from_json(j.at("config"));
  vae::VAEModel v;
  v.init(vae::VAEConfig::from_json(j.at("vae_config")));
  m.init(m.cfg, v);
  m.initial_loss = j.value("initial_loss", 0.0);
  m.final_loss = j.value("final_loss", 0.0);
  m.epoch_losses = j.value("epoch_losses", std::vector<double>{});
  m.counters.steps = j.value("counter_steps", int64_t{0});
  m.counters.cv_null = j.value("counter_cv_null", int64_t{0});
  m.counters.ca_null = j.value("counter_ca_null", int64_t{0});
  ParamRegistry reg;
  m.unet.register_params(&reg);
  m.vae.register_params(&reg);
  reg.load(ck);
  return m;
}

}  // namespace a2s::avldm

#endif  // A2S_AVLDM_HPP_
