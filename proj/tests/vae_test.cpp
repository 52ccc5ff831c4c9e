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

#include "a2s/vae.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "a2s/common.hpp"
#include "a2s/dsp.hpp"
#include "a2s/io.hpp"
#include "a2s/manifest.hpp"
#include "a2s/rng.hpp"
#include "a2s/synthworld.hpp"

namespace a2s {
namespace {

namespace fs = std::filesystem;

// Training recipe used by the slow fixture below; enough optimization steps
// to clear the reconstruction bar on the small rendered dataset.
constexpr int kTrainEpochs = 150;
constexpr double kTrainLr = 4e-3;

vae::VAEConfig paper_profile() {
  vae::VAEConfig cfg;
  cfg.mel.n_mels = 128;
  cfg.mel.pad_to_frames = 192;
  cfg.in_channels = 3;
  return cfg;
}

// A synthetic but valid log-mel matrix: smooth ramps plus noise, clamped to
// the representable range.
MelSpectrogram synthetic_mel(const MelConfig& mc, uint64_t seed) {
  MelSpectrogram m;
  m.config = mc;
  m.values = Tensor({mc.pad_to_frames, mc.n_mels});
  Rng rng(splitmix64(seed ^ 0xfeedULL));
  for (int64_t f = 0; f < mc.pad_to_frames; ++f) {
    for (int64_t k = 0; k < mc.n_mels; ++k) {
      const double ramp = -20.0 + 18.0 * static_cast<double>(f) / mc.pad_to_frames +
                          2.0 * std::sin(0.3 * static_cast<double>(k));
      const double v = std::clamp(ramp + rng.gaussian(), kLogFloor, 0.0);
      m.values[f * mc.n_mels + k] = static_cast<float>(v);
    }
  }
  m.content_frames = mc.pad_to_frames;
  m.n_samples = static_cast<int64_t>(mc.pad_to_frames - 1) * mc.hop;
  return m;
}

// ---------------------------------------------------------------------------
// Configuration and shape plumbing.
// ---------------------------------------------------------------------------

TEST(VAEConfig, DefaultDeskGeometry) {
  vae::VAEConfig cfg;
  cfg.validate();
  EXPECT_EQ(cfg.input_shape(), (std::vector<int64_t>{1, 64, 96}));
  EXPECT_EQ(cfg.latent_shape(), (std::vector<int64_t>{4, 8, 12}));
}

TEST(VAEConfig, PaperProfileGeometry) {
  const vae::VAEConfig cfg = paper_profile();
  cfg.validate();
  EXPECT_EQ(cfg.input_shape(), (std::vector<int64_t>{3, 128, 192}));
  EXPECT_EQ(cfg.latent_shape(), (std::vector<int64_t>{4, 16, 24}));
}

TEST(VAEConfig, ValidationRejectsBadValues) {
  vae::VAEConfig cfg;
  cfg.in_channels = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);

  cfg = vae::VAEConfig();
  cfg.mel.n_mels = 63;  // not a multiple of 8
  EXPECT_THROW(cfg.validate(), ConfigError);

  cfg = vae::VAEConfig();
  cfg.mel.pad_to_frames = 4;  // below the minimum
  EXPECT_THROW(cfg.validate(), ConfigError);

  cfg = vae::VAEConfig();
  cfg.base_channels = 2;
  EXPECT_THROW(cfg.validate(), ConfigError);

  cfg = vae::VAEConfig();
  cfg.latent_channels = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);

  cfg = vae::VAEConfig();
  cfg.kl_weight = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);

  cfg = vae::VAEConfig();
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);

  cfg = vae::VAEConfig();
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(VAEConfig, JsonRoundTripPreservesEveryField) {
  vae::VAEConfig cfg = paper_profile();
  cfg.base_channels = 16;
  cfg.latent_channels = 4;
  cfg.kl_weight = 2e-5;
  cfg.lr = 1e-3;
  cfg.epochs = 7;
  cfg.batch_size = 3;
  cfg.seed = 42;
  const vae::VAEConfig back = vae::VAEConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.mel.n_mels, cfg.mel.n_mels);
  EXPECT_EQ(back.mel.pad_to_frames, cfg.mel.pad_to_frames);
  EXPECT_EQ(back.mel.sample_rate, cfg.mel.sample_rate);
  EXPECT_EQ(back.in_channels, cfg.in_channels);
  EXPECT_EQ(back.base_channels, cfg.base_channels);
  EXPECT_EQ(back.latent_channels, cfg.latent_channels);
  EXPECT_DOUBLE_EQ(back.kl_weight, cfg.kl_weight);
  EXPECT_DOUBLE_EQ(back.lr, cfg.lr);
  EXPECT_EQ(back.epochs, cfg.epochs);
  EXPECT_EQ(back.batch_size, cfg.batch_size);
  EXPECT_EQ(back.seed, cfg.seed);
}

TEST(VAEAdapters, MelImageRoundTripIsExactOnTheDeskProfile) {
  vae::VAEConfig cfg;
  const MelSpectrogram mel = synthetic_mel(cfg.mel, 1);
  const Tensor img = vae_input_from_mel(mel, cfg);
  EXPECT_EQ(img.shape, cfg.input_shape());
  const MelSpectrogram back = mel_from_vae_output(img, cfg, mel.content_frames, mel.n_samples);
  ASSERT_EQ(back.values.shape, mel.values.shape);
  for (int64_t i = 0; i < mel.values.numel(); ++i) {
    EXPECT_NEAR(back.values[i], mel.values[i], 1e-4);
  }
  EXPECT_EQ(back.content_frames, mel.content_frames);
  EXPECT_EQ(back.n_samples, mel.n_samples);
}

TEST(VAEAdapters, PaperProfileDuplicatesChannels) {
  const vae::VAEConfig cfg = paper_profile();
  const MelSpectrogram mel = synthetic_mel(cfg.mel, 2);
  const Tensor img = vae_input_from_mel(mel, cfg);
  ASSERT_EQ(img.shape, (std::vector<int64_t>{3, 128, 192}));
  const int64_t plane = 128 * 192;
  for (int64_t i = 0; i < plane; ++i) {
    EXPECT_EQ(img[i], img[plane + i]);
    EXPECT_EQ(img[i], img[2 * plane + i]);
  }
}

TEST(VAEAdapters, GeometryMismatchThrows) {
  vae::VAEConfig desk;
  const MelSpectrogram paper_mel = synthetic_mel(paper_profile().mel, 3);
  EXPECT_THROW(vae_input_from_mel(paper_mel, desk), ConfigError);
  EXPECT_THROW(mel_from_vae_output(Tensor({1, 128, 192}), desk), ConfigError);
}

TEST(VAELatent, ValidateRejectsWrongShapeAndNonFinite) {
  vae::VAEConfig cfg;
  vae::LatentTensor lat{Tensor({4, 8, 12})};
  EXPECT_NO_THROW(lat.validate(cfg));

  vae::LatentTensor wrong{Tensor({4, 8, 11})};
  EXPECT_THROW(wrong.validate(cfg), ConfigError);

  lat.values[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(lat.validate(cfg), InputError);
}

// ---------------------------------------------------------------------------
// Untrained model: shapes flow end to end in both profiles.
// ---------------------------------------------------------------------------

TEST(VAEModelShapes, EncodeDecodeShapesBothProfiles) {
  for (const bool paper : {false, true}) {
    vae::VAEConfig cfg = paper ? paper_profile() : vae::VAEConfig();
    cfg.seed = 11;
    vae::VAEModel m;
    m.init(cfg);
    const MelSpectrogram mel = synthetic_mel(cfg.mel, 4);
    const vae::LatentTensor z = vae_encode(m, mel);
    EXPECT_EQ(z.values.shape, cfg.latent_shape());
    const MelSpectrogram out = vae_decode(m, z, mel.content_frames, mel.n_samples);
    EXPECT_EQ(out.values.shape, mel.values.shape);
    EXPECT_TRUE(out.values.all_finite());
  }
}

TEST(VAEModelShapes, EncodeRejectsMismatchedMel) {
  vae::VAEModel m;
  m.init(vae::VAEConfig());
  const MelSpectrogram paper_mel = synthetic_mel(paper_profile().mel, 5);
  EXPECT_THROW(vae_encode(m, paper_mel), ConfigError);
}

TEST(VAEModelShapes, DecodeRejectsMismatchedLatent) {
  vae::VAEModel m;
  m.init(vae::VAEConfig());
  EXPECT_THROW(vae_decode(m, vae::LatentTensor{Tensor({4, 16, 24})}), ConfigError);
}

// ---------------------------------------------------------------------------
// Trained model: reconstruction quality, determinism, checkpointing.
// ---------------------------------------------------------------------------

class TrainedVAETest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / "a2s_vae_test");
    fs::remove_all(*dir_);
    synth::SynthConfig scfg;
    scfg.out_dir = *dir_;
    scfg.seed = 7;
    scfg.n_videos = 12;
    scfg.n_clips = 4;
    manifest_ = new Manifest(synth::build_dataset(scfg));

    vae::VAEConfig cfg;
    cfg.epochs = kTrainEpochs;
    cfg.lr = kTrainLr;
    cfg.seed = 1;
    model_ = new vae::VAEModel(vae::train_vae(*manifest_, cfg));
  }

  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete model_;
    delete manifest_;
    delete dir_;
    model_ = nullptr;
    manifest_ = nullptr;
    dir_ = nullptr;
  }

  static Manifest* manifest_;
  static vae::VAEModel* model_;
  static fs::path* dir_;
};

Manifest* TrainedVAETest::manifest_ = nullptr;
vae::VAEModel* TrainedVAETest::model_ = nullptr;
fs::path* TrainedVAETest::dir_ = nullptr;

TEST_F(TrainedVAETest, LossDecreasesAndStaysFinite) {
  ASSERT_EQ(model_->epoch_losses.size(), static_cast<size_t>(kTrainEpochs));
  EXPECT_LT(model_->final_loss, model_->initial_loss);
  for (const double l : model_->epoch_losses) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LT(model_->epoch_losses.back(), model_->epoch_losses.front());
}

TEST_F(TrainedVAETest, HeldOutReconstructionBeatsTheVarianceBar) {
  const vae::ReconStats st = vae::vae_recon_stats(*model_, *manifest_, "val");
  ASSERT_GT(st.n_clips, 0);

  // Independent oracle for the denominator: pooled log-mel variance of the
  // val split, computed from the raw spectrograms.
  double sum = 0.0, sumsq = 0.0;
  int64_t count = 0;
  for (const auto& rec : manifest_->split("val")) {
    Waveform w;
    int sr = 0;
    w.samples = read_wav(manifest_->resolve(rec.wav_path), &sr);
    w.sample_rate = sr;
    const MelSpectrogram mel = wav_to_mel(w, model_->cfg.mel);
    for (int64_t i = 0; i < mel.values.numel(); ++i) {
      const double v = static_cast<double>(mel.values[i]);
      sum += v;
      sumsq += v * v;
      count += 1;
    }
  }
  ASSERT_GT(count, 0);
  const double mean = sum / static_cast<double>(count);
  const double var_oracle = sumsq / static_cast<double>(count) - mean * mean;
  EXPECT_NEAR(st.variance, var_oracle, 1e-6 * std::abs(var_oracle));

  EXPECT_LT(st.mse, 0.05 * st.variance)
      << "held-out recon mse " << st.mse << " vs bar " << 0.05 * st.variance;
}

TEST_F(TrainedVAETest, ReconstructionImprovesOverUntrainedModel) {
  vae::VAEModel fresh;
  vae::VAEConfig cfg = model_->cfg;
  fresh.init(cfg);
  const vae::ReconStats trained = vae::vae_recon_stats(*model_, *manifest_, "val");
  const vae::ReconStats untrained = vae::vae_recon_stats(fresh, *manifest_, "val");
  EXPECT_LT(trained.mse, 0.25 * untrained.mse);
}

TEST_F(TrainedVAETest, TrainingIsDeterministic) {
  vae::VAEConfig cfg;
  cfg.epochs = 1;
  cfg.lr = kTrainLr;
  cfg.seed = 9;
  vae::VAEModel a = vae::train_vae(*manifest_, cfg);
  vae::VAEModel b = vae::train_vae(*manifest_, cfg);
  EXPECT_EQ(a.initial_loss, b.initial_loss);
  EXPECT_EQ(a.final_loss, b.final_loss);

  Checkpoint ca, cb;
  ParamRegistry ra, rb;
  a.register_params(&ra);
  b.register_params(&rb);
  ra.save(&ca);
  rb.save(&cb);
  ASSERT_EQ(ca.tensors.size(), cb.tensors.size());
  for (const auto& [name, ta] : ca.tensors) {
    const Tensor& tb = cb.tensors.at(name);
    ASSERT_EQ(ta.shape, tb.shape) << name;
    for (int64_t i = 0; i < ta.numel(); ++i) {
      ASSERT_EQ(ta[i], tb[i]) << name << "[" << i << "]";
    }
  }
}

TEST_F(TrainedVAETest, CheckpointRoundTripReproducesLatentsExactly) {
  const fs::path path = *dir_ / "vae_roundtrip.ckpt";
  vae::save_vae(*model_, path);
  vae::VAEModel loaded = vae::load_vae(path);

  EXPECT_EQ(loaded.cfg.base_channels, model_->cfg.base_channels);
  EXPECT_EQ(loaded.epoch_losses.size(), model_->epoch_losses.size());
  EXPECT_DOUBLE_EQ(loaded.final_loss, model_->final_loss);

  const auto val = manifest_->split("val");
  ASSERT_FALSE(val.empty());
  Waveform w;
  int sr = 0;
  w.samples = read_wav(manifest_->resolve(val[0].wav_path), &sr);
  w.sample_rate = sr;
  const MelSpectrogram mel = wav_to_mel(w, model_->cfg.mel);
  const vae::LatentTensor za = vae_encode(*model_, mel);
  const vae::LatentTensor zb = vae_encode(loaded, mel);
  ASSERT_EQ(za.values.shape, zb.values.shape);
  for (int64_t i = 0; i < za.values.numel(); ++i) {
    ASSERT_EQ(za.values[i], zb.values[i]) << "latent diverges at " << i;
  }
}

TEST_F(TrainedVAETest, LoadRejectsForeignAndCorruptFiles) {
  EXPECT_THROW(vae::load_vae(*dir_ / "missing.ckpt"), IoError);

  // A checkpoint from a different module must be refused.
  const fs::path foreign = *dir_ / "foreign.ckpt";
  Checkpoint ck;
  ck.meta = "{\"module\":\"avsim\"}";
  ck.save(foreign);
  EXPECT_THROW(vae::load_vae(foreign), IoError);

  // Unparseable metadata must be refused.
  const fs::path corrupt = *dir_ / "corrupt.ckpt";
  Checkpoint ck2;
  ck2.meta = "not json";
  ck2.save(corrupt);
  EXPECT_THROW(vae::load_vae(corrupt), IoError);

  // A non-checkpoint file must be refused.
  const fs::path text = *dir_ / "plain.txt";
  write_text_file(text, "hello");
  EXPECT_THROW(vae::load_vae(text), IoError);
}

}  // namespace
}  // namespace a2s
