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

#include "a2s/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "a2s/common.hpp"
#include "a2s/rng.hpp"

namespace a2s {
namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("a2s_io_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(IoTest, WavRoundTripWithinQuantizationStep) {
  Rng rng(0);
  std::vector<float> x(1600);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-0.9, 0.9));
  const auto p = dir_ / "t.wav";
  write_wav(p, x, 16000);
  int rate = 0;
  const auto y = read_wav(p, &rate);
  EXPECT_EQ(rate, 16000);
  ASSERT_EQ(y.size(), x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(y[i], x[i], 1.0 / 32767.0);
  }
}

TEST_F(IoTest, WavClampsOutOfRangeSamples) {
  const auto p = dir_ / "c.wav";
  write_wav(p, {2.0f, -3.0f, 0.0f}, 16000);
  const auto y = read_wav(p);
  EXPECT_NEAR(y[0], 1.0f, 1e-4);
  EXPECT_NEAR(y[1], -1.0f, 1e-4);
  EXPECT_NEAR(y[2], 0.0f, 1e-6);
}

TEST_F(IoTest, WavQuantizationIsIdempotent) {
  // Re-encoding an already-decoded signal must be lossless.
  Rng rng(5);
  std::vector<float> x(400);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto p1 = dir_ / "q1.wav";
  const auto p2 = dir_ / "q2.wav";
  write_wav(p1, x, 16000);
  const auto y1 = read_wav(p1);
  write_wav(p2, y1, 16000);
  const auto y2 = read_wav(p2);
  for (size_t i = 0; i < y1.size(); ++i) EXPECT_EQ(y1[i], y2[i]);
}

TEST_F(IoTest, ReadWavRejectsGarbage) {
  const auto p = dir_ / "bad.wav";
  write_text_file(p, "this is not a wav file at all");
  EXPECT_THROW(read_wav(p), IoError);
  EXPECT_THROW(read_wav(dir_ / "missing.wav"), IoError);
}

TEST_F(IoTest, TensorFileRoundTrip) {
  Rng rng(1);
  Tensor t = Tensor::randn({3, 5, 7}, rng);
  const auto p = dir_ / "t.a2st";
  save_tensor(p, t);
  const Tensor u = load_tensor(p);
  ASSERT_EQ(u.shape, t.shape);
  for (int64_t i = 0; i < t.numel(); ++i) EXPECT_EQ(u[i], t[i]);
}

TEST_F(IoTest, TensorFileRejectsWrongMagic) {
  const auto p = dir_ / "bad.a2st";
  write_text_file(p, "XXXXXXXXjunkjunkjunk");
  EXPECT_THROW(load_tensor(p), IoError);
}

TEST_F(IoTest, CheckpointRoundTrip) {
  Rng rng(2);
  Checkpoint ck;
  ck.meta = "{\"step\":12}";
  ck.tensors["w"] = Tensor::randn({4, 4}, rng);
  ck.tensors["b"] = Tensor::full({4}, 0.25f);
  const auto p = dir_ / "m.ckpt";
  ck.save(p);
  const Checkpoint lk = Checkpoint::load(p);
  EXPECT_EQ(lk.meta, ck.meta);
  ASSERT_EQ(lk.tensors.size(), 2u);
  ASSERT_EQ(lk.tensors.at("w").shape, ck.tensors.at("w").shape);
  for (int64_t i = 0; i < 16; ++i) EXPECT_EQ(lk.tensors.at("w")[i], ck.tensors.at("w")[i]);
  EXPECT_EQ(lk.tensors.at("b")[3], 0.25f);
}

TEST_F(IoTest, CheckpointRejectsTruncation) {
  Rng rng(3);
  Checkpoint ck;
  ck.tensors["w"] = Tensor::randn({64, 64}, rng);
  const auto p = dir_ / "full.ckpt";
  ck.save(p);
  const auto full = read_text_file(p);
  const auto p2 = dir_ / "trunc.ckpt";
  write_text_file(p2, full.substr(0, full.size() / 2));
  EXPECT_THROW(Checkpoint::load(p2), IoError);
}

TEST_F(IoTest, Fnv1a64KnownVectors) {
  // Published FNV-1a 64-bit reference values.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

}  // namespace
}  // namespace a2s
