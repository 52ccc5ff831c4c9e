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

#ifndef A2S_IO_HPP_
#define A2S_IO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "a2s/common.hpp"
#include "a2s/tensor.hpp"

namespace a2s {

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("unexpected end of file");
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const uint32_t n = read_pod<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw IoError("unexpected end of file");
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// WAV: 16-bit PCM mono.
// ---------------------------------------------------------------------------

inline void write_wav(const std::filesystem::path& path, const std::vector<float>& samples,
                      int sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  const uint32_t n = static_cast<uint32_t>(samples.size());
  const uint32_t data_bytes = n * 2;
  const uint32_t byte_rate = static_cast<uint32_t>(sample_rate) * 2;
  os.write("RIFF", 4);
  detail::write_pod<uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::write_pod<uint32_t>(os, 16);
  detail::write_pod<uint16_t>(os, 1);  // PCM
  detail::write_pod<uint16_t>(os, 1);  // mono
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(sample_rate));
  detail::write_pod<uint32_t>(os, byte_rate);
  detail::write_pod<uint16_t>(os, 2);   // block align
  detail::write_pod<uint16_t>(os, 16);  // bits per sample
  os.write("data", 4);
  detail::write_pod<uint32_t>(os, data_bytes);
  for (float s : samples) {
    const double clamped = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const int32_t q = static_cast<int32_t>(std::lrint(clamped * 32767.0));
    detail::write_pod<int16_t>(os, static_cast<int16_t>(std::clamp(q, -32768, 32767)));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

inline std::vector<float> read_wav(const std::filesystem::path& path, int* sample_rate = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw IoError("not a RIFF file: " + path.string());
  detail::read_pod<uint32_t>(is);
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0) throw IoError("not a WAVE file: " + path.string());

  uint16_t channels = 1, bits = 16;
  uint32_t rate = 0;
  std::vector<float> samples;
  while (is.read(tag, 4)) {
    const uint32_t chunk = detail::read_pod<uint32_t>(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const uint16_t fmt = detail::read_pod<uint16_t>(is);
      channels = detail::read_pod<uint16_t>(is);
      rate = detail::read_pod<uint32_t>(is);
      detail::read_pod<uint32_t>(is);
      detail::read_pod<uint16_t>(is);
      bits = detail::read_pod<uint16_t>(is);
      if (fmt != 1 || channels != 1 || bits != 16) {
        throw IoError("unsupported WAV format (need 16-bit PCM mono): " + path.string());
      }
      if (chunk > 16) is.seekg(chunk - 16, std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      const uint32_t n = chunk / 2;
      samples.resize(n);
      for (uint32_t i = 0; i < n; ++i) {
        samples[i] = static_cast<float>(detail::read_pod<int16_t>(is)) / 32767.0f;
      }
      break;
    } else {
      is.seekg(chunk, std::ios::cur);
    }
  }
  if (sample_rate != nullptr) *sample_rate = static_cast<int>(rate);
  return samples;
}

// ---------------------------------------------------------------------------
// Self-describing binary tensor file: magic, dtype, shape, little-endian data.
// ---------------------------------------------------------------------------

inline constexpr char kTensorMagic[8] = {'A', '2', 'S', 'T', 'N', 'S', 'R', '1'};

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  os.write(kTensorMagic, 8);
  detail::write_pod<uint8_t>(os, 0);  // dtype: f32
  detail::write_pod<uint8_t>(os, static_cast<uint8_t>(t.rank()));
  for (int64_t d : t.shape) detail::write_pod<int64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path.string());
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kTensorMagic, 8) != 0) {
    throw IoError("not a tensor file: " + path.string());
  }
  const uint8_t dtype = detail::read_pod<uint8_t>(is);
  if (dtype != 0) throw IoError("unsupported tensor dtype in " + path.string());
  const uint8_t rank = detail::read_pod<uint8_t>(is);
  std::vector<int64_t> shape(rank);
  for (auto& d : shape) d = detail::read_pod<int64_t>(is);
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!is) throw IoError("truncated tensor file: " + path.string());
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoint container: a JSON metadata string plus named f32 tensors.
// ---------------------------------------------------------------------------

inline constexpr char kCkptMagic[8] = {'A', '2', 'S', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  std::string meta;  // JSON text, format defined by the producing module
  std::map<std::string, Tensor> tensors;

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path.string());
    os.write(kCkptMagic, 8);
    detail::write_string(os, meta);
    detail::write_pod<uint32_t>(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
      detail::write_string(os, name);
      detail::write_pod<uint8_t>(os, static_cast<uint8_t>(t.rank()));
      for (int64_t d : t.shape) detail::write_pod<int64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed: " + path.string());
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0) {
      throw IoError("not a checkpoint file: " + path.string());
    }
    Checkpoint ck;
    ck.meta = detail::read_string(is);
    const uint32_t n = detail::read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
      const std::string name = detail::read_string(is);
      const uint8_t rank = detail::read_pod<uint8_t>(is);
      std::vector<int64_t> shape(rank);
      for (auto& d : shape) d = detail::read_pod<int64_t>(is);
      Tensor t(shape);
      is.read(reinterpret_cast<char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
      if (!is) throw IoError("truncated checkpoint: " + path.string());
      ck.tensors.emplace(name, std::move(t));
    }
    return ck;
  }
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path.string());
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path.string());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

// FNV-1a, used to fingerprint reports and configs.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace a2s

#endif  // A2S_IO_HPP_
