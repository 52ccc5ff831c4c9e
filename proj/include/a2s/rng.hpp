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

#ifndef A2S_RNG_HPP_
#define A2S_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace a2s {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG. std::mt19937_64 output is pinned by the standard, and all
// distributions are implemented here explicitly, so the same seed produces the
// same stream on every platform (the std::*_distribution classes do not give
// that guarantee).
class Rng {
 public:
  explicit Rng(uint64_t seed)
      : engine_(seed), base_seed_mix_(splitmix64(seed ^ 0xa2a2a2a2ULL)) {}

  uint64_t raw() { return engine_(); }

  // Uniform double in [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  int64_t uniform_int(int64_t n) {
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return static_cast<int64_t>(r % un);
  }

  // Standard normal via Box-Muller.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

  // Independent child stream; forking with distinct tags never aliases the
  // parent stream.
  Rng fork(uint64_t tag) const {
    return Rng(splitmix64(base_seed_mix_ ^ splitmix64(tag + 0x51ed2701)));
  }

 private:
  std::mt19937_64 engine_;
  uint64_t base_seed_mix_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace a2s

#endif  // A2S_RNG_HPP_
