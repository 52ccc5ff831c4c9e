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

#ifndef A2S_FFT_HPP_
#define A2S_FFT_HPP_

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "a2s/common.hpp"

namespace a2s {

inline bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

inline int64_t next_pow2(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative radix-2 Cooley-Tukey. n must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse = false) {
  const int64_t n = static_cast<int64_t>(a.size());
  if (!is_pow2(n)) throw InputError("fft: size must be a power of two");
  for (int64_t i = 1, j = 0; i < n; ++i) {
    int64_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int64_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (int64_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int64_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv_n;
  }
}

// Forward FFT of a real signal, zero-padded to n. Returns n/2+1 bins.
inline std::vector<std::complex<double>> rfft(std::span<const double> x, int64_t n) {
  std::vector<std::complex<double>> a(static_cast<size_t>(n));
  const size_t m = std::min(x.size(), static_cast<size_t>(n));
  for (size_t i = 0; i < m; ++i) a[i] = x[i];
  fft_inplace(a);
  a.resize(static_cast<size_t>(n / 2 + 1));
  return a;
}

// Inverse of rfft: reconstructs the length-n real signal from n/2+1 bins.
inline std::vector<double> irfft(std::span<const std::complex<double>> bins, int64_t n) {
  std::vector<std::complex<double>> a(static_cast<size_t>(n));
  for (int64_t k = 0; k <= n / 2; ++k) a[static_cast<size_t>(k)] = bins[static_cast<size_t>(k)];
  for (int64_t k = n / 2 + 1; k < n; ++k) {
    a[static_cast<size_t>(k)] = std::conj(bins[static_cast<size_t>(n - k)]);
  }
  fft_inplace(a, /*inverse=*/true);
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = a[static_cast<size_t>(i)].real();
  return out;
}

}  // namespace a2s

#endif  // A2S_FFT_HPP_
