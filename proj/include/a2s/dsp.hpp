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
//
// Waveform <-> log-mel-spectrogram transforms, Griffin-Lim phase
// reconstruction, and the windowed ambient-level measure. Everything here is
// a pure function of its inputs.

#ifndef A2S_DSP_HPP_
#define A2S_DSP_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "a2s/common.hpp"
#include "a2s/fft.hpp"
#include "a2s/tensor.hpp"

namespace a2s {

// Power values are clamped at this floor before taking logs; the same epsilon
// backs the dB conversions so silence maps to -100 dB, not -inf.
inline constexpr double kPowerFloor = 1e-10;
inline constexpr double kLogFloor = -23.025850929940457;  // ln(1e-10)

// Affine map between log-mel values and the roughly [-1, 1] range the neural
// encoders and the VAE consume: kLogFloor -> -1, log-power 0 -> +1.
inline constexpr double kMelUnitScale = -kLogFloor / 2.0;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
  int64_t size() const { return static_cast<int64_t>(samples.size()); }

  static Waveform zeros(int64_t n, int rate = 16000) {
    Waveform w;
    w.samples.assign(static_cast<size_t>(n), 0.0f);
    w.sample_rate = rate;
    return w;
  }
};

struct MelConfig {
  int sample_rate = 16000;
  int fft_size = 1024;
  int hop = 512;
  int n_mels = 64;
  int pad_to_frames = 96;
  double fmin = 0.0;
  double fmax = 8000.0;

  void validate(int64_t n_samples) const {
    if (n_mels > fft_size / 2 + 1) throw ConfigError("mel: n_mels exceeds fft bins");
    const int64_t content = n_samples / hop + 1;
    if (content > pad_to_frames) {
      throw ConfigError("mel: pad_to_frames smaller than content frame count");
    }
  }
};

// Log-mel matrix, frames x n_mels. Rows [content_frames, pad_to_frames) carry
// the log floor; n_samples remembers the source length so reconstruction can
// trim exactly.
struct MelSpectrogram {
  Tensor values;  // (config.pad_to_frames, config.n_mels)
  MelConfig config;
  int content_frames = 0;
  int64_t n_samples = 0;
};

namespace dspdetail {

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  }
  return w;
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace dspdetail

// Triangular mel filterbank (HTK-style), rows are filters over fft bins.
struct MelFilterbank {
  TensorT<double> weights;             // (n_mels, n_bins)
  std::vector<double> center_freq_hz;  // filter centers, the retrieval table for tests

  explicit MelFilterbank(const MelConfig& cfg) {
    const int n_bins = cfg.fft_size / 2 + 1;
    weights = TensorT<double>({cfg.n_mels, n_bins});
    center_freq_hz.resize(static_cast<size_t>(cfg.n_mels));
    const double mel_lo = dspdetail::hz_to_mel(cfg.fmin);
    const double mel_hi = dspdetail::hz_to_mel(cfg.fmax);
    std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i) {
      edges[static_cast<size_t>(i)] =
          dspdetail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
    }
    const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double lo = edges[static_cast<size_t>(m)];
      const double mid = edges[static_cast<size_t>(m) + 1];
      const double hi = edges[static_cast<size_t>(m) + 2];
      center_freq_hz[static_cast<size_t>(m)] = mid;
      for (int b = 0; b < n_bins; ++b) {
        const double f = b * bin_hz;
        double w = 0.0;
        if (f > lo && f < mid) {
          w = (f - lo) / (mid - lo);
        } else if (f >= mid && f < hi) {
          w = (hi - f) / (hi - mid);
        }
        weights.at(m, b) = w;
      }
    }
  }
};

// Centered STFT magnitudes-squared. Frame t is the windowed fft of samples
// around t*hop; the signal is zero padded by fft_size/2 on both sides, giving
// floor(len/hop)+1 frames.
inline std::vector<std::vector<double>> stft_power(std::span<const float> x, const MelConfig& cfg) {
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t frames = n / cfg.hop + 1;
  const auto window = dspdetail::hann_window(cfg.fft_size);
  const int n_bins = cfg.fft_size / 2 + 1;
  std::vector<std::vector<double>> power(static_cast<size_t>(frames));
  std::vector<double> frame(static_cast<size_t>(cfg.fft_size));
  for (int64_t t = 0; t < frames; ++t) {
    const int64_t start = t * cfg.hop - cfg.fft_size / 2;
    for (int i = 0; i < cfg.fft_size; ++i) {
      const int64_t idx = start + i;
      const double s = (idx >= 0 && idx < n) ? static_cast<double>(x[static_cast<size_t>(idx)]) : 0.0;
      frame[static_cast<size_t>(i)] = s * window[static_cast<size_t>(i)];
    }
    const auto spec = rfft(frame, cfg.fft_size);
    auto& row = power[static_cast<size_t>(t)];
    row.resize(static_cast<size_t>(n_bins));
    for (int b = 0; b < n_bins; ++b) row[static_cast<size_t>(b)] = std::norm(spec[static_cast<size_t>(b)]);
  }
  return power;
}

inline MelSpectrogram wav_to_mel(const Waveform& w, const MelConfig& cfg) {
  if (w.samples.empty()) throw InputError("wav_to_mel: empty waveform");
  if (w.sample_rate != cfg.sample_rate) {
    throw ConfigError("wav_to_mel: waveform sample rate does not match mel config");
  }
  cfg.validate(w.size());

  const MelFilterbank fb(cfg);
  const auto power = stft_power(w.samples, cfg);
  const int content = static_cast<int>(power.size());

  MelSpectrogram m;
  m.config = cfg;
  m.content_frames = content;
  m.n_samples = w.size();
  m.values = Tensor::full({cfg.pad_to_frames, cfg.n_mels}, static_cast<float>(kLogFloor));
  for (int t = 0; t < content; ++t) {
    for (int b = 0; b < cfg.n_mels; ++b) {
      double acc = 0.0;
      for (int k = 0; k < cfg.fft_size / 2 + 1; ++k) {
        acc += fb.weights.at(b, k) * power[static_cast<size_t>(t)][static_cast<size_t>(k)];
      }
      m.values.at(t, b) = static_cast<float>(std::log(std::max(acc, kPowerFloor)));
    }
  }
  return m;
}

inline Tensor mel_to_unit(const Tensor& log_mel) {
  Tensor out(log_mel.shape);
  const float s = static_cast<float>(kMelUnitScale);
  for (int64_t i = 0; i < log_mel.numel(); ++i) out[i] = (log_mel[i] + s) / s;
  return out;
}

inline Tensor unit_to_mel(const Tensor& unit) {
  Tensor out(unit.shape);
  const float s = static_cast<float>(kMelUnitScale);
  for (int64_t i = 0; i < unit.numel(); ++i) out[i] = unit[i] * s - s;
  return out;
}

namespace dspdetail {

// Approximate inverse of the mel projection: transpose initialization plus a
// few multiplicative updates fitting mel_power ~= M * lin_power.
inline std::vector<std::vector<double>> mel_power_to_linear(
    const std::vector<std::vector<double>>& mel_power, const MelFilterbank& fb, int n_bins,
    int n_mels, int refine_iters = 12) {
  std::vector<double> col_norm(static_cast<size_t>(n_bins), 1e-12);
  for (int m = 0; m < n_mels; ++m) {
    for (int b = 0; b < n_bins; ++b) col_norm[static_cast<size_t>(b)] += fb.weights.at(m, b);
  }
  const size_t frames = mel_power.size();
  std::vector<std::vector<double>> lin(frames, std::vector<double>(static_cast<size_t>(n_bins)));
  std::vector<double> proj(static_cast<size_t>(n_mels));
  for (size_t t = 0; t < frames; ++t) {
    auto& s = lin[t];
    const auto& p = mel_power[t];
    for (int b = 0; b < n_bins; ++b) {
      double acc = 0.0;
      for (int m = 0; m < n_mels; ++m) acc += fb.weights.at(m, b) * p[static_cast<size_t>(m)];
      s[static_cast<size_t>(b)] = acc / col_norm[static_cast<size_t>(b)];
    }
    for (int it = 0; it < refine_iters; ++it) {
      for (int m = 0; m < n_mels; ++m) {
        double acc = 1e-12;
        for (int b = 0; b < n_bins; ++b) acc += fb.weights.at(m, b) * s[static_cast<size_t>(b)];
        proj[static_cast<size_t>(m)] = p[static_cast<size_t>(m)] / acc;
      }
      for (int b = 0; b < n_bins; ++b) {
        double num = 0.0, den = 1e-12;
        for (int m = 0; m < n_mels; ++m) {
          num += fb.weights.at(m, b) * proj[static_cast<size_t>(m)];
          den += fb.weights.at(m, b);
        }
        s[static_cast<size_t>(b)] *= num / den;
      }
    }
  }
  return lin;
}

inline std::vector<std::vector<std::complex<double>>> stft_complex(std::span<const double> x,
                                                                   const MelConfig& cfg,
                                                                   int64_t frames) {
  const int64_t n = static_cast<int64_t>(x.size());
  const auto window = hann_window(cfg.fft_size);
  std::vector<std::vector<std::complex<double>>> out(static_cast<size_t>(frames));
  std::vector<double> frame(static_cast<size_t>(cfg.fft_size));
  for (int64_t t = 0; t < frames; ++t) {
    const int64_t start = t * cfg.hop - cfg.fft_size / 2;
    for (int i = 0; i < cfg.fft_size; ++i) {
      const int64_t idx = start + i;
      const double s = (idx >= 0 && idx < n) ? x[static_cast<size_t>(idx)] : 0.0;
      frame[static_cast<size_t>(i)] = s * window[static_cast<size_t>(i)];
    }
    out[static_cast<size_t>(t)] = rfft(frame, cfg.fft_size);
  }
  return out;
}

inline std::vector<double> istft(const std::vector<std::vector<std::complex<double>>>& spec,
                                 const MelConfig& cfg, int64_t n_samples) {
  const auto window = hann_window(cfg.fft_size);
  const int64_t frames = static_cast<int64_t>(spec.size());
  const int64_t padded = n_samples + cfg.fft_size;
  std::vector<double> acc(static_cast<size_t>(padded), 0.0);
  std::vector<double> wsum(static_cast<size_t>(padded), 0.0);
  for (int64_t t = 0; t < frames; ++t) {
    const auto frame = irfft(spec[static_cast<size_t>(t)], cfg.fft_size);
    const int64_t start = t * cfg.hop;  // offset into the padded buffer
    for (int i = 0; i < cfg.fft_size; ++i) {
      const double w = window[static_cast<size_t>(i)];
      acc[static_cast<size_t>(start + i)] += frame[static_cast<size_t>(i)] * w;
      wsum[static_cast<size_t>(start + i)] += w * w;
    }
  }
  std::vector<double> out(static_cast<size_t>(n_samples));
  for (int64_t i = 0; i < n_samples; ++i) {
    const int64_t j = i + cfg.fft_size / 2;
    out[static_cast<size_t>(i)] = acc[static_cast<size_t>(j)] / std::max(wsum[static_cast<size_t>(j)], 1e-9);
  }
  return out;
}

}  // namespace dspdetail

// Griffin-Lim phase reconstruction from a log-mel spectrogram. Zero-phase
// initialization, so the result is deterministic.
inline Waveform mel_to_wav_griffinlim(const MelSpectrogram& m, const MelConfig& cfg,
                                      int iters = 32) {
  if (iters < 1) throw InputError("griffin-lim: iters must be >= 1");
  if (!m.values.all_finite()) throw InputError("griffin-lim: non-finite mel values");
  const int n_bins = cfg.fft_size / 2 + 1;
  const int content = m.content_frames > 0 ? m.content_frames : cfg.pad_to_frames;
  const int64_t n_samples = m.n_samples > 0 ? m.n_samples : static_cast<int64_t>(content - 1) * cfg.hop;

  std::vector<std::vector<double>> mel_power(static_cast<size_t>(content),
                                             std::vector<double>(static_cast<size_t>(cfg.n_mels)));
  for (int t = 0; t < content; ++t) {
    for (int b = 0; b < cfg.n_mels; ++b) {
      mel_power[static_cast<size_t>(t)][static_cast<size_t>(b)] =
          std::exp(static_cast<double>(m.values.at(t, b)));
    }
  }
  const MelFilterbank fb(cfg);
  const auto lin_power = dspdetail::mel_power_to_linear(mel_power, fb, n_bins, cfg.n_mels);

  std::vector<std::vector<double>> mag(static_cast<size_t>(content),
                                       std::vector<double>(static_cast<size_t>(n_bins)));
  for (int t = 0; t < content; ++t) {
    for (int b = 0; b < n_bins; ++b) {
      mag[static_cast<size_t>(t)][static_cast<size_t>(b)] =
          std::sqrt(std::max(lin_power[static_cast<size_t>(t)][static_cast<size_t>(b)], 0.0));
    }
  }

  // Zero phase to start, then alternate between the time domain and the
  // magnitude constraint.
  std::vector<std::vector<std::complex<double>>> spec(static_cast<size_t>(content));
  for (int t = 0; t < content; ++t) {
    spec[static_cast<size_t>(t)].assign(static_cast<size_t>(n_bins), {0.0, 0.0});
    for (int b = 0; b < n_bins; ++b) {
      spec[static_cast<size_t>(t)][static_cast<size_t>(b)] = mag[static_cast<size_t>(t)][static_cast<size_t>(b)];
    }
  }
  std::vector<double> x;
  for (int it = 0; it < iters; ++it) {
    x = dspdetail::istft(spec, cfg, n_samples);
    auto est = dspdetail::stft_complex(x, cfg, content);
    for (int t = 0; t < content; ++t) {
      for (int b = 0; b < n_bins; ++b) {
        const auto v = est[static_cast<size_t>(t)][static_cast<size_t>(b)];
        const double a = std::abs(v);
        spec[static_cast<size_t>(t)][static_cast<size_t>(b)] =
            (a > 1e-12) ? v / a * mag[static_cast<size_t>(t)][static_cast<size_t>(b)]
                        : std::complex<double>(mag[static_cast<size_t>(t)][static_cast<size_t>(b)], 0.0);
      }
    }
  }
  x = dspdetail::istft(spec, cfg, n_samples);

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.resize(static_cast<size_t>(n_samples));
  for (int64_t i = 0; i < n_samples; ++i) {
    out.samples[static_cast<size_t>(i)] =
        static_cast<float>(std::clamp(x[static_cast<size_t>(i)], -1.0, 1.0));
  }
  return out;
}

// Lowest energy of any win_s window, in dB. The paper-facing ambient measure.
inline double ambient_level(const Waveform& w, double win_s = 0.5, double hop_s = 0.125) {
  const int64_t win = static_cast<int64_t>(std::llround(win_s * w.sample_rate));
  const int64_t hop = std::max<int64_t>(1, static_cast<int64_t>(std::llround(hop_s * w.sample_rate)));
  if (w.size() < win || win <= 0) {
    throw InputError("ambient_level: waveform shorter than the measurement window");
  }
  double best = std::numeric_limits<double>::infinity();
  for (int64_t start = 0; start + win <= w.size(); start += hop) {
    double acc = 0.0;
    for (int64_t i = start; i < start + win; ++i) {
      const double s = static_cast<double>(w.samples[static_cast<size_t>(i)]);
      acc += s * s;
    }
    best = std::min(best, acc / static_cast<double>(win));
  }
  return 10.0 * std::log10(best + kPowerFloor);
}

// Amplitude ratio in dB, used by the curation energy filter.
inline double peak_db_ratio(double clip_peak, double video_peak) {
  if (video_peak <= 0.0) throw InputError("peak_db_ratio: video peak must be positive");
  if (clip_peak < 0.0 || clip_peak > video_peak) {
    throw InputError("peak_db_ratio: clip peak must lie in [0, video_peak]");
  }
  return 20.0 * std::log10(clip_peak / video_peak + kPowerFloor);
}

}  // namespace a2s

#endif  // A2S_DSP_HPP_
