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
// Diffusion process math: the noise schedule, forward noising, classifier-free
// guidance combination, ancestral DDPM stepping, and a second-order multistep
// ODE sampler. Everything operates on plain tensors through an
// epsilon-prediction callback, so samplers are testable against closed-form
// toy models without any network.

#ifndef A2S_DIFFUSION_HPP_
#define A2S_DIFFUSION_HPP_

#include <cmath>
#include <functional>
#include <vector>

#include "a2s/common.hpp"
#include "a2s/rng.hpp"
#include "a2s/tensor.hpp"

namespace a2s {

// Beta/alpha tables indexed 1..T (index 0 is the ᾱ_0 = 1 boundary).
struct DiffusionSchedule {
  int T = 1000;
  std::vector<double> betas;       // [0]=0 unused, [1..T]
  std::vector<double> alphas;      // 1 - beta
  std::vector<double> alpha_bars;  // [0]=1, cumulative product
  std::vector<double> sigmas;      // posterior sigma_t

  static DiffusionSchedule scaled_linear(int T = 1000, double beta_1 = 8.5e-4,
                                         double beta_T = 1.2e-2) {
    if (T < 1 || beta_1 <= 0.0 || beta_T >= 1.0 || beta_1 > beta_T) {
      throw ConfigError("schedule: invalid beta range");
    }
    DiffusionSchedule s;
    s.T = T;
    s.betas.assign(static_cast<size_t>(T) + 1, 0.0);
    s.alphas.assign(static_cast<size_t>(T) + 1, 1.0);
    s.alpha_bars.assign(static_cast<size_t>(T) + 1, 1.0);
    s.sigmas.assign(static_cast<size_t>(T) + 1, 0.0);
    const double r1 = std::sqrt(beta_1), rT = std::sqrt(beta_T);
    for (int t = 1; t <= T; ++t) {
      const double u = (T == 1) ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
      const double root = r1 + (rT - r1) * u;
      s.betas[static_cast<size_t>(t)] = root * root;
      s.alphas[static_cast<size_t>(t)] = 1.0 - s.betas[static_cast<size_t>(t)];
      s.alpha_bars[static_cast<size_t>(t)] =
          s.alpha_bars[static_cast<size_t>(t) - 1] * s.alphas[static_cast<size_t>(t)];
    }
    for (int t = 1; t <= T; ++t) {
      const double ab = s.alpha_bars[static_cast<size_t>(t)];
      const double ab_prev = s.alpha_bars[static_cast<size_t>(t) - 1];
      s.sigmas[static_cast<size_t>(t)] =
          std::sqrt(s.betas[static_cast<size_t>(t)] * (1.0 - ab_prev) / (1.0 - ab));
    }
    return s;
  }

  void check_t(int t) const {
    if (t < 1 || t > T) throw InputError("schedule: timestep out of range");
  }

  double alpha_bar(int t) const {
    if (t < 0 || t > T) throw InputError("schedule: timestep out of range");
    return alpha_bars[static_cast<size_t>(t)];
  }
  // VP parameterization: signal scale and noise scale at t.
  double a_of(int t) const { return std::sqrt(alpha_bar(t)); }
  double s_of(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }
  double lambda_of(int t) const { return std::log(a_of(t) / s_of(t)); }
};

// z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps.
inline Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const DiffusionSchedule& sched) {
  sched.check_t(t);
  if (z0.shape != eps.shape) throw InputError("q_sample: shape mismatch");
  const float a = static_cast<float>(sched.a_of(t));
  const float s = static_cast<float>(sched.s_of(t));
  Tensor out(z0.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + s * eps[i];
  return out;
}

// Epsilon prediction under explicit null flags for the two condition streams.
using CondEpsModel = std::function<Tensor(const Tensor& z, int t, bool null_cv, bool null_ca)>;
// Fully-wrapped epsilon model used by the samplers.
using EpsModel = std::function<Tensor(const Tensor& z, int t)>;

enum class CfgNullMode { kBoth, kCvOnly };

// eps_tilde = omega * eps(z,t,c_v,c_a) + (1-omega) * eps(z,t,null).
// The null branch zeroes both condition streams by default (the guidance
// formula as written); kCvOnly keeps c_a in the null branch.
inline Tensor cfg_epsilon(const CondEpsModel& model, const Tensor& z, int t, double omega,
                          CfgNullMode mode = CfgNullMode::kBoth) {
  Tensor cond = model(z, t, false, false);
  if (omega == 1.0) return cond;
  const bool null_ca = (mode == CfgNullMode::kBoth);
  Tensor uncond = model(z, t, true, null_ca);
  if (cond.shape != uncond.shape) throw InputError("cfg_epsilon: branch shape mismatch");
  Tensor out(cond.shape);
  const float w = static_cast<float>(omega);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = w * cond[i] + (1.0f - w) * uncond[i];
  return out;
}

// One reverse ancestral step. noise == nullptr at t == 1 (sigma_1 is 0
// anyway for this schedule family).
inline Tensor ddpm_step(const Tensor& z_t, int t, const Tensor& eps_tilde,
                        const DiffusionSchedule& sched, const Tensor* noise = nullptr) {
  sched.check_t(t);
  if (z_t.shape != eps_tilde.shape) throw InputError("ddpm_step: shape mismatch");
  const double alpha = sched.alphas[static_cast<size_t>(t)];
  const double coef = (1.0 - alpha) / sched.s_of(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double sig = sched.sigmas[static_cast<size_t>(t)];
  Tensor out(z_t.shape);
  for (int64_t i = 0; i < out.numel(); ++i) {
    double v = inv_sqrt_alpha * (static_cast<double>(z_t[i]) - coef * eps_tilde[i]);
    if (noise != nullptr && t > 1) v += sig * (*noise)[i];
    out[i] = static_cast<float>(v);
  }
  return out;
}

// Full ancestral chain from pure noise; reference sampler.
inline Tensor ddpm_sample(const EpsModel& eps_fn, const std::vector<int64_t>& shape,
                          const DiffusionSchedule& sched, Rng& rng) {
  Tensor z = Tensor::randn(shape, rng);
  for (int t = sched.T; t >= 1; --t) {
    const Tensor eps = eps_fn(z, t);
    if (t > 1) {
      const Tensor noise = Tensor::randn(shape, rng);
      z = ddpm_step(z, t, eps, sched, &noise);
    } else {
      z = ddpm_step(z, t, eps, sched);
    }
  }
  return z;
}

// Second-order multistep solver for the probability-flow ODE in
// epsilon-prediction form (VP schedule). Update over one grid interval with
// h_i = lambda_i - lambda_{i-1}, r_i = h_{i-1}/h_i:
//   x_i = (a_i/a_{i-1}) x_{i-1}
//         - s_i (e^{h_i}-1) [ (1 + 1/(2 r_i)) eps_{i-1} - 1/(2 r_i) eps_{i-2} ]
// The first interval is first order. After reaching t=1, the latent is
// projected to the clean estimate x0 = (x - s_1 eps)/a_1.
inline Tensor dpm_solver_sample(const EpsModel& eps_fn, const std::vector<int64_t>& shape,
                                const DiffusionSchedule& sched, int steps, Rng& rng) {
  if (steps < 1) throw InputError("dpm_solver: steps must be >= 1");
  Tensor x = Tensor::randn(shape, rng);

  // Time grid: steps+1 points from T down to 1, uniform in t, deduplicated.
  std::vector<int> ts;
  ts.reserve(static_cast<size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    const int t = static_cast<int>(std::llround(
        sched.T - static_cast<double>(i) * (sched.T - 1) / static_cast<double>(steps)));
    if (ts.empty() || t < ts.back()) ts.push_back(t);
  }

  Tensor eps_prev;     // eps at ts[i-1] (previous grid point)
  double h_prev = 0.0;
  bool have_prev = false;
  for (size_t i = 1; i < ts.size(); ++i) {
    const int t_from = ts[i - 1];
    const int t_to = ts[i];
    const Tensor eps_cur = eps_fn(x, t_from);
    const double a_from = sched.a_of(t_from), a_to = sched.a_of(t_to);
    const double s_to = sched.s_of(t_to);
    const double h = sched.lambda_of(t_to) - sched.lambda_of(t_from);
    const double ratio = a_to / a_from;
    const double gain = s_to * (std::exp(h) - 1.0);
    Tensor next(x.shape);
    if (!have_prev) {
      for (int64_t k = 0; k < x.numel(); ++k) {
        next[k] = static_cast<float>(ratio * x[k] - gain * eps_cur[k]);
      }
    } else {
      const double r = h_prev / h;
      const double c1 = 1.0 + 1.0 / (2.0 * r);
      const double c2 = -1.0 / (2.0 * r);
      for (int64_t k = 0; k < x.numel(); ++k) {
        next[k] = static_cast<float>(ratio * x[k] - gain * (c1 * eps_cur[k] + c2 * eps_prev[k]));
      }
    }
    x = std::move(next);
    eps_prev = eps_cur;
    h_prev = h;
    have_prev = true;
  }

  // Clean projection at the final grid point.
  const int t_end = ts.back();
  const Tensor eps_end = eps_fn(x, t_end);
  const double a_end = sched.a_of(t_end), s_end = sched.s_of(t_end);
  Tensor out(x.shape);
  for (int64_t k = 0; k < x.numel(); ++k) {
    out[k] = static_cast<float>((static_cast<double>(x[k]) - s_end * eps_end[k]) / a_end);
  }
  return out;
}

}  // namespace a2s

#endif  // A2S_DIFFUSION_HPP_
