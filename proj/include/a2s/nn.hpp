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
// Small neural network building blocks over the autograd tape: linear and
// convolution layers, group normalization, single-head cross attention,
// sinusoidal time embeddings, and the AdamW optimizer.

#ifndef A2S_NN_HPP_
#define A2S_NN_HPP_

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "a2s/autograd.hpp"
#include "a2s/common.hpp"
#include "a2s/io.hpp"
#include "a2s/rng.hpp"
#include "a2s/tensor.hpp"

namespace a2s {

// Central list of a model's parameters; modules register themselves here.
template <typename S>
class ParamRegistryT {
 public:
  void add(ParamT<S>* p) { params_.push_back(p); }
  const std::vector<ParamT<S>*>& params() const { return params_; }

  int64_t count() const {
    int64_t n = 0;
    for (const auto* p : params_) n += p->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto* p : params_) p->zero_grad();
  }

  void save(Checkpoint* ck) const {
    for (const auto* p : params_) {
      ck->tensors[p->name] = p->value.template cast<float>();
    }
  }

  void load(const Checkpoint& ck) {
    for (auto* p : params_) {
      auto it = ck.tensors.find(p->name);
      if (it == ck.tensors.end()) throw IoError("checkpoint missing parameter: " + p->name);
      if (it->second.shape != p->value.shape) {
        throw IoError("checkpoint shape mismatch for parameter: " + p->name);
      }
      p->value = it->second.template cast<S>();
      p->grad = TensorT<S>(p->value.shape);
    }
  }

 private:
  std::vector<ParamT<S>*> params_;
};

using ParamRegistry = ParamRegistryT<float>;

namespace nn {

template <typename S>
TensorT<S> kaiming_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  TensorT<S> t(std::move(shape));
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<S>(rng.gaussian() * std_dev);
  return t;
}

template <typename S>
struct LinearT {
  ParamT<S> w;  // (out, in)
  ParamT<S> b;  // (out)

  void init(const std::string& name, int64_t in, int64_t out, Rng& rng,
            ParamRegistryT<S>& reg, double w_scale = 1.0) {
    auto wt = kaiming_init<S>({out, in}, in, rng);
    if (w_scale != 1.0) wt *= static_cast<S>(w_scale);
    w.init(name + ".w", std::move(wt));
    b.init(name + ".b", TensorT<S>({out}));
    reg.add(&w);
    reg.add(&b);
  }

  // x: (N, in) -> (N, out)
  int forward(TapeT<S>& t, int x) {
    return ag::add_rowvec(t, ag::matmul_nt(t, x, t.param(w)), t.param(b));
  }
};

template <typename S>
struct Conv2dT {
  ParamT<S> w;  // (out, in*kh*kw)
  ParamT<S> b;  // (out)
  int kh = 3, kw = 3, stride = 1, pad = 1;

  void init(const std::string& name, int64_t in, int64_t out, int kh_, int kw_, int stride_,
            int pad_, Rng& rng, ParamRegistryT<S>& reg, double w_scale = 1.0) {
    kh = kh_;
    kw = kw_;
    stride = stride_;
    pad = pad_;
    auto wt = kaiming_init<S>({out, in * kh * kw}, in * kh * kw, rng);
    if (w_scale != 1.0) wt *= static_cast<S>(w_scale);
    w.init(name + ".w", std::move(wt));
    b.init(name + ".b", TensorT<S>({out}));
    reg.add(&w);
    reg.add(&b);
  }

  int forward(TapeT<S>& t, int x) {
    return ag::conv2d(t, x, t.param(w), t.param(b), kh, kw, stride, pad);
  }
};

template <typename S>
struct GroupNormT {
  ParamT<S> gamma;
  ParamT<S> beta;
  int groups = 1;

  void init(const std::string& name, int64_t channels, int groups_, ParamRegistryT<S>& reg) {
    groups = groups_;
    gamma.init(name + ".gamma", TensorT<S>({channels}, S(1)));
    beta.init(name + ".beta", TensorT<S>({channels}));
    reg.add(&gamma);
    reg.add(&beta);
  }

  int forward(TapeT<S>& t, int x) {
    return ag::group_norm(t, x, t.param(gamma), t.param(beta), groups);
  }
};

// Single-head cross attention: queries from x tokens, keys/values from ctx
// tokens. All projections are bias-free linear maps.
template <typename S>
struct CrossAttentionT {
  ParamT<S> wq, wk, wv, wo;
  int64_t dk = 0;

  void init(const std::string& name, int64_t d_q, int64_t d_ctx, int64_t dk_, Rng& rng,
            ParamRegistryT<S>& reg, double out_scale = 1.0) {
    dk = dk_;
    wq.init(name + ".wq", kaiming_init<S>({dk, d_q}, d_q, rng));
    wk.init(name + ".wk", kaiming_init<S>({dk, d_ctx}, d_ctx, rng));
    wv.init(name + ".wv", kaiming_init<S>({dk, d_ctx}, d_ctx, rng));
    auto wot = kaiming_init<S>({d_q, dk}, dk, rng);
    if (out_scale != 1.0) wot *= static_cast<S>(out_scale);
    wo.init(name + ".wo", std::move(wot));
    reg.add(&wq);
    reg.add(&wk);
    reg.add(&wv);
    reg.add(&wo);
  }

  // x: (Tq, d_q), ctx: (Tk, d_ctx) -> (Tq, d_q)
  int forward(TapeT<S>& t, int x, int ctx) {
    const int q = ag::matmul_nt(t, x, t.param(wq));      // (Tq, dk)
    const int k = ag::matmul_nt(t, ctx, t.param(wk));    // (Tk, dk)
    const int v = ag::matmul_nt(t, ctx, t.param(wv));    // (Tk, dk)
    const int scores = ag::scale(t, ag::matmul_nt(t, q, k), 1.0 / std::sqrt(static_cast<double>(dk)));
    const int attn = ag::softmax_rows(t, scores);        // (Tq, Tk)
    const int mixed = ag::matmul(t, attn, v);            // (Tq, dk)
    return ag::matmul_nt(t, mixed, t.param(wo));         // (Tq, d_q)
  }
};

// Sinusoidal features of a diffusion timestep (computed outside the graph).
template <typename S>
TensorT<S> sinusoidal_time_features(int t_step, int64_t dim) {
  TensorT<S> out({1, dim});
  const int64_t half = dim / 2;
  for (int64_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                 static_cast<double>(half));
    out[2 * i] = static_cast<S>(std::sin(t_step * freq));
    out[2 * i + 1] = static_cast<S>(std::cos(t_step * freq));
  }
  return out;
}

// AdamW with decoupled weight decay.
template <typename S>
class AdamWT {
 public:
  explicit AdamWT(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                  double weight_decay = 0.0)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

  void step(const std::vector<ParamT<S>*>& params) {
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(p->value.shape);
        v_.emplace_back(p->value.shape);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& p = *params[pi];
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        const double g = static_cast<double>(p.grad[i]);
        m[i] = static_cast<S>(beta1_ * m[i] + (1.0 - beta1_) * g);
        v[i] = static_cast<S>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
        const double mhat = static_cast<double>(m[i]) / bc1;
        const double vhat = static_cast<double>(v[i]) / bc2;
        double upd = lr_ * mhat / (std::sqrt(vhat) + eps_);
        if (wd_ > 0.0) upd += lr_ * wd_ * static_cast<double>(p.value[i]);
        p.value[i] = static_cast<S>(p.value[i] - upd);
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_, wd_;
  int64_t t_ = 0;
  std::vector<TensorT<S>> m_, v_;
};

using AdamW = AdamWT<float>;

}  // namespace nn
}  // namespace a2s

#endif  // A2S_NN_HPP_
