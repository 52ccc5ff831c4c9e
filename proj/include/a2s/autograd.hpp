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
// Reverse-mode automatic differentiation on a flat tape. The tape is rebuilt
// every training step; nodes hold dense values and gradients. Everything is
// templated on the scalar type so the same operator definitions run in float
// for training and in double for finite-difference gradient checks.

#ifndef A2S_AUTOGRAD_HPP_
#define A2S_AUTOGRAD_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "a2s/common.hpp"
#include "a2s/tensor.hpp"

namespace a2s {

// A named trainable parameter living outside any tape. Gradients accumulate
// across tape backward passes until zeroed by the optimizer.
template <typename S>
struct ParamT {
  std::string name;
  TensorT<S> value;
  TensorT<S> grad;

  void init(std::string n, TensorT<S> v) {
    name = std::move(n);
    grad = TensorT<S>(v.shape);
    value = std::move(v);
  }
  void zero_grad() { grad.fill(S(0)); }
};

using Param = ParamT<float>;

template <typename S>
class TapeT {
 public:
  using T = TensorT<S>;
  using BackFn = std::function<void(TapeT&, int)>;

  struct Node {
    T value;
    T grad;
    BackFn back;
    ParamT<S>* param = nullptr;
  };

  int push(T value, BackFn back = nullptr) {
    Node n;
    n.grad = T(value.shape);
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int constant(T value) { return push(std::move(value)); }

  // Leaf backed by a parameter; backward() adds the leaf gradient into
  // param.grad, so forwarding the same parameter several times per tape
  // naturally sums its gradient contributions.
  int param(ParamT<S>& p) {
    const int id = push(p.value);
    nodes_[static_cast<size_t>(id)].param = &p;
    return id;
  }

  const T& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  T& grad(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse sweep from a scalar root. The tape order is a topological order by
  // construction (ops only reference earlier nodes).
  void backward(int root) {
    if (val(root).numel() != 1) throw InputError("backward: root must be a scalar");
    grad(root).fill(S(1));
    for (int i = root; i >= 0; --i) {
      auto& n = nodes_[static_cast<size_t>(i)];
      if (n.back) n.back(*this, i);
    }
    for (auto& n : nodes_) {
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

namespace ag {

template <typename S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (a.shape != b.shape) throw InputError(std::string(op) + ": shape mismatch");
}

template <typename S>
int add(TapeT<S>& t, int a, int b) {
  check_same_shape(t.val(a), t.val(b), "add");
  TensorT<S> out = t.val(a);
  out += t.val(b);
  return t.push(std::move(out), [a, b](TapeT<S>& tp, int self) {
    tp.grad(a) += tp.grad(self);
    tp.grad(b) += tp.grad(self);
  });
}

template <typename S>
int sub(TapeT<S>& t, int a, int b) {
  check_same_shape(t.val(a), t.val(b), "sub");
  TensorT<S> out = t.val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= t.val(b)[i];
  return t.push(std::move(out), [a, b](TapeT<S>& tp, int self) {
    tp.grad(a) += tp.grad(self);
    auto& gb = tp.grad(b);
    const auto& gs = tp.grad(self);
    for (int64_t i = 0; i < gb.numel(); ++i) gb[i] -= gs[i];
  });
}

template <typename S>
int mul(TapeT<S>& t, int a, int b) {
  check_same_shape(t.val(a), t.val(b), "mul");
  TensorT<S> out = t.val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= t.val(b)[i];
  return t.push(std::move(out), [a, b](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    const auto& va = tp.val(a);
    const auto& vb = tp.val(b);
    auto& ga = tp.grad(a);
    auto& gb = tp.grad(b);
    for (int64_t i = 0; i < gs.numel(); ++i) {
      ga[i] += gs[i] * vb[i];
      gb[i] += gs[i] * va[i];
    }
  });
}

template <typename S>
int scale(TapeT<S>& t, int a, double c) {
  TensorT<S> out = t.val(a);
  out *= static_cast<S>(c);
  return t.push(std::move(out), [a, c](TapeT<S>& tp, int self) {
    auto& ga = tp.grad(a);
    const auto& gs = tp.grad(self);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += gs[i] * static_cast<S>(c);
  });
}

// (N, M) + (M) or (1, M): broadcast over rows.
template <typename S>
int add_rowvec(TapeT<S>& t, int a, int b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  const int64_t m = va.shape.back();
  if (vb.numel() != m) throw InputError("add_rowvec: width mismatch");
  const int64_t rows = va.numel() / m;
  TensorT<S> out = va;
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < m; ++j) out[r * m + j] += vb[j];
  }
  return t.push(std::move(out), [a, b, rows, m](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    tp.grad(a) += gs;
    auto& gb = tp.grad(b);
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t j = 0; j < m; ++j) gb[j] += gs[r * m + j];
    }
  });
}

// (C, H, W) + (C): per-channel broadcast (e.g. injecting a time embedding).
template <typename S>
int add_channel(TapeT<S>& t, int x, int b) {
  const auto& vx = t.val(x);
  if (vx.rank() != 3) throw InputError("add_channel: expected rank-3 input");
  const int64_t c = vx.dim(0), hw = vx.dim(1) * vx.dim(2);
  if (t.val(b).numel() != c) throw InputError("add_channel: channel mismatch");
  TensorT<S> out = vx;
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t i = 0; i < hw; ++i) out[ch * hw + i] += t.val(b)[ch];
  }
  return t.push(std::move(out), [x, b, c, hw](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    tp.grad(x) += gs;
    auto& gb = tp.grad(b);
    for (int64_t ch = 0; ch < c; ++ch) {
      S acc = S(0);
      for (int64_t i = 0; i < hw; ++i) acc += gs[ch * hw + i];
      gb[ch] += acc;
    }
  });
}

template <typename S>
int matmul(TapeT<S>& t, int a, int b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0)) {
    throw InputError("matmul: incompatible shapes");
  }
  TensorT<S> out({va.dim(0), vb.dim(1)});
  out.mat() = va.mat() * vb.mat();
  return t.push(std::move(out), [a, b](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    tp.grad(a).mat() += gs.mat() * tp.val(b).mat().transpose();
    tp.grad(b).mat() += tp.val(a).mat().transpose() * gs.mat();
  });
}

// A (N, K) x B (M, K) -> A Bᵀ (N, M). The layout used by Linear and by
// attention score computation.
template <typename S>
int matmul_nt(TapeT<S>& t, int a, int b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1)) {
    throw InputError("matmul_nt: incompatible shapes");
  }
  TensorT<S> out({va.dim(0), vb.dim(0)});
  out.mat() = va.mat() * vb.mat().transpose();
  return t.push(std::move(out), [a, b](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    tp.grad(a).mat() += gs.mat() * tp.val(b).mat();
    tp.grad(b).mat() += gs.mat().transpose() * tp.val(a).mat();
  });
}

template <typename S>
int transpose(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  if (va.rank() != 2) throw InputError("transpose: expected rank-2");
  TensorT<S> out({va.dim(1), va.dim(0)});
  out.mat() = va.mat().transpose();
  return t.push(std::move(out), [a](TapeT<S>& tp, int self) {
    tp.grad(a).mat() += tp.grad(self).mat().transpose();
  });
}

template <typename S>
int reshape(TapeT<S>& t, int a, std::vector<int64_t> shape) {
  TensorT<S> out = t.val(a).reshaped(shape);
  return t.push(std::move(out), [a](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += gs[i];
  });
}

// Stack row blocks: each input (T_i, D) -> (sum T_i, D).
template <typename S>
int concat_rows(TapeT<S>& t, const std::vector<int>& ids) {
  if (ids.empty()) throw InputError("concat_rows: empty input list");
  const int64_t d = t.val(ids[0]).shape.back();
  int64_t rows = 0;
  for (int id : ids) {
    if (t.val(id).rank() != 2 || t.val(id).dim(1) != d) {
      throw InputError("concat_rows: width mismatch");
    }
    rows += t.val(id).dim(0);
  }
  TensorT<S> out({rows, d});
  int64_t off = 0;
  for (int id : ids) {
    const auto& v = t.val(id);
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
    off += v.numel();
  }
  return t.push(std::move(out), [ids](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    int64_t off = 0;
    for (int id : ids) {
      auto& g = tp.grad(id);
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += gs[off + i];
      off += g.numel();
    }
  });
}

// (C1, H, W) ++ (C2, H, W) -> (C1+C2, H, W).
template <typename S>
int concat_channels(TapeT<S>& t, int a, int b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  if (va.rank() != 3 || vb.rank() != 3 || va.dim(1) != vb.dim(1) || va.dim(2) != vb.dim(2)) {
    throw InputError("concat_channels: spatial mismatch");
  }
  TensorT<S> out({va.dim(0) + vb.dim(0), va.dim(1), va.dim(2)});
  std::copy(va.data.begin(), va.data.end(), out.data.begin());
  std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + va.numel());
  return t.push(std::move(out), [a, b](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    auto& gb = tp.grad(b);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += gs[i];
    for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += gs[ga.numel() + i];
  });
}

template <typename S>
int softmax_rows(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  if (va.rank() != 2) throw InputError("softmax_rows: expected rank-2");
  const int64_t n = va.dim(0), m = va.dim(1);
  TensorT<S> out(va.shape);
  for (int64_t r = 0; r < n; ++r) {
    S mx = va[r * m];
    for (int64_t j = 1; j < m; ++j) mx = std::max(mx, va[r * m + j]);
    S denom = S(0);
    for (int64_t j = 0; j < m; ++j) {
      out[r * m + j] = std::exp(va[r * m + j] - mx);
      denom += out[r * m + j];
    }
    for (int64_t j = 0; j < m; ++j) out[r * m + j] /= denom;
  }
  return t.push(std::move(out), [a, n, m](TapeT<S>& tp, int self) {
    const auto& y = tp.val(self);
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    for (int64_t r = 0; r < n; ++r) {
      S dot = S(0);
      for (int64_t j = 0; j < m; ++j) dot += gs[r * m + j] * y[r * m + j];
      for (int64_t j = 0; j < m; ++j) {
        ga[r * m + j] += y[r * m + j] * (gs[r * m + j] - dot);
      }
    }
  });
}

template <typename S>
int silu(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  TensorT<S> out(va.shape);
  for (int64_t i = 0; i < va.numel(); ++i) {
    const S sig = S(1) / (S(1) + std::exp(-va[i]));
    out[i] = va[i] * sig;
  }
  return t.push(std::move(out), [a](TapeT<S>& tp, int self) {
    const auto& va = tp.val(a);
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    for (int64_t i = 0; i < va.numel(); ++i) {
      const S sig = S(1) / (S(1) + std::exp(-va[i]));
      ga[i] += gs[i] * (sig * (S(1) + va[i] * (S(1) - sig)));
    }
  });
}

template <typename S>
int relu(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  TensorT<S> out(va.shape);
  for (int64_t i = 0; i < va.numel(); ++i) out[i] = va[i] > S(0) ? va[i] : S(0);
  return t.push(std::move(out), [a](TapeT<S>& tp, int self) {
    const auto& va = tp.val(a);
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    for (int64_t i = 0; i < va.numel(); ++i) {
      if (va[i] > S(0)) ga[i] += gs[i];
    }
  });
}

template <typename S>
int tanh_op(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  TensorT<S> out(va.shape);
  for (int64_t i = 0; i < va.numel(); ++i) out[i] = std::tanh(va[i]);
  return t.push(std::move(out), [a](TapeT<S>& tp, int self) {
    const auto& y = tp.val(self);
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    for (int64_t i = 0; i < y.numel(); ++i) ga[i] += gs[i] * (S(1) - y[i] * y[i]);
  });
}

template <typename S>
int sigmoid(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  TensorT<S> out(va.shape);
  for (int64_t i = 0; i < va.numel(); ++i) out[i] = S(1) / (S(1) + std::exp(-va[i]));
  return t.push(std::move(out), [a](TapeT<S>& tp, int self) {
    const auto& y = tp.val(self);
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    for (int64_t i = 0; i < y.numel(); ++i) ga[i] += gs[i] * y[i] * (S(1) - y[i]);
  });
}

template <typename S>
int exp_op(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  TensorT<S> out(va.shape);
  for (int64_t i = 0; i < va.numel(); ++i) out[i] = std::exp(va[i]);
  return t.push(std::move(out), [a](TapeT<S>& tp, int self) {
    const auto& y = tp.val(self);
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    for (int64_t i = 0; i < y.numel(); ++i) ga[i] += gs[i] * y[i];
  });
}

// GroupNorm over a (C, H, W) tensor: statistics per group of channels, then
// per-channel affine transform.
template <typename S>
int group_norm(TapeT<S>& t, int x, int gamma, int beta, int groups, double eps = 1e-5) {
  const auto& vx = t.val(x);
  if (vx.rank() != 3) throw InputError("group_norm: expected rank-3 input");
  const int64_t c = vx.dim(0), hw = vx.dim(1) * vx.dim(2);
  if (c % groups != 0) throw InputError("group_norm: channels not divisible by groups");
  if (t.val(gamma).numel() != c || t.val(beta).numel() != c) {
    throw InputError("group_norm: affine parameter size mismatch");
  }
  const int64_t gsize = (c / groups) * hw;

  auto mean = std::make_shared<std::vector<S>>(static_cast<size_t>(groups));
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<size_t>(groups));
  TensorT<S> xhat(vx.shape);
  for (int g = 0; g < groups; ++g) {
    const int64_t base = g * gsize;
    S mu = S(0);
    for (int64_t i = 0; i < gsize; ++i) mu += vx[base + i];
    mu /= static_cast<S>(gsize);
    S var = S(0);
    for (int64_t i = 0; i < gsize; ++i) {
      const S d = vx[base + i] - mu;
      var += d * d;
    }
    var /= static_cast<S>(gsize);
    const S is = S(1) / std::sqrt(var + static_cast<S>(eps));
    (*mean)[static_cast<size_t>(g)] = mu;
    (*inv_std)[static_cast<size_t>(g)] = is;
    for (int64_t i = 0; i < gsize; ++i) xhat[base + i] = (vx[base + i] - mu) * is;
  }
  TensorT<S> out(vx.shape);
  for (int64_t ch = 0; ch < c; ++ch) {
    const S gm = t.val(gamma)[ch], bt = t.val(beta)[ch];
    for (int64_t i = 0; i < hw; ++i) out[ch * hw + i] = gm * xhat[ch * hw + i] + bt;
  }
  auto xhat_p = std::make_shared<TensorT<S>>(std::move(xhat));
  return t.push(std::move(out),
                [x, gamma, beta, groups, c, hw, gsize, mean, inv_std, xhat_p](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    const auto& xh = *xhat_p;
    auto& gx = tp.grad(x);
    auto& gg = tp.grad(gamma);
    auto& gb = tp.grad(beta);
    // Affine parameter gradients.
    for (int64_t ch = 0; ch < c; ++ch) {
      S sg = S(0), sb = S(0);
      for (int64_t i = 0; i < hw; ++i) {
        sg += gs[ch * hw + i] * xh[ch * hw + i];
        sb += gs[ch * hw + i];
      }
      gg[ch] += sg;
      gb[ch] += sb;
    }
    // Input gradient per group: dL/dxhat = gs * gamma; then the usual
    // normalization backward.
    const int64_t cpg = c / groups;
    for (int g = 0; g < groups; ++g) {
      const int64_t base = g * gsize;
      S sum_dxh = S(0), sum_dxh_xh = S(0);
      for (int64_t i = 0; i < gsize; ++i) {
        const int64_t ch = g * cpg + i / hw;
        const S dxh = gs[base + i] * tp.val(gamma)[ch];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xh[base + i];
      }
      const S is = (*inv_std)[static_cast<size_t>(g)];
      const S inv_m = S(1) / static_cast<S>(gsize);
      for (int64_t i = 0; i < gsize; ++i) {
        const int64_t ch = g * cpg + i / hw;
        const S dxh = gs[base + i] * tp.val(gamma)[ch];
        gx[base + i] += is * (dxh - inv_m * sum_dxh - xh[base + i] * inv_m * sum_dxh_xh);
      }
    }
  });
}

namespace detail {

// im2col with the column matrix laid out (Cin*kh*kw, out_positions) so the
// convolution is a single weight x columns product.
template <typename S>
void im2col(const TensorT<S>& x, int kh, int kw, int stride, int pad, TensorT<S>& cols,
            int64_t ho, int64_t wo) {
  const int64_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  for (int64_t ci = 0; ci < cin; ++ci) {
    for (int di = 0; di < kh; ++di) {
      for (int dj = 0; dj < kw; ++dj) {
        const int64_t row = (ci * kh + di) * kw + dj;
        for (int64_t oi = 0; oi < ho; ++oi) {
          const int64_t ii = oi * stride + di - pad;
          for (int64_t oj = 0; oj < wo; ++oj) {
            const int64_t jj = oj * stride + dj - pad;
            S v = S(0);
            if (ii >= 0 && ii < h && jj >= 0 && jj < w) v = x[(ci * h + ii) * w + jj];
            cols[row * (ho * wo) + oi * wo + oj] = v;
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_acc(const TensorT<S>& cols, int kh, int kw, int stride, int pad, TensorT<S>& gx,
                int64_t ho, int64_t wo) {
  const int64_t cin = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
  for (int64_t ci = 0; ci < cin; ++ci) {
    for (int di = 0; di < kh; ++di) {
      for (int dj = 0; dj < kw; ++dj) {
        const int64_t row = (ci * kh + di) * kw + dj;
        for (int64_t oi = 0; oi < ho; ++oi) {
          const int64_t ii = oi * stride + di - pad;
          if (ii < 0 || ii >= h) continue;
          for (int64_t oj = 0; oj < wo; ++oj) {
            const int64_t jj = oj * stride + dj - pad;
            if (jj < 0 || jj >= w) continue;
            gx[(ci * h + ii) * w + jj] += cols[row * (ho * wo) + oi * wo + oj];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution: x (Cin, H, W), w (Cout, Cin*kh*kw), b (Cout).
template <typename S>
int conv2d(TapeT<S>& t, int x, int w, int b, int kh, int kw, int stride, int pad) {
  const auto& vx = t.val(x);
  const auto& vw = t.val(w);
  if (vx.rank() != 3) throw InputError("conv2d: expected rank-3 input");
  const int64_t cin = vx.dim(0), h = vx.dim(1), wd = vx.dim(2);
  if (vw.rank() != 2 || vw.dim(1) != cin * kh * kw) {
    throw InputError("conv2d: weight shape mismatch");
  }
  const int64_t cout = vw.dim(0);
  if (t.val(b).numel() != cout) throw InputError("conv2d: bias shape mismatch");
  const int64_t ho = (h + 2 * pad - kh) / stride + 1;
  const int64_t wo = (wd + 2 * pad - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) throw InputError("conv2d: output would be empty");

  auto cols = std::make_shared<TensorT<S>>(std::vector<int64_t>{cin * kh * kw, ho * wo});
  detail::im2col(vx, kh, kw, stride, pad, *cols, ho, wo);

  TensorT<S> out({cout, ho, wo});
  out.mat(cout, ho * wo) = vw.mat() * cols->mat();
  for (int64_t co = 0; co < cout; ++co) {
    const S bias = t.val(b)[co];
    for (int64_t i = 0; i < ho * wo; ++i) out[co * ho * wo + i] += bias;
  }
  return t.push(std::move(out),
                [x, w, b, kh, kw, stride, pad, cols, cout, ho, wo](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    auto gmat = gs.mat(cout, ho * wo);
    tp.grad(w).mat() += gmat * cols->mat().transpose();
    auto& gb = tp.grad(b);
    for (int64_t co = 0; co < cout; ++co) {
      S acc = S(0);
      for (int64_t i = 0; i < ho * wo; ++i) acc += gs[co * ho * wo + i];
      gb[co] += acc;
    }
    TensorT<S> gcols({tp.val(w).dim(1), ho * wo});
    gcols.mat() = tp.val(w).mat().transpose() * gmat;
    detail::col2im_acc(gcols, kh, kw, stride, pad, tp.grad(x), ho, wo);
  });
}

template <typename S>
int upsample_nearest2x(TapeT<S>& t, int x) {
  const auto& vx = t.val(x);
  if (vx.rank() != 3) throw InputError("upsample: expected rank-3 input");
  const int64_t c = vx.dim(0), h = vx.dim(1), w = vx.dim(2);
  TensorT<S> out({c, 2 * h, 2 * w});
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t i = 0; i < 2 * h; ++i) {
      for (int64_t j = 0; j < 2 * w; ++j) {
        out[(ch * 2 * h + i) * 2 * w + j] = vx[(ch * h + i / 2) * w + j / 2];
      }
    }
  }
  return t.push(std::move(out), [x, c, h, w](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    auto& gx = tp.grad(x);
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t i = 0; i < 2 * h; ++i) {
        for (int64_t j = 0; j < 2 * w; ++j) {
          gx[(ch * h + i / 2) * w + j / 2] += gs[(ch * 2 * h + i) * 2 * w + j];
        }
      }
    }
  });
}

// (N, D) -> (1, D) mean over rows.
template <typename S>
int mean_rows(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  if (va.rank() != 2) throw InputError("mean_rows: expected rank-2");
  const int64_t n = va.dim(0), d = va.dim(1);
  TensorT<S> out({1, d});
  for (int64_t r = 0; r < n; ++r) {
    for (int64_t j = 0; j < d; ++j) out[j] += va[r * d + j];
  }
  for (int64_t j = 0; j < d; ++j) out[j] /= static_cast<S>(n);
  return t.push(std::move(out), [a, n, d](TapeT<S>& tp, int self) {
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    const S inv = S(1) / static_cast<S>(n);
    for (int64_t r = 0; r < n; ++r) {
      for (int64_t j = 0; j < d; ++j) ga[r * d + j] += gs[j] * inv;
    }
  });
}

template <typename S>
int mean_all(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  TensorT<S> out({1});
  S acc = S(0);
  for (int64_t i = 0; i < va.numel(); ++i) acc += va[i];
  out[0] = acc / static_cast<S>(va.numel());
  return t.push(std::move(out), [a](TapeT<S>& tp, int self) {
    auto& ga = tp.grad(a);
    const S g = tp.grad(self)[0] / static_cast<S>(ga.numel());
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

// Mean of the log of the diagonal of a square rank-2 node: (B, B) -> (1).
// Entries must be strictly positive (e.g. softmax probabilities).
template <typename S>
int mean_log_diag(TapeT<S>& t, int a) {
  const auto& va = t.val(a);
  if (va.rank() != 2 || va.dim(0) != va.dim(1)) {
    throw InputError("mean_log_diag: expected square rank-2 input");
  }
  const int64_t n = va.dim(0);
  TensorT<S> out({1});
  S acc = S(0);
  for (int64_t r = 0; r < n; ++r) acc += std::log(va[r * n + r]);
  out[0] = acc / static_cast<S>(n);
  return t.push(std::move(out), [a, n](TapeT<S>& tp, int self) {
    const auto& va2 = tp.val(a);
    auto& ga = tp.grad(a);
    const S g = tp.grad(self)[0] / static_cast<S>(n);
    for (int64_t r = 0; r < n; ++r) ga[r * n + r] += g / va2[r * n + r];
  });
}

// Row-wise L2 normalization with an epsilon guard.
template <typename S>
int normalize_rows(TapeT<S>& t, int a, double eps = 1e-12) {
  const auto& va = t.val(a);
  if (va.rank() != 2) throw InputError("normalize_rows: expected rank-2");
  const int64_t n = va.dim(0), d = va.dim(1);
  auto norms = std::make_shared<std::vector<S>>(static_cast<size_t>(n));
  TensorT<S> out(va.shape);
  for (int64_t r = 0; r < n; ++r) {
    S sq = S(0);
    for (int64_t j = 0; j < d; ++j) sq += va[r * d + j] * va[r * d + j];
    const S nr = std::sqrt(sq + static_cast<S>(eps));
    (*norms)[static_cast<size_t>(r)] = nr;
    for (int64_t j = 0; j < d; ++j) out[r * d + j] = va[r * d + j] / nr;
  }
  return t.push(std::move(out), [a, n, d, norms](TapeT<S>& tp, int self) {
    const auto& y = tp.val(self);
    const auto& gs = tp.grad(self);
    auto& ga = tp.grad(a);
    for (int64_t r = 0; r < n; ++r) {
      S dot = S(0);
      for (int64_t j = 0; j < d; ++j) dot += gs[r * d + j] * y[r * d + j];
      const S inv = S(1) / (*norms)[static_cast<size_t>(r)];
      for (int64_t j = 0; j < d; ++j) {
        ga[r * d + j] += inv * (gs[r * d + j] - y[r * d + j] * dot);
      }
    }
  });
}

// Mean squared error against a constant target.
template <typename S>
int mse(TapeT<S>& t, int pred, const TensorT<S>& target) {
  const auto& vp = t.val(pred);
  check_same_shape(vp, target, "mse");
  TensorT<S> out({1});
  S acc = S(0);
  for (int64_t i = 0; i < vp.numel(); ++i) {
    const S d = vp[i] - target[i];
    acc += d * d;
  }
  out[0] = acc / static_cast<S>(vp.numel());
  auto tgt = std::make_shared<TensorT<S>>(target);
  return t.push(std::move(out), [pred, tgt](TapeT<S>& tp, int self) {
    const auto& vp = tp.val(pred);
    auto& gp = tp.grad(pred);
    const S g = tp.grad(self)[0] * S(2) / static_cast<S>(vp.numel());
    for (int64_t i = 0; i < vp.numel(); ++i) gp[i] += g * (vp[i] - (*tgt)[i]);
  });
}

// Cross entropy over row-wise softmax with integer labels; mean over rows.
template <typename S>
int softmax_ce(TapeT<S>& t, int logits, const std::vector<int>& labels) {
  const auto& vl = t.val(logits);
  if (vl.rank() != 2) throw InputError("softmax_ce: expected rank-2 logits");
  const int64_t n = vl.dim(0), m = vl.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) throw InputError("softmax_ce: label count mismatch");
  auto probs = std::make_shared<TensorT<S>>(vl.shape);
  TensorT<S> out({1});
  S loss = S(0);
  for (int64_t r = 0; r < n; ++r) {
    const int y = labels[static_cast<size_t>(r)];
    if (y < 0 || y >= m) throw InputError("softmax_ce: label out of range");
    S mx = vl[r * m];
    for (int64_t j = 1; j < m; ++j) mx = std::max(mx, vl[r * m + j]);
    S denom = S(0);
    for (int64_t j = 0; j < m; ++j) {
      (*probs)[r * m + j] = std::exp(vl[r * m + j] - mx);
      denom += (*probs)[r * m + j];
    }
    for (int64_t j = 0; j < m; ++j) (*probs)[r * m + j] /= denom;
    loss -= std::log(std::max((*probs)[r * m + y], static_cast<S>(1e-30)));
  }
  out[0] = loss / static_cast<S>(n);
  auto lab = std::make_shared<std::vector<int>>(labels);
  return t.push(std::move(out), [logits, probs, lab, n, m](TapeT<S>& tp, int self) {
    auto& gl = tp.grad(logits);
    const S g = tp.grad(self)[0] / static_cast<S>(n);
    for (int64_t r = 0; r < n; ++r) {
      for (int64_t j = 0; j < m; ++j) {
        const S onehot = (j == (*lab)[static_cast<size_t>(r)]) ? S(1) : S(0);
        gl[r * m + j] += g * ((*probs)[r * m + j] - onehot);
      }
    }
  });
}

// Binary cross entropy on logits against constant 0/1 targets; mean reduction.
template <typename S>
int bce_logits(TapeT<S>& t, int logits, const TensorT<S>& targets) {
  const auto& vl = t.val(logits);
  check_same_shape(vl, targets, "bce_logits");
  TensorT<S> out({1});
  S loss = S(0);
  for (int64_t i = 0; i < vl.numel(); ++i) {
    const S z = vl[i], y = targets[i];
    // log(1+e^z) computed stably.
    const S softplus = z > S(0) ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    loss += softplus - y * z;
  }
  out[0] = loss / static_cast<S>(vl.numel());
  auto tgt = std::make_shared<TensorT<S>>(targets);
  return t.push(std::move(out), [logits, tgt](TapeT<S>& tp, int self) {
    const auto& vl = tp.val(logits);
    auto& gl = tp.grad(logits);
    const S g = tp.grad(self)[0] / static_cast<S>(vl.numel());
    for (int64_t i = 0; i < vl.numel(); ++i) {
      const S sig = S(1) / (S(1) + std::exp(-vl[i]));
      gl[i] += g * (sig - (*tgt)[i]);
    }
  });
}

}  // namespace ag
}  // namespace a2s

#endif  // A2S_AUTOGRAD_HPP_
