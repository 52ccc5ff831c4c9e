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

#ifndef A2S_TENSOR_HPP_
#define A2S_TENSOR_HPP_

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "a2s/common.hpp"
#include "a2s/rng.hpp"

namespace a2s {

// Dense row-major n-d array. Scalar type is a template parameter so the same
// numeric code can run in float for training and double for finite-difference
// checks.
template <typename S>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<S> data;

  using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Matrix>;
  using ConstMap = Eigen::Map<const Matrix>;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), S(0));
  }
  TensorT(std::vector<int64_t> s, S fill) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  static TensorT zeros(std::vector<int64_t> s) { return TensorT(std::move(s)); }
  static TensorT full(std::vector<int64_t> s, S v) { return TensorT(std::move(s), v); }

  static TensorT randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0) {
    TensorT t(std::move(s));
    for (auto& v : t.data) v = static_cast<S>(rng.gaussian() * stddev);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const S& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  S& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  const S& at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
  S& at(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  const S& at(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  TensorT reshaped(std::vector<int64_t> s) const {
    if (numel_of(s) != numel()) throw InputError("reshape: element count mismatch");
    TensorT t = *this;
    t.shape = std::move(s);
    return t;
  }

  // 2-d Eigen views. rows*cols must equal numel().
  Map mat(int64_t rows, int64_t cols) { return Map(data.data(), rows, cols); }
  ConstMap mat(int64_t rows, int64_t cols) const { return ConstMap(data.data(), rows, cols); }
  Map mat() { return Map(data.data(), shape[0], numel() / shape[0]); }
  ConstMap mat() const { return ConstMap(data.data(), shape[0], numel() / shape[0]); }

  bool all_finite() const {
    for (S v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  TensorT& operator+=(const TensorT& o) {
    for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
  TensorT& operator*=(S c) {
    for (auto& v : data) v *= c;
    return *this;
  }
  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  template <typename T2>
  TensorT<T2> cast() const {
    TensorT<T2> t;
    t.shape = shape;
    t.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<T2>(data[i]);
    return t;
  }
};

using Tensor = TensorT<float>;

}  // namespace a2s

#endif  // A2S_TENSOR_HPP_
