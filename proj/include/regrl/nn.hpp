// Copyright 2026 The regrl Authors.
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

// Dense layers with hand-written backward passes. Activations are NCHW
// (convolutional) or NF (fully connected) row-major tensors. Parameter
// gradients accumulate; callers zero them between batches.

#pragma once

#include "regrl/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace regrl::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_str(const std::vector<int>& shape);

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)), data(count(shape), fill) {}

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return s.empty() ? 0 : n;
  }
  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  bool operator==(const Tensor&) const = default;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;
};

/// Named parameters with matching gradient slots, iterated in insertion
/// order. References returned by add() stay valid for the store's lifetime.
template <typename T>
class ParamStore {
 public:
  Parameter<T>& add(std::string name, std::vector<int> shape) {
    for (const auto& p : params_) {
      if (p->name == name) throw std::invalid_argument("duplicate parameter '" + name + "'");
    }
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = Tensor<T>(shape);
    p->grad = Tensor<T>(std::move(shape));
    params_.push_back(std::move(p));
    return *params_.back();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip). Zero padding k/2, so the
// output extent is ceil(H / stride) for odd k.

template <typename T>
struct ConvCache {
  std::vector<int> in_shape;
  RowMat<T> col;  // [Cin*k*k, N*Ho*Wo]
};

inline int conv_out_extent(int in, int k, int stride) { return (in + 2 * (k / 2) - k) / stride + 1; }

// Output columns [lo, hi) whose input column ow * stride + offset lies in [0, w).
inline std::pair<int, int> valid_cols(int offset, int stride, int w, int wo) {
  int lo = 0;
  while (lo < wo && lo * stride + offset < 0) ++lo;
  int hi = wo;
  while (hi > lo && (hi - 1) * stride + offset >= w) --hi;
  return {lo, hi};
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                         std::type_identity_t<ConvCache<T>>* cache) {
  if (x.shape.size() != 4 || weight.shape.size() != 4 || weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0 ||
      weight.dim(1) != x.dim(1) || bias.size() != static_cast<std::size_t>(weight.dim(0)) || stride < 1) {
    throw ShapeError("conv2d: input " + shape_str(x.shape) + " incompatible with kernel " + shape_str(weight.shape));
  }
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int o = weight.dim(0), k = weight.dim(2), pad = k / 2;
  const int ho = conv_out_extent(h, k, stride), wo = conv_out_extent(w, k, stride);
  if (ho < 1 || wo < 1) throw ShapeError("conv2d: kernel does not fit input " + shape_str(x.shape));
  const int kk = c * k * k;
  const long cols = static_cast<long>(n) * ho * wo;

  RowMat<T> col(kk, cols);
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const auto [lo, hi] = valid_cols(kj - pad, stride, w, wo);
        T* row = col.data() + static_cast<long>((ci * k + ki) * k + kj) * cols;
        for (int b = 0; b < n; ++b) {
          const T* plane = x.ptr() + (static_cast<std::size_t>(b) * c + ci) * h * w;
          T* dst = row + static_cast<long>(b) * ho * wo;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride + ki - pad;
            T* d = dst + oh * wo;
            if (ih < 0 || ih >= h) {
              std::fill(d, d + wo, T(0));
              continue;
            }
            std::fill(d, d + lo, T(0));
            const T* s = plane + ih * w + lo * stride + kj - pad;
            for (int ow = lo; ow < hi; ++ow, s += stride) d[ow] = *s;
            std::fill(d + hi, d + wo, T(0));
          }
        }
      }
    }
  }

  RowMat<T> y = ConstMatMap<T>(weight.ptr(), o, kk) * col;
  Tensor<T> out({n, o, ho, wo});
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < o; ++oc) {
      const T* src = y.data() + static_cast<long>(oc) * cols + static_cast<long>(b) * ho * wo;
      T* dst = out.ptr() + (static_cast<std::size_t>(b) * o + oc) * ho * wo;
      for (int i = 0; i < ho * wo; ++i) dst[i] = src[i] + bias[oc];
    }
  }
  if (cache != nullptr) {
    cache->in_shape = x.shape;
    cache->col = std::move(col);
  }
  return out;
}

/// Accumulates weight/bias gradients; returns dL/dx when `need_dx`.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& dy, const Tensor<T>& weight, int stride, const ConvCache<T>& cache,
                          Tensor<T>& dweight, Tensor<T>& dbias, bool need_dx) {
  const int n = cache.in_shape[0], c = cache.in_shape[1], h = cache.in_shape[2], w = cache.in_shape[3];
  const int o = weight.dim(0), k = weight.dim(2), pad = k / 2;
  const int ho = conv_out_extent(h, k, stride), wo = conv_out_extent(w, k, stride);
  if (dy.shape != std::vector<int>{n, o, ho, wo}) throw ShapeError("conv2d backward: bad upstream shape");
  const int kk = c * k * k;
  const long cols = static_cast<long>(n) * ho * wo;

  RowMat<T> dyr(o, cols);
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < o; ++oc) {
      const T* src = dy.ptr() + (static_cast<std::size_t>(b) * o + oc) * ho * wo;
      std::copy(src, src + ho * wo, dyr.data() + static_cast<long>(oc) * cols + static_cast<long>(b) * ho * wo);
    }
  }
  MatMap<T>(dweight.ptr(), o, kk).noalias() += dyr * cache.col.transpose();
  for (int oc = 0; oc < o; ++oc) dbias[oc] += dyr.row(oc).sum();

  Tensor<T> dx;
  if (!need_dx) return dx;
  const RowMat<T> dcol = ConstMatMap<T>(weight.ptr(), o, kk).transpose() * dyr;
  dx = Tensor<T>(cache.in_shape);
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const auto [lo, hi] = valid_cols(kj - pad, stride, w, wo);
        const T* row = dcol.data() + static_cast<long>((ci * k + ki) * k + kj) * cols;
        for (int b = 0; b < n; ++b) {
          T* plane = dx.ptr() + (static_cast<std::size_t>(b) * c + ci) * h * w;
          const T* src = row + static_cast<long>(b) * ho * wo;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride + ki - pad;
            if (ih < 0 || ih >= h) continue;
            T* d = plane + ih * w + lo * stride + kj - pad;
            const T* s = src + oh * wo;
            for (int ow = lo; ow < hi; ++ow, d += stride) *d += s[ow];
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Elementwise and shape layers.

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

/// Uses the forward output: the gradient passes where y > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& y) {
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(y[i] > T(0))) dx[i] = T(0);
  }
  return dx;
}

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

/// log(1 + exp(z)) without overflow.
template <typename T>
T softplus(T z) {
  return z > T(0) ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data) v = sigmoid(v);
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& dy, const Tensor<T>& y) {
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (T(1) - y[i]);
  return dx;
}

/// Row-wise softmax over the last axis of an [N, K] tensor.
template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& x) {
  if (x.shape.size() != 2) throw ShapeError("softmax: expected [N, K], got " + shape_str(x.shape));
  Tensor<T> y = x;
  const int n = x.dim(0), k = x.dim(1);
  for (int r = 0; r < n; ++r) {
    T* row = y.ptr() + static_cast<std::size_t>(r) * k;
    const T mx = *std::max_element(row, row + k);
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < k; ++j) row[j] /= sum;
  }
  return y;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& dy, const Tensor<T>& y) {
  Tensor<T> dx = dy;
  const int n = y.dim(0), k = y.dim(1);
  for (int r = 0; r < n; ++r) {
    const T* yr = y.ptr() + static_cast<std::size_t>(r) * k;
    const T* gr = dy.ptr() + static_cast<std::size_t>(r) * k;
    T dot = T(0);
    for (int j = 0; j < k; ++j) dot += yr[j] * gr[j];
    for (int j = 0; j < k; ++j) dx[static_cast<std::size_t>(r) * k + j] = yr[j] * (gr[j] - dot);
  }
  return dx;
}

/// y = x W^T + b with W [out, in].
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.shape.size() != 2 || weight.shape.size() != 2 || x.dim(1) != weight.dim(1) ||
      bias.size() != static_cast<std::size_t>(weight.dim(0))) {
    throw ShapeError("linear: input " + shape_str(x.shape) + " incompatible with weight " + shape_str(weight.shape));
  }
  const int n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  Tensor<T> y({n, out});
  MatMap<T> ym(y.ptr(), n, out);
  ym.noalias() = ConstMatMap<T>(x.ptr(), n, in) * ConstMatMap<T>(weight.ptr(), out, in).transpose();
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < out; ++j) ym(r, j) += bias[j];
  }
  return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& dy, const Tensor<T>& x, const Tensor<T>& weight, Tensor<T>& dweight,
                          Tensor<T>& dbias, bool need_dx) {
  const int n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (dy.shape != std::vector<int>{n, out}) throw ShapeError("linear backward: bad upstream shape");
  ConstMatMap<T> dym(dy.ptr(), n, out);
  MatMap<T>(dweight.ptr(), out, in).noalias() += dym.transpose() * ConstMatMap<T>(x.ptr(), n, in);
  for (int j = 0; j < out; ++j) dbias[j] += dym.col(j).sum();
  Tensor<T> dx;
  if (!need_dx) return dx;
  dx = Tensor<T>({n, in});
  MatMap<T>(dx.ptr(), n, in).noalias() = dym * ConstMatMap<T>(weight.ptr(), out, in);
  return dx;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  if (x.shape.size() != 4) throw ShapeError("global_avg_pool: expected NCHW, got " + shape_str(x.shape));
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c});
  for (int i = 0; i < n * c; ++i) {
    const T* src = x.ptr() + static_cast<std::size_t>(i) * hw;
    y[static_cast<std::size_t>(i)] = std::accumulate(src, src + hw, T(0)) / static_cast<T>(hw);
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, const std::vector<int>& in_shape) {
  Tensor<T> dx(in_shape);
  const int hw = in_shape[2] * in_shape[3];
  for (std::size_t i = 0; i < dy.size(); ++i) {
    std::fill_n(dx.ptr() + i * hw, hw, dy[i] / static_cast<T>(hw));
  }
  return dx;
}

template <typename T>
Tensor<T> channel_concat_forward(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape.size() != 4 || b.shape.size() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw ShapeError("channel_concat: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<T> y({n, ca + cb, a.dim(2), a.dim(3)});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.ptr() + static_cast<std::size_t>(i) * ca * hw, ca * hw,
                y.ptr() + static_cast<std::size_t>(i) * (ca + cb) * hw);
    std::copy_n(b.ptr() + static_cast<std::size_t>(i) * cb * hw, cb * hw,
                y.ptr() + (static_cast<std::size_t>(i) * (ca + cb) + ca) * hw);
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_concat_backward(const Tensor<T>& dy, int ca) {
  const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2), w = dy.dim(3), hw = h * w, cb = c - ca;
  Tensor<T> da({n, ca, h, w});
  Tensor<T> db({n, cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(dy.ptr() + static_cast<std::size_t>(i) * c * hw, ca * hw, da.ptr() + static_cast<std::size_t>(i) * ca * hw);
    std::copy_n(dy.ptr() + (static_cast<std::size_t>(i) * c + ca) * hw, cb * hw,
                db.ptr() + static_cast<std::size_t>(i) * cb * hw);
  }
  return {std::move(da), std::move(db)};
}

/// y = a + b; the backward pass hands dy to both operands unchanged.
template <typename T>
Tensor<T> residual_add_forward(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) throw ShapeError("residual_add: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor<T> y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& x) {
  if (acc.shape != x.shape) throw ShapeError("add_into: " + shape_str(acc.shape) + " vs " + shape_str(x.shape));
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

// ---------------------------------------------------------------------------
// Optimisation.

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  long long t = 0;

  void init(const ParamStore<T>& store) {
    m.clear();
    v.clear();
    for (std::size_t i = 0; i < store.size(); ++i) {
      m.emplace_back(store[i].value.shape);
      v.emplace_back(store[i].value.shape);
    }
    t = 0;
  }
};

/// Bias-corrected Adam. Frozen parameters are left bitwise untouched.
template <typename T>
void adam_step(ParamStore<T>& store, AdamState<T>& state, const AdamHyper& hp) {
  if (state.m.size() != store.size()) state.init(store);
  ++state.t;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter<T>& p = store[i];
    if (p.frozen) continue;
    T* m = state.m[i].ptr();
    T* v = state.v[i].ptr();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = static_cast<T>(hp.beta1 * m[j] + (1.0 - hp.beta1) * g);
      v[j] = static_cast<T>(hp.beta2 * v[j] + (1.0 - hp.beta2) * g * g);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p.value[j] = static_cast<T>(p.value[j] - hp.lr * mhat / (std::sqrt(vhat) + hp.eps));
    }
  }
}

template <typename T>
double global_grad_norm(const ParamStore<T>& store) {
  double sq = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store[i].frozen) continue;
    for (T g : store[i].grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

/// Scales all trainable gradients by max_norm / norm when the global L2 norm
/// exceeds max_norm. Returns the applied scale (1 when untouched).
template <typename T>
double clip_grad_norm(ParamStore<T>& store, double max_norm) {
  const double norm = global_grad_norm(store);
  if (!(norm > max_norm) || !std::isfinite(norm)) return 1.0;
  const double scale = max_norm / norm;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store[i].frozen) continue;
    for (T& g : store[i].grad.data) g = static_cast<T>(g * scale);
  }
  return scale;
}

// ---------------------------------------------------------------------------

/// Categorical distribution over softmax(logits).
template <typename T>
class Categorical {
 public:
  explicit Categorical(std::span<const T> logits) : probs_(logits.size()), log_probs_(logits.size()) {
    if (logits.empty()) throw ShapeError("categorical: empty logits");
    const T mx = *std::max_element(logits.begin(), logits.end());
    T sum = T(0);
    for (std::size_t i = 0; i < logits.size(); ++i) sum += std::exp(logits[i] - mx);
    const T log_z = mx + std::log(sum);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      log_probs_[i] = logits[i] - log_z;
      probs_[i] = std::exp(log_probs_[i]);
    }
  }

  std::size_t size() const { return probs_.size(); }
  const std::vector<T>& probs() const { return probs_; }
  T log_prob(std::size_t k) const { return log_probs_.at(k); }

  T entropy() const {
    T h = T(0);
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (probs_[i] > T(0)) h -= probs_[i] * log_probs_[i];
    }
    return h;
  }

  /// Inverse CDF on a single uniform draw.
  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      acc += static_cast<double>(probs_[i]);
      if (u < acc) return i;
    }
    for (std::size_t i = probs_.size(); i-- > 0;) {
      if (probs_[i] > T(0)) return i;
    }
    return probs_.size() - 1;
  }

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
  }

 private:
  std::vector<T> probs_;
  std::vector<T> log_probs_;
};

}  // namespace regrl::nn
