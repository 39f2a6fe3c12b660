#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "elunet/tensor.hpp"

namespace elunet {

enum class BnMode { train, infer };

// Per-channel scale/shift with running statistics. Train mode normalizes by
// biased batch statistics over (N,H,W); infer mode uses the running ones.
// Running update: new = (1 - momentum) * old + momentum * batch.
template <typename T>
struct BatchNormState {
  std::vector<T> gamma, beta, running_mean, running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);
  BnMode mode = BnMode::train;

  static BatchNormState identity(std::int64_t channels) {
    BatchNormState s;
    s.gamma.assign(channels, T(1));
    s.beta.assign(channels, T(0));
    s.running_mean.assign(channels, T(0));
    s.running_var.assign(channels, T(1));
    return s;
  }

  std::int64_t channels() const { return static_cast<std::int64_t>(gamma.size()); }
};

template <typename T>
struct BatchNormForwardResult {
  Tensor4<T> y;
  // Updated running statistics; the owner decides whether to adopt them.
  std::vector<T> running_mean, running_var;
  // Batch statistics actually used (train mode only).
  std::vector<T> batch_mean, batch_inv_std;
};

namespace detail {

template <typename T>
void bn_check(const Tensor4<T>& x, const BatchNormState<T>& s) {
  if (x.shape().c != s.channels())
    throw std::invalid_argument("batchnorm: channel mismatch");
  if (s.beta.size() != s.gamma.size() || s.running_mean.size() != s.gamma.size() ||
      s.running_var.size() != s.gamma.size())
    throw std::invalid_argument("batchnorm: inconsistent state vectors");
}

// Eight independent lanes keep the reduction vectorizable without making the
// result depend on data alignment; the combine order is fixed.
template <typename T>
double lane_sum(const T* data, std::int64_t len) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::int64_t i = 0;
  for (; i + 8 <= len; i += 8)
    for (int l = 0; l < 8; ++l) lanes[l] += static_cast<double>(data[i + l]);
  double acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
               ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; i < len; ++i) acc += static_cast<double>(data[i]);
  return acc;
}

template <typename T>
double lane_sum_sq_diff(const T* data, std::int64_t len, double mu) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::int64_t i = 0;
  for (; i + 8 <= len; i += 8)
    for (int l = 0; l < 8; ++l) {
      const double d = static_cast<double>(data[i + l]) - mu;
      lanes[l] += d * d;
    }
  double acc = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
               ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  for (; i < len; ++i) {
    const double d = static_cast<double>(data[i]) - mu;
    acc += d * d;
  }
  return acc;
}

// Biased (population) mean/variance per channel over (N,H,W).
template <typename T>
void bn_batch_stats(const Tensor4<T>& x, std::vector<T>& mean, std::vector<T>& var) {
  const Shape4 s = x.shape();
  const std::int64_t pool = s.n * s.h * s.w;
  const std::int64_t spatial = s.h * s.w;
  mean.assign(s.c, T(0));
  var.assign(s.c, T(0));
  for (std::int64_t c = 0; c < s.c; ++c) {
    double acc = 0;
    for (std::int64_t n = 0; n < s.n; ++n) acc += lane_sum(&x.at(n, c, 0, 0), spatial);
    const double mu = acc / static_cast<double>(pool);
    double acc2 = 0;
    for (std::int64_t n = 0; n < s.n; ++n)
      acc2 += lane_sum_sq_diff(&x.at(n, c, 0, 0), spatial, mu);
    mean[c] = static_cast<T>(mu);
    var[c] = static_cast<T>(acc2 / static_cast<double>(pool));
  }
}

}  // namespace detail

template <typename T>
BatchNormForwardResult<T> batchnorm_forward(const Tensor4<T>& x,
                                            const BatchNormState<T>& s) {
  detail::bn_check(x, s);
  const Shape4 xs = x.shape();
  const std::int64_t spatial = xs.h * xs.w;
  BatchNormForwardResult<T> out;
  out.y = Tensor4<T>(xs);
  out.running_mean = s.running_mean;
  out.running_var = s.running_var;

  std::vector<T> mean, var;
  if (s.mode == BnMode::train) {
    if (xs.n * spatial < 2)
      throw std::invalid_argument("batchnorm: train mode needs N*H*W >= 2");
    detail::bn_batch_stats(x, mean, var);
    for (std::int64_t c = 0; c < xs.c; ++c) {
      out.running_mean[c] = (T(1) - s.momentum) * s.running_mean[c] + s.momentum * mean[c];
      out.running_var[c] = (T(1) - s.momentum) * s.running_var[c] + s.momentum * var[c];
    }
  } else {
    mean = s.running_mean;
    var = s.running_var;
  }

  out.batch_mean = mean;
  out.batch_inv_std.resize(xs.c);
  for (std::int64_t c = 0; c < xs.c; ++c)
    out.batch_inv_std[c] = static_cast<T>(
        1.0 / std::sqrt(static_cast<double>(var[c]) + static_cast<double>(s.epsilon)));

  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t c = 0; c < xs.c; ++c) {
      const T* src = &x.at(n, c, 0, 0);
      T* dst = &out.y.at(n, c, 0, 0);
      const T mu = mean[c], inv = out.batch_inv_std[c];
      const T g = s.gamma[c], b = s.beta[c];
      for (std::int64_t i = 0; i < spatial; ++i) dst[i] = (src[i] - mu) * inv * g + b;
    }
  return out;
}

template <typename T>
struct BatchNormGrads {
  Tensor4<T> x;
  std::vector<T> gamma, beta;
};

// Exact gradient of the train-mode map, including the dependence of the batch
// statistics on x. Statistics are recomputed from x, so no cache is needed.
template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor4<T>& x, const BatchNormState<T>& s,
                                     const Tensor4<T>& grad_out) {
  detail::bn_check(x, s);
  if (s.mode != BnMode::train)
    throw std::logic_error("batchnorm_backward: called in infer mode");
  detail::require_same_shape(x, grad_out, "batchnorm_backward");
  const Shape4 xs = x.shape();
  const std::int64_t spatial = xs.h * xs.w;
  const std::int64_t pool = xs.n * spatial;
  if (pool < 2) throw std::invalid_argument("batchnorm: train mode needs N*H*W >= 2");

  std::vector<T> mean, var;
  detail::bn_batch_stats(x, mean, var);

  BatchNormGrads<T> g{Tensor4<T>(xs), std::vector<T>(xs.c, T(0)),
                      std::vector<T>(xs.c, T(0))};
  for (std::int64_t c = 0; c < xs.c; ++c) {
    const double mu = mean[c];
    const double inv =
        1.0 / std::sqrt(static_cast<double>(var[c]) + static_cast<double>(s.epsilon));
    double sum_g = 0, sum_gx = 0;  // sums of grad and grad*xhat
    for (std::int64_t n = 0; n < xs.n; ++n) {
      const T* xr = &x.at(n, c, 0, 0);
      const T* gr = &grad_out.at(n, c, 0, 0);
      double g_lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      double gx_lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      std::int64_t i = 0;
      for (; i + 8 <= spatial; i += 8)
        for (int l = 0; l < 8; ++l) {
          const double xhat = (static_cast<double>(xr[i + l]) - mu) * inv;
          g_lanes[l] += gr[i + l];
          gx_lanes[l] += static_cast<double>(gr[i + l]) * xhat;
        }
      sum_g += ((g_lanes[0] + g_lanes[1]) + (g_lanes[2] + g_lanes[3])) +
               ((g_lanes[4] + g_lanes[5]) + (g_lanes[6] + g_lanes[7]));
      sum_gx += ((gx_lanes[0] + gx_lanes[1]) + (gx_lanes[2] + gx_lanes[3])) +
                ((gx_lanes[4] + gx_lanes[5]) + (gx_lanes[6] + gx_lanes[7]));
      for (; i < spatial; ++i) {
        const double xhat = (static_cast<double>(xr[i]) - mu) * inv;
        sum_g += gr[i];
        sum_gx += static_cast<double>(gr[i]) * xhat;
      }
    }
    g.beta[c] = static_cast<T>(sum_g);
    g.gamma[c] = static_cast<T>(sum_gx);
    const double scale = static_cast<double>(s.gamma[c]) * inv / static_cast<double>(pool);
    for (std::int64_t n = 0; n < xs.n; ++n) {
      const T* xr = &x.at(n, c, 0, 0);
      const T* gr = &grad_out.at(n, c, 0, 0);
      T* dst = &g.x.at(n, c, 0, 0);
      for (std::int64_t i = 0; i < spatial; ++i) {
        const double xhat = (static_cast<double>(xr[i]) - mu) * inv;
        dst[i] = static_cast<T>(
            scale * (static_cast<double>(pool) * gr[i] - sum_g - xhat * sum_gx));
      }
    }
  }
  return g;
}

}  // namespace elunet
