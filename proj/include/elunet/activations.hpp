#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "elunet/tensor.hpp"

namespace elunet {

template <typename T>
struct EluParams {
  T alpha = T(1);
};

namespace detail {
template <typename T>
using ArrayMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrayMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

// os holds exp(min(x,0)) on entry. Branch-free so it vectorizes.
template <typename T>
void elu_backward_blend(const T* __restrict__ xs, const T* __restrict__ gs,
                        T* __restrict__ os, std::int64_t count, T alpha) {
  for (std::int64_t i = 0; i < count; ++i) {
    const T pos = static_cast<T>(xs[i] > 0);
    os[i] = gs[i] * (pos + (T(1) - pos) * alpha * os[i]);
  }
}
}  // namespace detail

// f(x) = x for x > 0, alpha*(exp(x)-1) for x <= 0. Continuous at 0 and
// saturating to -alpha for large negative inputs. Written as
// max(x,0) + alpha*(exp(min(x,0))-1) so the exponential vectorizes and never
// overflows.
template <typename T>
Tensor4<T> elu_forward(const Tensor4<T>& x, T alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("elu: alpha must be > 0");
  Tensor4<T> out(x.shape());
  detail::ConstArrayMap<T> in(x.data(), x.size());
  detail::ArrayMap<T> o(out.data(), out.size());
  o = in.max(T(0)) + alpha * (in.min(T(0)).exp() - T(1));
  return out;
}

// Derivative is 1 for x > 0 and alpha*exp(x) for x <= 0; at exactly 0 the
// negative branch applies, giving alpha.
template <typename T>
Tensor4<T> elu_backward(const Tensor4<T>& x, T alpha, const Tensor4<T>& grad_out) {
  if (!(alpha > 0)) throw std::invalid_argument("elu: alpha must be > 0");
  detail::require_same_shape(x, grad_out, "elu_backward");
  Tensor4<T> out(x.shape());
  detail::ConstArrayMap<T> in(x.data(), x.size());
  detail::ArrayMap<T> o(out.data(), out.size());
  o = in.min(T(0)).exp();  // 1 where x > 0, exp(x) otherwise
  detail::elu_backward_blend(x.data(), grad_out.data(), out.data(), out.size(), alpha);
  return out;
}

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
  return map(x, [](T v) { return v > 0 ? v : T(0); });
}

// Subgradient at 0 fixed to 0.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& grad_out) {
  return zip(x, grad_out, [](T v, T g) { return v > 0 ? g : T(0); });
}

}  // namespace elunet
