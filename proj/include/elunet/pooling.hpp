#pragma once

#include <stdexcept>

#include "elunet/tensor.hpp"

namespace elunet {

// Per-channel spatial mean, (N,C,H,W) -> (N,C,1,1).
template <typename T>
Tensor4<T> global_avg_pool_forward(const Tensor4<T>& x) {
  const Shape4 s = x.shape();
  if (s.h < 1 || s.w < 1)
    throw std::invalid_argument("global_avg_pool: empty spatial extent");
  Tensor4<T> out({s.n, s.c, 1, 1});
  const double inv = 1.0 / static_cast<double>(s.h * s.w);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c) {
      double acc = 0;
      for (std::int64_t h = 0; h < s.h; ++h)
        for (std::int64_t w = 0; w < s.w; ++w) acc += x.at(n, c, h, w);
      out.at(n, c, 0, 0) = static_cast<T>(acc * inv);
    }
  return out;
}

// Distributes grad/(H*W) uniformly over each channel's spatial positions.
template <typename T>
Tensor4<T> global_avg_pool_backward(const Tensor4<T>& grad_out, Shape4 in_shape) {
  if (in_shape.h < 1 || in_shape.w < 1)
    throw std::invalid_argument("global_avg_pool: empty spatial extent");
  if (!(grad_out.shape() == Shape4{in_shape.n, in_shape.c, 1, 1}))
    throw std::invalid_argument("global_avg_pool_backward: grad shape mismatch");
  Tensor4<T> grad_x(in_shape);
  const T inv = T(1) / static_cast<T>(in_shape.h * in_shape.w);
  for (std::int64_t n = 0; n < in_shape.n; ++n)
    for (std::int64_t c = 0; c < in_shape.c; ++c) {
      const T g = grad_out.at(n, c, 0, 0) * inv;
      for (std::int64_t h = 0; h < in_shape.h; ++h)
        for (std::int64_t w = 0; w < in_shape.w; ++w) grad_x.at(n, c, h, w) = g;
    }
  return grad_x;
}

}  // namespace elunet
