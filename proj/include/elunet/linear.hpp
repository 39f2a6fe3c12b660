#pragma once

#include <stdexcept>
#include <vector>

#include "elunet/tensor.hpp"

namespace elunet {

// Affine map over pooled features: x (N,C,1,1), weights (K,C,1,1), bias[K]
// -> logits (N,K,1,1).
template <typename T>
Tensor4<T> fully_connected_forward(const Tensor4<T>& x, const Tensor4<T>& weights,
                                   const std::vector<T>& bias) {
  const Shape4 xs = x.shape(), ws = weights.shape();
  if (xs.h != 1 || xs.w != 1)
    throw std::invalid_argument("fully_connected: input must be (N,C,1,1)");
  if (ws.c != xs.c || ws.h != 1 || ws.w != 1 ||
      static_cast<std::int64_t>(bias.size()) != ws.n)
    throw std::invalid_argument("fully_connected: weight/bias dims mismatch");
  Tensor4<T> out({xs.n, ws.n, 1, 1});
  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t k = 0; k < ws.n; ++k) {
      double acc = bias[k];
      for (std::int64_t c = 0; c < xs.c; ++c)
        acc += static_cast<double>(weights.at(k, c, 0, 0)) * x.at(n, c, 0, 0);
      out.at(n, k, 0, 0) = static_cast<T>(acc);
    }
  return out;
}

template <typename T>
struct FullyConnectedGrads {
  Tensor4<T> x;
  Tensor4<T> weights;
  std::vector<T> bias;
};

template <typename T>
FullyConnectedGrads<T> fully_connected_backward(const Tensor4<T>& x,
                                                const Tensor4<T>& weights,
                                                const Tensor4<T>& grad_out) {
  const Shape4 xs = x.shape(), ws = weights.shape();
  if (!(grad_out.shape() == Shape4{xs.n, ws.n, 1, 1}))
    throw std::invalid_argument("fully_connected_backward: grad shape mismatch");
  FullyConnectedGrads<T> g{Tensor4<T>(xs), Tensor4<T>(ws), std::vector<T>(ws.n, T(0))};
  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t k = 0; k < ws.n; ++k) {
      const T go = grad_out.at(n, k, 0, 0);
      g.bias[k] += go;
      for (std::int64_t c = 0; c < xs.c; ++c) {
        g.weights.at(k, c, 0, 0) += go * x.at(n, c, 0, 0);
        g.x.at(n, c, 0, 0) += go * weights.at(k, c, 0, 0);
      }
    }
  return g;
}

}  // namespace elunet
