#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "elunet/tensor.hpp"

namespace elunet {

template <typename T>
struct SoftmaxLoss {
  double loss = 0;        // mean over batch of -log softmax(label)
  Tensor4<T> grad_logits; // (softmax - onehot) / N
};

// Numerically stabilized by per-row max subtraction.
template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const Tensor4<T>& logits,
                                     std::span<const std::int32_t> labels) {
  const Shape4 s = logits.shape();
  if (s.h != 1 || s.w != 1)
    throw std::invalid_argument("softmax_cross_entropy: logits must be (N,K,1,1)");
  if (static_cast<std::int64_t>(labels.size()) != s.n)
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  SoftmaxLoss<T> out;
  out.grad_logits = Tensor4<T>(s);
  const std::int64_t batch = s.n, classes = s.c;
  double loss_acc = 0;
  for (std::int64_t n = 0; n < batch; ++n) {
    const std::int32_t label = labels[n];
    if (label < 0 || label >= classes)
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    double row_max = logits.at(n, 0, 0, 0);
    for (std::int64_t k = 1; k < classes; ++k)
      row_max = std::max(row_max, static_cast<double>(logits.at(n, k, 0, 0)));
    double denom = 0;
    for (std::int64_t k = 0; k < classes; ++k)
      denom += std::exp(static_cast<double>(logits.at(n, k, 0, 0)) - row_max);
    const double log_denom = std::log(denom);
    loss_acc -= (static_cast<double>(logits.at(n, label, 0, 0)) - row_max) - log_denom;
    for (std::int64_t k = 0; k < classes; ++k) {
      const double p =
          std::exp(static_cast<double>(logits.at(n, k, 0, 0)) - row_max - log_denom);
      out.grad_logits.at(n, k, 0, 0) =
          static_cast<T>((p - (k == label ? 1.0 : 0.0)) / static_cast<double>(batch));
    }
  }
  out.loss = loss_acc / static_cast<double>(batch);
  return out;
}

}  // namespace elunet
