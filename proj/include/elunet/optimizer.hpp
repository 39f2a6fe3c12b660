#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "elunet/network.hpp"

namespace elunet {

// The CIFAR recipe: SGD with classical momentum, L2 weight decay folded into
// the gradient, and a step schedule dividing the rate by decay_factor at each
// decay epoch.
struct TrainSchedule {
  double base_lr = 0.1;
  std::vector<int> decay_epochs{81, 122};
  double decay_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 128;
  int total_epochs = 164;
  std::uint64_t seed = 1;
  // When set, BN scale/shift and biases see no weight decay.
  bool decay_exempt_bn_bias = true;

  void validate() const {
    if (base_lr <= 0 || decay_factor <= 0 || momentum < 0 || weight_decay < 0 ||
        batch_size < 1 || total_epochs < 0)
      throw std::invalid_argument("TrainSchedule: rates must be positive");
    for (std::size_t i = 1; i < decay_epochs.size(); ++i)
      if (decay_epochs[i] <= decay_epochs[i - 1])
        throw std::invalid_argument("TrainSchedule: decay epochs must increase");
  }
};

// Epochs are 0-indexed: base_lr before the first decay epoch, then divided by
// decay_factor at each boundary.
inline double lr_at_epoch(const TrainSchedule& sched, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at_epoch: negative epoch");
  double lr = sched.base_lr;
  for (int decay : sched.decay_epochs)
    if (epoch >= decay) lr /= sched.decay_factor;
  return lr;
}

// One velocity buffer per registry entry, same extent as the parameter.
template <typename T>
struct SgdState {
  std::vector<std::vector<T>> velocity;

  static SgdState init(std::vector<ParamView<T>> params) {
    SgdState s;
    s.velocity.reserve(params.size());
    for (const auto& p : params) s.velocity.emplace_back(p.value.size(), T(0));
    return s;
  }
};

struct StepStatus {
  bool diverged = false;
};

// v <- momentum*v - lr*(g + wd*p); p <- p + v. On a non-finite gradient the
// step is not applied and divergence is signalled instead.
template <typename T>
StepStatus sgd_step(std::vector<ParamView<T>> params, const Gradients<T>& grads,
                    SgdState<T>& state, double lr, const TrainSchedule& sched) {
  if (params.size() != grads.by_param.size() || params.size() != state.velocity.size())
    throw std::invalid_argument("sgd_step: registry misaligned");
  if (!grads.all_finite_values()) return {.diverged = true};
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value;
    const auto& g = grads.by_param[i];
    auto& v = state.velocity[i];
    if (g.size() != value.size() || v.size() != value.size())
      throw std::invalid_argument("sgd_step: gradient extent mismatch");
    const double wd =
        (sched.decay_exempt_bn_bias && !params[i].weight_decay) ? 0.0 : sched.weight_decay;
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double step = sched.momentum * static_cast<double>(v[k]) -
                          lr * (static_cast<double>(g[k]) + wd * static_cast<double>(value[k]));
      v[k] = static_cast<T>(step);
      value[k] = static_cast<T>(static_cast<double>(value[k]) + step);
    }
  }
  return {.diverged = false};
}

}  // namespace elunet
