#pragma once

#include <functional>
#include <string>
#include <vector>

#include "elunet/block.hpp"
#include "elunet/gradcheck.hpp"
#include "elunet/loss.hpp"
#include "elunet/network.hpp"

namespace elunet {

// Finite-difference certification of every analytic backward path, in double
// precision. Each op is scalarized through a fixed random projection P:
// f = sum(P .* op(x)), whose input gradient is backward(P).
namespace certify {

inline Tensor4<double> small_randn(Shape4 s, Rng& rng, double stddev = 1.0) {
  return randn<double>(s, 0.0, stddev, rng);
}

inline double project(const Tensor4<double>& y, const Tensor4<double>& p) {
  double acc = 0;
  for (std::int64_t i = 0; i < y.size(); ++i) acc += y[i] * p[i];
  return acc;
}

template <typename F>
GradCheckReport check_tensor_input(const std::string& name, F&& op,
                                   Tensor4<double> x, const Tensor4<double>& analytic) {
  auto f = [&](const Tensor4<double>& probe) { return op(probe); };
  Tensor4<double> numeric = numeric_gradient(f, x, kGradCheckStep);
  return check_op(name, analytic, numeric);
}

template <typename F>
GradCheckReport check_span_input(const std::string& name, F&& f, std::span<double> x,
                                 std::span<const double> analytic) {
  std::vector<double> numeric = numeric_gradient_span(f, x, kGradCheckStep);
  return check_op(name, analytic, numeric);
}

inline std::vector<GradCheckReport> conv_reports(Rng& rng) {
  std::vector<GradCheckReport> out;
  ConvParams<double> p;
  p.weights = small_randn({4, 3, 3, 3}, rng, 0.4);
  p.bias.assign(4, 0.0);
  for (auto& b : p.bias) b = rng.normal(0.0, 0.2);
  p.stride = 2;
  p.pad = 1;
  Tensor4<double> x = small_randn({2, 3, 6, 6}, rng);
  Tensor4<double> proj = small_randn(conv_output_shape(x.shape(), p), rng);
  auto grads = conv2d_backward(x, p, proj);

  out.push_back(check_tensor_input(
      "conv2d.grad_x", [&](const Tensor4<double>& v) { return project(conv2d_forward(v, p), proj); },
      x, grads.x));
  out.push_back(check_span_input(
      "conv2d.grad_weights",
      [&]() { return project(conv2d_forward(x, p), proj); }, p.weights.values(),
      grads.weights.values()));
  out.push_back(check_span_input(
      "conv2d.grad_bias", [&]() { return project(conv2d_forward(x, p), proj); },
      p.bias, grads.bias));
  return out;
}

inline std::vector<GradCheckReport> batchnorm_reports(Rng& rng) {
  std::vector<GradCheckReport> out;
  BatchNormState<double> s = BatchNormState<double>::identity(3);
  for (auto& g : s.gamma) g = 1.0 + rng.normal(0.0, 0.3);
  for (auto& b : s.beta) b = rng.normal(0.0, 0.3);
  s.mode = BnMode::train;
  Tensor4<double> x = small_randn({3, 3, 4, 4}, rng);
  Tensor4<double> proj = small_randn(x.shape(), rng);
  auto grads = batchnorm_backward(x, s, proj);

  out.push_back(check_tensor_input(
      "batchnorm.grad_x",
      [&](const Tensor4<double>& v) { return project(batchnorm_forward(v, s).y, proj); },
      x, grads.x));
  out.push_back(check_span_input(
      "batchnorm.grad_gamma",
      [&]() { return project(batchnorm_forward(x, s).y, proj); }, s.gamma, grads.gamma));
  out.push_back(check_span_input(
      "batchnorm.grad_beta",
      [&]() { return project(batchnorm_forward(x, s).y, proj); }, s.beta, grads.beta));
  return out;
}

inline std::vector<GradCheckReport> activation_reports(Rng& rng) {
  std::vector<GradCheckReport> out;
  const double alpha = 1.0;
  Tensor4<double> x = small_randn({2, 3, 4, 4}, rng);
  Tensor4<double> proj = small_randn(x.shape(), rng);
  out.push_back(check_tensor_input(
      "elu.grad_x",
      [&](const Tensor4<double>& v) { return project(elu_forward(v, alpha), proj); }, x,
      elu_backward(x, alpha, proj)));

  // Keep probes away from the ReLU kink.
  Tensor4<double> xr = map(x, [](double v) {
    const double shifted = v + (v >= 0 ? 0.05 : -0.05);
    return std::abs(shifted) < 1e-3 ? 0.05 : shifted;
  });
  out.push_back(check_tensor_input(
      "relu.grad_x",
      [&](const Tensor4<double>& v) { return project(relu_forward(v), proj); }, xr,
      relu_backward(xr, proj)));
  return out;
}

inline std::vector<GradCheckReport> pool_fc_loss_reports(Rng& rng) {
  std::vector<GradCheckReport> out;
  {
    Tensor4<double> x = small_randn({2, 3, 5, 5}, rng);
    Tensor4<double> proj = small_randn({2, 3, 1, 1}, rng);
    out.push_back(check_tensor_input(
        "global_avg_pool.grad_x",
        [&](const Tensor4<double>& v) { return project(global_avg_pool_forward(v), proj); },
        x, global_avg_pool_backward(proj, x.shape())));
  }
  {
    Tensor4<double> x = small_randn({3, 5, 1, 1}, rng);
    Tensor4<double> w = small_randn({4, 5, 1, 1}, rng, 0.5);
    std::vector<double> b(4);
    for (auto& v : b) v = rng.normal(0.0, 0.2);
    Tensor4<double> proj = small_randn({3, 4, 1, 1}, rng);
    auto grads = fully_connected_backward(x, w, proj);
    out.push_back(check_tensor_input(
        "fully_connected.grad_x",
        [&](const Tensor4<double>& v) { return project(fully_connected_forward(v, w, b), proj); },
        x, grads.x));
    out.push_back(check_span_input(
        "fully_connected.grad_weights",
        [&]() { return project(fully_connected_forward(x, w, b), proj); }, w.values(),
        grads.weights.values()));
    out.push_back(check_span_input(
        "fully_connected.grad_bias",
        [&]() { return project(fully_connected_forward(x, w, b), proj); }, b, grads.bias));
  }
  {
    Tensor4<double> logits = small_randn({4, 6, 1, 1}, rng, 2.0);
    std::vector<std::int32_t> labels{0, 3, 5, 2};
    auto sm = softmax_cross_entropy(logits, std::span<const std::int32_t>(labels));
    out.push_back(check_tensor_input(
        "softmax_cross_entropy.grad_logits",
        [&](const Tensor4<double>& v) {
          return softmax_cross_entropy(v, std::span<const std::int32_t>(labels)).loss;
        },
        logits, sm.grad_logits));
  }
  {
    Tensor4<double> x = small_randn({2, 3, 6, 6}, rng);
    Tensor4<double> proj = small_randn({2, 5, 3, 3}, rng);
    Tensor4<double> analytic = shortcut_backward(proj, x.shape(), 3, 5, 2);
    out.push_back(check_tensor_input(
        "shortcut.grad_x",
        [&](const Tensor4<double>& v) { return project(shortcut_apply(v, 3, 5, 2), proj); },
        x, analytic));
  }
  return out;
}

// One block per variant: gradient wrt the block input and every block
// parameter, through a projection of the block output.
inline std::vector<GradCheckReport> block_reports(Rng& rng) {
  std::vector<GradCheckReport> out;
  for (BlockVariant variant :
       {BlockVariant::baseline_relu_bn, BlockVariant::conv_elu_conv_elu,
        BlockVariant::elu_conv_elu_conv, BlockVariant::conv_elu_conv_bn_post_elu,
        BlockVariant::conv_elu_conv_bn}) {
    ResBlock<double> block = build_block<double>(variant, 2, 4, 2, 1.0, rng);
    Tensor4<double> x = small_randn({2, 2, 6, 6}, rng);
    Tensor4<double> proj = small_randn({2, 4, 3, 3}, rng);
    const std::string name = "block_" + variant_name(variant);

    auto run = [&](const Tensor4<double>& input) {
      BlockCache<double> cache;
      Tensor4<double> y =
          block_forward(block, input, BnMode::train, &cache, /*update_running=*/false);
      return project(y, proj);
    };
    BlockCache<double> cache;
    Tensor4<double> y =
        block_forward(block, x, BnMode::train, &cache, /*update_running=*/false);
    (void)y;
    BlockGrads<double> grads;
    Tensor4<double> gx = block_backward(block, cache, proj, grads);

    out.push_back(check_tensor_input(
        name + ".grad_x", [&](const Tensor4<double>& v) { return run(v); }, x, gx));
    auto f = [&]() { return run(x); };
    out.push_back(check_span_input(name + ".grad_conv1_w", f, block.conv1.p.weights.values(),
                                   grads.conv1_w.values()));
    out.push_back(check_span_input(name + ".grad_conv2_w", f, block.conv2.p.weights.values(),
                                   grads.conv2_w.values()));
    if (!block.conv1.p.bias.empty())
      out.push_back(check_span_input(name + ".grad_conv1_b", f, block.conv1.p.bias,
                                     grads.conv1_b));
    if (!block.conv2.p.bias.empty())
      out.push_back(check_span_input(name + ".grad_conv2_b", f, block.conv2.p.bias,
                                     grads.conv2_b));
    if (block.bn1) {
      out.push_back(check_span_input(name + ".grad_bn1_gamma", f, block.bn1->s.gamma,
                                     grads.bn1_gamma));
      out.push_back(check_span_input(name + ".grad_bn1_beta", f, block.bn1->s.beta,
                                     grads.bn1_beta));
    }
    if (block.bn2) {
      out.push_back(check_span_input(name + ".grad_bn2_gamma", f, block.bn2->s.gamma,
                                     grads.bn2_gamma));
      out.push_back(check_span_input(name + ".grad_bn2_beta", f, block.bn2->s.beta,
                                     grads.bn2_beta));
    }
  }
  return out;
}

// Two stacked blocks: chain-rule consistency across certified ops.
inline GradCheckReport two_block_report(Rng& rng) {
  ResBlock<double> b1 = build_block<double>(BlockVariant::conv_elu_conv_bn, 2, 2, 1, 1.0, rng);
  ResBlock<double> b2 = build_block<double>(BlockVariant::conv_elu_conv_bn, 2, 4, 2, 1.0, rng);
  Tensor4<double> x = small_randn({2, 2, 6, 6}, rng);
  Tensor4<double> proj = small_randn({2, 4, 3, 3}, rng);

  auto run = [&](const Tensor4<double>& input) {
    Tensor4<double> h =
        block_forward(b1, input, BnMode::train, static_cast<BlockCache<double>*>(nullptr),
                      false);
    BlockCache<double>* no_cache = nullptr;
    h = block_forward(b2, h, BnMode::train, no_cache, false);
    return project(h, proj);
  };
  BlockCache<double> c1, c2;
  Tensor4<double> h = block_forward(b1, x, BnMode::train, &c1, false);
  block_forward(b2, h, BnMode::train, &c2, false);
  BlockGrads<double> g1, g2;
  Tensor4<double> gmid = block_backward(b2, c2, proj, g2);
  Tensor4<double> gx = block_backward(b1, c1, gmid, g1);

  auto f = [&](const Tensor4<double>& v) { return run(v); };
  Tensor4<double> numeric = numeric_gradient(f, x, kGradCheckStep);
  return check_op("two_block_chain.grad_x", gx, numeric);
}

// Depth-8 network at widths {2,4,8}: loss gradient wrt every parameter.
inline GradCheckReport network_report(Rng& rng) {
  NetworkConfig<double> cfg;
  cfg.n = 1;
  cfg.classes = 10;
  cfg.variant = BlockVariant::conv_elu_conv_bn;
  cfg.stage_channels = {2, 4, 8};
  Network<double> net = build_network(cfg, rng);

  Tensor4<double> x = small_randn({2, 3, 32, 32}, rng);
  std::vector<std::int32_t> labels{3, 7};

  auto loss = [&]() {
    Tensor4<double> logits =
        net.forward(x, BnMode::train, nullptr, /*update_running=*/false);
    return softmax_cross_entropy(logits, std::span<const std::int32_t>(labels)).loss;
  };
  NetCache<double> cache;
  Tensor4<double> logits = net.forward(x, BnMode::train, &cache, false);
  auto sm = softmax_cross_entropy(logits, std::span<const std::int32_t>(labels));
  Gradients<double> grads = net.backward(cache, sm.grad_logits);

  GradCheckReport worst;
  worst.op_name = "network_d_depth8.all_params";
  worst.passed = true;
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double> numeric =
        numeric_gradient_span(loss, params[i].value, kGradCheckStep);
    GradCheckReport r = check_op(params[i].name, grads.by_param[i], numeric);
    if (r.max_rel_error > worst.max_rel_error) {
      worst.max_rel_error = r.max_rel_error;
      worst.worst_index = r.worst_index;
    }
    worst.passed = worst.passed && r.passed;
  }
  return worst;
}

}  // namespace certify

inline std::vector<GradCheckReport> run_gradient_certification(std::uint64_t seed = 20220915) {
  Rng rng(seed);
  std::vector<GradCheckReport> reports;
  auto extend = [&reports](std::vector<GradCheckReport> r) {
    for (auto& item : r) reports.push_back(std::move(item));
  };
  extend(certify::conv_reports(rng));
  extend(certify::batchnorm_reports(rng));
  extend(certify::activation_reports(rng));
  extend(certify::pool_fc_loss_reports(rng));
  extend(certify::block_reports(rng));
  reports.push_back(certify::two_block_report(rng));
  reports.push_back(certify::network_report(rng));
  return reports;
}

}  // namespace elunet
