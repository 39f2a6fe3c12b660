#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "elunet/activations.hpp"
#include "elunet/batchnorm.hpp"
#include "elunet/conv.hpp"
#include "elunet/tensor.hpp"

namespace elunet {

// The five residual block layer orderings. The branch runs through two 3x3
// convolutions; the names say what sits between and after them:
//   baseline : Conv-BN-ReLU-Conv-BN, ReLU applied after the addition
//   a        : Conv-ELU-Conv-ELU, plain addition
//   b        : ELU-Conv-ELU-Conv, plain addition (full pre-activation)
//   c        : Conv-ELU-Conv-BN, ELU applied after the addition
//   d        : Conv-ELU-Conv-BN, plain addition
enum class BlockVariant {
  baseline_relu_bn,
  conv_elu_conv_elu,
  elu_conv_elu_conv,
  conv_elu_conv_bn_post_elu,
  conv_elu_conv_bn,
};

inline BlockVariant parse_variant(const std::string& name) {
  if (name == "baseline") return BlockVariant::baseline_relu_bn;
  if (name == "a") return BlockVariant::conv_elu_conv_elu;
  if (name == "b") return BlockVariant::elu_conv_elu_conv;
  if (name == "c") return BlockVariant::conv_elu_conv_bn_post_elu;
  if (name == "d") return BlockVariant::conv_elu_conv_bn;
  throw std::invalid_argument("unknown block variant '" + name +
                              "' (expected baseline|a|b|c|d)");
}

inline std::string variant_name(BlockVariant v) {
  switch (v) {
    case BlockVariant::baseline_relu_bn: return "baseline";
    case BlockVariant::conv_elu_conv_elu: return "a";
    case BlockVariant::elu_conv_elu_conv: return "b";
    case BlockVariant::conv_elu_conv_bn_post_elu: return "c";
    case BlockVariant::conv_elu_conv_bn: return "d";
  }
  throw std::logic_error("variant_name: bad enum");
}

inline bool variant_uses_elu(BlockVariant v) {
  return v != BlockVariant::baseline_relu_bn;
}

// Learnable layers carry registry slots assigned at build time; -1 = absent.
template <typename T>
struct ConvLayer {
  ConvParams<T> p;
  int weight_id = -1;
  int bias_id = -1;
};

template <typename T>
struct BnLayer {
  BatchNormState<T> s;
  int gamma_id = -1;
  int beta_id = -1;
};

template <typename T>
struct ResBlock {
  BlockVariant variant = BlockVariant::conv_elu_conv_bn;
  int in_ch = 0, out_ch = 0, stride = 1;
  T alpha = T(1);
  ConvLayer<T> conv1, conv2;
  std::optional<BnLayer<T>> bn1, bn2;

  bool dims_change() const { return in_ch != out_ch || stride != 1; }
};

// Intermediates retained for backward. Which slots are filled depends on the
// variant; unused ones stay empty.
template <typename T>
struct BlockCache {
  Tensor4<T> x;    // block input
  Tensor4<T> e0;   // elu(x), variant b only
  Tensor4<T> a1;   // conv1 output
  Tensor4<T> b1;   // bn1 output, baseline only
  Tensor4<T> h1;   // input to conv2
  Tensor4<T> a2;   // conv2 output
  Tensor4<T> s;    // pre-activation sum, variants with a post-add activation
};

// He-initialized 3x3 convolution; stddev sqrt(2 / (kH*kW*outC)).
template <typename T>
ConvParams<T> make_conv3x3(std::int64_t in_ch, std::int64_t out_ch, int stride,
                           bool with_bias, Rng& rng) {
  ConvParams<T> p;
  const double stddev = std::sqrt(2.0 / (3.0 * 3.0 * static_cast<double>(out_ch)));
  p.weights = randn<T>({out_ch, in_ch, 3, 3}, 0.0, stddev, rng);
  if (with_bias) p.bias.assign(out_ch, T(0));
  p.stride = stride;
  p.pad = 1;
  return p;
}

// A convolution keeps its bias only when no batch norm follows it (the BN
// shift would absorb it).
template <typename T>
ResBlock<T> build_block(BlockVariant variant, int in_ch, int out_ch, int stride,
                        T alpha, Rng& rng) {
  if (out_ch < in_ch)
    throw std::invalid_argument("build_block: out_ch < in_ch unsupported");
  if (stride != 1 && stride != 2)
    throw std::invalid_argument("build_block: stride must be 1 or 2");
  ResBlock<T> b;
  b.variant = variant;
  b.in_ch = in_ch;
  b.out_ch = out_ch;
  b.stride = stride;
  b.alpha = alpha;

  const bool bn_after_conv1 = variant == BlockVariant::baseline_relu_bn;
  const bool bn_after_conv2 = variant == BlockVariant::baseline_relu_bn ||
                              variant == BlockVariant::conv_elu_conv_bn_post_elu ||
                              variant == BlockVariant::conv_elu_conv_bn;
  b.conv1.p = make_conv3x3<T>(in_ch, out_ch, stride, !bn_after_conv1, rng);
  b.conv2.p = make_conv3x3<T>(out_ch, out_ch, 1, !bn_after_conv2, rng);
  if (bn_after_conv1) b.bn1 = BnLayer<T>{BatchNormState<T>::identity(out_ch)};
  if (bn_after_conv2) b.bn2 = BnLayer<T>{BatchNormState<T>::identity(out_ch)};
  return b;
}

// Parameter-free dimension matching: identity when shapes agree, otherwise
// spatial subsampling at the given stride followed by appended zero channels.
template <typename T>
Tensor4<T> shortcut_apply(const Tensor4<T>& x, int in_ch, int out_ch, int stride) {
  if (out_ch < in_ch) throw std::invalid_argument("shortcut: out_ch < in_ch");
  const Shape4 s = x.shape();
  if (s.c != in_ch) throw std::invalid_argument("shortcut: channel mismatch");
  if (in_ch == out_ch && stride == 1) return x;
  const std::int64_t oh = (s.h - 1) / stride + 1, ow = (s.w - 1) / stride + 1;
  Tensor4<T> out({s.n, out_ch, oh, ow});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < in_ch; ++c)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xo = 0; xo < ow; ++xo)
          out.at(n, c, y, xo) = x.at(n, c, y * stride, xo * stride);
  return out;
}

// Transpose of shortcut_apply: zero-channel gradients are dropped, subsample
// gradients scatter back to the sampled positions.
template <typename T>
Tensor4<T> shortcut_backward(const Tensor4<T>& grad_out, Shape4 in_shape, int in_ch,
                             int out_ch, int stride) {
  if (in_ch == out_ch && stride == 1) return grad_out;
  Tensor4<T> gx(in_shape);
  const Shape4 os = grad_out.shape();
  for (std::int64_t n = 0; n < os.n; ++n)
    for (std::int64_t c = 0; c < in_ch; ++c)
      for (std::int64_t y = 0; y < os.h; ++y)
        for (std::int64_t xo = 0; xo < os.w; ++xo)
          gx.at(n, c, y * stride, xo * stride) = grad_out.at(n, c, y, xo);
  return gx;
}

// Runs the variant's layer ordering and adds the shortcut. In train mode with
// update_running set, the block adopts the BN running-statistic updates.
template <typename T>
Tensor4<T> block_forward(ResBlock<T>& block, const Tensor4<T>& x, BnMode mode,
                         BlockCache<T>* cache, bool update_running) {
  auto run_bn = [&](BnLayer<T>& bn, const Tensor4<T>& in) {
    bn.s.mode = mode;
    auto res = batchnorm_forward(in, bn.s);
    if (mode == BnMode::train && update_running) {
      bn.s.running_mean = std::move(res.running_mean);
      bn.s.running_var = std::move(res.running_var);
    }
    return std::move(res.y);
  };
  if (cache) cache->x = x;
  const Tensor4<T> id = shortcut_apply(x, block.in_ch, block.out_ch, block.stride);

  Tensor4<T> out;
  switch (block.variant) {
    case BlockVariant::baseline_relu_bn: {
      Tensor4<T> a1 = conv2d_forward(x, block.conv1.p);
      Tensor4<T> b1 = run_bn(*block.bn1, a1);
      Tensor4<T> h1 = relu_forward(b1);
      Tensor4<T> a2 = conv2d_forward(h1, block.conv2.p);
      Tensor4<T> f = run_bn(*block.bn2, a2);
      Tensor4<T> s = add(f, id);
      out = relu_forward(s);
      if (cache) {
        cache->a1 = std::move(a1);
        cache->b1 = std::move(b1);
        cache->h1 = std::move(h1);
        cache->a2 = std::move(a2);
        cache->s = std::move(s);
      }
      break;
    }
    case BlockVariant::conv_elu_conv_elu: {
      Tensor4<T> a1 = conv2d_forward(x, block.conv1.p);
      Tensor4<T> h1 = elu_forward(a1, block.alpha);
      Tensor4<T> a2 = conv2d_forward(h1, block.conv2.p);
      Tensor4<T> f = elu_forward(a2, block.alpha);
      out = add(f, id);
      if (cache) {
        cache->a1 = std::move(a1);
        cache->h1 = std::move(h1);
        cache->a2 = std::move(a2);
      }
      break;
    }
    case BlockVariant::elu_conv_elu_conv: {
      Tensor4<T> e0 = elu_forward(x, block.alpha);
      Tensor4<T> a1 = conv2d_forward(e0, block.conv1.p);
      Tensor4<T> h1 = elu_forward(a1, block.alpha);
      Tensor4<T> f = conv2d_forward(h1, block.conv2.p);
      out = add(f, id);
      if (cache) {
        cache->e0 = std::move(e0);
        cache->a1 = std::move(a1);
        cache->h1 = std::move(h1);
      }
      break;
    }
    case BlockVariant::conv_elu_conv_bn_post_elu:
    case BlockVariant::conv_elu_conv_bn: {
      Tensor4<T> a1 = conv2d_forward(x, block.conv1.p);
      Tensor4<T> h1 = elu_forward(a1, block.alpha);
      Tensor4<T> a2 = conv2d_forward(h1, block.conv2.p);
      Tensor4<T> f = run_bn(*block.bn2, a2);
      Tensor4<T> s = add(f, id);
      if (block.variant == BlockVariant::conv_elu_conv_bn_post_elu) {
        out = elu_forward(s, block.alpha);
        if (cache) cache->s = std::move(s);
      } else {
        out = std::move(s);
      }
      if (cache) {
        cache->a1 = std::move(a1);
        cache->h1 = std::move(h1);
        cache->a2 = std::move(a2);
      }
      break;
    }
  }
  return out;
}

template <typename T>
struct BlockGrads {
  Tensor4<T> conv1_w, conv2_w;
  std::vector<T> conv1_b, conv2_b;  // empty when the conv has no bias
  std::vector<T> bn1_gamma, bn1_beta;
  std::vector<T> bn2_gamma, bn2_beta;
};

// Gradient at the block input is the sum of the branch path and the shortcut
// path. BN layers must still be in train mode.
template <typename T>
Tensor4<T> block_backward(const ResBlock<T>& block, const BlockCache<T>& cache,
                          const Tensor4<T>& grad_out, BlockGrads<T>& grads) {
  if (cache.x.empty())
    throw std::logic_error("block_backward: missing forward cache");

  // Gradient at the addition node.
  Tensor4<T> g_sum;
  switch (block.variant) {
    case BlockVariant::baseline_relu_bn:
      g_sum = relu_backward(cache.s, grad_out);
      break;
    case BlockVariant::conv_elu_conv_bn_post_elu:
      g_sum = elu_backward(cache.s, block.alpha, grad_out);
      break;
    default:
      g_sum = grad_out;
      break;
  }

  Tensor4<T> g_x_branch;
  switch (block.variant) {
    case BlockVariant::baseline_relu_bn: {
      auto bn2 = batchnorm_backward(cache.a2, block.bn2->s, g_sum);
      grads.bn2_gamma = std::move(bn2.gamma);
      grads.bn2_beta = std::move(bn2.beta);
      auto c2 = conv2d_backward(cache.h1, block.conv2.p, bn2.x);
      grads.conv2_w = std::move(c2.weights);
      Tensor4<T> g_b1 = relu_backward(cache.b1, c2.x);
      auto bn1 = batchnorm_backward(cache.a1, block.bn1->s, g_b1);
      grads.bn1_gamma = std::move(bn1.gamma);
      grads.bn1_beta = std::move(bn1.beta);
      auto c1 = conv2d_backward(cache.x, block.conv1.p, bn1.x);
      grads.conv1_w = std::move(c1.weights);
      g_x_branch = std::move(c1.x);
      break;
    }
    case BlockVariant::conv_elu_conv_elu: {
      Tensor4<T> g_a2 = elu_backward(cache.a2, block.alpha, g_sum);
      auto c2 = conv2d_backward(cache.h1, block.conv2.p, g_a2);
      grads.conv2_w = std::move(c2.weights);
      grads.conv2_b = std::move(c2.bias);
      Tensor4<T> g_a1 = elu_backward(cache.a1, block.alpha, c2.x);
      auto c1 = conv2d_backward(cache.x, block.conv1.p, g_a1);
      grads.conv1_w = std::move(c1.weights);
      grads.conv1_b = std::move(c1.bias);
      g_x_branch = std::move(c1.x);
      break;
    }
    case BlockVariant::elu_conv_elu_conv: {
      auto c2 = conv2d_backward(cache.h1, block.conv2.p, g_sum);
      grads.conv2_w = std::move(c2.weights);
      grads.conv2_b = std::move(c2.bias);
      Tensor4<T> g_a1 = elu_backward(cache.a1, block.alpha, c2.x);
      auto c1 = conv2d_backward(cache.e0, block.conv1.p, g_a1);
      grads.conv1_w = std::move(c1.weights);
      grads.conv1_b = std::move(c1.bias);
      g_x_branch = elu_backward(cache.x, block.alpha, c1.x);
      break;
    }
    case BlockVariant::conv_elu_conv_bn_post_elu:
    case BlockVariant::conv_elu_conv_bn: {
      auto bn2 = batchnorm_backward(cache.a2, block.bn2->s, g_sum);
      grads.bn2_gamma = std::move(bn2.gamma);
      grads.bn2_beta = std::move(bn2.beta);
      auto c2 = conv2d_backward(cache.h1, block.conv2.p, bn2.x);
      grads.conv2_w = std::move(c2.weights);
      Tensor4<T> g_a1 = elu_backward(cache.a1, block.alpha, c2.x);
      auto c1 = conv2d_backward(cache.x, block.conv1.p, g_a1);
      grads.conv1_w = std::move(c1.weights);
      grads.conv1_b = std::move(c1.bias);
      g_x_branch = std::move(c1.x);
      break;
    }
  }

  Tensor4<T> g_x_shortcut = shortcut_backward(g_sum, cache.x.shape(), block.in_ch,
                                              block.out_ch, block.stride);
  return add(g_x_branch, g_x_shortcut);
}

}  // namespace elunet
