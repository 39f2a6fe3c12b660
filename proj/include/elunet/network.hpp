#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "elunet/block.hpp"
#include "elunet/linear.hpp"
#include "elunet/pooling.hpp"
#include "elunet/tensor.hpp"

namespace elunet {

enum class HeadElu { auto_from_variant, on, off };

// Fully determines a 6n+2 architecture: a 3x3 stem conv, three stages of n
// blocks on feature maps {32,16,8} with {16,32,64} filters, global average
// pooling and a fully-connected classifier.
template <typename T>
struct NetworkConfig {
  int n = 3;
  int classes = 10;
  BlockVariant variant = BlockVariant::conv_elu_conv_bn;
  T alpha = T(1);
  HeadElu head_elu = HeadElu::auto_from_variant;
  // Narrow widths keep finite-difference certification of the full graph fast.
  std::array<int, 3> stage_channels{16, 32, 64};

  bool resolved_head_elu() const {
    if (head_elu == HeadElu::auto_from_variant) return variant_uses_elu(variant);
    return head_elu == HeadElu::on;
  }
};

template <typename T>
struct ParamView {
  std::string name;
  std::span<T> value;
  bool weight_decay = false;  // BN scale/shift and biases are exempt
};

template <typename T>
struct Gradients {
  std::vector<std::vector<T>> by_param;  // aligned with Network::parameters()

  bool all_finite_values() const {
    for (const auto& v : by_param)
      if (!all_finite(std::span<const T>(v))) return false;
    return true;
  }
};

template <typename T>
struct NetCache {
  Tensor4<T> x;                         // network input
  Tensor4<T> stem_a, stem_b;            // stem conv out, stem bn out
  std::vector<BlockCache<T>> blocks;
  Tensor4<T> head_in, head_e, pooled;   // last block out, post-ELU, pooled
};

template <typename T>
class Network {
 public:
  NetworkConfig<T> cfg;
  ConvLayer<T> stem_conv;
  BnLayer<T> stem_bn;
  std::vector<std::vector<ResBlock<T>>> stages;  // 3 stages of cfg.n blocks
  ConvLayer<T> fc;  // weights (classes, C_last, 1, 1) + bias
  bool head_elu = true;

  // Every learnable exactly once, in forward walk order. Spans stay valid as
  // long as the network is alive and not reassigned.
  std::vector<ParamView<T>> parameters() {
    std::vector<ParamView<T>> out;
    auto conv_entries = [&out](ConvLayer<T>& c, const std::string& prefix) {
      out.push_back({prefix + ".weight", c.p.weights.values(), true});
      if (!c.p.bias.empty()) out.push_back({prefix + ".bias", c.p.bias, false});
    };
    auto bn_entries = [&out](BnLayer<T>& bn, const std::string& prefix) {
      out.push_back({prefix + ".gamma", bn.s.gamma, false});
      out.push_back({prefix + ".beta", bn.s.beta, false});
    };
    conv_entries(stem_conv, "stem.conv");
    bn_entries(stem_bn, "stem.bn");
    for (std::size_t si = 0; si < stages.size(); ++si)
      for (std::size_t bi = 0; bi < stages[si].size(); ++bi) {
        ResBlock<T>& b = stages[si][bi];
        const std::string p =
            "stage" + std::to_string(si + 1) + ".block" + std::to_string(bi + 1);
        conv_entries(b.conv1, p + ".conv1");
        if (b.bn1) bn_entries(*b.bn1, p + ".bn1");
        conv_entries(b.conv2, p + ".conv2");
        if (b.bn2) bn_entries(*b.bn2, p + ".bn2");
      }
    conv_entries(fc, "fc");
    return out;
  }

  // Convolution and fully-connected weight entries; 6n+2 for every built net.
  int weighted_layer_count() {
    int count = 0;
    for (const auto& pv : parameters())
      if (pv.name.ends_with(".weight")) ++count;
    return count;
  }

  std::int64_t parameter_count() {
    std::int64_t total = 0;
    for (const auto& pv : parameters()) total += static_cast<std::int64_t>(pv.value.size());
    return total;
  }

  // Parameters in registry order followed by BN running statistics (mean then
  // var per layer) in walk order; the checkpoint blob uses exactly this.
  std::vector<std::span<T>> state_views() {
    std::vector<std::span<T>> out;
    for (auto& pv : parameters()) out.push_back(pv.value);
    auto bn_stats = [&out](BnLayer<T>& bn) {
      out.push_back(bn.s.running_mean);
      out.push_back(bn.s.running_var);
    };
    bn_stats(stem_bn);
    for (auto& stage : stages)
      for (auto& b : stage) {
        if (b.bn1) bn_stats(*b.bn1);
        if (b.bn2) bn_stats(*b.bn2);
      }
    return out;
  }

  std::int64_t state_count() {
    std::int64_t total = 0;
    for (const auto& v : state_views()) total += static_cast<std::int64_t>(v.size());
    return total;
  }

  Tensor4<T> forward(const Tensor4<T>& x, BnMode mode, NetCache<T>* cache = nullptr,
                     bool update_running = true) {
    if (x.shape().c != 3)
      throw std::invalid_argument("network forward: input must have 3 channels");
    if (cache) cache->x = x;
    Tensor4<T> a = conv2d_forward(x, stem_conv.p);
    stem_bn.s.mode = mode;
    auto bn = batchnorm_forward(a, stem_bn.s);
    if (mode == BnMode::train && update_running) {
      stem_bn.s.running_mean = std::move(bn.running_mean);
      stem_bn.s.running_var = std::move(bn.running_var);
    }
    Tensor4<T> h = variant_uses_elu(cfg.variant) ? elu_forward(bn.y, cfg.alpha)
                                                 : relu_forward(bn.y);
    if (cache) {
      cache->stem_a = std::move(a);
      cache->stem_b = bn.y;
      cache->blocks.resize(3 * cfg.n);
    }
    std::size_t bi = 0;
    for (auto& stage : stages)
      for (auto& block : stage) {
        h = block_forward(block, h, mode, cache ? &cache->blocks[bi] : nullptr,
                          update_running);
        ++bi;
      }
    if (cache) cache->head_in = h;
    if (head_elu) {
      h = elu_forward(h, cfg.alpha);
      if (cache) cache->head_e = h;
    }
    Tensor4<T> pooled = global_avg_pool_forward(h);
    if (cache) cache->pooled = pooled;
    return fully_connected_forward(pooled, fc.p.weights, fc.p.bias);
  }

  Gradients<T> backward(const NetCache<T>& cache, const Tensor4<T>& grad_logits) {
    if (cache.x.empty()) throw std::logic_error("network backward: stale cache");
    Gradients<T> grads;
    grads.by_param.resize(parameters().size());
    int next = 0;  // registry cursor advanced in forward walk order
    auto put_tensor = [&grads](int idx, Tensor4<T>&& t) {
      grads.by_param[idx].assign(t.data(), t.data() + t.size());
    };
    auto put_vec = [&grads](int idx, std::vector<T>&& v) {
      grads.by_param[idx] = std::move(v);
    };

    // Mirror of parameters(): precompute each module's slot.
    const int stem_w = next++;
    const int stem_g = next++, stem_be = next++;
    struct BlockSlots {
      int c1w, c1b, bn1g, bn1b, c2w, c2b, bn2g, bn2b;
    };
    std::vector<BlockSlots> slots;
    for (auto& stage : stages)
      for (auto& b : stage) {
        BlockSlots s{-1, -1, -1, -1, -1, -1, -1, -1};
        s.c1w = next++;
        if (!b.conv1.p.bias.empty()) s.c1b = next++;
        if (b.bn1) { s.bn1g = next++; s.bn1b = next++; }
        s.c2w = next++;
        if (!b.conv2.p.bias.empty()) s.c2b = next++;
        if (b.bn2) { s.bn2g = next++; s.bn2b = next++; }
        slots.push_back(s);
      }
    const int fc_w = next++, fc_b = next++;

    // Head.
    auto fcg = fully_connected_backward(cache.pooled, fc.p.weights, grad_logits);
    put_tensor(fc_w, std::move(fcg.weights));
    put_vec(fc_b, std::move(fcg.bias));
    const Tensor4<T>& pre_pool = head_elu ? cache.head_e : cache.head_in;
    Tensor4<T> g = global_avg_pool_backward(fcg.x, pre_pool.shape());
    if (head_elu) g = elu_backward(cache.head_in, cfg.alpha, g);

    // Blocks in reverse.
    for (std::int64_t bi = static_cast<std::int64_t>(slots.size()) - 1; bi >= 0; --bi) {
      ResBlock<T>& block = stages[bi / cfg.n][bi % cfg.n];
      BlockGrads<T> bg;
      g = block_backward(block, cache.blocks[bi], g, bg);
      const BlockSlots& s = slots[bi];
      put_tensor(s.c1w, std::move(bg.conv1_w));
      if (s.c1b >= 0) put_vec(s.c1b, std::move(bg.conv1_b));
      if (s.bn1g >= 0) { put_vec(s.bn1g, std::move(bg.bn1_gamma)); put_vec(s.bn1b, std::move(bg.bn1_beta)); }
      put_tensor(s.c2w, std::move(bg.conv2_w));
      if (s.c2b >= 0) put_vec(s.c2b, std::move(bg.conv2_b));
      if (s.bn2g >= 0) { put_vec(s.bn2g, std::move(bg.bn2_gamma)); put_vec(s.bn2b, std::move(bg.bn2_beta)); }
    }

    // Stem.
    g = variant_uses_elu(cfg.variant) ? elu_backward(cache.stem_b, cfg.alpha, g)
                                      : relu_backward(cache.stem_b, g);
    auto bng = batchnorm_backward(cache.stem_a, stem_bn.s, g);
    put_vec(stem_g, std::move(bng.gamma));
    put_vec(stem_be, std::move(bng.beta));
    auto cg = conv2d_backward(cache.x, stem_conv.p, bng.x);
    put_tensor(stem_w, std::move(cg.weights));
    return grads;
  }
};

template <typename T>
Network<T> build_network(const NetworkConfig<T>& cfg, Rng& rng) {
  if (cfg.n < 1) throw std::invalid_argument("build_network: n must be >= 1");
  if (cfg.classes < 2) throw std::invalid_argument("build_network: classes must be >= 2");
  Network<T> net;
  net.cfg = cfg;
  net.head_elu = cfg.resolved_head_elu();

  net.stem_conv.p = make_conv3x3<T>(3, cfg.stage_channels[0], 1, false, rng);
  net.stem_bn.s = BatchNormState<T>::identity(cfg.stage_channels[0]);

  int in_ch = cfg.stage_channels[0];
  net.stages.resize(3);
  for (int si = 0; si < 3; ++si) {
    const int out_ch = cfg.stage_channels[si];
    for (int bi = 0; bi < cfg.n; ++bi) {
      const int stride = (si > 0 && bi == 0) ? 2 : 1;
      net.stages[si].push_back(
          build_block(cfg.variant, in_ch, out_ch, stride, cfg.alpha, rng));
      in_ch = out_ch;
    }
  }

  const int last = cfg.stage_channels[2];
  ConvParams<T> fcp;
  const double stddev = std::sqrt(2.0 / static_cast<double>(last));
  fcp.weights = randn<T>({cfg.classes, last, 1, 1}, 0.0, stddev, rng);
  fcp.bias.assign(cfg.classes, T(0));
  net.fc.p = std::move(fcp);
  return net;
}

// Mean squared activation after each block, forward only, accumulated in
// double. Non-finite moments signal divergence at initialization.
struct MomentProfile {
  std::vector<double> block_moments;
  bool diverged = false;

  // Final over first block moment; the growth signature compared across
  // variants.
  double growth_ratio() const {
    if (block_moments.empty()) return 0;
    return block_moments.back() / block_moments.front();
  }
};

template <typename T>
MomentProfile activation_moment_profile(Network<T>& net, const Tensor4<T>& x) {
  MomentProfile profile;
  Tensor4<T> a = conv2d_forward(x, net.stem_conv.p);
  net.stem_bn.s.mode = BnMode::train;
  auto bn = batchnorm_forward(a, net.stem_bn.s);
  Tensor4<T> h = variant_uses_elu(net.cfg.variant)
                     ? elu_forward(bn.y, net.cfg.alpha)
                     : relu_forward(bn.y);
  for (auto& stage : net.stages)
    for (auto& block : stage) {
      BlockCache<T>* no_cache = nullptr;
      h = block_forward(block, h, BnMode::train, no_cache, /*update_running=*/false);
      double acc = 0;
      for (std::int64_t i = 0; i < h.size(); ++i) {
        const double v = static_cast<double>(h[i]);
        acc += v * v;
      }
      const double moment = acc / static_cast<double>(h.size());
      profile.block_moments.push_back(moment);
      if (!std::isfinite(moment)) {
        profile.diverged = true;
        return profile;
      }
    }
  return profile;
}

}  // namespace elunet
