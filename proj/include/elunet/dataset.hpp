#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "elunet/augment.hpp"
#include "elunet/rng.hpp"
#include "elunet/tensor.hpp"

namespace elunet {

// Images as (N,3,32,32) reals in [0,1] (pixel byte / 255), channel-major
// R,G,B as stored on disk.
struct LabeledImageSet {
  Tensor4<float> images;
  std::vector<std::int32_t> labels;
  int class_count = 10;

  std::int64_t size() const { return images.shape().n; }
};

struct CifarData {
  LabeledImageSet train, test;
};

inline constexpr int kCifarDim = 32;
inline constexpr int kCifarPixels = 3 * kCifarDim * kCifarDim;  // 3072

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

// record_size = 1 + 3072 (CIFAR-10) or 2 + 3072 (CIFAR-100); label_offset
// selects which leading byte is the class id.
inline void parse_records(const std::vector<unsigned char>& bytes,
                          const std::string& name, int record_size, int label_offset,
                          int class_count, std::vector<float>& pixels,
                          std::vector<std::int32_t>& labels) {
  if (bytes.empty() || bytes.size() % record_size != 0)
    throw std::runtime_error(name + ": size " + std::to_string(bytes.size()) +
                             " not divisible by record size " +
                             std::to_string(record_size));
  const std::int64_t count = static_cast<std::int64_t>(bytes.size()) / record_size;
  for (std::int64_t r = 0; r < count; ++r) {
    const unsigned char* rec = bytes.data() + r * record_size;
    const int label = rec[label_offset];
    if (label >= class_count)
      throw std::runtime_error(name + ": label byte " + std::to_string(label) +
                               " out of range");
    labels.push_back(label);
    const unsigned char* px = rec + record_size - kCifarPixels;
    for (int i = 0; i < kCifarPixels; ++i)
      pixels.push_back(static_cast<float>(px[i]) / 255.0f);
  }
}

inline LabeledImageSet make_set(std::vector<float>&& pixels,
                                std::vector<std::int32_t>&& labels, int class_count) {
  LabeledImageSet set;
  const std::int64_t n = static_cast<std::int64_t>(labels.size());
  set.images = Tensor4<float>({n, 3, kCifarDim, kCifarDim});
  std::copy(pixels.begin(), pixels.end(), set.images.data());
  set.labels = std::move(labels);
  set.class_count = class_count;
  return set;
}

}  // namespace detail

// Standard binary distribution: data_batch_1..5.bin + test_batch.bin of
// 3073-byte records (label, then R/G/B planes row-major).
inline CifarData load_cifar10(const std::filesystem::path& dir) {
  std::vector<float> pixels;
  std::vector<std::int32_t> labels;
  for (int i = 1; i <= 5; ++i) {
    const auto path = dir / ("data_batch_" + std::to_string(i) + ".bin");
    detail::parse_records(detail::read_file(path), path.string(), 1 + kCifarPixels, 0,
                          10, pixels, labels);
  }
  CifarData data;
  data.train = detail::make_set(std::move(pixels), std::move(labels), 10);

  std::vector<float> tpixels;
  std::vector<std::int32_t> tlabels;
  const auto tpath = dir / "test_batch.bin";
  detail::parse_records(detail::read_file(tpath), tpath.string(), 1 + kCifarPixels, 0,
                        10, tpixels, tlabels);
  data.test = detail::make_set(std::move(tpixels), std::move(tlabels), 10);
  return data;
}

// train.bin/test.bin of 3074-byte records (coarse label, fine label, pixels);
// the fine label is used, the coarse one ignored.
inline CifarData load_cifar100(const std::filesystem::path& dir) {
  CifarData data;
  {
    std::vector<float> pixels;
    std::vector<std::int32_t> labels;
    const auto path = dir / "train.bin";
    detail::parse_records(detail::read_file(path), path.string(), 2 + kCifarPixels, 1,
                          100, pixels, labels);
    data.train = detail::make_set(std::move(pixels), std::move(labels), 100);
  }
  {
    std::vector<float> pixels;
    std::vector<std::int32_t> labels;
    const auto path = dir / "test.bin";
    detail::parse_records(detail::read_file(path), path.string(), 2 + kCifarPixels, 1,
                          100, pixels, labels);
    data.test = detail::make_set(std::move(pixels), std::move(labels), 100);
  }
  return data;
}

// Keeps the first `limit` images; 0 keeps everything.
inline LabeledImageSet take_prefix(const LabeledImageSet& set, std::int64_t limit) {
  if (limit <= 0 || limit >= set.size()) return set;
  LabeledImageSet out;
  out.class_count = set.class_count;
  out.images = Tensor4<float>({limit, 3, kCifarDim, kCifarDim});
  std::copy_n(set.images.data(), out.images.size(), out.images.data());
  out.labels.assign(set.labels.begin(), set.labels.begin() + limit);
  return out;
}

enum class NormMode { mean_std, mean_only };

struct NormalizationStats {
  std::array<float, 3> mean{0, 0, 0};
  std::array<float, 3> stddev{1, 1, 1};
};

// Per-channel statistics over the training set; test data reuses them.
inline NormalizationStats compute_normalization(const LabeledImageSet& train,
                                                NormMode mode = NormMode::mean_std) {
  const Shape4 s = train.images.shape();
  if (s.n < 2) throw std::invalid_argument("compute_normalization: need N >= 2");
  NormalizationStats stats;
  const std::int64_t per_channel = s.n * s.h * s.w;
  for (int c = 0; c < 3; ++c) {
    double acc = 0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const float* row = &train.images.at(n, c, 0, 0);
      for (std::int64_t i = 0; i < s.h * s.w; ++i) acc += row[i];
    }
    const double mu = acc / static_cast<double>(per_channel);
    double acc2 = 0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const float* row = &train.images.at(n, c, 0, 0);
      for (std::int64_t i = 0; i < s.h * s.w; ++i) {
        const double d = row[i] - mu;
        acc2 += d * d;
      }
    }
    const double var = acc2 / static_cast<double>(per_channel);
    if (var <= 0)
      throw std::runtime_error("compute_normalization: zero-variance channel " +
                               std::to_string(c));
    stats.mean[c] = static_cast<float>(mu);
    stats.stddev[c] = mode == NormMode::mean_std ? static_cast<float>(std::sqrt(var)) : 1.0f;
  }
  return stats;
}

inline LabeledImageSet apply_normalization(const LabeledImageSet& set,
                                           const NormalizationStats& stats) {
  LabeledImageSet out = set;
  const Shape4 s = out.images.shape();
  for (int c = 0; c < 3; ++c) {
    if (!(stats.stddev[c] > 0))
      throw std::invalid_argument("apply_normalization: stddev must be > 0");
    const float mu = stats.mean[c], inv = 1.0f / stats.stddev[c];
    for (std::int64_t n = 0; n < s.n; ++n) {
      float* row = &out.images.at(n, c, 0, 0);
      for (std::int64_t i = 0; i < s.h * s.w; ++i) row[i] = (row[i] - mu) * inv;
    }
  }
  return out;
}

inline constexpr int kAugmentPad = 4;

// Per image: pad 4 with zeros, crop 32x32 at a uniform offset in [0,8]^2,
// mirror horizontally with probability 1/2. Draw order per image is
// offset_y, offset_x, flip.
inline Tensor4<float> augment_batch(const Tensor4<float>& batch, Rng& rng) {
  const Shape4 s = batch.shape();
  Tensor4<float> out(s);
  Tensor4<float> one({1, s.c, s.h, s.w});
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::copy_n(&batch.at(n, 0, 0, 0), one.size(), one.data());
    const int oy = static_cast<int>(rng.uniform_int(0, 2 * kAugmentPad));
    const int ox = static_cast<int>(rng.uniform_int(0, 2 * kAugmentPad));
    const bool flip = rng.bernoulli(0.5);
    Tensor4<float> aug =
        pad_crop_flip(one, kAugmentPad, static_cast<int>(s.h), flip, oy, ox);
    std::copy_n(aug.data(), aug.size(), &out.at(n, 0, 0, 0));
  }
  return out;
}

// Seeded permutation per epoch; the final short batch is kept. Unshuffled
// iteration is the evaluation order.
inline std::vector<std::vector<std::int32_t>> make_batches(std::int64_t count,
                                                           int batch_size, bool shuffle,
                                                           Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size >= 1");
  std::vector<std::int32_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle)
    for (std::int64_t i = count - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);
  std::vector<std::vector<std::int32_t>> batches;
  for (std::int64_t start = 0; start < count; start += batch_size) {
    const std::int64_t end = std::min<std::int64_t>(start + batch_size, count);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

inline std::pair<Tensor4<float>, std::vector<std::int32_t>> gather(
    const LabeledImageSet& set, const std::vector<std::int32_t>& indices) {
  const Shape4 s = set.images.shape();
  Tensor4<float> images({static_cast<std::int64_t>(indices.size()), s.c, s.h, s.w});
  std::vector<std::int32_t> labels(indices.size());
  const std::int64_t stride = s.c * s.h * s.w;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(set.images.data() + indices[i] * stride, stride,
                images.data() + static_cast<std::int64_t>(i) * stride);
    labels[i] = set.labels[indices[i]];
  }
  return {std::move(images), std::move(labels)};
}

}  // namespace elunet
