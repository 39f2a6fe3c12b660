#pragma once

// Deterministic 10-class image fixtures written in the exact CIFAR-10 binary
// layout (3073-byte records), so everything downstream of the loader runs the
// real pipeline. Each class has a smooth low-frequency color template; images
// are the template plus Gaussian pixel noise.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "elunet/rng.hpp"

namespace testsupport {

struct SyntheticSpec {
  int classes = 10;
  double amplitude = 48.0;   // template swing around mid-gray
  double noise_sigma = 48.0; // per-pixel Gaussian noise
  std::uint64_t seed = 9001;
};

class SyntheticCifar {
 public:
  explicit SyntheticCifar(SyntheticSpec spec = {}) : spec_(spec) {
    elunet::Rng rng(spec_.seed);
    templates_.resize(spec_.classes * 3 * 32 * 32);
    for (int cls = 0; cls < spec_.classes; ++cls)
      for (int ch = 0; ch < 3; ++ch) {
        // Three random cosine components with small integer frequencies.
        double kx[3], ky[3], phase[3];
        for (int i = 0; i < 3; ++i) {
          kx[i] = static_cast<double>(rng.uniform_int(0, 3));
          ky[i] = static_cast<double>(rng.uniform_int(0, 3));
          phase[i] = rng.uniform() * 2.0 * std::numbers::pi;
        }
        for (int y = 0; y < 32; ++y)
          for (int x = 0; x < 32; ++x) {
            double v = 0;
            for (int i = 0; i < 3; ++i)
              v += std::cos(2.0 * std::numbers::pi * (kx[i] * x + ky[i] * y) / 32.0 +
                            phase[i]);
            templates_[((cls * 3 + ch) * 32 + y) * 32 + x] = v / 3.0;
          }
      }
  }

  // One record: label byte + 3072 pixel bytes (R,G,B planes).
  std::vector<unsigned char> make_record(int label, elunet::Rng& rng) const {
    std::vector<unsigned char> rec(1 + 3 * 32 * 32);
    rec[0] = static_cast<unsigned char>(label);
    for (int i = 0; i < 3 * 32 * 32; ++i) {
      const double base =
          128.0 + spec_.amplitude * templates_[label * 3 * 32 * 32 + i];
      const double v = base + rng.normal(0.0, spec_.noise_sigma);
      rec[1 + i] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
    return rec;
  }

  void write_file(const std::filesystem::path& path, int count,
                  std::uint64_t file_seed) const {
    elunet::Rng rng(file_seed);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (int i = 0; i < count; ++i) {
      const int label = static_cast<int>(rng.uniform_int(0, spec_.classes - 1));
      const auto rec = make_record(label, rng);
      out.write(reinterpret_cast<const char*>(rec.data()),
                static_cast<std::streamsize>(rec.size()));
    }
  }

  // Standard CIFAR-10 directory layout: data_batch_1..5.bin + test_batch.bin.
  void write_dataset(const std::filesystem::path& dir, int train_total,
                     int test_total) const {
    std::filesystem::create_directories(dir);
    const int per_file = train_total / 5;
    if (per_file * 5 != train_total)
      throw std::invalid_argument("train_total must be divisible by 5");
    for (int i = 1; i <= 5; ++i)
      write_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), per_file,
                 spec_.seed + 100 + i);
    write_file(dir / "test_batch.bin", test_total, spec_.seed + 200);
  }

 private:
  SyntheticSpec spec_;
  std::vector<double> templates_;
};

}  // namespace testsupport
