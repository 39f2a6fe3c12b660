#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "elunet/dataset.hpp"
#include "elunet/network.hpp"

namespace elunet {

// Single-file checkpoint: magic string, a version byte, a text manifest of
// key=value lines terminated by a blank line, then the parameters and BN
// running statistics as little-endian 32-bit floats in registry order.
inline constexpr char kCheckpointMagic[] = "ELUNETCP";
inline constexpr unsigned char kCheckpointVersion = 1;

struct CheckpointManifest {
  std::string variant = "d";
  int depth_n = 3;
  int classes = 10;
  float alpha = 1.0f;
  bool head_elu = true;
  std::uint64_t seed = 1;
  int epoch = 0;
  float test_error = -1.0f;  // negative = not recorded
  std::array<float, 3> norm_mean{0, 0, 0};
  std::array<float, 3> norm_std{1, 1, 1};
  std::int64_t count = 0;

  NetworkConfig<float> to_config() const {
    NetworkConfig<float> cfg;
    cfg.n = depth_n;
    cfg.classes = classes;
    cfg.variant = parse_variant(variant);
    cfg.alpha = alpha;
    cfg.head_elu = head_elu ? HeadElu::on : HeadElu::off;
    return cfg;
  }

  NormalizationStats norm_stats() const {
    return {norm_mean, norm_std};
  }
};

namespace detail {

// %.9g round-trips every float bit-exactly through the text manifest.
inline std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

inline float parse_float(const std::string& s) { return std::strtof(s.c_str(), nullptr); }

inline std::string format_float3(const std::array<float, 3>& v) {
  return format_float(v[0]) + "," + format_float(v[1]) + "," + format_float(v[2]);
}

inline std::array<float, 3> parse_float3(const std::string& s) {
  std::array<float, 3> out{};
  std::stringstream ss(s);
  std::string item;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(ss, item, ',')) throw std::runtime_error("bad float triple: " + s);
    out[i] = parse_float(item);
  }
  return out;
}

inline void append_le_float(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xFF));
  out.push_back(static_cast<char>((bits >> 8) & 0xFF));
  out.push_back(static_cast<char>((bits >> 16) & 0xFF));
  out.push_back(static_cast<char>((bits >> 24) & 0xFF));
}

inline float read_le_float(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

inline std::string serialize_manifest(const CheckpointManifest& m) {
  std::string out;
  out += "variant=" + m.variant + "\n";
  out += "depth_n=" + std::to_string(m.depth_n) + "\n";
  out += "classes=" + std::to_string(m.classes) + "\n";
  out += "alpha=" + detail::format_float(m.alpha) + "\n";
  out += std::string("head_elu=") + (m.head_elu ? "1" : "0") + "\n";
  out += "seed=" + std::to_string(m.seed) + "\n";
  out += "epoch=" + std::to_string(m.epoch) + "\n";
  out += "test_error=" + detail::format_float(m.test_error) + "\n";
  out += "norm_mean=" + detail::format_float3(m.norm_mean) + "\n";
  out += "norm_std=" + detail::format_float3(m.norm_std) + "\n";
  out += "count=" + std::to_string(m.count) + "\n";
  return out;
}

inline CheckpointManifest parse_manifest(const std::map<std::string, std::string>& kv) {
  CheckpointManifest m;
  auto need = [&kv](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("checkpoint manifest missing " + key);
    return it->second;
  };
  m.variant = need("variant");
  m.depth_n = std::stoi(need("depth_n"));
  m.classes = std::stoi(need("classes"));
  m.alpha = detail::parse_float(need("alpha"));
  m.head_elu = need("head_elu") == "1";
  m.seed = std::stoull(need("seed"));
  m.epoch = std::stoi(need("epoch"));
  m.test_error = detail::parse_float(need("test_error"));
  m.norm_mean = detail::parse_float3(need("norm_mean"));
  m.norm_std = detail::parse_float3(need("norm_std"));
  m.count = std::stoll(need("count"));
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path, Network<float>& net,
                            CheckpointManifest m) {
  m.count = net.state_count();
  std::string out;
  out += kCheckpointMagic;
  out.push_back(static_cast<char>(kCheckpointVersion));
  out += serialize_manifest(m);
  out += "\n";
  for (auto view : net.state_views())
    for (float v : view) detail::append_le_float(out, v);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("short write to " + path.string());
}

struct LoadedCheckpoint {
  CheckpointManifest manifest;
  std::vector<float> blob;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  const std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
  if (bytes.size() < magic_len + 1 ||
      std::memcmp(bytes.data(), kCheckpointMagic, magic_len) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  if (bytes[magic_len] != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version");

  std::size_t pos = magic_len + 1;
  std::map<std::string, std::string> kv;
  while (true) {
    std::size_t eol = pos;
    while (eol < bytes.size() && bytes[eol] != '\n') ++eol;
    if (eol >= bytes.size()) throw std::runtime_error("truncated checkpoint manifest");
    const std::string line(bytes.begin() + pos, bytes.begin() + eol);
    pos = eol + 1;
    if (line.empty()) break;  // blank line ends the manifest
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("bad manifest line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }

  LoadedCheckpoint out;
  out.manifest = parse_manifest(kv);
  const std::size_t payload = bytes.size() - pos;
  if (payload % 4 != 0) throw std::runtime_error("checkpoint payload not float-aligned");
  const std::size_t count = payload / 4;
  if (out.manifest.count != static_cast<std::int64_t>(count))
    throw std::runtime_error("checkpoint payload count mismatch");
  out.blob.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    out.blob[i] = detail::read_le_float(bytes.data() + pos + 4 * i);
  return out;
}

inline void restore_state(Network<float>& net, const std::vector<float>& blob) {
  std::size_t offset = 0;
  for (auto view : net.state_views()) {
    if (offset + view.size() > blob.size())
      throw std::runtime_error("checkpoint blob too short for this architecture");
    std::copy_n(blob.begin() + offset, view.size(), view.begin());
    offset += view.size();
  }
  if (offset != blob.size())
    throw std::runtime_error("checkpoint blob length does not match architecture");
}

}  // namespace elunet
