#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "elunet/checkpoint.hpp"
#include "elunet/dataset.hpp"
#include "elunet/loss.hpp"
#include "elunet/network.hpp"
#include "elunet/optimizer.hpp"

namespace elunet {

struct EpochMetrics {
  int epoch = 0;  // 1-based in the CSV; epoch k trains at lr_at_epoch(k-1)
  double train_loss = 0;
  double train_error_pct = 0;
  double test_error_pct = 0;
  double lr = 0;
  double wall_seconds = 0;
  bool diverged = false;
};

inline constexpr char kMetricsHeader[] =
    "epoch,train_loss,train_error,test_error,lr,wall_seconds,diverged";

inline std::string metrics_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.6f,%.4f,%.4f,%g,%.3f,%d", m.epoch,
                m.train_loss, m.train_error_pct, m.test_error_pct, m.lr,
                m.wall_seconds, m.diverged ? 1 : 0);
  return buf;
}

inline void emit_metrics(const std::vector<EpochMetrics>& history,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics CSV " + path.string());
  out << kMetricsHeader << "\n";
  for (const auto& m : history) out << metrics_row(m) << "\n";
  if (!out) throw std::runtime_error("short write to " + path.string());
}

struct RunConfig {
  std::string dataset = "cifar10";
  std::filesystem::path data_dir;
  NetworkConfig<float> net;
  TrainSchedule sched;
  NormMode norm_mode = NormMode::mean_std;
  std::int64_t train_limit = 0, test_limit = 0;  // 0 = full set
  std::filesystem::path out_csv;                 // empty = no CSV
  std::filesystem::path checkpoint_path;         // empty = no checkpoints
  std::filesystem::path resume_path;             // empty = fresh start
  bool quiet = false;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  bool diverged = false;
  double final_test_error = -1;
  double best_test_error = -1;
  int best_epoch = -1;
};

inline double evaluate(Network<float>& net, const LabeledImageSet& test,
                       int batch_size) {
  std::int64_t correct = 0;
  Rng unused(0);
  for (const auto& batch : make_batches(test.size(), batch_size, false, unused)) {
    auto [images, labels] = gather(test, batch);
    Tensor4<float> logits = net.forward(images, BnMode::infer);
    const Shape4 s = logits.shape();
    for (std::int64_t n = 0; n < s.n; ++n) {
      std::int64_t best = 0;
      for (std::int64_t k = 1; k < s.c; ++k)
        if (logits.at(n, k, 0, 0) > logits.at(n, best, 0, 0)) best = k;
      if (best == labels[n]) ++correct;
    }
  }
  return 100.0 * (1.0 - static_cast<double>(correct) / static_cast<double>(test.size()));
}

inline CifarData load_dataset(const RunConfig& run) {
  if (run.dataset == "cifar10") return load_cifar10(run.data_dir);
  if (run.dataset == "cifar100") return load_cifar100(run.data_dir);
  throw std::invalid_argument("unknown dataset '" + run.dataset + "'");
}

// Full training protocol: per epoch, shuffle, augment, forward/backward, SGD
// step; then evaluate on the test set in infer mode. Stops and records on
// divergence. Model init and data order use independent seed streams so the
// variant choice does not perturb the data pipeline.
inline TrainResult train(const RunConfig& run) {
  run.sched.validate();
  if (run.net.classes != (run.dataset == "cifar100" ? 100 : 10))
    throw std::invalid_argument("class count does not match dataset");

  CifarData data = load_dataset(run);
  LabeledImageSet train_set = take_prefix(data.train, run.train_limit);
  LabeledImageSet test_set = take_prefix(data.test, run.test_limit);
  const NormalizationStats stats = compute_normalization(train_set, run.norm_mode);
  train_set = apply_normalization(train_set, stats);
  test_set = apply_normalization(test_set, stats);

  Rng init_rng(run.sched.seed, /*stream=*/0);
  Network<float> net = build_network(run.net, init_rng);

  int start_epoch = 0;  // 0-based index of the next epoch to train
  if (!run.resume_path.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(run.resume_path);
    restore_state(net, ckpt.blob);
    start_epoch = ckpt.manifest.epoch;
  }

  SgdState<float> opt = SgdState<float>::init(net.parameters());
  TrainResult result;

  auto save = [&](int completed_epochs, double test_error) {
    if (run.checkpoint_path.empty()) return;
    CheckpointManifest m;
    m.variant = variant_name(run.net.variant);
    m.depth_n = run.net.n;
    m.classes = run.net.classes;
    m.alpha = run.net.alpha;
    m.head_elu = net.head_elu;
    m.seed = run.sched.seed;
    m.epoch = completed_epochs;
    m.test_error = static_cast<float>(test_error);
    m.norm_mean = stats.mean;
    m.norm_std = stats.stddev;
    save_checkpoint(run.checkpoint_path, net, m);
  };

  for (int epoch = start_epoch; epoch < run.sched.total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(run.sched, epoch);
    double loss_sum = 0;
    std::int64_t seen = 0, correct = 0;
    bool diverged = false;

    // Shuffle and augmentation are a pure function of (seed, epoch), so a
    // resumed run sees the same data order the uninterrupted one would.
    Rng data_rng(run.sched.seed, /*stream=*/2 + static_cast<std::uint64_t>(epoch));
    for (const auto& batch :
         make_batches(train_set.size(), run.sched.batch_size, true, data_rng)) {
      auto [images, labels] = gather(train_set, batch);
      images = augment_batch(images, data_rng);
      NetCache<float> cache;
      Tensor4<float> logits = net.forward(images, BnMode::train, &cache);
      SoftmaxLoss<float> sm = softmax_cross_entropy(
          logits, std::span<const std::int32_t>(labels));
      if (!std::isfinite(sm.loss)) {
        diverged = true;
        break;
      }
      loss_sum += sm.loss * static_cast<double>(labels.size());
      const Shape4 ls = logits.shape();
      for (std::int64_t n = 0; n < ls.n; ++n) {
        std::int64_t best = 0;
        for (std::int64_t k = 1; k < ls.c; ++k)
          if (logits.at(n, k, 0, 0) > logits.at(n, best, 0, 0)) best = k;
        if (best == labels[n]) ++correct;
      }
      seen += static_cast<std::int64_t>(labels.size());
      Gradients<float> grads = net.backward(cache, sm.grad_logits);
      if (sgd_step(net.parameters(), grads, opt, lr, run.sched).diverged) {
        diverged = true;
        break;
      }
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.lr = lr;
    m.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen)
                            : std::numeric_limits<double>::quiet_NaN();
    m.train_error_pct =
        seen > 0 ? 100.0 * (1.0 - static_cast<double>(correct) / static_cast<double>(seen))
                 : 100.0;
    m.diverged = diverged;
    m.test_error_pct = diverged
                           ? std::numeric_limits<double>::quiet_NaN()
                           : evaluate(net, test_set, run.sched.batch_size);
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(m);

    if (!run.quiet)
      std::fprintf(stderr, "epoch %d/%d loss=%.4f train_err=%.2f%% test_err=%.2f%% lr=%g%s\n",
                   m.epoch, run.sched.total_epochs, m.train_loss, m.train_error_pct,
                   m.test_error_pct, lr, diverged ? " DIVERGED" : "");

    if (diverged) {
      result.diverged = true;
      break;
    }
    if (result.best_epoch < 0 || m.test_error_pct < result.best_test_error) {
      result.best_test_error = m.test_error_pct;
      result.best_epoch = m.epoch;
    }
    result.final_test_error = m.test_error_pct;

    // Checkpoint at every LR-decay boundary and after the final epoch.
    const bool at_decay = lr_at_epoch(run.sched, epoch + 1) != lr;
    if (at_decay || epoch + 1 == run.sched.total_epochs)
      save(epoch + 1, m.test_error_pct);
  }

  if (!run.out_csv.empty()) emit_metrics(result.history, run.out_csv);
  return result;
}

}  // namespace elunet
