// Command-line front end: train/eval on CIFAR, plus the gradcheck and
// moment-profile diagnostics. Exit codes: 0 success, 2 divergence, 1 failure.
#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "elunet/certify.hpp"
#include "elunet/elunet.hpp"

namespace {

int run_train(elunet::RunConfig run) {
  elunet::TrainResult result = elunet::train(run);
  if (result.diverged) {
    std::printf("diverged=1 epochs_completed=%zu\n", result.history.size());
    return 2;
  }
  std::printf("final_test_error=%.4f best_test_error=%.4f best_epoch=%d\n",
              result.final_test_error, result.best_test_error, result.best_epoch);
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& dataset,
             const std::string& data_dir, std::int64_t test_limit, int batch_size) {
  elunet::LoadedCheckpoint ckpt = elunet::load_checkpoint(checkpoint);
  elunet::NetworkConfig<float> cfg = ckpt.manifest.to_config();
  cfg.classes = dataset == "cifar100" ? 100 : 10;
  if (cfg.classes != ckpt.manifest.classes)
    throw std::runtime_error("checkpoint classes do not match dataset");
  elunet::Rng rng(0);
  elunet::Network<float> net = elunet::build_network(cfg, rng);
  elunet::restore_state(net, ckpt.blob);

  elunet::CifarData data = dataset == "cifar100" ? elunet::load_cifar100(data_dir)
                                                 : elunet::load_cifar10(data_dir);
  elunet::LabeledImageSet test = elunet::take_prefix(data.test, test_limit);
  test = elunet::apply_normalization(test, ckpt.manifest.norm_stats());
  const double err = elunet::evaluate(net, test, batch_size);
  std::printf("test_error=%.4f recorded_test_error=%.4f epoch=%d\n", err,
              static_cast<double>(ckpt.manifest.test_error), ckpt.manifest.epoch);
  return 0;
}

int run_gradcheck(double tol) {
  bool ok = true;
  for (const auto& report : elunet::run_gradient_certification()) {
    std::printf("%s\n", report.line().c_str());
    ok = ok && report.passed && report.max_rel_error <= tol;
  }
  std::printf("%s\n", ok ? "gradcheck: all ops passed" : "gradcheck: FAILURES");
  return ok ? 0 : 1;
}

int run_moment_profile(const std::string& variant, int depth_n, int seeds, int batch,
                       std::uint64_t seed0) {
  using namespace elunet;
  bool any_diverged = false;
  for (int s = 0; s < seeds; ++s) {
    NetworkConfig<float> cfg;
    cfg.n = depth_n;
    cfg.variant = parse_variant(variant);
    Rng init_rng(seed0 + s, 0);
    Network<float> net = build_network(cfg, init_rng);
    Rng data_rng(seed0 + s, 1);
    Tensor4<float> x = randn<float>({batch, 3, 32, 32}, 0.0, 1.0, data_rng);
    MomentProfile profile = activation_moment_profile(net, x);
    std::printf("variant=%s depth=%d seed=%llu growth_ratio=%.6g diverged=%d moments=",
                variant.c_str(), 6 * depth_n + 2,
                static_cast<unsigned long long>(seed0 + s), profile.growth_ratio(),
                profile.diverged ? 1 : 0);
    for (std::size_t i = 0; i < profile.block_moments.size(); ++i)
      std::printf("%s%.6g", i ? "," : "", profile.block_moments[i]);
    std::printf("\n");
    any_diverged = any_diverged || profile.diverged;
  }
  return any_diverged ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual networks with exponential linear units on CIFAR"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a network");
  elunet::RunConfig run;
  std::string variant = "d";
  std::string head_elu = "auto";
  std::string norm = "meanstd";
  int depth_n = 3;
  double alpha = 1.0;
  train_cmd->add_option("--dataset", run.dataset, "cifar10|cifar100");
  train_cmd->add_option("--data-dir", run.data_dir, "directory with CIFAR binaries")
      ->required();
  train_cmd->add_option("--depth-n", depth_n, "blocks per stage (depth 6n+2)");
  train_cmd->add_option("--variant", variant, "baseline|a|b|c|d");
  train_cmd->add_option("--epochs", run.sched.total_epochs, "total epochs");
  train_cmd->add_option("--lr", run.sched.base_lr, "base learning rate");
  train_cmd->add_option("--momentum", run.sched.momentum, "momentum coefficient");
  train_cmd->add_option("--weight-decay", run.sched.weight_decay, "L2 coefficient");
  train_cmd->add_option("--batch-size", run.sched.batch_size, "mini-batch size");
  train_cmd->add_option("--seed", run.sched.seed, "run seed");
  train_cmd->add_option("--decay-epochs", run.sched.decay_epochs,
                        "epochs at which lr divides by 10");
  train_cmd->add_option("--train-limit", run.train_limit, "use first K train images");
  train_cmd->add_option("--test-limit", run.test_limit, "use first K test images");
  train_cmd->add_option("--alpha", alpha, "ELU alpha");
  train_cmd->add_option("--head-elu", head_elu, "auto|on|off (ELU before pooling)");
  train_cmd->add_option("--norm", norm, "meanstd|mean color normalization");
  train_cmd->add_option("--out", run.out_csv, "metrics CSV path");
  train_cmd->add_option("--checkpoint", run.checkpoint_path, "checkpoint path");
  train_cmd->add_option("--resume", run.resume_path, "checkpoint to resume from");
  train_cmd->add_flag("--quiet", run.quiet, "suppress per-epoch progress");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_dataset = "cifar10", eval_dir;
  std::int64_t eval_limit = 0;
  int eval_batch = 128;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--dataset", eval_dataset, "cifar10|cifar100");
  eval_cmd->add_option("--data-dir", eval_dir)->required();
  eval_cmd->add_option("--test-limit", eval_limit);
  eval_cmd->add_option("--batch-size", eval_batch);

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference certification");
  double tol = elunet::kGradCheckTol;
  grad_cmd->add_option("--tol", tol, "relative tolerance");

  // moment-profile
  auto* moment_cmd =
      app.add_subcommand("moment-profile", "per-block activation moments at init");
  std::string mp_variant = "d";
  int mp_depth = 18, mp_seeds = 5, mp_batch = 16;
  std::uint64_t mp_seed = 1;
  moment_cmd->add_option("--variant", mp_variant, "baseline|a|b|c|d");
  moment_cmd->add_option("--depth-n", mp_depth, "blocks per stage");
  moment_cmd->add_option("--seeds", mp_seeds, "number of seeds");
  moment_cmd->add_option("--batch", mp_batch, "probe batch size");
  moment_cmd->add_option("--seed", mp_seed, "first seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      run.net.n = depth_n;
      run.net.classes = run.dataset == "cifar100" ? 100 : 10;
      run.net.variant = elunet::parse_variant(variant);
      run.net.alpha = static_cast<float>(alpha);
      if (head_elu == "on")
        run.net.head_elu = elunet::HeadElu::on;
      else if (head_elu == "off")
        run.net.head_elu = elunet::HeadElu::off;
      else if (head_elu != "auto")
        throw std::invalid_argument("--head-elu must be auto|on|off");
      run.norm_mode =
          norm == "mean" ? elunet::NormMode::mean_only : elunet::NormMode::mean_std;
      return run_train(std::move(run));
    }
    if (*eval_cmd)
      return run_eval(eval_ckpt, eval_dataset, eval_dir, eval_limit, eval_batch);
    if (*grad_cmd) return run_gradcheck(tol);
    if (*moment_cmd)
      return run_moment_profile(mp_variant, mp_depth, mp_seeds, mp_batch, mp_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
