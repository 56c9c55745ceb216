// Command-line front end. Talks to the library exclusively through the C API.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anca/anca.h"

namespace {

const char* category_name(int code) {
  switch (code) {
    case ANCA_E_CONFIG: return "config_error";
    case ANCA_E_IO: return "io_error";
    case ANCA_E_DATA: return "data_error";
    case ANCA_E_SHAPE: return "shape_error";
    case ANCA_E_CONTRACT: return "contract_violation";
    case ANCA_E_NUMERIC: return "numeric_error";
    default: return "internal_error";
  }
}

[[noreturn]] void fail(int code) {
  std::fprintf(stderr, "error: %s: %s\n", category_name(code), anca_last_error());
  std::exit(code);
}

void check(int code) {
  if (code != ANCA_OK) fail(code);
}

using ConfigPtr = std::unique_ptr<anca_config, decltype(&anca_config_free)>;

ConfigPtr make_config(const std::string& config_path, const std::vector<std::string>& sets,
                      const std::string& seed_override) {
  anca_config* cfg = nullptr;
  if (!config_path.empty()) {
    check(anca_config_load(config_path.c_str(), &cfg));
  } else {
    cfg = anca_config_new();
    if (!cfg) fail(ANCA_E_INTERNAL);
  }
  ConfigPtr out(cfg, &anca_config_free);
  if (!seed_override.empty()) check(anca_config_set(out.get(), "seed", seed_override.c_str()));
  for (const auto& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: config_error: --set expects KEY=VALUE, got '%s'\n", kv.c_str());
      std::exit(ANCA_E_CONFIG);
    }
    check(anca_config_set(out.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellular-automaton image classifier with attention pooling"};
  app.require_subcommand(1);

  std::string config_path, data_root, out_dir, checkpoint, resume, image, out_prefix, out_path;
  std::string seed_str;
  std::vector<std::string> sets;
  int fold = 0, classes = 3, coords = 200, count = 400, size = 32;
  double eps = 1e-3, tol = 1e-3;
  uint64_t seed = 0;
  bool as_png = false;

  auto add_config_opts = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (defaults apply when omitted)");
    cmd->add_option("--set", sets, "override a config key, KEY=VALUE")->take_all();
    cmd->add_option("--seed", seed_str, "override the config seed");
  };

  auto* train = app.add_subcommand("train", "train on all folds but one");
  add_config_opts(train);
  train->add_option("--data", data_root, "dataset root")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--fold", fold, "held-out fold index (default 0)");
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  eval->add_option("--data", data_root, "dataset root")->required();
  eval->add_option("--fold", fold, "held-out fold (-1: every record)")->default_val(-1);
  eval->add_option("--out", out_dir, "directory for eval_metrics.csv and confusion.csv");

  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  add_config_opts(cv);
  cv->add_option("--data", data_root, "dataset root")->required();
  cv->add_option("--out", out_dir, "output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "cross-validate the pooling variants");
  add_config_opts(ablate);
  ablate->add_option("--data", data_root, "dataset root")->required();
  ablate->add_option("--out", out_dir, "output directory")->required();

  auto* exa = app.add_subcommand("export-attention", "write gate map, selection bitmap, embedding");
  exa->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  exa->add_option("--image", image, "input image")->required();
  exa->add_option("--out-prefix", out_prefix, "output path prefix")->required();

  auto* ext = app.add_subcommand("export-trajectory", "write per-step grid frames");
  ext->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  ext->add_option("--image", image, "input image")->required();
  ext->add_option("--out", out_dir, "output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_config_opts(gc);
  gc->add_option("--classes", classes, "class count (default 3)");
  gc->add_option("--coords", coords, "coordinates to probe (default 200)");
  gc->add_option("--eps", eps, "finite-difference step (default 1e-3)");
  gc->add_option("--tol", tol, "max relative error to accept (default 1e-3)");

  auto* stats = app.add_subcommand("stats", "write dataset channel mean/std");
  stats->add_option("--data", data_root, "dataset root")->required();
  stats->add_option("--out", out_path, "stats file to write")->required();

  auto* toy = app.add_subcommand("gen-toy", "generate the synthetic disk/bar dataset");
  toy->add_option("--out", out_dir, "output directory")->required();
  toy->add_option("--count", count, "image count (default 400)");
  toy->add_option("--size", size, "image side in pixels (default 32)");
  toy->add_option("--seed", seed, "generator seed (default 0)");
  toy->add_flag("--png", as_png, "write PNG instead of PPM");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    auto cfg = make_config(config_path, sets, seed_str);
    check(anca_train(cfg.get(), data_root.c_str(), fold, out_dir.c_str(),
                     resume.empty() ? nullptr : resume.c_str()));
    std::printf("checkpoint: %s/checkpoint_final.anca\nmetrics: %s/metrics.csv\n", out_dir.c_str(),
                out_dir.c_str());
  } else if (eval->parsed()) {
    double loss = 0, acc = 0, bal = 0;
    check(anca_evaluate(checkpoint.c_str(), data_root.c_str(), fold,
                        out_dir.empty() ? nullptr : out_dir.c_str(), &loss, &acc, &bal));
    std::printf("loss: %.6f\naccuracy: %.4f\nbalanced_accuracy: %.4f\n", loss, acc, bal);
  } else if (cv->parsed()) {
    auto cfg = make_config(config_path, sets, seed_str);
    double ma = 0, sa = 0, mb = 0, sb = 0;
    check(anca_cross_validate(cfg.get(), data_root.c_str(), out_dir.c_str(), &ma, &sa, &mb, &sb));
    std::printf("accuracy: %.4f +/- %.4f\nbalanced_accuracy: %.4f +/- %.4f\n", ma, sa, mb, sb);
  } else if (ablate->parsed()) {
    auto cfg = make_config(config_path, sets, seed_str);
    check(anca_ablation(cfg.get(), data_root.c_str(), out_dir.c_str()));
    std::printf("summary: %s/ablation.csv\n", out_dir.c_str());
  } else if (exa->parsed()) {
    check(anca_export_attention(checkpoint.c_str(), image.c_str(), out_prefix.c_str()));
    std::printf("wrote %s_gate.pgm, %s_selection.pgm, %s_embedding.txt\n", out_prefix.c_str(),
                out_prefix.c_str(), out_prefix.c_str());
  } else if (ext->parsed()) {
    check(anca_export_trajectory(checkpoint.c_str(), image.c_str(), out_dir.c_str()));
    std::printf("frames: %s\n", out_dir.c_str());
  } else if (gc->parsed()) {
    auto cfg = make_config(config_path, sets, seed_str);
    double err = 0;
    check(anca_grad_check(cfg.get(), classes, coords, eps, &err));
    std::printf("max relative error: %.3e\n", err);
    if (err > tol) {
      std::fprintf(stderr, "error: numeric_error: gradient check exceeded tolerance %.3e\n", tol);
      return ANCA_E_NUMERIC;
    }
  } else if (stats->parsed()) {
    check(anca_compute_stats(data_root.c_str(), out_path.c_str()));
    std::printf("stats: %s\n", out_path.c_str());
  } else if (toy->parsed()) {
    check(anca_generate_toy(out_dir.c_str(), count, size, seed, as_png ? 1 : 0));
    std::printf("dataset: %s\n", out_dir.c_str());
  }
  return 0;
}
