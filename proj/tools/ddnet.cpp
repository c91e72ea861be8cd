// SPDX-License-Identifier: Apache-2.0
// Command-line front end: train, enhance, eval, synthesize, bench, gradmap, init.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ddnet/bench.hpp"
#include "ddnet/checkpoint.hpp"
#include "ddnet/datagen.hpp"
#include "ddnet/inference.hpp"
#include "ddnet/log_ops.hpp"
#include "ddnet/metrics.hpp"
#include "ddnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace ddnet;

namespace {

void check_device() {
  const char* env = std::getenv("DDNET_DEVICE");
  if (!env || std::string(env).empty() || std::string(env) == "cpu") return;
  fail(ErrorKind::resource, std::string("DDNET_DEVICE=") + env + ": only 'cpu' is available in this build");
}

Model load_model(const fs::path& path) { return load_checkpoint(path).model; }

int cmd_train(const fs::path& config_path, const std::vector<std::string>& overrides) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::from_file(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorKind::argument, "--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  const auto path = train(cfg, [](const StepRecord& r) {
    if (r.step % 50 == 0)
      std::cout << "step " << r.step << " epoch " << r.epoch << " lr " << r.lr << " total " << r.loss.total << '\n';
  });
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_enhance(const fs::path& ckpt, const fs::path& in, const fs::path& out, int tile) {
  const Model model = load_model(ckpt);
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(in)) {
    for (const auto& p : list_images(in)) jobs.emplace_back(p, out / p.filename().replace_extension(".png"));
    if (jobs.empty()) fail(ErrorKind::io, "no images in " + in.string());
  } else {
    const bool out_is_file = out.extension() == ".png";
    jobs.emplace_back(in, out_is_file ? out : out / in.filename().replace_extension(".png"));
  }
  for (const auto& [src, dst] : jobs) {
    const Image low = load_image(src);
    if (low.channels() != 3) fail(ErrorKind::format, src.string() + ": RGB image required");
    Image result = low;
    if (tile > 0) {
      result = enhance_tiled(model, low, tile);
    } else {
      check_memory_budget(model.config(), low.height(), low.width());
      result = enhance_image(model, low);
    }
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    save_image(result, dst);
    std::cout << dst.string() << '\n';
  }
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data, const fs::path& out) {
  const Model model = load_model(ckpt);
  const auto manifest = scan_dataset(data, Split::test);
  for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << '\n';
  const auto report = evaluate(model, manifest);
  for (const auto& row : report.per_image) std::cout << row.id << "  psnr " << row.psnr << "  ssim " << row.ssim << '\n';
  std::cout << "PSNR " << format_mean_std(report.psnr_mean, report.psnr_std, 2) << "  SSIM "
            << format_mean_std(report.ssim_mean, report.ssim_std, 3) << "  (" << report.per_image.size()
            << " images)\n";
  fs::create_directories(out);
  write_csv(report, out / "metrics.csv");
  write_json(report, out / "metrics.json");
  return 0;
}

int cmd_bench(const fs::path& ckpt, const std::vector<std::string>& res, int warmup, int repeats, int tile,
              std::uint64_t seed, const fs::path& json_path) {
  const Model model = load_model(ckpt);
  BenchOptions options;
  if (!res.empty()) {
    options.resolutions.clear();
    for (const auto& r : res) options.resolutions.push_back(parse_resolution(r));
  }
  options.warmup = warmup;
  options.repeats = repeats;
  options.tile = tile;
  options.seed = seed;
  const auto rows = run_bench(model, options);
  print_bench_table(std::cout, rows);
  write_bench_json(json_path, model, rows, ckpt.filename().string());
  return 0;
}

int cmd_gradmap(const fs::path& in, const fs::path& out) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_image(gradient_display(extract_gradient(load_image(in))), out);
  return 0;
}

int cmd_init(const fs::path& out, const ModelConfig& config, std::uint64_t seed, bool zero) {
  Model model = build_model(config, seed);
  if (zero) model.zero();
  save_checkpoint(out, model);
  std::cout << out.string() << ": " << count_params(model) << " parameters\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DDNet low-light image enhancement"};
  app.require_subcommand(1);

  fs::path config_path;
  std::vector<std::string> overrides;
  auto* train_cmd = app.add_subcommand("train", "train a model from a key = value config");
  train_cmd->add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--set", overrides, "override a config key (key=value)");

  fs::path ckpt, in, out;
  int tile = 0;
  auto* enhance_cmd = app.add_subcommand("enhance", "enhance an image or a directory of images");
  enhance_cmd->add_option("--ckpt", ckpt)->required();
  enhance_cmd->add_option("--in", in)->required()->check(CLI::ExistingPath);
  enhance_cmd->add_option("--out", out)->required();
  enhance_cmd->add_option("--tile", tile, "process overlapping tiles of this size");

  fs::path data, eval_out = ".";
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over a paired dataset");
  eval_cmd->add_option("--ckpt", ckpt)->required();
  eval_cmd->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", eval_out, "directory for metrics.csv and metrics.json");

  std::uint64_t seed = 0;
  auto* synth_cmd = app.add_subcommand("synthesize", "darken clear images into a paired dataset");
  synth_cmd->add_option("--in", in)->required()->check(CLI::ExistingDirectory);
  synth_cmd->add_option("--out", out)->required();
  synth_cmd->add_option("--seed", seed);

  std::vector<std::string> res;
  int warmup = 1, repeats = 3;
  fs::path bench_json = "bench.json";
  auto* bench_cmd = app.add_subcommand("bench", "time whole-image enhancement per resolution");
  bench_cmd->add_option("--ckpt", ckpt)->required();
  bench_cmd->add_option("--res", res, "WxH, repeatable");
  bench_cmd->add_option("--warmup", warmup);
  bench_cmd->add_option("--repeats", repeats);
  bench_cmd->add_option("--tile", tile);
  bench_cmd->add_option("--seed", seed);
  bench_cmd->add_option("--json", bench_json);

  auto* gradmap_cmd = app.add_subcommand("gradmap", "write the LoG response of an image as a PNG");
  gradmap_cmd->add_option("--in", in)->required()->check(CLI::ExistingFile);
  gradmap_cmd->add_option("--out", out)->required();

  ModelConfig config;
  bool zero = false;
  auto* init_cmd = app.add_subcommand("init", "write a freshly initialised checkpoint");
  init_cmd->add_option("--out", out)->required();
  init_cmd->add_option("--seed", seed);
  init_cmd->add_option("--base-channels", config.base_channels);
  init_cmd->add_option("--num-scales", config.num_scales);
  init_cmd->add_flag("!--no-sam", config.use_sam);
  init_cmd->add_flag("!--no-scm", config.use_scm);
  init_cmd->add_flag("!--no-gem", config.use_gem);
  init_cmd->add_flag("!--no-cem", config.use_cem);
  init_cmd->add_flag("--zero", zero, "all parameters zero (identity network)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error[" << to_string(ErrorKind::argument) << "]: " << e.what() << '\n';
    return exit_code(ErrorKind::argument);
  }

  try {
    check_device();
    if (*train_cmd) return cmd_train(config_path, overrides);
    if (*enhance_cmd) return cmd_enhance(ckpt, in, out, tile);
    if (*eval_cmd) return cmd_eval(ckpt, data, eval_out);
    if (*synth_cmd) {
      const auto n = synthesize_dataset(in, out, seed);
      std::cout << "wrote " << n << " pairs to " << out.string() << '\n';
      return 0;
    }
    if (*bench_cmd) return cmd_bench(ckpt, res, warmup, repeats, tile, seed, bench_json);
    if (*gradmap_cmd) return cmd_gradmap(in, out);
    if (*init_cmd) return cmd_init(out, config, seed, zero);
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error[io]: " << e.what() << '\n';
    return exit_code(ErrorKind::io);
  }
  return 0;
}
