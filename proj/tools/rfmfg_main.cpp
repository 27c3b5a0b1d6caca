#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rfmfg/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Random-feature mean-field game solver"};
  app.set_version_flag("--version", std::string("rfmfg ") + rfmfg::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> threads;
  std::optional<std::string> log_path;

  auto* run = app.add_subcommand("run", "Solve a problem and write outputs");
  run->add_option("--config", config_path, "JSON config file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  run->add_option("--threads", threads, "Worker threads, 0 = auto (overrides threads)");
  run->add_option("--log", log_path, "Write progress lines to this file instead of stdout");

  std::string bench_config;
  std::optional<std::string> bench_out;
  auto* bench = app.add_subcommand("kernel-bench", "Write kernel error curve and slice exports");
  bench->add_option("--config", bench_config, "JSON config file")->required();
  bench->add_option("--out", bench_out, "Output directory (overrides output_dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = rfmfg::load_config(config_path);
      if (out_dir) cfg.output_dir = *out_dir;
      if (threads) cfg.threads = *threads;
      std::ostream* log = &std::cout;
      std::unique_ptr<std::ofstream> log_file;
      if (log_path) {
        log_file = std::make_unique<std::ofstream>(*log_path);
        if (!*log_file) {
          std::cerr << "cli: cannot open log file '" << *log_path << "'\n";
          return rfmfg::kExitIo;
        }
        log = log_file.get();
      }
      return rfmfg::run(cfg, log);
    }
    auto cfg = rfmfg::load_config(bench_config);
    if (bench_out) cfg.output_dir = *bench_out;
    return rfmfg::run_kernel_bench(cfg);
  } catch (const rfmfg::IoError& e) {
    std::cerr << e.what() << '\n';
    return rfmfg::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return rfmfg::kExitUsage;
  }
}
