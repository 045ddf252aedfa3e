// rsmfg <mode> --config <path> [--out <dir>] [--threads <n>]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "rsmfg/config.h"
#include "rsmfg/errors.h"
#include "rsmfg/run.h"

int main(int argc, char** argv) {
  CLI::App app{"Risk-sensitive LQG and major-minor mean-field game solver"};
  std::string mode_name, config_path, out_dir;
  int threads = 0;
  app.add_option("mode", mode_name,
                 "solve-single | verify-single | solve-mfg | "
                 "simulate-population | nash-gap | reproduce-paper")
      ->required();
  app.add_option("--config", config_path, "config JSON")->required();
  app.add_option("--out", out_dir, "output directory (default: from config)");
  app.add_option("--threads", threads, "worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (threads == 0) {
    threads = 1;
    if (const char* env = std::getenv("RSMFG_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end == env || *end != '\0' || v < 1) {
        std::fprintf(stderr, "error: RSMFG_THREADS must be a positive integer\n");
        return 2;
      }
      threads = static_cast<int>(v);
    }
  }

  try {
    const rsmfg::ExperimentConfig config =
        rsmfg::LoadConfig(config_path, rsmfg::ParseMode(mode_name));
    const rsmfg::ResultBundle result =
        rsmfg::Run(config, {out_dir, threads});
    std::printf("%s: wrote %zu files to %s\n", mode_name.c_str(),
                result.files.size(), result.out_dir.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return rsmfg::ExitCode(e);
  }
}
