#ifndef RSMFG_RUN_H_
#define RSMFG_RUN_H_

#include <exception>
#include <string>
#include <vector>

#include "rsmfg/config.h"

namespace rsmfg {

struct RunOptions {
  std::string out_dir;  // empty: the config's output directory
  int threads = 1;
};

struct ResultBundle {
  std::string out_dir;
  std::vector<std::string> files;  // written, manifest.json last
};

// Runs the configured mode and writes CSV tables plus manifest.json. Files
// are written before a NotConverged error propagates.
ResultBundle Run(const ExperimentConfig& config, const RunOptions& options = {});

// Git blob hash: SHA-1 of "blob <size>\0" followed by the bytes.
std::string GitBlobHash(const std::string& bytes);

// 0 for success, 2 parse or validation, 3 not converged, 4 finite escape,
// 5 non-finite simulation, 1 otherwise.
int ExitCode(const std::exception& e);

}  // namespace rsmfg

#endif  // RSMFG_RUN_H_
