#ifndef RSMFG_CONFIG_H_
#define RSMFG_CONFIG_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsmfg/mfg.h"
#include "rsmfg/model.h"
#include "rsmfg/montecarlo.h"

namespace rsmfg {

enum class Mode {
  kSolveSingle,
  kVerifySingle,
  kSolveMfg,
  kSimulatePopulation,
  kNashGap,
  kReproducePaper,
};

// Throws ParseError for unknown names.
Mode ParseMode(const std::string& name);
std::string ModeName(Mode mode);
bool IsStochastic(Mode mode);

struct MonteCarloConfig {
  int n_paths = 100000;
  std::optional<std::uint64_t> seed;
  SdeScheme scheme = SdeScheme::kHeun;
};

struct PopulationConfig {
  std::vector<int> n_agents = {5, 20, 80};
  int n_reps = 20000;
  int coarse_steps = 100;
};

struct ExperimentConfig {
  Mode mode = Mode::kSolveSingle;
  // Exactly one of these is set, matching the mode.
  std::optional<LqgProblem> single;
  std::optional<MajorMinorSpec> game;
  int steps = 2000;
  MonteCarloConfig montecarlo;
  FixedPointOptions fixedpoint;
  PopulationConfig population;
  std::string output_directory = "out";
  // The document as read, and its raw bytes.
  std::string text;
};

// Parses and validates a config document. `mode` overrides the document's
// "mode" field; the two must agree when both are present. Throws
// ParseError naming the line or field, or AssumptionViolated.
ExperimentConfig ParseConfig(const std::string& text,
                             std::optional<Mode> mode = {});

ExperimentConfig LoadConfig(const std::string& path,
                            std::optional<Mode> mode = {});

}  // namespace rsmfg

#endif  // RSMFG_CONFIG_H_
