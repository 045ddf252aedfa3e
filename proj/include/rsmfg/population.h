#ifndef RSMFG_POPULATION_H_
#define RSMFG_POPULATION_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsmfg/mfg.h"
#include "rsmfg/montecarlo.h"

namespace rsmfg {

// Largest-remainder apportionment of N agents to the weights pi.
std::vector<int> Apportion(int n_agents, const std::vector<double>& pi);

// max_k |N_k / N - pi_k|.
double ApportionmentError(const std::vector<int>& counts,
                          const std::vector<double>& pi);

// The major agent, or the first minor agent of type `type`.
struct AgentRole {
  bool major = true;
  int type = 0;

  static AgentRole Major() { return {true, 0}; }
  static AgentRole Minor(int k) { return {false, k}; }
  std::string Name() const;
};

struct PopulationOptions {
  int n_agents = 0;  // N; 0 simulates the infinite population
  int n_reps = 1000;
  std::uint64_t seed = 0;
  // Simulation grid; must divide the equilibrium grid. 0 keeps that grid.
  int coarse_steps = 100;
  SdeScheme scheme = SdeScheme::kHeun;
  int threads = 1;
  // Keep per-replication node values of x0, x^(N) and pi . x_bar.
  bool keep_paths = false;
  // Optional stream index for each minor agent slot (a permutation of
  // 0..N-1 within types).
  std::vector<int> streams;
};

// Replaces the law of one agent. The law acts on that agent's extended
// state and lives on the equilibrium grid.
struct Override {
  AgentRole agent;
  FeedbackLaw law;
};

struct PopulationRun {
  int n_agents = 0;
  std::vector<int> counts;
  TimeGrid grid{1.0, 2};
  int n_reps = 0;
  std::uint64_t seed = 0;
  std::vector<double> major_log_cost;               // delta_0 Lambda per rep
  std::vector<std::vector<double>> minor_log_cost;  // [type][rep]
  std::vector<double> fluctuation_end;  // |x^(N)_T - pi . x_bar_T|
  std::vector<double> fluctuation_max;  // max over nodes
  // Row-major [rep][node][component]; empty unless keep_paths.
  std::vector<double> x0_paths, x_avg_paths, x_bar_paths;
};

// Co-simulates the major agent and N minors under the equilibrium laws, with
// per-type empirical averages in place of the mean field. Replication r of
// agent j draws from StreamKey(seed, r, j). Throws NonFiniteState.
PopulationRun SimulatePopulation(const MajorMinorSpec& spec,
                                 const MfgEquilibrium& eq,
                                 const PopulationOptions& options,
                                 const std::optional<Override>& override = {});

// Log of the exponential cost of a tracked agent over replications.
LogMeanExpEstimate FiniteCost(const PopulationRun& run, AgentRole agent);

struct Deviation {
  std::string name;
  FeedbackLaw law;
};

// Gain scalings 0.8, 0.9, 1.1, 1.2, offset shifts of +-0.1 and the gain
// evaluated 0.1 T ahead.
std::vector<Deviation> DeviationFamily(const FeedbackLaw& law);

FeedbackLaw EquilibriumLaw(const MfgEquilibrium& eq, AgentRole agent);

struct DeviationResult {
  std::string name;
  LogMeanExpEstimate cost;
  double improvement = 0.0;  // equilibrium log-cost minus deviation log-cost
  double std_error = 0.0;    // paired
};

struct NashGapReport {
  AgentRole agent;
  int n_agents = 0;
  LogMeanExpEstimate equilibrium;
  std::vector<DeviationResult> deviations;
  int best = 0;  // index of the largest improvement
  double gap = 0.0;
  double gap_se = 0.0;
};

// Deviation costs on common noise with the equilibrium run. `eq_run` must
// come from SimulatePopulation with the same options, if given.
NashGapReport NashGap(const MajorMinorSpec& spec, const MfgEquilibrium& eq,
                      AgentRole agent, const std::vector<Deviation>& family,
                      const PopulationOptions& options,
                      const PopulationRun* eq_run = nullptr);

// True when gap[j+1] <= gap[j] + n_se * sqrt(se[j]^2 + se[j+1]^2) for all j.
bool GapsNonincreasing(const std::vector<NashGapReport>& reports,
                       double n_se = 3.0);

// Least-squares slope of log y against log x.
double LogLogSlope(const std::vector<double>& x, const std::vector<double>& y);

struct SampleMean {
  double mean = 0.0;
  double std_error = 0.0;
};
SampleMean MeanOf(const std::vector<double>& v);

}  // namespace rsmfg

#endif  // RSMFG_POPULATION_H_
