#ifndef RSMFG_MONTECARLO_H_
#define RSMFG_MONTECARLO_H_

#include <cstdint>
#include <vector>

#include "rsmfg/model.h"
#include "rsmfg/numerics.h"
#include "rsmfg/riccati.h"

namespace rsmfg {

enum class SdeScheme {
  kHeun,            // predictor-corrector, second order in the drift
  kEulerMaruyama,
};

struct SimulationOptions {
  SdeScheme scheme = SdeScheme::kHeun;
  int threads = 1;
  // Store every state and control; otherwise only log weights are kept.
  bool keep_paths = false;
};

// Open-loop control given as node values (m x 1 per node).
FeedbackLaw OpenLoopLaw(const MatrixTrajectory& u, int n);

struct PathEnsemble {
  TimeGrid grid;
  int n = 0;
  int m = 0;
  int n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<double> log_weights;  // delta * Lambda_T per path
  // Row-major [path][node][component]; empty unless keep_paths.
  std::vector<double> states;
  std::vector<double> controls;

  const double* state(int path) const {
    return states.data() + static_cast<std::size_t>(path) * grid.size() * n;
  }
  const double* control(int path) const {
    return controls.data() +
           static_cast<std::size_t>(path) * grid.size() * m;
  }
};

// Paths of dx = (A x + B u + b) dt + sigma dw under u = K x + k on the grid
// of `law`. Path i draws its noise from StreamKey(seed, i), so the result
// does not depend on the thread count. Throws NonFiniteState.
PathEnsemble Simulate(const LqgProblem& p, const FeedbackLaw& law, int n_paths,
                      std::uint64_t seed, const SimulationOptions& options = {});

// Direction omega_t = W(t) x_t + w(t), with x_t the state under the
// reference law. W is m x n, w is m x 1.
struct Perturbation {
  MatrixTrajectory W;
  MatrixTrajectory w;
};

Perturbation ConstantPerturbation(const TimeGrid& grid, const MatrixXd& W,
                                  const MatrixXd& w);

// Same noise as Simulate(p, law, ...), but each path applies the control
// process u_t + eps * omega_t, where u_t and omega_t are recorded along the
// reference path.
PathEnsemble SimulatePerturbed(const LqgProblem& p, const FeedbackLaw& law,
                               const Perturbation& omega, double eps,
                               int n_paths, std::uint64_t seed,
                               const SimulationOptions& options = {});

// Lambda_T of one path given node-major states (size grid.size() * n) and
// controls (size grid.size() * m).
double PathCost(const LqgProblem& p, const TimeGrid& grid, const double* x,
                const double* u);

struct LogMeanExpEstimate {
  double log_value = 0.0;
  double std_error = 0.0;  // delta-method error of log_value
  std::size_t n = 0;
};

LogMeanExpEstimate LogMeanExp(const std::vector<double>& a);
LogMeanExpEstimate EstimateCost(const PathEnsemble& ens);

// log mean exp(a) - log mean exp(b) for samples paired by index, with the
// delta-method error of the paired difference.
struct PairedDifference {
  double value = 0.0;
  double std_error = 0.0;
};
PairedDifference LogMeanExpDifference(const std::vector<double>& a,
                                      const std::vector<double>& b);

struct ZScore {
  double estimate = 0.0;
  double target = 0.0;
  double std_error = 0.0;
  double z = 0.0;
};

struct IdentityReport {
  ZScore normalization;          // E exp(delta Lambda_T - C*) = 1
  ZScore optimal_cost;           // log J(u*) = C*
  std::vector<ZScore> quotient;  // M2/M1 at t = 0 vs Pi(0) x0 + s(0)
};

// All three identities from one ensemble under the optimal law.
IdentityReport VerifyIdentities(const LqgProblem& p, const RiccatiSolution& sol,
                                int n_paths, std::uint64_t seed,
                                const SimulationOptions& options = {});

ZScore CheckNormalization(const LqgProblem& p, const RiccatiSolution& sol,
                          int n_paths, std::uint64_t seed,
                          const SimulationOptions& options = {});
ZScore CheckOptimalCost(const LqgProblem& p, const RiccatiSolution& sol,
                        int n_paths, std::uint64_t seed,
                        const SimulationOptions& options = {});
std::vector<ZScore> CheckMartingaleQuotient(
    const LqgProblem& p, const RiccatiSolution& sol, int n_paths,
    std::uint64_t seed, const SimulationOptions& options = {});

// <DJ(u), omega> = value * exp(log_scale). `relative` is <DJ(u), omega>/J(u).
struct GateauxEstimate {
  double value = 0.0;
  double std_error = 0.0;
  double log_scale = 0.0;
  double relative = 0.0;
  double relative_se = 0.0;
};

// Pathwise estimates for several directions from one ensemble.
std::vector<GateauxEstimate> EstimateGateaux(
    const LqgProblem& p, const FeedbackLaw& law,
    const std::vector<Perturbation>& omegas, int n_paths, std::uint64_t seed,
    const SimulationOptions& options = {});

GateauxEstimate EstimateGateaux(const LqgProblem& p, const FeedbackLaw& law,
                                const Perturbation& omega, int n_paths,
                                std::uint64_t seed,
                                const SimulationOptions& options = {});

// (J(u + eps w) - J(u - eps w)) / (2 eps) on common noise, reported in the
// same form as GateauxEstimate (std errors left at zero).
GateauxEstimate CentralDifference(const LqgProblem& p, const FeedbackLaw& law,
                                  const Perturbation& omega, double eps,
                                  int n_paths, std::uint64_t seed,
                                  const SimulationOptions& options = {});

struct ConvexityCheck {
  double lambda = 0.0;
  // lambda J(u1) + (1 - lambda) J(u2) - J(lambda u1 + (1 - lambda) u2),
  // divided by exp of a common shift.
  double margin = 0.0;
  double std_error = 0.0;
};

// Sampled convexity of J along the segment between the control processes of
// two laws on common noise.
std::vector<ConvexityCheck> CheckConvexity(const LqgProblem& p,
                                           const FeedbackLaw& law1,
                                           const FeedbackLaw& law2,
                                           const std::vector<double>& lambdas,
                                           int n_paths, std::uint64_t seed,
                                           const SimulationOptions& options = {});

}  // namespace rsmfg

#endif  // RSMFG_MONTECARLO_H_
