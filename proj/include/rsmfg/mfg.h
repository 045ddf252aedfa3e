#ifndef RSMFG_MFG_H_
#define RSMFG_MFG_H_

#include <vector>

#include "rsmfg/model.h"
#include "rsmfg/numerics.h"
#include "rsmfg/riccati.h"

namespace rsmfg {

// Open-loop mean-field coefficients: dx_bar = (A x_bar + G x0 + B u_bar + m).
struct MeanFieldMatrices {
  MatrixXd A_breve;      // nK x nK
  MatrixXd G_breve;      // nK x n
  MatrixXd B_breve;      // nK x mK
  TimeFunction m_breve;  // nK x 1
};

MeanFieldMatrices AssembleMeanField(const MajorMinorSpec& spec);

// Block row [pi_1 M, ..., pi_K M].
MatrixXd PiRow(const std::vector<double>& pi, const MatrixXd& M);

struct ExtendedSystem {
  int dim = 0;
  MatrixXd A_tilde;
  MatrixXd B_own;    // input matrix of the agent's own control
  MatrixXd B_major;  // major control in a minor system (empty for the major)
  MatrixXd B_mf;     // mean-field control
  TimeFunction M_tilde;
  TimeFunction Sigma;
  MatrixXd Q, S, R, G;  // G is the terminal weight
  VectorXd eta_bar;
  VectorXd n_bar;
  double delta = 1.0;
  VectorXd x0;
};

ExtendedSystem AssembleMajor(const MajorMinorSpec& spec);
ExtendedSystem AssembleMinor(const MajorMinorSpec& spec, int k);

struct FixedPointOptions {
  double tol = 1e-10;
  int max_iter = 50;
  double relaxation = 0.0;
  // Record A_bar, G_bar, m_bar node values after every iteration.
  bool keep_iterates = false;
  // Throw NotConverged when the tolerance is not reached.
  bool throw_on_failure = true;
};

struct IterationLog {
  std::vector<double> errors;  // errors[j-1] is error^(j)
  int iterations = 0;
  double tol = 0.0;
  bool converged = false;
};

// Node values and node time-derivatives of the mean-field coefficients.
// m_bar is stored without the b_k(t) part, which is added on evaluation.
struct MeanFieldCoefficients {
  MatrixTrajectory A_bar, dA_bar;
  MatrixTrajectory G_bar, dG_bar;
  MatrixTrajectory m_rest, dm_rest;
  TimeFunction m_breve;

  MatrixXd A(double t) const { return InterpolateHermite(A_bar, dA_bar, t); }
  MatrixXd G(double t) const { return InterpolateHermite(G_bar, dG_bar, t); }
  MatrixXd m(double t) const {
    return m_breve(t) + InterpolateHermite(m_rest, dm_rest, t);
  }
  MatrixTrajectory m_bar() const;
};

struct MfgIterate {
  MatrixTrajectory A_bar, G_bar, m_bar;
};

struct MfgEquilibrium {
  TimeGrid grid;
  ExtendedSystem major_system;
  std::vector<ExtendedSystem> minor_systems;
  LqgProblem major_problem;
  std::vector<LqgProblem> minor_problems;
  RiccatiSolution major;                // Pi_0, s_0, gains on X^0
  std::vector<RiccatiSolution> minors;  // Pi_k, s_k, gains on X^i
  MeanFieldCoefficients coeffs;
  IterationLog log;
  std::vector<MfgIterate> iterates;  // iterates[j-1] is iteration j

  const MatrixTrajectory& A_bar() const { return coeffs.A_bar; }
  const MatrixTrajectory& G_bar() const { return coeffs.G_bar; }
  MatrixTrajectory m_bar() const { return coeffs.m_bar(); }
};

MfgEquilibrium SolveConsistency(const MajorMinorSpec& spec,
                                const TimeGrid& grid,
                                const FixedPointOptions& options = {});

// One sweep of the fixed-point map from the given coefficients.
MfgEquilibrium IterateOnce(const MajorMinorSpec& spec, const TimeGrid& grid,
                           const MeanFieldCoefficients& coeffs);

struct EquilibriumLaws {
  FeedbackLaw major;               // on X^0 = [x0; x_bar]
  std::vector<FeedbackLaw> minor;  // on X^i = [x^i; x0; x_bar]
};

// Throws NotConverged when eq did not converge.
EquilibriumLaws ComputeEquilibriumLaws(const MfgEquilibrium& eq);

// Mean control u_bar = Xi(t) X^0 + varsigma(t) implied by the minor laws.
struct MeanControl {
  MatrixTrajectory Xi;        // mK x n(1+K)
  MatrixTrajectory varsigma;  // mK x 1
};
MeanControl ComputeMeanControl(const MajorMinorSpec& spec,
                               const MfgEquilibrium& eq);

// Forward RK4 of dx_bar = (A_bar x_bar + G_bar x0 + m_bar) dt from x_bar0.
MatrixTrajectory MeanFieldTrajectory(const MfgEquilibrium& eq,
                                     const TimeFunction& x0_path,
                                     const VectorXd& x_bar0);

}  // namespace rsmfg

#endif  // RSMFG_MFG_H_
