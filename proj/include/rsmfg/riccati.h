#ifndef RSMFG_RICCATI_H_
#define RSMFG_RICCATI_H_

#include "rsmfg/model.h"
#include "rsmfg/numerics.h"

namespace rsmfg {

struct RiccatiSolution {
  MatrixTrajectory Pi;        // n x n, symmetric
  MatrixTrajectory dPi;       // time derivative of Pi at the nodes
  MatrixTrajectory s;         // n x 1
  MatrixTrajectory ds;        // time derivative of s at the nodes
  MatrixTrajectory K_gain;    // m x n, -R^-1 (S' + B' Pi)
  MatrixTrajectory k_offset;  // m x 1, -R^-1 (B' s - zeta)
  double C_star = 0.0;

  // Pi and s at an arbitrary time, by cubic Hermite interpolation.
  MatrixXd PiAt(double t) const { return InterpolateHermite(Pi, dPi, t); }
  MatrixXd sAt(double t) const { return InterpolateHermite(s, ds, t); }
};

// Right-hand side of the risk-sensitive Riccati ODE, dPi/dt = f(t, Pi).
MatrixXd RiccatiRhs(const LqgProblem& p, double t, const MatrixXd& Pi);

// Backward RK4 solve from Pi(T) = Q_hat, symmetrized after each step.
// Only delta >= 0 is required here so that the risk-neutral case can be
// solved with the same code. Throws FiniteEscape.
MatrixTrajectory SolveRiccati(const LqgProblem& p, const TimeGrid& grid);

// Node derivatives of a Riccati trajectory.
MatrixTrajectory RiccatiDerivative(const LqgProblem& p,
                                   const MatrixTrajectory& Pi);

// Right-hand side of the offset ODE given Pi(t).
MatrixXd OffsetRhs(const LqgProblem& p, double t, const MatrixXd& Pi,
                   const MatrixXd& s);

// Backward RK4 solve of the offset ODE from s(T) = 0. Off-node values of Pi
// are Hermite interpolated using the Riccati field for node derivatives.
MatrixTrajectory SolveOffset(const LqgProblem& p, const MatrixTrajectory& Pi,
                             const TimeGrid& grid);

struct FeedbackLaw {
  MatrixTrajectory K_gain;
  MatrixTrajectory k_offset;
};

FeedbackLaw ComputeFeedbackLaw(const LqgProblem& p, const MatrixTrajectory& Pi,
                               const MatrixTrajectory& s);

double ComputeCStar(const LqgProblem& p, const MatrixTrajectory& Pi,
                    const MatrixTrajectory& s, const TimeGrid& grid);

// Everything above in one call.
RiccatiSolution SolveLqg(const LqgProblem& p, const TimeGrid& grid);

}  // namespace rsmfg

#endif  // RSMFG_RICCATI_H_
