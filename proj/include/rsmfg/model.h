#ifndef RSMFG_MODEL_H_
#define RSMFG_MODEL_H_

#include <vector>

#include "rsmfg/numerics.h"

namespace rsmfg {

// Single-agent risk-sensitive LQG problem:
//   dx = (A(t) x + B u + b(t)) dt + sigma(t) dw
//   J(u) = E exp(delta * Lambda_T(u))
//   Lambda_T = 1/2 ∫ (x'Qx + 2u'S'x + u'Ru - 2 eta'x - 2 zeta'u) dt
//              + 1/2 x_T' Q_hat x_T
struct LqgProblem {
  int n = 0;
  int m = 0;
  int r = 0;
  TimeFunction A;      // n x n
  MatrixXd B;          // n x m
  TimeFunction b;      // n x 1
  TimeFunction sigma;  // n x r
  MatrixXd Q;          // n x n
  MatrixXd S;          // n x m
  MatrixXd R;          // m x m
  VectorXd eta;        // n
  VectorXd zeta;       // m
  MatrixXd Q_hat;      // n x n
  double delta = 1.0;
  VectorXd x0;  // n
  double T = 1.0;

  // Throws DimensionMismatch unless every field has the declared shape.
  void CheckDimensions() const;
};

// Builds a time-invariant problem with zero b, S, eta, zeta and Q_hat.
LqgProblem MakeProblem(const MatrixXd& A, const MatrixXd& B,
                       const MatrixXd& sigma, const MatrixXd& Q,
                       const MatrixXd& R, double delta, const VectorXd& x0,
                       double T);

// Checks the standing convexity assumptions; returns p unchanged or throws
// AssumptionViolated.
const LqgProblem& ValidateSingle(const LqgProblem& p);

// The same problem with delta replaced by `epsilon`.
LqgProblem RiskNeutralCounterpart(const LqgProblem& p, double epsilon = 1e-8);

struct MajorParams {
  MatrixXd A, F, B;
  TimeFunction b, sigma;
  MatrixXd Q, S, R, Q_hat, H;
  VectorXd eta;
  double delta = 1.0;
  VectorXd x0;
};

struct MinorTypeParams {
  MatrixXd A, F, G, B;
  TimeFunction b, sigma;
  MatrixXd Q, S, R, Q_hat, H, H_hat;
  VectorXd eta;
  double delta = 1.0;
  VectorXd x0;  // common initial state of this type
};

// Sign used for the H_hat block in the minor agent's linear cost term.
enum class EtaBarSign { kMinus, kPlus };

struct MajorMinorSpec {
  int n = 0;
  int m = 0;
  int r = 0;
  double T = 1.0;
  MajorParams major;
  std::vector<MinorTypeParams> minors;
  std::vector<double> pi;
  EtaBarSign eta_bar_sign = EtaBarSign::kMinus;

  int K() const { return static_cast<int>(minors.size()); }
  void CheckDimensions() const;
};

const MajorMinorSpec& ValidateGame(const MajorMinorSpec& g);

// Smallest eigenvalue of the symmetric part.
double MinSymmetricEigenvalue(const MatrixXd& m);

}  // namespace rsmfg

#endif  // RSMFG_MODEL_H_
