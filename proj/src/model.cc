#include "rsmfg/model.h"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "rsmfg/errors.h"

namespace rsmfg {

namespace {

constexpr double kPsdTolerance = -1e-10;

void ExpectShape(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                 Eigen::Index want_rows, Eigen::Index want_cols) {
  if (rows != want_rows || cols != want_cols) {
    throw DimensionMismatch(name + " is " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", expected " +
                            std::to_string(want_rows) + "x" +
                            std::to_string(want_cols));
  }
}

void ExpectShape(const std::string& name, const MatrixXd& m,
                 Eigen::Index rows, Eigen::Index cols) {
  ExpectShape(name, m.rows(), m.cols(), rows, cols);
}

void ExpectShape(const std::string& name, const TimeFunction& f,
                 Eigen::Index rows, Eigen::Index cols) {
  if (f.empty()) throw DimensionMismatch(name + " is not set");
  ExpectShape(name, f.rows(), f.cols(), rows, cols);
}

void CheckCostAssumptions(const MatrixXd& Q, const MatrixXd& S,
                          const MatrixXd& R, const MatrixXd& Q_hat,
                          double delta) {
  if (!(MinSymmetricEigenvalue(R) > 0.0)) {
    throw AssumptionViolated("R positive definite");
  }
  if (MinSymmetricEigenvalue(Q_hat) < kPsdTolerance) {
    throw AssumptionViolated("Q_hat positive semidefinite");
  }
  const MatrixXd reduced = Q - S * R.ldlt().solve(S.transpose());
  if (MinSymmetricEigenvalue(reduced) < kPsdTolerance) {
    throw AssumptionViolated("Q - S R^-1 S^T positive semidefinite");
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw AssumptionViolated("delta in (0,∞)");
  }
}

}  // namespace

double MinSymmetricEigenvalue(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  const MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void LqgProblem::CheckDimensions() const {
  if (n < 1 || m < 1 || r < 1) {
    throw DimensionMismatch("dimensions n, m, r must be positive");
  }
  ExpectShape("A", A, n, n);
  ExpectShape("B", B, n, m);
  ExpectShape("b", b, n, 1);
  ExpectShape("sigma", sigma, n, r);
  ExpectShape("Q", Q, n, n);
  ExpectShape("S", S, n, m);
  ExpectShape("R", R, m, m);
  ExpectShape("eta", eta, n, 1);
  ExpectShape("zeta", zeta, m, 1);
  ExpectShape("Q_hat", Q_hat, n, n);
  ExpectShape("x0", x0, n, 1);
  if (!(T > 0.0)) throw DimensionMismatch("T must be positive");
}

LqgProblem MakeProblem(const MatrixXd& A, const MatrixXd& B,
                       const MatrixXd& sigma, const MatrixXd& Q,
                       const MatrixXd& R, double delta, const VectorXd& x0,
                       double T) {
  LqgProblem p;
  p.n = static_cast<int>(A.rows());
  p.m = static_cast<int>(B.cols());
  p.r = static_cast<int>(sigma.cols());
  p.A = TimeFunction::Constant(A);
  p.B = B;
  p.b = TimeFunction::Constant(MatrixXd::Zero(p.n, 1));
  p.sigma = TimeFunction::Constant(sigma);
  p.Q = Q;
  p.S = MatrixXd::Zero(p.n, p.m);
  p.R = R;
  p.eta = VectorXd::Zero(p.n);
  p.zeta = VectorXd::Zero(p.m);
  p.Q_hat = MatrixXd::Zero(p.n, p.n);
  p.delta = delta;
  p.x0 = x0;
  p.T = T;
  p.CheckDimensions();
  return p;
}

const LqgProblem& ValidateSingle(const LqgProblem& p) {
  p.CheckDimensions();
  CheckCostAssumptions(p.Q, p.S, p.R, p.Q_hat, p.delta);
  return p;
}

LqgProblem RiskNeutralCounterpart(const LqgProblem& p, double epsilon) {
  LqgProblem out = p;
  out.delta = epsilon;
  return out;
}

void MajorMinorSpec::CheckDimensions() const {
  if (n < 1 || m < 1 || r < 1) {
    throw DimensionMismatch("dimensions n, m, r must be positive");
  }
  if (minors.empty()) throw DimensionMismatch("at least one minor type needed");
  if (pi.size() != minors.size()) {
    throw DimensionMismatch("pi must have one weight per minor type");
  }
  if (!(T > 0.0)) throw DimensionMismatch("T must be positive");
  const MajorParams& a = major;
  ExpectShape("A_0", a.A, n, n);
  ExpectShape("F_0", a.F, n, n);
  ExpectShape("B_0", a.B, n, m);
  ExpectShape("b_0", a.b, n, 1);
  ExpectShape("sigma_0", a.sigma, n, r);
  ExpectShape("Q_0", a.Q, n, n);
  ExpectShape("S_0", a.S, n, m);
  ExpectShape("R_0", a.R, m, m);
  ExpectShape("Q_hat_0", a.Q_hat, n, n);
  ExpectShape("H_0", a.H, n, n);
  ExpectShape("eta_0", a.eta, n, 1);
  ExpectShape("x0_0", a.x0, n, 1);
  for (int k = 0; k < K(); ++k) {
    const MinorTypeParams& p = minors[k];
    const std::string s = "_" + std::to_string(k + 1);
    ExpectShape("A" + s, p.A, n, n);
    ExpectShape("F" + s, p.F, n, n);
    ExpectShape("G" + s, p.G, n, n);
    ExpectShape("B" + s, p.B, n, m);
    ExpectShape("b" + s, p.b, n, 1);
    ExpectShape("sigma" + s, p.sigma, n, r);
    ExpectShape("Q" + s, p.Q, n, n);
    ExpectShape("S" + s, p.S, n, m);
    ExpectShape("R" + s, p.R, m, m);
    ExpectShape("Q_hat" + s, p.Q_hat, n, n);
    ExpectShape("H" + s, p.H, n, n);
    ExpectShape("H_hat" + s, p.H_hat, n, n);
    ExpectShape("eta" + s, p.eta, n, 1);
    ExpectShape("x0" + s, p.x0, n, 1);
  }
}

const MajorMinorSpec& ValidateGame(const MajorMinorSpec& g) {
  g.CheckDimensions();
  double total = 0.0;
  for (double w : g.pi) {
    if (!(w >= 0.0)) throw AssumptionViolated("pi nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw AssumptionViolated("pi sums to 1");
  CheckCostAssumptions(g.major.Q, g.major.S, g.major.R, g.major.Q_hat,
                       g.major.delta);
  for (const MinorTypeParams& p : g.minors) {
    CheckCostAssumptions(p.Q, p.S, p.R, p.Q_hat, p.delta);
  }
  return g;
}

}  // namespace rsmfg
