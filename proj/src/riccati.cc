#include "rsmfg/riccati.h"

#include <vector>

#include "rsmfg/errors.h"

namespace rsmfg {

namespace {

void CheckDelta(const LqgProblem& p) {
  if (!(p.delta >= 0.0)) throw AssumptionViolated("delta in (0,∞)");
}

void Symmetrize(MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace

MatrixXd RiccatiRhs(const LqgProblem& p, double t, const MatrixXd& Pi) {
  const MatrixXd a = p.A(t);
  const MatrixXd sig = p.sigma(t);
  const MatrixXd pbs = Pi * p.B + p.S;
  MatrixXd out = Pi * a + a.transpose() * Pi -
                 pbs * p.R.ldlt().solve(pbs.transpose()) + p.Q;
  if (p.delta != 0.0) {
    const MatrixXd ps = Pi * sig;
    out += p.delta * ps * ps.transpose();
  }
  return -out;
}

MatrixTrajectory SolveRiccati(const LqgProblem& p, const TimeGrid& grid) {
  p.CheckDimensions();
  CheckDelta(p);
  auto field = [&p](double t, const MatrixXd& Pi) {
    return RiccatiRhs(p, t, Pi);
  };
  try {
    return IntegrateOde(field, p.Q_hat, grid, Direction::kBackward,
                        Symmetrize);
  } catch (const NonFiniteState& e) {
    throw FiniteEscape(e.time());
  }
}

MatrixTrajectory RiccatiDerivative(const LqgProblem& p,
                                   const MatrixTrajectory& Pi) {
  std::vector<MatrixXd> d(Pi.values.size());
  for (int i = 0; i < Pi.grid.size(); ++i) {
    d[i] = RiccatiRhs(p, Pi.grid.node(i), Pi[i]);
    Symmetrize(d[i]);
  }
  return MatrixTrajectory(Pi.grid, std::move(d));
}

MatrixXd OffsetRhs(const LqgProblem& p, double t, const MatrixXd& Pi,
                   const MatrixXd& s) {
  const MatrixXd a = p.A(t);
  const MatrixXd sig = p.sigma(t);
  const MatrixXd rinv_bt = p.R.ldlt().solve(p.B.transpose());
  const VectorXd rinv_zeta = p.R.ldlt().solve(p.zeta);
  // [A' - (Pi B + S) R^-1 B' + delta Pi sigma sigma'] s
  MatrixXd out = a.transpose() * s - (Pi * p.B + p.S) * (rinv_bt * s);
  if (p.delta != 0.0) out += p.delta * (Pi * (sig * (sig.transpose() * s)));
  out += Pi * (p.b(t) + p.B * rinv_zeta) + p.S * rinv_zeta - p.eta;
  return -out;
}

MatrixTrajectory SolveOffset(const LqgProblem& p, const MatrixTrajectory& Pi,
                             const TimeGrid& grid) {
  if (!(Pi.grid == grid)) throw DimensionMismatch("Pi grid differs");
  const MatrixTrajectory dPi = RiccatiDerivative(p, Pi);
  auto field = [&](double t, const MatrixXd& s) {
    return OffsetRhs(p, t, InterpolateHermite(Pi, dPi, t), s);
  };
  try {
    return IntegrateOde(field, MatrixXd::Zero(p.n, 1), grid,
                        Direction::kBackward);
  } catch (const NonFiniteState& e) {
    throw FiniteEscape(e.time());
  }
}

FeedbackLaw ComputeFeedbackLaw(const LqgProblem& p, const MatrixTrajectory& Pi,
                               const MatrixTrajectory& s) {
  const auto ldlt = p.R.ldlt();
  std::vector<MatrixXd> gains(Pi.values.size()), offsets(Pi.values.size());
  for (size_t i = 0; i < Pi.values.size(); ++i) {
    gains[i] = -ldlt.solve(p.S.transpose() + p.B.transpose() * Pi[i]);
    offsets[i] = -ldlt.solve(p.B.transpose() * s[i] - p.zeta);
  }
  return {MatrixTrajectory(Pi.grid, std::move(gains)),
          MatrixTrajectory(Pi.grid, std::move(offsets))};
}

double ComputeCStar(const LqgProblem& p, const MatrixTrajectory& Pi,
                    const MatrixTrajectory& s, const TimeGrid& grid) {
  const auto ldlt = p.R.ldlt();
  const double d = p.delta;
  auto integrand = [&](int i) {
    const double t = grid.node(i);
    const VectorXd si = s[i].col(0);
    const MatrixXd sig = p.sigma(t);
    const VectorXd v = p.B.transpose() * si - p.zeta;
    const double bracket = 2.0 * si.dot(p.b(t).col(0)) -
                           v.dot(ldlt.solve(v)) +
                           (Pi[i] * sig * sig.transpose()).trace();
    return 0.5 * d * bracket +
           0.5 * d * d * (sig.transpose() * si).squaredNorm();
  };
  double sum = 0.5 * (integrand(0) + integrand(grid.steps()));
  for (int i = 1; i < grid.steps(); ++i) sum += integrand(i);
  const VectorXd s0 = s[0].col(0);
  return sum * grid.step() + 0.5 * d * p.x0.dot(Pi[0] * p.x0) +
         d * s0.dot(p.x0);
}

RiccatiSolution SolveLqg(const LqgProblem& p, const TimeGrid& grid) {
  MatrixTrajectory Pi = SolveRiccati(p, grid);
  MatrixTrajectory s = SolveOffset(p, Pi, grid);
  MatrixTrajectory dPi = RiccatiDerivative(p, Pi);
  std::vector<MatrixXd> ds(s.values.size());
  for (int i = 0; i < grid.size(); ++i) {
    ds[i] = OffsetRhs(p, grid.node(i), Pi[i], s[i]);
  }
  FeedbackLaw law = ComputeFeedbackLaw(p, Pi, s);
  const double c = ComputeCStar(p, Pi, s, grid);
  return RiccatiSolution{std::move(Pi),
                         std::move(dPi),
                         std::move(s),
                         MatrixTrajectory(grid, std::move(ds)),
                         std::move(law.K_gain),
                         std::move(law.k_offset),
                         c};
}

}  // namespace rsmfg
