#ifndef RSMFG_TESTS_FIXTURES_H_
#define RSMFG_TESTS_FIXTURES_H_

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <random>

#include "rsmfg/model.h"

namespace rsmfg::testing {

// Scalar A=0, B=1, Q=1, R=1, sigma=1, Q_hat=0 on [0, 1].
inline LqgProblem ScalarTanh(double delta, double x0 = 1.0) {
  return MakeProblem(MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1),
                     MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1),
                     MatrixXd::Ones(1, 1), delta, VectorXd::Constant(1, x0),
                     1.0);
}

inline MatrixXd RandomMatrix(std::mt19937_64& rng, int rows, int cols,
                             double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline MatrixXd RandomSpd(std::mt19937_64& rng, int n, double floor) {
  const MatrixXd a = RandomMatrix(rng, n, n);
  return a * a.transpose() + floor * MatrixXd::Identity(n, n);
}

// Random instance with S = 0 and all linear terms populated.
inline LqgProblem RandomProblem(std::uint64_t seed, int n, int m, int r,
                                double delta) {
  std::mt19937_64 rng(seed);
  LqgProblem p;
  p.n = n;
  p.m = m;
  p.r = r;
  p.A = TimeFunction::Constant(RandomMatrix(rng, n, n, 0.5));
  p.B = RandomMatrix(rng, n, m);
  p.b = TimeFunction::Constant(RandomMatrix(rng, n, 1, 0.2));
  p.sigma = TimeFunction::Constant(RandomMatrix(rng, n, r, 0.4));
  p.Q = RandomSpd(rng, n, 0.5);
  p.S = MatrixXd::Zero(n, m);
  p.R = RandomSpd(rng, m, 1.0);
  p.eta = RandomMatrix(rng, n, 1, 0.3);
  p.zeta = RandomMatrix(rng, m, 1, 0.3);
  p.Q_hat = RandomSpd(rng, n, 0.1) * 0.5;
  p.delta = delta;
  p.x0 = RandomMatrix(rng, n, 1);
  p.T = 1.0;
  return p;
}

// Pi(0) for constant coefficients and S = 0 from the linear Hamiltonian
// system d/dt [X; Y] = H [X; Y], Pi = Y X^-1, [X; Y](T) = [I; Q_hat].
inline MatrixXd HamiltonianPi0(const LqgProblem& p, bool risk_term) {
  const int n = p.n;
  const MatrixXd A = p.A(0.0);
  const MatrixXd sig = p.sigma(0.0);
  MatrixXd G = p.B * p.R.inverse() * p.B.transpose();
  if (risk_term) G -= p.delta * sig * sig.transpose();
  MatrixXd H(2 * n, 2 * n);
  H << A, -G, -p.Q, -A.transpose();
  MatrixXd end(2 * n, n);
  end << MatrixXd::Identity(n, n), p.Q_hat;
  const MatrixXd start = (-H * p.T).exp() * end;
  return start.bottomRows(n) * start.topRows(n).inverse();
}

inline MatrixXd S1(double v) { return MatrixXd::Constant(1, 1, v); }

// Scalar major-minor game with one minor type and zero linear terms.
struct ScalarGame {
  double A0, F0, B0, sigma0, Q0, R0, H0, delta0, x00;
  double A, F, G, B, sigma, Q, R, H, H_hat, delta, x0;
};

inline MajorMinorSpec MakeScalarGame(const ScalarGame& c, double T = 1.0) {
  const auto k = [](double v) { return TimeFunction::Constant(S1(v)); };
  const MatrixXd z = S1(0.0);
  MajorMinorSpec g;
  g.n = g.m = g.r = 1;
  g.T = T;
  g.major = {S1(c.A0), S1(c.F0), S1(c.B0), k(0.0), k(c.sigma0), S1(c.Q0), z,
             S1(c.R0), z, S1(c.H0), VectorXd::Zero(1), c.delta0,
             VectorXd::Constant(1, c.x00)};
  g.minors.push_back({S1(c.A), S1(c.F), S1(c.G), S1(c.B), k(0.0), k(c.sigma),
                      S1(c.Q), z, S1(c.R), z, S1(c.H), S1(c.H_hat),
                      VectorXd::Zero(1), c.delta, VectorXd::Constant(1, c.x0)});
  g.pi = {1.0};
  return g;
}

inline MajorMinorSpec PaperExample() {
  return MakeScalarGame({-2.5, 2.5, 1, 0.5, 10, 1, 1, 2, 1.0,
                         -5, 2.5, 2.5, 1, 0.5, 7, 1, 0.5, 0.5, 2, 0.5});
}

inline MajorMinorSpec ToyModel() {
  return MakeScalarGame({1, 1, 1, 0.5, 1, 1, 1, 1, 1.0,
                         1, 1, 1, 1, 0.5, 1, 1, 1, 1, 1, 1.0});
}

}  // namespace rsmfg::testing

#endif  // RSMFG_TESTS_FIXTURES_H_
