#include "rsmfg/mfg.h"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "fixtures.h"
#include "rsmfg/errors.h"

namespace rsmfg {
namespace {

using testing::MakeScalarGame;
using testing::PaperExample;
using testing::RandomMatrix;
using testing::RandomSpd;
using testing::ToyModel;

const TimeGrid kGrid(1.0, 2000);
const TimeGrid kCoarse(1.0, 400);

MatrixXd M2(double a, double b, double c, double d) {
  MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

MajorMinorSpec Decoupled() {
  return MakeScalarGame({-1, 0, 1, 0.5, 2, 1, 0, 1, 1.0,
                         -0.5, 0, 0, 1, 0.3, 3, 1, 0, 0, 0.7, -0.5});
}

// Random game with n = 2, m = 1 and K types.
MajorMinorSpec RandomGame(std::uint64_t seed, int K) {
  std::mt19937_64 rng(seed);
  const int n = 2, m = 1;
  const auto c = [](const MatrixXd& v) { return TimeFunction::Constant(v); };
  MajorMinorSpec g;
  g.n = n;
  g.m = m;
  g.r = n;
  g.major = {RandomMatrix(rng, n, n, 0.5), RandomMatrix(rng, n, n, 0.3),
             RandomMatrix(rng, n, m), c(RandomMatrix(rng, n, 1, 0.1)),
             c(RandomMatrix(rng, n, n, 0.3)), RandomSpd(rng, n, 0.2),
             MatrixXd::Zero(n, m), RandomSpd(rng, m, 1.0),
             RandomSpd(rng, n, 0.0) * 0.2, RandomMatrix(rng, n, n, 0.5),
             RandomMatrix(rng, n, 1, 0.2), 0.5, RandomMatrix(rng, n, 1)};
  for (int k = 0; k < K; ++k) {
    g.minors.push_back(
        {RandomMatrix(rng, n, n, 0.5), RandomMatrix(rng, n, n, 0.3),
         RandomMatrix(rng, n, n, 0.3), RandomMatrix(rng, n, m),
         c(RandomMatrix(rng, n, 1, 0.1)), c(RandomMatrix(rng, n, n, 0.3)),
         RandomSpd(rng, n, 0.2), MatrixXd::Zero(n, m), RandomSpd(rng, m, 1.0),
         RandomSpd(rng, n, 0.0) * 0.2, RandomMatrix(rng, n, n, 0.5),
         RandomMatrix(rng, n, n, 0.5), RandomMatrix(rng, n, 1, 0.2), 0.4,
         RandomMatrix(rng, n, 1)});
    g.pi.push_back(1.0 / K);
  }
  return g;
}

TEST(AssembleTest, ToyGoldenMatrices) {
  const MajorMinorSpec g = ToyModel();
  const auto mf = AssembleMeanField(g);
  EXPECT_EQ(mf.A_breve, testing::S1(2.0));
  EXPECT_EQ(mf.G_breve, testing::S1(1.0));
  EXPECT_EQ(mf.B_breve, testing::S1(1.0));
  const auto major = AssembleMajor(g);
  EXPECT_EQ(major.A_tilde, M2(1, 1, 1, 2));
  EXPECT_EQ(major.Q, M2(1, -1, -1, 1));
  const auto minor = AssembleMinor(g, 0);
  MatrixXd q(3, 3);
  q << 1, -1, -1, -1, 1, 1, -1, 1, 1;
  EXPECT_EQ(minor.Q, q);
  EXPECT_EQ(major.dim, 2);
  EXPECT_EQ(minor.dim, 3);
}

TEST(AssembleTest, UncoupledTypesAreBlockDiagonal) {
  MajorMinorSpec g = RandomGame(1, 2);
  g.minors[0].F.setZero();
  g.minors[1].F.setZero();
  const auto mf = AssembleMeanField(g);
  MatrixXd expect = MatrixXd::Zero(4, 4);
  expect.topLeftCorner(2, 2) = g.minors[0].A;
  expect.bottomRightCorner(2, 2) = g.minors[1].A;
  EXPECT_EQ(mf.A_breve, expect);
}

TEST(AssembleTest, MeanFieldRowsUnrolled) {
  MajorMinorSpec g = RandomGame(2, 3);
  g.pi = {0.2, 0.5, 0.3};
  const auto mf = AssembleMeanField(g);
  const VectorXd v = (VectorXd(2) << 0.7, -1.1).finished();
  const VectorXd ones = v.replicate(3, 1);
  const VectorXd got = mf.A_breve * ones;
  for (int k = 0; k < 3; ++k) {
    const VectorXd want = g.minors[k].A * v + g.minors[k].F * v;
    EXPECT_LT((got.segment(2 * k, 2) - want).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(AssembleTest, DimensionsAndDefiniteness) {
  const MajorMinorSpec g = RandomGame(3, 3);
  const auto major = AssembleMajor(g);
  EXPECT_EQ(major.dim, 2 * 4);
  EXPECT_GE(MinSymmetricEigenvalue(major.Q), -1e-10);
  EXPECT_GE(MinSymmetricEigenvalue(major.G), -1e-10);
  EXPECT_EQ(major.Q, major.Q.transpose());
  for (int k = 0; k < 3; ++k) {
    const auto minor = AssembleMinor(g, k);
    EXPECT_EQ(minor.dim, 2 * 5);
    EXPECT_EQ(minor.Sigma.cols(), 2 * g.r);
    EXPECT_GE(MinSymmetricEigenvalue(minor.Q), -1e-10);
    EXPECT_GE(MinSymmetricEigenvalue(minor.G), -1e-10);
  }
  EXPECT_THROW(AssembleMinor(g, 3), OutOfRange);
}

TEST(AssembleTest, ZeroTrackingGivesBlockDiagonalCost) {
  MajorMinorSpec g = RandomGame(4, 1);
  g.major.H.setZero();
  g.major.eta.setZero();
  g.minors[0].H.setZero();
  g.minors[0].H_hat.setZero();
  const auto major = AssembleMajor(g);
  MatrixXd q0 = MatrixXd::Zero(4, 4);
  q0.topLeftCorner(2, 2) = g.major.Q;
  EXPECT_EQ(major.Q, q0);
  EXPECT_EQ(major.eta_bar, VectorXd::Zero(4));
  const auto minor = AssembleMinor(g, 0);
  MatrixXd qk = MatrixXd::Zero(6, 6);
  qk.topLeftCorner(2, 2) = g.minors[0].Q;
  EXPECT_EQ(minor.Q, qk);
}

TEST(AssembleTest, EtaBarSign) {
  MajorMinorSpec g = MakeScalarGame({-1, 1, 1, 0.5, 1, 1, 1, 1, 1.0,
                                     -1, 1, 1, 1, 0.5, 1, 1, 0.5, 0.5, 1, 1.0});
  g.minors[0].eta = VectorXd::Ones(1);
  EXPECT_EQ(AssembleMinor(g, 0).eta_bar, Eigen::Vector3d(1, -0.5, -0.5));
  g.eta_bar_sign = EtaBarSign::kPlus;
  EXPECT_EQ(AssembleMinor(g, 0).eta_bar, Eigen::Vector3d(1, -0.5, 0.5));
}

TEST(ConsistencyTest, PaperExampleConverges) {
  FixedPointOptions opts;
  opts.max_iter = 12;
  const auto start = std::chrono::steady_clock::now();
  const auto eq = SolveConsistency(PaperExample(), kGrid, opts);
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start).count();
  EXPECT_TRUE(eq.log.converged);
  EXPECT_LE(eq.log.iterations, 12);
  EXPECT_LT(secs, 10.0);
  for (std::size_t j = 2; j < eq.log.errors.size(); ++j) {
    EXPECT_LT(eq.log.errors[j], eq.log.errors[j - 1]) << j;
  }
}

TEST(ConsistencyTest, NotConvergedIsRaised) {
  FixedPointOptions opts;
  opts.max_iter = 2;
  try {
    SolveConsistency(PaperExample(), kCoarse, opts);
    FAIL();
  } catch (const NotConverged& e) {
    EXPECT_EQ(e.iterations(), 2u);
    EXPECT_GT(e.last_error(), 1e-10);
  }
  opts.throw_on_failure = false;
  const auto eq = SolveConsistency(PaperExample(), kCoarse, opts);
  EXPECT_FALSE(eq.log.converged);
  EXPECT_THROW(ComputeEquilibriumLaws(eq), NotConverged);
}

TEST(ConsistencyTest, RelaxationReachesSameFixedPoint) {
  FixedPointOptions plain, relaxed;
  relaxed.relaxation = 0.3;
  const auto a = SolveConsistency(PaperExample(), kCoarse, plain);
  const auto b = SolveConsistency(PaperExample(), kCoarse, relaxed);
  EXPECT_LT(SupDistance(a.A_bar(), b.A_bar()), 1e-9);
  EXPECT_LT(SupDistance(a.G_bar(), b.G_bar()), 1e-9);
}

TEST(ConsistencyTest, InvariantsAtFixedPoint) {
  const MajorMinorSpec g = RandomGame(5, 2);
  FixedPointOptions opts;
  const auto eq = SolveConsistency(g, kCoarse, opts);
  ASSERT_TRUE(eq.log.converged);
  EXPECT_EQ(eq.major.Pi.back(), eq.major_system.G);
  EXPECT_EQ(eq.major.s.back(), MatrixXd::Zero(eq.major_system.dim, 1));
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(eq.minors[k].Pi.back(), eq.minor_systems[k].G);
    EXPECT_EQ(eq.minors[k].s.back(), MatrixXd::Zero(eq.minor_systems[k].dim, 1));
    EXPECT_EQ(eq.minors[k].Pi.rows(), 2 * 4);
    for (const auto& v : eq.minors[k].Pi.values) {
      EXPECT_LT(MaxAbs(v - v.transpose()), 1e-10);
    }
  }
  EXPECT_EQ(eq.major.Pi.rows(), 2 * 3);
  for (const auto& v : eq.major.Pi.values) {
    EXPECT_LT(MaxAbs(v - v.transpose()), 1e-10);
  }
  // One more sweep from the fixed point barely moves it.
  const auto again = IterateOnce(g, kCoarse, eq.coeffs);
  EXPECT_LT(SupDistance(again.coeffs.A_bar, eq.A_bar()), 10 * opts.tol);
  EXPECT_LT(SupDistance(again.coeffs.G_bar, eq.G_bar()), 10 * opts.tol);
  EXPECT_LT(SupDistance(again.m_bar(), eq.m_bar()), 10 * opts.tol);
}

TEST(ConsistencyTest, DecoupledReducesToSingleAgent) {
  const MajorMinorSpec g = Decoupled();
  const auto eq = SolveConsistency(g, kCoarse);
  EXPECT_LE(eq.log.iterations, 2);
  for (const auto& v : eq.G_bar().values) EXPECT_EQ(MaxAbs(v), 0.0);
  for (const auto& v : eq.minors[0].Pi.values) {
    EXPECT_EQ(v(0, 1), 0.0);
    EXPECT_EQ(v(0, 2), 0.0);
  }
  const MinorTypeParams& p = g.minors[0];
  LqgProblem single = MakeProblem(p.A, p.B, p.sigma(0.0), p.Q, p.R, p.delta,
                                  p.x0, g.T);
  const auto sol = SolveLqg(single, kCoarse);
  const auto laws = ComputeEquilibriumLaws(eq);
  for (int i = 0; i < kCoarse.size(); ++i) {
    EXPECT_NEAR(laws.minor[0].K_gain[i](0, 0), sol.K_gain[i](0, 0), 1e-12);
    EXPECT_EQ(laws.minor[0].K_gain[i](0, 1), 0.0);
    EXPECT_EQ(laws.minor[0].K_gain[i](0, 2), 0.0);
  }
}

TEST(ConsistencyTest, ToyReducedMeanField) {
  const auto eq = SolveConsistency(ToyModel(), kGrid);
  ASSERT_TRUE(eq.log.converged);
  const auto mc = ComputeMeanControl(ToyModel(), eq);
  for (int i = 0; i < kGrid.size(); i += 50) {
    const MatrixXd& P = eq.minors[0].Pi[i];
    EXPECT_NEAR(eq.A_bar()[i](0, 0), 2.0 - P(0, 0) - P(0, 2), 1e-9);
    EXPECT_NEAR(eq.G_bar()[i](0, 0), 1.0 - P(0, 1), 1e-9);
    EXPECT_NEAR(mc.Xi[i](0, 0), -P(0, 1), 1e-12);
    EXPECT_NEAR(mc.Xi[i](0, 1), -P(0, 0) - P(0, 2), 1e-12);
    EXPECT_NEAR(mc.varsigma[i](0, 0), -eq.minors[0].s[i](0, 0), 1e-12);
  }
}

TEST(ConsistencyTest, MeanControlReproducesCoefficients) {
  const MajorMinorSpec g = RandomGame(6, 2);
  const auto eq = SolveConsistency(g, kCoarse);
  const auto mf = AssembleMeanField(g);
  const auto mc = ComputeMeanControl(g, eq);
  const MatrixTrajectory m_bar = eq.m_bar();
  const int n = g.n;
  for (int i = 0; i < kCoarse.size(); i += 20) {
    const MatrixXd& Xi = mc.Xi[i];
    const MatrixXd A = mf.A_breve + mf.B_breve * Xi.rightCols(2 * n);
    const MatrixXd G = mf.G_breve + mf.B_breve * Xi.leftCols(n);
    const MatrixXd m = mf.m_breve(kCoarse.node(i)) + mf.B_breve * mc.varsigma[i];
    EXPECT_LT(MaxAbs(A - eq.A_bar()[i]), 1e-12);
    EXPECT_LT(MaxAbs(G - eq.G_bar()[i]), 1e-12);
    EXPECT_LT(MaxAbs(m - m_bar[i]), 1e-12);
  }
}

TEST(ConsistencyTest, RiskNeutralLimit) {
  MajorMinorSpec g = PaperExample();
  g.major.delta = g.minors[0].delta = 1e-8;
  const auto eq = SolveConsistency(g, kCoarse);
  // Deleting the noise removes every delta term from the equations.
  MajorMinorSpec d = g;
  d.major.sigma = d.minors[0].sigma = TimeFunction::Constant(testing::S1(0.0));
  const auto ref = SolveConsistency(d, kCoarse);
  EXPECT_LT(SupDistance(eq.major.Pi, ref.major.Pi), 1e-6);
  EXPECT_LT(SupDistance(eq.minors[0].Pi, ref.minors[0].Pi), 1e-6);
  EXPECT_LT(SupDistance(eq.A_bar(), ref.A_bar()), 1e-6);
}

TEST(MeanFieldTrajectoryTest, ZeroAndClosedForm) {
  const auto eq = SolveConsistency(Decoupled(), kCoarse);
  auto zero = MeanFieldTrajectory(eq, TimeFunction::Constant(testing::S1(1.0)),
                                  VectorXd::Zero(1));
  for (const auto& v : zero.values) EXPECT_EQ(v(0, 0), 0.0);

  // Constant coefficients after overriding them by hand.
  auto fixed = eq;
  fixed.coeffs.A_bar = MatrixTrajectory(kCoarse, testing::S1(-0.8));
  fixed.coeffs.dA_bar = MatrixTrajectory(kCoarse, testing::S1(0.0));
  fixed.coeffs.G_bar = MatrixTrajectory(kCoarse, testing::S1(0.5));
  fixed.coeffs.dG_bar = MatrixTrajectory(kCoarse, testing::S1(0.0));
  fixed.coeffs.m_rest = MatrixTrajectory(kCoarse, testing::S1(0.2));
  fixed.coeffs.dm_rest = MatrixTrajectory(kCoarse, testing::S1(0.0));
  auto traj = MeanFieldTrajectory(
      fixed, TimeFunction::Constant(testing::S1(1.0)), VectorXd::Ones(1));
  // x' = -0.8 x + 0.7, x(0) = 1.
  const double c = 0.7 / 0.8;
  EXPECT_NEAR(traj.back()(0, 0), c + (1.0 - c) * std::exp(-0.8), 1e-8);
}

TEST(MeanFieldTrajectoryTest, PaperExampleFiniteAndReproducible) {
  const auto eq = SolveConsistency(PaperExample(), kCoarse);
  const auto x0 = TimeFunction::Constant(testing::S1(1.0));
  const auto a = MeanFieldTrajectory(eq, x0, VectorXd::Constant(1, 0.5));
  const auto b = MeanFieldTrajectory(eq, x0, VectorXd::Constant(1, 0.5));
  for (int i = 0; i < kCoarse.size(); ++i) {
    EXPECT_TRUE(std::isfinite(a[i](0, 0)));
    EXPECT_EQ(a[i], b[i]);
  }
}

}  // namespace
}  // namespace rsmfg
