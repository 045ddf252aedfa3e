#include "rsmfg/population.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.h"
#include "rsmfg/errors.h"

namespace rsmfg {
namespace {

using testing::MakeScalarGame;
using testing::PaperExample;
using testing::S1;

// Minor agents that neither see nor are seen by anyone.
MajorMinorSpec Decoupled() {
  return MakeScalarGame({-1, 0, 1, 0.5, 2, 1, 0, 1, 1.0,
                         -0.5, 0, 0, 1, 0.3, 3, 1, 0, 0, 0.7, -0.5});
}

MajorMinorSpec TwoTypes() {
  MajorMinorSpec g = PaperExample();
  MinorTypeParams second = g.minors[0];
  second.A = S1(-3.0);
  second.x0 = VectorXd::Constant(1, -0.25);
  second.delta = 1.0;
  g.minors.push_back(second);
  g.pi = {0.6, 0.4};
  return g;
}

TEST(ApportionTest, SumsAndBound) {
  const std::vector<double> pi = {0.5, 0.3, 0.2};
  for (int N : {1, 2, 3, 5, 7, 20, 80, 101}) {
    const auto counts = Apportion(N, pi);
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), 0), N);
    EXPECT_LE(ApportionmentError(counts, pi), 3.0 / N);
    EXPECT_LT(ApportionmentError(counts, pi), 1.0 / N + 1e-15);
  }
}

TEST(ApportionTest, TiesGoToLowerIndex) {
  EXPECT_EQ(Apportion(1, {0.5, 0.5}), (std::vector<int>{1, 0}));
  EXPECT_EQ(Apportion(3, {0.5, 0.5}), (std::vector<int>{2, 1}));
  EXPECT_EQ(Apportion(3, {0.25, 0.25, 0.5}), (std::vector<int>{1, 1, 1}));
}

TEST(ApportionTest, RejectsBadInput) {
  EXPECT_THROW(Apportion(0, {1.0}), OutOfRange);
  EXPECT_THROW(Apportion(3, {}), OutOfRange);
}

class PopulationTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    example_ = new MajorMinorSpec(PaperExample());
    example_eq_ = new MfgEquilibrium(SolveConsistency(*example_, TimeGrid(1.0, 400)));
  }
  static void TearDownTestSuite() {
    delete example_eq_;
    delete example_;
  }
  static MajorMinorSpec* example_;
  static MfgEquilibrium* example_eq_;
};
MajorMinorSpec* PopulationTest::example_ = nullptr;
MfgEquilibrium* PopulationTest::example_eq_ = nullptr;

TEST_F(PopulationTest, DecoupledSingleAgentMatchesSimulate) {
  const MajorMinorSpec g = Decoupled();
  const TimeGrid grid(1.0, 400);
  const MfgEquilibrium eq = SolveConsistency(g, grid);
  PopulationOptions o;
  o.n_agents = 1;
  o.n_reps = 50;
  o.seed = 11;
  o.coarse_steps = 0;
  const PopulationRun run = SimulatePopulation(g, eq, o);

  const MinorTypeParams& p = g.minors[0];
  const LqgProblem single =
      MakeProblem(p.A, p.B, S1(0.3), p.Q, p.R, p.delta, p.x0, g.T);
  const RiccatiSolution sol = SolveLqg(single, grid);
  const PathEnsemble paths =
      Simulate(single, {sol.K_gain, sol.k_offset}, o.n_reps, o.seed);
  for (int r = 0; r < o.n_reps; ++r) {
    EXPECT_NEAR(run.minor_log_cost[0][r], paths.log_weights[r], 1e-12);
  }
}

TEST_F(PopulationTest, NoiselessPopulationFollowsMeanField) {
  MajorMinorSpec g = TwoTypes();
  g.major.sigma = TimeFunction::Constant(S1(0.0));
  for (auto& t : g.minors) t.sigma = TimeFunction::Constant(S1(0.0));
  const MfgEquilibrium eq = SolveConsistency(g, TimeGrid(1.0, 400));
  PopulationOptions o;
  o.n_agents = 10;
  o.n_reps = 2;
  o.coarse_steps = 0;
  o.keep_paths = true;
  const PopulationRun run = SimulatePopulation(g, eq, o);
  ASSERT_EQ(run.x_avg_paths.size(), run.x_bar_paths.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < run.x_avg_paths.size(); ++i) {
    worst = std::max(worst, std::abs(run.x_avg_paths[i] - run.x_bar_paths[i]));
  }
  EXPECT_LT(worst, 1e-4);
  // N = 10 splits pi = (0.6, 0.4) exactly.
  EXPECT_EQ(run.counts, (std::vector<int>{6, 4}));
}

TEST_F(PopulationTest, PermutedStreamsLeaveSymmetricOutputsUnchanged) {
  const MajorMinorSpec g = TwoTypes();
  const MfgEquilibrium eq = SolveConsistency(g, TimeGrid(1.0, 400));
  PopulationOptions o;
  o.n_agents = 7;
  o.n_reps = 20;
  o.seed = 5;
  const PopulationRun a = SimulatePopulation(g, eq, o);
  // Counts are {4, 3}; permute the untracked agents within each type.
  o.streams = {0, 3, 1, 2, 4, 6, 5};
  const PopulationRun b = SimulatePopulation(g, eq, o);
  EXPECT_EQ(a.major_log_cost, b.major_log_cost);
  EXPECT_EQ(a.fluctuation_end, b.fluctuation_end);
  EXPECT_EQ(a.fluctuation_max, b.fluctuation_max);
  EXPECT_EQ(a.minor_log_cost, b.minor_log_cost);
  // Swapping a tracked agent's stream changes its own cost.
  o.streams = {1, 0, 2, 3, 4, 5, 6};
  const PopulationRun c = SimulatePopulation(g, eq, o);
  EXPECT_NE(a.minor_log_cost[0], c.minor_log_cost[0]);
}

TEST_F(PopulationTest, StreamsMustCoverEverySlot) {
  PopulationOptions o;
  o.n_agents = 3;
  o.n_reps = 1;
  o.streams = {0, 1};
  EXPECT_THROW(SimulatePopulation(*example_, *example_eq_, o), DimensionMismatch);
}

TEST_F(PopulationTest, ThreadCountDoesNotChangeResults) {
  PopulationOptions o;
  o.n_agents = 6;
  o.n_reps = 40;
  o.seed = 9;
  const PopulationRun a = SimulatePopulation(*example_, *example_eq_, o);
  o.threads = 3;
  const PopulationRun b = SimulatePopulation(*example_, *example_eq_, o);
  EXPECT_EQ(a.major_log_cost, b.major_log_cost);
  EXPECT_EQ(a.minor_log_cost, b.minor_log_cost);
  EXPECT_EQ(a.fluctuation_end, b.fluctuation_end);
}

TEST_F(PopulationTest, EulerMaruyamaAgreesStatistically) {
  PopulationOptions o;
  o.n_agents = 5;
  o.n_reps = 4000;
  o.seed = 3;
  const auto heun = FiniteCost(SimulatePopulation(*example_, *example_eq_, o),
                               AgentRole::Major());
  o.scheme = SdeScheme::kEulerMaruyama;
  const auto em = FiniteCost(SimulatePopulation(*example_, *example_eq_, o),
                             AgentRole::Major());
  EXPECT_LT(std::abs(heun.log_value - em.log_value),
            3 * std::hypot(heun.std_error, em.std_error) + 0.02);
}

TEST_F(PopulationTest, ZeroCostGameHasZeroLogCost) {
  MajorMinorSpec g = PaperExample();
  g.major.Q = S1(0.0);
  g.major.H = S1(0.0);
  g.minors[0].Q = S1(0.0);
  g.minors[0].H = S1(0.0);
  g.minors[0].H_hat = S1(0.0);
  const MfgEquilibrium eq = SolveConsistency(g, TimeGrid(1.0, 200));
  PopulationOptions o;
  o.n_agents = 4;
  o.n_reps = 10;
  const PopulationRun run = SimulatePopulation(g, eq, o);
  for (double v : run.major_log_cost) EXPECT_EQ(v, 0.0);
  for (double v : run.minor_log_cost[0]) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(FiniteCost(run, AgentRole::Minor(0)).log_value, 0.0);
}

TEST_F(PopulationTest, LimitModeMajorCostMatchesValue) {
  PopulationOptions o;
  o.n_agents = 0;
  o.n_reps = 20000;
  o.seed = 21;
  o.coarse_steps = 0;
  const PopulationRun run = SimulatePopulation(*example_, *example_eq_, o);
  const auto est = FiniteCost(run, AgentRole::Major());
  EXPECT_LE(std::abs(est.log_value - example_eq_->major.C_star),
            3 * est.std_error);
  for (double v : run.fluctuation_end) EXPECT_EQ(v, 0.0);
}

TEST_F(PopulationTest, FluctuationsShrinkLikeInverseSqrtN) {
  std::vector<double> Ns, means;
  for (int N : {5, 20, 80}) {
    PopulationOptions o;
    o.n_agents = N;
    o.n_reps = 600;
    o.seed = 17;
    const PopulationRun run = SimulatePopulation(*example_, *example_eq_, o);
    Ns.push_back(N);
    means.push_back(MeanOf(run.fluctuation_end).mean);
  }
  const double slope = LogLogSlope(Ns, means);
  EXPECT_GE(slope, -0.65);
  EXPECT_LE(slope, -0.35);
}

TEST_F(PopulationTest, EquilibriumLawHasZeroGap) {
  PopulationOptions o;
  o.n_agents = 5;
  o.n_reps = 200;
  o.seed = 2;
  for (AgentRole a : {AgentRole::Major(), AgentRole::Minor(0)}) {
    const std::vector<Deviation> family = {{"same", EquilibriumLaw(*example_eq_, a)}};
    const NashGapReport rep = NashGap(*example_, *example_eq_, a, family, o);
    EXPECT_EQ(rep.deviations[0].improvement, 0.0);
    EXPECT_EQ(rep.gap, 0.0);
    EXPECT_EQ(rep.gap_se, 0.0);
  }
}

TEST_F(PopulationTest, DeviationsDoNotPayInTheLargePopulation) {
  PopulationOptions o;
  o.n_agents = 20;
  o.n_reps = 1000;
  o.seed = 4;
  const PopulationRun eq_run = SimulatePopulation(*example_, *example_eq_, o);
  for (AgentRole a : {AgentRole::Major(), AgentRole::Minor(0)}) {
    const auto family = DeviationFamily(EquilibriumLaw(*example_eq_, a));
    ASSERT_EQ(family.size(), 7u);
    const NashGapReport rep = NashGap(*example_, *example_eq_, a, family, o, &eq_run);
    EXPECT_LE(rep.gap, 3 * rep.gap_se + 1e-3) << a.Name();
    // The offset shifts are far from optimal.
    for (const auto& d : rep.deviations) {
      if (d.name.rfind("offset", 0) == 0) {
        EXPECT_LT(d.improvement + 3 * d.std_error, 0.0) << d.name;
      }
    }
  }
}

TEST_F(PopulationTest, OverrideMustMatchAgent) {
  PopulationOptions o;
  o.n_agents = 2;
  o.n_reps = 1;
  FeedbackLaw law = EquilibriumLaw(*example_eq_, AgentRole::Major());
  EXPECT_THROW(SimulatePopulation(*example_, *example_eq_, o,
                                  Override{AgentRole::Minor(0), law}),
               DimensionMismatch);
  EXPECT_THROW(SimulatePopulation(*example_, *example_eq_, o,
                                  Override{AgentRole::Minor(3), law}),
               OutOfRange);
}

TEST_F(PopulationTest, RejectsUnconvergedEquilibrium) {
  FixedPointOptions fp;
  fp.max_iter = 1;
  fp.throw_on_failure = false;
  const MfgEquilibrium eq = SolveConsistency(*example_, TimeGrid(1.0, 100), fp);
  PopulationOptions o;
  o.n_agents = 2;
  o.n_reps = 1;
  EXPECT_THROW(SimulatePopulation(*example_, eq, o), NotConverged);
}

TEST(GapTest, NonincreasingWithinPooledError) {
  NashGapReport a, b, c;
  a.gap = 0.010; a.gap_se = 0.001;
  b.gap = 0.012; b.gap_se = 0.001;
  c.gap = 0.030; c.gap_se = 0.001;
  EXPECT_TRUE(GapsNonincreasing({a, b}));
  EXPECT_FALSE(GapsNonincreasing({a, c}));
  EXPECT_TRUE(GapsNonincreasing({c, b, a}));
}

TEST(GapTest, LogLogSlopeOfPowerLaw) {
  const std::vector<double> x = {5, 20, 80};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -0.5));
  EXPECT_NEAR(LogLogSlope(x, y), -0.5, 1e-12);
}

TEST(GapTest, DeviationFamilyShapes) {
  const TimeGrid grid(1.0, 20);
  const FeedbackLaw law{MatrixTrajectory(grid, S1(2.0)),
                        MatrixTrajectory(grid, S1(1.0))};
  const auto family = DeviationFamily(law);
  ASSERT_EQ(family.size(), 7u);
  EXPECT_DOUBLE_EQ(family[0].law.K_gain[3](0, 0), 1.6);
  EXPECT_DOUBLE_EQ(family[3].law.K_gain[3](0, 0), 2.4);
  EXPECT_DOUBLE_EQ(family[4].law.k_offset[3](0, 0), 1.1);
  EXPECT_DOUBLE_EQ(family[5].law.k_offset[3](0, 0), 0.9);
}

}  // namespace
}  // namespace rsmfg
