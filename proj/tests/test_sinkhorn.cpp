#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ewca/sinkhorn.hpp"
#include "oracles.hpp"

using namespace ewca;

namespace {

CostMatrix random_cost(std::mt19937_64& gen, Index n, Index m) {
  const Matrix x = oracle::gaussian(gen, 3, n);
  const Matrix y = oracle::gaussian(gen, 3, m);
  return squared_l2_cost(DataMatrix(x), DataMatrix(y));
}

Histogram random_histogram(std::mt19937_64& gen, Index n) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Vector w(n);
  for (Index i = 0; i < n; ++i) w(i) = u(gen);
  w /= w.sum();
  // absorb the rounding of the division into the largest entry
  Index imax = 0;
  w.maxCoeff(&imax);
  w(imax) += 1.0 - w.sum();
  return Histogram(w);
}

}  // namespace

TEST(SquaredL2Cost, MatchesDefinition) {
  Matrix x(2, 2), y(2, 1);
  x << 0, 1, 0, 1;
  y << 3, 4;
  const CostMatrix c = squared_l2_cost(DataMatrix(x), DataMatrix(y));
  EXPECT_DOUBLE_EQ(c.values()(0, 0), 25.0);
  EXPECT_DOUBLE_EQ(c.values()(1, 0), 13.0);
  EXPECT_THROW(squared_l2_cost(DataMatrix(x), DataMatrix(Matrix::Zero(3, 1))), DimensionError);
}

TEST(ProjectionCost, MatchesDirectDifference) {
  std::mt19937_64 gen(3);
  const Matrix x = oracle::gaussian(gen, 6, 9);
  const Matrix u = oracle::random_stiefel(gen, 6, 2);
  const CostMatrix c = projection_cost(DataMatrix(x), StiefelBasis(u));
  const Matrix proj = u * u.transpose() * x;
  for (Index i = 0; i < 9; ++i) {
    for (Index j = 0; j < 9; ++j) {
      EXPECT_NEAR(c.values()(i, j), (x.col(i) - proj.col(j)).squaredNorm(), 1e-12);
    }
  }
}

TEST(MeanPairwiseCost, MatchesDoubleSum) {
  std::mt19937_64 gen(4);
  const Matrix x = oracle::gaussian(gen, 4, 11);
  double total = 0.0;
  for (Index i = 0; i < 11; ++i) {
    for (Index j = 0; j < 11; ++j) total += (x.col(i) - x.col(j)).squaredNorm();
  }
  EXPECT_NEAR(mean_pairwise_cost(DataMatrix(x)), total / 121.0, 1e-12);
}

// Cost [[0,1],[1,0]], uniform marginals: by symmetry P = [[p,q],[q,p]] with
// q / p = exp(-1/eps) and p + q = 1/2.
TEST(Sinkhorn, TwoByTwoClosedForm) {
  Matrix c(2, 2);
  c << 0, 1, 1, 0;
  const Histogram h = Histogram::uniform(2);
  for (double eps : {0.1, 0.5, 2.0}) {
    const double kappa = std::exp(-1.0 / eps);
    const double p = 0.5 / (1.0 + kappa);
    const double q = 0.5 * kappa / (1.0 + kappa);
    for (SinkhornMode mode : {SinkhornMode::Standard, SinkhornMode::Log}) {
      SinkhornOptions opt;
      opt.tol = 1e-14;
      opt.mode = mode;
      const SinkhornResult r = sinkhorn_knopp(CostMatrix(c), h, h, eps, opt);
      EXPECT_NEAR(r.plan.values()(0, 0), p, 1e-12);
      EXPECT_NEAR(r.plan.values()(1, 1), p, 1e-12);
      EXPECT_NEAR(r.plan.values()(0, 1), q, 1e-12);
      EXPECT_NEAR(r.plan.values()(1, 0), q, 1e-12);
    }
  }
}

TEST(Sinkhorn, ConstantCostGivesProductPlan) {
  std::mt19937_64 gen(5);
  const Histogram a = random_histogram(gen, 5);
  const Histogram b = random_histogram(gen, 7);
  const SinkhornResult r = sinkhorn_knopp(CostMatrix(Matrix::Constant(5, 7, 3.0)), a, b, 0.7);
  const Matrix expected = a.weights() * b.weights().transpose();
  EXPECT_LT((r.plan.values() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sinkhorn, ConvergedPlansMeetMarginals) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 10; ++trial) {
    const CostMatrix c = random_cost(gen, 8, 6);
    const Histogram a = random_histogram(gen, 8);
    const Histogram b = random_histogram(gen, 6);
    const SinkhornResult r = sinkhorn_knopp(c, a, b, 0.5);
    ASSERT_TRUE(r.state.converged);
    EXPECT_LE(check_plan(r.plan).max_violation(), 1e-9);
    EXPECT_GE(r.plan.values().minCoeff(), 0.0);
  }
}

// The optimum has Gibbs form P_ij = a_i b_j exp((f_i + g_j - C_ij) / eps), so
// eps log(P_ij / (a_i b_j)) + C_ij has zero mixed second differences.
TEST(Sinkhorn, PlanHasGibbsStructure) {
  std::mt19937_64 gen(7);
  const CostMatrix c = random_cost(gen, 6, 5);
  const Histogram a = random_histogram(gen, 6);
  const Histogram b = random_histogram(gen, 5);
  const double eps = 0.8;
  const SinkhornResult r = sinkhorn_knopp(c, a, b, eps);
  Matrix l(6, 5);
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 5; ++j) {
      l(i, j) = eps * std::log(r.plan.values()(i, j) / (a.weights()(i) * b.weights()(j))) +
                c.values()(i, j);
    }
  }
  for (Index i = 1; i < 6; ++i) {
    for (Index j = 1; j < 5; ++j) {
      EXPECT_NEAR(l(i, j) - l(i, 0) - l(0, j) + l(0, 0), 0.0, 1e-10);
    }
  }
}

// Strong duality: at the optimum the primal value equals <f, a> + <g, b>
// with f = eps log u + const, g = eps log v - const.
TEST(Sinkhorn, PrimalMatchesDual) {
  std::mt19937_64 gen(8);
  const CostMatrix c = random_cost(gen, 7, 7);
  const Histogram a = random_histogram(gen, 7);
  const Histogram b = random_histogram(gen, 7);
  const double eps = 0.6;
  SinkhornOptions opt;
  opt.tol = 1e-13;
  const SinkhornResult r = sinkhorn_knopp(c, a, b, eps, opt);
  // P = diag(u) K diag(v) = a b^T exp((f + g - C)/eps) with f = eps(log u - log a)
  const Vector f = eps * (r.state.log_u - a.weights().array().log().matrix());
  const Vector g = eps * (r.state.log_v - b.weights().array().log().matrix());
  const double dual = f.dot(a.weights()) + g.dot(b.weights());
  EXPECT_NEAR(entropic_ot_value(r.plan, c, a, b, eps), dual, 1e-10);
}

TEST(Sinkhorn, LogAndStandardAgree) {
  std::mt19937_64 gen(9);
  const CostMatrix c = random_cost(gen, 9, 9);
  const Histogram h = Histogram::uniform(9);
  SinkhornOptions s;
  s.mode = SinkhornMode::Standard;
  s.tol = 1e-13;
  SinkhornOptions l = s;
  l.mode = SinkhornMode::Log;
  const SinkhornResult rs = sinkhorn_knopp(c, h, h, 0.4, s);
  const SinkhornResult rl = sinkhorn_knopp(c, h, h, 0.4, l);
  EXPECT_FALSE(rs.state.log_domain);
  EXPECT_TRUE(rl.state.log_domain);
  EXPECT_LT((rs.plan.values() - rl.plan.values()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sinkhorn, SymmetricCostGivesSymmetricPlan) {
  std::mt19937_64 gen(10);
  const Matrix x = oracle::gaussian(gen, 2, 8);
  const CostMatrix c = squared_l2_cost(DataMatrix(x), DataMatrix(x));
  const Histogram h = Histogram::uniform(8);
  SinkhornOptions opt;
  opt.tol = 1e-13;
  const SinkhornResult r = sinkhorn_knopp(c, h, h, 0.3, opt);
  EXPECT_LT((r.plan.values() - r.plan.values().transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sinkhorn, LargeEpsilonApproachesProduct) {
  std::mt19937_64 gen(11);
  const CostMatrix c = random_cost(gen, 6, 6);
  const Histogram h = Histogram::uniform(6);
  const SinkhornResult r = sinkhorn_knopp(c, h, h, 1e8);
  EXPECT_LT((r.plan.values() - Matrix::Constant(6, 6, 1.0 / 36.0)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Sinkhorn, TinyEpsilonSwitchesToLogDomain) {
  std::mt19937_64 gen(12);
  const Matrix x = oracle::gaussian(gen, 2, 6);
  const CostMatrix c = squared_l2_cost(DataMatrix(x), DataMatrix(x));
  const Histogram h = Histogram::uniform(6);
  const SinkhornResult r = sinkhorn_knopp(c, h, h, 1e-6);
  EXPECT_TRUE(r.state.log_domain);
  EXPECT_TRUE(r.state.converged);
  // self-transport with distinct points: the identity coupling
  EXPECT_LT((r.plan.values() - Matrix::Identity(6, 6) / 6.0).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Sinkhorn, StandardModeReportsUnderflow) {
  Matrix c(2, 2);
  c << 0, 1e6, 1e6, 1e6;
  const Histogram h = Histogram::uniform(2);
  SinkhornOptions opt;
  opt.mode = SinkhornMode::Standard;
  EXPECT_THROW(sinkhorn_knopp(CostMatrix(c), h, h, 1.0, opt), NumericalUnderflow);
}

TEST(Sinkhorn, WarmStartSavesIterations) {
  std::mt19937_64 gen(13);
  const CostMatrix c = random_cost(gen, 10, 10);
  const Histogram h = Histogram::uniform(10);
  const SinkhornResult cold = sinkhorn_knopp(c, h, h, 1.0);
  ASSERT_TRUE(cold.state.converged);
  EXPECT_GT(cold.state.iterations, 2);
  SinkhornOptions warm;
  warm.warm_start = &cold.state;
  const SinkhornResult again = sinkhorn_knopp(c, h, h, 1.0, warm);
  EXPECT_LE(again.state.iterations, 2);
  EXPECT_LT((again.plan.values() - cold.plan.values()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Sinkhorn, ReportsNonConvergence) {
  std::mt19937_64 gen(14);
  const CostMatrix c = random_cost(gen, 10, 10);
  const Histogram h = Histogram::uniform(10);
  SinkhornOptions opt;
  opt.max_iter = 1;
  opt.tol = 1e-15;
  opt.record_trace = true;
  const SinkhornResult r = sinkhorn_knopp(c, h, h, 0.05, opt);
  EXPECT_FALSE(r.state.converged);
  EXPECT_EQ(r.state.iterations, 1);
  EXPECT_EQ(r.state.error_trace.size(), 1u);
}

TEST(Sinkhorn, RejectsBadInputs) {
  const Histogram h = Histogram::uniform(2);
  const CostMatrix c(Matrix::Zero(2, 2));
  EXPECT_THROW(sinkhorn_knopp(c, h, h, 0.0), ConfigError);
  EXPECT_THROW(sinkhorn_knopp(c, Histogram::uniform(3), h, 1.0), DimensionError);
  EXPECT_THROW(CostMatrix(-Matrix::Ones(2, 2)), ConfigError);
}

TEST(Entropy, MatchesOracle) {
  std::mt19937_64 gen(15);
  const Matrix p = oracle::random_coupling(gen, 6);
  const Histogram h = Histogram::uniform(6);
  EXPECT_NEAR(plan_entropy(TransportPlan(p, h, h)), oracle::entropy_uniform(p), 1e-13);
  EXPECT_NEAR(plan_entropy(TransportPlan(Matrix::Constant(6, 6, 1.0 / 36), h, h)), 0.0, 1e-15);
  EXPECT_NEAR(plan_entropy(TransportPlan(Matrix::Identity(6, 6) / 6.0, h, h)), -std::log(6.0),
              1e-14);
}
