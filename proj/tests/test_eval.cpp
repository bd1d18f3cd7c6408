#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "ewca/eval.hpp"
#include "oracles.hpp"

using namespace ewca;

namespace {

LabeledDataset two_lines(Index n_per_class, double gap, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Matrix x = oracle::gaussian(gen, 3, 2 * n_per_class, 0.1);
  std::vector<int> y;
  for (Index j = 0; j < 2 * n_per_class; ++j) {
    const int label = j < n_per_class ? 0 : 1;
    x(0, j) += label * gap;
    y.push_back(label);
  }
  return LabeledDataset(DataMatrix(x), y);
}

}  // namespace

TEST(OneNn, SpecExamples) {
  Matrix train(2, 2);
  train << 0, 10, 0, 10;
  Matrix test(2, 1);
  test << 1, 1;
  EXPECT_DOUBLE_EQ(one_nn_error(train, {0, 1}, test, {0}), 0.0);
  EXPECT_DOUBLE_EQ(one_nn_error(train, {0, 1}, test, {1}), 1.0);
  // a test point equal to a train point takes that point's label
  EXPECT_DOUBLE_EQ(one_nn_error(train, {0, 1}, train, {0, 1}), 0.0);
}

TEST(OneNn, TiesGoToLowestIndex) {
  Matrix train(1, 2);
  train << -1, 1;
  Matrix test = Matrix::Zero(1, 1);
  EXPECT_DOUBLE_EQ(one_nn_error(train, {4, 7}, test, {4}), 0.0);
  EXPECT_DOUBLE_EQ(one_nn_error(train, {7, 4}, test, {4}), 1.0);
}

TEST(OneNn, MatchesExhaustiveOracle) {
  std::mt19937_64 gen(50);
  const Matrix train = oracle::gaussian(gen, 4, 30);
  const Matrix test = oracle::gaussian(gen, 4, 20);
  std::vector<int> ytrain, ytest;
  std::uniform_int_distribution<int> lab(0, 2);
  for (int i = 0; i < 30; ++i) ytrain.push_back(lab(gen));
  for (int i = 0; i < 20; ++i) ytest.push_back(lab(gen));
  EXPECT_DOUBLE_EQ(one_nn_error(train, ytrain, test, ytest),
                   oracle::one_nn(train, ytrain, test, ytest));
}

TEST(OneNn, Errors) {
  EXPECT_THROW(one_nn_error(Matrix(2, 0), {}, Matrix::Zero(2, 1), {0}), EmptySet);
  EXPECT_THROW(one_nn_error(Matrix::Zero(2, 1), {0}, Matrix::Zero(3, 1), {0}), DimensionError);
}

TEST(LabeledDataset, NeedsTwoSamplesPerClass) {
  EXPECT_THROW(LabeledDataset(DataMatrix(Matrix::Zero(1, 3)), {0, 0, 1}), ConfigError);
  EXPECT_THROW(LabeledDataset(DataMatrix(Matrix::Zero(1, 3)), {0, 0}), DimensionError);
}

TEST(Splits, StratifiedDeterministicAndDisjoint) {
  std::vector<int> labels;
  for (int i = 0; i < 13; ++i) labels.push_back(0);
  for (int i = 0; i < 8; ++i) labels.push_back(1);
  for (int i = 0; i < 2; ++i) labels.push_back(2);
  const SplitSpec spec{0.3, 25, 9};
  const std::vector<Split> a = stratified_splits(labels, spec);
  const std::vector<Split> b = stratified_splits(labels, spec);
  ASSERT_EQ(a.size(), 25u);
  for (std::size_t s = 0; s < a.size(); ++s) {
    EXPECT_EQ(a[s].train, b[s].train);
    EXPECT_EQ(a[s].test, b[s].test);
    EXPECT_EQ(a[s].train.size() + a[s].test.size(), labels.size());
    std::map<int, int> counts;
    for (Index i : a[s].train) ++counts[labels[static_cast<std::size_t>(i)]];
    EXPECT_LE(std::abs(counts[0] - 0.3 * 13), 1.0);
    EXPECT_LE(std::abs(counts[1] - 0.3 * 8), 1.0);
    EXPECT_EQ(counts[2], 1);  // clamped so the test side keeps a sample
    std::vector<bool> seen(labels.size(), false);
    for (Index i : a[s].train) seen[static_cast<std::size_t>(i)] = true;
    for (Index i : a[s].test) {
      EXPECT_FALSE(seen[static_cast<std::size_t>(i)]);
    }
  }
  // different seeds give different splits
  const std::vector<Split> c = stratified_splits(labels, SplitSpec{0.3, 25, 10});
  bool differs = false;
  for (std::size_t s = 0; s < a.size(); ++s) differs = differs || a[s].train != c[s].train;
  EXPECT_TRUE(differs);
  EXPECT_THROW(stratified_splits(labels, SplitSpec{1.0, 5, 0}), ConfigError);
  EXPECT_THROW(stratified_splits(labels, SplitSpec{0.5, 0, 0}), ConfigError);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.25), 7.0);
  EXPECT_THROW(quantile({}, 0.5), EmptySet);
}

TEST(EvaluateEmbedding, SeparatedClustersInSpan) {
  const LabeledDataset ds = two_lines(20, 5.0, 51);
  const StiefelBasis u(Matrix::Identity(3, 1));
  const EvalReport r = evaluate_embedding(ds, u, SplitSpec{0.5, 20, 1});
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_LE(r.q1, r.median);
  EXPECT_LE(r.median, r.q3);
}

TEST(EvaluateEmbedding, ShuffledLabelsAreChance) {
  std::mt19937_64 gen(52);
  const Matrix x = oracle::gaussian(gen, 2, 400);
  std::vector<int> y(400);
  for (int i = 0; i < 400; ++i) y[static_cast<std::size_t>(i)] = i % 2;
  std::shuffle(y.begin(), y.end(), gen);
  const EvalReport r = evaluate_embedding(LabeledDataset(DataMatrix(x), y), std::nullopt,
                                          SplitSpec{0.5, 30, 2});
  EXPECT_NEAR(r.mean, 0.5, 0.05);
}

// A k = d - 1 basis that drops only a constant coordinate keeps all
// distances, so the result equals the raw baseline split for split.
TEST(EvaluateEmbedding, DroppingConstantCoordinateMatchesRaw) {
  std::mt19937_64 gen(53);
  Matrix x = oracle::gaussian(gen, 3, 40);
  x.row(2).setConstant(1.5);
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) y.push_back(x(0, i) > 0 ? 1 : 0);
  const LabeledDataset ds(DataMatrix(x), y);
  const SplitSpec spec{0.5, 15, 3};
  const EvalReport raw = evaluate_embedding(ds, std::nullopt, spec);
  const EvalReport proj = evaluate_embedding(ds, StiefelBasis(Matrix::Identity(3, 2)), spec);
  EXPECT_EQ(raw.per_split_error, proj.per_split_error);
}

TEST(EvaluateMethod, ParallelMatchesSerial) {
  const LabeledDataset ds = make_synthetic_clusters(10, 4, 3, 2.0, 54);
  SolverConfig cfg;
  cfg.k = 2;
  cfg.epsilon = 0.3 * mean_pairwise_cost(ds.data());
  const SplitSpec spec{0.5, 8, 4};
  const EvalReport serial = evaluate_method(ds, ewca_fitter(cfg, Algorithm::Mm), spec, {true, 1});
  const EvalReport parallel =
      evaluate_method(ds, ewca_fitter(cfg, Algorithm::Mm), spec, {true, 3});
  EXPECT_EQ(serial.per_split_error, parallel.per_split_error);
}

TEST(EvaluateMethod, FitOnceMode) {
  const LabeledDataset ds = make_synthetic_clusters(10, 4, 2, 6.0, 55);
  const SplitSpec spec{0.5, 5, 5};
  const EvalReport once = evaluate_method(ds, pca_fitter(1), spec, {false, 1});
  const EvalReport fixed = evaluate_embedding(ds, pca(ds.data(), 1, true).basis, spec);
  EXPECT_EQ(once.per_split_error, fixed.per_split_error);
}

TEST(SelectEpsilon, TieRules) {
  const LabeledDataset ds = make_synthetic_clusters(8, 3, 2, 8.0, 56);
  const SplitSpec inner{0.5, 3, 6};
  EXPECT_DOUBLE_EQ(select_epsilon(ds, {0.7}, 1, inner).epsilon, 0.7);
  // separated clusters: every candidate scores zero, so the smallest wins
  const EpsilonSelection sel = select_epsilon(ds, {2.0, 0.5, 0.5, 1.0}, 1, inner);
  EXPECT_DOUBLE_EQ(sel.epsilon, 0.5);
  EXPECT_EQ(sel.mean_errors.size(), 4u);
  EXPECT_THROW(select_epsilon(ds, {}, 1, inner), ConfigError);
  EXPECT_THROW(select_epsilon(ds, {0.0}, 1, inner), ConfigError);
}

TEST(EpsilonGrid, DefaultIsScaledLogGrid) {
  const LabeledDataset ds = make_synthetic_clusters(5, 3, 2, 1.0, 57);
  const std::vector<double> grid = default_epsilon_grid(ds.data());
  const double scale = mean_pairwise_cost(ds.data());
  ASSERT_EQ(grid.size(), 8u);
  EXPECT_NEAR(grid.front(), 1e-3 * scale, 1e-15 * scale);
  EXPECT_NEAR(grid.back(), 1e2 * scale, 1e-10 * scale);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    EXPECT_NEAR(std::log(grid[i] / grid[i - 1]), std::log(1e5) / 7.0, 1e-12);
  }
}

TEST(PlanClassMass, SpecExamples) {
  const Histogram h = Histogram::uniform(4);
  const std::vector<int> labels{0, 0, 1, 1};
  const ClassMass diag = plan_class_mass(TransportPlan(Matrix::Identity(4, 4) / 4.0, h, h), labels);
  EXPECT_DOUBLE_EQ(diag.within, 1.0);
  EXPECT_DOUBLE_EQ(diag.between, 0.0);
  const ClassMass prod =
      plan_class_mass(TransportPlan(Matrix::Constant(4, 4, 1.0 / 16), h, h), labels);
  EXPECT_DOUBLE_EQ(prod.within, 0.5);
  EXPECT_THROW(plan_class_mass(TransportPlan(Matrix::Identity(4, 4) / 4.0, h, h), {0, 1}),
               DimensionError);
}

TEST(PlanClassMass, FittedPlanFavoursOwnClass) {
  const LabeledDataset ds = make_synthetic_clusters(15, 4, 2, 6.0, 58);
  SolverConfig cfg;
  cfg.k = 1;
  cfg.epsilon = 0.3 * mean_pairwise_cost(ds.data());
  const FitResult r = fit(ds.data(), cfg, Algorithm::Mm);
  const ClassMass m = plan_class_mass(r.plan, ds.labels());
  EXPECT_GT(m.within, m.between);
  EXPECT_NEAR(m.within + m.between, 1.0, 1e-12);
}

TEST(Synthetic, DeterministicPerSeed) {
  const LabeledDataset a = make_synthetic_clusters(6, 3, 2, 2.0, 59);
  const LabeledDataset b = make_synthetic_clusters(6, 3, 2, 2.0, 59);
  const LabeledDataset c = make_synthetic_clusters(6, 3, 2, 2.0, 60);
  EXPECT_TRUE((a.data().values().array() == b.data().values().array()).all());
  EXPECT_FALSE((a.data().values().array() == c.data().values().array()).all());
  EXPECT_EQ(a.labels(), b.labels());
  EXPECT_THROW(make_synthetic_clusters(1, 3, 2, 1.0, 0), ConfigError);
}

TEST(Synthetic, CentersAtRequestedSeparation) {
  // average the noise away with many samples
  const LabeledDataset ds = make_synthetic_clusters(4000, 3, 3, 5.0, 61);
  const Matrix& x = ds.data().values();
  std::vector<Vector> means;
  for (int c = 0; c < 3; ++c) means.push_back(x.middleCols(c * 4000, 4000).rowwise().mean());
  EXPECT_NEAR((means[0] - means[1]).norm(), 5.0, 0.1);
  EXPECT_NEAR((means[1] - means[2]).norm(), 5.0, 0.1);
}

TEST(Synthetic, ZeroSeparationIsChance) {
  const LabeledDataset ds = make_synthetic_clusters(60, 2, 3, 0.0, 62);
  const EvalReport r = evaluate_embedding(ds, std::nullopt, SplitSpec{0.5, 30, 7});
  EXPECT_NEAR(r.mean, 2.0 / 3.0, 0.07);
}

TEST(Synthetic, WideSeparationIsEasy) {
  const LabeledDataset ds = make_synthetic_clusters(20, 3, 3, 40.0, 63);
  EXPECT_EQ(evaluate_embedding(ds, std::nullopt, SplitSpec{0.5, 10, 8}).mean, 0.0);
}

TEST(TimingSweep, RowLayout) {
  const LabeledDataset ds = make_synthetic_clusters(6, 12, 2, 4.0, 64);
  SolverConfig cfg;
  cfg.epsilon = 1.0;
  const std::vector<TimingRow> rows =
      timing_sweep(ds.data(), {8, 4}, 2, cfg, {Algorithm::Bcd, Algorithm::Mm}, 2, 1);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].algo, Algorithm::Bcd);
  EXPECT_EQ(rows[0].dim, 4);
  EXPECT_EQ(rows[1].dim, 8);
  EXPECT_EQ(rows[2].algo, Algorithm::Mm);
  EXPECT_EQ(rows[2].dim, 4);
  for (const TimingRow& r : rows) {
    EXPECT_EQ(r.times.size(), 2u);
    EXPECT_LE(r.q1, r.q3);
  }
  const std::vector<TimingRow> single =
      timing_sweep(ds.data(), {12}, 2, cfg, {Algorithm::Bcd, Algorithm::Mm}, 1);
  EXPECT_EQ(single.size(), 2u);
  EXPECT_THROW(timing_sweep(ds.data(), {13}, 2, cfg, {Algorithm::Mm}, 1), ConfigError);
}

TEST(TimingSweep, SubsampleIsSortedWithoutReplacement) {
  CounterRng rng(3);
  const std::vector<Index> idx = subsample_features(50, 20, rng);
  ASSERT_EQ(idx.size(), 20u);
  for (std::size_t i = 1; i < idx.size(); ++i) EXPECT_LT(idx[i - 1], idx[i]);
  EXPECT_LT(idx.back(), 50);
}
