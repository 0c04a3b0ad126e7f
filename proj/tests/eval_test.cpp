// Nearest-neighbor and probe behavior on hand-built fixtures where the right
// answer is known in advance, including every tie-breaking rule.

#include <gtest/gtest.h>

#include <cmath>

#include "uniclr/errors.hpp"
#include "uniclr/eval.hpp"
#include "uniclr/rng.hpp"

using namespace uniclr;

namespace {

// Two tight clusters at +-5 on the first axis, trivially separable.
void separable_fixture(Index dim, Index per_class, Matrix& train_f,
                       std::vector<int>& train_y, Matrix& test_f,
                       std::vector<int>& test_y, std::uint64_t seed) {
  Rng rng(seed);
  const Index n = 2 * per_class;
  train_f = rng.normal_matrix(dim, n) * 0.3;
  test_f = rng.normal_matrix(dim, n) * 0.3;
  train_y.clear();
  test_y.clear();
  for (Index j = 0; j < n; ++j) {
    const int label = static_cast<int>(j % 2);
    const double center = label == 0 ? 5.0 : -5.0;
    train_f(0, j) += center;
    test_f(0, j) += center;
    train_y.push_back(label);
    test_y.push_back(label);
  }
}

}  // namespace

TEST(Knn, PerfectOnSeparableClusters) {
  Matrix train_f, test_f;
  std::vector<int> train_y, test_y;
  separable_fixture(4, 20, train_f, train_y, test_f, test_y, 11);
  KnnReport r = knn_eval(train_f, train_y, test_f, test_y, 5, 2);
  EXPECT_EQ(r.correct, r.num_test);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.k, 5);
}

TEST(Knn, CosineIsScaleInvariant) {
  Matrix train_f, test_f;
  std::vector<int> train_y, test_y;
  separable_fixture(3, 10, train_f, train_y, test_f, test_y, 13);
  KnnReport a = knn_eval(train_f, train_y, test_f, test_y, 3, 2);
  KnnReport b = knn_eval(Matrix(train_f * 1000.0), train_y,
                         Matrix(test_f * 0.001), test_y, 3, 2);
  EXPECT_EQ(a.correct, b.correct);
}

TEST(Knn, NeighborTieBreaksTowardSmallerTrainIndex) {
  // The test point is equally similar to both train points; index 0 wins.
  Matrix train(2, 2);
  train << 1, 0, 0, 1;  // e1 (label 0), e2 (label 1)
  Matrix test(2, 1);
  test << 1, 1;
  KnnReport r = knn_eval(train, {0, 1}, test, {0}, 1, 2);
  EXPECT_EQ(r.correct, 1);
}

TEST(Knn, VoteTieBreaksTowardSmallerLabel) {
  // k = 2 with one vote for each label; the smaller label is predicted.
  Matrix train(2, 2);
  train << 1, 0.9, 0, std::sqrt(1 - 0.81);
  Matrix test(2, 1);
  test << 1, 0.2;
  // Labels arranged so the tie is between label 0 and label 1.
  KnnReport win0 = knn_eval(train, {0, 1}, test, {0}, 2, 2);
  EXPECT_EQ(win0.correct, 1);
  KnnReport win0_swapped = knn_eval(train, {1, 0}, test, {0}, 2, 2);
  EXPECT_EQ(win0_swapped.correct, 1);  // still label 0 despite column order
}

TEST(Knn, ZeroNormColumnsStayZeroAndAreHandled) {
  Matrix train(2, 2);
  train << 1, 0, 0, 0;  // second train vector is all zero
  Matrix test = Matrix::Zero(2, 1);
  KnnReport r = knn_eval(train, {0, 1}, test, {0}, 1, 2);
  // All similarities are zero; the smaller index (label 0) is chosen.
  EXPECT_EQ(r.correct, 1);
}

TEST(Knn, ContractViolationsRaise) {
  Matrix train(2, 2);
  train << 1, 0, 0, 1;
  Matrix test(2, 1);
  test << 1, 0;
  EXPECT_THROW(knn_eval(train, {0, 1}, test, {0}, 3, 2), Error);  // k > n
  EXPECT_THROW(knn_eval(train, {0, 1}, test, {0}, 0, 2), Error);  // k < 1
  EXPECT_THROW(knn_eval(train, {0}, test, {0}, 1, 2), Error);     // label count
}

TEST(Probe, SeparableDataReachesFullAccuracy) {
  Matrix train_f, test_f;
  std::vector<int> train_y, test_y;
  separable_fixture(4, 25, train_f, train_y, test_f, test_y, 17);
  ProbeConfig cfg;
  ProbeReport r = linear_probe(train_f, train_y, test_f, test_y, 2, cfg);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_LT(r.final_train_loss, 0.1);
  EXPECT_EQ(r.epochs, cfg.epochs);
}

TEST(Probe, DeterministicForAGivenSeed) {
  Matrix train_f, test_f;
  std::vector<int> train_y, test_y;
  separable_fixture(3, 10, train_f, train_y, test_f, test_y, 19);
  ProbeConfig cfg;
  cfg.seed = 5;
  ProbeReport a = linear_probe(train_f, train_y, test_f, test_y, 2, cfg);
  ProbeReport b = linear_probe(train_f, train_y, test_f, test_y, 2, cfg);
  EXPECT_EQ(a.correct, b.correct);
  EXPECT_EQ(a.final_train_loss, b.final_train_loss);  // bitwise
}

TEST(Probe, MultiClassOnAxisClusters) {
  // Four classes on four different axes; linear separation is easy.
  const Index per = 12;
  Matrix train_f = Matrix::Zero(4, 4 * per), test_f = Matrix::Zero(4, 4 * per);
  std::vector<int> train_y, test_y;
  Rng rng(23);
  for (Index j = 0; j < 4 * per; ++j) {
    const int label = static_cast<int>(j % 4);
    train_f.col(j).setConstant(0.05 * rng.normal());
    test_f.col(j).setConstant(0.05 * rng.normal());
    train_f(label, j) += 3.0;
    test_f(label, j) += 3.0;
    train_y.push_back(label);
    test_y.push_back(label);
  }
  ProbeReport r = linear_probe(train_f, train_y, test_f, test_y, 4, ProbeConfig{});
  EXPECT_GE(r.accuracy, 0.95);
}

TEST(Collapse, ConstantFeaturesGiveRankOneAndZeroStd) {
  Matrix f = Matrix::Constant(5, 20, 3.25);
  CollapseReport r = collapse_metrics(f);
  EXPECT_DOUBLE_EQ(r.effective_rank, 1.0);
  EXPECT_DOUBLE_EQ(r.mean_std, 0.0);
  EXPECT_TRUE(r.per_dim_std.isZero(0.0));
}

TEST(Collapse, TwoEqualSingularValuesGiveRankTwo) {
  // Columns (+-1, +-1): centered, second moment diag(4,4), equal spectrum.
  Matrix f(2, 4);
  f << 1, 1, -1, -1, 1, -1, 1, -1;
  CollapseReport r = collapse_metrics(f);
  EXPECT_NEAR(r.effective_rank, 2.0, 1e-12);
}

TEST(Collapse, RotationInvariantEffectiveRank) {
  Rng rng(29);
  Matrix f = rng.normal_matrix(4, 50);
  f.row(0) *= 3.0;  // anisotropic so the spectrum is non-trivial
  Matrix g = rng.normal_matrix(4, 4);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(g)};
  Matrix q = qr.householderQ();
  CollapseReport a = collapse_metrics(f);
  CollapseReport b = collapse_metrics(Matrix(q * f));
  EXPECT_NEAR(a.effective_rank, b.effective_rank, 1e-9);
}

TEST(Collapse, FullRankNoiseApproachesDimension) {
  Rng rng(31);
  Matrix f = rng.normal_matrix(6, 4000);
  CollapseReport r = collapse_metrics(f);
  EXPECT_GT(r.effective_rank, 5.8);
  EXPECT_LE(r.effective_rank, 6.0 + 1e-9);
}

TEST(Collapse, PerDimStdHandValues) {
  Matrix f(2, 2);
  f << 1, -1, 2, 2;
  CollapseReport r = collapse_metrics(f);
  EXPECT_DOUBLE_EQ(r.per_dim_std(0), 1.0);  // population std
  EXPECT_DOUBLE_EQ(r.per_dim_std(1), 0.0);
  EXPECT_DOUBLE_EQ(r.mean_std, 0.5);
}

TEST(Collapse, NonFiniteFeaturesRaise) {
  Matrix f = Matrix::Zero(2, 3);
  f(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(collapse_metrics(f), Error);
}
