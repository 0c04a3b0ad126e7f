// Every differentiable op is checked against central finite differences with
// an independent weighting matrix, so no backward rule is trusted on faith.

#include <gtest/gtest.h>

#include <cmath>

#include "uniclr/errors.hpp"
#include "uniclr/gradcheck.hpp"
#include "uniclr/rng.hpp"
#include "uniclr/tape.hpp"

using namespace uniclr;
using gradcheck::Builder;
using gradcheck::Built;
using gradcheck::check;

namespace {

// trace(W * y) probes every entry of y through fixed weights W, so linear and
// nonlinear ops alike get a non-degenerate scalar head.
Var weighted(Tape& t, Var y, const Matrix& w) {
  Var wv = t.leaf(w);
  return trace(t, matmul(t, wv, y));
}

Matrix weights_for(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  return rng.uniform_matrix(cols, rows, -1.0, 1.0);  // shaped so W*y is square
}

double expect_close(const Builder& b, const std::vector<Matrix>& inputs,
                    double tol = 1e-6) {
  gradcheck::CheckResult r = check(b, inputs, 1e-6);
  EXPECT_LE(r.max_rel_err, tol);
  return r.max_rel_err;
}

Matrix rand_mat(Index r, Index c, std::uint64_t seed) {
  Rng rng(seed);
  return rng.uniform_matrix(r, c, -1.0, 1.0);
}

Matrix spd_mat(Index d, std::uint64_t seed) {
  Matrix a = rand_mat(d, d + 3, seed);
  Matrix s = a * a.transpose();
  s.diagonal().array() += 0.5;
  return s;
}

}  // namespace

TEST(TapeForward, LeafAndScalarValue) {
  Tape t;
  Matrix m = rand_mat(3, 4, 7);
  Var v = t.leaf(m);
  EXPECT_TRUE(t.value(v).isApprox(m));
  Var s = sum(t, v);
  EXPECT_DOUBLE_EQ(t.scalar_value(s), m.sum());
}

TEST(TapeForward, LeafRejectsEmptyAndNonFinite) {
  Tape t;
  EXPECT_THROW(t.leaf(Matrix(0, 0)), Error);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::nan("");
  try {
    t.leaf(bad);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
  }
}

TEST(TapeForward, ShapeMismatchesRaiseDimensionErrors) {
  Tape t;
  Var a = t.leaf(rand_mat(2, 3, 1));
  Var b = t.leaf(rand_mat(4, 2, 2));
  EXPECT_THROW(add(t, a, b), Error);
  EXPECT_THROW(matmul(t, a, b), Error);
  EXPECT_THROW(concat_cols(t, a, b), Error);
  EXPECT_THROW(trace(t, a), Error);
}

TEST(TapeGrad, MatMul) {
  Matrix a = rand_mat(3, 4, 11), b = rand_mat(4, 2, 12);
  Matrix w = weights_for(3, 2, 13);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var av = t.leaf(in[0]), bv = t.leaf(in[1]);
    return Built{weighted(t, matmul(t, av, bv), w), {av, bv}};
  };
  expect_close(builder, {a, b});
}

TEST(TapeGrad, TransposeAddSubScale) {
  Matrix a = rand_mat(3, 4, 21), b = rand_mat(3, 4, 22);
  Matrix w = weights_for(4, 3, 23);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var av = t.leaf(in[0]), bv = t.leaf(in[1]);
    Var expr = transpose(t, sub(t, add(t, av, bv), scale(t, bv, 0.3)));
    return Built{weighted(t, expr, w), {av, bv}};
  };
  expect_close(builder, {a, b});
}

TEST(TapeGrad, ColVecBroadcastAndRowMean) {
  Matrix a = rand_mat(3, 5, 31);
  Matrix col = rand_mat(3, 1, 32);
  Matrix w = weights_for(3, 1, 33);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var av = t.leaf(in[0]), cv = t.leaf(in[1]);
    Var centered = sub_colvec(t, add_colvec(t, av, cv), row_mean(t, av));
    return Built{weighted(t, row_mean(t, centered), w), {av, cv}};
  };
  expect_close(builder, {a, col});
}

TEST(TapeGrad, ConcatCols) {
  Matrix a = rand_mat(3, 2, 41), b = rand_mat(3, 4, 42);
  Matrix w = weights_for(3, 6, 43);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var av = t.leaf(in[0]), bv = t.leaf(in[1]);
    return Built{weighted(t, concat_cols(t, av, bv), w), {av, bv}};
  };
  expect_close(builder, {a, b});
}

TEST(TapeGrad, ReluAwayFromKink) {
  Matrix a = rand_mat(3, 4, 51);
  for (Index i = 0; i < a.size(); ++i)
    if (std::abs(a.data()[i]) < 1e-3) a.data()[i] = 0.1;
  Matrix w = weights_for(3, 4, 52);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var av = t.leaf(in[0]);
    return Built{weighted(t, relu(t, av), w), {av}};
  };
  expect_close(builder, {a});
}

TEST(TapeGrad, ReluZeroInputGetsZeroGradient) {
  Tape t;
  Matrix a = Matrix::Zero(2, 2);
  Var av = t.leaf(a);
  Gradient g = backward(t, sum(t, relu(t, av)));
  EXPECT_TRUE(g.at(av).isZero(0.0));
}

TEST(TapeGrad, SumTraceFrobenius) {
  Matrix a = rand_mat(4, 4, 61);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var av = t.leaf(in[0]);
    Var s = add(t, add(t, sum(t, av), trace(t, av)), frobenius_norm(t, av));
    return Built{s, {av}};
  };
  expect_close(builder, {a});
}

TEST(TapeGrad, FrobeniusNormAtZeroUsesZeroSubgradient) {
  Tape t;
  Var av = t.leaf(Matrix::Zero(3, 3));
  Gradient g = backward(t, frobenius_norm(t, av));
  EXPECT_TRUE(g.at(av).isZero(0.0));
}

TEST(TapeGrad, L2NormalizeCols) {
  Matrix a = rand_mat(4, 5, 71);
  a.array() += 2.0;  // keep norms far from the floor
  Matrix w = weights_for(4, 5, 72);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var av = t.leaf(in[0]);
    return Built{weighted(t, l2_normalize_cols(t, av), w), {av}};
  };
  expect_close(builder, {a});
}

TEST(TapeForward, L2NormalizeFrozenValue) {
  Tape t;
  Matrix a(2, 1);
  a << 3.0, 4.0;
  Var n = l2_normalize_cols(t, t.leaf(a));
  EXPECT_NEAR(t.value(n)(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(t.value(n)(1, 0), 0.8, 1e-15);
}

TEST(TapeForward, L2NormalizeRejectsZeroColumn) {
  Tape t;
  Matrix a = Matrix::Zero(3, 2);
  a(0, 0) = 1.0;
  try {
    l2_normalize_cols(t, t.leaf(a));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
  }
}

TEST(TapeGrad, BatchStandardize) {
  Matrix a = rand_mat(3, 6, 81);
  Matrix w = weights_for(3, 6, 82);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var av = t.leaf(in[0]);
    return Built{weighted(t, batch_standardize(t, av), w), {av}};
  };
  expect_close(builder, {a});
}

TEST(TapeForward, BatchStandardizeFrozenValue) {
  // Row [1, -1]: mean 0, population variance 1, output +-1/sqrt(1 + eps).
  Tape t;
  Matrix a(1, 2);
  a << 1.0, -1.0;
  Var s = batch_standardize(t, t.leaf(a));
  const double expected = 1.0 / std::sqrt(1.0 + kStandardizeEps);
  EXPECT_NEAR(t.value(s)(0, 0), expected, 1e-15);
  EXPECT_NEAR(t.value(s)(0, 1), -expected, 1e-15);
}

TEST(TapeGrad, RowSoftmaxXent) {
  Matrix logits = rand_mat(4, 4, 91) * 2.0;
  std::vector<int> targets = {0, 1, 2, 3};
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var lv = t.leaf(in[0]);
    return Built{row_softmax_xent(t, lv, targets), {lv}};
  };
  expect_close(builder, {logits});
}

TEST(TapeForward, RowSoftmaxXentFrozenTwoByTwo) {
  // Rows [2, 0] and [0, 1] with diagonal targets:
  // mean of ln(1+exp(-2)) and ln(1+exp(-1)).
  Tape t;
  Matrix logits(2, 2);
  logits << 2.0, 0.0, 0.0, 1.0;
  Var l = row_softmax_xent(t, t.leaf(logits), {0, 1});
  const double expected =
      0.5 * (std::log(1.0 + std::exp(-2.0)) + std::log(1.0 + std::exp(-1.0)));
  EXPECT_NEAR(t.scalar_value(l), expected, 1e-15);
}

TEST(TapeForward, RowSoftmaxXentIsShiftInvariantPerRow) {
  Tape t;
  Matrix logits = rand_mat(3, 3, 95);
  Matrix shifted = logits;
  shifted.row(1).array() += 500.0;  // also exercises the max-subtraction path
  std::vector<int> targets = {1, 0, 2};
  Var a = row_softmax_xent(t, t.leaf(logits), targets);
  Var b = row_softmax_xent(t, t.leaf(shifted), targets);
  EXPECT_NEAR(t.scalar_value(a), t.scalar_value(b), 1e-12);
}

TEST(TapeGrad, MaskedPairXent) {
  Matrix logits = rand_mat(6, 6, 101) * 2.0;  // 2N = 6
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var lv = t.leaf(in[0]);
    return Built{masked_pair_xent(t, lv), {lv}};
  };
  expect_close(builder, {logits});
}

TEST(TapeForward, MaskedPairXentUniformEqualsLogCount) {
  // Equal off-diagonal logits: every row reduces to ln(2N - 1).
  Tape t;
  const Index two_n = 8;
  Matrix logits = Matrix::Constant(two_n, two_n, 0.7);
  Var l = masked_pair_xent(t, t.leaf(logits));
  EXPECT_NEAR(t.scalar_value(l), std::log(static_cast<double>(two_n - 1)), 1e-12);
}

TEST(TapeForward, MaskedPairXentIgnoresDiagonal) {
  Tape t;
  Matrix logits = rand_mat(4, 4, 103);
  Matrix spiked = logits;
  spiked.diagonal().setConstant(1e6);  // excluded entries must not matter
  Var a = masked_pair_xent(t, t.leaf(logits));
  Var b = masked_pair_xent(t, t.leaf(spiked));
  EXPECT_NEAR(t.scalar_value(a), t.scalar_value(b), 1e-12);
}

TEST(TapeGrad, RegularizeSpdAndSolveSpd) {
  Matrix sigma = spd_mat(3, 111);
  Matrix b = rand_mat(3, 4, 112);
  Matrix w = weights_for(3, 4, 113);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var sv = t.leaf(in[0]), bv = t.leaf(in[1]);
    Var reg = regularize_spd(t, sv, 1e-3);
    return Built{weighted(t, solve_spd(t, reg, bv), w), {sv, bv}};
  };
  expect_close(builder, {sigma, b}, 2e-6);
}

TEST(TapeGrad, WhitenLower) {
  Matrix sigma = spd_mat(3, 121);
  Matrix c = rand_mat(3, 5, 122);
  Matrix w = weights_for(3, 5, 123);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var sv = t.leaf(in[0]), cv = t.leaf(in[1]);
    return Built{weighted(t, whiten_lower(t, sv, cv), w), {sv, cv}};
  };
  expect_close(builder, {sigma, c}, 2e-6);
}

TEST(TapeGrad, WhitenLowerOneByOneClosedForm) {
  // f = L^{-1} c = c / sqrt(s): df/ds = -c / (2 s^{3/2}), df/dc = 1 / sqrt(s).
  Tape t;
  Matrix s(1, 1), c(1, 1);
  s << 4.0;
  c << 3.0;
  Var sv = t.leaf(s), cv = t.leaf(c);
  Gradient g = backward(t, sum(t, whiten_lower(t, sv, cv)));
  EXPECT_NEAR(g.at(sv)(0, 0), -3.0 / (2.0 * std::pow(4.0, 1.5)), 1e-12);
  EXPECT_NEAR(g.at(cv)(0, 0), 0.5, 1e-12);
}

TEST(TapeGrad, SolveSpdMatchesExplicitInverse) {
  Tape t;
  Matrix sigma = spd_mat(4, 131);
  Matrix b = rand_mat(4, 2, 132);
  Var sv = t.leaf(sigma), bv = t.leaf(b);
  Var x = solve_spd(t, sv, bv);
  Matrix sym = 0.5 * (sigma + sigma.transpose());
  Matrix expected = sym.inverse() * b;
  EXPECT_TRUE(t.value(x).isApprox(expected, 1e-10));
}

TEST(TapeGrad, StopGradientBlocksUpstreamAdjoints) {
  Tape t;
  Matrix a = rand_mat(3, 3, 141);
  Var av = t.leaf(a);
  Var blocked = stop_gradient(t, scale(t, av, 2.0));
  Var open = matmul(t, av, blocked);
  Gradient g = backward(t, sum(t, open));
  // Forward sees 2A through the blocked branch; gradients only flow through
  // the open factor: d sum(A * (2A)) / dA restricted to the live path.
  Matrix expected = Matrix::Ones(3, 3) * (2.0 * a).transpose();
  EXPECT_TRUE(g.at(av).isApprox(expected, 1e-12));
}

TEST(TapeGrad, UnreachedLeafHasExactZeroAdjoint) {
  Tape t;
  Var used = t.leaf(rand_mat(2, 2, 151));
  Var unused = t.leaf(rand_mat(2, 2, 152));
  Gradient g = backward(t, sum(t, used));
  EXPECT_TRUE(g.at(unused).isZero(0.0));
}

TEST(TapeGrad, BackwardIsRepeatable) {
  Tape t;
  Var a = t.leaf(rand_mat(3, 3, 161));
  Var root = frobenius_norm(t, matmul(t, a, transpose(t, a)));
  Gradient g1 = backward(t, root);
  Gradient g2 = backward(t, root);
  EXPECT_TRUE(g1.at(a) == g2.at(a));
}

TEST(TapeGrad, BackwardRequiresScalarRoot) {
  Tape t;
  Var a = t.leaf(rand_mat(2, 3, 171));
  EXPECT_THROW(backward(t, a), Error);
}

TEST(TapeForward, ReplayProducesIdenticalBits) {
  auto run = [](std::uint64_t seed) {
    Tape t;
    Var a = t.leaf(rand_mat(4, 4, seed));
    Var b = t.leaf(spd_mat(4, seed + 1));
    Var head = sum(t, whiten_lower(t, b, l2_normalize_cols(t, relu(t, a))));
    Gradient g = backward(t, head);
    return std::make_pair(t.scalar_value(head), Matrix(g.at(a)));
  };
  auto [v1, g1] = run(42);
  auto [v2, g2] = run(42);
  EXPECT_EQ(v1, v2);
  EXPECT_TRUE(g1 == g2);
}

TEST(TapeFault, InjectedBackwardFaultChangesMatMulGradient) {
  Matrix a = rand_mat(3, 3, 181), b = rand_mat(3, 3, 182);
  Builder builder = [&](Tape& t, const std::vector<Matrix>& in) {
    Var av = t.leaf(in[0]), bv = t.leaf(in[1]);
    return Built{sum(t, matmul(t, av, bv)), {av, bv}};
  };
  set_test_backward_fault(true);
  gradcheck::CheckResult r = check(builder, {a, b}, 1e-6);
  set_test_backward_fault(false);
  EXPECT_GT(r.max_rel_err, 1e-3);
}
