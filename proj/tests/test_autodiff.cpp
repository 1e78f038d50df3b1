#include <gtest/gtest.h>

#include <cmath>

#include "htan/errors.hpp"
#include "htan/ops.hpp"
#include "htan/random.hpp"
#include "support/gradcheck.hpp"

using namespace htan;
using htan::testing::gradcheck;
using htan::testing::weighted_sum;

namespace {

Tensor rand_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return uniform_tensor({r, c}, lo, hi, rng);
}

}  // namespace

TEST(Tensor, RejectsZeroDimensionsAndMismatchedValues) {
  EXPECT_THROW(Tensor({0, 3}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, EqualityIsBitwise) {
  Tensor a = Tensor::vector({0.0, 1.0});
  Tensor b = Tensor::vector({-0.0, 1.0});
  EXPECT_FALSE(a == b);
  EXPECT_TRUE(a == Tensor::vector({0.0, 1.0}));
}

TEST(Tape, AddOfScalarsHasUnitGradients) {
  Tape t;
  Var a = t.variable(Tensor::scalar(3.0));
  Var b = t.variable(Tensor::scalar(4.0));
  Var y = a + b;
  t.backward(y);
  EXPECT_EQ(y.value().item(), 7.0);
  EXPECT_EQ(a.grad().item(), 1.0);
  EXPECT_EQ(b.grad().item(), 1.0);
}

TEST(Tape, ReluSubgradientAtZeroIsZero) {
  Tape t;
  Var x = t.variable(Tensor::vector({-1.0, 0.0, 2.0}));
  t.backward(sum(relu(x)));
  const Tensor g = x.grad();
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 1.0);
}

TEST(Tape, NonScalarRootIsRejected) {
  Tape t;
  Var x = t.variable(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(t.backward(x), TapeError);
}

TEST(Tape, SecondBackwardIsRejected) {
  Tape t;
  Var x = t.variable(Tensor::scalar(1.0));
  Var y = x * x;
  t.backward(y);
  EXPECT_THROW(t.backward(y), TapeError);
}

TEST(Tape, MixingTapesIsRejected) {
  Tape t1, t2;
  Var a = t1.variable(Tensor::scalar(1.0));
  Var b = t2.variable(Tensor::scalar(1.0));
  EXPECT_THROW(add(a, b), TapeError);
}

TEST(Tape, ParameterGradientsAccumulateAcrossTapes) {
  Parameter p("p", Tensor::scalar(2.0));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    Var x = t.param(p);
    t.backward(x * x);
  }
  EXPECT_EQ(p.grad.item(), 8.0);
}

TEST(Tape, FrozenBindingLeavesGradientUntouched) {
  Parameter p("p", Tensor::scalar(2.0));
  Tape t;
  Var x = bind(t, p, Binding::frozen);
  Var y = t.variable(Tensor::scalar(1.0));
  t.backward(x * y);
  EXPECT_EQ(p.grad.item(), 0.0);
}

TEST(Ops, MatmulRejectsNonConformingShapes) {
  Tape t;
  Var a = t.constant(Tensor({2, 3}, 1.0));
  Var b = t.constant(Tensor({2, 3}, 1.0));
  EXPECT_THROW(matmul(a, b), ShapeError);
}

TEST(Ops, MatmulMatchesHandComputation) {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = t.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  EXPECT_EQ(matmul(a, b).value(), Tensor::matrix(2, 2, {19, 22, 43, 50}));
}

TEST(Ops, LogOfNonPositiveReportsIndex) {
  Tape t;
  Var x = t.constant(Tensor::vector({1.0, -2.0}));
  try {
    log(x);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(Ops, DivisionByZeroIsRejected) {
  Tape t;
  EXPECT_THROW(div(t.constant(Tensor::scalar(1.0)), t.constant(Tensor::scalar(0.0))), DomainError);
}

TEST(Ops, LogsumexpIsStableForLargeInputs) {
  Tape t;
  Var x = t.constant(Tensor::vector({1000.0, 1000.0}));
  EXPECT_NEAR(logsumexp(x).value().item(), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Ops, SoftmaxCrossEntropyOfUniformLogits) {
  Tape t;
  Var logits = t.constant(Tensor({4, 3}, 0.5));
  EXPECT_NEAR(softmax_cross_entropy(logits, {0, 1, 2, 0}).value().item(), std::log(3.0), 1e-14);
}

TEST(Ops, SumReducesLeftToRight) {
  Tape t;
  Var x = t.constant(Tensor::vector({1e16, 1.0, -1e16}));
  EXPECT_EQ(sum(x).value().item(), (1e16 + 1.0) - 1e16);
}

TEST(Ops, MaximumRoutesTiesToFirstArgument) {
  Tape t;
  Var a = t.variable(Tensor::scalar(1.0));
  Var b = t.variable(Tensor::scalar(1.0));
  t.backward(maximum(a, b));
  EXPECT_EQ(a.grad().item(), 1.0);
  EXPECT_EQ(b.grad().item(), 0.0);
}

// Finite-difference sweep over the differentiable primitives.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchCentralDifferences) {
  Rng rng(1000 + static_cast<std::uint64_t>(GetParam()));
  const Tensor a = rand_matrix(3, 4, rng), b = rand_matrix(3, 4, rng), c = rand_matrix(4, 2, rng);
  const Tensor pos = rand_matrix(3, 4, rng, 0.5, 2.0), row = rand_matrix(1, 4, rng), col = rand_matrix(3, 1, rng);
  const Tensor sq = rand_matrix(3, 3, rng);
  const Tensor w34 = rand_matrix(3, 4, rng), w32 = rand_matrix(3, 2, rng), w33 = rand_matrix(3, 3, rng);
  const Tensor w43 = rand_matrix(4, 3, rng), w38 = rand_matrix(3, 8, rng), w44 = rand_matrix(4, 4, rng);

  auto check = [](const htan::testing::ScalarFn& f, std::vector<Tensor> in) {
    const auto r = gradcheck(f, std::move(in));
    EXPECT_LT(r.relative_error, 1e-6);
  };
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(v[0] * v[1] - v[0], w34); }, {a, b});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(div(v[0], v[1]), w34); }, {a, pos});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(matmul(v[0], v[1]), w32); }, {a, c});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(matmul_nt(v[0], v[1]), w33); }, {a, b});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(transpose(v[0]), w43); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(symmetrize(v[0]), w33); }, {sq});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(sigmoid(v[0]) + tanh(v[1]), w34); }, {a, b});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(exp(v[0]) + log(v[1]), w34); }, {a, pos});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(concat({v[0], v[1]}), w38); }, {a, b});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(slice_cols(v[0], 1, 2), w32); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return sum(slice_rows(v[0], 1, 2)); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(add_rowvec(v[0], v[1]), w34); }, {a, row});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(mul_rowvec(v[0], v[1]), w34); }, {a, row});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(mul_colvec(v[0], v[1]), w34); }, {a, col});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(softmax(v[0]), w34); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return logsumexp(v[0]); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return mean(v[0] * v[0]); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(sum_rows(v[0]), col); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(diag_embed(v[0]), w44); }, {row});
  check([&](Tape&, const std::vector<Var>& v) { return sum(gather(v[0], {0, 5, 11, 5})); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return softmax_cross_entropy(v[0], {0, 3, 1}); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(reshape(v[0], {4, 3}), w43); }, {a});
  check([&](Tape&, const std::vector<Var>& v) { return weighted_sum(scale(add_scalar(-v[0], 0.3), 2.5), w34); }, {a});
}

INSTANTIATE_TEST_SUITE_P(RandomInstances, PrimitiveGradients, ::testing::Range(0, 5));
