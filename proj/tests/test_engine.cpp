#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "support/support.hpp"
#include "tmm/errors.hpp"
#include "tmm/grad_check.hpp"
#include "tmm/ops.hpp"
#include "tmm/tape.hpp"

using namespace tmm;

namespace {

Array eval1(Var (*op)(Var), const Array& x) {
  Tape t;
  return op(t.constant(x)).value();
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape t;
  Array b = Array::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(ops::matmul(t.constant(Array::identity(2)), t.constant(b)).value(), b);
}

TEST(Matmul, HandExpandedProduct) {
  Tape t;
  Var c = ops::matmul(t.constant(Array::matrix({{1, 2}, {3, 4}})), t.constant(Array::matrix({{5, 6}, {7, 8}})));
  EXPECT_EQ(c.value(), Array::matrix({{19, 22}, {43, 50}}));
}

TEST(Matmul, MismatchedInnerExtentNamesBothShapes) {
  Tape t;
  Var a = t.constant(Array({2, 3}));
  try {
    ops::matmul(a, a);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(Matmul, MatchesNaiveLoop) {
  std::mt19937_64 rng(1);
  Array a = test::random_array({7, 5}, rng);
  Array b = test::random_array({5, 9}, rng);
  Tape t;
  Array c = ops::matmul(t.constant(a), t.constant(b)).value();
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 9; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
  }
}

TEST(Softmax, Examples) {
  Tape t;
  EXPECT_EQ(ops::softmax(t.constant(Array::vector({0, 0})), 0).value(), Array::vector({0.5, 0.5}));
  EXPECT_EQ(ops::softmax(t.constant(Array::vector({1000, 1000})), 0).value(), Array::vector({0.5, 0.5}));
  Array p = ops::softmax(t.constant(Array::vector({0, std::log(3.0)})), 0).value();
  EXPECT_NEAR(p[0], 0.25, 1e-12);
  EXPECT_NEAR(p[1], 0.75, 1e-12);
}

TEST(Softmax, SlicesSumToOneAndArePositive) {
  std::mt19937_64 rng(2);
  Tape t;
  Array p = ops::softmax(t.constant(test::random_array({6, 5}, rng, -30, 30)), 1).value();
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_GT(p.at(i, j), 0.0);
      s += p.at(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Activation, Examples) {
  EXPECT_DOUBLE_EQ(eval1([](Var a) { return ops::leaky_relu(a); }, Array::vector({-1}))[0], -0.2);
  EXPECT_DOUBLE_EQ(eval1(ops::sigmoid, Array::vector({0}))[0], 0.5);
  EXPECT_NEAR(eval1(ops::elu, Array::vector({-1}))[0], std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(eval1(ops::elu, Array::vector({-1}))[0], -0.63212, 1e-5);
}

TEST(Activation, ParseKinds) {
  EXPECT_EQ(ops::parse_activation("elu"), ops::Activation::kElu);
  EXPECT_EQ(ops::parse_activation("leaky-relu"), ops::Activation::kLeakyRelu);
  EXPECT_EQ(ops::parse_activation("sigmoid"), ops::Activation::kSigmoid);
  EXPECT_THROW(ops::parse_activation("tanh"), ConfigError);
}

TEST(Activation, SigmoidStaysInOpenInterval) {
  Array p = eval1(ops::sigmoid, Array::vector({-30, -1, 0, 1, 30}));
  for (double v : p.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Concat, Examples) {
  Tape t;
  Var a = t.constant(Array::matrix({{1}}));
  Var b = t.constant(Array::matrix({{2}}));
  EXPECT_EQ(ops::concat({a, b}, 1).value(), Array::matrix({{1, 2}}));
  EXPECT_EQ(ops::concat({a}, 1).value(), a.value());
  EXPECT_EQ(ops::concat({t.constant(Array({2, 3})), t.constant(Array({2, 5}))}, 1).shape(), (Shape{2, 8}));
  EXPECT_THROW(ops::concat({t.constant(Array({2, 3})), t.constant(Array({3, 3}))}, 1), DimensionError);
}

TEST(Concat, SplitIsInverse) {
  std::mt19937_64 rng(3);
  Tape t;
  Var x = t.constant(test::random_array({3, 7, 2}, rng));
  auto parts = ops::split(x, 1, {2, 4, 1});
  EXPECT_EQ(ops::concat(parts, 1).value(), x.value());
}

TEST(CrossEntropy, Examples) {
  Tape t;
  const std::vector<int> zero = {0};
  EXPECT_NEAR(ops::cross_entropy(t.constant(Array::matrix({{0, 0}})), zero).value().item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(ops::cross_entropy(t.constant(Array::matrix({{20, -20}})), zero).value().item(), 0.0, 1e-15);
  EXPECT_NEAR(ops::cross_entropy(t.constant(Array::matrix({{0, std::log(3.0)}})), zero).value().item(),
              std::log(4.0), 1e-12);
}

TEST(CrossEntropy, LabelOutOfRange) {
  Tape t;
  const std::vector<int> bad = {2};
  EXPECT_THROW(ops::cross_entropy(t.constant(Array::matrix({{0, 0}})), bad), DataError);
}

TEST(Backward, SquareAtThree) {
  Tape t;
  Var x = t.parameter("x", Array::scalar(3.0));
  Gradients g = t.backward(ops::mul(x, x));
  EXPECT_DOUBLE_EQ(g.at("x").item(), 6.0);
}

TEST(Backward, ConstantFunctionHasZeroGradient) {
  Tape t;
  Var x = t.parameter("x", Array::scalar(3.0));
  (void)x;
  Gradients g = t.backward(t.constant(Array::scalar(5.0)));
  EXPECT_DOUBLE_EQ(g.at("x").item(), 0.0);
}

TEST(Backward, NonScalarLossIsRejected) {
  Tape t;
  Var x = t.parameter("x", Array::vector({1, 2}));
  EXPECT_THROW(t.backward(x), UsageError);
}

TEST(Backward, NonFiniteValueAborts) {
  Tape t;
  Var x = t.parameter("x", Array::vector({0.0}));
  EXPECT_THROW(ops::reciprocal(x), NumericError);
}

TEST(Backward, IsLinear) {
  std::mt19937_64 rng(4);
  const Array w = test::random_array({3, 3}, rng);
  auto f = [](Tape&, const std::vector<Var>& x) { return ops::sum(ops::mul(ops::sigmoid(x[0]), x[0])); };
  auto g = [](Tape&, const std::vector<Var>& x) { return test::probe(ops::matmul(x[0], x[0])); };
  auto combo = [&](Tape& t, const std::vector<Var>& x) {
    return ops::add(ops::scale(f(t, x), 2.5), ops::scale(g(t, x), -0.75));
  };
  const Array gf = gradient(f, {w})[0];
  const Array gg = gradient(g, {w})[0];
  const Array gc = gradient(combo, {w})[0];
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(gc[i], 2.5 * gf[i] - 0.75 * gg[i], 1e-10);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tape t;
  Var x = t.parameter("x", Array::scalar(2.0));
  Var y = ops::mul(x, x);
  Gradients g = t.backward(ops::add(y, ops::mul(y, x)));  // x^2 + x^3
  EXPECT_DOUBLE_EQ(g.at("x").item(), 2 * 2.0 + 3 * 4.0);
}

TEST(GradCheck, SquareIsExact) {
  auto f = [](Tape&, const std::vector<Var>& x) { return ops::mul(x[0], x[0]); };
  EXPECT_LT(grad_check(f, {Array::scalar(3.0)}, 1e-5), 1e-8);
}

TEST(GradCheck, SoftmaxThenCrossEntropy) {
  std::mt19937_64 rng(5);
  const std::vector<int> labels = {1, 0, 3, 2, 2};
  auto f = [&](Tape&, const std::vector<Var>& x) { return ops::cross_entropy(x[0], labels); };
  EXPECT_LT(grad_check(f, {test::random_array({5, 4}, rng, -2, 2)}), 1e-6);
}

TEST(GradCheck, ReportsWrongGradient) {
  // A primitive whose backward pass is deliberately off by a factor 2.
  auto f = [](Tape& t, const std::vector<Var>& x) {
    Array v = x[0].value();
    Var bad = t.record("bad_square", Array::scalar(v.item() * v.item()), {x[0]},
                       [x0 = x[0]](Tape& tape, const Array&, const Array& g) {
                         tape.grad(x0)[0] += 4.0 * tape.value(x0.id()).item() * g.item();
                       });
    return bad;
  };
  EXPECT_NEAR(grad_check(f, {Array::scalar(1.5)}), 0.5, 1e-6);  // |6 - 3| / 6
}

TEST(GradCheck, NonFiniteEvaluationThrows) {
  auto f = [](Tape&, const std::vector<Var>& x) { return ops::sum(ops::reciprocal(x[0])); };
  EXPECT_THROW(grad_check(f, {Array::vector({0.0})}), NumericError);
}

class PrimitiveGradients : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradients, TenRandomPoints) {
  const auto cases = test::primitive_grad_cases();
  const auto& c = cases.at(GetParam());
  std::mt19937_64 rng(1000 + GetParam());
  for (int trial = 0; trial < 10; ++trial) {
    EXPECT_LT(grad_check(c.fn, c.point(rng), 1e-5), 1e-4) << c.name << " trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradients,
                         ::testing::Range<std::size_t>(0, test::primitive_grad_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return test::primitive_grad_cases().at(info.param).name;
                         });

TEST(HeadScores, MatchesLoop) {
  std::mt19937_64 rng(6);
  const Array wh = test::random_array({2, 4, 6}, rng);
  const Array attn = test::random_array({3, 2}, rng);
  Tape t;
  const Array s = ops::head_scores(t.constant(wh), t.constant(attn)).value();
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t u = 0; u < 4; ++u) {
      for (std::size_t k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (std::size_t f = 0; f < 2; ++f) acc += wh.at(b, u, k * 2 + f) * attn.at(k, f);
        EXPECT_NEAR(s.at(b, u, k), acc, 1e-14);
      }
    }
  }
}

TEST(GraphAttention, FusedEqualsComposed) {
  std::mt19937_64 rng(7);
  const Array mask = test::random_mask(6, rng, 0.4);
  const Array wh = test::random_array({3, 6, 8}, rng);
  const Array src = test::random_array({3, 6, 2}, rng);
  const Array dst = test::random_array({3, 6, 2}, rng);
  auto fused = [&](Tape&, const std::vector<Var>& x) {
    return test::probe(ops::graph_attention(x[0], x[1], x[2], mask));
  };
  auto composed = [&](Tape&, const std::vector<Var>& x) {
    return test::probe(ops::head_aggregate(ops::masked_attention(x[1], x[2], mask), x[0]));
  };
  EXPECT_NEAR(evaluate(fused, {wh, src, dst}), evaluate(composed, {wh, src, dst}), 1e-12);
  const auto gf = gradient(fused, {wh, src, dst});
  const auto gc = gradient(composed, {wh, src, dst});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(max_abs_diff(gf[i], gc[i]), 1e-12);
}
