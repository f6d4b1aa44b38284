#include "partedit/autodiff.hpp"

#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

namespace partedit::ad {
namespace {

using partedit::testing::normal_values;
using partedit::testing::project;
using partedit::testing::random_constant;
using partedit::testing::uniform_values;
using partedit::testing::worst_unary;

constexpr double kGradTol = 1e-4;

TEST(AutodiffExamples, CosineOfVectorWithItselfIsOne) {
  const auto v = Tensor::row(std::vector<double>{0.3, -1.2, 2.5});
  EXPECT_NEAR(cosine_similarity(v, v).item(), 1.0, 1e-15);
}

TEST(AutodiffExamples, SoftmaxWithTemperatureSumsToOne) {
  std::mt19937_64 rng(3);
  for (double tau : {0.05, 1.0, 7.0}) {
    const auto w = softmax(random_constant({4, 6}, rng, 5.0), tau);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 6; ++c) s += w.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(AutodiffExamples, DotProduct) {
  EXPECT_DOUBLE_EQ(dot(Tensor::row(std::vector<double>{1, 0}), Tensor::row(std::vector<double>{0.6, 0.8})).item(),
                   0.6);
}

TEST(AutodiffExamples, SumOfSquaresGradient) {
  const auto x = Tensor::variable({1, 3}, {1, 2, 3});
  sum(mul(x, x)).backward();
  const auto g = x.grad();
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
  EXPECT_DOUBLE_EQ(g[2], 6.0);
}

TEST(AutodiffExamples, CosineGradientIsTangent) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    auto xv = normal_values(5, rng);
    double n = 0.0;
    for (double v : xv) n += v * v;
    for (double& v : xv) v /= std::sqrt(n);
    const auto x = Tensor::variable({1, 5}, xv);
    cosine_similarity(x, random_constant({1, 5}, rng)).backward();
    double radial = 0.0;
    for (std::size_t k = 0; k < 5; ++k) radial += x.grad()[k] * xv[k];
    EXPECT_NEAR(radial, 0.0, 1e-10);
  }
}

TEST(AutodiffExamples, SumOfSquaresFiniteDifference) {
  std::mt19937_64 rng(5);
  const auto x = random_constant({3, 4}, rng);
  EXPECT_LT(check_gradients([](const Tensor& v) { return sum(mul(v, v)); }, x), 1e-6);
}

TEST(AutodiffErrors, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  EXPECT_THROW(dot(Tensor::zeros({1, 3}), Tensor::zeros({1, 4})), DimensionError);
}

TEST(AutodiffErrors, DomainErrors) {
  EXPECT_THROW(log(Tensor::row(std::vector<double>{1.0, 0.0})), DomainError);
  EXPECT_THROW(log(Tensor::row(std::vector<double>{-1.0})), DomainError);
  EXPECT_THROW(l2_normalize(Tensor::zeros({1, 3})), DomainError);
}

TEST(AutodiffErrors, BackwardContract) {
  const auto x = Tensor::variable({1, 2}, {1, 2});
  EXPECT_THROW(mul(x, x).backward(), ContractError);
  const auto loss = sum(mul(x, x));
  loss.backward();
  EXPECT_THROW(loss.backward(), ContractError);
}

TEST(AutodiffProperties, GradientsAreLinearInTheLoss) {
  std::mt19937_64 rng(21);
  const auto xv = normal_values(6, rng);
  const auto a = random_constant({1, 6}, rng);
  auto loss1 = [&](const Tensor& x) { return sum(tanh(mul(x, a))); };
  auto loss2 = [&](const Tensor& x) { return sum(exp(scale(x, 0.3))); };

  const auto x1 = Tensor::variable({1, 6}, xv);
  loss1(x1).backward();
  const auto x2 = Tensor::variable({1, 6}, xv);
  loss2(x2).backward();
  const auto x3 = Tensor::variable({1, 6}, xv);
  add(loss1(x3), loss2(x3)).backward();
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(x3.grad()[i], x1.grad()[i] + x2.grad()[i], 1e-14);
}

TEST(AutodiffProperties, Deterministic) {
  auto run = [] {
    std::mt19937_64 rng(8);
    const auto x = partedit::testing::random_variable({3, 4}, rng);
    const auto w = random_constant({4, 2}, rng);
    const auto y = softmax(tanh(matmul(x, w)), 0.7);
    project(y, rng).backward();
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(AutodiffProperties, AbsSubgradientIsZeroAtKink) {
  const auto x = Tensor::variable({1, 2}, {0.0, -2.0});
  sum(abs(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], -1.0);
}

// Finite-difference checks, one per op, 50 random instances each.

TEST(AutodiffGradients, Elementwise) {
  EXPECT_LT(worst_unary([](const Tensor& x, auto& r) { return add(x, random_constant(x.shape(), r)); }, {3, 4}, 100),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto& r) { return sub(random_constant(x.shape(), r), x); }, {3, 4}, 200),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto& r) { return mul(x, random_constant(x.shape(), r)); }, {3, 4}, 300),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return mul(x, x); }, {3, 4}, 400), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return neg(x); }, {2, 3}, 500), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return scale(x, -1.7); }, {2, 3}, 600), kGradTol);
}

TEST(AutodiffGradients, Broadcasting) {
  EXPECT_LT(worst_unary([](const Tensor& b, auto& r) { return add(random_constant({4, 3}, r), b); }, {1, 3}, 700),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& b, auto& r) { return mul(random_constant({4, 3}, r), b); }, {4, 1}, 800),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& b, auto& r) { return sub(random_constant({4, 3}, r), b); }, {1, 1}, 900),
            kGradTol);
}

TEST(AutodiffGradients, Matmul) {
  EXPECT_LT(worst_unary([](const Tensor& x, auto& r) { return matmul(x, random_constant({4, 5}, r)); }, {3, 4}, 1000),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto& r) { return matmul(random_constant({2, 3}, r), x); }, {3, 4}, 1100),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return transpose(x); }, {3, 4}, 1200), kGradTol);
}

TEST(AutodiffGradients, ConcatSliceGather) {
  EXPECT_LT(worst_unary(
                [](const Tensor& x, auto& r) {
                  const std::vector<Tensor> parts{x, random_constant({2, 4}, r), x};
                  return concat_rows(parts);
                },
                {3, 4}, 1300),
            kGradTol);
  EXPECT_LT(worst_unary(
                [](const Tensor& x, auto& r) {
                  const std::vector<Tensor> parts{random_constant({3, 1}, r), x};
                  return concat_cols(parts);
                },
                {3, 4}, 1400),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return slice_rows(x, 1, 2); }, {4, 3}, 1500), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return slice_cols(x, 1, 2); }, {3, 4}, 1600), kGradTol);
  EXPECT_LT(worst_unary(
                [](const Tensor& x, auto&) {
                  const std::vector<std::size_t> idx{2, 0, 2, 1};
                  return gather_rows(x, idx);
                },
                {3, 4}, 1700),
            kGradTol);
}

TEST(AutodiffGradients, Reductions) {
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return sum(mul(x, x)); }, {3, 4}, 1800), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return mean(mul(x, x)); }, {3, 4}, 1900), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return row_sum(x); }, {3, 4}, 2000), kGradTol);
}

TEST(AutodiffGradients, Nonlinearities) {
  // abs away from its kink: inputs bounded away from 0.
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return abs(x); }, {3, 4}, 2100, 0.1, 2.0), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return abs(neg(x)); }, {3, 4}, 2150, 0.1, 2.0), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return exp(x); }, {3, 4}, 2200), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return log(x); }, {3, 4}, 2300, 0.2, 3.0), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return tanh(x); }, {3, 4}, 2400), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return sigmoid(x); }, {3, 4}, 2500), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return softplus(x); }, {3, 4}, 2600), kGradTol);
}

TEST(AutodiffGradients, SoftmaxWithTemperature) {
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return softmax(x, 0.8); }, {3, 5}, 2700), kGradTol);
  // Gradient with respect to the temperature tensor itself.
  EXPECT_LT(worst_unary([](const Tensor& t, auto& r) { return softmax(random_constant({3, 5}, r), exp(t)); }, {1, 1},
                        2800),
            kGradTol);
}

TEST(AutodiffGradients, NormalizeDotCosine) {
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return l2_normalize(x); }, {3, 4}, 2900), kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto& r) { return dot(x, random_constant(x.shape(), r)); }, {2, 4}, 3000),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto& r) { return row_dot(x, random_constant(x.shape(), r)); }, {3, 4},
                        3100),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto& r) { return cosine_similarity(x, random_constant(x.shape(), r)); },
                        {3, 4}, 3200),
            kGradTol);
  EXPECT_LT(worst_unary([](const Tensor& x, auto& r) { return cosine_similarity(random_constant(x.shape(), r), x); },
                        {3, 4}, 3300),
            kGradTol);
}

TEST(AutodiffGradients, LayerNormAndAttention) {
  EXPECT_LT(worst_unary([](const Tensor& x, auto&) { return layer_norm(x); }, {3, 6}, 3400), kGradTol);
  EXPECT_LT(worst_unary(
                [](const Tensor& x, auto& r) {
                  const std::vector<std::size_t> seg{2, 3};
                  const auto k = random_constant({5, 4}, r);
                  const auto v = random_constant({5, 4}, r);
                  return segment_attention(x, k, v, seg, 2);
                },
                {5, 4}, 3500),
            kGradTol);
  EXPECT_LT(worst_unary(
                [](const Tensor& x, auto&) {
                  const std::vector<std::size_t> seg{3, 1, 2};
                  return segment_attention(x, x, x, seg, 2);
                },
                {6, 4}, 3600),
            kGradTol);
}

TEST(AutodiffGradients, ThreeLayerNetwork) {
  EXPECT_LT(worst_unary(
                [](const Tensor& x, auto& r) {
                  const auto w1 = random_constant({4, 5}, r);
                  const auto w2 = random_constant({5, 5}, r);
                  const auto w3 = random_constant({5, 2}, r);
                  return matmul(tanh(matmul(tanh(matmul(x, w1)), w2)), w3);
                },
                {5, 4}, 3700),
            kGradTol);
  // Same network differentiated with respect to its middle weights.
  EXPECT_LT(worst_unary(
                [](const Tensor& w2, auto& r) {
                  const auto x = random_constant({3, 4}, r);
                  const auto w1 = random_constant({4, 5}, r);
                  const auto w3 = random_constant({4, 2}, r);
                  return matmul(tanh(matmul(tanh(matmul(x, w1)), w2)), w3);
                },
                {5, 4}, 3800),
            kGradTol);
}

}  // namespace
}  // namespace partedit::ad
