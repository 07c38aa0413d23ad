#include <gtest/gtest.h>

#include "sgs/ops.hpp"
#include "sgs/tensor.hpp"

using namespace sgs;

TEST(Tensor, ShapeDataInvariant) {
  auto t = Tensor<float>::zeros({2, 3, 4});
  EXPECT_EQ(t.size(), 24);
  EXPECT_EQ(numel(t.shape()), static_cast<std::int64_t>(t.vec().size()));
  EXPECT_THROW(Tensor<float>::from_data({2, 2}, {1.f, 2.f, 3.f}), Error);
}

TEST(Tensor, LeafDefaultsToNoGrad) {
  auto t = Tensor<float>::filled({3}, 1.f);
  EXPECT_FALSE(t.requires_grad());
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, GradMatchesShape) {
  auto t = Tensor<float>::zeros({2, 2}, true);
  t.grad();
  EXPECT_EQ(t.grad_vec().size(), 4u);
}

TEST(Tensor, BackwardRequiresScalar) {
  auto t = Tensor<float>::zeros({2}, true);
  EXPECT_THROW(t.backward(), Error);
}

TEST(Tensor, TensorUsedTwiceAccumulates) {
  // d/dx (x + x) = 2
  auto x = Tensor<double>::filled({3}, 1.5, true);
  auto loss = sum(add(x, x));
  loss.backward();
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0);
}

TEST(Tensor, BackwardAccumulatesAcrossCalls) {
  auto x = Tensor<double>::filled({2}, 1.0, true);
  sum(x).backward();
  sum(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Tensor, DetachStopsGradients) {
  auto x = Tensor<double>::filled({2}, 3.0, true);
  auto d = x.detach();
  EXPECT_FALSE(d.requires_grad());
  auto loss = sum(mul(d, d));
  EXPECT_FALSE(loss.requires_grad());
}

TEST(Tensor, NoGradGuardSuppressesTape) {
  auto x = Tensor<double>::filled({2}, 3.0, true);
  {
    NoGradGuard guard;
    auto y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
  }
  auto y = mul(x, x);
  EXPECT_TRUE(y.requires_grad());
}

TEST(Tensor, FiniteGradientsOnFiniteInputs) {
  auto x = Tensor<double>::from_data({4}, {0.5, -2.0, 7.0, 0.01}, true);
  auto loss = mean(sigmoid(mul(leaky_relu(x, 0.2), x)));
  loss.backward();
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(std::isfinite(x.grad()[i]));
}

TEST(Tensor, ParametersSurviveGraphTeardown) {
  // intermediates are released with the loss root; the leaf keeps its grad
  auto p = Tensor<double>::filled({2}, 1.0, true);
  {
    auto loss = sum(mul_scalar(p, 2.0));
    loss.backward();
  }
  EXPECT_DOUBLE_EQ(p.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(p.data()[0], 1.0);
}

TEST(Tensor, ScalarItem) {
  auto s = Tensor<float>::scalar(4.25f);
  EXPECT_FLOAT_EQ(s.item(), 4.25f);
  auto v = Tensor<float>::zeros({3});
  EXPECT_THROW(v.item(), Error);
}
