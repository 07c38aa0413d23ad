#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sgs/ops.hpp"
#include "sgs/rng.hpp"

using namespace sgs;

namespace {

Tensor<double> rand_tensor(Shape shape, RngStream& rng, double lo = -1.0,
                           double hi = 1.0) {
  std::vector<double> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = rng.uniform(lo, hi);
  return Tensor<double>::from_data(std::move(shape), std::move(data));
}

}  // namespace

TEST(Conv3d, AllOnesFullOverlapCenterIs27) {
  // 3^3 ones kernel over a 3^3 ones input, padding 1: the center output
  // voxel sees the full kernel, so its value is 27.
  auto x = Tensor<double>::filled({1, 1, 3, 3, 3}, 1.0);
  auto w = Tensor<double>::filled({1, 1, 3, 3, 3}, 1.0);
  auto b = Tensor<double>::zeros({1});
  auto out = conv3d(x, w, b, 1, 1);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 3, 3, 3}));
  EXPECT_DOUBLE_EQ(out.data()[13], 27.0);  // (1,1,1) center
  EXPECT_DOUBLE_EQ(out.data()[0], 8.0);    // corner sees a 2^3 overlap
}

TEST(Conv3d, IdentityKernelReproducesInput) {
  RngStream rng(5);
  auto x = rand_tensor({2, 1, 4, 4, 4}, rng);
  auto w = Tensor<double>::zeros({1, 1, 3, 3, 3});
  w.data()[13] = 1.0;  // kernel center
  auto b = Tensor<double>::zeros({1});
  auto out = conv3d(x, w, b, 1, 1);
  for (std::int64_t i = 0; i < x.size(); ++i) {
    EXPECT_DOUBLE_EQ(out.data()[i], x.data()[i]);
  }
}

TEST(Conv3d, MatchesLoopOracleRandom) {
  RngStream rng(7);
  auto x = rand_tensor({1, 2, 4, 4, 4}, rng);
  auto w = rand_tensor({3, 2, 3, 3, 3}, rng);
  auto b = rand_tensor({3}, rng);
  auto out = conv3d(x, w, b, 1, 1);
  auto expect = oracle::conv3d_loops(x.vec(), 1, 2, 4, 4, 4, w.vec(), 3, 3,
                                     b.vec(), 1, 1);
  ASSERT_EQ(out.vec().size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) {
    EXPECT_NEAR(out.data()[i], expect[i], 1e-6 * std::max(1.0, std::abs(expect[i])));
  }
}

TEST(Conv3d, MatchesLoopOracleStridesAndPads) {
  RngStream rng(11);
  for (std::int64_t stride : {std::int64_t{1}, std::int64_t{2}}) {
    for (std::int64_t pad : {std::int64_t{0}, std::int64_t{1}}) {
      auto x = rand_tensor({2, 3, 6, 6, 6}, rng);
      auto w = rand_tensor({4, 3, 3, 3, 3}, rng);
      auto b = rand_tensor({4}, rng);
      auto out = conv3d(x, w, b, stride, pad);
      auto expect = oracle::conv3d_loops(x.vec(), 2, 3, 6, 6, 6, w.vec(), 4, 3,
                                         b.vec(), stride, pad);
      ASSERT_EQ(out.vec().size(), expect.size()) << stride << " " << pad;
      for (std::size_t i = 0; i < expect.size(); ++i) {
        ASSERT_NEAR(out.data()[i], expect[i],
                    1e-6 * std::max(1.0, std::abs(expect[i])));
      }
    }
  }
}

TEST(Conv3d, OutputExtentFormula) {
  RngStream rng(13);
  auto x = rand_tensor({1, 1, 7, 7, 7}, rng);
  auto w = rand_tensor({1, 1, 3, 3, 3}, rng);
  auto b = Tensor<double>::zeros({1});
  // D' = floor((D + 2 pad - k)/stride) + 1
  EXPECT_EQ(conv3d(x, w, b, 2, 1).dim(2), (7 + 2 - 3) / 2 + 1);
  EXPECT_EQ(conv3d(x, w, b, 2, 0).dim(2), (7 - 3) / 2 + 1);
}

TEST(Conv3d, ChannelMismatchIsStructuredError) {
  auto x = Tensor<double>::zeros({1, 3, 4, 4, 4});
  auto w = Tensor<double>::zeros({2, 2, 3, 3, 3});
  auto b = Tensor<double>::zeros({2});
  try {
    conv3d(x, w, b, 1, 1);
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
}

TEST(Conv3d, AsymmetricPaddingPreservesSizeForK2) {
  RngStream rng(17);
  auto x = rand_tensor({1, 2, 6, 6, 6}, rng);
  auto w = rand_tensor({4, 2, 2, 2, 2}, rng);
  auto b = Tensor<double>::zeros({4});
  ConvPad pad;
  pad.lo = {1, 1, 1};
  pad.hi = {0, 0, 0};
  auto out = conv3d_pad(x, w, b, 1, pad);
  EXPECT_EQ(out.shape(), (Shape{1, 4, 6, 6, 6}));
}

TEST(LeakyRelu, Definition) {
  auto x = Tensor<double>::from_data({3}, {0.0, -1.0, 2.0});
  auto out = leaky_relu(x, 0.2);
  EXPECT_DOUBLE_EQ(out.data()[0], 0.0);
  EXPECT_DOUBLE_EQ(out.data()[1], -0.2);
  EXPECT_DOUBLE_EQ(out.data()[2], 2.0);
}

TEST(LeakyRelu, MatchesScalarLoopOracle) {
  RngStream rng(19);
  auto x = rand_tensor({100}, rng, -2, 2);
  auto out = leaky_relu(x, 0.1);
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    EXPECT_DOUBLE_EQ(out.data()[i], std::max(v, 0.1 * v));
  }
}

TEST(ChannelStats, ConstantChannel) {
  auto x = Tensor<double>::filled({1, 1, 2, 2, 2}, 5.0);
  auto [mu, sigma] = channel_stats(x);
  EXPECT_DOUBLE_EQ(mu.item(), 5.0);
  EXPECT_DOUBLE_EQ(sigma.item(), 0.0);
}

TEST(ChannelStats, DirectSummationOracle) {
  // channel [1,2,3,4] -> mu 2.5, sigma sqrt(1.25) (population)
  auto x = Tensor<double>::from_data({1, 1, 1, 2, 2}, {1, 2, 3, 4});
  auto [mu, sigma] = channel_stats(x);
  EXPECT_DOUBLE_EQ(mu.item(), 2.5);
  EXPECT_DOUBLE_EQ(sigma.item(), std::sqrt(1.25));
}

TEST(ChannelStats, NoCrossInstanceMixing) {
  RngStream rng(23);
  auto a = rand_tensor({1, 2, 3, 3, 3}, rng);
  auto b = rand_tensor({1, 2, 3, 3, 3}, rng);
  std::vector<double> both(a.vec());
  both.insert(both.end(), b.vec().begin(), b.vec().end());
  auto stacked = Tensor<double>::from_data({2, 2, 3, 3, 3}, std::move(both));
  auto [mu, sigma] = channel_stats(stacked);
  auto [mu_a, sigma_a] = channel_stats(a);
  EXPECT_DOUBLE_EQ(mu.data()[0], mu_a.data()[0]);
  EXPECT_DOUBLE_EQ(sigma.data()[1], sigma_a.data()[1]);
  EXPECT_NE(mu.data()[0], mu.data()[2]);
}

TEST(ChannelStats, MatchesLoopOracleRandom) {
  RngStream rng(29);
  auto x = rand_tensor({3, 4, 2, 2, 2}, rng);
  auto [mu, sigma] = channel_stats(x);
  std::vector<double> emu, esigma;
  oracle::channel_stats_loops(x.vec(), 3, 4, 8, emu, esigma);
  for (std::size_t i = 0; i < emu.size(); ++i) {
    EXPECT_NEAR(mu.data()[i], emu[i], 1e-12);
    EXPECT_NEAR(sigma.data()[i], esigma[i], 1e-12);
  }
}

TEST(InstanceNorm, RemeasuredStatsAreZeroOne) {
  RngStream rng(31);
  auto x = rand_tensor({2, 3, 4, 4, 4}, rng, -3, 3);
  auto normed = instance_norm(x, kStatEps);
  auto [mu, sigma] = channel_stats(normed);
  for (std::int64_t i = 0; i < mu.size(); ++i) {
    EXPECT_LT(std::abs(mu.data()[i]), 1e-6);
    EXPECT_LT(std::abs(sigma.data()[i] - 1.0), 1e-5);
  }
}

TEST(Linear, MatchesMatmulOracle) {
  RngStream rng(37);
  auto x = rand_tensor({3, 5}, rng);
  auto w = rand_tensor({5, 4}, rng);
  auto b = rand_tensor({4}, rng);
  auto out = linear(x, w, b);
  auto expect = oracle::matmul_loops(x.vec(), 3, 5, w.vec(), 4, b.vec());
  for (std::size_t i = 0; i < expect.size(); ++i) {
    EXPECT_NEAR(out.data()[i], expect[i], 1e-12);
  }
}

TEST(Concat, ShapeArithmetic) {
  auto a = Tensor<double>::zeros({2, 8, 2, 2, 2});
  auto b = Tensor<double>::zeros({2, 16, 2, 2, 2});
  auto c = concat_channels<double>({a, b});
  EXPECT_EQ(c.shape(), (Shape{2, 24, 2, 2, 2}));
  auto bad = Tensor<double>::zeros({1, 8, 2, 2, 2});
  EXPECT_THROW(concat_channels<double>({a, bad}), Error);
}

TEST(Concat, ValuesInRightSlots) {
  auto a = Tensor<double>::filled({1, 1, 1, 1, 2}, 1.0);
  auto b = Tensor<double>::filled({1, 2, 1, 1, 2}, 2.0);
  auto c = concat_channels<double>({a, b});
  EXPECT_DOUBLE_EQ(c.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(c.data()[2], 2.0);
  EXPECT_DOUBLE_EQ(c.data()[5], 2.0);
}

TEST(Sigmoid, Half) {
  auto x = Tensor<double>::zeros({1});
  EXPECT_DOUBLE_EQ(sigmoid(x).item(), 0.5);
}

TEST(Sigmoid, StableAtExtremes) {
  auto x = Tensor<double>::from_data({2}, {-100.0, 100.0});
  auto y = sigmoid(x);
  EXPECT_GE(y.data()[0], 0.0);
  EXPECT_LE(y.data()[1], 1.0);
  EXPECT_TRUE(std::isfinite(y.data()[0]));
}

TEST(Upsample, DuplicatesVoxels) {
  auto x = Tensor<double>::from_data({1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto y = upsample_nearest_2(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 4, 4, 4}));
  EXPECT_DOUBLE_EQ(y.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(y.data()[1], 1.0);
  EXPECT_DOUBLE_EQ(y.data()[2], 2.0);
  // voxel (z=3,y=3,x=3) comes from input (1,1,1) = 8
  EXPECT_DOUBLE_EQ(y.data()[3 * 16 + 3 * 4 + 3], 8.0);
}

TEST(MaxPool, SelectsMaxAndRoutesTies) {
  auto x = Tensor<double>::zeros({1, 1, 2, 2, 2}, true);
  for (std::int64_t i = 0; i < 8; ++i) x.data()[i] = 1.0;  // all tied
  auto y = maxpool3d_2(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 1.0);
  sum(y).backward();
  // tie broken toward the lowest linear index
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  for (std::int64_t i = 1; i < 8; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 0.0);
}

TEST(MaxPool, Values) {
  RngStream rng(41);
  auto x = rand_tensor({1, 2, 4, 4, 4}, rng);
  auto y = maxpool3d_2(x);
  // block (0,0,0) of channel 0
  double best = -1e30;
  for (std::int64_t z = 0; z < 2; ++z) {
    for (std::int64_t yy = 0; yy < 2; ++yy) {
      for (std::int64_t xx = 0; xx < 2; ++xx) {
        best = std::max(best, x.data()[(z * 4 + yy) * 4 + xx]);
      }
    }
  }
  EXPECT_DOUBLE_EQ(y.data()[0], best);
}

TEST(Broadcasts, Shapes) {
  auto v = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto out = broadcast_nc(v, {2, 3, 2, 2, 2});
  EXPECT_EQ(out.shape(), (Shape{2, 3, 2, 2, 2}));
  EXPECT_DOUBLE_EQ(out.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(out.data()[8], 2.0);
  EXPECT_DOUBLE_EQ(out.data()[24], 4.0);

  auto c = Tensor<double>::from_data({2}, {7, 9});
  auto outc = broadcast_c(c, {1, 2, 1, 1, 2});
  EXPECT_DOUBLE_EQ(outc.data()[0], 7.0);
  EXPECT_DOUBLE_EQ(outc.data()[2], 9.0);

  auto z = Tensor<double>::from_data({1, 1, 1, 1, 2}, {3, 4});
  auto outz = broadcast_channel(z, 3);
  EXPECT_EQ(outz.shape(), (Shape{1, 3, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(outz.data()[4], 3.0);
}

TEST(Reductions, MeanSumInstanceMean) {
  auto x = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(sum(x).item(), 10.0);
  EXPECT_DOUBLE_EQ(mean(x).item(), 2.5);
  auto im = instance_mean(x);
  EXPECT_DOUBLE_EQ(im.data()[0], 1.5);
  EXPECT_DOUBLE_EQ(im.data()[1], 3.5);
}
