#include <gtest/gtest.h>

#include "sgs/gradcheck.hpp"
#include "sgs/ops.hpp"
#include "sgs/rng.hpp"

using namespace sgs;

TEST(GradCheck, Conv3dAtSpecTolerance) {
  // conv3d on a 4^3 input, eps 1e-4 -> error < 1e-4
  Conv3dCheckConfig cfg;
  EXPECT_LT(conv3d_grad_check(cfg, 1e-4), 1e-4);
}

TEST(GradCheck, LinearTighterTolerance) {
  // linear layer, eps 1e-4 -> error < 1e-5
  RngStream rng(3);
  std::vector<double> xd(21), wd(35), bd(5);
  RngStream r2(4);
  for (auto& v : xd) v = r2.uniform(-1, 1);
  for (auto& v : wd) v = r2.uniform(-0.5, 0.5);
  for (auto& v : bd) v = r2.uniform(-0.2, 0.2);
  auto x = Tensor<double>::from_data({3, 7}, xd);
  x.node()->requires_grad = true;
  auto w = Tensor<double>::from_data({7, 5}, wd);
  w.node()->requires_grad = true;
  auto b = Tensor<double>::from_data({5}, bd);
  b.node()->requires_grad = true;
  auto err = max_rel_grad_error([&] { return mean(linear(x, w, b)); },
                                {x, w, b}, 1e-4);
  EXPECT_LT(err, 1e-5);
}

TEST(GradCheck, LeakyReluAwayFromKink) {
  // eps 1e-5 -> error < 1e-6
  std::vector<double> xd = {0.5, -0.7, 1.2, -0.3, 0.9, -1.5};
  auto x = Tensor<double>::from_data({6}, xd);
  x.node()->requires_grad = true;
  auto err = max_rel_grad_error([&] { return mean(leaky_relu(x, 0.2)); }, {x},
                                1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, EpsilonPrecondition) {
  Conv3dCheckConfig cfg;
  EXPECT_THROW(conv3d_grad_check(cfg, 1e-7), ConfigError);
  EXPECT_THROW(conv3d_grad_check(cfg, 1e-2), ConfigError);
}

TEST(GradCheck, FullSuitePasses) {
  const GradCheckReport report = run_gradcheck_suite();
  ASSERT_FALSE(report.entries.empty());
  for (const auto& e : report.entries) {
    EXPECT_LT(e.max_rel_err, 1e-4) << e.name;
  }
}
