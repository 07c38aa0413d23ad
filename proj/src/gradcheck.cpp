#include "sgs/gradcheck.hpp"

#include <cmath>

#include "sgs/losses.hpp"
#include "sgs/networks.hpp"
#include "sgs/ops.hpp"
#include "sgs/rng.hpp"
#include "sgs/style.hpp"

namespace sgs {

namespace {

Tensor<double> random_tensor(Shape shape, RngStream& rng, double lo, double hi,
                             bool requires_grad = true) {
  std::vector<double> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = rng.uniform(lo, hi);
  auto t = Tensor<double>::from_data(std::move(shape), std::move(data));
  t.node()->requires_grad = requires_grad;
  return t;
}

// values bounded away from zero, for kinked ops (|x| in [0.2, 1.0])
Tensor<double> random_tensor_away_from_zero(Shape shape, RngStream& rng) {
  std::vector<double> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) {
    const double mag = rng.uniform(0.2, 1.0);
    v = rng.next_double() < 0.5 ? -mag : mag;
  }
  auto t = Tensor<double>::from_data(std::move(shape), std::move(data));
  t.node()->requires_grad = true;
  return t;
}

// all-distinct values with gaps far above the probe epsilon, for maxpool
Tensor<double> random_distinct_tensor(Shape shape, RngStream& rng) {
  const std::int64_t n = numel(shape);
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    const std::int64_t j = rng.uniform_int(0, i);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<double> data(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    data[static_cast<std::size_t>(i)] =
        0.05 * static_cast<double>(perm[static_cast<std::size_t>(i)]);
  }
  auto t = Tensor<double>::from_data(std::move(shape), std::move(data));
  t.node()->requires_grad = true;
  return t;
}

// fixed random weighting so the scalarized loss exercises the full Jacobian
Tensor<double> weighting_like(const Tensor<double>& t, RngStream& rng) {
  return random_tensor(t.shape(), rng, 0.5, 1.5, false);
}

}  // namespace

double max_rel_grad_error(const std::function<Tensor<double>()>& loss_fn,
                          std::vector<Tensor<double>> leaves, double eps,
                          int sample_per_tensor) {
  if (eps < 1e-6 || eps > 1e-3) {
    throw ConfigError("gradcheck: eps must lie in [1e-6, 1e-3]");
  }
  auto loss = loss_fn();
  for (auto& leaf : leaves) leaf.zero_grad();
  loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    leaf.grad();  // ensure allocated
    analytic.push_back(leaf.grad_vec());
    leaf.zero_grad();
  }

  double worst = 0.0;
  RngStream pick(12345);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    std::vector<std::int64_t> indices;
    if (sample_per_tensor > 0 &&
        leaf.size() > static_cast<std::int64_t>(sample_per_tensor)) {
      for (int s = 0; s < sample_per_tensor; ++s) {
        indices.push_back(pick.uniform_int(0, leaf.size() - 1));
      }
    } else {
      for (std::int64_t i = 0; i < leaf.size(); ++i) indices.push_back(i);
    }
    for (std::int64_t idx : indices) {
      const double saved = leaf.data()[idx];
      leaf.data()[idx] = saved + eps;
      const double up = loss_fn().item();
      leaf.data()[idx] = saved - eps;
      const double down = loss_fn().item();
      leaf.data()[idx] = saved;
      const double central = (up - down) / (2.0 * eps);
      const double a = analytic[li][static_cast<std::size_t>(idx)];
      const double err = std::abs(a - central) / std::max(1.0, std::abs(central));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double conv3d_grad_check(const Conv3dCheckConfig& cfg, double eps) {
  RngStream rng(99);
  auto x = random_tensor(cfg.input_shape, rng, -1.0, 1.0);
  auto w = random_tensor(cfg.weight_shape, rng, -0.5, 0.5);
  auto b = random_tensor({cfg.weight_shape[0]}, rng, -0.2, 0.2);
  auto r = weighting_like(
      conv3d(x.detach(), w.detach(), b.detach(), cfg.stride, cfg.padding), rng);
  auto loss_fn = [&]() {
    return sum(mul(conv3d(x, w, b, cfg.stride, cfg.padding), r));
  };
  return max_rel_grad_error(loss_fn, {x, w, b}, eps);
}

GradCheckReport run_gradcheck_suite() {
  GradCheckReport report;
  auto record = [&](const std::string& name, double err) {
    report.entries.push_back({name, err});
  };
  const double eps = 1e-5;

  {
    Conv3dCheckConfig cfg;
    record("conv3d_s1_p1", conv3d_grad_check(cfg, 1e-4));
    cfg.stride = 2;
    cfg.padding = 0;
    record("conv3d_s2_p0", conv3d_grad_check(cfg, 1e-4));
    cfg.input_shape = {2, 1, 6, 6, 6};
    cfg.weight_shape = {2, 1, 3, 3, 3};
    cfg.stride = 2;
    cfg.padding = 1;
    record("conv3d_s2_p1", conv3d_grad_check(cfg, 1e-4));
  }
  {
    // channel-changing 2x2x2 conv with asymmetric (1,0) padding
    RngStream rng(7);
    auto x = random_tensor({1, 2, 4, 4, 4}, rng, -1, 1);
    auto w = random_tensor({3, 2, 2, 2, 2}, rng, -0.5, 0.5);
    auto b = random_tensor({3}, rng, -0.2, 0.2);
    ConvPad pad;
    pad.lo = {1, 1, 1};
    pad.hi = {0, 0, 0};
    auto r = weighting_like(conv3d_pad(x.detach(), w.detach(), b.detach(), 1, pad), rng);
    record("conv3d_asym_k2",
           max_rel_grad_error(
               [&] { return sum(mul(conv3d_pad(x, w, b, 1, pad), r)); },
               {x, w, b}, eps));
  }
  {
    RngStream rng(11);
    auto x = random_tensor({3, 7}, rng, -1, 1);
    auto w = random_tensor({7, 5}, rng, -0.5, 0.5);
    auto b = random_tensor({5}, rng, -0.2, 0.2);
    auto r = weighting_like(linear(x.detach(), w.detach(), b.detach()), rng);
    record("linear", max_rel_grad_error(
                         [&] { return sum(mul(linear(x, w, b), r)); },
                         {x, w, b}, 1e-4));
  }
  {
    RngStream rng(13);
    auto x = random_tensor_away_from_zero({2, 3, 4, 4, 4}, rng);
    auto r = weighting_like(x, rng);
    record("leaky_relu",
           max_rel_grad_error(
               [&] { return sum(mul(leaky_relu(x, 0.2), r)); }, {x}, eps));
    record("abs", max_rel_grad_error(
                      [&] { return sum(mul(abs_val(x), r)); }, {x}, eps));
  }
  {
    RngStream rng(17);
    auto x = random_tensor({2, 5}, rng, -2, 2);
    auto r = weighting_like(x, rng);
    record("sigmoid", max_rel_grad_error(
                          [&] { return sum(mul(sigmoid(x), r)); }, {x}, eps));
  }
  {
    RngStream rng(19);
    auto a = random_tensor({2, 3, 4}, rng, -1, 1);
    auto b = random_tensor({2, 3, 4}, rng, -1, 1);
    auto r = weighting_like(a, rng);
    record("add_sub_mul",
           max_rel_grad_error(
               [&] { return sum(mul(mul(add(a, b), sub(a, b)), r)); }, {a, b},
               eps));
    record("mean_scalar",
           max_rel_grad_error(
               [&] { return add(mean(a), mul_scalar(sum(b), 0.25)); }, {a, b},
               eps));
    auto rim = random_tensor({2}, rng, 0.5, 1.5, false);
    record("instance_mean",
           max_rel_grad_error(
               [&] { return sum(mul(instance_mean(a), rim)); }, {a}, eps));
  }
  {
    RngStream rng(23);
    auto a = random_tensor({2, 2, 3, 3, 3}, rng, -1, 1);
    auto b = random_tensor({2, 3, 3, 3, 3}, rng, -1, 1);
    auto r = weighting_like(concat_channels<double>({a.detach(), b.detach()}), rng);
    record("concat_channels",
           max_rel_grad_error(
               [&] { return sum(mul(concat_channels<double>({a, b}), r)); },
               {a, b}, eps));
    auto rs = weighting_like(select_channel(b.detach(), 1), rng);
    record("select_channel",
           max_rel_grad_error(
               [&] { return sum(mul(select_channel(b, 1), rs)); }, {b}, eps));
  }
  {
    RngStream rng(29);
    auto x = random_tensor({2, 8}, rng, -1, 1);
    auto r = weighting_like(columns(x.detach(), 2, 3), rng);
    record("columns", max_rel_grad_error(
                          [&] { return sum(mul(columns(x, 2, 3), r)); }, {x},
                          eps));
    auto x5 = random_tensor({2, 2, 2, 2, 2}, rng, -1, 1);
    auto rf = weighting_like(flatten(x5.detach()), rng);
    record("flatten", max_rel_grad_error(
                          [&] { return sum(mul(flatten(x5), rf)); }, {x5}, eps));
  }
  {
    RngStream rng(31);
    Shape like{2, 3, 2, 2, 2};
    auto v = random_tensor({2, 3}, rng, -1, 1);
    auto c = random_tensor({3}, rng, -1, 1);
    auto z = random_tensor({2, 1, 2, 2, 2}, rng, -1, 1);
    auto r = random_tensor(like, rng, 0.5, 1.5, false);
    record("broadcast_nc",
           max_rel_grad_error(
               [&] { return sum(mul(broadcast_nc(v, like), r)); }, {v}, eps));
    record("broadcast_c",
           max_rel_grad_error(
               [&] { return sum(mul(broadcast_c(c, like), r)); }, {c}, eps));
    record("broadcast_channel",
           max_rel_grad_error(
               [&] { return sum(mul(broadcast_channel(z, 3), r)); }, {z}, eps));
  }
  {
    RngStream rng(37);
    auto x = random_tensor({1, 2, 2, 2, 2}, rng, -1, 1);
    auto r = weighting_like(upsample_nearest_2(x.detach()), rng);
    record("upsample_nearest",
           max_rel_grad_error(
               [&] { return sum(mul(upsample_nearest_2(x), r)); }, {x}, eps));
    auto xp = random_distinct_tensor({1, 2, 4, 4, 4}, rng);
    auto rp = weighting_like(maxpool3d_2(xp.detach()), rng);
    record("maxpool",
           max_rel_grad_error(
               [&] { return sum(mul(maxpool3d_2(xp), rp)); }, {xp}, eps));
  }
  {
    RngStream rng(41);
    auto x = random_tensor({2, 3, 4, 4, 4}, rng, -1, 1);
    auto r = weighting_like(x, rng);
    record("instance_norm",
           max_rel_grad_error(
               [&] { return sum(mul(instance_norm(x, kStatEps), r)); }, {x},
               eps));
    auto rmu = random_tensor({2, 3}, rng, 0.5, 1.5, false);
    auto rsg = random_tensor({2, 3}, rng, 0.5, 1.5, false);
    record("channel_stats",
           max_rel_grad_error(
               [&] {
                 auto [mu, sigma] = channel_stats(x);
                 return add(sum(mul(mu, rmu)), sum(mul(sigma, rsg)));
               },
               {x}, eps));
  }
  {
    RngStream rng(43);
    auto f = random_tensor({2, 3, 4, 4, 4}, rng, -1, 1);
    auto gamma = random_tensor({2, 3}, rng, 0.5, 1.5);
    auto beta = random_tensor({2, 3}, rng, -0.5, 0.5);
    auto r = weighting_like(f, rng);
    record("adain",
           max_rel_grad_error(
               [&] { return sum(mul(adain(f, gamma, beta), r)); },
               {f, gamma, beta}, eps));
  }
  {
    // style factors through the affine, and noise scaling parameters
    RngStream rng(47);
    ParamStore<double> store;
    StyleAffine<double> affine(store, "affine", 16, 3, 555);
    auto w = random_tensor({2, 16}, rng, -1, 1);
    auto rg = random_tensor({2, 3}, rng, 0.5, 1.5, false);
    auto rb = random_tensor({2, 3}, rng, 0.5, 1.5, false);
    std::vector<Tensor<double>> leaves{w, store.find("affine.weight"),
                                       store.find("affine.bias")};
    record("style_factors",
           max_rel_grad_error(
               [&] {
                 auto [g, b] = affine.factors(w);
                 return add(sum(mul(g, rg)), sum(mul(b, rb)));
               },
               leaves, eps));

    ParamStore<double> nstore;
    NoiseModule<double> noise(nstore, "noise", 3);
    auto p = nstore.find("noise.scale");
    p.data()[0] = 0.4;
    p.data()[1] = -0.3;
    p.data()[2] = 0.7;
    auto f = random_tensor({2, 3, 2, 2, 2}, rng, -1, 1);
    auto rn = weighting_like(f, rng);
    record("inject_noise",
           max_rel_grad_error(
               [&] {
                 RngStream noise_rng(321);  // same draw every evaluation
                 return sum(mul(noise.apply(f, 0.5, Mode::kTrain, noise_rng), rn));
               },
               {f, p}, eps));
  }
  {
    RngStream rng(53);
    auto pred = random_tensor({2, 1, 3, 3, 3}, rng, 0.2, 0.8);
    std::vector<double> tdata(static_cast<std::size_t>(numel(pred.shape())));
    for (auto& v : tdata) v = rng.next_double() < 0.5 ? 0.0 : 1.0;
    auto target = Tensor<double>::from_data(pred.shape(), std::move(tdata));
    record("bce_loss", max_rel_grad_error([&] { return bce_loss(pred, target); },
                                          {pred}, eps));
    record("dice_loss",
           max_rel_grad_error([&] { return dice_loss(pred, target, 1e-5); },
                              {pred}, eps));
    auto pred2 = random_tensor({2, 2, 3, 3, 3}, rng, 0.2, 0.8);
    std::vector<double> t2(static_cast<std::size_t>(numel(pred2.shape())));
    for (auto& v : t2) v = rng.next_double() < 0.5 ? 0.0 : 1.0;
    auto target2 = Tensor<double>::from_data(pred2.shape(), std::move(t2));
    record("seg_loss",
           max_rel_grad_error([&] { return seg_loss(pred2, target2, 1e-5); },
                              {pred2}, eps));
  }
  {
    RngStream rng(59);
    auto yhat = random_tensor({2, 1, 3, 3, 3}, rng, -1, 1);
    auto y = random_tensor({2, 1, 3, 3, 3}, rng, 2, 4, false);  // diffs away from 0
    record("content_l1",
           max_rel_grad_error([&] { return content_l1(yhat, y); }, {yhat}, eps));
  }
  {
    // adversarial losses through a tiny critic, gradients w.r.t. its params
    ModelConfig mc;
    mc.adain_enabled = false;
    mc.noise_enabled = false;
    mc.critic_channels = {2, 4, 8, 16};
    Critic<double> critic(mc, 777);
    RngStream rng(61);
    auto real = random_tensor({2, 1, 16, 16, 16}, rng, 0, 2, false);
    auto fake = random_tensor({2, 1, 16, 16, 16}, rng, 0, 2, false);
    std::vector<Tensor<double>> leaves;
    for (auto& [name, p] : critic.params().items()) leaves.push_back(p);
    record("adv_loss_critic",
           max_rel_grad_error(
               [&] {
                 return adv_loss_critic(critic.forward(real),
                                        critic.forward(fake));
               },
               leaves, 1e-4, 3));
  }
  {
    // generator-side adversarial loss through the full style generator
    ModelConfig mc;
    mc.style.style_width = 32;
    mc.style.mapping_channels = {2, 4, 8, 16};
    mc.dcitn_stem_channels = 4;
    mc.dcitn_growth = 2;
    mc.dcitn_layers = 2;
    mc.critic_channels = {2, 4, 8, 16};
    Generator<double> gen(mc, 16, 888);
    Critic<double> critic(mc, 999);
    // give the noise scales a non-zero operating point
    for (auto& [name, p] : gen.params().items()) {
      if (name.find(".noise.scale") != std::string::npos) {
        for (std::int64_t i = 0; i < p.size(); ++i) p.data()[i] = 0.1;
      }
    }
    RngStream rng(67);
    auto x = random_tensor({1, 1, 16, 16, 16}, rng, 0.5, 2.5, false);
    auto y = random_tensor({1, 1, 16, 16, 16}, rng, 0.5, 2.5, false);
    std::vector<Tensor<double>> leaves;
    for (auto& [name, p] : gen.params().items()) leaves.push_back(p);
    LossWeights w;
    w.lambda1 = 10.0;
    w.lambda2 = 0.0;
    record("adv_and_content_through_generator",
           max_rel_grad_error(
               [&] {
                 RngStream noise_rng(4242);  // identical noise per evaluation
                 auto yhat = gen.forward(x, Mode::kTrain, noise_rng);
                 auto adv = adv_loss_generator(critic.forward(yhat));
                 auto content = content_l1(yhat, y);
                 return total_generator_loss(adv, content, Tensor<double>(), w);
               },
               leaves, 1e-5, 2));
  }
  return report;
}

}  // namespace sgs
