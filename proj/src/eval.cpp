#include "sgs/eval.hpp"

#include <algorithm>
#include <cmath>

#include "sgs/losses.hpp"
#include "sgs/train.hpp"

namespace sgs {

std::unique_ptr<Generator<float>> load_generator(const Config& cfg,
                                                 const std::string& ckpt_path,
                                                 std::int64_t volume_size,
                                                 std::int64_t rois) {
  cfg.validate();
  const Checkpoint ck = read_checkpoint(ckpt_path);
  ModelConfig mc = cfg.model_config();
  mc.rois = rois;
  auto gen = std::make_unique<Generator<float>>(mc, volume_size, ck.master_seed);
  restore_params(gen->params(), ck);
  return gen;
}

std::unique_ptr<SegNet<float>> train_harness(const Config& cfg,
                                             const Dataset& data,
                                             std::uint64_t seed) {
  if (data.train.empty()) {
    throw DataError("harness training requires a train split");
  }
  ModelConfig mc = cfg.model_config();
  mc.rois = data.rois;
  const std::uint64_t hseed = derive_seed(seed, {stream_tag("harness")});
  auto harness = std::make_unique<SegNet<float>>(mc, hseed);
  RmsProp<float> opt(static_cast<float>(cfg.get_double("train.alpha")),
                     static_cast<float>(cfg.get_double("train.rho")),
                     static_cast<float>(cfg.get_double("train.rms_floor")));
  opt.ensure_state(harness->params());
  const std::int64_t epochs = cfg.get_int("eval.harness_epochs");
  const std::int64_t batch = cfg.get_int("train.batch_size");
  const float dice_eps = static_cast<float>(cfg.get_double("loss.dice_eps"));

  for (std::int64_t e = 1; e <= epochs; ++e) {
    std::vector<std::int64_t> idx(data.train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
    RngStream rng(derive_seed(hseed, {stream_tag("shuffle"),
                                      static_cast<std::uint64_t>(e)}));
    for (std::int64_t i = static_cast<std::int64_t>(idx.size()) - 1; i > 0; --i) {
      const std::int64_t j = rng.uniform_int(0, i);
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    for (std::size_t pos = 0; pos < idx.size(); pos += static_cast<std::size_t>(batch)) {
      const std::size_t end = std::min(idx.size(), pos + static_cast<std::size_t>(batch));
      std::vector<const Volume*> ys;
      std::vector<const MaskVolume*> ms;
      for (std::size_t i = pos; i < end; ++i) {
        const auto& c = data.train[static_cast<std::size_t>(idx[i])];
        ys.push_back(&c.y);
        ms.push_back(&c.mask);
      }
      auto y_t = volumes_to_tensor(ys);
      auto s_t = masks_to_tensor(ms);
      auto loss = seg_loss(harness->forward(y_t), s_t, dice_eps);
      loss.backward();
      opt.step(harness->params());
    }
  }
  return harness;
}

void save_harness(const SegNet<float>& harness, const std::string& path,
                  std::uint64_t seed) {
  Checkpoint ck;
  ck.master_seed = seed;
  append_params(ck, harness.params());
  write_checkpoint(path, ck);
}

std::unique_ptr<SegNet<float>> load_harness(const Config& cfg,
                                            const std::string& path,
                                            std::int64_t rois) {
  const Checkpoint ck = read_checkpoint(path);
  ModelConfig mc = cfg.model_config();
  mc.rois = rois;
  auto harness = std::make_unique<SegNet<float>>(mc, ck.master_seed);
  restore_params(harness->params(), ck);
  return harness;
}

std::vector<double> unet_score(const SegNet<float>& harness, const Volume& input,
                               const MaskVolume& truth, double thr) {
  NoGradGuard no_grad;
  auto probs = harness.forward(volumes_to_tensor({&input}));
  if (probs.dim(1) != truth.channels) {
    throw DataError("unet_score: harness ROI count does not match masks");
  }
  const std::int64_t m = truth.voxels_per_channel();
  std::vector<double> dices;
  for (std::int64_t c = 0; c < truth.channels; ++c) {
    std::vector<std::uint8_t> pred(static_cast<std::size_t>(m));
    const float* p = probs.data() + c * m;
    for (std::int64_t i = 0; i < m; ++i) {
      pred[static_cast<std::size_t>(i)] =
          p[i] > static_cast<float>(thr) ? 1 : 0;
    }
    dices.push_back(dice_binary(pred, mask_channel(truth, c)));
  }
  return dices;
}

MetricReport evaluate_checkpoint(const Config& cfg, const std::string& ckpt_path,
                                 const Dataset& data, const EvalOptions& opts) {
  if (data.test.empty()) throw DataError("evaluation requires a test split");
  auto gen = load_generator(cfg, ckpt_path, data.size, data.rois);

  std::unique_ptr<SegNet<float>> harness;
  if (!opts.harness_path.empty()) {
    harness = load_harness(cfg, opts.harness_path, data.rois);
  } else {
    harness = train_harness(cfg, data,
                            static_cast<std::uint64_t>(cfg.get_int("train.seed")));
    if (!opts.save_harness_path.empty()) {
      save_harness(*harness, opts.save_harness_path,
                   static_cast<std::uint64_t>(cfg.get_int("train.seed")));
    }
  }
  const double thr = cfg.get_double("eval.threshold");

  MetricReport report;
  for (std::int64_t r = 0; r < data.rois; ++r) {
    report.regions.push_back("roi_" + std::to_string(r + 1));
  }
  report.regions.push_back("all");

  for (const auto& c : data.test) {
    const Volume yhat = translate_volume(*gen, c.x);
    CaseMetrics cm;
    cm.case_id = c.id;
    cm.values["psnr.all"] = psnr(yhat, c.y);
    cm.values["ssim.all"] = ssim3d(yhat, c.y);
    cm.values["mae.all"] = mae(yhat, c.y);
    cm.values["nrmse.all"] = nrmse(yhat, c.y);
    cm.values["bias.all"] = bias(yhat, c.y);
    cm.values["variance.all"] = variance(yhat, c.y);
    const auto dices = unet_score(*harness, yhat, c.mask, thr);
    double dice_mean = 0.0;
    for (std::int64_t r = 0; r < data.rois; ++r) {
      const std::string region = ".roi_" + std::to_string(r + 1);
      const auto m = mask_channel(c.mask, r);
      cm.values["psnr" + region] = psnr_masked(yhat, c.y, m);
      cm.values["ssim" + region] = ssim3d_masked(yhat, c.y, m);
      cm.values["mae" + region] = mae_masked(yhat, c.y, m);
      cm.values["nrmse" + region] = nrmse_masked(yhat, c.y, m);
      cm.values["bias" + region] = bias_masked(yhat, c.y, m);
      cm.values["variance" + region] = variance_masked(yhat, c.y, m);
      cm.values["unet_score" + region] = dices[static_cast<std::size_t>(r)];
      dice_mean += dices[static_cast<std::size_t>(r)];
    }
    cm.values["unet_score.all"] = dice_mean / static_cast<double>(data.rois);
    report.cases.push_back(std::move(cm));
  }
  report.finalize();
  return report;
}

}  // namespace sgs
