#include "sgs/train.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "sgs/losses.hpp"
#include "sgs/metrics.hpp"
#include "sgs/parallel.hpp"

namespace sgs {

namespace fs = std::filesystem;

Volume translate_volume(const Generator<float>& g, const Volume& x) {
  NoGradGuard no_grad;
  RngStream unused(0);
  auto t = volumes_to_tensor({&x});
  auto out = g.forward(t, Mode::kTest, unused);
  return tensor_to_volume(out);
}

void append_params(Checkpoint& ck, const ParamStore<float>& store) {
  for (const auto& [name, p] : store.items()) {
    CheckpointEntry e;
    e.name = name;
    for (auto d : p.shape()) e.dims.push_back(static_cast<std::uint32_t>(d));
    e.data = p.vec();
    ck.params.push_back(std::move(e));
  }
}

void append_opt_state(Checkpoint& ck, const ParamStore<float>& store,
                      const RmsProp<float>& opt) {
  const auto& state = opt.state();
  if (state.size() != store.size()) {
    throw Error("optimizer state not initialized for checkpointing");
  }
  std::size_t i = 0;
  for (const auto& [name, p] : store.items()) {
    CheckpointEntry e;
    e.name = "opt." + name;
    for (auto d : p.shape()) e.dims.push_back(static_cast<std::uint32_t>(d));
    e.data = state[i++];
    ck.opt_state.push_back(std::move(e));
  }
}

namespace {

const CheckpointEntry* find_entry(const std::vector<CheckpointEntry>& entries,
                                  const std::string& name) {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

}  // namespace

void restore_params(ParamStore<float>& store, const Checkpoint& ck) {
  for (auto& [name, p] : store.items()) {
    const CheckpointEntry* e = find_entry(ck.params, name);
    if (e == nullptr) {
      throw DataError("checkpoint is missing parameter '" + name + "'");
    }
    if (e->data.size() != static_cast<std::size_t>(p.size())) {
      throw DataError("checkpoint parameter '" + name +
                      "' has incompatible size (model config mismatch?)");
    }
    std::copy(e->data.begin(), e->data.end(), p.data());
  }
}

void restore_opt_state(ParamStore<float>& store, RmsProp<float>& opt,
                       const Checkpoint& ck) {
  opt.ensure_state(store);
  std::size_t i = 0;
  for (const auto& [name, p] : store.items()) {
    const CheckpointEntry* e = find_entry(ck.opt_state, "opt." + name);
    if (e == nullptr) {
      throw DataError("checkpoint is missing optimizer state for '" + name +
                      "'");
    }
    if (e->data.size() != static_cast<std::size_t>(p.size())) {
      throw DataError("optimizer state '" + name + "' has incompatible size");
    }
    opt.state()[i++] = e->data;
  }
}

Trainer::Trainer(const Config& cfg, const Dataset& data) : data_(&data) {
  cfg.validate();
  if (data.train.empty()) throw ConfigError("training requires a train split");
  weights_ = cfg.loss_weights();
  dice_eps_ = cfg.get_double("loss.dice_eps");
  batch_size_ = cfg.get_int("train.batch_size");
  n_critic_ = cfg.get_int("train.n_critic");
  val_cases_ = cfg.get_int("train.val_cases");
  sg_enabled_ = cfg.get_bool("train.sg_enabled");
  seed_ = static_cast<std::uint64_t>(cfg.get_int("train.seed"));

  const auto schedule = cfg.get_int_list("train.schedule");
  const std::int64_t scale = cfg.get_int("train.scale");
  phases_ = {{PhaseSpec::kGan, schedule[0] / scale},
             {PhaseSpec::kSeg, schedule[1] / scale},
             {PhaseSpec::kGan, schedule[2] / scale},
             {PhaseSpec::kSeg, schedule[3] / scale}};

  ModelConfig mc = cfg.model_config();
  mc.rois = data.rois;
  gen_ = std::make_unique<Generator<float>>(mc, data.size, seed_);
  critic_ = std::make_unique<Critic<float>>(mc, seed_);
  if (sg_enabled_) seg_ = std::make_unique<SegNet<float>>(mc, seed_);

  const float alpha = static_cast<float>(cfg.get_double("train.alpha"));
  const float rho = static_cast<float>(cfg.get_double("train.rho"));
  const float floor = static_cast<float>(cfg.get_double("train.rms_floor"));
  opt_gen_ = std::make_unique<RmsProp<float>>(alpha, rho, floor);
  opt_critic_ = std::make_unique<RmsProp<float>>(alpha, rho, floor);
  if (seg_) opt_seg_ = std::make_unique<RmsProp<float>>(alpha, rho, floor);
  opt_gen_->ensure_state(gen_->params());
  opt_critic_->ensure_state(critic_->params());
  if (seg_) opt_seg_->ensure_state(seg_->params());

  const int threads = static_cast<int>(cfg.get_int("train.threads"));
  if (threads > 0) ThreadPool::instance().set_threads(threads);
}

std::vector<std::int64_t> Trainer::shuffled_train_indices(
    std::int64_t epoch) const {
  std::vector<std::int64_t> idx(data_->train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
  RngStream rng(derive_seed(seed_, {stream_tag("shuffle"),
                                    static_cast<std::uint64_t>(epoch)}));
  for (std::int64_t i = static_cast<std::int64_t>(idx.size()) - 1; i > 0; --i) {
    const std::int64_t j = rng.uniform_int(0, i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

double Trainer::validation_psnr() const {
  const std::int64_t n =
      std::min<std::int64_t>(val_cases_, static_cast<std::int64_t>(data_->test.size()));
  if (n <= 0) return 0.0;
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& c = data_->test[static_cast<std::size_t>(i)];
    acc += psnr(translate_volume(*gen_, c.x), c.y);
  }
  return acc / static_cast<double>(n);
}

EpochStats Trainer::gan_epoch_impl(std::int64_t global_epoch, bool sg_active,
                                   const TrainObserver* obs) {
  const auto order = shuffled_train_indices(global_epoch);
  LossWeights w = weights_;
  if (!sg_active) w.lambda2 = 0.0;

  EpochStats stats;
  std::int64_t batches = 0;
  for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(batch_size_)) {
    const std::size_t end =
        std::min(order.size(), pos + static_cast<std::size_t>(batch_size_));
    std::vector<const Volume*> xs, ys;
    std::vector<const MaskVolume*> ms;
    for (std::size_t i = pos; i < end; ++i) {
      const auto& c = data_->train[static_cast<std::size_t>(order[i])];
      xs.push_back(&c.x);
      ys.push_back(&c.y);
      ms.push_back(&c.mask);
    }
    auto x_t = volumes_to_tensor(xs);
    auto y_t = volumes_to_tensor(ys);

    RngStream noise_rng(derive_seed(
        seed_, {stream_tag("noise"), static_cast<std::uint64_t>(global_epoch),
                static_cast<std::uint64_t>(batches)}));
    auto yhat = gen_->forward(x_t, Mode::kTrain, noise_rng);
    auto yhat_detached = yhat.detach();

    for (std::int64_t k = 0; k < n_critic_; ++k) {
      auto scores_real = critic_->forward(y_t);
      auto scores_fake = critic_->forward(yhat_detached);
      auto loss_d = adv_loss_critic(scores_real, scores_fake);
      loss_d.backward();
      opt_critic_->step(critic_->params());
      clip_weights(critic_->params(), static_cast<float>(weights_.clip_c));
      if (obs != nullptr && obs->on_clip) {
        obs->on_clip(static_cast<double>(max_abs_param(critic_->params())));
      }
    }

    auto scores_fake2 = critic_->forward(yhat);
    auto adv = adv_loss_generator(scores_fake2);
    auto content = content_l1(yhat, y_t);
    Tensor<float> seg;
    if (sg_active && seg_) {
      auto s_t = masks_to_tensor(ms);
      seg = seg_loss(seg_->forward(yhat), s_t, static_cast<float>(dice_eps_));
    }
    auto loss_g = total_generator_loss(adv, content, seg, w);
    loss_g.backward();
    opt_gen_->step(gen_->params());
    // grads that leaked into the frozen networks during the generator
    // backward must not survive into their own next update
    critic_->params().zero_grad();
    if (seg_) seg_->params().zero_grad();

    stats.loss_adv += adv.item();
    stats.loss_content += content.item();
    stats.loss_seg += seg.defined() ? seg.item() : 0.0;
    ++batches;
  }
  if (batches > 0) {
    stats.loss_adv /= static_cast<double>(batches);
    stats.loss_content /= static_cast<double>(batches);
    stats.loss_seg /= static_cast<double>(batches);
  }
  cached_psnr_val_ = validation_psnr();
  psnr_val_valid_ = true;
  stats.psnr_val = cached_psnr_val_;
  return stats;
}

EpochStats Trainer::train_gan_epoch(std::int64_t global_epoch, bool sg_active,
                                    const TrainObserver* obs) {
  if (sg_active && !seg_) {
    throw ConfigError("segmentation guidance requested without a seg network");
  }
  return gan_epoch_impl(global_epoch, sg_active, obs);
}

std::vector<Volume> Trainer::build_yhat_cache() const {
  // the generator is frozen across an S phase and test-mode inference is
  // deterministic, so its outputs are computed once per phase
  std::vector<Volume> cache;
  cache.reserve(data_->train.size());
  for (const auto& c : data_->train) {
    cache.push_back(translate_volume(*gen_, c.x));
  }
  return cache;
}

EpochStats Trainer::train_seg_epoch(std::int64_t global_epoch,
                                    const std::vector<Volume>& yhat_cache) {
  if (!seg_) throw ConfigError("segmentation phase without a seg network");
  if (yhat_cache.size() != data_->train.size()) {
    throw Error("yhat cache size mismatch");
  }
  const auto order = shuffled_train_indices(global_epoch);
  EpochStats stats;
  std::int64_t batches = 0;
  for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(batch_size_)) {
    const std::size_t end =
        std::min(order.size(), pos + static_cast<std::size_t>(batch_size_));
    std::vector<const Volume*> yh;
    std::vector<const MaskVolume*> ms;
    for (std::size_t i = pos; i < end; ++i) {
      yh.push_back(&yhat_cache[static_cast<std::size_t>(order[i])]);
      ms.push_back(&data_->train[static_cast<std::size_t>(order[i])].mask);
    }
    auto yhat_t = volumes_to_tensor(yh);
    auto s_t = masks_to_tensor(ms);
    auto loss = seg_loss(seg_->forward(yhat_t), s_t, static_cast<float>(dice_eps_));
    loss.backward();
    opt_seg_->step(seg_->params());
    stats.loss_seg += loss.item();
    ++batches;
  }
  if (batches > 0) stats.loss_seg /= static_cast<double>(batches);
  if (!psnr_val_valid_) {
    cached_psnr_val_ = validation_psnr();
    psnr_val_valid_ = true;
  }
  stats.psnr_val = cached_psnr_val_;
  return stats;
}

Checkpoint Trainer::snapshot(std::uint32_t next_phase, std::uint32_t epoch) const {
  Checkpoint ck;
  ck.phase_index = next_phase;
  ck.epoch = epoch;
  ck.master_seed = seed_;
  append_params(ck, gen_->params());
  append_params(ck, critic_->params());
  if (seg_) append_params(ck, seg_->params());
  append_opt_state(ck, gen_->params(), *opt_gen_);
  append_opt_state(ck, critic_->params(), *opt_critic_);
  if (seg_) append_opt_state(ck, seg_->params(), *opt_seg_);
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  if (ck.master_seed != seed_) {
    throw DataError("checkpoint seed " + std::to_string(ck.master_seed) +
                    " does not match configured seed " + std::to_string(seed_));
  }
  restore_params(gen_->params(), ck);
  restore_params(critic_->params(), ck);
  restore_opt_state(gen_->params(), *opt_gen_, ck);
  restore_opt_state(critic_->params(), *opt_critic_, ck);
  if (seg_) {
    restore_params(seg_->params(), ck);
    restore_opt_state(seg_->params(), *opt_seg_, ck);
  }
}

std::string Trainer::run(const std::string& out_dir, const TrainObserver* obs,
                         int stop_after_phase) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir);
  const std::string latest = (fs::path(out_dir) / "latest.sgck").string();
  const std::string log_path = (fs::path(out_dir) / "metrics.log").string();

  std::uint32_t start_phase = 0;
  std::uint32_t global_epoch = 0;
  if (fs::exists(latest)) {
    const Checkpoint ck = read_checkpoint(latest);
    restore(ck);
    start_phase = ck.phase_index;
    global_epoch = ck.epoch;
  }

  std::ofstream log(log_path, std::ios::app);
  if (!log) throw DataError("cannot open metrics log " + log_path);

  auto emit = [&](std::int64_t epoch, int phase, const EpochStats& s) {
    char line[256];
    std::snprintf(line, sizeof(line), "%lld %d %.9g %.9g %.9g %.9g",
                  static_cast<long long>(epoch), phase, s.loss_adv,
                  s.loss_content, s.loss_seg, s.psnr_val);
    log << line << "\n";
    log.flush();
    if (obs != nullptr && obs->on_log) obs->on_log(line);
  };

  std::string last_ckpt = latest;
  for (std::uint32_t p = start_phase; p < phases_.size(); ++p) {
    const PhaseSpec& phase = phases_[p];
    if (phase.kind == PhaseSpec::kSeg && seg_) {
      const auto cache = build_yhat_cache();
      for (std::int64_t e = 0; e < phase.epochs; ++e) {
        ++global_epoch;
        emit(global_epoch, static_cast<int>(p) + 1,
             train_seg_epoch(global_epoch, cache));
      }
    } else if (phase.kind == PhaseSpec::kSeg) {
      // no-SG configuration keeps the epoch numbering of the schedule
      for (std::int64_t e = 0; e < phase.epochs; ++e) {
        ++global_epoch;
        EpochStats s;
        if (!psnr_val_valid_) {
          cached_psnr_val_ = validation_psnr();
          psnr_val_valid_ = true;
        }
        s.psnr_val = cached_psnr_val_;
        emit(global_epoch, static_cast<int>(p) + 1, s);
      }
    } else {
      const bool sg_active = sg_enabled_ && seg_ && p >= 2;
      for (std::int64_t e = 0; e < phase.epochs; ++e) {
        ++global_epoch;
        emit(global_epoch, static_cast<int>(p) + 1,
             gan_epoch_impl(global_epoch, sg_active, obs));
      }
    }
    const Checkpoint ck = snapshot(p + 1, global_epoch);
    const std::string phase_path =
        (fs::path(out_dir) / ("phase_" + std::to_string(p + 1) + ".sgck")).string();
    write_checkpoint(phase_path, ck);
    write_checkpoint(latest, ck);
    last_ckpt = latest;
    if (stop_after_phase >= 0 && static_cast<int>(p) >= stop_after_phase) {
      return last_ckpt;
    }
  }
  return last_ckpt;
}

}  // namespace sgs
