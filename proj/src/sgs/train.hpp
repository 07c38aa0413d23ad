#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sgs/config.hpp"
#include "sgs/data.hpp"
#include "sgs/io.hpp"
#include "sgs/networks.hpp"

namespace sgs {

struct EpochStats {
  double loss_adv = 0.0;
  double loss_content = 0.0;
  double loss_seg = 0.0;
  double psnr_val = 0.0;
};

struct TrainObserver {
  // one metrics-log line per epoch: "epoch phase loss_adv loss_content
  // loss_seg psnr_val"
  std::function<void(const std::string&)> on_log;
  // max |critic parameter| after every critic update+clip
  std::function<void(double)> on_clip;
};

struct PhaseSpec {
  enum Kind { kGan, kSeg } kind;
  std::int64_t epochs;
};

// Test-mode, noise-free translation of one volume.
Volume translate_volume(const Generator<float>& g, const Volume& x);

// Checkpoint plumbing shared by trainer, eval and the C API.
void append_params(Checkpoint& ck, const ParamStore<float>& store);
void append_opt_state(Checkpoint& ck, const ParamStore<float>& store,
                      const RmsProp<float>& opt);
void restore_params(ParamStore<float>& store, const Checkpoint& ck);
void restore_opt_state(ParamStore<float>& store, RmsProp<float>& opt,
                       const Checkpoint& ck);

// The four-phase alternate training procedure: GAN epochs with weight
// clipping, segmentation epochs against the frozen generator's outputs,
// phase-boundary checkpoints and a deterministic metrics log.
class Trainer {
 public:
  Trainer(const Config& cfg, const Dataset& data);

  // Runs (or resumes) the schedule; returns the path of the final
  // checkpoint. stop_after_phase simulates an interrupted run in tests.
  std::string run(const std::string& out_dir, const TrainObserver* obs = nullptr,
                  int stop_after_phase = -1);

  EpochStats train_gan_epoch(std::int64_t global_epoch, bool sg_active,
                             const TrainObserver* obs = nullptr);
  EpochStats train_seg_epoch(std::int64_t global_epoch,
                             const std::vector<Volume>& yhat_cache);

  std::vector<Volume> build_yhat_cache() const;
  std::vector<PhaseSpec> phases() const { return phases_; }

  Generator<float>& generator() { return *gen_; }
  Critic<float>& critic() { return *critic_; }
  SegNet<float>* segnet() { return seg_ ? seg_.get() : nullptr; }
  RmsProp<float>& gen_opt() { return *opt_gen_; }
  RmsProp<float>& critic_opt() { return *opt_critic_; }

  double validation_psnr() const;
  std::uint64_t seed() const { return seed_; }

 private:
  EpochStats gan_epoch_impl(std::int64_t global_epoch, bool sg_active,
                            const TrainObserver* obs);
  Checkpoint snapshot(std::uint32_t next_phase, std::uint32_t epoch) const;
  void restore(const Checkpoint& ck);
  std::vector<std::int64_t> shuffled_train_indices(std::int64_t epoch) const;

  const Dataset* data_;
  LossWeights weights_;
  double dice_eps_;
  std::int64_t batch_size_;
  std::int64_t n_critic_;
  std::int64_t val_cases_;
  bool sg_enabled_;
  std::uint64_t seed_;
  std::vector<PhaseSpec> phases_;

  std::unique_ptr<Generator<float>> gen_;
  std::unique_ptr<Critic<float>> critic_;
  std::unique_ptr<SegNet<float>> seg_;
  std::unique_ptr<RmsProp<float>> opt_gen_, opt_critic_, opt_seg_;

  mutable double cached_psnr_val_ = 0.0;
  mutable bool psnr_val_valid_ = false;
};

}  // namespace sgs
