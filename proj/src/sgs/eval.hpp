#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sgs/config.hpp"
#include "sgs/data.hpp"
#include "sgs/metrics.hpp"
#include "sgs/networks.hpp"

namespace sgs {

// Builds a generator from the model config and restores its parameters
// from a training checkpoint.
std::unique_ptr<Generator<float>> load_generator(const Config& cfg,
                                                 const std::string& ckpt_path,
                                                 std::int64_t volume_size,
                                                 std::int64_t rois);

// The Unet-score measuring instrument: a segmentation U-net trained on
// (full-dose, mask) train pairs only, then frozen.
std::unique_ptr<SegNet<float>> train_harness(const Config& cfg,
                                             const Dataset& data,
                                             std::uint64_t seed);

void save_harness(const SegNet<float>& harness, const std::string& path,
                  std::uint64_t seed);
std::unique_ptr<SegNet<float>> load_harness(const Config& cfg,
                                            const std::string& path,
                                            std::int64_t rois);

// Per-ROI dice of the frozen harness applied to `input`, against the
// ground-truth mask, with probability threshold `thr`.
std::vector<double> unet_score(const SegNet<float>& harness, const Volume& input,
                               const MaskVolume& truth, double thr);

struct EvalOptions {
  std::string harness_path;       // load instead of training
  std::string save_harness_path;  // persist the trained harness
};

// Translates every test case with the checkpointed generator and fills the
// full metric report (whole-image + per-ROI masked metrics + Unet-score).
MetricReport evaluate_checkpoint(const Config& cfg, const std::string& ckpt_path,
                                 const Dataset& data, const EvalOptions& opts);

}  // namespace sgs
