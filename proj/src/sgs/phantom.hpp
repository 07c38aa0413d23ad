#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgs/rng.hpp"
#include "sgs/volume.hpp"

namespace sgs {

// Axis-aligned ellipsoid organ in voxel units. roi_label >= 0 marks the
// organ as a segmentation target (channel index).
struct Organ {
  double cx = 0, cy = 0, cz = 0;
  double ax = 1, ay = 1, az = 1;
  double activity = 0;  // added on top of background inside the ellipsoid
  int roi_label = -1;
};

struct PhantomSpec {
  std::int64_t size = 64;
  double background = 20.0;
  std::vector<Organ> organs;
  std::int64_t rois = 4;

  std::uint64_t hash() const;
};

struct DoseSimConfig {
  std::int64_t drf = 6;
  bool rescale = true;
};

// Voxel activity = background + sum of inside-ellipsoid contributions.
// Mask channel r is exactly the r-th ROI organ's voxels. Overlapping
// ROI-labelled organs or organs outside the grid are specification errors.
std::pair<Volume, MaskVolume> render_phantom(const PhantomSpec& spec);

// Count-domain sampling: counts ~ Poisson(activity/drf) per voxel, then
// multiplied by drf when rescale is on. drf=1 without rescale is the
// full-dose path. This is the pre-smoothing signal the dose-physics
// properties are stated on.
Volume sample_counts(const Volume& activity, const DoseSimConfig& cfg,
                     RngStream& rng);

// 3x3x3 boxcar mean with boundary renormalization (mean of the in-bounds
// neighbourhood), preserving constants exactly.
Volume smooth_boxcar3(const Volume& v);

Volume simulate_full_dose(const Volume& activity, std::uint64_t seed);
Volume simulate_low_dose(const Volume& activity, const DoseSimConfig& cfg,
                         std::uint64_t seed);

// Trilinear resize with endpoint-aligned sampling; exact on constants and
// trilinear ramps, identity when sizes match.
Volume resize_volume(const Volume& v, std::int64_t tx, std::int64_t ty,
                     std::int64_t tz);

// Default four-organ layout (liver/brain/kidney/bladder analogs: one large
// uniform, one with inner structure, one mid-size, one small high-activity),
// randomized per case within non-overlapping bounds.
PhantomSpec default_phantom_spec(std::int64_t size, double background,
                                 RngStream& rng);

struct DatasetBuildParams {
  std::int64_t size = 64;
  std::int64_t count = 50;
  DoseSimConfig dose;
  double train_fraction = 0.8;
  double background = 20.0;
  std::int64_t render_scale = 1;
  std::int64_t samples_per_case = 1;
};

struct ManifestEntry {
  std::string case_id;
  std::string split;  // train | test
  std::string spec_hash;
};

// Renders `count` randomized phantoms, simulates paired low/full-dose
// volumes plus ROI masks and persists them as
// <out>/{train,test}/<case>/x.pvol,y.pvol,s.pmsk with a manifest.tsv.
// Deterministic per seed; every triplet of one spec stays in one split.
std::vector<ManifestEntry> build_dataset(const DatasetBuildParams& params,
                                         std::uint64_t seed,
                                         const std::string& out_dir);

}  // namespace sgs
