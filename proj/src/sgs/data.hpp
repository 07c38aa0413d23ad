#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgs/tensor.hpp"
#include "sgs/volume.hpp"

namespace sgs {

struct CaseData {
  std::string id;
  Volume x;  // low dose
  Volume y;  // full dose
  MaskVolume mask;
};

struct Dataset {
  std::vector<CaseData> train;
  std::vector<CaseData> test;
  std::int64_t size = 0;  // cubic extent
  std::int64_t rois = 0;
};

// Loads a dataset directory produced by the phantom builder (manifest.tsv
// plus per-case x.pvol/y.pvol/s.pmsk). Validates shape consistency.
Dataset load_dataset(const std::string& dir);

// Batch assembly: [B,1,D,H,W] float tensor from case volumes.
Tensor<float> volumes_to_tensor(const std::vector<const Volume*>& batch);
// [B,R,D,H,W] float tensor from case masks.
Tensor<float> masks_to_tensor(const std::vector<const MaskVolume*>& batch);
// Instance `idx` of a [N,1,D,H,W] tensor back to a Volume.
Volume tensor_to_volume(const Tensor<float>& t, std::int64_t idx = 0);

}  // namespace sgs
