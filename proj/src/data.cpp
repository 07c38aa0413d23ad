#include "sgs/data.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sgs/common.hpp"
#include "sgs/io.hpp"

namespace sgs {

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.tsv";
  std::ifstream mf(manifest_path);
  if (!mf) {
    throw DataError("dataset manifest not found: " + manifest_path.string());
  }
  Dataset ds;
  std::string line;
  bool header = true;
  while (std::getline(mf, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, split, hash;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, split, '\t') ||
        !std::getline(ss, hash)) {
      throw DataError("malformed manifest line: " + line);
    }
    if (split != "train" && split != "test") {
      throw DataError("manifest split must be train or test, got '" + split +
                      "'");
    }
    const fs::path case_dir = fs::path(dir) / split / id;
    CaseData c;
    c.id = id;
    c.x = read_volume((case_dir / "x.pvol").string());
    c.y = read_volume((case_dir / "y.pvol").string());
    c.mask = read_mask((case_dir / "s.pmsk").string());
    if (c.x.nx != c.y.nx || c.x.ny != c.y.ny || c.x.nz != c.y.nz) {
      throw DataError("case " + id + ": x/y shapes differ");
    }
    if (c.x.nx != c.x.ny || c.x.nx != c.x.nz) {
      throw DataError("case " + id + ": volumes must be cubic");
    }
    if (c.mask.nx != c.x.nx || c.mask.ny != c.x.ny || c.mask.nz != c.x.nz) {
      throw DataError("case " + id + ": mask shape differs from volumes");
    }
    if (ds.size == 0) {
      ds.size = c.x.nx;
      ds.rois = c.mask.channels;
    } else if (ds.size != c.x.nx || ds.rois != c.mask.channels) {
      throw DataError("case " + id + ": inconsistent dataset shapes");
    }
    (split == "train" ? ds.train : ds.test).push_back(std::move(c));
  }
  if (ds.train.empty() && ds.test.empty()) {
    throw DataError("dataset '" + dir + "' contains no cases");
  }
  return ds;
}

Tensor<float> volumes_to_tensor(const std::vector<const Volume*>& batch) {
  if (batch.empty()) throw DataError("empty volume batch");
  const Volume& first = *batch.front();
  const std::int64_t m = first.size();
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(m) * batch.size());
  for (const Volume* v : batch) {
    if (v->size() != m) throw DataError("volume batch shapes differ");
    data.insert(data.end(), v->data.begin(), v->data.end());
  }
  return Tensor<float>::from_data(
      {static_cast<std::int64_t>(batch.size()), 1, first.nz, first.ny, first.nx},
      std::move(data));
}

Tensor<float> masks_to_tensor(const std::vector<const MaskVolume*>& batch) {
  if (batch.empty()) throw DataError("empty mask batch");
  const MaskVolume& first = *batch.front();
  std::vector<float> data;
  data.reserve(first.data.size() * batch.size());
  for (const MaskVolume* m : batch) {
    if (m->data.size() != first.data.size()) {
      throw DataError("mask batch shapes differ");
    }
    for (auto b : m->data) data.push_back(static_cast<float>(b));
  }
  return Tensor<float>::from_data(
      {static_cast<std::int64_t>(batch.size()), first.channels, first.nz,
       first.ny, first.nx},
      std::move(data));
}

Volume tensor_to_volume(const Tensor<float>& t, std::int64_t idx) {
  if (t.rank() != 5 || t.dim(1) != 1) {
    throw DataError("tensor_to_volume: expected [N,1,D,H,W], got " +
                    shape_str(t.shape()));
  }
  if (idx < 0 || idx >= t.dim(0)) {
    throw DataError("tensor_to_volume: instance index out of range");
  }
  Volume v(t.dim(4), t.dim(3), t.dim(2));
  const float* src = t.data() + idx * v.size();
  std::copy(src, src + v.size(), v.data.begin());
  return v;
}

}  // namespace sgs
