#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sgs/common.hpp"

namespace sgs {

// Single-channel 3D scalar field, x fastest: index (z*ny + y)*nx + x.
// Spacing is in-memory metadata only; the file format is unit-spacing.
struct Volume {
  std::int64_t nx = 0, ny = 0, nz = 0;
  std::vector<float> data;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  Volume() = default;
  Volume(std::int64_t x, std::int64_t y, std::int64_t z, float fill = 0.0f)
      : nx(x), ny(y), nz(z),
        data(static_cast<std::size_t>(x * y * z), fill) {}

  std::int64_t size() const { return nx * ny * nz; }
  float& at(std::int64_t x, std::int64_t y, std::int64_t z) {
    return data[static_cast<std::size_t>((z * ny + y) * nx + x)];
  }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data[static_cast<std::size_t>((z * ny + y) * nx + x)];
  }
};

// Multi-ROI binary mask, one byte per voxel per channel:
// index ((c*nz + z)*ny + y)*nx + x.
struct MaskVolume {
  std::int64_t nx = 0, ny = 0, nz = 0, channels = 0;
  std::vector<std::uint8_t> data;

  MaskVolume() = default;
  MaskVolume(std::int64_t x, std::int64_t y, std::int64_t z, std::int64_t c)
      : nx(x), ny(y), nz(z), channels(c),
        data(static_cast<std::size_t>(x * y * z * c), 0) {}

  std::int64_t voxels_per_channel() const { return nx * ny * nz; }
  std::uint8_t& at(std::int64_t c, std::int64_t x, std::int64_t y,
                   std::int64_t z) {
    return data[static_cast<std::size_t>(((c * nz + z) * ny + y) * nx + x)];
  }
  std::uint8_t at(std::int64_t c, std::int64_t x, std::int64_t y,
                  std::int64_t z) const {
    return data[static_cast<std::size_t>(((c * nz + z) * ny + y) * nx + x)];
  }

  std::int64_t count(std::int64_t c) const {
    std::int64_t n = 0;
    const std::uint8_t* p = data.data() + c * voxels_per_channel();
    for (std::int64_t i = 0; i < voxels_per_channel(); ++i) n += p[i];
    return n;
  }
};

}  // namespace sgs
