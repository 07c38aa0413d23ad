#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgs/volume.hpp"

namespace sgs {

// Bit-exact persistence for the four on-disk formats. All integers and
// floats are little-endian.
//
// PVOL1: magic "PVOL1\0" | u32 X,Y,Z,C | f32 payload, index
//        ((c*Z + z)*Y + y)*X + x. A 2x2x2 single-channel file is
//        6 + 16 + 32 bytes.
// PMSK1: magic "PMSK1\0" | u32 X,Y,Z,C | one byte per voxel per channel,
//        each 0 or 1.
// SGCK1: magic "SGCK1\0" | u32 version | parameter entries | optimizer
//        entries | u32 phase_index | u32 epoch | u64 master seed, where an
//        entry block is u32 count then (u32 name_len | name | u32 rank |
//        u32 dims[rank] | f32 data).

struct PVolData {
  std::uint32_t x = 0, y = 0, z = 0, c = 0;
  std::vector<float> data;
};

void write_pvol(const std::string& path, const PVolData& v);
PVolData read_pvol(const std::string& path);

void write_volume(const std::string& path, const Volume& v);
Volume read_volume(const std::string& path);

void write_mask(const std::string& path, const MaskVolume& m);
MaskVolume read_mask(const std::string& path);

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

struct Checkpoint {
  std::uint32_t version = 1;
  std::vector<CheckpointEntry> params;
  std::vector<CheckpointEntry> opt_state;
  std::uint32_t phase_index = 0;  // next phase to run (0-based)
  std::uint32_t epoch = 0;        // global epochs completed
  std::uint64_t master_seed = 0;
};

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace sgs
