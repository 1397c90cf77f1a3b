#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "sseg/unet.hpp"

namespace sseg {

// Model checkpoint: magic "SSEG1", five little-endian int32 config fields
// (levels, base_channels, downsample_mode, num_classes, in_channels), then a
// u32 record count followed by named parameter records:
//   u32 name length, name bytes, u32 rank, int32 dims, raw float32 data (LE).
// Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const UNetConfig& config,
                     const ParameterSet& params);

struct Checkpoint {
  UNetConfig config;
  ParameterSet params;
};

Checkpoint load_checkpoint(const std::string& path);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t fnv1a64_file(const std::string& path);

}  // namespace sseg
