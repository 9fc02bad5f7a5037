#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "redf/lstm.hpp"
#include "redf/timeseries.hpp"

namespace redf {

// Binary model file, all integers and floats little-endian:
//
//   "REDF"                       4 bytes
//   version                      u16 (currently 1)
//   timesteps, features,
//   units, dense_units           u32 x 4
//   dropout                      f64
//   scaler kind                  u8 (0 = zscore, 1 = minmax)
//   scaler a, scaler b           f64 x 2
//   block count                  u32
//   per block: name length u16, name bytes, rows u32, cols u32,
//              rows*cols f64 in row-major order
//   CRC-32 (zlib polynomial) of every preceding byte, u32
//
// Blocks appear in for_each_tensor order. Only architecture fields are
// stored; training-only hyperparameters come back at their defaults.
inline constexpr std::uint16_t kArtifactVersion = 1;

struct ModelArtifact {
  ModelParams params;
  Scaler scaler;
  std::uint32_t checksum = 0;
};

std::vector<std::uint8_t> encode_artifact(const ModelParams& params, const Scaler& scaler);
// Throws ArtifactError naming the failed check (magic, version, shape, crc).
ModelArtifact decode_artifact(std::span<const std::uint8_t> bytes);

void serialize(const ModelParams& params, const Scaler& scaler, const std::filesystem::path& path);
ModelArtifact deserialize(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace redf
