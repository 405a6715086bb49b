// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format, all integers and floats little-endian:
//
//   magic        8 bytes  "PCSEGCKP"
//   version      u32      kCheckpointVersion
//   total_size   u64      byte length of the whole file
//   architecture u32 input_dim, u32 n_enc, n_enc x u32, u32 n_dec,
//                n_dec x u32, u32 output_dim, input_dim x f32 feature_scale
//   catalog      u32 count, count x (u32 length, bytes)
//   provenance   u32 phase, u32 epoch, u64 seed, u64 parent_checksum
//   shape table  u32 tensor_count, tensor_count x (u32 rows, u32 cols)
//   payload      f32 arrays in shape-table order
//   checksum     u64 FNV-1a over every preceding byte

#ifndef PCSEG_CHECKPOINT_HPP_
#define PCSEG_CHECKPOINT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pcseg/catalog.hpp"
#include "pcseg/net.hpp"

namespace pcseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Provenance {
  std::uint32_t phase = 0;
  std::uint32_t epoch = 0;
  std::uint64_t seed = 0;
  // Checksum of the checkpoint this one was trained from; 0 for fresh init.
  std::uint64_t parent_checksum = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Checkpoint {
  ModelParams params;
  ClassCatalog catalog;
  Provenance provenance;
};

std::uint64_t fnv1a64(std::span<const std::byte> bytes);

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt);
// Throws BadMagic, VersionMismatch, TruncatedFile or ChecksumError.
Checkpoint deserialize_checkpoint(std::span<const std::byte> bytes);

// Checksum stored in the trailer of the serialized form.
std::uint64_t checkpoint_checksum(const Checkpoint& ckpt);

// Atomic write of the binary plus a "<path>.txt" sidecar.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string describe_checkpoint(const Checkpoint& ckpt);

}  // namespace pcseg

#endif  // PCSEG_CHECKPOINT_HPP_
