#pragma once

// Self-describing checkpoint container. Layout (all integers little-endian):
//
//   magic    8 bytes  "NEOCKPT\0"
//   version  u32      1
//   count    u32      number of entries
//   entry * count:
//     name_len u32, name bytes (UTF-8, no terminator)
//     dtype u8 (0 = f32, 1 = f64), trainable u8, init_tag u8, reserved u8
//     rank u32, dims u64 * rank
//     payload_bytes u64, payload (raw little-endian IEEE-754 values)
//
// See docs/checkpoint_format.md.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "neo/core/tensor.hpp"

namespace neo {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };
enum class InitTag : std::uint8_t { kStandard = 0, kZero = 1, kOnes = 2 };

template <std::floating_point T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::kF32 : DType::kF64;
}

const char* dtype_name(DType dtype);
const char* init_tag_name(InitTag tag);

struct CheckpointEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::kF64;
  bool trainable = false;
  InitTag init_tag = InitTag::kStandard;
  std::vector<std::byte> payload;

  template <std::floating_point T>
  std::vector<T> values_as() const;

  bool operator==(const CheckpointEntry&) const = default;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

template <std::floating_point T>
std::vector<std::byte> encode_values(std::span<const T> values);

// Throws FormatError on duplicate entry names.
std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace neo
