#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcnet/training.hpp"

namespace pcnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

struct StoredTensor {
  std::string name;
  DType dtype = DType::kFloat32;
  std::vector<std::uint64_t> extents;
  std::vector<unsigned char> payload;  // little-endian
};

// Layout:
//   "PCN1" | u32 version | u32 text length | text (UTF-8)
//   | u32 tensor count | per tensor: u32 name length, name, u8 dtype,
//     u32 rank, u64 extents, raw payload
//   | u32 CRC32 of every preceding byte
// All integers little-endian.
struct CheckpointFile {
  std::uint32_t version = kCheckpointVersion;
  std::string text;
  std::vector<StoredTensor> tensors;
};

std::vector<unsigned char> encode_checkpoint(const CheckpointFile& file);
CheckpointFile decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");

// Atomic write (temp file + rename).
void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

template <typename T>
CheckpointFile checkpoint_from_state(const TrainState<T>& state);

// Rebuilds a state; tensors of the other precision are converted.
template <typename T>
TrainState<T> state_from_checkpoint(const CheckpointFile& file);

// Precision and class names recorded in a checkpoint, without rebuilding it.
struct CheckpointInfo {
  TrainConfig config;
  std::size_t epoch = 0;
  std::vector<std::string> class_names;
};
CheckpointInfo checkpoint_info(const CheckpointFile& file);

template <typename T>
void save_checkpoint(const TrainState<T>& state, const std::filesystem::path& path) {
  write_checkpoint(path, checkpoint_from_state(state));
}

template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& path) {
  return state_from_checkpoint<T>(read_checkpoint(path));
}

}  // namespace pcnet
