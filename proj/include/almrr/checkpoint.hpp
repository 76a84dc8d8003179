#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "almrr/param_store.hpp"

namespace almrr {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<unsigned char> bytes;  // little-endian raw values

  std::vector<double> values() const;
};

/// In-memory image of a checkpoint file.
///
/// Layout (little-endian): "ALMR", u32 version, u64 blob length + JSON blob,
/// u64 entry count, then per entry: u16 name length + name, u8 dtype
/// (0 = f32, 1 = f64), u8 ndim, ndim x u64 dims, raw values.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string blob;  // JSON object: {"config": {...}, "step": n}
  std::vector<CheckpointEntry> entries;

  std::vector<unsigned char> serialize() const;
  /// Throws FormatError with the byte offset of the first bad field.
  static Checkpoint parse(const std::vector<unsigned char>& bytes);

  const CheckpointEntry* find(const std::string& name) const;
};

template <typename T>
Checkpoint make_checkpoint(const ParamStore<T>& store, const std::string& config_json);

/// Copies every entry into `store` (converting dtype), adding entries that do
/// not exist yet. Existing entries must have matching shapes.
template <typename T>
void restore_params(const Checkpoint& ckpt, ParamStore<T>& store);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::string& config_json, const std::filesystem::path& path) {
  write_checkpoint(path, make_checkpoint(store, config_json));
}

/// Config JSON embedded in a checkpoint blob.
std::string checkpoint_config_json(const Checkpoint& ckpt);
std::uint64_t checkpoint_step(const Checkpoint& ckpt);

}  // namespace almrr
