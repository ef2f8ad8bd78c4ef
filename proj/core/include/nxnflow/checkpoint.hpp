#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nxnflow/training.hpp"

namespace nxnflow {

inline constexpr std::array<char, 4> kCheckpointMagic{'N', 'X', 'N', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A training state plus the bit depth of the data it was trained on
/// (0 for continuous points), which sampling needs to requantize.
struct Checkpoint {
  TrainState state;
  std::uint32_t data_bits = 0;
};

/// NXNF layout, little-endian throughout:
///   "NXNF", u32 version,
///   model config: u64 depth, levels, hidden, u32 rank, u32 inv1x1, u64 C, H, W,
///   u32 data_bits, u64 step, u64 rng seed, u64 rng counter,
///   adam: f64 lr, beta1, beta2, eps, u64 step, u8 has_moments,
///   u64 parameter count, then per parameter: u32 name length, name,
///   u32 rank, u64 extents, u8 trainable, f64 values, and when has_moments
///   the f64 first and second moments.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Rebuilds the model from the config echo. Throws FormatError with the byte
/// offset on any structural problem.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Refuses (ConfigError) a checkpoint whose model config differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace nxnflow
