#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nxnflow/rng.hpp"
#include "nxnflow/tensor.hpp"

namespace nxnflow {

enum class Density2D { kEightGaussians, kTwoMoons, kCheckerboard };

std::string_view to_string(Density2D kind);
/// Throws ConfigError for unknown names.
Density2D parse_density_2d(std::string_view name);

/// N x 2 points, normalized per dimension to zero mean and unit scale using the
/// generator's analytic moments (so a single point is already normalized).
struct Dataset2D {
  Tensor points;
  std::string generator;
  std::uint64_t seed = 0;
  std::array<double, 2> offset{};  // raw = normalized * scale + offset
  std::array<double, 2> scale{1.0, 1.0};
};

/// eight_gaussians: 8 isotropic components (std 0.15) centered on the radius-2
///   circle at angles k*pi/4.
/// two_moons: upper arc (cos t, sin t) and lower arc (1 - cos t, 0.5 - sin t),
///   t ~ U(0, pi), Gaussian noise std 0.05.
/// checkerboard: x1 ~ U(-2, 2); x2 uniform over the filled cells of a 4 x 4
///   board on [-2, 2]^2.
Dataset2D gen_2d(Density2D kind, std::size_t n, Rng& rng);

inline constexpr double kEightGaussiansRadius = 2.0;
inline constexpr double kEightGaussiansStd = 0.15;

/// Component centers of eight_gaussians in normalized coordinates.
std::vector<std::array<double, 2>> eight_gaussians_modes();

/// v' = floor(v / 2^(8 - target_bits)). Throws ConfigError unless 1 <= bits <= 8.
std::vector<std::uint8_t> quantize_bits(std::span<const std::uint8_t> values, unsigned target_bits);

/// Integer images, sample-major C x H x W, every value < 2^bits.
struct ImageDataset {
  std::uint64_t count = 0;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t bits = 8;
  std::vector<std::uint8_t> pixels;

  std::size_t sample_size() const { return std::size_t{channels} * height * width; }
  std::span<const std::uint8_t> sample(std::size_t n) const {
    return std::span<const std::uint8_t>(pixels).subspan(n * sample_size(), sample_size());
  }
  /// Throws DataError if the payload disagrees with the header.
  void validate() const;

  friend bool operator==(const ImageDataset&, const ImageDataset&) = default;
};

inline constexpr std::array<char, 4> kImageMagic{'N', 'X', 'N', 'I'};
inline constexpr std::uint32_t kImageFormatVersion = 1;
inline constexpr std::size_t kImageHeaderBytes = 32;

/// NXNI layout, little-endian: magic "NXNI", u32 version, u64 count,
/// u32 channels, u32 height, u32 width, u32 bits, then count*C*H*W bytes.
std::vector<std::uint8_t> encode_images(const ImageDataset& ds);
/// Validates the header before touching the payload; throws FormatError
/// naming the byte offset of the first problem.
ImageDataset decode_images(std::span<const std::uint8_t> bytes);

void save_images(const ImageDataset& ds, const std::filesystem::path& path);
ImageDataset load_images(const std::filesystem::path& path);

/// Binary PPM (P6, maxval 255) as a one-image, 3-channel, 8-bit dataset.
ImageDataset import_ppm(const std::filesystem::path& path);
ImageDataset decode_ppm(std::span<const std::uint8_t> bytes);
/// Writes a P6 montage of the first `columns * rows` images (C must be 1 or 3).
void write_ppm_montage(const ImageDataset& ds, std::size_t columns, const std::filesystem::path& path);

/// Synthetic 8-bit-scaled textures: oriented sinusoidal stripes with a random
/// per-image colour, quantized to `bits`.
ImageDataset gen_textures(std::size_t count, std::uint32_t channels, std::uint32_t height, std::uint32_t width,
                          std::uint32_t bits, Rng& rng);

/// One "x,y" line per point.
void save_points_csv(const Tensor& points, const std::filesystem::path& path);
Tensor load_points_csv(const std::filesystem::path& path);

/// Writes bytes to path via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace nxnflow
