#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "nxnflow/data.hpp"
#include "nxnflow/error.hpp"

using namespace nxnflow;

namespace {

ImageDataset tiny_images() {
  ImageDataset ds;
  ds.count = 2;
  ds.channels = 3;
  ds.height = 2;
  ds.width = 2;
  ds.bits = 5;
  for (std::size_t i = 0; i < 24; ++i) ds.pixels.push_back(static_cast<std::uint8_t>(i));
  return ds;
}

}  // namespace

TEST(Quantize, Examples) {
  const std::vector<std::uint8_t> v{255, 7, 8, 0};
  EXPECT_EQ(quantize_bits(v, 5), (std::vector<std::uint8_t>{31, 0, 1, 0}));
  EXPECT_EQ(quantize_bits(v, 8), v);
  EXPECT_THROW(quantize_bits(v, 0), ConfigError);
  EXPECT_THROW(quantize_bits(v, 9), ConfigError);
}

TEST(Quantize, MonotoneAndIdempotent) {
  std::vector<std::uint8_t> all(256);
  for (int i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
  for (unsigned bits = 1; bits <= 8; ++bits) {
    const auto q = quantize_bits(all, bits);
    for (int i = 1; i < 256; ++i) EXPECT_LE(q[i - 1], q[i]);
    for (const auto x : q) EXPECT_LT(x, 1u << bits);
    // At the target depth the values are already in range: shifting them
    // back to 8 bits and quantizing again is a no-op.
    std::vector<std::uint8_t> up(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) up[i] = static_cast<std::uint8_t>(q[i] << (8 - bits));
    EXPECT_EQ(quantize_bits(up, bits), q);
  }
}

TEST(Gen2d, Deterministic) {
  for (const auto kind : {Density2D::kEightGaussians, Density2D::kTwoMoons, Density2D::kCheckerboard}) {
    Rng a(3), b(3);
    EXPECT_EQ(gen_2d(kind, 100, a).points, gen_2d(kind, 100, b).points);
  }
}

TEST(Gen2d, SinglePoint) {
  Rng rng(4);
  const Dataset2D d = gen_2d(Density2D::kTwoMoons, 1, rng);
  ASSERT_EQ(d.points.shape(), (Tensor::Shape{1, 2}));
  EXPECT_TRUE(std::isfinite(d.points[0]) && std::isfinite(d.points[1]));
  EXPECT_THROW(gen_2d(Density2D::kTwoMoons, 0, rng), ConfigError);
  EXPECT_THROW(parse_density_2d("spiral"), ConfigError);
}

TEST(Gen2d, NormalizedMoments) {
  for (const auto kind : {Density2D::kEightGaussians, Density2D::kTwoMoons, Density2D::kCheckerboard}) {
    Rng rng(5);
    const Dataset2D d = gen_2d(kind, 40000, rng);
    for (std::size_t c = 0; c < 2; ++c) {
      double m = 0.0, v = 0.0;
      for (std::size_t n = 0; n < 40000; ++n) m += d.points.at(n, c);
      m /= 40000.0;
      for (std::size_t n = 0; n < 40000; ++n) v += std::pow(d.points.at(n, c) - m, 2);
      EXPECT_NEAR(m, 0.0, 0.03) << to_string(kind);
      EXPECT_NEAR(v / 40000.0, 1.0, 0.05) << to_string(kind);
    }
  }
}

TEST(Gen2d, EightGaussiansClusterOnCircle) {
  Rng rng(6);
  const Dataset2D d = gen_2d(Density2D::kEightGaussians, 8000, rng);
  std::array<double, 8> sx{}, sy{};
  std::array<int, 8> count{};
  for (std::size_t n = 0; n < 8000; ++n) {
    const double x = d.points.at(n, 0) * d.scale[0] + d.offset[0];
    const double y = d.points.at(n, 1) * d.scale[1] + d.offset[1];
    const double angle = std::atan2(y, x);
    const int k = static_cast<int>(std::lround(angle / (M_PI / 4.0)) + 8) % 8;
    sx[k] += x;
    sy[k] += y;
    ++count[k];
  }
  for (int k = 0; k < 8; ++k) {
    ASSERT_GT(count[k], 700);
    const double mx = sx[k] / count[k], my = sy[k] / count[k];
    EXPECT_NEAR(std::hypot(mx, my), 2.0, 0.05);
    EXPECT_NEAR(std::remainder(std::atan2(my, mx) - k * M_PI / 4.0, 2 * M_PI), 0.0, 0.05);
  }
  EXPECT_EQ(eight_gaussians_modes().size(), 8u);
}

TEST(Nxni, RoundTrip) {
  test::TempDir dir;
  const ImageDataset ds = tiny_images();
  save_images(ds, dir / "a.nxni");
  EXPECT_EQ(load_images(dir / "a.nxni"), ds);
}

TEST(Nxni, EmptyDatasetIsValid) {
  ImageDataset ds = tiny_images();
  ds.count = 0;
  ds.pixels.clear();
  EXPECT_EQ(decode_images(encode_images(ds)), ds);
}

TEST(Nxni, HeaderLayout) {
  const auto bytes = encode_images(tiny_images());
  ASSERT_EQ(bytes.size(), kImageHeaderBytes + 24);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NXNI");
  EXPECT_EQ(bytes[4], 1);   // version
  EXPECT_EQ(bytes[8], 2);   // count
  EXPECT_EQ(bytes[16], 3);  // channels
  EXPECT_EQ(bytes[28], 5);  // bits
}

TEST(Nxni, TruncatedIsFormatError) {
  auto bytes = encode_images(tiny_images());
  bytes.pop_back();
  try {
    decode_images(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), kImageHeaderBytes + 23);
  }
  bytes.resize(10);
  EXPECT_THROW(decode_images(bytes), FormatError);
}

TEST(Nxni, BadMagicAndVersion) {
  auto bytes = encode_images(tiny_images());
  bytes[0] = 'X';
  EXPECT_THROW(decode_images(bytes), FormatError);
  bytes = encode_images(tiny_images());
  bytes[4] = 2;
  EXPECT_THROW(decode_images(bytes), FormatError);
}

TEST(Nxni, OutOfRangeValueNamesOffset) {
  auto bytes = encode_images(tiny_images());
  bytes[kImageHeaderBytes + 5] = 32;
  try {
    decode_images(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), kImageHeaderBytes + 5);
  }
}

TEST(Nxni, CorruptedFilesNeverYieldInvalidDatasets) {
  Rng rng(7);
  const auto clean = encode_images(tiny_images());
  int rejected = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    auto bytes = clean;
    const int edits = 1 + static_cast<int>(rng.below(4));
    for (int e = 0; e < edits; ++e) bytes[rng.below(bytes.size())] = static_cast<std::uint8_t>(rng.below(256));
    if (rng.below(4) == 0) bytes.resize(rng.below(bytes.size() + 1));
    try {
      const ImageDataset ds = decode_images(bytes);
      ds.validate();
      for (const auto v : ds.pixels) ASSERT_LT(v, 1u << ds.bits);
      ASSERT_EQ(ds.pixels.size(), ds.count * ds.sample_size());
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  EXPECT_GT(rejected, 0);
}

TEST(Ppm, ImportAndMontage) {
  test::TempDir dir;
  const std::string text = "P6\n# comment\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  for (std::uint8_t v : {255, 0, 10, 20, 30, 40}) bytes.push_back(v);
  const ImageDataset ds = decode_ppm(bytes);
  EXPECT_EQ(ds.count, 1u);
  EXPECT_EQ(ds.channels, 3u);
  EXPECT_EQ(ds.width, 2u);
  // Planar CHW: red plane first.
  EXPECT_EQ(ds.pixels, (std::vector<std::uint8_t>{255, 20, 0, 30, 10, 40}));
  write_ppm_montage(ds, 1, dir / "m.ppm");
  EXPECT_EQ(decode_ppm(read_file(dir / "m.ppm")).width, 4u);
  bytes[1] = '3';
  EXPECT_THROW(decode_ppm(bytes), FormatError);
}

TEST(PointsCsv, RoundTripAndErrors) {
  test::TempDir dir;
  const Tensor p({2, 2}, std::vector<double>{0.1, -2.5, 1e-300, 3.0});
  save_points_csv(p, dir / "p.csv");
  EXPECT_EQ(load_points_csv(dir / "p.csv"), p);
  std::ofstream(dir / "bad.csv") << "1,2\nthree,4\n";
  EXPECT_THROW(load_points_csv(dir / "bad.csv"), DataError);
  EXPECT_THROW(load_points_csv(dir / "missing.csv"), DataError);
}

TEST(Textures, DeterministicAndInRange) {
  Rng a(8), b(8);
  const ImageDataset x = gen_textures(10, 3, 8, 8, 5, a);
  EXPECT_EQ(x, gen_textures(10, 3, 8, 8, 5, b));
  EXPECT_NO_THROW(x.validate());
  for (const auto v : x.pixels) EXPECT_LT(v, 32);
}

TEST(Files, AtomicWriteLeavesNoTemporary) {
  test::TempDir dir;
  const std::vector<std::uint8_t> bytes{1, 2, 3};
  write_file_atomic(dir / "f.bin", bytes);
  write_file_atomic(dir / "f.bin", bytes);
  EXPECT_EQ(read_file(dir / "f.bin"), bytes);
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir.path()), {}), 1);
}
