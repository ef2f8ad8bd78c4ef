#include "nxnflow/data.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "nxnflow/error.hpp"

namespace nxnflow {

namespace {

constexpr double kMoonNoise = 0.05;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t k = 0; k < width; ++k) v |= std::uint64_t{bytes[offset + k]} << (8 * k);
  return v;
}

}  // namespace

std::string_view to_string(Density2D kind) {
  switch (kind) {
    case Density2D::kEightGaussians: return "eight_gaussians";
    case Density2D::kTwoMoons: return "two_moons";
    case Density2D::kCheckerboard: return "checkerboard";
  }
  return "unknown";
}

Density2D parse_density_2d(std::string_view name) {
  if (name == "eight_gaussians") return Density2D::kEightGaussians;
  if (name == "two_moons") return Density2D::kTwoMoons;
  if (name == "checkerboard") return Density2D::kCheckerboard;
  throw ConfigError("unknown 2D density '" + std::string(name) +
                    "' (expected eight_gaussians, two_moons or checkerboard)");
}

Dataset2D gen_2d(Density2D kind, std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("gen_2d: n must be >= 1");
  Dataset2D ds;
  ds.generator = std::string(to_string(kind));
  ds.seed = rng.seed();
  ds.points = Tensor({n, 2});
  const double pi = std::numbers::pi;
  switch (kind) {
    case Density2D::kEightGaussians: {
      const double s = std::sqrt(kEightGaussiansRadius * kEightGaussiansRadius / 2.0 +
                                 kEightGaussiansStd * kEightGaussiansStd);
      ds.scale = {s, s};
      for (std::size_t i = 0; i < n; ++i) {
        const double angle = static_cast<double>(rng.below(8)) * pi / 4.0;
        ds.points.at(i, 0) = kEightGaussiansRadius * std::cos(angle) + kEightGaussiansStd * rng.normal();
        ds.points.at(i, 1) = kEightGaussiansRadius * std::sin(angle) + kEightGaussiansStd * rng.normal();
      }
      break;
    }
    case Density2D::kTwoMoons: {
      const double v2 = kMoonNoise * kMoonNoise;
      ds.offset = {0.5, 0.25};
      ds.scale = {std::sqrt(0.75 + v2), std::sqrt(0.5625 - 1.0 / pi + v2)};
      for (std::size_t i = 0; i < n; ++i) {
        const bool upper = rng.below(2) == 0;
        const double t = rng.uniform(0.0, pi);
        const double x = upper ? std::cos(t) : 1.0 - std::cos(t);
        const double y = upper ? std::sin(t) : 0.5 - std::sin(t);
        ds.points.at(i, 0) = x + kMoonNoise * rng.normal();
        ds.points.at(i, 1) = y + kMoonNoise * rng.normal();
      }
      break;
    }
    case Density2D::kCheckerboard: {
      const double s = std::sqrt(4.0 / 3.0);
      ds.scale = {s, s};
      for (std::size_t i = 0; i < n; ++i) {
        const double x1 = rng.uniform(-2.0, 2.0);
        const double base = rng.uniform() - 2.0 * static_cast<double>(rng.below(2));
        const auto column = static_cast<long>(std::floor(x1));
        ds.points.at(i, 0) = x1;
        ds.points.at(i, 1) = base + static_cast<double>(((column % 2) + 2) % 2);
      }
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < 2; ++d) ds.points.at(i, d) = (ds.points.at(i, d) - ds.offset[d]) / ds.scale[d];
  return ds;
}

std::vector<std::array<double, 2>> eight_gaussians_modes() {
  const double s = std::sqrt(kEightGaussiansRadius * kEightGaussiansRadius / 2.0 +
                             kEightGaussiansStd * kEightGaussiansStd);
  std::vector<std::array<double, 2>> modes;
  for (int k = 0; k < 8; ++k) {
    const double angle = k * std::numbers::pi / 4.0;
    modes.push_back({kEightGaussiansRadius * std::cos(angle) / s, kEightGaussiansRadius * std::sin(angle) / s});
  }
  return modes;
}

std::vector<std::uint8_t> quantize_bits(std::span<const std::uint8_t> values, unsigned target_bits) {
  if (target_bits < 1 || target_bits > 8) {
    throw ConfigError("quantize_bits: target bits must be in [1, 8], got " + std::to_string(target_bits));
  }
  const unsigned shift = 8 - target_bits;
  std::vector<std::uint8_t> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [shift](std::uint8_t v) { return static_cast<std::uint8_t>(v >> shift); });
  return out;
}

void ImageDataset::validate() const {
  if (bits < 1 || bits > 8) throw DataError("image bit depth must be in [1, 8]");
  if (channels == 0 || height == 0 || width == 0) throw DataError("image extents must be >= 1");
  if (pixels.size() != count * sample_size()) throw DataError("image payload length does not match header");
  const unsigned limit = 1u << bits;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (pixels[i] >= limit) {
      throw DataError("pixel " + std::to_string(i) + " value " + std::to_string(pixels[i]) + " exceeds " +
                      std::to_string(bits) + "-bit range");
    }
  }
}

std::vector<std::uint8_t> encode_images(const ImageDataset& ds) {
  ds.validate();
  std::vector<std::uint8_t> out(kImageMagic.begin(), kImageMagic.end());
  put_u32(out, kImageFormatVersion);
  put_u64(out, ds.count);
  put_u32(out, ds.channels);
  put_u32(out, ds.height);
  put_u32(out, ds.width);
  put_u32(out, ds.bits);
  out.insert(out.end(), ds.pixels.begin(), ds.pixels.end());
  return out;
}

ImageDataset decode_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kImageHeaderBytes) throw FormatError("truncated NXNI header", bytes.size());
  if (!std::equal(kImageMagic.begin(), kImageMagic.end(), bytes.begin())) {
    throw FormatError("bad NXNI magic", 0);
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kImageFormatVersion) {
    throw FormatError("unsupported NXNI version " + std::to_string(version), 4);
  }
  ImageDataset ds;
  ds.count = get_le(bytes, 8, 8);
  ds.channels = static_cast<std::uint32_t>(get_le(bytes, 16, 4));
  ds.height = static_cast<std::uint32_t>(get_le(bytes, 20, 4));
  ds.width = static_cast<std::uint32_t>(get_le(bytes, 24, 4));
  ds.bits = static_cast<std::uint32_t>(get_le(bytes, 28, 4));
  if (ds.channels == 0) throw FormatError("zero channels", 16);
  if (ds.height == 0) throw FormatError("zero height", 20);
  if (ds.width == 0) throw FormatError("zero width", 24);
  if (ds.bits < 1 || ds.bits > 8) throw FormatError("bit depth " + std::to_string(ds.bits) + " out of range", 28);
  constexpr std::uint32_t kMaxExtent = 1u << 16;
  if (ds.channels > kMaxExtent) throw FormatError("channel count too large", 16);
  if (ds.height > kMaxExtent) throw FormatError("height too large", 20);
  if (ds.width > kMaxExtent) throw FormatError("width too large", 24);

  const std::size_t payload = bytes.size() - kImageHeaderBytes;
  const std::uint64_t per = ds.sample_size();
  if (ds.count > payload / per || ds.count * per != payload) {
    if (ds.count > payload / per) {
      throw FormatError("truncated NXNI payload: header declares " + std::to_string(ds.count) + " images",
                        bytes.size());
    }
    throw FormatError("trailing bytes after NXNI payload", kImageHeaderBytes + ds.count * per);
  }
  const unsigned limit = 1u << ds.bits;
  for (std::size_t i = kImageHeaderBytes; i < bytes.size(); ++i) {
    if (bytes[i] >= limit) {
      throw FormatError("value " + std::to_string(bytes[i]) + " exceeds " + std::to_string(ds.bits) + "-bit range",
                        i);
    }
  }
  ds.pixels.assign(bytes.begin() + kImageHeaderBytes, bytes.end());
  return ds;
}

void save_images(const ImageDataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, encode_images(ds));
}

ImageDataset load_images(const std::filesystem::path& path) { return decode_images(read_file(path)); }

ImageDataset decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::uint64_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1u << 20) throw FormatError(std::string("PPM ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("PPM ") + what + " missing", start);
    return static_cast<std::uint32_t>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (P6)", 0);
  pos = 2;
  const std::uint32_t width = read_uint("width");
  const std::uint32_t height = read_uint("height");
  const std::size_t maxval_at = pos;
  const std::uint32_t maxval = read_uint("maxval");
  if (maxval != 255) throw FormatError("only maxval 255 is supported", maxval_at);
  if (width == 0 || height == 0) throw FormatError("PPM has a zero extent", maxval_at);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("missing PPM header terminator", pos);
  ++pos;
  const std::size_t need = std::size_t{3} * width * height;
  if (bytes.size() - pos < need) throw FormatError("truncated PPM raster", bytes.size());

  ImageDataset ds;
  ds.count = 1;
  ds.channels = 3;
  ds.height = height;
  ds.width = width;
  ds.bits = 8;
  ds.pixels.resize(need);
  // Interleaved RGB to planar CHW.
  for (std::size_t i = 0; i < std::size_t{height} * width; ++i)
    for (std::size_t c = 0; c < 3; ++c) ds.pixels[c * height * width + i] = bytes[pos + 3 * i + c];
  return ds;
}

ImageDataset import_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_ppm_montage(const ImageDataset& ds, std::size_t columns, const std::filesystem::path& path) {
  if (ds.channels != 1 && ds.channels != 3) throw DataError("montage needs 1 or 3 channels");
  const std::size_t n = ds.count;
  columns = std::max<std::size_t>(1, std::min<std::size_t>(columns, std::max<std::size_t>(n, 1)));
  const std::size_t rows = std::max<std::size_t>(1, (n + columns - 1) / columns);
  const std::size_t gap = 1;
  const std::size_t out_w = columns * (ds.width + gap) + gap;
  const std::size_t out_h = rows * (ds.height + gap) + gap;
  const unsigned shift = 8 - ds.bits;
  std::ostringstream header;
  header << "P6\n" << out_w << ' ' << out_h << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  const std::size_t base = out.size();
  out.resize(base + 3 * out_w * out_h, 0);
  const std::size_t hw = std::size_t{ds.height} * ds.width;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t ox = gap + (k % columns) * (ds.width + gap);
    const std::size_t oy = gap + (k / columns) * (ds.height + gap);
    const auto img = ds.sample(k);
    for (std::size_t i = 0; i < ds.height; ++i) {
      for (std::size_t j = 0; j < ds.width; ++j) {
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t src_c = ds.channels == 1 ? 0 : c;
          const auto v = static_cast<std::uint8_t>(img[src_c * hw + i * ds.width + j] << shift);
          out[base + 3 * ((oy + i) * out_w + ox + j) + c] = v;
        }
      }
    }
  }
  write_file_atomic(path, out);
}

ImageDataset gen_textures(std::size_t count, std::uint32_t channels, std::uint32_t height, std::uint32_t width,
                          std::uint32_t bits, Rng& rng) {
  if (bits < 1 || bits > 8) throw ConfigError("texture bit depth must be in [1, 8]");
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("texture extents must be >= 1");
  ImageDataset ds{count, channels, height, width, bits, {}};
  ds.pixels.resize(count * ds.sample_size());
  const double levels = static_cast<double>(1u << bits);
  for (std::size_t n = 0; n < count; ++n) {
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double freq = rng.uniform(0.4, 1.2);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double fy = freq * std::sin(angle);
    const double fx = freq * std::cos(angle);
    std::vector<double> base(channels);
    std::vector<double> amp(channels);
    for (std::uint32_t c = 0; c < channels; ++c) {
      base[c] = rng.uniform(0.3, 0.7);
      amp[c] = rng.uniform(0.1, 0.3);
    }
    for (std::uint32_t c = 0; c < channels; ++c) {
      for (std::uint32_t i = 0; i < height; ++i) {
        for (std::uint32_t j = 0; j < width; ++j) {
          const double v = base[c] + amp[c] * std::sin(fy * i + fx * j + phase);
          const double q = std::floor(std::clamp(v, 0.0, 1.0 - 1e-12) * levels);
          ds.pixels[n * ds.sample_size() + (std::size_t{c} * height + i) * width + j] =
              static_cast<std::uint8_t>(q);
        }
      }
    }
  }
  return ds;
}

void save_points_csv(const Tensor& points, const std::filesystem::path& path) {
  if (points.rank() != 2 || points.channels() != 2) throw ShapeError("points CSV needs an N x 2 tensor");
  std::string text;
  char buf[64];
  for (std::size_t i = 0; i < points.batch(); ++i) {
    const int len = std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", points.at(i, 0), points.at(i, 1));
    text.append(buf, static_cast<std::size_t>(len));
  }
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Tensor load_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'x,y'");
    }
    try {
      std::size_t used = 0;
      const double x = std::stod(line.substr(0, comma), &used);
      const double y = std::stod(line.substr(comma + 1), &used);
      if (!std::isfinite(x) || !std::isfinite(y)) throw std::invalid_argument("non-finite");
      values.push_back(x);
      values.push_back(y);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  const std::size_t n = values.size() / 2;
  return Tensor({n, 2}, std::move(values));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace nxnflow
