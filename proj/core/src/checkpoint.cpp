#include "nxnflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "nxnflow/data.hpp"
#include "nxnflow/error.hpp"

namespace nxnflow {

namespace {

constexpr std::size_t kMaxNameLength = 1024;
constexpr std::uint64_t kMaxExtent = std::uint64_t{1} << 32;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(const std::vector<double>& vs) {
    for (const double v : vs) f64(v);
  }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::uint8_t u8() { return need(1, "u8"), bytes_[pos_++]; }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void f64s(std::vector<double>& out) {
    need(out.size() * 8, "values");
    for (double& v : out) v = f64();
  }
  std::string str(std::size_t n) {
    need(n, "string");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void finish() const {
    if (pos_ != bytes_.size()) {
      throw FormatError("checkpoint: " + std::to_string(bytes_.size() - pos_) + " trailing bytes", pos_);
    }
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint: truncated while reading ") + what, pos_);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_config(Writer& w, const ModelConfig& c) {
  w.u64(c.depth);
  w.u64(c.levels);
  w.u64(c.hidden);
  w.u32(c.rank == DataRank::kRank2 ? 2 : 4);
  w.u32(c.inv1x1 == Inv1x1Mode::kPlu ? 0 : 1);
  w.u64(c.channels);
  w.u64(c.height);
  w.u64(c.width);
}

ModelConfig read_config(Reader& r) {
  const std::size_t at = r.offset();
  ModelConfig c;
  c.depth = r.u64();
  c.levels = r.u64();
  c.hidden = r.u64();
  const std::uint32_t rank = r.u32();
  if (rank != 2 && rank != 4) throw FormatError("checkpoint: bad model rank " + std::to_string(rank), r.offset() - 4);
  c.rank = rank == 2 ? DataRank::kRank2 : DataRank::kRank4;
  const std::uint32_t mode = r.u32();
  if (mode > 1) throw FormatError("checkpoint: bad inv1x1 mode " + std::to_string(mode), r.offset() - 4);
  c.inv1x1 = mode == 0 ? Inv1x1Mode::kPlu : Inv1x1Mode::kDirect;
  c.channels = r.u64();
  c.height = r.u64();
  c.width = r.u64();
  if (c.depth > 4096 || c.levels > 16 || c.hidden > 65536 || c.channels > 65536 || c.height > 65536 ||
      c.width > 65536) {
    throw FormatError("checkpoint: implausible model config", at);
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid model config: ") + e.what(), at);
  }
  return c;
}

std::string describe(const ModelConfig& c) {
  return "K=" + std::to_string(c.depth) + " L=" + std::to_string(c.levels) + " hidden=" + std::to_string(c.hidden) +
         " mode=" + std::string(to_string(c.rank)) + " inv1x1=" + std::string(to_string(c.inv1x1)) +
         " input=" + std::to_string(c.channels) + "x" + std::to_string(c.height) + "x" + std::to_string(c.width);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  // named_parameters() needs a mutable model; encoding never changes it.
  auto& model = const_cast<MultiScaleModel&>(ckpt.state.model);
  const TrainState& s = ckpt.state;
  const std::vector<NamedParameter> params = model.named_parameters();
  const bool has_moments = !s.adam.m.empty();
  if (has_moments && (s.adam.m.size() != params.size() || s.adam.v.size() != params.size())) {
    throw StateError("checkpoint: optimizer state does not match the model");
  }

  Writer w;
  w.bytes(std::string_view(kCheckpointMagic.data(), kCheckpointMagic.size()));
  w.u32(kCheckpointVersion);
  write_config(w, model.config());
  w.u32(ckpt.data_bits);
  w.u64(s.step);
  w.u64(s.rng.seed());
  w.u64(s.rng.counter());
  w.f64(s.adam.config.lr);
  w.f64(s.adam.config.beta1);
  w.f64(s.adam.config.beta2);
  w.f64(s.adam.config.eps);
  w.u64(s.adam.step);
  w.u8(has_moments ? 1 : 0);
  w.u64(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i].param;
    w.u32(static_cast<std::uint32_t>(params[i].name.size()));
    w.bytes(params[i].name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (const std::size_t e : p.shape) w.u64(e);
    w.u8(p.trainable ? 1 : 0);
    w.f64s(p.value);
    if (has_moments) {
      w.f64s(s.adam.m[i]);
      w.f64s(s.adam.v[i]);
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string_view(kCheckpointMagic.data(), 4)) throw FormatError("checkpoint: bad magic", 0);
  if (const std::uint32_t v = r.u32(); v != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(v), 4);
  }
  const ModelConfig config = read_config(r);
  Checkpoint ckpt;
  ckpt.data_bits = r.u32();
  if (ckpt.data_bits > 8) throw FormatError("checkpoint: bad data bit depth", r.offset() - 4);
  Rng unused;
  TrainState& s = ckpt.state;
  s.model = MultiScaleModel(config, unused);
  s.step = r.u64();
  const std::uint64_t seed = r.u64();
  const std::uint64_t counter = r.u64();
  s.rng = Rng(seed, counter);
  s.adam.config.lr = r.f64();
  s.adam.config.beta1 = r.f64();
  s.adam.config.beta2 = r.f64();
  s.adam.config.eps = r.f64();
  s.adam.step = r.u64();
  const std::uint8_t has_moments = r.u8();
  if (has_moments > 1) throw FormatError("checkpoint: bad moment flag", r.offset() - 1);

  const std::vector<NamedParameter> params = s.model.named_parameters();
  const std::size_t count_at = r.offset();
  if (r.u64() != params.size()) throw FormatError("checkpoint: parameter count does not match the model", count_at);
  for (const NamedParameter& np : params) {
    Parameter& p = *np.param;
    const std::size_t at = r.offset();
    const std::uint32_t len = r.u32();
    if (len > kMaxNameLength) throw FormatError("checkpoint: parameter name too long", at);
    const std::string name = r.str(len);
    if (name != np.name) {
      throw FormatError("checkpoint: expected parameter '" + np.name + "', found '" + name + "'", at);
    }
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: bad rank for " + name, r.offset() - 4);
    Tensor::Shape shape(rank);
    for (std::size_t& e : shape) {
      const std::uint64_t v = r.u64();
      if (v > kMaxExtent) throw FormatError("checkpoint: bad extent for " + name, r.offset() - 8);
      e = static_cast<std::size_t>(v);
    }
    if (shape != p.shape) throw FormatError("checkpoint: shape mismatch for " + name, at);
    const std::uint8_t trainable = r.u8();
    if (trainable != (p.trainable ? 1 : 0)) throw FormatError("checkpoint: trainable flag mismatch for " + name, at);
    r.f64s(p.value);
    if (has_moments) {
      s.adam.m.emplace_back(p.value.size());
      s.adam.v.emplace_back(p.value.size());
      r.f64s(s.adam.m.back());
      r.f64s(s.adam.v.back());
    }
  }
  r.finish();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!(ckpt.state.model.config() == expected)) {
    throw ConfigError("checkpoint " + path.string() + " was trained with " + describe(ckpt.state.model.config()) +
                      ", but the run config asks for " + describe(expected));
  }
  return ckpt;
}

}  // namespace nxnflow
