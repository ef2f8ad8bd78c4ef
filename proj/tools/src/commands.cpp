#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "nxnflow/checkpoint.hpp"
#include "nxnflow/cli.hpp"
#include "nxnflow/error.hpp"
#include "nxnflow/parallel.hpp"
#include "nxnflow/verify.hpp"

namespace nxnflow::cli {

namespace {

constexpr std::size_t kEvalChunk = 256;

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Metric rows already on disk up to and including `step`, for resumed runs.
std::vector<std::string> existing_metrics(const std::string& path, std::uint64_t step) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line) || line != metrics_header()) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoull(line.substr(0, line.find(','))) > step) break;
    rows.push_back(line);
  }
  return rows;
}

void write_metrics(const std::string& path, const std::vector<std::string>& rows) {
  if (path.empty()) return;
  std::string text = metrics_header() + "\n";
  for (const std::string& r : rows) text += r + "\n";
  write_file_atomic(path, as_bytes(text));
}

}  // namespace

LoadedData load_data(const DataConfig& config, std::uint64_t seed) {
  LoadedData d;
  Rng rng = Rng(seed).split("data");
  if (config.kind == "csv") {
    d.points = load_points_csv(config.path);
    d.description = config.path;
  } else if (config.is_points()) {
    d.points = gen_2d(parse_density_2d(config.kind), config.count, rng).points;
    d.description = config.kind + " x " + std::to_string(config.count);
  } else if (config.kind == "textures") {
    d.images = gen_textures(config.count, config.channels, config.height, config.width, config.bits, rng);
    d.description = "textures x " + std::to_string(config.count);
  } else if (config.kind == "nxni") {
    d.images = load_images(config.path);
    d.description = config.path;
  } else if (config.kind == "ppm") {
    ImageDataset img = import_ppm(config.path);
    img.pixels = quantize_bits(img.pixels, config.bits);
    img.bits = config.bits;
    d.images = std::move(img);
    d.description = config.path;
  } else {
    throw ConfigError("unknown data.kind '" + config.kind + "'");
  }
  if (d.images) {
    d.source = std::make_unique<ImageSource>(*d.images);
  } else {
    if (d.points.rank() != 2 || d.points.channels() != 2) throw DataError("point data must be N x 2");
    d.source = std::make_unique<PointSource>(d.points);
  }
  return d;
}

ModelConfig model_config_for(const RunConfig& cfg, const LoadedData& data) {
  ModelConfig m = cfg.model;
  if (data.images) {
    m.channels = data.images->channels;
    m.height = data.images->height;
    m.width = data.images->width;
  } else {
    m.channels = data.points.channels();
    m.height = m.width = 1;
  }
  m.validate();
  return m;
}

int cmd_train(const RunConfig& cfg, const TrainPaths& paths, std::ostream& out, std::ostream& err) {
  cfg.validate();
  const LoadedData data = load_data(cfg.data, cfg.seed);
  if (data.source->size() == 0) throw DataError("training dataset is empty");
  const ModelConfig model_config = model_config_for(cfg, data);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.threads = worker_count();

  const std::uint32_t bits = data.images ? data.images->bits : 0u;
  Checkpoint ckpt;
  if (paths.resume.empty()) {
    ckpt = Checkpoint{make_train_state(model_config, tc), bits};
  } else {
    ckpt = load_checkpoint(paths.resume, model_config);
    if (ckpt.data_bits != bits) {
      throw ConfigError("checkpoint " + paths.resume + " was trained on " + std::to_string(ckpt.data_bits) +
                        "-bit data, the run config gives " + std::to_string(bits) + "-bit data");
    }
  }
  std::vector<std::string> rows;
  if (!paths.resume.empty()) rows = existing_metrics(cfg.metrics, ckpt.state.step);

  out << "training on " << data.description << ", steps " << ckpt.state.step << " -> " << tc.steps << "\n";
  if (ckpt.state.step >= tc.steps) {
    out << "nothing to do\n";
    return kExitOk;
  }

  TrainHooks hooks;
  hooks.on_step = [&](const MetricsRow& row) {
    rows.push_back(format_metrics_row(row));
    if (row.step % 100 == 0 || row.step == tc.steps) {
      out << "step " << row.step << " nll " << row.nll_nats << " bpd " << row.bpd << "\n";
    }
  };
  hooks.on_checkpoint = [&](const TrainState& state) {
    save_checkpoint(Checkpoint{state, bits}, cfg.checkpoint);
    write_metrics(cfg.metrics, rows);
  };
  try {
    train(ckpt.state, *data.source, tc, hooks);
  } catch (const NumericError& e) {
    write_metrics(cfg.metrics, rows);
    err << "numeric error: " << e.what() << "; last good checkpoint kept at " << cfg.checkpoint << "\n";
    return kExitFailure;
  }
  out << "checkpoint " << cfg.checkpoint << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, std::ostream& out, std::ostream&) {
  cfg.validate();
  const LoadedData data = load_data(cfg.data, cfg.seed);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const MultiScaleModel& model = ckpt.state.model;
  const ModelConfig& mc = model.config();
  const bool images = data.images.has_value();
  const bool shape_ok =
      (mc.rank == DataRank::kRank4) == images &&
      (images ? data.images->channels == mc.channels && data.images->height == mc.height &&
                    data.images->width == mc.width
              : data.points.channels() == mc.channels);
  if (!shape_ok) {
    throw ConfigError("dataset " + data.description + " does not match the checkpoint's input shape " +
                      to_string(mc.input_shape(1)));
  }
  const std::size_t n = data.source->size();
  if (n == 0) throw DataError("evaluation dataset is empty");
  const Rng root = Rng(cfg.seed).split("eval");
  double total = 0.0;
  for (std::size_t begin = 0, chunk = 0; begin < n; begin += kEvalChunk, ++chunk) {
    std::vector<std::size_t> idx(std::min(kEvalChunk, n - begin));
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = begin + k;
    Rng noise = root.split("dequantize", chunk);
    for (const double lp : model.log_prob(data.source->batch(idx, noise))) total -= lp;
  }
  const double nll = total / static_cast<double>(n);
  const double bpd = bits_per_dim(nll, mc.dims(), data.source->bits());
  char line[160];
  std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g\n", n, nll, bpd);
  out << "count " << n << " nll_nats " << nll << " bpd " << bpd << "\n";
  if (!cfg.eval_out.empty()) write_file_atomic(cfg.eval_out, as_bytes("count,nll_nats,bpd\n" + std::string(line)));
  return kExitOk;
}

int cmd_sample(const std::string& checkpoint, std::size_t count, double temperature, std::uint64_t seed,
               const std::string& out_path, std::ostream& out, std::ostream&) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (out_path.empty()) throw ConfigError("an output path is required");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const MultiScaleModel& model = ckpt.state.model;
  const ModelConfig& mc = model.config();
  Rng rng = Rng(seed).split("sample");
  const Tensor x = count == 0 ? Tensor(mc.input_shape(0)) : model.sample(count, temperature, rng);

  if (mc.rank == DataRank::kRank2) {
    save_points_csv(x, out_path);
    out << "wrote " << count << " points to " << out_path << "\n";
    return kExitOk;
  }
  ImageDataset ds;
  ds.count = count;
  ds.channels = static_cast<std::uint32_t>(mc.channels);
  ds.height = static_cast<std::uint32_t>(mc.height);
  ds.width = static_cast<std::uint32_t>(mc.width);
  ds.bits = ckpt.data_bits == 0 ? 8 : ckpt.data_bits;
  const double levels = std::ldexp(1.0, static_cast<int>(ds.bits));
  ds.pixels.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = std::floor(std::clamp(x[i], 0.0, 1.0) * levels);
    ds.pixels[i] = static_cast<std::uint8_t>(std::min(v, levels - 1.0));
  }
  save_images(ds, out_path);
  out << "wrote " << count << " images to " << out_path << "\n";
  if (count > 0 && (ds.channels == 1 || ds.channels == 3)) {
    const std::string montage = std::filesystem::path(out_path).replace_extension(".ppm").string();
    const auto columns = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
    write_ppm_montage(ds, columns, montage);
    out << "montage " << montage << "\n";
  }
  return kExitOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_path, std::ostream& out,
               std::ostream&) {
  const verify::Report report = verify::run_suite(verify::parse_suite(suite), seed);
  const std::string text = report.to_text();
  out << text;
  if (!out_path.empty()) write_file_atomic(out_path, as_bytes(text));
  return report.passed() ? kExitOk : kExitFailure;
}

}  // namespace nxnflow::cli
