#include "nxnflow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "nxnflow/error.hpp"
#include "nxnflow/parallel.hpp"

namespace nxnflow {

namespace {

constexpr std::size_t kGradientChunk = 16;

std::vector<Parameter*> parameter_list(MultiScaleModel& model) {
  std::vector<Parameter*> ps;
  for (const NamedParameter& np : model.named_parameters()) ps.push_back(np.param);
  return ps;
}

void add_into(ModelGradients& dst, const ModelGradients& src) {
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += src[i][j];
}

}  // namespace

Tensor dequantize_with_noise(std::span<const std::uint8_t> values, const Tensor::Shape& shape, unsigned bits,
                             std::span<const double> noise) {
  if (bits < 1 || bits > 8) throw ConfigError("dequantize: bits must be in [1, 8]");
  Tensor out(shape);
  if (out.size() != values.size() || noise.size() != values.size()) {
    throw ShapeError("dequantize: " + std::to_string(values.size()) + " values for shape " + to_string(shape));
  }
  const unsigned limit = 1u << bits;
  const double inv = 1.0 / static_cast<double>(limit);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= limit) {
      throw DataError("dequantize: value " + std::to_string(values[i]) + " at index " + std::to_string(i) +
                      " is outside [0, 2^" + std::to_string(bits) + ")");
    }
    if (!(noise[i] >= 0.0 && noise[i] < 1.0)) throw DataError("dequantize: noise must lie in [0, 1)");
    // Rounding can land exactly on the upper bin edge; keep the interval half-open.
    const double upper = static_cast<double>(values[i] + 1u) * inv;
    out[i] = std::min((static_cast<double>(values[i]) + noise[i]) * inv, std::nextafter(upper, 0.0));
  }
  return out;
}

Tensor dequantize(std::span<const std::uint8_t> values, const Tensor::Shape& shape, unsigned bits, Rng& rng) {
  std::vector<double> noise(values.size());
  for (double& u : noise) u = rng.uniform();
  return dequantize_with_noise(values, shape, bits, noise);
}

void adam_step(AdamState& state, std::span<Parameter* const> params, const ModelGradients& grads) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->value.size()) {
      throw ShapeError("adam_step: gradient shape mismatch for " + params[i]->name);
    }
    if (!params[i]->trainable) continue;
    for (const double g : grads[i]) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient for " + params[i]->name);
    }
  }
  if (state.m.empty()) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.size(), 0.0);
      state.v.emplace_back(p->value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw StateError("adam_step: optimizer state does not match parameters");

  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable) continue;
    std::vector<double>& w = params[i]->value;
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

LossGradient loss_and_gradient(const MultiScaleModel& model, const Tensor& batch, std::size_t threads) {
  const std::size_t n = batch.batch();
  if (n == 0) throw ShapeError("loss_and_gradient: empty batch");
  const std::size_t chunks = (n + kGradientChunk - 1) / kGradientChunk;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> chunk_loss(chunks, 0.0);
  std::vector<ModelGradients> chunk_grads(chunks);

  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kGradientChunk;
    const std::size_t count = std::min(kGradientChunk, n - begin);
    const Tensor x = batch.slice_batch(begin, count);
    ForwardTrace trace;
    const FlowOutput out = model.forward(x, &trace);
    double loss = 0.0;
    for (const double ld : out.logdet) loss -= ld;
    std::vector<Tensor> grad_z;
    for (const Tensor& z : out.z_parts) {
      for (const double lp : standard_normal_log_prob(z)) loss -= lp;
      Tensor g = z;
      for (double& v : g.values()) v *= inv_n;
      grad_z.push_back(std::move(g));
    }
    const std::vector<double> grad_logdet(count, -inv_n);
    ModelGradients grads = model.zero_gradients();
    model.backward(trace, grad_z, grad_logdet, grads);
    chunk_loss[c] = loss;
    chunk_grads[c] = std::move(grads);
  });

  // Pairwise reduction in a fixed order.
  for (std::size_t stride = 1; stride < chunks; stride *= 2) {
    for (std::size_t i = 0; i + stride < chunks; i += 2 * stride) {
      add_into(chunk_grads[i], chunk_grads[i + stride]);
      chunk_loss[i] += chunk_loss[i + stride];
    }
  }
  return LossGradient{chunk_loss[0] * inv_n, std::move(chunk_grads[0])};
}

double mean_nll(const MultiScaleModel& model, const Tensor& x) {
  const std::vector<double> lp = model.log_prob(x);
  double s = 0.0;
  for (const double v : lp) s -= v;
  return s / static_cast<double>(lp.size());
}

double global_norm(std::span<Parameter* const> params, const ModelGradients& grads) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable) continue;
    for (const double g : grads[i]) sq += g * g;
  }
  return std::sqrt(sq);
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2 (ActNorm initialization)");
  if (steps == 0) throw ConfigError("train.steps must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("train.beta1 must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("train.beta2 must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train.eps must be > 0");
  if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be > 0");
  if (threads == 0) throw ConfigError("thread count must be >= 1");
}

Tensor::Shape PointSource::sample_shape() const { return {points_.channels()}; }

Tensor PointSource::batch(std::span<const std::size_t> indices, Rng&) const {
  std::vector<Tensor> rows;
  rows.reserve(indices.size());
  for (const std::size_t i : indices) rows.push_back(points_.slice_batch(i, 1));
  return concat_batch(rows);
}

ImageSource::ImageSource(ImageDataset images) : images_(std::move(images)) { images_.validate(); }

Tensor::Shape ImageSource::sample_shape() const {
  return {images_.channels, images_.height, images_.width};
}

Tensor ImageSource::batch(std::span<const std::size_t> indices, Rng& rng) const {
  std::vector<std::uint8_t> values;
  values.reserve(indices.size() * images_.sample_size());
  for (const std::size_t i : indices) {
    const auto s = images_.sample(i);
    values.insert(values.end(), s.begin(), s.end());
  }
  return dequantize(values, {indices.size(), images_.channels, images_.height, images_.width}, images_.bits, rng);
}

TrainState make_train_state(const ModelConfig& model_config, const TrainConfig& config) {
  const Rng root(config.seed);
  Rng init = root.split("model_init");
  TrainState state{MultiScaleModel(model_config, init), AdamState{config.adam, 0, {}, {}}, 0, root};
  return state;
}

std::string metrics_header() { return "step,nll_nats,bpd,grad_norm,seconds"; }

std::string format_metrics_row(const MetricsRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%.17g,%.3f", static_cast<unsigned long long>(row.step),
                row.nll_nats, row.bpd, row.grad_norm, row.seconds);
  return buf;
}

std::vector<std::size_t> batch_indices(const Rng& root, std::uint64_t step, std::size_t batch_size,
                                       std::size_t dataset_size) {
  if (dataset_size == 0) throw DataError("training dataset is empty");
  Rng rng = root.split("batch", step);
  std::vector<std::size_t> idx(batch_size);
  for (std::size_t& i : idx) i = static_cast<std::size_t>(rng.below(dataset_size));
  return idx;
}

Tensor training_batch(const BatchSource& data, const Rng& root, std::uint64_t step, std::size_t batch_size) {
  const std::vector<std::size_t> idx = batch_indices(root, step, batch_size, data.size());
  Rng noise = root.split("dequantize", step);
  return data.batch(idx, noise);
}

void train(TrainState& state, const BatchSource& data, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (data.size() == 0) throw DataError("training dataset is empty");
  {
    Tensor::Shape want = state.model.config().input_shape(1);
    want.erase(want.begin());
    if (want != data.sample_shape()) {
      throw ConfigError("model expects samples of shape " + to_string(want) + ", data has " +
                        to_string(data.sample_shape()));
    }
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t dims = state.model.config().dims();
  std::vector<Parameter*> params = parameter_list(state.model);

  while (state.step < config.steps) {
    const Tensor batch = training_batch(data, state.rng, state.step, config.batch_size);
    if (!state.model.initialized()) state.model.initialize(batch);

    LossGradient lg = loss_and_gradient(state.model, batch, config.threads);
    if (!std::isfinite(lg.loss)) {
      throw NumericError("non-finite loss at step " + std::to_string(state.step + 1));
    }
    const double norm = global_norm(params, lg.grads);
    if (!std::isfinite(norm)) {
      throw NumericError("non-finite gradient norm at step " + std::to_string(state.step + 1));
    }
    if (norm > config.clip_norm) {
      const double scale = config.clip_norm / norm;
      for (auto& g : lg.grads)
        for (double& v : g) v *= scale;
    }
    adam_step(state.adam, params, lg.grads);
    ++state.step;

    if (hooks.on_step) {
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      hooks.on_step(MetricsRow{state.step, lg.loss, bits_per_dim(lg.loss, dims, data.bits()), norm, seconds});
    }
    const bool last = state.step == config.steps;
    if (hooks.on_checkpoint &&
        (last || (config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0))) {
      hooks.on_checkpoint(state);
    }
  }
}

TrainResult train(const ModelConfig& model_config, const BatchSource& data, const TrainConfig& config) {
  TrainResult result{make_train_state(model_config, config), {}};
  TrainHooks hooks;
  hooks.on_step = [&](const MetricsRow& row) { result.metrics.push_back(row); };
  train(result.state, data, config, hooks);
  return result;
}

}  // namespace nxnflow
