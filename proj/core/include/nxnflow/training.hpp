#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nxnflow/data.hpp"
#include "nxnflow/model.hpp"
#include "nxnflow/rng.hpp"

namespace nxnflow {

/// x = (x_int + u) / 2^bits with u ~ U(0, 1) per element. Throws DataError for
/// values outside [0, 2^bits).
Tensor dequantize(std::span<const std::uint8_t> values, const Tensor::Shape& shape, unsigned bits, Rng& rng);
/// Same with caller-provided noise u (one value per element, each in [0, 1)).
Tensor dequantize_with_noise(std::span<const std::uint8_t> values, const Tensor::Shape& shape, unsigned bits,
                             std::span<const double> noise);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Bias-corrected Adam over every trainable parameter block.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Applies one update. `grads` aligns with `params`; non-trainable blocks are
/// left untouched. Throws NumericError (without modifying anything) when a
/// gradient is non-finite.
void adam_step(AdamState& state, std::span<Parameter* const> params, const ModelGradients& grads);

/// Mean negative log-likelihood (nats per sample) of `batch` and its gradient
/// with respect to every model parameter.
struct LossGradient {
  double loss = 0.0;
  ModelGradients grads;
};

/// The batch is cut into fixed chunks, processed on up to `threads` workers,
/// and the chunk gradients are reduced pairwise in a fixed order, so the
/// result is bit-identical for any thread count.
LossGradient loss_and_gradient(const MultiScaleModel& model, const Tensor& batch, std::size_t threads = 1);

/// Mean NLL in nats per sample, no gradients.
double mean_nll(const MultiScaleModel& model, const Tensor& x);

/// L2 norm over trainable gradient blocks.
double global_norm(std::span<Parameter* const> params, const ModelGradients& grads);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::uint64_t steps = 1000;  // total step count; resumed runs continue up to it
  AdamConfig adam;
  std::uint64_t seed = 0;
  double clip_norm = 50.0;
  std::uint64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::size_t threads = 1;

  void validate() const;
};

/// A source of training batches. batch(step, ...) is a pure function of the
/// step index and the given stream so resumed runs see the same data.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual std::size_t size() const = 0;
  /// Bit depth for bits/dim reporting; 0 for continuous data.
  virtual unsigned bits() const = 0;
  virtual Tensor::Shape sample_shape() const = 0;
  virtual Tensor batch(std::span<const std::size_t> indices, Rng& rng) const = 0;
};

/// Continuous points used as-is.
class PointSource final : public BatchSource {
 public:
  explicit PointSource(Tensor points) : points_(std::move(points)) {}
  std::size_t size() const override { return points_.batch(); }
  unsigned bits() const override { return 0; }
  Tensor::Shape sample_shape() const override;
  Tensor batch(std::span<const std::size_t> indices, Rng& rng) const override;

 private:
  Tensor points_;
};

/// Integer images, dequantized freshly for every batch.
class ImageSource final : public BatchSource {
 public:
  explicit ImageSource(ImageDataset images);
  std::size_t size() const override { return images_.count; }
  unsigned bits() const override { return images_.bits; }
  Tensor::Shape sample_shape() const override;
  Tensor batch(std::span<const std::size_t> indices, Rng& rng) const override;

  const ImageDataset& images() const noexcept { return images_; }

 private:
  ImageDataset images_;
};

/// Everything a run needs to resume exactly.
struct TrainState {
  MultiScaleModel model;
  AdamState adam;
  std::uint64_t step = 0;
  Rng rng;
};

/// Fresh state: model built from `model_config` with the seed-derived stream.
TrainState make_train_state(const ModelConfig& model_config, const TrainConfig& config);

struct MetricsRow {
  std::uint64_t step = 0;  // 1-based index of the completed step
  double nll_nats = 0.0;   // mean per-sample NLL of the batch
  double bpd = 0.0;
  double grad_norm = 0.0;  // before clipping
  double seconds = 0.0;    // wall time since train() started
};

/// "step,nll_nats,bpd,grad_norm,seconds"
std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_step;
  std::function<void(const TrainState&)> on_checkpoint;
};

/// Indices of the batch used at `step`.
std::vector<std::size_t> batch_indices(const Rng& root, std::uint64_t step, std::size_t batch_size,
                                       std::size_t dataset_size);
/// The batch used at `step` (indices plus dequantization noise).
Tensor training_batch(const BatchSource& data, const Rng& root, std::uint64_t step, std::size_t batch_size);

/// Minimizes mean NLL from state.step up to config.steps. Runs ActNorm
/// initialization on the first batch when the model is uninitialized. On a
/// non-finite loss or gradient throws NumericError and leaves `state` at the
/// last completed step.
void train(TrainState& state, const BatchSource& data, const TrainConfig& config, const TrainHooks& hooks = {});

/// Convenience wrapper: fresh state, full run, collected metrics.
struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
};
TrainResult train(const ModelConfig& model_config, const BatchSource& data, const TrainConfig& config);

}  // namespace nxnflow
