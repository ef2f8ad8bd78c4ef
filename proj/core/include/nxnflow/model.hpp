#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "nxnflow/layers.hpp"
#include "nxnflow/rng.hpp"
#include "nxnflow/tensor.hpp"

namespace nxnflow {

/// rank2: N x D points, dense conditioners, no squeeze. rank4: N x C x H x W images.
enum class DataRank { kRank2, kRank4 };

std::string_view to_string(DataRank rank);
DataRank parse_data_rank(std::string_view text);

struct ModelConfig {
  std::size_t depth = 8;    // K, flow steps per level
  std::size_t levels = 2;   // L
  std::size_t hidden = 32;  // conditioner width
  DataRank rank = DataRank::kRank4;
  Inv1x1Mode inv1x1 = Inv1x1Mode::kPlu;
  // Input extents. For rank2, channels is the point dimension D and
  // height = width = 1.
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;

  /// Throws ConfigError when the architecture cannot be built.
  void validate() const;
  std::size_t dims() const { return channels * height * width; }
  Tensor::Shape input_shape(std::size_t batch) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// actnorm -> (shift -> 1x1) -> coupling, strictly in that order.
struct FlowStep {
  ActNorm actnorm;
  NxnConv conv;
  AffineCoupling coupling;

  std::array<FlowLayer*, 3> layers() { return {&actnorm, &conv, &coupling}; }
  std::array<const FlowLayer*, 3> layers() const { return {&actnorm, &conv, &coupling}; }
};

struct Level {
  bool squeeze = true;
  std::vector<FlowStep> steps;
  bool split = false;
};

struct FlowOutput {
  /// One part per split, then the final level's output.
  std::vector<Tensor> z_parts;
  /// Per-sample sum of every layer's log|det|.
  std::vector<double> logdet;
};

/// Everything backward() needs: one cache per layer in forward order.
struct ForwardTrace {
  std::vector<LayerCache> caches;
};

/// A named handle to one parameter block of the model.
struct NamedParameter {
  std::string name;
  Parameter* param;
};

using ModelGradients = std::vector<std::vector<double>>;

/// Multi-scale flow: L levels of squeeze, K flow steps, and split (no split
/// after the final level).
class MultiScaleModel {
 public:
  MultiScaleModel() = default;
  MultiScaleModel(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<Level>& levels() noexcept { return levels_; }
  const std::vector<Level>& levels() const noexcept { return levels_; }

  /// Data-dependent ActNorm initialization: runs `batch` through the flow,
  /// initializing each ActNorm from its own input on the way.
  void initialize(const Tensor& batch);
  bool initialized() const;

  FlowOutput forward(const Tensor& x, ForwardTrace* trace = nullptr) const;
  Tensor inverse(const std::vector<Tensor>& z_parts) const;
  /// Returns dL/dx; accumulates into `grads` (aligned with named_parameters()).
  Tensor backward(const ForwardTrace& trace, const std::vector<Tensor>& grad_z,
                  std::span<const double> grad_logdet, ModelGradients& grads) const;

  /// Per-sample log p(x) in nats.
  std::vector<double> log_prob(const Tensor& x) const;
  /// z ~ N(0, T^2 I) decoded through the inverse flow.
  Tensor sample(std::size_t n, double temperature, Rng& rng) const;

  std::vector<Tensor::Shape> latent_shapes(std::size_t batch) const;
  /// Layers in forward order with their dotted path names.
  std::vector<std::pair<std::string, FlowLayer*>> layers();
  std::vector<std::pair<std::string, const FlowLayer*>> layers() const;
  std::vector<NamedParameter> named_parameters();
  ModelGradients zero_gradients() const;

 private:
  void check_input(const Tensor& x) const;

  ModelConfig config_;
  std::vector<Level> levels_;
};

/// bpd = nll / (dims * ln 2) + bits for data scaled to [0, 1] at `bits` bits.
double bits_per_dim(double nll_nats, std::size_t dims, std::size_t bits);

/// Reported bits/dim (ImageNet 32, ImageNet 64, CIFAR-10) of the full-scale
/// models, kept for reference only.
struct ReferenceBpd {
  static constexpr double kImageNet32 = 3.96;
  static constexpr double kImageNet64 = 3.74;
  static constexpr double kCifar10 = 3.50;
};

}  // namespace nxnflow
