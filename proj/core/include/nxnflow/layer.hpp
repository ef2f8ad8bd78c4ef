#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nxnflow/tensor.hpp"

namespace nxnflow {

enum class Direction { kForward, kInverse };

/// One named, shaped block of layer state.
///
/// Non-trainable parameters (fixed permutations, init flags) travel with the
/// model through checkpoints but are skipped by the optimizer and the
/// gradient checks.
struct Parameter {
  std::string name;
  Tensor::Shape shape;
  std::vector<double> value;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor::Shape s, double fill = 0.0, bool train = true);
};

/// Per-parameter gradient buffers, aligned with FlowLayer::parameters().
using Gradients = std::vector<std::vector<double>>;
using GradientSpan = std::span<std::vector<double>>;

class FlowLayer;

/// Whatever forward() needs to hand to backward(). Always holds the layer input.
struct LayerCache {
  const FlowLayer* owner = nullptr;
  Tensor input;
  std::vector<Tensor> saved;
};

struct LayerOutput {
  Tensor y;
  /// log|det dy/dx| for each batch element.
  std::vector<double> logdet;
  LayerCache cache;
};

/// Uniform contract for every invertible transform.
///
/// forward() returns y together with the per-sample log-determinant of its
/// Jacobian; inverse() returns x and the log-determinant of the inverse map
/// (the negation of the forward value at that point). backward() accumulates
/// dL/dtheta into `grads` and returns dL/dx, where L depends on y through
/// `grad_y` and on the log-determinant through `grad_logdet`.
class FlowLayer {
 public:
  virtual ~FlowLayer() = default;

  virtual std::string_view kind() const = 0;
  virtual LayerOutput forward(const Tensor& x) const = 0;
  virtual std::pair<Tensor, std::vector<double>> inverse(const Tensor& y) const = 0;
  virtual Tensor backward(const LayerCache& cache, const Tensor& grad_y,
                          std::span<const double> grad_logdet, GradientSpan grads) const = 0;
  virtual std::vector<Parameter*> parameters() = 0;
  virtual std::unique_ptr<FlowLayer> clone() const = 0;

  std::vector<const Parameter*> parameters() const;
  Gradients zero_gradients() const;

  /// forward() or inverse() by direction, without the cache.
  std::pair<Tensor, std::vector<double>> apply(const Tensor& x, Direction direction) const;

 protected:
  /// Throws StateError unless `cache` was produced by this layer's forward().
  void check_cache(const LayerCache& cache, const Tensor& grad_y) const;
  LayerCache make_cache(const Tensor& x, std::vector<Tensor> saved = {}) const {
    return LayerCache{this, x, std::move(saved)};
  }
};

/// `batch` copies of `value`: the log-determinant of a data-independent layer.
std::vector<double> per_sample_constant(std::size_t batch, double value);

}  // namespace nxnflow
