#include "nxnflow/layer.hpp"

#include <functional>
#include <numeric>

#include "nxnflow/error.hpp"

namespace nxnflow {

Parameter::Parameter(std::string n, Tensor::Shape s, double fill, bool train)
    : name(std::move(n)), shape(std::move(s)), trainable(train) {
  const std::size_t count =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  value.assign(count, fill);
}

std::vector<const Parameter*> FlowLayer::parameters() const {
  // parameters() only hands out addresses; it never mutates.
  auto* self = const_cast<FlowLayer*>(this);
  const std::vector<Parameter*> ps = self->parameters();
  return {ps.begin(), ps.end()};
}

Gradients FlowLayer::zero_gradients() const {
  Gradients g;
  for (const Parameter* p : parameters()) g.emplace_back(p->value.size(), 0.0);
  return g;
}

std::pair<Tensor, std::vector<double>> FlowLayer::apply(const Tensor& x, Direction direction) const {
  if (direction == Direction::kInverse) return inverse(x);
  LayerOutput out = forward(x);
  return {std::move(out.y), std::move(out.logdet)};
}

void FlowLayer::check_cache(const LayerCache& cache, const Tensor& grad_y) const {
  if (cache.owner != this) {
    throw StateError(std::string(kind()) + ": cache was not produced by this layer");
  }
  if (cache.input.batch() != grad_y.batch()) {
    throw StateError(std::string(kind()) + ": cache batch " + cache.input.shape_string() +
                     " does not match gradient " + grad_y.shape_string());
  }
}

std::vector<double> per_sample_constant(std::size_t batch, double value) {
  return std::vector<double>(batch, value);
}

}  // namespace nxnflow
