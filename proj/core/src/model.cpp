#include "nxnflow/model.hpp"

#include <cmath>
#include <numbers>

#include "nxnflow/error.hpp"

namespace nxnflow {

std::string_view to_string(DataRank rank) { return rank == DataRank::kRank2 ? "rank2" : "rank4"; }

DataRank parse_data_rank(std::string_view text) {
  if (text == "rank2") return DataRank::kRank2;
  if (text == "rank4") return DataRank::kRank4;
  throw ConfigError("unknown model mode '" + std::string(text) + "' (expected rank2 or rank4)");
}

void ModelConfig::validate() const {
  if (levels == 0) throw ConfigError("model.levels_l must be >= 1");
  if (hidden == 0) throw ConfigError("model.hidden_width must be >= 1");
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("model input extents must be >= 1");
  std::size_t c = channels;
  if (rank == DataRank::kRank2) {
    if (height != 1 || width != 1) throw ConfigError("rank2 models take height = width = 1");
    for (std::size_t l = 0; l < levels; ++l) {
      if (depth > 0 && c < 2) {
        throw ConfigError("rank2 level " + std::to_string(l) + " has " + std::to_string(c) +
                          " dimensions; coupling needs >= 2");
      }
      if (l + 1 < levels) {
        if (c % 2 != 0) throw ConfigError("rank2 split needs an even dimension at level " + std::to_string(l));
        c /= 2;
      }
    }
    return;
  }
  const std::size_t div = std::size_t{1} << levels;
  if (height % div != 0 || width % div != 0) {
    throw ConfigError("image height/width must be divisible by 2^levels = " + std::to_string(div));
  }
  for (std::size_t l = 0; l < levels; ++l) {
    c *= 4;
    if (l + 1 < levels) c /= 2;
  }
}

Tensor::Shape ModelConfig::input_shape(std::size_t batch) const {
  if (rank == DataRank::kRank2) return {batch, channels};
  return {batch, channels, height, width};
}

MultiScaleModel::MultiScaleModel(const ModelConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t kernel = config_.rank == DataRank::kRank2 ? 1 : 3;
  std::size_t c = config_.channels;
  for (std::size_t l = 0; l < config_.levels; ++l) {
    Level level;
    level.squeeze = config_.rank == DataRank::kRank4;
    if (level.squeeze) c *= 4;
    for (std::size_t k = 0; k < config_.depth; ++k) {
      Rng step_rng = rng.split("flow_step", l * 1000003 + k);
      level.steps.push_back(FlowStep{ActNorm(c), NxnConv(c, config_.inv1x1, step_rng),
                                     AffineCoupling(c, config_.hidden, kernel, step_rng)});
    }
    level.split = l + 1 < config_.levels;
    if (level.split) c /= 2;
    levels_.push_back(std::move(level));
  }
}

void MultiScaleModel::check_input(const Tensor& x) const {
  const Tensor::Shape want = config_.input_shape(x.batch());
  if (x.shape() != want) {
    throw ShapeError("model input " + x.shape_string() + " does not match configured " + to_string(want));
  }
}

bool MultiScaleModel::initialized() const {
  for (const Level& level : levels_)
    for (const FlowStep& step : level.steps)
      if (!step.actnorm.initialized()) return false;
  return true;
}

void MultiScaleModel::initialize(const Tensor& batch) {
  check_input(batch);
  Tensor h = batch;
  for (Level& level : levels_) {
    if (level.squeeze) h = squeeze(h);
    for (FlowStep& step : level.steps) {
      step.actnorm.init_from_batch(h);
      for (FlowLayer* layer : step.layers()) h = layer->forward(h).y;
    }
    if (level.split) h = split_channels(h).kept;
  }
}

namespace {

void check_finite(const LayerOutput& out, std::size_t index, std::string_view kind) {
  for (const double v : out.logdet) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite log-determinant at layer " + std::to_string(index) + " (" +
                         std::string(kind) + ")");
    }
  }
  for (const double v : out.y.values()) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite activation at layer " + std::to_string(index) + " (" +
                         std::string(kind) + ")");
    }
  }
}

}  // namespace

FlowOutput MultiScaleModel::forward(const Tensor& x, ForwardTrace* trace) const {
  check_input(x);
  FlowOutput out;
  out.logdet.assign(x.batch(), 0.0);
  if (trace != nullptr) trace->caches.clear();
  Tensor h = x;
  std::size_t index = 0;
  for (const Level& level : levels_) {
    if (level.squeeze) h = squeeze(h);
    for (const FlowStep& step : level.steps) {
      for (const FlowLayer* layer : step.layers()) {
        LayerOutput o = layer->forward(h);
        check_finite(o, index++, layer->kind());
        for (std::size_t n = 0; n < x.batch(); ++n) out.logdet[n] += o.logdet[n];
        if (trace != nullptr) trace->caches.push_back(std::move(o.cache));
        h = std::move(o.y);
      }
    }
    if (level.split) {
      SplitParts parts = split_channels(h);
      out.z_parts.push_back(std::move(parts.factored));
      h = std::move(parts.kept);
    }
  }
  out.z_parts.push_back(std::move(h));
  return out;
}

Tensor MultiScaleModel::inverse(const std::vector<Tensor>& z_parts) const {
  if (z_parts.size() != levels_.size()) {
    throw ShapeError("model inverse expects " + std::to_string(levels_.size()) + " latent parts, got " +
                     std::to_string(z_parts.size()));
  }
  const std::vector<Tensor::Shape> shapes = latent_shapes(z_parts.front().batch());
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (z_parts[k].shape() != shapes[k]) {
      throw ShapeError("latent part " + std::to_string(k) + " has shape " + z_parts[k].shape_string() +
                       ", expected " + to_string(shapes[k]));
    }
  }
  Tensor h = z_parts.back();
  for (std::size_t l = levels_.size(); l-- > 0;) {
    const Level& level = levels_[l];
    if (level.split) h = unsplit_channels(h, z_parts[l]);
    for (auto step = level.steps.rbegin(); step != level.steps.rend(); ++step) {
      const auto layers = step->layers();
      for (auto layer = layers.rbegin(); layer != layers.rend(); ++layer) h = (*layer)->inverse(h).first;
    }
    if (level.squeeze) h = unsqueeze(h);
  }
  return h;
}

Tensor MultiScaleModel::backward(const ForwardTrace& trace, const std::vector<Tensor>& grad_z,
                                 std::span<const double> grad_logdet, ModelGradients& grads) const {
  if (grad_z.size() != levels_.size()) throw StateError("model backward: wrong number of latent gradients");
  // Gradient slots per layer, in forward order.
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& [name, layer] : layers()) {
    offsets.push_back(total);
    total += layer->parameters().size();
  }
  if (grads.size() != total) throw StateError("model backward: gradient buffer does not match parameters");

  std::size_t index = trace.caches.size();
  if (index != offsets.size()) throw StateError("model backward: trace does not match this model");
  Tensor g = grad_z.back();
  for (std::size_t l = levels_.size(); l-- > 0;) {
    const Level& level = levels_[l];
    if (level.split) g = unsplit_channels(g, grad_z[l]);
    for (auto step = level.steps.rbegin(); step != level.steps.rend(); ++step) {
      const auto ls = step->layers();
      for (auto layer = ls.rbegin(); layer != ls.rend(); ++layer) {
        --index;
        const std::size_t count = (*layer)->parameters().size();
        g = (*layer)->backward(trace.caches[index], g, grad_logdet,
                               GradientSpan(grads).subspan(offsets[index], count));
      }
    }
    if (level.squeeze) g = unsqueeze(g);
  }
  return g;
}

std::vector<double> MultiScaleModel::log_prob(const Tensor& x) const {
  const FlowOutput out = forward(x);
  std::vector<double> lp = out.logdet;
  for (const Tensor& z : out.z_parts) {
    const std::vector<double> part = standard_normal_log_prob(z);
    for (std::size_t n = 0; n < lp.size(); ++n) lp[n] += part[n];
  }
  for (std::size_t n = 0; n < lp.size(); ++n) {
    if (!std::isfinite(lp[n])) throw NumericError("non-finite log-probability for sample " + std::to_string(n));
  }
  return lp;
}

Tensor MultiScaleModel::sample(std::size_t n, double temperature, Rng& rng) const {
  if (!(temperature > 0.0)) throw ConfigError("sampling temperature must be > 0");
  std::vector<Tensor> z;
  for (const Tensor::Shape& s : latent_shapes(n)) {
    Tensor part(s);
    for (double& v : part.values()) v = temperature * rng.normal();
    z.push_back(std::move(part));
  }
  return inverse(z);
}

std::vector<Tensor::Shape> MultiScaleModel::latent_shapes(std::size_t batch) const {
  std::vector<Tensor::Shape> shapes;
  std::size_t c = config_.channels;
  std::size_t h = config_.height;
  std::size_t w = config_.width;
  auto shape_of = [&](std::size_t ch) -> Tensor::Shape {
    if (config_.rank == DataRank::kRank2) return {batch, ch};
    return {batch, ch, h, w};
  };
  for (const Level& level : levels_) {
    if (level.squeeze) {
      c *= 4;
      h /= 2;
      w /= 2;
    }
    if (level.split) {
      c /= 2;
      shapes.push_back(shape_of(c));
    }
  }
  shapes.push_back(shape_of(c));
  return shapes;
}

std::vector<std::pair<std::string, FlowLayer*>> MultiScaleModel::layers() {
  std::vector<std::pair<std::string, FlowLayer*>> out;
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    for (std::size_t k = 0; k < levels_[l].steps.size(); ++k) {
      const std::string prefix = "level" + std::to_string(l) + ".step" + std::to_string(k) + ".";
      for (FlowLayer* layer : levels_[l].steps[k].layers()) {
        out.emplace_back(prefix + std::string(layer->kind()), layer);
      }
    }
  }
  return out;
}

std::vector<std::pair<std::string, const FlowLayer*>> MultiScaleModel::layers() const {
  std::vector<std::pair<std::string, const FlowLayer*>> out;
  for (auto& [name, layer] : const_cast<MultiScaleModel*>(this)->layers()) out.emplace_back(name, layer);
  return out;
}

std::vector<NamedParameter> MultiScaleModel::named_parameters() {
  std::vector<NamedParameter> out;
  for (auto& [path, layer] : layers()) {
    for (Parameter* p : layer->parameters()) out.push_back({path + "." + p->name, p});
  }
  return out;
}

ModelGradients MultiScaleModel::zero_gradients() const {
  ModelGradients g;
  for (const auto& [path, layer] : layers())
    for (const Parameter* p : layer->parameters()) g.emplace_back(p->value.size(), 0.0);
  return g;
}

double bits_per_dim(double nll_nats, std::size_t dims, std::size_t bits) {
  if (dims == 0) throw ConfigError("bits_per_dim: dims must be >= 1");
  return nll_nats / (static_cast<double>(dims) * std::numbers::ln2) + static_cast<double>(bits);
}

}  // namespace nxnflow
