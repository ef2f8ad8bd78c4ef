#include "nxnflow/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "nxnflow/error.hpp"
#include "nxnflow/training.hpp"

namespace nxnflow::verify {

namespace {

constexpr std::size_t kMaxJacobianDim = 64;

Tensor gaussian_tensor(Tensor::Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

// Channels and a square side with c * side^2 <= max_dim.
std::pair<std::size_t, std::size_t> pick_extent(Rng& rng, std::size_t min_c, std::size_t max_dim,
                                                std::size_t max_side, bool even_side) {
  const std::size_t c = pick(rng, min_c, 4);
  std::size_t side_cap = 1;
  while ((side_cap + 1) * (side_cap + 1) * c <= max_dim && side_cap + 1 <= max_side) ++side_cap;
  std::size_t side = pick(rng, 1, side_cap);
  if (even_side) side = std::max<std::size_t>(2, side - side % 2);
  return {c, side};
}

void perturb(Parameter& p, double scale, Rng& rng) {
  for (double& v : p.value) v += scale * rng.normal();
}

void randomize_layer(FlowLayer& layer, double scale, Rng& rng) {
  for (Parameter* p : layer.parameters())
    if (p->trainable) perturb(*p, scale, rng);
}

Invertible1x1 random_inv1x1(std::size_t c, Inv1x1Mode mode, Rng& rng) {
  Invertible1x1 layer(c, mode, rng);
  for (;;) {
    Invertible1x1 candidate = layer;
    randomize_layer(candidate, 0.3, rng);
    if (lu_slogdet(candidate.weight()).sign != 0) return candidate;
  }
}

}  // namespace

// ---------------------------------------------------------------- Jacobians

Matrix numerical_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  const std::size_t d = x.size();
  const std::size_t m = f(x).size();
  Matrix j(m, d);
  Tensor xp = x;
  for (std::size_t k = 0; k < d; ++k) {
    const double orig = xp[k];
    xp[k] = orig + h;
    const Tensor plus = f(xp);
    xp[k] = orig - h;
    const Tensor minus = f(xp);
    xp[k] = orig;
    for (std::size_t i = 0; i < m; ++i) j(i, k) = (plus[i] - minus[i]) / (2.0 * h);
  }
  return j;
}

NumericalLogDet numerical_logdet(const FlowLayer& layer, const Tensor& x, double h) {
  if (x.batch() != 1) throw ShapeError("numerical_logdet: needs a single sample");
  if (x.size() > kMaxJacobianDim) {
    throw ShapeError("numerical_logdet: dimension " + std::to_string(x.size()) + " exceeds " +
                     std::to_string(kMaxJacobianDim));
  }
  NumericalLogDet r;
  r.jacobian = numerical_jacobian([&](const Tensor& in) { return layer.forward(in).y; }, x, h);
  if (!r.jacobian.square()) throw ShapeError("numerical_logdet: layer changes dimension");
  const SignLogDet s = lu_slogdet(r.jacobian);
  r.singular = s.sign == 0;
  r.logdet = s.logabs;
  return r;
}

double max_off_diagonal(const Matrix& j) {
  double m = 0.0;
  for (std::size_t r = 0; r < j.rows; ++r)
    for (std::size_t c = 0; c < j.cols; ++c)
      if (r != c) m = std::max(m, std::abs(j(r, c)));
  return m;
}

// ---------------------------------------------------------------- Convolution reformulation

StandardConvSpec StandardConvSpec::from_kernel(std::size_t out_channels, std::size_t in_channels,
                                               std::size_t kernel_h, std::size_t kernel_w,
                                               const std::vector<double>& kernel) {
  if (kernel.size() != out_channels * in_channels * kernel_h * kernel_w) {
    throw ShapeError("StandardConvSpec: kernel length does not match D x C x kh x kw");
  }
  StandardConvSpec spec{out_channels, in_channels, kernel_h, kernel_w, {}, {}};
  for (std::size_t a = 0; a < kernel_h; ++a) {
    for (std::size_t b = 0; b < kernel_w; ++b) {
      Matrix w(out_channels, in_channels);
      for (std::size_t d = 0; d < out_channels; ++d)
        for (std::size_t c = 0; c < in_channels; ++c)
          w(d, c) = kernel[((d * in_channels + c) * kernel_h + a) * kernel_w + b];
      spec.taps.push_back(std::move(w));
      spec.offsets.emplace_back(static_cast<std::ptrdiff_t>(a) - static_cast<std::ptrdiff_t>(kernel_h / 2),
                                static_cast<std::ptrdiff_t>(b) - static_cast<std::ptrdiff_t>(kernel_w / 2));
    }
  }
  return spec;
}

StandardConvSpec StandardConvSpec::random(std::size_t out_channels, std::size_t in_channels, std::size_t kernel,
                                          Rng& rng) {
  std::vector<double> k(out_channels * in_channels * kernel * kernel);
  for (double& v : k) v = rng.normal();
  return from_kernel(out_channels, in_channels, kernel, kernel, k);
}

void StandardConvSpec::validate() const {
  if (taps.size() != offsets.size()) throw ShapeError("StandardConvSpec: taps and offsets differ in count");
  if (taps.size() != kernel_h * kernel_w) throw ShapeError("StandardConvSpec: K must equal kernel_h * kernel_w");
  const auto lo_i = -static_cast<std::ptrdiff_t>(kernel_h / 2);
  const auto lo_j = -static_cast<std::ptrdiff_t>(kernel_w / 2);
  for (std::size_t k = 0; k < taps.size(); ++k) {
    if (taps[k].rows != out_channels || taps[k].cols != in_channels) {
      throw ShapeError("StandardConvSpec: tap " + std::to_string(k) + " is not D x C");
    }
    const auto [di, dj] = offsets[k];
    if (di < lo_i || di >= lo_i + static_cast<std::ptrdiff_t>(kernel_h) || dj < lo_j ||
        dj >= lo_j + static_cast<std::ptrdiff_t>(kernel_w)) {
      throw ShapeError("StandardConvSpec: offset " + std::to_string(k) + " lies outside the kernel footprint");
    }
  }
}

Tensor direct_convolution(const StandardConvSpec& spec, const Tensor& x) {
  spec.validate();
  if (x.rank() != 4 || x.batch() != 1 || x.channels() != spec.in_channels) {
    throw ShapeError("direct_convolution: input " + x.shape_string() + " does not match the kernel");
  }
  const auto h = static_cast<std::ptrdiff_t>(x.height());
  const auto w = static_cast<std::ptrdiff_t>(x.width());
  const auto ph = static_cast<std::ptrdiff_t>(spec.kernel_h / 2);
  const auto pw = static_cast<std::ptrdiff_t>(spec.kernel_w / 2);
  Tensor y({1, spec.out_channels, x.height(), x.width()});
  for (std::size_t d = 0; d < spec.out_channels; ++d) {
    for (std::ptrdiff_t i = 0; i < h; ++i) {
      for (std::ptrdiff_t j = 0; j < w; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < spec.in_channels; ++c) {
          for (std::size_t a = 0; a < spec.kernel_h; ++a) {
            for (std::size_t b = 0; b < spec.kernel_w; ++b) {
              const std::ptrdiff_t ii = i + static_cast<std::ptrdiff_t>(a) - ph;
              const std::ptrdiff_t jj = j + static_cast<std::ptrdiff_t>(b) - pw;
              if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
              acc += spec.taps[a * spec.kernel_w + b](d, c) *
                     x.at(0, c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
            }
          }
        }
        y.at(0, d, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = acc;
      }
    }
  }
  return y;
}

Tensor shift_input(const Tensor& x, std::ptrdiff_t di, std::ptrdiff_t dj) {
  Tensor out = Tensor::zeros_like(x);
  const auto h = static_cast<std::ptrdiff_t>(x.height());
  const auto w = static_cast<std::ptrdiff_t>(x.width());
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::ptrdiff_t i = 0; i < h; ++i)
        for (std::ptrdiff_t j = 0; j < w; ++j) {
          const std::ptrdiff_t ii = i + di;
          const std::ptrdiff_t jj = j + dj;
          if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
          out.at(n, c, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
              x.at(n, c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
        }
  return out;
}

namespace {
void accumulate(Tensor& acc, const Tensor& term) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += term[i];
}
}  // namespace

Tensor shifted_sum_convolution(const StandardConvSpec& spec, const Tensor& x) {
  spec.validate();
  Tensor::Shape s = x.shape();
  s[1] = spec.out_channels;
  Tensor y(s);
  for (std::size_t k = 0; k < spec.taps.size(); ++k) {
    accumulate(y, channel_matmul(spec.taps[k], shift_input(x, spec.offsets[k].first, spec.offsets[k].second)));
  }
  return y;
}

Tensor shared_input_sum(const StandardConvSpec& spec, const Tensor& s) {
  spec.validate();
  Tensor::Shape shape = s.shape();
  shape[1] = spec.out_channels;
  Tensor y(shape);
  for (const Matrix& w : spec.taps) accumulate(y, channel_matmul(w, s));
  return y;
}

Tensor fused_shared_convolution(const StandardConvSpec& spec, const Tensor& s) {
  spec.validate();
  Matrix sum(spec.out_channels, spec.in_channels);
  for (const Matrix& w : spec.taps)
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += w.data[i];
  return channel_matmul(sum, s);
}

ConvCheck conv_reformulation_check(const StandardConvSpec& spec, const Tensor& x,
                                   const ShiftFunction& shared_shift) {
  ConvCheck r;
  r.direct_vs_shifted = max_abs_diff(direct_convolution(spec, x), shifted_sum_convolution(spec, x));
  const Tensor s = shared_shift.forward(x).y;
  r.shared_vs_fused = max_abs_diff(shared_input_sum(spec, s), fused_shared_convolution(spec, s));
  return r;
}

// ---------------------------------------------------------------- Layer cases

namespace {

template <class L>
LayerInstance instance(L layer, Tensor input) {
  return LayerInstance{std::make_unique<L>(std::move(layer)), std::move(input)};
}

ActNorm random_actnorm(std::size_t c, Rng& rng) {
  ActNorm a(c);
  for (double& v : a.log_gamma()) v = rng.uniform(-1.0, 1.0);
  for (double& v : a.beta()) v = rng.normal();
  a.set_initialized(true);
  return a;
}

ShiftFunction random_shift(std::size_t c, Rng& rng) {
  ShiftFunction s(c);
  for (double& v : s.log_alpha()) v = rng.uniform(-1.0, 1.0);
  for (double& v : s.beta()) v = rng.normal();
  return s;
}

AffineCoupling random_coupling(std::size_t c, std::size_t kernel, Rng& rng) {
  AffineCoupling layer(c, 8, kernel, rng);
  randomize_layer(layer, 0.3, rng);
  return layer;
}

}  // namespace

std::vector<LayerCase> default_layer_cases() {
  std::vector<LayerCase> cases;
  cases.push_back({"actnorm", [](Rng& rng, std::size_t max_dim) {
                     const auto [c, side] = pick_extent(rng, 1, max_dim, 8, false);
                     return instance(random_actnorm(c, rng), gaussian_tensor({1, c, side, side}, rng));
                   }});
  cases.push_back({"shift", [](Rng& rng, std::size_t max_dim) {
                     const auto [c, side] = pick_extent(rng, 1, max_dim, 8, false);
                     return instance(random_shift(c, rng), gaussian_tensor({1, c, side, side}, rng));
                   }});
  for (const Inv1x1Mode mode : {Inv1x1Mode::kPlu, Inv1x1Mode::kDirect}) {
    const std::string suffix = mode == Inv1x1Mode::kPlu ? "plu" : "direct";
    cases.push_back({"inv1x1_" + suffix, [mode](Rng& rng, std::size_t max_dim) {
                       const auto [c, side] = pick_extent(rng, 1, max_dim, 8, false);
                       return instance(random_inv1x1(c, mode, rng), gaussian_tensor({1, c, side, side}, rng));
                     }});
    cases.push_back({"nxn_conv_" + suffix, [mode](Rng& rng, std::size_t max_dim) {
                       const auto [c, side] = pick_extent(rng, 1, max_dim, 8, false);
                       NxnConv conv(random_shift(c, rng), random_inv1x1(c, mode, rng));
                       return instance(std::move(conv), gaussian_tensor({1, c, side, side}, rng));
                     }});
  }
  cases.push_back({"coupling", [](Rng& rng, std::size_t max_dim) {
                     const auto [c, side] = pick_extent(rng, 2, max_dim, 8, false);
                     return instance(random_coupling(c, 3, rng), gaussian_tensor({1, c, side, side}, rng));
                   }});
  cases.push_back({"coupling_dense", [](Rng& rng, std::size_t max_dim) {
                     const std::size_t d = pick(rng, 2, std::min<std::size_t>(6, max_dim));
                     return instance(random_coupling(d, 1, rng), gaussian_tensor({1, d}, rng));
                   }});
  cases.push_back({"squeeze", [](Rng& rng, std::size_t max_dim) {
                     const auto [c, side] = pick_extent(rng, 1, max_dim, 8, true);
                     return instance(Squeeze{}, gaussian_tensor({1, c, side, side}, rng));
                   }});
  return cases;
}

// ---------------------------------------------------------------- Round trips

RoundTripReport roundtrip_suite(const LayerCase& layer_case, std::size_t trials, Rng& rng) {
  RoundTripReport r;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng trial = rng.split(layer_case.name, t);
    const LayerInstance inst = layer_case.make(trial, kRoundTripDim);
    const LayerOutput out = inst.layer->forward(inst.input);
    const auto [x, logdet_inv] = inst.layer->inverse(out.y);
    r.max_reconstruction_error = std::max(r.max_reconstruction_error, max_abs_diff(x, inst.input));
    for (std::size_t n = 0; n < out.logdet.size(); ++n) {
      r.max_logdet_mismatch = std::max(r.max_logdet_mismatch, std::abs(out.logdet[n] + logdet_inv[n]));
    }
    ++r.trials;
  }
  return r;
}

RoundTripReport model_roundtrip_suite(std::size_t trials, Rng& rng) {
  RoundTripReport r;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng trial = rng.split("model_roundtrip", t);
    ModelConfig config;
    config.hidden = 8;
    config.depth = pick(trial, 1, 2);
    config.inv1x1 = trial.below(2) == 0 ? Inv1x1Mode::kPlu : Inv1x1Mode::kDirect;
    if (trial.below(2) == 0) {
      config.rank = DataRank::kRank2;
      config.channels = trial.below(2) == 0 ? 2 : 4;
      config.height = config.width = 1;
      config.levels = config.channels == 4 ? pick(trial, 1, 2) : 1;
    } else {
      config.rank = DataRank::kRank4;
      config.channels = pick(trial, 1, 3);
      config.height = config.width = trial.below(2) == 0 ? 4 : 8;
      config.levels = pick(trial, 1, 2);
    }
    const MultiScaleModel model = random_model(config, 0.1, trial);
    const Tensor x = gaussian_tensor(config.input_shape(2), trial);
    const Tensor back = model.inverse(model.forward(x).z_parts);
    r.max_reconstruction_error = std::max(r.max_reconstruction_error, max_abs_diff(x, back));
    ++r.trials;
  }
  return r;
}

// ---------------------------------------------------------------- Models

void randomize_parameters(MultiScaleModel& model, double scale, Rng& rng) {
  for (const NamedParameter& np : model.named_parameters())
    if (np.param->trainable) perturb(*np.param, scale, rng);
}

MultiScaleModel random_model(const ModelConfig& config, double scale, Rng& rng) {
  Rng init = rng.split("init");
  MultiScaleModel model(config, init);
  model.initialize(gaussian_tensor(config.input_shape(16), init));
  Rng noise = rng.split("perturb");
  randomize_parameters(model, scale, noise);
  return model;
}

double quadrature_normalization(const MultiScaleModel& model, double lo, double hi, double step) {
  const ModelConfig& c = model.config();
  if (c.rank != DataRank::kRank2 || c.channels != 2) {
    throw ShapeError("quadrature_normalization: needs a two-dimensional point model");
  }
  if (!(hi > lo) || !(step > 0.0)) throw ConfigError("quadrature_normalization: empty grid");
  const auto cells = static_cast<std::size_t>(std::llround((hi - lo) / step));
  const std::size_t total = cells * cells;
  constexpr std::size_t kChunk = 4096;
  double mass = 0.0;
  for (std::size_t begin = 0; begin < total; begin += kChunk) {
    const std::size_t count = std::min(kChunk, total - begin);
    Tensor pts({count, 2});
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t idx = begin + k;
      pts.at(k, 0) = lo + (static_cast<double>(idx / cells) + 0.5) * step;
      pts.at(k, 1) = lo + (static_cast<double>(idx % cells) + 0.5) * step;
    }
    for (const double lp : model.log_prob(pts)) mass += std::exp(lp);
  }
  return mass * step * step;
}

// ---------------------------------------------------------------- Gradients

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

GradientCheck check_layer_gradients(FlowLayer& layer, const Tensor& x, Rng& rng, double h) {
  const LayerOutput out = layer.forward(x);
  const Tensor r = gaussian_tensor(out.y.shape(), rng);
  std::vector<double> q(out.logdet.size());
  for (double& v : q) v = rng.normal();

  auto objective = [&](const Tensor& in) {
    const auto [y, logdet] = layer.apply(in, Direction::kForward);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    for (std::size_t n = 0; n < logdet.size(); ++n) s += q[n] * logdet[n];
    return s;
  };

  Gradients grads = layer.zero_gradients();
  const Tensor gx = layer.backward(out.cache, r, q, grads);

  GradientCheck check;
  Tensor xp = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = xp[k];
    xp[k] = orig + h;
    const double fp = objective(xp);
    xp[k] = orig - h;
    const double fm = objective(xp);
    xp[k] = orig;
    check.max_input_error = std::max(check.max_input_error, relative_error(gx[k], (fp - fm) / (2.0 * h)));
    ++check.checked;
  }
  const std::vector<Parameter*> params = layer.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p]->trainable) continue;
    std::vector<double>& v = params[p]->value;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double orig = v[k];
      v[k] = orig + h;
      const double fp = objective(x);
      v[k] = orig - h;
      const double fm = objective(x);
      v[k] = orig;
      check.max_param_error =
          std::max(check.max_param_error, relative_error(grads[p][k], (fp - fm) / (2.0 * h)));
      ++check.checked;
    }
  }
  return check;
}

GradientCheck check_model_gradients(MultiScaleModel& model, const Tensor& batch, double h) {
  GradientCheck check;
  const LossGradient lg = loss_and_gradient(model, batch, 1);

  // Input gradient through the model's own backward pass.
  const double inv_n = 1.0 / static_cast<double>(batch.batch());
  ForwardTrace trace;
  const FlowOutput out = model.forward(batch, &trace);
  std::vector<Tensor> grad_z;
  for (const Tensor& z : out.z_parts) {
    Tensor g = z;
    for (double& v : g.values()) v *= inv_n;
    grad_z.push_back(std::move(g));
  }
  const std::vector<double> grad_logdet(batch.batch(), -inv_n);
  ModelGradients scratch = model.zero_gradients();
  const Tensor gx = model.backward(trace, grad_z, grad_logdet, scratch);

  Tensor xp = batch;
  for (std::size_t k = 0; k < xp.size(); ++k) {
    const double orig = xp[k];
    xp[k] = orig + h;
    const double fp = mean_nll(model, xp);
    xp[k] = orig - h;
    const double fm = mean_nll(model, xp);
    xp[k] = orig;
    check.max_input_error = std::max(check.max_input_error, relative_error(gx[k], (fp - fm) / (2.0 * h)));
    ++check.checked;
  }
  const std::vector<NamedParameter> params = model.named_parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].param->trainable) continue;
    std::vector<double>& v = params[p].param->value;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double orig = v[k];
      v[k] = orig + h;
      const double fp = mean_nll(model, batch);
      v[k] = orig - h;
      const double fm = mean_nll(model, batch);
      v[k] = orig;
      check.max_param_error =
          std::max(check.max_param_error, relative_error(lg.grads[p][k], (fp - fm) / (2.0 * h)));
      ++check.checked;
    }
  }
  return check;
}

// ---------------------------------------------------------------- Reports

void Report::add(std::string name, double metric, double threshold) {
  lines_.push_back({std::move(name), metric <= threshold, metric, threshold});
}

void Report::add_at_least(std::string name, double metric, double threshold) {
  lines_.push_back({std::move(name), metric >= threshold, metric, threshold});
}

void Report::add_range(std::string name, double metric, double lo, double hi) {
  const bool ok = metric >= lo && metric <= hi;
  lines_.push_back({std::move(name), ok, metric, ok ? hi : (metric < lo ? lo : hi)});
}

bool Report::passed() const {
  return std::all_of(lines_.begin(), lines_.end(), [](const CheckLine& l) { return l.passed; });
}

std::string Report::to_text() const {
  std::string out;
  char buf[64];
  for (const CheckLine& l : lines_) {
    out += l.name;
    out += l.passed ? ",PASS," : ",FAIL,";
    std::snprintf(buf, sizeof(buf), "%.6e,%.6e\n", l.metric, l.threshold);
    out += buf;
  }
  return out;
}

void Report::append(const Report& other) {
  lines_.insert(lines_.end(), other.lines_.begin(), other.lines_.end());
}

Suite parse_suite(std::string_view name) {
  if (name == "layers") return Suite::kLayers;
  if (name == "gradients") return Suite::kGradients;
  if (name == "conv_equiv") return Suite::kConvEquiv;
  if (name == "normalization") return Suite::kNormalization;
  if (name == "all") return Suite::kAll;
  throw ConfigError("unknown verify suite '" + std::string(name) +
                    "' (expected layers, gradients, conv_equiv, normalization or all)");
}

Report run_layer_suite(std::uint64_t seed, const std::vector<LayerCase>& cases) {
  constexpr std::size_t kRoundTrips = 1000;
  constexpr std::size_t kLogDetInstances = 100;
  const Rng root = Rng(seed).split("layers");
  Report report;
  for (const LayerCase& lc : cases) {
    Rng rt = root.split("roundtrip");
    const RoundTripReport r = roundtrip_suite(lc, kRoundTrips, rt);
    report.add("roundtrip." + lc.name, r.max_reconstruction_error, 1e-9);
    report.add("logdet_antisymmetry." + lc.name, r.max_logdet_mismatch, 1e-10);

    double worst = 0.0;
    for (std::size_t t = 0; t < kLogDetInstances; ++t) {
      Rng trial = root.split("logdet_" + lc.name, t);
      const LayerInstance inst = lc.make(trial, kJacobianDim);
      const NumericalLogDet num = numerical_logdet(*inst.layer, inst.input);
      const double analytic = inst.layer->forward(inst.input).logdet[0];
      const double err = num.singular ? std::numeric_limits<double>::infinity()
                                      : relative_error(analytic, num.logdet);
      worst = std::max(worst, std::isnan(err) ? std::numeric_limits<double>::infinity() : err);
    }
    report.add("logdet." + lc.name, worst, 1e-4);
  }

  // The shift function's Jacobian is diagonal.
  double off = 0.0;
  for (std::size_t t = 0; t < 20; ++t) {
    Rng trial = root.split("diagonal", t);
    const auto [c, side] = pick_extent(trial, 1, kJacobianDim, 8, false);
    const ShiftFunction s = random_shift(c, trial);
    const Tensor x = gaussian_tensor({1, c, side, side}, trial);
    off = std::max(off, max_off_diagonal(numerical_jacobian([&](const Tensor& in) { return s.forward(in).y; }, x)));
  }
  report.add("jacobian_diagonal.shift", off, 1e-8);

  Rng mr = root.split("model");
  report.add("roundtrip.model", model_roundtrip_suite(100, mr).max_reconstruction_error, 1e-8);
  return report;
}

Report run_gradient_suite(std::uint64_t seed, const std::vector<LayerCase>& cases) {
  constexpr std::size_t kInstances = 20;
  const Rng root = Rng(seed).split("gradients");
  Report report;
  for (const LayerCase& lc : cases) {
    double worst = 0.0;
    for (std::size_t t = 0; t < kInstances; ++t) {
      Rng trial = root.split(lc.name, t);
      LayerInstance inst = lc.make(trial, kJacobianDim);
      worst = std::max(worst, check_layer_gradients(*inst.layer, inst.input, trial).max_error());
    }
    report.add("gradient." + lc.name, worst, 1e-5);
  }

  for (const DataRank rank : {DataRank::kRank4, DataRank::kRank2}) {
    Rng trial = root.split("model", static_cast<std::uint64_t>(rank));
    ModelConfig config;
    config.rank = rank;
    config.depth = 1;
    config.hidden = 4;
    if (rank == DataRank::kRank4) {
      config.channels = 2;
      config.height = config.width = 4;
      config.levels = 2;
    } else {
      config.channels = 4;
      config.height = config.width = 1;
      config.levels = 2;
    }
    MultiScaleModel model = random_model(config, 0.2, trial);
    const Tensor batch = gaussian_tensor(config.input_shape(3), trial);
    report.add("gradient.model_" + std::string(to_string(rank)), check_model_gradients(model, batch).max_error(),
               1e-5);
  }
  return report;
}

Report run_conv_equiv_suite(std::uint64_t seed) {
  const Rng root = Rng(seed).split("conv_equiv");
  Report report;

  double direct = 0.0;
  double shared = 0.0;
  for (std::size_t t = 0; t < 100; ++t) {
    Rng trial = root.split("case", t);
    const std::size_t kernel = trial.below(2) == 0 ? 1 : 3;
    const std::size_t c = pick(trial, 1, 4);
    const std::size_t d = pick(trial, 1, 4);
    const Tensor x = gaussian_tensor({1, c, pick(trial, 1, 6), pick(trial, 1, 6)}, trial);
    const StandardConvSpec spec = StandardConvSpec::random(d, c, kernel, trial);
    const ConvCheck check = conv_reformulation_check(spec, x, random_shift(c, trial));
    direct = std::max(direct, check.direct_vs_shifted);
    shared = std::max(shared, check.shared_vs_fused);
  }
  report.add("conv_equiv.direct_vs_shifted", direct, 1e-12);
  report.add("conv_equiv.shared_vs_fused", shared, 1e-12);
  return report;
}

Report run_normalization_suite(std::uint64_t seed) {
  const Rng root = Rng(seed).split("normalization");
  Report report;
  ModelConfig config;
  config.rank = DataRank::kRank2;
  config.channels = 2;
  config.height = config.width = 1;
  config.levels = 1;
  config.hidden = 16;

  config.depth = 0;
  Rng r0 = root.split("prior");
  const MultiScaleModel prior(config, r0);
  report.add_range("normalization.prior", quadrature_normalization(prior, -6.0, 6.0, 0.05), 0.999, 1.001);

  config.depth = 4;
  Rng r1 = root.split("model");
  // Mild perturbation keeps the density inside the grid.
  const MultiScaleModel model = random_model(config, 0.1, r1);
  const double full = quadrature_normalization(model, -6.0, 6.0, 0.05);
  report.add_range("normalization.random_model", full, 0.98, 1.02);
  const double inner = quadrature_normalization(model, -1.0, 1.0, 0.05);
  report.add("normalization.inner_grid_fraction", inner / full, 1.0);
  return report;
}

Report run_suite(Suite suite, std::uint64_t seed, const std::vector<LayerCase>& cases) {
  Report report;
  if (suite == Suite::kLayers || suite == Suite::kAll) report.append(run_layer_suite(seed, cases));
  if (suite == Suite::kGradients || suite == Suite::kAll) report.append(run_gradient_suite(seed, cases));
  if (suite == Suite::kConvEquiv || suite == Suite::kAll) report.append(run_conv_equiv_suite(seed));
  if (suite == Suite::kNormalization || suite == Suite::kAll) report.append(run_normalization_suite(seed));
  return report;
}

}  // namespace nxnflow::verify
