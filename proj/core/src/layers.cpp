#include "nxnflow/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nxnflow/error.hpp"

namespace nxnflow {

namespace {

double sum_of(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s;
}

std::vector<double> exp_of(std::span<const double> v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double a) { return std::exp(a); });
  return out;
}

void require_channels(const Tensor& x, std::size_t channels, std::string_view who) {
  if (x.rank() < 2 || x.channels() != channels) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(channels) +
                     " channels, got " + x.shape_string());
  }
}

// y = exp(log_scale) * x + bias per channel.
LayerOutput scale_bias_forward(const FlowLayer* owner, const Tensor& x,
                               std::span<const double> log_scale, std::span<const double> bias) {
  const std::vector<double> scale = exp_of(log_scale);
  const double ld = static_cast<double>(x.spatial()) * sum_of(log_scale);
  return LayerOutput{channel_affine(x, scale, bias), per_sample_constant(x.batch(), ld),
                     LayerCache{owner, x, {}}};
}

std::pair<Tensor, std::vector<double>> scale_bias_inverse(const Tensor& y,
                                                          std::span<const double> log_scale,
                                                          std::span<const double> bias) {
  std::vector<double> inv_scale(log_scale.size());
  std::vector<double> inv_bias(log_scale.size());
  for (std::size_t c = 0; c < log_scale.size(); ++c) {
    inv_scale[c] = std::exp(-log_scale[c]);
    inv_bias[c] = -bias[c] * inv_scale[c];
  }
  const double ld = -static_cast<double>(y.spatial()) * sum_of(log_scale);
  return {channel_affine(y, inv_scale, inv_bias), per_sample_constant(y.batch(), ld)};
}

Tensor scale_bias_backward(const Tensor& x, const Tensor& grad_y, std::span<const double> grad_logdet,
                           std::span<const double> log_scale, std::vector<double>& g_log_scale,
                           std::vector<double>& g_bias) {
  const std::size_t channels = x.channels();
  const std::size_t hw = x.spatial();
  const double gl = sum_of(grad_logdet);
  Tensor gx = Tensor::zeros_like(x);
  for (std::size_t c = 0; c < channels; ++c) {
    const double s = std::exp(log_scale[c]);
    double gxs = 0.0;
    double gsum = 0.0;
    for (std::size_t n = 0; n < x.batch(); ++n) {
      const std::size_t base = (n * channels + c) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const double g = grad_y[base + p];
        gx[base + p] = g * s;
        gxs += g * x[base + p];
        gsum += g;
      }
    }
    g_log_scale[c] += s * gxs + static_cast<double>(hw) * gl;
    g_bias[c] += gsum;
  }
  return gx;
}

}  // namespace

// ---------------------------------------------------------------- ActNorm

ActNorm::ActNorm(std::size_t channels)
    : log_gamma_("log_gamma", {channels}),
      beta_("beta", {channels}),
      initialized_("initialized", {1}, 0.0, false) {
  if (channels == 0) throw ShapeError("actnorm: zero channels");
}

void ActNorm::require_initialized() const {
  if (!initialized()) throw StateError("actnorm: used before data-dependent initialization");
}

LayerOutput ActNorm::forward(const Tensor& x) const {
  require_initialized();
  require_channels(x, channels(), "actnorm");
  return scale_bias_forward(this, x, log_gamma_.value, beta_.value);
}

std::pair<Tensor, std::vector<double>> ActNorm::inverse(const Tensor& y) const {
  require_initialized();
  require_channels(y, channels(), "actnorm");
  return scale_bias_inverse(y, log_gamma_.value, beta_.value);
}

Tensor ActNorm::backward(const LayerCache& cache, const Tensor& grad_y,
                         std::span<const double> grad_logdet, GradientSpan grads) const {
  check_cache(cache, grad_y);
  return scale_bias_backward(cache.input, grad_y, grad_logdet, log_gamma_.value, grads[0], grads[1]);
}

void ActNorm::init_from_batch(const Tensor& batch) {
  if (initialized()) throw StateError("actnorm: already initialized");
  require_channels(batch, channels(), "actnorm");
  if (batch.batch() < 2) throw ShapeError("actnorm: initialization batch needs >= 2 samples");
  const std::size_t hw = batch.spatial();
  const double count = static_cast<double>(batch.batch() * hw);
  for (std::size_t c = 0; c < channels(); ++c) {
    double mean = 0.0;
    for (std::size_t n = 0; n < batch.batch(); ++n)
      for (std::size_t p = 0; p < hw; ++p) mean += batch[(n * channels() + c) * hw + p];
    mean /= count;
    double var = 0.0;
    for (std::size_t n = 0; n < batch.batch(); ++n) {
      for (std::size_t p = 0; p < hw; ++p) {
        const double d = batch[(n * channels() + c) * hw + p] - mean;
        var += d * d;
      }
    }
    const double sigma = std::sqrt(var / count);
    if (!(sigma >= 1e-6)) {
      throw NumericError("actnorm: degenerate channel " + std::to_string(c) + " (sigma " +
                         std::to_string(sigma) + ")");
    }
    log_gamma_.value[c] = -std::log(sigma);
    beta_.value[c] = -mean / sigma;
  }
  set_initialized(true);
}

// ---------------------------------------------------------------- ShiftFunction

ShiftFunction::ShiftFunction(std::size_t channels)
    : log_alpha_("log_alpha", {channels}), beta_("beta", {channels}) {
  if (channels == 0) throw ShapeError("shift: zero channels");
}

std::vector<double> ShiftFunction::alpha() const { return exp_of(log_alpha_.value); }

LayerOutput ShiftFunction::forward(const Tensor& x) const {
  require_channels(x, channels(), "shift");
  return scale_bias_forward(this, x, log_alpha_.value, beta_.value);
}

std::pair<Tensor, std::vector<double>> ShiftFunction::inverse(const Tensor& y) const {
  require_channels(y, channels(), "shift");
  return scale_bias_inverse(y, log_alpha_.value, beta_.value);
}

Tensor ShiftFunction::backward(const LayerCache& cache, const Tensor& grad_y,
                               std::span<const double> grad_logdet, GradientSpan grads) const {
  check_cache(cache, grad_y);
  return scale_bias_backward(cache.input, grad_y, grad_logdet, log_alpha_.value, grads[0], grads[1]);
}

// ---------------------------------------------------------------- Invertible1x1

std::string_view to_string(Inv1x1Mode mode) { return mode == Inv1x1Mode::kPlu ? "plu" : "direct"; }

Inv1x1Mode parse_inv1x1_mode(std::string_view text) {
  if (text == "plu") return Inv1x1Mode::kPlu;
  if (text == "direct") return Inv1x1Mode::kDirect;
  throw ConfigError("unknown inv1x1 mode '" + std::string(text) + "' (expected plu or direct)");
}

Invertible1x1::Invertible1x1(std::size_t channels, Inv1x1Mode mode, Rng& rng)
    : Invertible1x1(random_rotation(channels, rng), mode) {}

Invertible1x1::Invertible1x1(const Matrix& w, Inv1x1Mode mode) : channels_(w.rows), mode_(mode) {
  if (!w.square() || w.rows == 0) throw ShapeError("inv1x1: weight must be a non-empty square matrix");
  set_from_matrix(w);
}

void Invertible1x1::set_from_matrix(const Matrix& w) {
  const std::size_t c = channels_;
  if (mode_ == Inv1x1Mode::kDirect) {
    weight_ = Parameter("weight", {c, c});
    weight_.value = w.data;
    return;
  }
  const LuFactors f = lu_decompose(w);
  if (f.singular) throw NumericError("inv1x1: cannot factor a singular matrix");
  perm_ = Parameter("perm", {c}, 0.0, false);
  sign_ = Parameter("sign", {c}, 0.0, false);
  lower_ = Parameter("lower", {c, c});
  upper_ = Parameter("upper", {c, c});
  log_s_ = Parameter("log_s", {c});
  for (std::size_t i = 0; i < c; ++i) {
    perm_.value[i] = static_cast<double>(f.row_of[i]);
    const double d = f.lu(i, i);
    sign_.value[i] = d < 0 ? -1.0 : 1.0;
    log_s_.value[i] = std::log(std::abs(d));
    for (std::size_t j = 0; j < c; ++j) {
      if (j < i) lower_.value[i * c + j] = f.lu(i, j);
      if (j > i) upper_.value[i * c + j] = f.lu(i, j);
    }
  }
}

std::vector<Parameter*> Invertible1x1::parameters() {
  if (mode_ == Inv1x1Mode::kDirect) return {&weight_};
  return {&lower_, &upper_, &log_s_, &perm_, &sign_};
}

namespace {

struct PluMatrices {
  Matrix q;  // W = Q L U, Q = P^T
  Matrix l;
  Matrix u;
};

PluMatrices plu_matrices(std::size_t c, const std::vector<double>& perm, const std::vector<double>& sign,
                         const std::vector<double>& lower, const std::vector<double>& upper,
                         const std::vector<double>& log_s) {
  PluMatrices m{Matrix(c, c), Matrix::identity(c), Matrix(c, c)};
  for (std::size_t i = 0; i < c; ++i) {
    m.q(static_cast<std::size_t>(perm[i]), i) = 1.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j < i) m.l(i, j) = lower[i * c + j];
      if (j > i) m.u(i, j) = upper[i * c + j];
    }
    m.u(i, i) = sign[i] * std::exp(log_s[i]);
  }
  return m;
}

}  // namespace

Matrix Invertible1x1::weight() const {
  if (mode_ == Inv1x1Mode::kDirect) return Matrix(channels_, channels_, weight_.value);
  const PluMatrices m =
      plu_matrices(channels_, perm_.value, sign_.value, lower_.value, upper_.value, log_s_.value);
  return matmul(m.q, matmul(m.l, m.u));
}

double Invertible1x1::log_abs_det() const {
  if (mode_ == Inv1x1Mode::kPlu) return sum_of(log_s_.value);
  const SignLogDet d = lu_slogdet(weight());
  if (d.sign == 0) throw NumericError("inv1x1: weight matrix is singular");
  return d.logabs;
}

LayerOutput Invertible1x1::forward(const Tensor& x) const {
  require_channels(x, channels_, "inv1x1");
  const double ld = static_cast<double>(x.spatial()) * log_abs_det();
  return LayerOutput{channel_matmul(weight(), x), per_sample_constant(x.batch(), ld), make_cache(x)};
}

std::pair<Tensor, std::vector<double>> Invertible1x1::inverse(const Tensor& y) const {
  require_channels(y, channels_, "inv1x1");
  const double ld = -static_cast<double>(y.spatial()) * log_abs_det();
  if (mode_ == Inv1x1Mode::kDirect) {
    return {channel_matmul(nxnflow::inverse(weight()), y), per_sample_constant(y.batch(), ld)};
  }
  // W^{-1} = U^{-1} L^{-1} Q^T, built column by column with triangular solves.
  const std::size_t c = channels_;
  const PluMatrices m = plu_matrices(c, perm_.value, sign_.value, lower_.value, upper_.value, log_s_.value);
  Matrix winv(c, c);
  std::vector<double> col(c);
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 0; i < c; ++i) col[i] = m.q(j, i);  // (Q^T e_j)_i
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t k = 0; k < i; ++k) col[i] -= m.l(i, k) * col[k];
    for (std::size_t i = c; i-- > 0;) {
      for (std::size_t k = i + 1; k < c; ++k) col[i] -= m.u(i, k) * col[k];
      col[i] /= m.u(i, i);
    }
    for (std::size_t i = 0; i < c; ++i) winv(i, j) = col[i];
  }
  return {channel_matmul(winv, y), per_sample_constant(y.batch(), ld)};
}

Tensor Invertible1x1::backward(const LayerCache& cache, const Tensor& grad_y,
                               std::span<const double> grad_logdet, GradientSpan grads) const {
  check_cache(cache, grad_y);
  const Tensor& x = cache.input;
  const std::size_t c = channels_;
  const std::size_t hw = x.spatial();
  const Matrix w = weight();
  Tensor gx = channel_matmul(transpose(w), grad_y);

  Matrix dw(c, c);
  for (std::size_t n = 0; n < x.batch(); ++n) {
    const double* g = grad_y.sample(n).data();
    const double* xs = x.sample(n).data();
    for (std::size_t r = 0; r < c; ++r)
      for (std::size_t k = 0; k < c; ++k) {
        double acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) acc += g[r * hw + p] * xs[k * hw + p];
        dw(r, k) += acc;
      }
  }
  const double gl = static_cast<double>(hw) * sum_of(grad_logdet);

  if (mode_ == Inv1x1Mode::kDirect) {
    if (gl != 0.0) {
      const Matrix winv_t = transpose(nxnflow::inverse(w));
      for (std::size_t i = 0; i < c * c; ++i) dw.data[i] += gl * winv_t.data[i];
    }
    for (std::size_t i = 0; i < c * c; ++i) grads[0][i] += dw.data[i];
    return gx;
  }

  const PluMatrices m = plu_matrices(c, perm_.value, sign_.value, lower_.value, upper_.value, log_s_.value);
  const Matrix qt_dw = matmul(transpose(m.q), dw);
  const Matrix dl = matmul(qt_dw, transpose(m.u));
  const Matrix du = matmul(transpose(m.l), qt_dw);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (j < i) grads[0][i * c + j] += dl(i, j);
      if (j > i) grads[1][i * c + j] += du(i, j);
    }
    grads[2][i] += du(i, i) * m.u(i, i) + gl;
  }
  return gx;
}

// ---------------------------------------------------------------- NxnConv

NxnConv::NxnConv(std::size_t channels, Inv1x1Mode mode, Rng& rng)
    : NxnConv(ShiftFunction(channels), Invertible1x1(channels, mode, rng)) {}

NxnConv::NxnConv(ShiftFunction shift, Invertible1x1 mix) : shift_(std::move(shift)), mix_(std::move(mix)) {
  if (shift_.channels() != mix_.channels()) throw ShapeError("nxn_conv: component channel counts differ");
  for (Parameter* p : shift_.parameters()) p->name = "shift." + p->name;
  for (Parameter* p : mix_.parameters()) p->name = "mix." + p->name;
}

std::vector<Parameter*> NxnConv::parameters() {
  std::vector<Parameter*> ps = shift_.parameters();
  for (Parameter* p : mix_.parameters()) ps.push_back(p);
  return ps;
}

LayerOutput NxnConv::forward(const Tensor& x) const {
  LayerOutput s = shift_.forward(x);
  LayerOutput m = mix_.forward(s.y);
  for (std::size_t n = 0; n < m.logdet.size(); ++n) m.logdet[n] += s.logdet[n];
  return LayerOutput{std::move(m.y), std::move(m.logdet), make_cache(x, {std::move(s.y)})};
}

std::pair<Tensor, std::vector<double>> NxnConv::inverse(const Tensor& y) const {
  auto [u, ld_mix] = mix_.inverse(y);
  auto [x, ld_shift] = shift_.inverse(u);
  for (std::size_t n = 0; n < ld_mix.size(); ++n) ld_shift[n] += ld_mix[n];
  return {std::move(x), std::move(ld_shift)};
}

Tensor NxnConv::backward(const LayerCache& cache, const Tensor& grad_y, std::span<const double> grad_logdet,
                         GradientSpan grads) const {
  check_cache(cache, grad_y);
  if (cache.saved.size() != 1) throw StateError("nxn_conv: malformed cache");
  const std::size_t ns = 2;
  const Tensor gu = mix_.backward(LayerCache{&mix_, cache.saved[0], {}}, grad_y, grad_logdet,
                                  grads.subspan(ns));
  return shift_.backward(LayerCache{&shift_, cache.input, {}}, gu, grad_logdet, grads.first(ns));
}

// ---------------------------------------------------------------- AffineCoupling

AffineCoupling::AffineCoupling(std::size_t channels, std::size_t hidden, std::size_t kernel, Rng& rng)
    : channels_(channels) {
  if (channels < 2) throw ShapeError("coupling: needs at least 2 channels, got " + std::to_string(channels));
  const std::size_t ca = (channels + 1) / 2;
  net_ = Conditioner(channels - ca, 2 * ca, hidden, kernel, rng);
}

std::vector<Parameter*> AffineCoupling::parameters() { return net_.parameters(); }

namespace {

// Per element of the transformed half: log s = tanh(raw), s = exp(log s).
struct CouplingTerms {
  Tensor log_s;
  Tensor t;
};

CouplingTerms coupling_terms(const Tensor& net_out, std::size_t ca) {
  CouplingTerms terms{slice_channels(net_out, 0, ca), slice_channels(net_out, ca, ca)};
  for (double& v : terms.log_s.values()) v = std::tanh(v);
  return terms;
}

}  // namespace

LayerOutput AffineCoupling::forward(const Tensor& x) const {
  require_channels(x, channels_, "coupling");
  const std::size_t ca = transformed_channels();
  const Tensor xa = slice_channels(x, 0, ca);
  const Tensor xb = slice_channels(x, ca, channels_ - ca);
  Conditioner::Trace trace;
  Tensor net_out = net_.forward(xb, &trace);
  const CouplingTerms terms = coupling_terms(net_out, ca);

  Tensor ya = xa;
  std::vector<double> logdet(x.batch(), 0.0);
  const std::size_t per = ya.sample_size();
  for (std::size_t n = 0; n < x.batch(); ++n) {
    double ld = 0.0;
    for (std::size_t k = n * per; k < (n + 1) * per; ++k) {
      ya[k] = xa[k] * std::exp(terms.log_s[k]) + terms.t[k];
      ld += terms.log_s[k];
    }
    logdet[n] = ld;
  }
  return LayerOutput{concat_channels(ya, xb), std::move(logdet),
                     make_cache(x, {std::move(trace.input), std::move(trace.pre1), std::move(trace.pre2),
                                    std::move(net_out)})};
}

std::pair<Tensor, std::vector<double>> AffineCoupling::inverse(const Tensor& y) const {
  require_channels(y, channels_, "coupling");
  const std::size_t ca = transformed_channels();
  Tensor xa = slice_channels(y, 0, ca);
  const Tensor yb = slice_channels(y, ca, channels_ - ca);
  const CouplingTerms terms = coupling_terms(net_.forward(yb), ca);
  std::vector<double> logdet(y.batch(), 0.0);
  const std::size_t per = xa.sample_size();
  for (std::size_t n = 0; n < y.batch(); ++n) {
    double ld = 0.0;
    for (std::size_t k = n * per; k < (n + 1) * per; ++k) {
      xa[k] = (xa[k] - terms.t[k]) * std::exp(-terms.log_s[k]);
      ld -= terms.log_s[k];
    }
    logdet[n] = ld;
  }
  return {concat_channels(xa, yb), std::move(logdet)};
}

Tensor AffineCoupling::backward(const LayerCache& cache, const Tensor& grad_y,
                                std::span<const double> grad_logdet, GradientSpan grads) const {
  check_cache(cache, grad_y);
  if (cache.saved.size() != 4) throw StateError("coupling: malformed cache");
  const std::size_t ca = transformed_channels();
  const std::size_t cb = channels_ - ca;
  const Tensor xa = slice_channels(cache.input, 0, ca);
  const Tensor ga = slice_channels(grad_y, 0, ca);
  const Tensor gb = slice_channels(grad_y, ca, cb);
  const Tensor& net_out = cache.saved[3];
  const CouplingTerms terms = coupling_terms(net_out, ca);

  Tensor gxa = Tensor::zeros_like(xa);
  Tensor graw = Tensor::zeros_like(xa);
  const std::size_t per = xa.sample_size();
  for (std::size_t n = 0; n < xa.batch(); ++n) {
    for (std::size_t k = n * per; k < (n + 1) * per; ++k) {
      const double ls = terms.log_s[k];
      const double s = std::exp(ls);
      gxa[k] = ga[k] * s;
      graw[k] = (ga[k] * xa[k] * s + grad_logdet[n]) * (1.0 - ls * ls);
    }
  }
  const Conditioner::Trace trace{cache.saved[0], cache.saved[1], cache.saved[2]};
  Tensor gxb = net_.backward(trace, concat_channels(graw, ga), grads);
  for (std::size_t k = 0; k < gxb.size(); ++k) gxb[k] += gb[k];
  return concat_channels(gxa, gxb);
}

// ---------------------------------------------------------------- Squeeze / split

Tensor squeeze(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("squeeze: needs a rank-4 tensor, got " + x.shape_string());
  if (x.height() % 2 != 0 || x.width() % 2 != 0) {
    throw ShapeError("squeeze: height and width must be even, got " + x.shape_string());
  }
  const std::size_t c = x.channels();
  const std::size_t h2 = x.height() / 2;
  const std::size_t w2 = x.width() / 2;
  Tensor out({x.batch(), 4 * c, h2, w2});
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t q = 0; q < 4; ++q)
        for (std::size_t i = 0; i < h2; ++i)
          for (std::size_t j = 0; j < w2; ++j)
            out.at(n, 4 * ch + q, i, j) = x.at(n, ch, 2 * i + q / 2, 2 * j + q % 2);
  return out;
}

Tensor unsqueeze(const Tensor& y) {
  if (y.rank() != 4 || y.channels() % 4 != 0) {
    throw ShapeError("unsqueeze: channels must be divisible by 4, got " + y.shape_string());
  }
  const std::size_t c = y.channels() / 4;
  Tensor out({y.batch(), c, 2 * y.height(), 2 * y.width()});
  for (std::size_t n = 0; n < y.batch(); ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t q = 0; q < 4; ++q)
        for (std::size_t i = 0; i < y.height(); ++i)
          for (std::size_t j = 0; j < y.width(); ++j)
            out.at(n, ch, 2 * i + q / 2, 2 * j + q % 2) = y.at(n, 4 * ch + q, i, j);
  return out;
}

Tensor squeeze_apply(const Tensor& x, Direction direction) {
  return direction == Direction::kForward ? squeeze(x) : unsqueeze(x);
}

LayerOutput Squeeze::forward(const Tensor& x) const {
  return LayerOutput{squeeze(x), per_sample_constant(x.batch(), 0.0), make_cache(x)};
}

std::pair<Tensor, std::vector<double>> Squeeze::inverse(const Tensor& y) const {
  return {unsqueeze(y), per_sample_constant(y.batch(), 0.0)};
}

Tensor Squeeze::backward(const LayerCache& cache, const Tensor& grad_y, std::span<const double>,
                         GradientSpan) const {
  check_cache(cache, grad_y);
  return unsqueeze(grad_y);
}

SplitParts split_channels(const Tensor& x) {
  if (x.rank() < 2 || x.channels() % 2 != 0) {
    throw ShapeError("split: channel count must be even, got " + x.shape_string());
  }
  const std::size_t half = x.channels() / 2;
  return {slice_channels(x, 0, half), slice_channels(x, half, half)};
}

Tensor unsplit_channels(const Tensor& kept, const Tensor& factored) { return concat_channels(kept, factored); }

std::vector<double> standard_normal_log_prob(const Tensor& z) {
  const std::size_t d = z.sample_size();
  const double norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  std::vector<double> out(z.batch(), norm);
  for (std::size_t n = 0; n < z.batch(); ++n) {
    double sq = 0.0;
    for (const double v : z.sample(n)) sq += v * v;
    out[n] -= 0.5 * sq;
  }
  return out;
}

}  // namespace nxnflow
