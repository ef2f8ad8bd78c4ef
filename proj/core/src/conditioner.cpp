#include "nxnflow/conditioner.hpp"

#include <algorithm>
#include <cmath>

#include "nxnflow/error.hpp"

namespace nxnflow {

namespace {

// Channel-major "CP" layout: C rows, one column per (n, i, j) position.
struct Geometry {
  std::size_t n, h, w;
  std::size_t positions() const { return n * h * w; }
};

Tensor to_cp(const Tensor& x) {
  const std::size_t c = x.channels();
  const std::size_t hw = x.spatial();
  const std::size_t p = x.batch() * hw;
  Tensor out({c, p});
  for (std::size_t n = 0; n < x.batch(); ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(x.data().data() + (n * c + ch) * hw, hw, out.data().data() + ch * p + n * hw);
  return out;
}

Tensor from_cp(const Tensor& cp, const Tensor::Shape& like, std::size_t channels) {
  Tensor::Shape s = like;
  s[1] = channels;
  Tensor out(std::move(s));
  const std::size_t hw = out.spatial();
  const std::size_t p = cp.shape()[1];
  for (std::size_t n = 0; n < out.batch(); ++n)
    for (std::size_t ch = 0; ch < channels; ++ch)
      std::copy_n(cp.data().data() + ch * p + n * hw, hw, out.data().data() + (n * channels + ch) * hw);
  return out;
}

Tensor im2col(const Tensor& cp, const Geometry& g, std::size_t k) {
  if (k == 1) return cp;
  const std::size_t c = cp.shape()[0];
  const std::size_t p = g.positions();
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor cols({c * k * k, p});
  const double* src = cp.data().data();
  double* dst = cols.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = dst + ((ch * k + ki) * k + kj) * p;
        const auto di = static_cast<std::ptrdiff_t>(ki) - pad;
        const auto dj = static_cast<std::ptrdiff_t>(kj) - pad;
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t i = 0; i < g.h; ++i) {
            const auto ii = static_cast<std::ptrdiff_t>(i) + di;
            double* out = row + (n * g.h + i) * g.w;
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;  // stays zero
            const double* in = src + ch * p + (n * g.h + static_cast<std::size_t>(ii)) * g.w;
            for (std::size_t j = 0; j < g.w; ++j) {
              const auto jj = static_cast<std::ptrdiff_t>(j) + dj;
              if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(g.w)) out[j] = in[jj];
            }
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const Tensor& cols, std::size_t channels, const Geometry& g, std::size_t k) {
  if (k == 1) return cols;
  const std::size_t p = g.positions();
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor cp({channels, p});
  const double* src = cols.data().data();
  double* dst = cp.data().data();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = src + ((ch * k + ki) * k + kj) * p;
        const auto di = static_cast<std::ptrdiff_t>(ki) - pad;
        const auto dj = static_cast<std::ptrdiff_t>(kj) - pad;
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t i = 0; i < g.h; ++i) {
            const auto ii = static_cast<std::ptrdiff_t>(i) + di;
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
            const double* in = row + (n * g.h + i) * g.w;
            double* out = dst + ch * p + (n * g.h + static_cast<std::size_t>(ii)) * g.w;
            for (std::size_t j = 0; j < g.w; ++j) {
              const auto jj = static_cast<std::ptrdiff_t>(j) + dj;
              if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(g.w)) out[jj] += in[j];
            }
          }
        }
      }
    }
  }
  return cp;
}

// out (m x n) = a (m x k) * b (k x n) + bias broadcast over columns.
Tensor affine_rows(std::span<const double> a, std::span<const double> bias, const Tensor& b,
                   std::size_t m) {
  const std::size_t k = b.shape()[0];
  const std::size_t n = b.shape()[1];
  Tensor out({m, n});
  double* c = out.data().data();
  const double* bb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::fill_n(crow, n, bias[i]);
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a[i * k + l];
      if (av == 0.0) continue;
      const double* brow = bb + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return out;
}

// gw (m x k) += g (m x n) * x (k x n)^T ; gb (m) += row sums of g.
void accumulate_weight_grad(const Tensor& g, const Tensor& x, std::vector<double>& gw,
                            std::vector<double>& gb) {
  const std::size_t m = g.shape()[0];
  const std::size_t n = g.shape()[1];
  const std::size_t k = x.shape()[0];
  const double* gp = g.data().data();
  const double* xp = x.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = gp + i * n;
    double rs = 0.0;
    for (std::size_t j = 0; j < n; ++j) rs += grow[j];
    gb[i] += rs;
    for (std::size_t l = 0; l < k; ++l) {
      const double* xrow = xp + l * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += grow[j] * xrow[j];
      gw[i * k + l] += dot;
    }
  }
}

// out (k x n) = w (m x k)^T * g (m x n).
Tensor transpose_product(std::span<const double> w, const Tensor& g, std::size_t k) {
  const std::size_t m = g.shape()[0];
  const std::size_t n = g.shape()[1];
  Tensor out({k, n});
  double* o = out.data().data();
  const double* gp = g.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = gp + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double wv = w[i * k + l];
      if (wv == 0.0) continue;
      double* orow = o + l * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += wv * grow[j];
    }
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

void mask_relu_grad(Tensor& g, const Tensor& pre) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (pre[i] <= 0.0) g[i] = 0.0;
}

void fill_gaussian(Parameter& p, double stddev, Rng& rng) {
  for (double& v : p.value) v = stddev * rng.normal();
}

}  // namespace

Conditioner::Conditioner(std::size_t in_channels, std::size_t out_channels, std::size_t hidden,
                         std::size_t kernel, Rng& rng)
    : in_(in_channels), out_(out_channels), hidden_(hidden), kernel_(kernel),
      w1_("w1", {hidden, in_channels, kernel, kernel}),
      b1_("b1", {hidden}),
      w2_("w2", {hidden, hidden, 1, 1}),
      b2_("b2", {hidden}),
      w3_("w3", {out_channels, hidden, kernel, kernel}),
      b3_("b3", {out_channels}) {
  if (kernel % 2 == 0) throw ShapeError("conditioner kernel size must be odd");
  if (in_channels == 0 || out_channels == 0 || hidden == 0) {
    throw ShapeError("conditioner extents must be positive");
  }
  fill_gaussian(w1_, 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel)), rng);
  fill_gaussian(w2_, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
}

std::vector<Parameter*> Conditioner::parameters() { return {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_}; }

Tensor Conditioner::forward(const Tensor& x, Trace* trace) const {
  if (x.channels() != in_) {
    throw ShapeError("conditioner expects " + std::to_string(in_) + " channels, got " +
                     x.shape_string());
  }
  const Geometry g{x.batch(), x.height(), x.width()};
  Tensor a0 = to_cp(x);
  Tensor pre1 = affine_rows(w1_.value, b1_.value, im2col(a0, g, kernel_), hidden_);
  Tensor pre2 = affine_rows(w2_.value, b2_.value, relu(pre1), hidden_);
  Tensor out = affine_rows(w3_.value, b3_.value, im2col(relu(pre2), g, kernel_), out_);
  if (trace != nullptr) {
    trace->input = std::move(a0);
    trace->pre1 = std::move(pre1);
    trace->pre2 = std::move(pre2);
  }
  return from_cp(out, x.shape(), out_);
}

Tensor Conditioner::backward(const Trace& trace, const Tensor& grad_out, GradientSpan grads) const {
  if (grads.size() != 6) throw StateError("conditioner backward needs 6 gradient buffers");
  const Geometry g{grad_out.batch(), grad_out.height(), grad_out.width()};
  const std::size_t kk = kernel_ * kernel_;

  const Tensor g3 = to_cp(grad_out);
  const Tensor a2 = relu(trace.pre2);
  accumulate_weight_grad(g3, im2col(a2, g, kernel_), grads[4], grads[5]);
  Tensor g2 = col2im(transpose_product(w3_.value, g3, hidden_ * kk), hidden_, g, kernel_);
  mask_relu_grad(g2, trace.pre2);

  accumulate_weight_grad(g2, relu(trace.pre1), grads[2], grads[3]);
  Tensor g1 = transpose_product(w2_.value, g2, hidden_);
  mask_relu_grad(g1, trace.pre1);

  accumulate_weight_grad(g1, im2col(trace.input, g, kernel_), grads[0], grads[1]);
  const Tensor g0 = col2im(transpose_product(w1_.value, g1, in_ * kk), in_, g, kernel_);
  return from_cp(g0, grad_out.shape(), in_);
}

}  // namespace nxnflow
