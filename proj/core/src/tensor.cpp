#include "nxnflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "nxnflow/error.hpp"

namespace nxnflow {

namespace {

std::size_t checked_volume(const Tensor::Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
  }
  // The batch extent may be zero (empty datasets); every other extent is >= 1.
  for (std::size_t k = 1; k < shape.size(); ++k) {
    if (shape[k] == 0) throw ShapeError("zero extent in shape " + to_string(shape));
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string to_string(const Tensor::Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? "x" : "") << shape[k];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(checked_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != checked_volume(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

Tensor Tensor::slice_batch(std::size_t begin, std::size_t count) const {
  if (begin + count > batch()) throw ShapeError("batch slice out of range");
  Shape s = shape_;
  s[0] = count;
  const std::size_t m = sample_size();
  std::vector<double> d(data_.begin() + static_cast<std::ptrdiff_t>(begin * m),
                        data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * m));
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::with_batch(std::size_t n) const {
  Shape s = shape_;
  s[0] = n;
  return Tensor(std::move(s));
}

std::string Tensor::shape_string() const { return to_string(shape_); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.batch() != b.batch() || a.height() != b.height() ||
      a.width() != b.width()) {
    throw ShapeError("concat_channels: " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor::Shape s = a.shape();
  s[1] = a.channels() + b.channels();
  Tensor out(std::move(s));
  const std::size_t sa = a.sample_size();
  const std::size_t sb = b.sample_size();
  for (std::size_t n = 0; n < a.batch(); ++n) {
    auto dst = out.sample(n);
    std::copy_n(a.sample(n).begin(), sa, dst.begin());
    std::copy_n(b.sample(n).begin(), sb, dst.begin() + static_cast<std::ptrdiff_t>(sa));
  }
  return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.rank() < 2 || count == 0 || begin + count > x.channels()) {
    throw ShapeError("slice_channels out of range for " + x.shape_string());
  }
  Tensor::Shape s = x.shape();
  s[1] = count;
  Tensor out(std::move(s));
  const std::size_t hw = x.spatial();
  for (std::size_t n = 0; n < x.batch(); ++n) {
    const auto src = x.sample(n).subspan(begin * hw, count * hw);
    std::copy(src.begin(), src.end(), out.sample(n).begin());
  }
  return out;
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no parts");
  Tensor::Shape s = parts.front().shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Tensor::Shape ps = p.shape();
    if (ps.size() != s.size() || !std::equal(ps.begin() + 1, ps.end(), s.begin() + 1)) {
      throw ShapeError("concat_batch: mismatched " + p.shape_string());
    }
    total += p.batch();
  }
  s[0] = total;
  std::vector<double> d;
  d.reserve(total * parts.front().sample_size());
  for (const Tensor& p : parts) d.insert(d.end(), p.values().begin(), p.values().end());
  return Tensor(std::move(s), std::move(d));
}

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) throw ShapeError("matrix data length does not match extents");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data) v *= s;
  return out;
}

Tensor channel_affine(const Tensor& x, std::span<const double> scale, std::span<const double> bias) {
  const std::size_t c = x.channels();
  if (scale.size() != c || bias.size() != c) {
    throw ShapeError("channel_affine: expected " + std::to_string(c) + " channel parameters, got " +
                     std::to_string(scale.size()) + "/" + std::to_string(bias.size()));
  }
  Tensor out = Tensor::zeros_like(x);
  const std::size_t hw = x.spatial();
  const double* src = x.data().data();
  double* dst = out.data().data();
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double s = scale[ch];
      const double b = bias[ch];
      for (std::size_t p = 0; p < hw; ++p) *dst++ = s * *src++ + b;
    }
  }
  return out;
}

Tensor channel_matmul(const Matrix& w, const Tensor& x) {
  if (w.cols != x.channels()) {
    throw ShapeError("channel_matmul: matrix has " + std::to_string(w.cols) + " columns, tensor has " +
                     std::to_string(x.channels()) + " channels");
  }
  Tensor::Shape s = x.shape();
  if (s.size() < 2) throw ShapeError("channel_matmul needs rank >= 2");
  s[1] = w.rows;
  Tensor out(std::move(s));
  const std::size_t hw = x.spatial();
  for (std::size_t n = 0; n < x.batch(); ++n) {
    const double* in = x.sample(n).data();
    double* o = out.sample(n).data();
    for (std::size_t r = 0; r < w.rows; ++r) {
      double* orow = o + r * hw;
      for (std::size_t k = 0; k < w.cols; ++k) {
        const double wrk = w(r, k);
        const double* irow = in + k * hw;
        for (std::size_t p = 0; p < hw; ++p) orow[p] += wrk * irow[p];
      }
    }
  }
  return out;
}

}  // namespace nxnflow
