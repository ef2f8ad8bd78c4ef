#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nxnflow {

/// Dense row-major array of doubles.
///
/// Rank 4 tensors are laid out N x C x H x W (batch-major, then channel, then
/// row, then column). Rank 2 tensors are N x D and are treated by every flow
/// operation as N x D x 1 x 1, so the same kernels serve both layouts.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Logical NCHW extents. For rank 2, channels() is D and height()/width() are 1.
  std::size_t batch() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t channels() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }
  std::size_t height() const noexcept { return shape_.size() == 4 ? shape_[2] : 1; }
  std::size_t width() const noexcept { return shape_.size() == 4 ? shape_[3] : 1; }
  std::size_t spatial() const noexcept { return height() * width(); }
  /// Number of values per batch element.
  std::size_t sample_size() const noexcept { return batch() == 0 ? 0 : size() / batch(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t n, std::size_t c, std::size_t i = 0, std::size_t j = 0) noexcept {
    return data_[((n * channels() + c) * height() + i) * width() + j];
  }
  double at(std::size_t n, std::size_t c, std::size_t i = 0, std::size_t j = 0) const noexcept {
    return data_[((n * channels() + c) * height() + i) * width() + j];
  }

  /// Values of sample n.
  std::span<double> sample(std::size_t n) noexcept {
    return std::span<double>(data_).subspan(n * sample_size(), sample_size());
  }
  std::span<const double> sample(std::size_t n) const noexcept {
    return std::span<const double>(data_).subspan(n * sample_size(), sample_size());
  }

  /// Same data with the batch extent replaced and other extents kept.
  Tensor slice_batch(std::size_t begin, std::size_t count) const;
  /// Same layout with a different batch size, zero-filled.
  Tensor with_batch(std::size_t n) const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string to_string(const Tensor::Shape& shape);

/// max_i |a_i - b_i|. Shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Concatenate along the channel axis; batch and spatial extents must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [begin, begin + count) of x.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);
/// Stack along the batch axis.
Tensor concat_batch(std::span<const Tensor> parts);

/// Small dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) noexcept { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data[i * cols + j]; }
  bool square() const noexcept { return rows == cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix operator*(double s, const Matrix& a);

/// out[n,c,i,j] = scale[c] * x[n,c,i,j] + bias[c].
Tensor channel_affine(const Tensor& x, std::span<const double> scale, std::span<const double> bias);

/// out[n,:,i,j] = w * x[n,:,i,j] for every pixel independently.
Tensor channel_matmul(const Matrix& w, const Tensor& x);

}  // namespace nxnflow
