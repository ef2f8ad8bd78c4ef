#pragma once

#include <cstddef>
#include <memory>
#include <string_view>
#include <utility>
#include <vector>

#include "nxnflow/conditioner.hpp"
#include "nxnflow/layer.hpp"
#include "nxnflow/linalg.hpp"
#include "nxnflow/rng.hpp"

namespace nxnflow {

/// Per-channel affine y = gamma * x + beta with gamma = exp(log_gamma) and
/// data-dependent initialization. Forward log-determinant is H*W*sum(log gamma).
class ActNorm final : public FlowLayer {
 public:
  explicit ActNorm(std::size_t channels);

  std::string_view kind() const override { return "actnorm"; }
  LayerOutput forward(const Tensor& x) const override;
  std::pair<Tensor, std::vector<double>> inverse(const Tensor& y) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_y, std::span<const double> grad_logdet,
                  GradientSpan grads) const override;
  std::vector<Parameter*> parameters() override { return {&log_gamma_, &beta_, &initialized_}; }
  std::unique_ptr<FlowLayer> clone() const override { return std::make_unique<ActNorm>(*this); }

  /// Sets gamma = 1/sigma and beta = -mu/sigma from population statistics of
  /// `batch` so the forward output of that batch has zero mean and unit variance.
  void init_from_batch(const Tensor& batch);
  bool initialized() const noexcept { return initialized_.value[0] != 0.0; }
  /// Mark as initialized without touching parameters (tests, checkpoint loads).
  void set_initialized(bool v) noexcept { initialized_.value[0] = v ? 1.0 : 0.0; }

  std::size_t channels() const noexcept { return log_gamma_.value.size(); }
  std::vector<double>& log_gamma() noexcept { return log_gamma_.value; }
  std::vector<double>& beta() noexcept { return beta_.value; }

 private:
  void require_initialized() const;

  Parameter log_gamma_;
  Parameter beta_;
  Parameter initialized_;
};

/// The invertible shift function S(X)_{c,i,j} = alpha_c X_{c,i,j} + beta_c with
/// alpha_c = exp(log_alpha_c) > 0. Its Jacobian is diagonal, so the forward
/// log-determinant is H*W*sum_c log alpha_c. Starts at alpha = 1, beta = 0.
class ShiftFunction final : public FlowLayer {
 public:
  explicit ShiftFunction(std::size_t channels);

  std::string_view kind() const override { return "shift"; }
  LayerOutput forward(const Tensor& x) const override;
  std::pair<Tensor, std::vector<double>> inverse(const Tensor& y) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_y, std::span<const double> grad_logdet,
                  GradientSpan grads) const override;
  std::vector<Parameter*> parameters() override { return {&log_alpha_, &beta_}; }
  std::unique_ptr<FlowLayer> clone() const override { return std::make_unique<ShiftFunction>(*this); }

  std::size_t channels() const noexcept { return log_alpha_.value.size(); }
  std::vector<double> alpha() const;
  std::vector<double>& log_alpha() noexcept { return log_alpha_.value; }
  std::vector<double>& beta() noexcept { return beta_.value; }

 private:
  Parameter log_alpha_;
  Parameter beta_;
};

enum class Inv1x1Mode { kPlu, kDirect };

std::string_view to_string(Inv1x1Mode mode);
Inv1x1Mode parse_inv1x1_mode(std::string_view text);

/// Invertible 1x1 convolution y_{:,i,j} = W x_{:,i,j}.
///
/// PLU mode stores W = P L (U + diag(sign * exp(log_s))) with P and sign fixed,
/// L unit lower triangular and U strictly upper triangular; the log-determinant
/// is H*W*sum(log_s). Direct mode stores W itself and evaluates log|det W|
/// by LU, refusing singular matrices.
class Invertible1x1 final : public FlowLayer {
 public:
  /// Initializes W to a random rotation (log|det W| = 0).
  Invertible1x1(std::size_t channels, Inv1x1Mode mode, Rng& rng);
  /// Uses `w` as the matrix (factored when mode is PLU).
  Invertible1x1(const Matrix& w, Inv1x1Mode mode);

  std::string_view kind() const override { return "inv1x1"; }
  LayerOutput forward(const Tensor& x) const override;
  std::pair<Tensor, std::vector<double>> inverse(const Tensor& y) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_y, std::span<const double> grad_logdet,
                  GradientSpan grads) const override;
  std::vector<Parameter*> parameters() override;
  std::unique_ptr<FlowLayer> clone() const override { return std::make_unique<Invertible1x1>(*this); }

  Inv1x1Mode mode() const noexcept { return mode_; }
  std::size_t channels() const noexcept { return channels_; }
  /// The effective C x C matrix.
  Matrix weight() const;
  /// log|det W|; throws NumericError when W is singular.
  double log_abs_det() const;

 private:
  void set_from_matrix(const Matrix& w);

  std::size_t channels_;
  Inv1x1Mode mode_;
  // PLU
  Parameter perm_;   // row_of, non-trainable
  Parameter sign_;   // sign of diag(U), non-trainable
  Parameter lower_;  // C x C, strictly lower part used
  Parameter upper_;  // C x C, strictly upper part used
  Parameter log_s_;  // C
  // Direct
  Parameter weight_;
};

/// The invertible n x n convolution: the shift function followed by an
/// invertible 1x1 convolution. Inverse runs the two inverses in reverse order.
class NxnConv final : public FlowLayer {
 public:
  NxnConv(std::size_t channels, Inv1x1Mode mode, Rng& rng);
  NxnConv(ShiftFunction shift, Invertible1x1 mix);

  std::string_view kind() const override { return "nxn_conv"; }
  LayerOutput forward(const Tensor& x) const override;
  std::pair<Tensor, std::vector<double>> inverse(const Tensor& y) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_y, std::span<const double> grad_logdet,
                  GradientSpan grads) const override;
  std::vector<Parameter*> parameters() override;
  std::unique_ptr<FlowLayer> clone() const override { return std::make_unique<NxnConv>(*this); }

  ShiftFunction& shift() noexcept { return shift_; }
  Invertible1x1& mix() noexcept { return mix_; }
  const ShiftFunction& shift() const noexcept { return shift_; }
  const Invertible1x1& mix() const noexcept { return mix_; }

 private:
  ShiftFunction shift_;
  Invertible1x1 mix_;
};

/// Affine coupling. x_a = first ceil(C/2) channels, x_b = the rest;
/// y_a = x_a * s(x_b) + t(x_b), y_b = x_b, with s = exp(tanh(raw_s)).
class AffineCoupling final : public FlowLayer {
 public:
  /// kernel 3 for images, 1 (dense) for rank-2 data.
  AffineCoupling(std::size_t channels, std::size_t hidden, std::size_t kernel, Rng& rng);

  std::string_view kind() const override { return "coupling"; }
  LayerOutput forward(const Tensor& x) const override;
  std::pair<Tensor, std::vector<double>> inverse(const Tensor& y) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_y, std::span<const double> grad_logdet,
                  GradientSpan grads) const override;
  std::vector<Parameter*> parameters() override;
  std::unique_ptr<FlowLayer> clone() const override { return std::make_unique<AffineCoupling>(*this); }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t transformed_channels() const noexcept { return (channels_ + 1) / 2; }
  Conditioner& conditioner() noexcept { return net_; }

 private:
  std::size_t channels_;
  Conditioner net_;
};

/// C x H x W -> 4C x H/2 x W/2. Output channel 4c + q holds quadrant q of the
/// 2x2 block (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right) of input
/// channel c. Volume preserving.
class Squeeze final : public FlowLayer {
 public:
  std::string_view kind() const override { return "squeeze"; }
  LayerOutput forward(const Tensor& x) const override;
  std::pair<Tensor, std::vector<double>> inverse(const Tensor& y) const override;
  Tensor backward(const LayerCache& cache, const Tensor& grad_y, std::span<const double> grad_logdet,
                  GradientSpan grads) const override;
  std::vector<Parameter*> parameters() override { return {}; }
  std::unique_ptr<FlowLayer> clone() const override { return std::make_unique<Squeeze>(*this); }
};

Tensor squeeze(const Tensor& x);
Tensor unsqueeze(const Tensor& y);
Tensor squeeze_apply(const Tensor& x, Direction direction);

/// Splits off the last C/2 channels as a latent part.
struct SplitParts {
  Tensor kept;
  Tensor factored;
};
SplitParts split_channels(const Tensor& x);
Tensor unsplit_channels(const Tensor& kept, const Tensor& factored);

/// Per-sample log N(z; 0, I).
std::vector<double> standard_normal_log_prob(const Tensor& z);

}  // namespace nxnflow
