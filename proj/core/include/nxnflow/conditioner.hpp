#pragma once

#include <cstddef>
#include <vector>

#include "nxnflow/layer.hpp"
#include "nxnflow/rng.hpp"
#include "nxnflow/tensor.hpp"

namespace nxnflow {

/// The coupling network NN(x_b) -> (raw_s, t).
///
/// conv(k x k, in -> hidden) -> ReLU -> conv(1 x 1, hidden -> hidden) -> ReLU
/// -> conv(k x k, hidden -> out), zero padding, with the last convolution
/// zero-initialized. k = 3 for images and k = 1 (a dense network) for rank-2
/// data. Activations are kept channel-major over the whole batch so each
/// convolution is a single matrix product.
class Conditioner {
 public:
  Conditioner() = default;
  Conditioner(std::size_t in_channels, std::size_t out_channels, std::size_t hidden,
              std::size_t kernel, Rng& rng);

  struct Trace {
    Tensor input;   // in x (N*H*W)
    Tensor pre1;    // hidden x (N*H*W), before ReLU
    Tensor pre2;
  };

  /// x is NCHW with in_channels channels; returns NCHW with out_channels.
  Tensor forward(const Tensor& x, Trace* trace = nullptr) const;
  /// grads must hold six buffers in parameters() order.
  Tensor backward(const Trace& trace, const Tensor& grad_out, GradientSpan grads) const;

  std::vector<Parameter*> parameters();

  std::size_t in_channels() const noexcept { return in_; }
  std::size_t out_channels() const noexcept { return out_; }
  std::size_t kernel() const noexcept { return kernel_; }

  Parameter& last_bias() noexcept { return b3_; }
  Parameter& last_weight() noexcept { return w3_; }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::size_t hidden_ = 0;
  std::size_t kernel_ = 1;
  Parameter w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace nxnflow
