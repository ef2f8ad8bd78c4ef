#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nxnflow/layers.hpp"
#include "nxnflow/linalg.hpp"
#include "nxnflow/model.hpp"
#include "nxnflow/rng.hpp"

namespace nxnflow::verify {

/// Central-difference step used by every oracle.
inline constexpr double kFiniteDifferenceStep = 1e-5;

// ---------------------------------------------------------------- Jacobians

/// d x d Jacobian of f at x (a single-sample tensor) by central differences.
Matrix numerical_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                          double h = kFiniteDifferenceStep);

struct NumericalLogDet {
  double logdet = 0.0;
  bool singular = false;
  Matrix jacobian;
};

/// slogdet of the finite-difference Jacobian of layer.forward at x (batch 1,
/// at most 64 values).
NumericalLogDet numerical_logdet(const FlowLayer& layer, const Tensor& x, double h = kFiniteDifferenceStep);

/// Largest |J_ij| with i != j.
double max_off_diagonal(const Matrix& j);

// ---------------------------------------------------------------- Convolution reformulation

/// A D x C x K kernel as K matrices W_k (D x C) with spatial offsets (i_k, j_k):
/// Y[:, i, j] = sum_k W_k X[:, i + i_k, j + j_k], zero outside the image.
struct StandardConvSpec {
  std::size_t out_channels = 0;  // D
  std::size_t in_channels = 0;   // C
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::vector<Matrix> taps;                                   // K = kernel_h * kernel_w matrices
  std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> offsets;  // (i_k, j_k), centred footprint

  /// kernel[d][c][a][b] in row-major order, offsets centred on the footprint.
  static StandardConvSpec from_kernel(std::size_t out_channels, std::size_t in_channels, std::size_t kernel_h,
                                      std::size_t kernel_w, const std::vector<double>& kernel);
  static StandardConvSpec random(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, Rng& rng);
  /// Throws ShapeError unless taps and offsets agree and lie in the footprint.
  void validate() const;
};

/// Sliding-window convolution with zero padding (cross-correlation, as in
/// deep-learning frameworks). x is C x H x W (batch 1).
Tensor direct_convolution(const StandardConvSpec& spec, const Tensor& x);
/// x spatially shifted by (di, dj): out[c, i, j] = x[c, i + di, j + dj], zero outside.
Tensor shift_input(const Tensor& x, std::ptrdiff_t di, std::ptrdiff_t dj);
/// sum_k W_k * shift_k(x).
Tensor shifted_sum_convolution(const StandardConvSpec& spec, const Tensor& x);
/// sum_k W_k * s, i.e. every tap reads the same shared input s.
Tensor shared_input_sum(const StandardConvSpec& spec, const Tensor& s);
/// (sum_k W_k) * s as a single 1x1 convolution.
Tensor fused_shared_convolution(const StandardConvSpec& spec, const Tensor& s);

struct ConvCheck {
  double direct_vs_shifted = 0.0;  // sliding window vs sum of shifted 1x1 convolutions
  double shared_vs_fused = 0.0;    // sum over taps of a shared input vs summed kernel
  double max_deviation() const { return std::max(direct_vs_shifted, shared_vs_fused); }
};

/// Runs both equivalences; the shared input is shared_shift.forward(x).
ConvCheck conv_reformulation_check(const StandardConvSpec& spec, const Tensor& x,
                                   const ShiftFunction& shared_shift);

// ---------------------------------------------------------------- Round trips

struct LayerInstance {
  std::unique_ptr<FlowLayer> layer;
  Tensor input;
};

/// A named generator of random (layer, parameters, input) triples. The input
/// has batch 1 and at most max_dim values.
struct LayerCase {
  std::string name;
  std::function<LayerInstance(Rng&, std::size_t max_dim)> make;
};

/// Round trips use inputs up to C = 4, H = W = 8; Jacobian checks up to 48 values.
inline constexpr std::size_t kRoundTripDim = 256;
inline constexpr std::size_t kJacobianDim = 48;

/// Every layer type with randomized parameters and inputs.
std::vector<LayerCase> default_layer_cases();

struct RoundTripReport {
  std::size_t trials = 0;
  double max_reconstruction_error = 0.0;  // max |x - inv(fwd(x))|
  double max_logdet_mismatch = 0.0;       // max |logdet_fwd + logdet_inv|
};

RoundTripReport roundtrip_suite(const LayerCase& layer_case, std::size_t trials, Rng& rng);
/// Random small multi-scale models with perturbed parameters.
RoundTripReport model_roundtrip_suite(std::size_t trials, Rng& rng);

// ---------------------------------------------------------------- Models

/// Adds N(0, scale^2) noise to every trainable parameter.
void randomize_parameters(MultiScaleModel& model, double scale, Rng& rng);
/// Random model for the given config, ActNorm-initialized on a random batch,
/// then perturbed by randomize_parameters.
MultiScaleModel random_model(const ModelConfig& config, double scale, Rng& rng);

/// Midpoint Riemann sum of exp(log p) over [lo, hi]^2 with the given step.
double quadrature_normalization(const MultiScaleModel& model, double lo, double hi, double step);

// ---------------------------------------------------------------- Gradients

/// Relative error convention for all gradient and log-det checks:
/// |a - b| / max(1, |a|, |b|).
double relative_error(double a, double b);

struct GradientCheck {
  double max_input_error = 0.0;
  double max_param_error = 0.0;
  std::size_t checked = 0;
  double max_error() const { return std::max(max_input_error, max_param_error); }
};

/// Compares layer.backward against central differences of the scalar
/// L = sum(r * y) + sum(q * logdet) for random fixed r, q.
GradientCheck check_layer_gradients(FlowLayer& layer, const Tensor& x, Rng& rng,
                                    double h = kFiniteDifferenceStep);
/// Compares loss_and_gradient against central differences of the mean NLL.
GradientCheck check_model_gradients(MultiScaleModel& model, const Tensor& batch, double h = kFiniteDifferenceStep);

// ---------------------------------------------------------------- Reports

struct CheckLine {
  std::string name;
  bool passed = false;
  double metric = 0.0;
  double threshold = 0.0;
};

class Report {
 public:
  /// Records metric <= threshold (NaN fails).
  void add(std::string name, double metric, double threshold);
  /// Records metric >= threshold.
  void add_at_least(std::string name, double metric, double threshold);
  void add_range(std::string name, double metric, double lo, double hi);

  const std::vector<CheckLine>& lines() const noexcept { return lines_; }
  bool passed() const;
  /// One "name,status,metric,threshold" line per check.
  std::string to_text() const;
  void append(const Report& other);

 private:
  std::vector<CheckLine> lines_;
};

enum class Suite { kLayers, kGradients, kConvEquiv, kNormalization, kAll };
Suite parse_suite(std::string_view name);

/// Runs the selected oracle suite with all randomness derived from `seed`.
Report run_suite(Suite suite, std::uint64_t seed, const std::vector<LayerCase>& cases = default_layer_cases());

Report run_layer_suite(std::uint64_t seed, const std::vector<LayerCase>& cases);
Report run_gradient_suite(std::uint64_t seed, const std::vector<LayerCase>& cases);
Report run_conv_equiv_suite(std::uint64_t seed);
Report run_normalization_suite(std::uint64_t seed);

}  // namespace nxnflow::verify
