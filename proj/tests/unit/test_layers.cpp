#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "nxnflow/error.hpp"
#include "nxnflow/layers.hpp"
#include "nxnflow/verify.hpp"

using namespace nxnflow;

namespace {

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (const double x : v) s += x;
  return s;
}

}  // namespace

TEST(ActNorm, InitFromBatchStandardizes) {
  ActNorm a(1);
  const Tensor x({2, 1}, std::vector<double>{1.0, 3.0});
  a.init_from_batch(x);
  const LayerOutput out = a.forward(x);
  EXPECT_NEAR(out.y[0], -1.0, 1e-15);
  EXPECT_NEAR(out.y[1], 1.0, 1e-15);
  EXPECT_TRUE(a.initialized());
}

TEST(ActNorm, ImageInitPerChannel) {
  Rng rng(1);
  Tensor x = test::random_tensor({16, 3, 4, 4}, rng, 3.0);
  for (double& v : x.values()) v += 5.0;
  ActNorm a(3);
  a.init_from_batch(x);
  const Tensor y = a.forward(x).y;
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, m2 = 0.0;
    const double count = 16.0 * 16.0;
    for (std::size_t n = 0; n < 16; ++n)
      for (std::size_t i = 0; i < 16; ++i) m += y.values()[(n * 3 + c) * 16 + i];
    m /= count;
    for (std::size_t n = 0; n < 16; ++n)
      for (std::size_t i = 0; i < 16; ++i) m2 += std::pow(y.values()[(n * 3 + c) * 16 + i] - m, 2);
    EXPECT_LE(std::abs(m), 1e-9);
    EXPECT_LE(std::abs(std::sqrt(m2 / count) - 1.0), 1e-6);
  }
}

TEST(ActNorm, UseBeforeInitIsAStateError) {
  ActNorm a(2);
  EXPECT_THROW(a.forward(Tensor({1, 2})), StateError);
}

TEST(ActNorm, ConstantChannelIsRejected) {
  ActNorm a(1);
  EXPECT_THROW(a.init_from_batch(Tensor({4, 1}, 2.0)), NumericError);
}

TEST(ActNorm, LogDetIsSpatialTimesSumLogGamma) {
  ActNorm a(2);
  a.log_gamma() = {0.5, -0.25};
  a.set_initialized(true);
  const LayerOutput out = a.forward(Tensor({3, 2, 2, 3}));
  for (const double ld : out.logdet) EXPECT_NEAR(ld, 6 * 0.25, 1e-15);
}

TEST(Shift, ScalesAndOffsetsPerChannel) {
  ShiftFunction s(2);
  s.log_alpha() = {std::log(2.0), std::log(0.5)};
  s.beta() = {1.0, -1.0};
  Rng rng(2);
  const Tensor x = test::random_tensor({1, 2, 2, 2}, rng);
  const LayerOutput out = s.forward(x);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(out.y.values()[i], 2.0 * x.values()[i] + 1.0);
    EXPECT_DOUBLE_EQ(out.y.values()[4 + i], 0.5 * x.values()[4 + i] - 1.0);
  }
  EXPECT_NEAR(out.logdet[0], 0.0, 1e-15);
  const verify::NumericalLogDet num = verify::numerical_logdet(s, x);
  EXPECT_NEAR(num.logdet, 0.0, 1e-8);
  EXPECT_LE(verify::max_off_diagonal(num.jacobian), 1e-8);
}

TEST(Shift, StartsAtIdentity) {
  ShiftFunction s(3);
  Rng rng(3);
  const Tensor x = test::random_tensor({2, 3, 2, 2}, rng);
  EXPECT_EQ(s.forward(x).y, x);
  EXPECT_EQ(s.alpha(), std::vector<double>(3, 1.0));
}

TEST(Shift, LogDetOnlyGradient) {
  ShiftFunction s(2);
  s.log_alpha() = {0.3, -0.7};
  Rng rng(4);
  const Tensor x = test::random_tensor({1, 2, 3, 2}, rng);
  const LayerOutput out = s.forward(x);
  Gradients g = s.zero_gradients();
  const std::vector<double> gl{1.0};
  const Tensor gx = s.backward(out.cache, Tensor::zeros_like(out.y), gl, g);
  EXPECT_EQ(g[0], std::vector<double>(2, 6.0));
  EXPECT_EQ(g[1], std::vector<double>(2, 0.0));
  EXPECT_EQ(max_abs_diff(gx, Tensor::zeros_like(x)), 0.0);
}

TEST(Shift, ScalingAlphaByEAddsSpatialTimesChannels) {
  ShiftFunction s(3);
  Rng rng(5);
  const Tensor x = test::random_tensor({1, 3, 2, 4}, rng);
  const double before = s.forward(x).logdet[0];
  for (double& v : s.log_alpha()) v += 1.0;
  EXPECT_NEAR(s.forward(x).logdet[0] - before, 8.0 * 3.0, 1e-12);
}

TEST(Inv1x1, TwiceIdentityLogDet) {
  for (const Inv1x1Mode mode : {Inv1x1Mode::kPlu, Inv1x1Mode::kDirect}) {
    const Invertible1x1 w(2.0 * Matrix::identity(2), mode);
    Rng rng(6);
    const Tensor x = test::random_tensor({1, 2, 2, 2}, rng);
    const LayerOutput out = w.forward(x);
    EXPECT_NEAR(out.logdet[0], 4.0 * std::log(4.0), 1e-12);
    const verify::NumericalLogDet num = verify::numerical_logdet(w, x);
    EXPECT_LE(std::abs(num.logdet - out.logdet[0]) / std::max(1.0, std::abs(out.logdet[0])), 1e-4);
  }
}

TEST(Inv1x1, PluReproducesMatrix) {
  Rng rng(7);
  Matrix m(4, 4);
  for (double& v : m.data) v = rng.normal();
  const Invertible1x1 w(m, Inv1x1Mode::kPlu);
  const Matrix back = w.weight();
  for (std::size_t k = 0; k < m.data.size(); ++k) EXPECT_NEAR(back.data[k], m.data[k], 1e-12);
  EXPECT_NEAR(w.log_abs_det(), lu_slogdet(m).logabs, 1e-12);
}

TEST(Inv1x1, RandomRotationInit) {
  Rng rng(8);
  const Invertible1x1 w(5, Inv1x1Mode::kPlu, rng);
  EXPECT_NEAR(w.log_abs_det(), 0.0, 1e-12);
}

TEST(Inv1x1, SingularDirectMatrixRefused) {
  const Matrix singular(2, 2, {1, 2, 2, 4});
  EXPECT_THROW(Invertible1x1(singular, Inv1x1Mode::kPlu), NumericError);
  Invertible1x1 w(Matrix::identity(2), Inv1x1Mode::kDirect);
  w.parameters()[0]->value = {1, 2, 2, 4};
  EXPECT_THROW(w.forward(Tensor({1, 2, 1, 1})), NumericError);
}

TEST(NxnConv, IsShiftThenMix) {
  Rng rng(9);
  ShiftFunction s(3);
  s.log_alpha() = {0.1, -0.2, 0.3};
  s.beta() = {0.5, 0.0, -0.5};
  const Invertible1x1 m(3, Inv1x1Mode::kPlu, rng);
  const NxnConv conv(s, m);
  const Tensor x = test::random_tensor({2, 3, 2, 2}, rng);
  const LayerOutput out = conv.forward(x);
  const LayerOutput a = s.forward(x);
  const LayerOutput b = m.forward(a.y);
  EXPECT_LE(max_abs_diff(out.y, b.y), 1e-15);
  EXPECT_NEAR(out.logdet[0], a.logdet[0] + b.logdet[0], 1e-14);
}

TEST(Coupling, ZeroInitIsIdentity) {
  Rng rng(10);
  AffineCoupling c(4, 8, 3, rng);
  const Tensor x = test::random_tensor({2, 4, 4, 4}, rng);
  const LayerOutput out = c.forward(x);
  EXPECT_EQ(out.y, x);
  EXPECT_EQ(out.logdet, std::vector<double>(2, 0.0));
  const Tensor g = test::random_tensor(x.shape(), rng);
  Gradients grads = c.zero_gradients();
  const Tensor gx = c.backward(out.cache, g, std::vector<double>(2, 0.0), grads);
  // The transformed half passes gradients straight through at zero init.
  const std::size_t half = x.spatial() * 2;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k = 0; k < half; ++k) EXPECT_EQ(gx.sample(n)[k], g.sample(n)[k]);
}

TEST(Coupling, PassThroughHalfUnchanged) {
  Rng rng(11);
  AffineCoupling c(3, 8, 3, rng);
  for (Parameter* p : c.parameters())
    for (double& v : p->value) v += 0.3 * rng.normal();
  const Tensor x = test::random_tensor({1, 3, 3, 3}, rng);
  const Tensor y = c.forward(x).y;
  EXPECT_EQ(slice_channels(y, 2, 1), slice_channels(x, 2, 1));
  EXPECT_GT(max_abs_diff(slice_channels(y, 0, 2), slice_channels(x, 0, 2)), 0.0);
  EXPECT_LE(max_abs_diff(c.inverse(y).first, x), 1e-12);
}

TEST(Coupling, NeedsTwoChannels) {
  Rng rng(12);
  EXPECT_THROW(AffineCoupling(1, 8, 3, rng), ShapeError);
}

TEST(Squeeze, QuadrantLayout) {
  const Tensor x({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor y = squeeze(x);
  ASSERT_EQ(y.shape(), (Tensor::Shape{1, 4, 1, 1}));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 2, 3, 4}));

  Tensor z({1, 2, 4, 2});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = static_cast<double>(i);
  const Tensor s = squeeze(z);
  // channel 4c + q, q = quadrant of the 2x2 block.
  EXPECT_EQ(s.at(0, 4 * 1 + 3, 1, 0), z.at(0, 1, 3, 1));
  EXPECT_EQ(s.at(0, 2, 0, 0), z.at(0, 0, 1, 0));
  EXPECT_EQ(unsqueeze(s), z);
}

TEST(Squeeze, OddExtentRejected) {
  EXPECT_THROW(squeeze(Tensor({1, 1, 3, 2})), ShapeError);
  EXPECT_THROW(unsqueeze(Tensor({1, 3, 2, 2})), ShapeError);
}

TEST(Squeeze, VolumePreserving) {
  Squeeze sq;
  const LayerOutput out = sq.forward(Tensor({3, 2, 4, 4}));
  EXPECT_EQ(sum(out.logdet), 0.0);
}

TEST(Split, HalvesAndRejoins) {
  Rng rng(13);
  const Tensor x = test::random_tensor({2, 4, 2, 2}, rng);
  const SplitParts parts = split_channels(x);
  EXPECT_EQ(parts.kept.channels(), 2u);
  EXPECT_EQ(parts.factored, slice_channels(x, 2, 2));
  EXPECT_EQ(unsplit_channels(parts.kept, parts.factored), x);
  EXPECT_THROW(split_channels(Tensor({1, 3, 2, 2})), ShapeError);
}

TEST(FlowLayer, ForeignCacheRejected) {
  ShiftFunction a(2), b(2);
  const LayerOutput out = a.forward(Tensor({1, 2, 2, 2}));
  Gradients g = b.zero_gradients();
  EXPECT_THROW(b.backward(out.cache, out.y, std::vector<double>{0.0}, g), StateError);
}

TEST(FlowLayer, ChannelMismatchRejected) {
  ShiftFunction s(3);
  EXPECT_THROW(s.forward(Tensor({1, 2, 2, 2})), ShapeError);
}

TEST(Prior, StandardNormalLogProb) {
  const std::vector<double> lp = standard_normal_log_prob(Tensor({1, 2}));
  EXPECT_NEAR(lp[0], -std::log(2.0 * M_PI), 1e-15);
}
