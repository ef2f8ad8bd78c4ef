#include <gtest/gtest.h>

#include "helpers.hpp"
#include "nxnflow/error.hpp"
#include "nxnflow/tensor.hpp"

using namespace nxnflow;

TEST(Tensor, ShapeAccessors) {
  Tensor t({2, 3, 4, 5});
  EXPECT_EQ(t.batch(), 2u);
  EXPECT_EQ(t.channels(), 3u);
  EXPECT_EQ(t.spatial(), 20u);
  EXPECT_EQ(t.sample_size(), 60u);
  EXPECT_EQ(t.size(), 120u);

  Tensor p({7, 2});
  EXPECT_EQ(p.height(), 1u);
  EXPECT_EQ(p.width(), 1u);
  EXPECT_EQ(p.channels(), 2u);
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Tensor::Shape{}), ShapeError);
  EXPECT_THROW(Tensor({1, 2, 3, 4, 5}), ShapeError);
  EXPECT_THROW(Tensor({2, 0, 3, 3}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Tensor, EmptyBatchIsAllowed) {
  Tensor t({0, 3, 4, 4});
  EXPECT_EQ(t.size(), 0u);
  EXPECT_EQ(t.sample_size(), 0u);
}

TEST(Tensor, AtIsRowMajorNchw) {
  Tensor t({2, 2, 2, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  EXPECT_EQ(t.at(1, 0, 1, 2), 1 * 12 + 0 * 6 + 1 * 3 + 2);
  EXPECT_EQ(t.at(0, 1, 0, 1), 7);
}

TEST(Tensor, ChannelSliceConcatRoundTrip) {
  Rng rng(1);
  const Tensor x = test::random_tensor({3, 5, 2, 2}, rng);
  const Tensor a = slice_channels(x, 0, 2);
  const Tensor b = slice_channels(x, 2, 3);
  EXPECT_EQ(a.channels(), 2u);
  EXPECT_EQ(concat_channels(a, b), x);
  EXPECT_THROW(slice_channels(x, 4, 2), ShapeError);
}

TEST(Tensor, BatchSliceConcatRoundTrip) {
  Rng rng(2);
  const Tensor x = test::random_tensor({5, 2}, rng);
  const std::vector<Tensor> parts{x.slice_batch(0, 2), x.slice_batch(2, 3)};
  EXPECT_EQ(concat_batch(parts), x);
}

TEST(Tensor, ChannelMatmulMatchesLoops) {
  Rng rng(3);
  const Tensor x = test::random_tensor({2, 3, 2, 2}, rng);
  Matrix w(4, 3);
  for (double& v : w.data) v = rng.normal();
  const Tensor y = channel_matmul(w, x);
  ASSERT_EQ(y.shape(), (Tensor::Shape{2, 4, 2, 2}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t d = 0; d < 4; ++d)
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < 3; ++c) s += w(d, c) * x.at(n, c, i, j);
          EXPECT_NEAR(y.at(n, d, i, j), s, 1e-14);
        }
}

TEST(Tensor, MatrixAlgebra) {
  const Matrix a(2, 2, {1, 2, 3, 4});
  const Matrix b(2, 2, {0, 1, 1, 0});
  EXPECT_EQ(matmul(a, b), Matrix(2, 2, {2, 1, 4, 3}));
  EXPECT_EQ(transpose(a), Matrix(2, 2, {1, 3, 2, 4}));
  EXPECT_EQ(matmul(a, Matrix::identity(2)), a);
  EXPECT_THROW(matmul(a, Matrix(3, 1)), ShapeError);
}

TEST(Tensor, MaxAbsDiffNeedsSameShape) {
  EXPECT_THROW(max_abs_diff(Tensor({1, 2}), Tensor({2, 1})), ShapeError);
  EXPECT_EQ(max_abs_diff(Tensor({1, 2}, std::vector<double>{1, 5}), Tensor({1, 2}, std::vector<double>{2, 3})), 2.0);
}
