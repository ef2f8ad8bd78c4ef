#include <gtest/gtest.h>

#include <cmath>

#include "nxnflow/error.hpp"
#include "nxnflow/linalg.hpp"

using namespace nxnflow;

namespace {

// Laplace expansion along the first row: an oracle that shares nothing with LU.
double cofactor_det(const Matrix& a) {
  const std::size_t n = a.rows;
  if (n == 1) return a(0, 0);
  double det = 0.0;
  for (std::size_t col = 0; col < n; ++col) {
    Matrix minor(n - 1, n - 1);
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = 0, k = 0; j < n; ++j)
        if (j != col) minor(i - 1, k++) = a(i, j);
    det += (col % 2 == 0 ? 1.0 : -1.0) * a(0, col) * cofactor_det(minor);
  }
  return det;
}

Matrix random_matrix(std::size_t n, Rng& rng) {
  Matrix m(n, n);
  for (double& v : m.data) v = rng.normal();
  return m;
}

}  // namespace

TEST(Linalg, TwiceIdentity) {
  const SignLogDet s = lu_slogdet(2.0 * Matrix::identity(2));
  EXPECT_EQ(s.sign, 1);
  EXPECT_NEAR(s.logabs, std::log(4.0), 1e-15);
}

TEST(Linalg, RowSwapFlipsSign) {
  const SignLogDet s = lu_slogdet(Matrix(2, 2, {0, 1, 1, 0}));
  EXPECT_EQ(s.sign, -1);
  EXPECT_NEAR(s.logabs, 0.0, 1e-15);
}

TEST(Linalg, SingularHasZeroSign) {
  EXPECT_EQ(lu_slogdet(Matrix(2, 2, {1, 2, 2, 4})).sign, 0);
  EXPECT_EQ(lu_slogdet(Matrix(3, 3)).sign, 0);
  EXPECT_THROW(inverse(Matrix(2, 2, {1, 2, 2, 4})), NumericError);
}

TEST(Linalg, MatchesCofactorExpansion) {
  Rng rng(11);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = random_matrix(n, rng);
      const double det = cofactor_det(a);
      const SignLogDet s = lu_slogdet(a);
      EXPECT_EQ(s.sign, det > 0 ? 1 : -1);
      EXPECT_NEAR(s.logabs, std::log(std::abs(det)), 1e-10 * std::max(1.0, std::abs(s.logabs)));
    }
  }
}

TEST(Linalg, FactorsReconstruct) {
  Rng rng(12);
  const Matrix a = random_matrix(5, rng);
  const LuFactors f = lu_decompose(a);
  Matrix l = Matrix::identity(5), u(5, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) (i > j ? l(i, j) : u(i, j)) = f.lu(i, j);
  const Matrix pa = matmul(permutation_matrix(f.row_of), a);
  const Matrix lu = matmul(l, u);
  for (std::size_t k = 0; k < pa.data.size(); ++k) EXPECT_NEAR(pa.data[k], lu.data[k], 1e-12);
}

TEST(Linalg, InverseIsInverse) {
  Rng rng(13);
  const Matrix a = random_matrix(4, rng);
  const Matrix p = matmul(a, inverse(a));
  const Matrix i = Matrix::identity(4);
  for (std::size_t k = 0; k < p.data.size(); ++k) EXPECT_NEAR(p.data[k], i.data[k], 1e-12);
}

TEST(Linalg, RandomRotationIsOrthogonal) {
  Rng rng(14);
  const Matrix q = random_rotation(6, rng);
  const Matrix qtq = matmul(transpose(q), q);
  const Matrix i = Matrix::identity(6);
  for (std::size_t k = 0; k < i.data.size(); ++k) EXPECT_NEAR(qtq.data[k], i.data[k], 1e-12);
  EXPECT_NEAR(lu_slogdet(q).logabs, 0.0, 1e-12);
}

TEST(Linalg, NonSquareRejected) { EXPECT_THROW(lu_slogdet(Matrix(2, 3)), ShapeError); }
