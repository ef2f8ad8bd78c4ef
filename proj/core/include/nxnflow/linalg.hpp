#pragma once

#include <cstddef>
#include <vector>

#include "nxnflow/rng.hpp"
#include "nxnflow/tensor.hpp"

namespace nxnflow {

/// Relative pivot tolerance below which a matrix is reported singular.
inline constexpr double kPivotTolerance = 1e-12;

/// Result of an in-place LU factorization with partial pivoting: P A = L U.
///
/// `lu` holds L strictly below the diagonal (unit diagonal implied) and U on and
/// above it. `row_of[i]` is the original row placed at position i, i.e. P has
/// ones at (i, row_of[i]).
struct LuFactors {
  Matrix lu;
  std::vector<std::size_t> row_of;
  int parity = 1;
  bool singular = false;
};

LuFactors lu_decompose(const Matrix& a);

struct SignLogDet {
  int sign = 0;
  double logabs = 0.0;
};

/// (sign, log|det|) via LU with partial pivoting. sign == 0 iff singular
/// within kPivotTolerance relative to the largest entry magnitude.
SignLogDet lu_slogdet(const Matrix& a);

/// Inverse via LU. Throws NumericError if singular.
Matrix inverse(const Matrix& a);

/// Orthogonal matrix from the QR factorization of a standard Gaussian matrix.
Matrix random_rotation(std::size_t n, Rng& rng);

/// Permutation matrix with P(i, row_of[i]) = 1.
Matrix permutation_matrix(const std::vector<std::size_t>& row_of);

}  // namespace nxnflow
