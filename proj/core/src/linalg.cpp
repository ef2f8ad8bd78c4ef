#include "nxnflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nxnflow/error.hpp"

namespace nxnflow {

LuFactors lu_decompose(const Matrix& a) {
  if (!a.square()) throw ShapeError("lu_decompose: matrix is not square");
  const std::size_t n = a.rows;
  LuFactors f{a, std::vector<std::size_t>(n), 1, false};
  std::iota(f.row_of.begin(), f.row_of.end(), std::size_t{0});
  Matrix& m = f.lu;

  double scale = 0.0;
  for (const double v : a.data) scale = std::max(scale, std::abs(v));
  const double tol = kPivotTolerance * scale;

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(m(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(m(i, k)) > best) {
        best = std::abs(m(i, k));
        p = i;
      }
    }
    if (best <= tol || best == 0.0) {
      f.singular = true;
      continue;
    }
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(p, j));
      std::swap(f.row_of[k], f.row_of[p]);
      f.parity = -f.parity;
    }
    const double pivot = m(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double factor = m(i, k) / pivot;
      m(i, k) = factor;
      if (factor == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= factor * m(k, j);
    }
  }
  return f;
}

SignLogDet lu_slogdet(const Matrix& a) {
  const LuFactors f = lu_decompose(a);
  if (f.singular) return {0, -std::numeric_limits<double>::infinity()};
  SignLogDet r{f.parity, 0.0};
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double d = f.lu(i, i);
    if (d < 0) r.sign = -r.sign;
    r.logabs += std::log(std::abs(d));
  }
  return r;
}

Matrix inverse(const Matrix& a) {
  const LuFactors f = lu_decompose(a);
  if (f.singular) throw NumericError("inverse: matrix is singular");
  const std::size_t n = a.rows;
  Matrix inv(n, n);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    // Solve L U x = P e_j.
    for (std::size_t i = 0; i < n; ++i) col[i] = f.row_of[i] == j ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < i; ++k) col[i] -= f.lu(i, k) * col[k];
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t k = i + 1; k < n; ++k) col[i] -= f.lu(i, k) * col[k];
      col[i] /= f.lu(i, i);
    }
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

Matrix random_rotation(std::size_t n, Rng& rng) {
  Matrix g(n, n);
  for (double& v : g.data) v = rng.normal();
  // Modified Gram-Schmidt on the columns gives the Q factor of g.
  Matrix q(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = g(i, j);
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += q(i, k) * v[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= dot * q(i, k);
    }
    double norm = 0.0;
    for (const double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericError("random_rotation: degenerate Gaussian draw");
    for (std::size_t i = 0; i < n; ++i) q(i, j) = v[i] / norm;
  }
  return q;
}

Matrix permutation_matrix(const std::vector<std::size_t>& row_of) {
  const std::size_t n = row_of.size();
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) p(i, row_of[i]) = 1.0;
  return p;
}

}  // namespace nxnflow
