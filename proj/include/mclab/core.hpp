#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mclab {

/// Dense row-major matrix used for every iterate, estimate and ground truth.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Shape mismatch between two operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine (SVD, iterative method) failed to produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problem dimensions m1 x m2 together with the derived quantities
/// M = max(m1, m2), m = min(m1, m2) and d = m1 + m2.
struct Dims {
  std::size_t m1 = 1;
  std::size_t m2 = 1;

  Dims() = default;
  Dims(std::size_t rows, std::size_t cols);

  std::size_t M() const { return m1 > m2 ? m1 : m2; }
  std::size_t m() const { return m1 < m2 ? m1 : m2; }
  std::size_t d() const { return m1 + m2; }
  std::size_t size() const { return m1 * m2; }

  friend bool operator==(const Dims&, const Dims&) = default;
};

Dims dims_of(const Matrix& A);

/// Throws DimensionError when A does not have shape `dims`.
void require_dims(const Matrix& A, const Dims& dims, const char* what);

/// Low-rank matrix A0 = left * right^T with ||A0||_inf <= a.
struct GroundTruth {
  Matrix left;   // m1 x r
  Matrix right;  // m2 x r
  double a = 1.0;
  std::size_t rank = 1;
  Matrix matrix;  // materialized product

  Dims dims() const { return dims_of(matrix); }
};

struct Svd {
  Matrix U;        // m1 x m, orthonormal columns
  Vector singular; // nonincreasing, nonnegative
  Matrix V;        // m2 x m, orthonormal columns
};

/// Thin SVD, A = U diag(singular) V^T.
Svd svd(const Matrix& A);

/// Singular values only, nonincreasing.
Vector singular_values(const Matrix& A);

double norm_frobenius(const Matrix& A);
double norm_nuclear(const Matrix& A);
double norm_spectral(const Matrix& A);
double norm_inf(const Matrix& A);

/// Draws factors with i.i.d. uniform(-1, 1) entries and rescales the product
/// so its largest absolute entry equals `a`. Deterministic in `seed`.
GroundTruth generate_low_rank(const Dims& dims, std::size_t rank, double a, std::uint64_t seed);

/// Largest singular value by Golub-Kahan-Lanczos bidiagonalization with full
/// reorthogonalization; stops when the Ritz value changes by <= rel_tol twice
/// in a row. Deterministic (fixed start vector).
double top_singular_value(const Matrix& A, double rel_tol = 1e-9);

/// Numerical rank: count of singular values above rel_tol * sigma_1.
std::size_t numerical_rank(const Matrix& A, double rel_tol = 1e-8);

}  // namespace mclab
