#include "mclab/core.hpp"

#include "mclab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace mclab {

Dims::Dims(std::size_t rows, std::size_t cols) : m1(rows), m2(cols) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("Dims: m1 and m2 must be positive");
}

Dims dims_of(const Matrix& A) {
  return Dims(static_cast<std::size_t>(A.rows()), static_cast<std::size_t>(A.cols()));
}

void require_dims(const Matrix& A, const Dims& dims, const char* what) {
  if (static_cast<std::size_t>(A.rows()) != dims.m1 ||
      static_cast<std::size_t>(A.cols()) != dims.m2) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(dims.m1) + "x" +
                         std::to_string(dims.m2) + ", got " + std::to_string(A.rows()) + "x" +
                         std::to_string(A.cols()));
  }
}

Svd svd(const Matrix& A) {
  Eigen::BDCSVD<Eigen::MatrixXd> solver(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) throw NumericalError("svd: decomposition did not converge");
  Svd out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
  if (!out.singular.allFinite()) throw NumericalError("svd: non-finite singular values");
  return out;
}

Vector singular_values(const Matrix& A) {
  Eigen::BDCSVD<Eigen::MatrixXd> solver(A);
  if (solver.info() != Eigen::Success) throw NumericalError("svd: decomposition did not converge");
  return solver.singularValues();
}

double norm_frobenius(const Matrix& A) { return A.norm(); }

double norm_nuclear(const Matrix& A) { return singular_values(A).sum(); }

double norm_spectral(const Matrix& A) {
  const Vector s = singular_values(A);
  return s.size() > 0 ? s(0) : 0.0;
}

double norm_inf(const Matrix& A) { return A.size() > 0 ? A.cwiseAbs().maxCoeff() : 0.0; }

std::size_t numerical_rank(const Matrix& A, double rel_tol) {
  const Vector s = singular_values(A);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  return static_cast<std::size_t>((s.array() > rel_tol * s(0)).count());
}

GroundTruth generate_low_rank(const Dims& dims, std::size_t rank, double a, std::uint64_t seed) {
  if (rank == 0 || rank > dims.m())
    throw std::invalid_argument("generate_low_rank: rank must satisfy 1 <= r <= min(m1, m2)");
  if (!(a > 0.0) || !std::isfinite(a))
    throw std::invalid_argument("generate_low_rank: a must be positive and finite");

  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const auto r = static_cast<Eigen::Index>(rank);

  GroundTruth gt;
  gt.a = a;
  gt.rank = rank;
  for (;;) {
    gt.left = Matrix(dims.m1, r);
    gt.right = Matrix(dims.m2, r);
    for (Eigen::Index i = 0; i < gt.left.size(); ++i) gt.left.data()[i] = unif(rng);
    for (Eigen::Index i = 0; i < gt.right.size(); ++i) gt.right.data()[i] = unif(rng);
    gt.matrix = gt.left * gt.right.transpose();
    Eigen::Index jmax = 0, kmax = 0;
    const double peak = gt.matrix.cwiseAbs().maxCoeff(&jmax, &kmax);
    if (peak == 0.0) continue;

    const double scale = a / peak;
    gt.left *= scale;
    gt.matrix *= scale;
    // Pin the extreme entry to the boundary and clip rounding overshoot elsewhere.
    gt.matrix = gt.matrix.cwiseMax(-a).cwiseMin(a);
    gt.matrix(jmax, kmax) = std::copysign(a, gt.matrix(jmax, kmax));
    return gt;
  }
}

double top_singular_value(const Matrix& A, double rel_tol) {
  const Eigen::Index m1 = A.rows(), m2 = A.cols();
  // Start on the smaller side so that min(m1, m2) steps exhaust the Krylov space.
  if (m1 < m2) return top_singular_value(Matrix(A.transpose()), rel_tol);
  const Eigen::Index kmax = m2;
  if (kmax == 0) return 0.0;
  const double scale = A.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  const double tiny = 1e-14 * scale;

  Eigen::MatrixXd U(m1, kmax), V(m2, kmax + 1);
  Rng rng = make_rng(0x5EEDCAFEULL);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::VectorXd v(m2);
  for (Eigen::Index i = 0; i < m2; ++i) v(i) = unif(rng);
  v.normalize();
  V.col(0) = v;

  std::vector<double> alpha, beta;
  Eigen::VectorXd u_prev = Eigen::VectorXd::Zero(m1);
  double beta_prev = 0.0, sigma = 0.0, sigma_old = 0.0;
  int stable = 0;
  for (Eigen::Index k = 0; k < kmax; ++k) {
    Eigen::VectorXd u = A * V.col(k) - beta_prev * u_prev;
    for (int pass = 0; pass < 2 && k > 0; ++pass)
      u -= U.leftCols(k) * (U.leftCols(k).transpose() * u);
    const double a_k = u.norm();
    if (a_k <= tiny) break;
    u /= a_k;
    U.col(k) = u;
    alpha.push_back(a_k);

    Eigen::VectorXd w = A.transpose() * u - a_k * V.col(k);
    for (int pass = 0; pass < 2; ++pass)
      w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
    const double b_k = w.norm();
    beta.push_back(b_k);

    // U_k^T A V_{k+1} = [B_k, b_k e_k] exactly, so its top singular value is a
    // lower bound that becomes exact when the next alpha breaks down.
    const auto size = static_cast<Eigen::Index>(alpha.size());
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(size, size + 1);
    for (Eigen::Index i = 0; i < size; ++i) {
      B(i, i) = alpha[static_cast<std::size_t>(i)];
      B(i, i + 1) = beta[static_cast<std::size_t>(i)];
    }
    sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(B).singularValues()(0);
    if (k > 0 && std::abs(sigma - sigma_old) <= rel_tol * sigma) {
      if (++stable >= 2) break;
    } else {
      stable = 0;
    }
    if (b_k <= tiny || k + 1 == kmax) break;
    V.col(k + 1) = w / b_k;
    beta_prev = b_k;
    u_prev = u;
    sigma_old = sigma;
  }
  return sigma;
}

}  // namespace mclab
