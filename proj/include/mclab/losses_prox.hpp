#pragma once

#include "mclab/core.hpp"
#include "mclab/sampling.hpp"

#include <limits>

namespace mclab {

/// Data-fit term of an estimator. Huber with tau = +inf is the half squared loss.
struct LossKind {
  enum class Kind { Squared, Huber, SquareRoot };
  Kind kind = Kind::Squared;
  double tau = std::numeric_limits<double>::infinity();

  static LossKind squared() { return {Kind::Squared}; }
  static LossKind huber(double tau);
  static LossKind square_root() { return {Kind::SquareRoot}; }
};

/// l_tau(x): x^2/2 on |x| <= tau, tau|x| - tau^2/2 beyond.
double huber_value(double x, double tau);
/// phi_tau(x) = l_tau'(x): x clipped to [-tau, tau].
double huber_grad(double x, double tau);

/// (1/n) sum r_i^2, (1/n) sum l_tau(r_i), or sqrt((1/n) sum r_i^2), r_i = y_i - A[j_i, k_i].
double empirical_loss(const Matrix& A, const ObservationSet& obs, const LossKind& loss);

/// Gradient of empirical_loss for the smooth kinds. Repeated locations accumulate.
/// Throws std::invalid_argument for SquareRoot.
Matrix empirical_gradient(const Matrix& A, const ObservationSet& obs, const LossKind& loss);

/// Loss value and gradient in one pass over the observations.
double empirical_loss_and_gradient(const Matrix& A, const ObservationSet& obs,
                                   const LossKind& loss, Matrix& grad);

/// Singular value thresholding: prox of theta * ||.||_*.
Matrix svt(const Matrix& A, double theta);

/// svt that also reports the nuclear norm of its output.
Matrix svt(const Matrix& A, double theta, double& nuclear_out);

/// Entrywise clamp to [-a, a].
Matrix project_inf_ball(const Matrix& A, double a);

struct ProxParams {
  double lambda = 0.0;
  double a = 1.0;
  int dykstraIters = 200;
  double dykstraTol = 1e-10;

  void validate() const;
};

struct ProxResult {
  Matrix x;
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;  // last successive-iterate Frobenius change
  double nuclear = std::numeric_limits<double>::quiet_NaN();  // ||x||_* when known for free
};

/// Prox of lambda * ||.||_* + indicator{||.||_inf <= a} by Dykstra's scheme.
/// Always ends on the clamp, so the result is feasible. Non-convergence is
/// reported in the result, not thrown.
ProxResult prox_nuclear_inf_detailed(const Matrix& A, const ProxParams& params);
Matrix prox_nuclear_inf(const Matrix& A, const ProxParams& params);

/// 0.5 ||X - A||_F^2 + lambda ||X||_*  (+inf if X leaves the ball).
double prox_objective(const Matrix& X, const Matrix& A, double lambda, double a);

}  // namespace mclab
