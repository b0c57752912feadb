#include "mclab/losses_prox.hpp"

#include <cmath>
#include <stdexcept>

namespace mclab {

LossKind LossKind::huber(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("LossKind::huber: tau must be positive");
  return {Kind::Huber, tau};
}

double huber_value(double x, double tau) {
  const double ax = std::abs(x);
  if (ax <= tau) return 0.5 * x * x;
  return tau * ax - 0.5 * tau * tau;
}

double huber_grad(double x, double tau) {
  if (x > tau) return tau;
  if (x < -tau) return -tau;
  return x;
}

namespace {

void check_obs(const Matrix& A, const ObservationSet& obs) {
  require_dims(A, obs.dims, "empirical loss");
  if (obs.records.empty()) throw std::invalid_argument("empirical loss: empty observation set");
}

}  // namespace

double empirical_loss(const Matrix& A, const ObservationSet& obs, const LossKind& loss) {
  check_obs(A, obs);
  const double inv_n = 1.0 / static_cast<double>(obs.n());
  double acc = 0.0;
  if (loss.kind == LossKind::Kind::Huber) {
    for (const auto& o : obs.records) acc += huber_value(o.y - A(o.row, o.col), loss.tau);
    return acc * inv_n;
  }
  for (const auto& o : obs.records) {
    const double r = o.y - A(o.row, o.col);
    acc += r * r;
  }
  acc *= inv_n;
  return loss.kind == LossKind::Kind::SquareRoot ? std::sqrt(acc) : acc;
}

double empirical_loss_and_gradient(const Matrix& A, const ObservationSet& obs,
                                   const LossKind& loss, Matrix& grad) {
  check_obs(A, obs);
  if (loss.kind == LossKind::Kind::SquareRoot)
    throw std::invalid_argument("empirical_gradient: square-root loss has no direct gradient here");
  const double inv_n = 1.0 / static_cast<double>(obs.n());
  grad.setZero(A.rows(), A.cols());
  double acc = 0.0;
  if (loss.kind == LossKind::Kind::Huber) {
    for (const auto& o : obs.records) {
      const double r = o.y - A(o.row, o.col);
      acc += huber_value(r, loss.tau);
      grad(o.row, o.col) -= huber_grad(r, loss.tau);
    }
  } else {
    for (const auto& o : obs.records) {
      const double r = o.y - A(o.row, o.col);
      acc += r * r;
      grad(o.row, o.col) -= 2.0 * r;
    }
  }
  grad *= inv_n;
  return acc * inv_n;
}

Matrix empirical_gradient(const Matrix& A, const ObservationSet& obs, const LossKind& loss) {
  Matrix grad;
  empirical_loss_and_gradient(A, obs, loss, grad);
  return grad;
}

Matrix svt(const Matrix& A, double theta, double& nuclear_out) {
  if (!(theta >= 0.0)) throw std::invalid_argument("svt: theta must be nonnegative");
  const Svd s = svd(A);
  const Vector shrunk = (s.singular.array() - theta).max(0.0).matrix();
  nuclear_out = shrunk.sum();
  return s.U * shrunk.asDiagonal() * s.V.transpose();
}

Matrix svt(const Matrix& A, double theta) {
  double unused = 0.0;
  return svt(A, theta, unused);
}

Matrix project_inf_ball(const Matrix& A, double a) {
  if (!(a > 0.0)) throw std::invalid_argument("project_inf_ball: a must be positive");
  return A.cwiseMax(-a).cwiseMin(a);
}

void ProxParams::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("ProxParams: lambda must be nonnegative");
  if (!(a > 0.0)) throw std::invalid_argument("ProxParams: a must be positive");
  if (dykstraIters < 1) throw std::invalid_argument("ProxParams: dykstraIters must be positive");
  if (!(dykstraTol > 0.0)) throw std::invalid_argument("ProxParams: dykstraTol must be positive");
}

ProxResult prox_nuclear_inf_detailed(const Matrix& A, const ProxParams& params) {
  params.validate();
  ProxResult out;
  if (params.lambda == 0.0) {
    out.x = project_inf_ball(A, params.a);
    out.converged = true;
    return out;
  }

  // Dykstra: y = svt(x + p); p += x - y; x' = clamp(y + q); q += y - x'.
  Matrix x = A;
  Matrix p = Matrix::Zero(A.rows(), A.cols());
  Matrix q = Matrix::Zero(A.rows(), A.cols());
  Matrix y, x_next;
  for (int it = 1; it <= params.dykstraIters; ++it) {
    double nuclear = 0.0;
    y = svt(x + p, params.lambda, nuclear);
    if (it == 1 && norm_inf(y) <= params.a) {
      // svt(A) already feasible: it is the constrained minimizer too.
      out.x = std::move(y);
      out.iterations = 1;
      out.converged = true;
      out.nuclear = nuclear;
      return out;
    }
    p += x - y;
    x_next = project_inf_ball(y + q, params.a);
    q += y - x_next;
    out.residual = (x_next - x).norm();
    x.swap(x_next);
    out.iterations = it;
    if (out.residual <= params.dykstraTol) {
      out.converged = true;
      break;
    }
  }
  out.x = std::move(x);
  return out;
}

Matrix prox_nuclear_inf(const Matrix& A, const ProxParams& params) {
  return prox_nuclear_inf_detailed(A, params).x;
}

double prox_objective(const Matrix& X, const Matrix& A, double lambda, double a) {
  require_dims(X, dims_of(A), "prox_objective");
  if (norm_inf(X) > a * (1.0 + 1e-12)) return std::numeric_limits<double>::infinity();
  return 0.5 * (X - A).squaredNorm() + lambda * norm_nuclear(X);
}

}  // namespace mclab
