#pragma once

#include "mclab/core.hpp"
#include "mclab/losses_prox.hpp"
#include "mclab/sampling.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mclab {

enum class Estimator { LeastSquares, Huber, SquareRoot };

const char* to_string(Estimator e);
/// Accepts "ls"/"leastSquares", "huber", "sqrt"/"squareRoot".
Estimator estimator_from_string(const std::string& name);

enum class TuningMode { Explicit, TheoremRule, Pilot };

struct PilotSettings {
  int reps = 200;
  double quantile = 0.95;
  std::uint64_t seed = 0;
};

/// Which estimator to fit and how its lambda / tau are chosen.
struct EstimatorSpec {
  Estimator estimator = Estimator::LeastSquares;
  std::optional<double> lambda;
  std::optional<double> tau;  // Huber only; +inf reproduces (half) least squares
  double a = 1.0;
  TuningMode mode = TuningMode::Explicit;
  double C = 1.0;  // stands in for the unspecified universal constants
  PilotSettings pilot;

  LossKind loss() const;
  void validate_resolved() const;
};

struct SolverConfig {
  int maxIters = 5000;
  double tolRelObjective = 1e-12;
  double tolKKT = 1e-8;
  std::optional<double> stepInit;        // default n / (2 * max multiplicity)
  double backtrackFactor = 0.5;
  std::optional<double> sqrtSigmaFloor;  // default 1e-8 * a
  int sqrtOuterIters = 50;
  int dykstraIters = 200;
  double dykstraTol = 1e-10;
  int kktEvery = 10;  // evaluate the fixed-point residual every this many iterations

  void validate() const;
};

struct SolveResult {
  Matrix estimate;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objectiveTrace;
  double kktResidual = 0.0;
  double sigmaHat = 0.0;        // square-root only
  bool sigmaAtFloor = false;    // square-root only: sigma-hat clamped to the floor
  double lambda = 0.0;
  double tau = 0.0;
  double effectiveLambda = 0.0; // nuclear weight of the final smooth problem
  int outerIterations = 0;      // square-root only
  int restarts = 0;
};

struct Tuning {
  double lambda = 0.0;
  double tau = std::numeric_limits<double>::infinity();
};

/// Theorem-order tuning with natural logarithms:
///   huber:  lambda = C max(s,a) / sqrt(n m),  tau = max(s,a) sqrt(n/m) / ln(d)^2
///   ls:     lambda = C sigma / sqrt(n m)
///   sqrt:   lambda = C / sqrt(n m)
/// Least squares requires sigma; Huber with unknown sigma uses a.
Tuning tune_from_theorem(const EstimatorSpec& spec, const Dims& dims, std::size_t n,
                         std::optional<double> sigma, double a);

/// 3 x the `quantile` empirical quantile over `reps` draws of
/// || (1/n) sum zeta_i X_i ||, zeta_i = phi_tau(xi_i) (or xi_i without tau).
double pilot_lambda(const SamplingDistribution& P, const NoiseModel& noise, std::size_t n,
                    std::optional<double> tau, int reps, double quantile, std::uint64_t seed);

/// Resolves lambda/tau of `spec` per its tuning mode. Pilot mode for the
/// square-root estimator simulates with unit-variance noise (the rule is pivotal).
EstimatorSpec resolve_tuning(const EstimatorSpec& spec, const SamplingDistribution& P,
                             const NoiseModel& noise, std::size_t n);

/// Ratio pilot_lambda / theorem_rule(C = 1): the rule constant that makes the
/// theorem-order lambda match the pilot criterion at (P, noise, n).
double calibrate_rule_constant(const EstimatorSpec& spec, const SamplingDistribution& P,
                               const NoiseModel& noise, std::size_t n);

/// Objective of the estimator: loss + lambda ||A||_* (requires resolved spec).
double estimator_objective(const Matrix& A, const ObservationSet& obs, const EstimatorSpec& spec);

/// Fits the estimator. Least squares and Huber: FISTA with backtracking,
/// monotone and gradient restarts, composite prox. Square root: alternating
/// sigma-hat / least-squares updates with nuclear weight 2 sigma-hat lambda.
SolveResult fit(const ObservationSet& obs, const EstimatorSpec& spec, const SolverConfig& config,
                const std::optional<Matrix>& init = std::nullopt);

/// Fixed-point residual ||A - prox(A - s grad L(A), s lambda, a)||_F / (1 + ||A||_F)
/// at the reference step s = n / (2 max multiplicity). Square root is certified
/// on its final inner least-squares problem (result.effectiveLambda).
double kkt_residual(const SolveResult& result, const ObservationSet& obs, const EstimatorSpec& spec);

/// Same residual for an arbitrary point and explicit smooth loss / weight.
double kkt_residual_at(const Matrix& A, const ObservationSet& obs, const LossKind& loss,
                       double lambda, double a, int dykstraIters = 500, double dykstraTol = 1e-13);

}  // namespace mclab
