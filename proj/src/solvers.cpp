#include "mclab/solvers.hpp"

#include "mclab/rng.hpp"
#include "mclab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace mclab {

const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::LeastSquares: return "leastSquares";
    case Estimator::Huber: return "huber";
    case Estimator::SquareRoot: return "squareRoot";
  }
  return "leastSquares";
}

Estimator estimator_from_string(const std::string& name) {
  static const std::map<std::string, Estimator> table{
      {"ls", Estimator::LeastSquares},     {"leastSquares", Estimator::LeastSquares},
      {"huber", Estimator::Huber},         {"sqrt", Estimator::SquareRoot},
      {"squareRoot", Estimator::SquareRoot}};
  auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown estimator '" + name + "'");
  return it->second;
}

LossKind EstimatorSpec::loss() const {
  switch (estimator) {
    case Estimator::LeastSquares: return LossKind::squared();
    case Estimator::Huber:
      if (!tau) throw std::invalid_argument("EstimatorSpec: Huber tau is unresolved");
      return LossKind::huber(*tau);
    case Estimator::SquareRoot: return LossKind::square_root();
  }
  return LossKind::squared();
}

void EstimatorSpec::validate_resolved() const {
  if (!lambda) throw std::invalid_argument("EstimatorSpec: lambda is unresolved");
  if (!(*lambda >= 0.0) || !std::isfinite(*lambda))
    throw std::invalid_argument("EstimatorSpec: lambda must be finite and nonnegative");
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("EstimatorSpec: a must be positive");
  if (estimator == Estimator::Huber && (!tau || !(*tau > 0.0)))
    throw std::invalid_argument("EstimatorSpec: Huber requires a positive tau");
}

void SolverConfig::validate() const {
  if (maxIters < 1) throw std::invalid_argument("SolverConfig: maxIters must be positive");
  if (!(tolRelObjective > 0.0) || !(tolKKT > 0.0))
    throw std::invalid_argument("SolverConfig: tolerances must be positive");
  if (stepInit && !(*stepInit > 0.0)) throw std::invalid_argument("SolverConfig: stepInit must be positive");
  if (!(backtrackFactor > 0.0 && backtrackFactor < 1.0))
    throw std::invalid_argument("SolverConfig: backtrackFactor must lie in (0, 1)");
  if (sqrtSigmaFloor && !(*sqrtSigmaFloor > 0.0))
    throw std::invalid_argument("SolverConfig: sqrtSigmaFloor must be positive");
  if (sqrtOuterIters < 1) throw std::invalid_argument("SolverConfig: sqrtOuterIters must be positive");
  if (dykstraIters < 1 || !(dykstraTol > 0.0))
    throw std::invalid_argument("SolverConfig: invalid Dykstra settings");
  if (kktEvery < 1) throw std::invalid_argument("SolverConfig: kktEvery must be positive");
}

Tuning tune_from_theorem(const EstimatorSpec& spec, const Dims& dims, std::size_t n,
                         std::optional<double> sigma, double a) {
  if (n == 0) throw std::invalid_argument("tune_from_theorem: n must be positive");
  if (!(spec.C > 0.0)) throw std::invalid_argument("tune_from_theorem: C must be positive");
  const double m = static_cast<double>(dims.m());
  const double nd = static_cast<double>(n);
  const double base = std::sqrt(1.0 / (nd * m));
  Tuning out;
  switch (spec.estimator) {
    case Estimator::Huber: {
      const double s = std::max(sigma.value_or(0.0), a);
      const double lnd = std::log(static_cast<double>(dims.d()));
      out.lambda = spec.C * s * base;
      out.tau = s / (lnd * lnd) * std::sqrt(nd / m);
      break;
    }
    case Estimator::LeastSquares:
      if (!sigma) throw std::invalid_argument("tune_from_theorem: least squares requires a known sigma");
      out.lambda = spec.C * *sigma * base;
      break;
    case Estimator::SquareRoot:
      out.lambda = spec.C * base;
      break;
  }
  return out;
}

double pilot_lambda(const SamplingDistribution& P, const NoiseModel& noise, std::size_t n,
                    std::optional<double> tau, int reps, double quantile, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("pilot_lambda: n must be positive");
  if (reps < 1) throw std::invalid_argument("pilot_lambda: reps must be positive");
  if (!(quantile > 0.0 && quantile < 1.0))
    throw std::invalid_argument("pilot_lambda: quantile must lie in (0, 1)");
  if (tau && !(*tau > 0.0)) throw std::invalid_argument("pilot_lambda: tau must be positive");

  const Dims& dims = P.dims();
  const Matrix& probs = P.probs();
  AliasTable table(std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())));
  std::vector<double> norms(static_cast<std::size_t>(reps));
  Matrix S(dims.m1, dims.m2);
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng = make_rng(derive_seed(seed, {static_cast<std::uint64_t>(rep)}));
    NoiseGenerator xi(noise);
    S.setZero();
    double* data = S.data();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t flat = table(rng);
      const double z = xi(rng);
      data[flat] += tau ? huber_grad(z, *tau) : z;
    }
    S /= static_cast<double>(n);
    norms[static_cast<std::size_t>(rep)] = top_singular_value(S);
  }
  return 3.0 * stats::quantile(std::move(norms), quantile);
}

namespace {

NoiseModel unit_noise(const NoiseModel& noise) {
  NoiseModel unit = noise;
  if (unit.kind == NoiseKind::None) unit.kind = NoiseKind::Gaussian;
  unit.sigma = 1.0;
  return unit;
}

std::optional<double> sigma_of(const NoiseModel& noise) { return noise.sigma; }

double pilot_for(const EstimatorSpec& spec, const SamplingDistribution& P, const NoiseModel& noise,
                 std::size_t n, std::optional<double> tau) {
  const auto& ps = spec.pilot;
  switch (spec.estimator) {
    case Estimator::Huber: return pilot_lambda(P, noise, n, tau, ps.reps, ps.quantile, ps.seed);
    case Estimator::LeastSquares:
      return pilot_lambda(P, noise, n, std::nullopt, ps.reps, ps.quantile, ps.seed);
    case Estimator::SquareRoot:
      return pilot_lambda(P, unit_noise(noise), n, std::nullopt, ps.reps, ps.quantile, ps.seed);
  }
  return 0.0;
}

}  // namespace

EstimatorSpec resolve_tuning(const EstimatorSpec& spec, const SamplingDistribution& P,
                             const NoiseModel& noise, std::size_t n) {
  EstimatorSpec out = spec;
  switch (spec.mode) {
    case TuningMode::Explicit:
      break;
    case TuningMode::TheoremRule: {
      const Tuning t = tune_from_theorem(spec, P.dims(), n, sigma_of(noise), spec.a);
      out.lambda = t.lambda;
      if (spec.estimator == Estimator::Huber) out.tau = t.tau;
      break;
    }
    case TuningMode::Pilot: {
      if (spec.estimator == Estimator::Huber && !out.tau)
        out.tau = tune_from_theorem(spec, P.dims(), n, sigma_of(noise), spec.a).tau;
      out.lambda = pilot_for(spec, P, noise, n, out.tau);
      break;
    }
  }
  out.validate_resolved();
  return out;
}

double calibrate_rule_constant(const EstimatorSpec& spec, const SamplingDistribution& P,
                               const NoiseModel& noise, std::size_t n) {
  EstimatorSpec unit = spec;
  unit.C = 1.0;
  const Tuning rule = tune_from_theorem(unit, P.dims(), n, sigma_of(noise), spec.a);
  if (!(rule.lambda > 0.0))
    throw std::invalid_argument("calibrate_rule_constant: rule lambda is zero (sigma = 0?)");
  const std::optional<double> tau =
      spec.estimator == Estimator::Huber ? std::optional<double>(rule.tau) : std::nullopt;
  // The raw statistic (actual noise) is used for every estimator, so the
  // square-root rule lands on the same effective penalty 2*sigma*lambda as
  // the least-squares rule calibrated on the same noise.
  const auto& ps = spec.pilot;
  return pilot_lambda(P, noise, n, tau, ps.reps, ps.quantile, ps.seed) / rule.lambda;
}

double estimator_objective(const Matrix& A, const ObservationSet& obs, const EstimatorSpec& spec) {
  spec.validate_resolved();
  return empirical_loss(A, obs, spec.loss()) + *spec.lambda * norm_nuclear(A);
}

namespace {

double reference_step(const ObservationSet& obs) {
  return static_cast<double>(obs.n()) / (2.0 * static_cast<double>(obs.max_multiplicity()));
}

struct InnerResult {
  Matrix x;
  int iterations = 0;
  bool converged = false;
  int restarts = 0;
  std::vector<double> trace;
};

constexpr int kStallLimit = 25;

// FISTA on loss(A) + lambda ||A||_* over ||A||_inf <= a, started at x0.
InnerResult fista(const ObservationSet& obs, const LossKind& loss, double lambda, double a,
                  const SolverConfig& cfg, const Matrix& x0, double step0) {
  InnerResult out;
  ProxParams prox{0.0, a, cfg.dykstraIters, cfg.dykstraTol};

  Matrix x = project_inf_ball(x0, a);
  double Fx = empirical_loss(x, obs, loss) + lambda * norm_nuclear(x);
  out.trace.push_back(Fx);

  Matrix y = x, z, grad, diff;
  double t = 1.0;
  double step = step0;
  bool fresh = true;  // y == x, no momentum in play
  int flat_steps = 0;
  int stalled = 0;  // consecutive steps without objective decrease

  for (int it = 1; it <= cfg.maxIters; ++it) {
    out.iterations = it;
    const double fy = empirical_loss_and_gradient(y, obs, loss, grad);
    ProxResult pr;
    double fz = 0.0;
    for (;;) {
      prox.lambda = step * lambda;
      pr = prox_nuclear_inf_detailed(y - step * grad, prox);
      fz = empirical_loss(pr.x, obs, loss);
      diff = pr.x - y;
      const double model = fy + grad.cwiseProduct(diff).sum() + diff.squaredNorm() / (2.0 * step);
      if (fz <= model + 1e-12 * std::max(1.0, std::abs(fy))) break;
      step *= cfg.backtrackFactor;
      if (step < 1e-20) throw NumericalError("fit: backtracking step underflow");
    }
    z = std::move(pr.x);
    const double nz = std::isnan(pr.nuclear) ? norm_nuclear(z) : pr.nuclear;
    const double Fz = fz + lambda * nz;

    const double roundoff = 1e-12 * std::max(1.0, std::abs(Fx));
    if (Fz > Fx && !(fresh && Fz - Fx <= roundoff)) {
      if (fresh) {
        // A plain prox-gradient step ascended beyond round-off.
        out.converged =
            kkt_residual_at(x, obs, loss, lambda, a, cfg.dykstraIters, cfg.dykstraTol) <= cfg.tolKKT;
        break;
      }
      // Monotone restart: drop momentum and retry from the incumbent.
      y = x;
      t = 1.0;
      fresh = true;
      ++out.restarts;
      continue;
    }

    // At the round-off floor plain prox-gradient steps are still accepted: they
    // keep shrinking the fixed-point residual even when the objective cannot
    // resolve the progress.
    const double rel = (Fx - Fz) / std::max(std::abs(Fz), std::numeric_limits<double>::min());
    stalled = rel <= 0.0 ? stalled + 1 : 0;
    // Gradient-based adaptive restart when momentum points uphill.
    const bool uphill = (y - z).cwiseProduct(z - x).sum() > 0.0;
    const double t_next = uphill ? 1.0 : 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if (uphill) {
      y = z;
      ++out.restarts;
    } else {
      y = z + ((t - 1.0) / t_next) * (z - x);
    }
    fresh = uphill;
    x.swap(z);
    Fx = Fz;
    t = t_next;
    out.trace.push_back(Fx);

    flat_steps = rel > 0.0 && rel <= cfg.tolRelObjective ? flat_steps + 1 : 0;
    const bool done = flat_steps >= 3 || stalled >= kStallLimit;
    if (done || it % cfg.kktEvery == 0) {
      const double kkt = kkt_residual_at(x, obs, loss, lambda, a, cfg.dykstraIters, cfg.dykstraTol);
      if (kkt <= cfg.tolKKT || done) {
        out.converged = true;
        break;
      }
    }
  }
  out.x = std::move(x);
  return out;
}

}  // namespace

double kkt_residual_at(const Matrix& A, const ObservationSet& obs, const LossKind& loss,
                       double lambda, double a, int dykstraIters, double dykstraTol) {
  const double s = reference_step(obs);
  const Matrix grad = empirical_gradient(A, obs, loss);
  const ProxParams prox{s * lambda, a, dykstraIters, dykstraTol};
  const Matrix P = prox_nuclear_inf(A - s * grad, prox);
  return (A - P).norm() / (1.0 + A.norm());
}

double kkt_residual(const SolveResult& result, const ObservationSet& obs, const EstimatorSpec& spec) {
  spec.validate_resolved();
  switch (spec.estimator) {
    case Estimator::SquareRoot:
      return kkt_residual_at(result.estimate, obs, LossKind::squared(), result.effectiveLambda, spec.a);
    default:
      return kkt_residual_at(result.estimate, obs, spec.loss(), *spec.lambda, spec.a);
  }
}

SolveResult fit(const ObservationSet& obs, const EstimatorSpec& spec, const SolverConfig& config,
                const std::optional<Matrix>& init) {
  spec.validate_resolved();
  config.validate();
  obs.validate();
  const Dims& dims = obs.dims;
  Matrix x0 = init ? *init : Matrix::Zero(dims.m1, dims.m2);
  require_dims(x0, dims, "fit: initial point");

  const double step0 = config.stepInit.value_or(reference_step(obs));
  const double lambda = *spec.lambda;

  SolveResult res;
  res.lambda = lambda;
  res.tau = spec.estimator == Estimator::Huber ? *spec.tau : 0.0;

  if (spec.estimator != Estimator::SquareRoot) {
    const LossKind loss = spec.loss();
    InnerResult inner = fista(obs, loss, lambda, spec.a, config, x0, step0);
    res.estimate = std::move(inner.x);
    res.iterations = inner.iterations;
    res.converged = inner.converged;
    res.objectiveTrace = std::move(inner.trace);
    res.restarts = inner.restarts;
    res.effectiveLambda = lambda;
    res.kktResidual = kkt_residual_at(res.estimate, obs, loss, lambda, spec.a);
    return res;
  }

  // Square root: sqrt(q) = min_s q/(2s) + s/2, so for fixed s the A-step is
  // least squares with nuclear weight 2 s lambda.
  const double floor = config.sqrtSigmaFloor.value_or(1e-8 * spec.a);
  const LossKind sq = LossKind::squared();
  Matrix x = project_inf_ball(x0, spec.a);
  auto sqrt_objective = [&](const Matrix& A) {
    return std::sqrt(empirical_loss(A, obs, sq)) + lambda * norm_nuclear(A);
  };
  double rms = std::sqrt(empirical_loss(x, obs, sq));
  double sigma = std::max(rms, floor);
  res.objectiveTrace.push_back(sqrt_objective(x));
  bool inner_ok = true;
  for (int outer = 1; outer <= config.sqrtOuterIters; ++outer) {
    const double lam_eff = 2.0 * sigma * lambda;
    InnerResult inner = fista(obs, sq, lam_eff, spec.a, config, x, step0);
    x = std::move(inner.x);
    res.iterations += inner.iterations;
    res.restarts += inner.restarts;
    res.outerIterations = outer;
    res.effectiveLambda = lam_eff;
    inner_ok = inner.converged;

    rms = std::sqrt(empirical_loss(x, obs, sq));
    res.sigmaAtFloor = rms < floor;
    const double sigma_next = std::max(rms, floor);
    res.objectiveTrace.push_back(sqrt_objective(x));
    const double change = std::abs(sigma_next - sigma) / std::max(sigma, floor);
    sigma = sigma_next;
    if (change <= config.tolRelObjective) {
      res.converged = inner_ok;
      break;
    }
  }
  res.estimate = std::move(x);
  res.sigmaHat = sigma;
  res.kktResidual = kkt_residual_at(res.estimate, obs, sq, res.effectiveLambda, spec.a);
  if (!res.converged) res.converged = inner_ok && res.kktResidual <= config.tolKKT;
  return res;
}

}  // namespace mclab
