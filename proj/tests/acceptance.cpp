// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion
// numbers as arguments to select a subset.

#include "oracles.hpp"

#include "mclab/concentration.hpp"
#include "mclab/core.hpp"
#include "mclab/experiments.hpp"
#include "mclab/losses_prox.hpp"
#include "mclab/rng.hpp"
#include "mclab/sampling.hpp"
#include "mclab/solvers.hpp"
#include "mclab/stats.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace mclab;

namespace {

// Pinned tolerances.
constexpr double kProxObjectiveTol = 1e-5;
constexpr long kOracleIters = 150000;  // subgradient oracle budget for criterion 1
constexpr double kGradientTol = 1e-5;
constexpr double kKktTol = 1e-5;
constexpr double kInterpolationTol = 1e-6;
constexpr double kSlopeLo = -1.2, kSlopeHi = -0.8;
constexpr double kMinRSquared = 0.95;
constexpr double kRankRatioMax = 1.6;
constexpr double kParamsRelTol = 1e-12;
constexpr double kLogFreeFactorMax = 2.0;
constexpr double kSigmaHatRelTol = 0.25;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. svt and the composite prox match projected-subgradient optima.
Outcome prox_correctness() {
  Rng rng = make_rng(101);
  std::uniform_int_distribution<int> size(2, 5);
  std::uniform_real_distribution<double> theta_d(0.1, 1.0), a_d(0.3, 1.5);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t m1 = size(rng), m2 = size(rng);
    const Matrix A = oracle::random_matrix(m1, m2, -2.0, 2.0, rng);
    const double theta = theta_d(rng), a = a_d(rng);
    const double f_svt = oracle::prox_objective_value(svt(A, theta), A, theta);
    const double o_svt = oracle::projected_subgradient_prox(A, theta, INFINITY, kOracleIters);
    const Matrix X = prox_nuclear_inf(A, ProxParams{theta, a, 200, 1e-10});
    if (norm_inf(X) > a + 1e-12) return {false, "prox output infeasible"};
    const double f_prox = oracle::prox_objective_value(X, A, theta);
    const double o_prox = oracle::projected_subgradient_prox(A, theta, a, kOracleIters);
    worst = std::max({worst, std::abs(f_svt - o_svt), std::abs(f_prox - o_prox)});
  }
  return {worst <= kProxObjectiveTol, fmt("max |objective - oracle| = %.3e", worst)};
}

// 2. Analytic gradients against central differences.
Outcome gradient_checks() {
  Rng rng = make_rng(202);
  std::uniform_int_distribution<int> size(2, 6), count(5, 40);
  std::uniform_real_distribution<double> u(-1.5, 1.5), tau_d(0.2, 1.5);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const Dims dims(size(rng), size(rng));
    ObservationSet obs{dims, {}};
    std::uniform_int_distribution<std::uint32_t> row(0, dims.m1 - 1), col(0, dims.m2 - 1);
    for (int i = count(rng); i > 0; --i) obs.records.push_back({row(rng), col(rng), u(rng)});
    const Matrix A = oracle::random_matrix(dims.m1, dims.m2, -1.0, 1.0, rng);
    const LossKind loss = inst % 2 == 0 ? LossKind::squared() : LossKind::huber(tau_d(rng));
    const Matrix G = empirical_gradient(A, obs, loss);
    const Matrix F = oracle::finite_difference([&](const Matrix& X) { return empirical_loss(X, obs, loss); }, A);
    const double dev = (G - F).cwiseAbs().maxCoeff() / (1.0 + G.cwiseAbs().maxCoeff());
    worst = std::max(worst, dev);
  }
  return {worst <= kGradientTol, fmt("max scaled deviation = %.3e", worst)};
}

// 3. Fixed-point residual of the fitted estimators.
Outcome solver_optimality() {
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    Rng rng = make_rng(derive_seed(303, {static_cast<std::uint64_t>(inst)}));
    std::uniform_int_distribution<int> rank(1, 3), n_d(250, 700);
    std::uniform_real_distribution<double> sigma_d(0.1, 0.6), C_d(0.5, 3.0);
    const Dims dims(10, 10);
    const GroundTruth gt = generate_low_rank(dims, rank(rng), 1.0, rng());
    const double sigma = sigma_d(rng);
    const std::size_t n = n_d(rng);
    const double C = C_d(rng);
    const auto P = make_uniform(dims);
    for (Estimator e : {Estimator::LeastSquares, Estimator::Huber, Estimator::SquareRoot}) {
      const NoiseModel noise = e == Estimator::Huber ? NoiseModel::student_t(sigma) : NoiseModel::gaussian(sigma);
      const ObservationSet obs = sample_observations(gt, P, noise, n, rng());
      EstimatorSpec spec;
      spec.estimator = e;
      spec.mode = TuningMode::TheoremRule;
      spec.C = C;
      spec = resolve_tuning(spec, P, noise, n);
      const SolveResult res = fit(obs, spec, SolverConfig{});
      worst = std::max(worst, kkt_residual(res, obs, spec));
    }
  }
  return {worst <= kKktTol, fmt("max kkt residual = %.3e", worst)};
}

// 4. Noiseless interpolation with a vanishing penalty.
Outcome noiseless_interpolation() {
  const Dims dims(20, 20);
  const GroundTruth gt = generate_low_rank(dims, 3, 1.0, 404);
  const auto P = make_uniform(dims);
  const ObservationSet obs = sample_observations(gt, P, NoiseModel::none(), 10 * dims.size(), 405);
  double worst = 0.0;
  for (Estimator e : {Estimator::LeastSquares, Estimator::Huber, Estimator::SquareRoot}) {
    EstimatorSpec spec;
    spec.estimator = e;
    spec.lambda = 1e-8;
    if (e == Estimator::Huber) spec.tau = tune_from_theorem(spec, dims, obs.n(), 0.0, 1.0).tau;
    const SolveResult res = fit(obs, spec, SolverConfig{});
    worst = std::max(worst, (res.estimate - gt.matrix).squaredNorm() / static_cast<double>(dims.size()));
  }
  return {worst <= kInterpolationTol, fmt("max normalized error = %.3e", worst)};
}

ScanSpec rate_in_n_spec(Estimator e) {
  ScanSpec s;
  s.axis = ScanAxis::N;
  s.grid = {2000, 2828, 4000, 5657, 8000, 11314};
  s.reps = 20;
  s.rootSeed = 505 + static_cast<std::uint64_t>(e);
  s.calibrateOnce = true;
  s.base.dims = Dims(40, 40);
  s.base.rank = 2;
  s.base.a = 1.0;
  s.base.noise = e == Estimator::Huber ? NoiseModel::student_t(0.5, 2.5) : NoiseModel::gaussian(0.5);
  s.base.estimator.estimator = e;
  s.base.estimator.mode = TuningMode::TheoremRule;
  return s;
}

// 5. Error decays like 1/n for every estimator.
Outcome rate_in_n() {
  bool ok = true;
  std::ostringstream detail;
  for (Estimator e : {Estimator::LeastSquares, Estimator::Huber, Estimator::SquareRoot}) {
    const auto t0 = std::chrono::steady_clock::now();
    const RateScanResult r = rate_scan(rate_in_n_spec(e));
    const PowerLawFit f = fit_power_law(r);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = f.slope >= kSlopeLo && f.slope <= kSlopeHi && f.rSquared >= kMinRSquared;
    ok = ok && pass;
    detail << to_string(e) << ": slope " << f.slope << " R2 " << f.rSquared << " C " << r.calibratedC.value_or(0)
           << " (" << secs << " s); ";
  }
  return {ok, detail.str()};
}

// 6. Error stays flat when n grows in proportion to r.
Outcome rate_in_r() {
  ScanSpec s;
  s.axis = ScanAxis::R;
  s.grid = {1, 2, 4, 8};
  s.nPerRank = 2000;
  s.reps = 20;
  s.rootSeed = 606;
  s.calibrateOnce = true;
  s.base.dims = Dims(40, 40);
  s.base.a = 1.0;
  s.base.noise = NoiseModel::gaussian(0.5);
  s.base.estimator.estimator = Estimator::LeastSquares;
  s.base.estimator.mode = TuningMode::TheoremRule;
  const RateScanResult r = rate_scan(s);
  double lo = INFINITY, hi = 0.0;
  std::ostringstream detail;
  detail << "means";
  for (const auto& g : r.aggregates) {
    lo = std::min(lo, g.meanError);
    hi = std::max(hi, g.meanError);
    detail << ' ' << g.meanError;
  }
  detail << "; ratio " << hi / lo;
  return {hi / lo <= kRankRatioMax, detail.str()};
}

bool rel_close(double x, double y) { return std::abs(x - y) <= kParamsRelTol * std::max(std::abs(y), 1e-300); }

// 7. Closed-form parameters against brute-force enumeration.
Outcome params_exactness() {
  Rng rng = make_rng(707);
  std::uniform_real_distribution<double> w(0.2, 3.0);
  int cases = 0;
  for (std::size_t m1 = 1; m1 <= 8; ++m1)
    for (std::size_t m2 = 1; m2 <= 8; ++m2)
      for (int pk = 0; pk < 3; ++pk) {
        const Dims dims(m1, m2);
        Matrix probs;
        if (pk == 0) {
          probs = make_uniform(dims).probs();
        } else if (pk == 1) {
          std::vector<double> r(m1), c(m2);
          for (auto& v : r) v = w(rng);
          for (auto& v : c) v = w(rng);
          probs = make_product(r, c).probs();
        } else {
          probs = Matrix::Zero(m1, m2);
          probs(m1 - 1, m2 / 2) = 1.0;
        }
        const SamplingDistribution P(probs);
        for (int fam = 0; fam < 2; ++fam) {
          const MultiplierFamily f =
              fam == 0 ? MultiplierFamily::rademacher() : MultiplierFamily::noise_family(NoiseModel::gaussian(1.7));
          const std::size_t n = 1 + 37 * (m1 + m2);
          const ConcentrationParams cp = closed_form_params(P, f, n);
          const oracle::EnumeratedParams ref =
              oracle::enumerate_params(P, f.secondMomentBound, f.absBound.value_or(0.0), n);
          bool ok = rel_close(cp.gamma, ref.gamma) && rel_close(cp.gammaStar, ref.gammaStar) && rel_close(cp.g, ref.g);
          ok = ok && (fam == 0 ? (cp.R && rel_close(*cp.R, ref.R)) : !cp.R);
          if (!ok) {
            std::ostringstream d;
            d << "mismatch at " << m1 << "x" << m2 << " P#" << pk << " family#" << fam << ": gamma " << cp.gamma
              << " vs " << ref.gamma << ", gamma* " << cp.gammaStar << " vs " << ref.gammaStar << ", g " << cp.g
              << " vs " << ref.g;
            return {false, d.str()};
          }
          ++cases;
        }
      }
  return {true, std::to_string(cases) + " cases agree to 1e-12 relative"};
}

// 8. Log-free spectral norm scaling versus the Bernstein comparator.
Outcome log_free_spectral() {
  std::vector<double> scaled, bern;
  std::ostringstream detail;
  for (std::size_t m : {20u, 40u, 80u, 160u}) {
    const Dims dims(m, m);
    const double lnd = std::log(static_cast<double>(dims.d()));
    const auto n = static_cast<std::size_t>(std::ceil(static_cast<double>(m) * std::pow(lnd, 4)));
    const auto P = make_uniform(dims);
    const auto f = MultiplierFamily::rademacher();
    const SpectralSummary s = empirical_spectral_norm(P, f, n, 200, 808 + m);
    const double root = std::sqrt(static_cast<double>(n) * static_cast<double>(m));
    scaled.push_back(s.mean * root);
    bern.push_back(bernstein_expectation_bound(closed_form_params(P, f, n), dims.d()) * root);
    detail << "m=" << m << " n=" << n << " mean*sqrt(nm)=" << scaled.back() << " bernstein*sqrt(nm)=" << bern.back()
           << "; ";
  }
  const double factor = *std::max_element(scaled.begin(), scaled.end()) / *std::min_element(scaled.begin(), scaled.end());
  bool increasing = true;
  for (std::size_t i = 1; i < bern.size(); ++i) increasing = increasing && bern[i] > bern[i - 1];
  detail << "factor " << factor;
  return {factor <= kLogFreeFactorMax && increasing, detail.str()};
}

// 9. Var(phi_y(xi)) <= sigma^2.
Outcome truncated_variance() {
  std::ostringstream detail;
  bool ok = true;
  std::uint64_t seed = 909;
  for (const NoiseModel& noise : {NoiseModel::gaussian(1.0), NoiseModel::student_t(1.0, 2.5)})
    for (double k : {0.5, 1.0, 2.0, 5.0}) {
      const auto r = truncated_variance_check(noise, k * noise.sigma, 1'000'000, seed++);
      ok = ok && r.pass;
      detail << to_string(noise.kind) << " y=" << k << "s var=" << r.empiricalVar << "; ";
    }
  return {ok, detail.str()};
}

// 10. Maximum of n gaussians stays below the psi_2 threshold.
Outcome max_concentration() {
  // psi_2 (Orlicz) norm of a standard gaussian is sqrt(8/3).
  const double psi2 = std::sqrt(8.0 / 3.0);
  const double threshold = max_psi_alpha_bound(psi2, 2.0, 10'000, 3.0, 3.0, 3.0);
  const double freq = max_exceedance_frequency(NoiseModel::gaussian(1.0), 10'000, 1000, threshold, 1010);
  const double p = 2.0 * std::exp(-3.0);
  const double limit = p + 3.0 * std::sqrt(p * (1.0 - p) / 1000.0);
  return {freq <= limit, fmt("failure frequency %.4f", freq) + fmt(" (limit %.4f)", limit)};
}

// 11. Square-root tuning does not see sigma; sigma-hat recovers it.
Outcome sqrt_pivotality() {
  const Dims dims(40, 40);
  const std::size_t n = 8000;
  EstimatorSpec spec;
  spec.estimator = Estimator::SquareRoot;
  spec.mode = TuningMode::TheoremRule;
  const double l1 = tune_from_theorem(spec, dims, n, 0.1, 1.0).lambda;
  const double l2 = tune_from_theorem(spec, dims, n, 1.0, 1.0).lambda;
  const double l3 = tune_from_theorem(spec, dims, n, 10.0, 1.0).lambda;
  const bool identical = std::memcmp(&l1, &l2, sizeof l1) == 0 && std::memcmp(&l1, &l3, sizeof l1) == 0;

  const double sigma = 0.5;
  const auto P = make_uniform(dims);
  const NoiseModel noise = NoiseModel::gaussian(sigma);
  // The pivotal rule constant, calibrated once with unit noise.
  spec.pilot.seed = 1111;
  spec.C = calibrate_rule_constant(spec, P, noise, n);
  double worst = 0.0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const GroundTruth gt = generate_low_rank(dims, 2, 1.0, derive_seed(1112, {rep}));
    const ObservationSet obs = sample_observations(gt, P, noise, n, derive_seed(1113, {rep}));
    const EstimatorSpec resolved = resolve_tuning(spec, P, noise, n);
    const SolveResult res = fit(obs, resolved, SolverConfig{});
    worst = std::max(worst, std::abs(res.sigmaHat - sigma) / sigma);
  }
  return {identical && worst <= kSigmaHatRelTol,
          std::string(identical ? "lambda bit-identical" : "lambda differs") + fmt("; max |sigma-hat/sigma - 1| = %.3f", worst) +
              fmt(" (C = %.3f)", spec.C)};
}

// 12. Repeated scans are byte-identical, also across worker counts.
Outcome determinism() {
  ScanSpec s;
  s.axis = ScanAxis::N;
  s.grid = {600, 900, 1350, 2000};
  s.reps = 10;
  s.rootSeed = 1212;
  s.calibrateOnce = true;
  s.base.dims = Dims(20, 20);
  s.base.rank = 2;
  s.base.noise = NoiseModel::student_t(0.5);
  s.base.estimator.estimator = Estimator::Huber;
  s.base.estimator.mode = TuningMode::TheoremRule;
  const char* prev = std::getenv("MC_LAB_THREADS");
  const std::string saved = prev ? prev : "";
  setenv("MC_LAB_THREADS", "1", 1);
  const std::string first = trials_to_csv(rate_scan(s).trials);
  setenv("MC_LAB_THREADS", "3", 1);
  const std::string second = trials_to_csv(rate_scan(s).trials);
  if (prev) setenv("MC_LAB_THREADS", saved.c_str(), 1);
  else unsetenv("MC_LAB_THREADS");
  return {first == second, std::to_string(first.size()) + " bytes, " + (first == second ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"prox correctness", prox_correctness},
      {"gradient checks", gradient_checks},
      {"solver optimality", solver_optimality},
      {"noiseless interpolation", noiseless_interpolation},
      {"rate in n", rate_in_n},
      {"rate in r", rate_in_r},
      {"concentration parameter exactness", params_exactness},
      {"log-free spectral behavior", log_free_spectral},
      {"truncated variance", truncated_variance},
      {"max concentration", max_concentration},
      {"square-root pivotality", sqrt_pivotality},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %-36s %s  %s  [%.1f s]\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
