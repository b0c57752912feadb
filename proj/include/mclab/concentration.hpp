#pragma once

#include "mclab/core.hpp"
#include "mclab/sampling.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mclab {

enum class MultiplierKind { Rademacher, Noise, TruncatedNoise, IndicatorRademacher };

const char* to_string(MultiplierKind kind);
/// Accepts "rademacher", "noise", "truncated", "indicator".
MultiplierKind multiplier_kind_from_string(const std::string& name);

/// Scalar multipliers zeta_i in Q = (1/n) sum zeta_i X_i.
///   rademacher          eps_i
///   noise               xi_i
///   truncatedNoise      phi_tau(xi_i)
///   indicatorRademacher eps_i * 1{|xi_i| <= tau/2}
struct MultiplierFamily {
  MultiplierKind kind = MultiplierKind::Rademacher;
  NoiseModel noise;
  double tau = 0.0;
  /// Multipliers re-centered after truncation: per-summand bound doubles.
  bool recentered = false;
  double secondMomentBound = 1.0;
  std::optional<double> absBound = 1.0;  // nullopt = unbounded

  static MultiplierFamily rademacher();
  static MultiplierFamily noise_family(const NoiseModel& noise);
  static MultiplierFamily truncated(const NoiseModel& noise, double tau);
  /// secondMomentBound = P(|xi| <= tau/2): closed form for gaussian, two-point
  /// and none; 1e6-draw Monte Carlo (cached per (noise, tau)) otherwise.
  static MultiplierFamily indicator(const NoiseModel& noise, double tau);
};

/// gamma, gamma*, g, R of Q = (1/n) sum zeta_i X_i. R is nullopt for unbounded multipliers.
struct ConcentrationParams {
  double gamma = 0.0;
  double gammaStar = 0.0;
  double g = 0.0;
  std::optional<double> R;
  std::size_t n = 0;
  Dims dims;
};

/// Exact values under the one-hot sampling design, where E[QQ^T], E[Q^TQ] and
/// Cov(Q) are diagonal:
///   gamma^2  = s^2 max(max row mass, max col mass) / n
///   gamma*^2 = g^2 = s^2 max_jk P_jk / n
///   R        = absBound / n   (2 absBound / n when recentered)
ConcentrationParams closed_form_params(const SamplingDistribution& P, const MultiplierFamily& family,
                                       std::size_t n);

/// 2 gamma + C (g^1/2 gamma^1/2 ln(d)^3/4 + gamma* t^1/2 + R^1/3 gamma^2/3 t^2/3 + R t):
/// ||Q|| exceeds this with probability at most d e^-t.
double sharp_tail_threshold(const ConcentrationParams& p, std::size_t d, double t, double C);

/// 2 gamma + C (g^1/2 gamma^1/2 ln(d)^3/4 + R^1/3 gamma^2/3 ln(d)^2/3 + R ln d).
double sharp_expectation_bound(const ConcentrationParams& p, std::size_t d, double C);

/// Classical matrix Bernstein: sqrt(2 gamma^2 ln d) + R ln(d) / 3.
double bernstein_expectation_bound(const ConcentrationParams& p, std::size_t d);

struct SpectralSummary {
  double mean = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
  double q99 = 0.0;
  std::vector<double> samples;
  int reps = 0;
  std::uint64_t seed = 0;
};

/// Monte Carlo draws of ||(1/n) sum zeta_i X_i||. Replicate r uses the stream
/// derive_seed(seed, {r}), so results do not depend on scheduling.
SpectralSummary empirical_spectral_norm(const SamplingDistribution& P, const MultiplierFamily& family,
                                        std::size_t n, int reps, std::uint64_t seed);

/// C1 sigma ln(n)^(1/alpha) + C2 sigma t^(1/alpha): max_i |xi_i| exceeds this
/// with probability at most 2 e^-t for psi_alpha variables with norm <= sigma.
double max_psi_alpha_bound(double sigma, double alpha, std::size_t n, double t, double C1, double C2);

/// Fraction of `trials` in which max_i |xi_i| over n draws of `noise` reaches `threshold`.
double max_exceedance_frequency(const NoiseModel& noise, std::size_t n, int trials, double threshold,
                                std::uint64_t seed);

struct TruncatedVarianceReport {
  double empiricalVar = 0.0;
  double bound = 0.0;      // sigma^2
  double tolerance = 0.0;  // sigma^2 (1 + 5 / sqrt(samples))
  bool pass = false;
};

/// Empirical variance of phi_y(xi) against the sigma^2 bound.
TruncatedVarianceReport truncated_variance_check(const NoiseModel& noise, double y, std::size_t samples,
                                                 std::uint64_t seed);

struct ConcentrationReport {
  ConcentrationParams params;
  double t = 0.0;
  double C = 1.0;
  std::optional<double> sharpTail;
  std::optional<double> sharpExpectation;
  std::optional<double> bernstein;
  SpectralSummary empirical;
};

/// Closed-form parameters, the three bounds at t (default 3 ln d) and C, and a Monte Carlo summary.
ConcentrationReport concentration_report(const SamplingDistribution& P, const MultiplierFamily& family,
                                         std::size_t n, int reps, std::uint64_t seed, double C,
                                         std::optional<double> t = std::nullopt);

/// {params:{gamma,gammaStar,g,R}, bounds:{sharpTail,sharpExpectation,bernstein},
///  empirical:{mean,q50,q90,q99,reps,seed}}; unbounded R and its bounds are null.
std::string report_to_json(const ConcentrationReport& report);

}  // namespace mclab
