#include "mclab/concentration.hpp"

#include "mclab/losses_prox.hpp"
#include "mclab/parallel.hpp"
#include "mclab/rng.hpp"
#include "mclab/stats.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace mclab {

const char* to_string(MultiplierKind kind) {
  switch (kind) {
    case MultiplierKind::Rademacher: return "rademacher";
    case MultiplierKind::Noise: return "noise";
    case MultiplierKind::TruncatedNoise: return "truncated";
    case MultiplierKind::IndicatorRademacher: return "indicator";
  }
  return "rademacher";
}

MultiplierKind multiplier_kind_from_string(const std::string& name) {
  static const std::map<std::string, MultiplierKind> table{
      {"rademacher", MultiplierKind::Rademacher},
      {"noise", MultiplierKind::Noise},
      {"truncated", MultiplierKind::TruncatedNoise},
      {"truncatedNoise", MultiplierKind::TruncatedNoise},
      {"indicator", MultiplierKind::IndicatorRademacher},
      {"indicatorRademacher", MultiplierKind::IndicatorRademacher}};
  auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown multiplier family '" + name + "'");
  return it->second;
}

MultiplierFamily MultiplierFamily::rademacher() {
  return {MultiplierKind::Rademacher, NoiseModel::none(), 0.0, false, 1.0, 1.0};
}

MultiplierFamily MultiplierFamily::noise_family(const NoiseModel& noise) {
  noise.validate();
  std::optional<double> bound;
  if (noise.kind == NoiseKind::TwoPoint) bound = noise.sigma;
  if (noise.kind == NoiseKind::None) bound = 0.0;
  return {MultiplierKind::Noise, noise, 0.0, false, noise.variance(), bound};
}

MultiplierFamily MultiplierFamily::truncated(const NoiseModel& noise, double tau) {
  noise.validate();
  if (!(tau > 0.0)) throw std::invalid_argument("truncated family: tau must be positive");
  // |phi_tau(x)| <= |x|, so the second moment stays below sigma^2.
  return {MultiplierKind::TruncatedNoise, noise, tau, false, noise.variance(), tau};
}

namespace {

double inner_mass_monte_carlo(const NoiseModel& noise, double half_width) {
  using Key = std::tuple<int, double, double, double>;
  static std::mutex mutex;
  static std::map<Key, double> cache;
  const Key key{static_cast<int>(noise.kind), noise.sigma, noise.df, half_width};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  constexpr std::size_t draws = 1'000'000;
  NoiseGenerator xi(noise);
  Rng rng = make_rng(0x1D1CA70EULL);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < draws; ++i) inside += std::abs(xi(rng)) <= half_width;
  const double mass = static_cast<double>(inside) / static_cast<double>(draws);
  std::lock_guard lock(mutex);
  cache.emplace(key, mass);
  return mass;
}

}  // namespace

MultiplierFamily MultiplierFamily::indicator(const NoiseModel& noise, double tau) {
  noise.validate();
  if (!(tau > 0.0)) throw std::invalid_argument("indicator family: tau must be positive");
  const double half = tau / 2.0;
  double mass = 1.0;
  switch (noise.kind) {
    case NoiseKind::Gaussian:
      mass = noise.sigma > 0.0 ? std::erf(half / (noise.sigma * std::sqrt(2.0))) : 1.0;
      break;
    case NoiseKind::TwoPoint: mass = noise.sigma <= half ? 1.0 : 0.0; break;
    case NoiseKind::None: mass = 1.0; break;
    case NoiseKind::StudentT: mass = inner_mass_monte_carlo(noise, half); break;
  }
  return {MultiplierKind::IndicatorRademacher, noise, tau, false, mass, 1.0};
}

ConcentrationParams closed_form_params(const SamplingDistribution& P, const MultiplierFamily& family,
                                       std::size_t n) {
  if (n == 0) throw std::invalid_argument("closed_form_params: n must be positive");
  if (!(family.secondMomentBound >= 0.0) || !std::isfinite(family.secondMomentBound))
    throw std::invalid_argument("closed_form_params: second moment must be finite");
  const double nd = static_cast<double>(n);
  const double s2 = family.secondMomentBound;
  const double mass = std::max(P.row_sums().maxCoeff(), P.col_sums().maxCoeff());
  const double pmax = P.probs().maxCoeff();

  ConcentrationParams out;
  out.n = n;
  out.dims = P.dims();
  out.gamma = std::sqrt(s2 * mass / nd);
  // sup over unit y, z of sum P_jk y_j^2 z_k^2 is a bilinear program over two
  // simplices (u = y^2, v = z^2), maximized at a vertex pair: max_jk P_jk.
  out.gammaStar = std::sqrt(s2 * pmax / nd);
  out.g = std::sqrt(s2 * pmax / nd);
  if (family.absBound) out.R = (family.recentered ? 2.0 : 1.0) * *family.absBound / nd;
  return out;
}

namespace {

const double& require_R(const ConcentrationParams& p, const char* what) {
  if (!p.R) throw std::invalid_argument(std::string(what) + ": R is undefined for unbounded multipliers");
  return *p.R;
}

}  // namespace

double sharp_tail_threshold(const ConcentrationParams& p, std::size_t d, double t, double C) {
  const double R = require_R(p, "sharp_tail_threshold");
  if (d < 2) throw std::invalid_argument("sharp_tail_threshold: d must be at least 2");
  if (!(t >= 0.0)) throw std::invalid_argument("sharp_tail_threshold: t must be nonnegative");
  const double lnd = std::log(static_cast<double>(d));
  const double corr = std::sqrt(p.g) * std::sqrt(p.gamma) * std::pow(lnd, 0.75) +
                      p.gammaStar * std::sqrt(t) +
                      std::cbrt(R) * std::pow(p.gamma, 2.0 / 3.0) * std::pow(t, 2.0 / 3.0) + R * t;
  return 2.0 * p.gamma + C * corr;
}

double sharp_expectation_bound(const ConcentrationParams& p, std::size_t d, double C) {
  const double R = require_R(p, "sharp_expectation_bound");
  if (d < 2) throw std::invalid_argument("sharp_expectation_bound: d must be at least 2");
  const double lnd = std::log(static_cast<double>(d));
  const double corr = std::sqrt(p.g) * std::sqrt(p.gamma) * std::pow(lnd, 0.75) +
                      std::cbrt(R) * std::pow(p.gamma, 2.0 / 3.0) * std::pow(lnd, 2.0 / 3.0) + R * lnd;
  return 2.0 * p.gamma + C * corr;
}

double bernstein_expectation_bound(const ConcentrationParams& p, std::size_t d) {
  const double R = require_R(p, "bernstein_expectation_bound");
  if (d < 2) throw std::invalid_argument("bernstein_expectation_bound: d must be at least 2");
  const double lnd = std::log(static_cast<double>(d));
  return std::sqrt(2.0 * p.gamma * p.gamma * lnd) + R * lnd / 3.0;
}

namespace {

class MultiplierSource {
 public:
  explicit MultiplierSource(const MultiplierFamily& f) : family_(f), noise_(f.noise) {}

  double operator()(Rng& rng) {
    switch (family_.kind) {
      case MultiplierKind::Rademacher: return coin_(rng) ? 1.0 : -1.0;
      case MultiplierKind::Noise: return noise_(rng);
      case MultiplierKind::TruncatedNoise: return huber_grad(noise_(rng), family_.tau);
      case MultiplierKind::IndicatorRademacher: {
        const double sign = coin_(rng) ? 1.0 : -1.0;
        return std::abs(noise_(rng)) <= family_.tau / 2.0 ? sign : 0.0;
      }
    }
    return 0.0;
  }

 private:
  MultiplierFamily family_;
  NoiseGenerator noise_;
  std::bernoulli_distribution coin_{0.5};
};

}  // namespace

SpectralSummary empirical_spectral_norm(const SamplingDistribution& P, const MultiplierFamily& family,
                                        std::size_t n, int reps, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("empirical_spectral_norm: n must be positive");
  if (reps < 1) throw std::invalid_argument("empirical_spectral_norm: reps must be positive");
  const Dims& dims = P.dims();
  const Matrix& probs = P.probs();
  const AliasTable table(std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())));

  SpectralSummary out;
  out.reps = reps;
  out.seed = seed;
  out.samples.assign(static_cast<std::size_t>(reps), 0.0);
  parallel_for(static_cast<std::size_t>(reps), [&](std::size_t rep) {
    Rng rng = make_rng(derive_seed(seed, {rep}));
    MultiplierSource zeta(family);
    Matrix S = Matrix::Zero(dims.m1, dims.m2);
    double* data = S.data();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t flat = table(rng);
      data[flat] += zeta(rng);
    }
    S /= static_cast<double>(n);
    out.samples[rep] = top_singular_value(S);
  });
  out.mean = stats::mean(out.samples);
  out.q50 = stats::quantile(out.samples, 0.5);
  out.q90 = stats::quantile(out.samples, 0.9);
  out.q99 = stats::quantile(out.samples, 0.99);
  return out;
}

double max_psi_alpha_bound(double sigma, double alpha, std::size_t n, double t, double C1, double C2) {
  if (!(alpha > 0.0)) throw std::invalid_argument("max_psi_alpha_bound: alpha must be positive");
  if (n == 0) throw std::invalid_argument("max_psi_alpha_bound: n must be positive");
  if (!(t >= 0.0)) throw std::invalid_argument("max_psi_alpha_bound: t must be nonnegative");
  const double inv = 1.0 / alpha;
  return C1 * sigma * std::pow(std::log(static_cast<double>(n)), inv) + C2 * sigma * std::pow(t, inv);
}

double max_exceedance_frequency(const NoiseModel& noise, std::size_t n, int trials, double threshold,
                                std::uint64_t seed) {
  if (n == 0 || trials < 1) throw std::invalid_argument("max_exceedance_frequency: empty experiment");
  std::vector<char> hit(static_cast<std::size_t>(trials), 0);
  parallel_for(hit.size(), [&](std::size_t trial) {
    Rng rng = make_rng(derive_seed(seed, {trial}));
    NoiseGenerator xi(noise);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, std::abs(xi(rng)));
    hit[trial] = peak >= threshold;
  });
  std::size_t count = 0;
  for (char h : hit) count += static_cast<std::size_t>(h);
  return static_cast<double>(count) / static_cast<double>(trials);
}

TruncatedVarianceReport truncated_variance_check(const NoiseModel& noise, double y, std::size_t samples,
                                                 std::uint64_t seed) {
  if (!(y >= 0.0)) throw std::invalid_argument("truncated_variance_check: y must be nonnegative");
  if (samples < 2) throw std::invalid_argument("truncated_variance_check: need at least two samples");
  std::vector<double> draws = noise_sample(noise, samples, seed);
  for (auto& v : draws) v = huber_grad(v, y);
  TruncatedVarianceReport out;
  out.empiricalVar = stats::variance(draws);
  out.bound = noise.variance();
  out.tolerance = out.bound * (1.0 + 5.0 / std::sqrt(static_cast<double>(samples)));
  out.pass = out.empiricalVar <= out.tolerance;
  return out;
}

ConcentrationReport concentration_report(const SamplingDistribution& P, const MultiplierFamily& family,
                                         std::size_t n, int reps, std::uint64_t seed, double C,
                                         std::optional<double> t) {
  ConcentrationReport rep;
  rep.params = closed_form_params(P, family, n);
  const std::size_t d = P.dims().d();
  rep.C = C;
  rep.t = t.value_or(3.0 * std::log(static_cast<double>(d)));
  if (rep.params.R) {
    rep.sharpTail = sharp_tail_threshold(rep.params, d, rep.t, C);
    rep.sharpExpectation = sharp_expectation_bound(rep.params, d, C);
    rep.bernstein = bernstein_expectation_bound(rep.params, d);
  }
  rep.empirical = empirical_spectral_norm(P, family, n, reps, seed);
  return rep;
}

std::string report_to_json(const ConcentrationReport& report) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["params"] = {{"gamma", report.params.gamma},
                 {"gammaStar", report.params.gammaStar},
                 {"g", report.params.g},
                 {"R", opt(report.params.R)}};
  j["bounds"] = {{"sharpTail", opt(report.sharpTail)},
                 {"sharpExpectation", opt(report.sharpExpectation)},
                 {"bernstein", opt(report.bernstein)},
                 {"t", report.t},
                 {"C", report.C}};
  j["empirical"] = {{"mean", report.empirical.mean}, {"q50", report.empirical.q50},
                    {"q90", report.empirical.q90},   {"q99", report.empirical.q99},
                    {"reps", report.empirical.reps}, {"seed", report.empirical.seed}};
  j["n"] = report.params.n;
  j["m1"] = report.params.dims.m1;
  j["m2"] = report.params.dims.m2;
  return j.dump(2) + "\n";
}

}  // namespace mclab
