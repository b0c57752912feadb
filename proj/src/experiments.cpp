#include "mclab/experiments.hpp"

#include "mclab/io.hpp"
#include "mclab/parallel.hpp"
#include "mclab/rng.hpp"
#include "mclab/stats.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mclab {

namespace {
constexpr std::uint64_t kTruthTag = 0x7AB1E0ULL;
constexpr std::uint64_t kCalibrationTag = 0xCA11B8ULL;
}  // namespace

SamplingDistribution SamplingSpec::build(const Dims& dims) const {
  if (kind == Kind::Uniform) return make_uniform(dims);
  if (rowWeights.size() != dims.m1 || colWeights.size() != dims.m2)
    throw DimensionError("SamplingSpec: product weights do not match dims");
  return make_product(rowWeights, colWeights);
}

TrialRecord run_trial(const TrialConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  TrialRecord rec;
  rec.m1 = config.dims.m1;
  rec.m2 = config.dims.m2;
  rec.r = config.rank;
  rec.n = config.n;
  rec.estimator = config.estimator.estimator;
  rec.sigma = config.noise.sigma;
  rec.a = config.a;
  rec.replicate = config.replicate;
  rec.seed = config.seed;

  const GroundTruth gt = generate_low_rank(config.dims, config.rank, config.a, config.truthSeed);
  const SamplingDistribution P = config.sampling.build(config.dims);
  const ObservationSet obs =
      sample_observations(gt, P, config.noise, config.n, derive_seed(config.seed, {1}));

  EstimatorSpec spec = config.estimator;
  spec.a = config.a;
  spec.pilot.seed = derive_seed(config.seed, {2});
  try {
    spec = resolve_tuning(spec, P, config.noise, config.n);
    const SolveResult res = fit(obs, spec, config.solver);
    const Matrix diff = res.estimate - gt.matrix;
    rec.errorFro = diff.squaredNorm() / static_cast<double>(config.dims.size());
    rec.errorWeighted = diff.cwiseAbs2().cwiseProduct(P.probs()).sum();
    rec.iterations = res.iterations;
    rec.converged = res.converged;
  } catch (const std::exception&) {
    rec.errorFro = std::numeric_limits<double>::quiet_NaN();
    rec.errorWeighted = std::numeric_limits<double>::quiet_NaN();
    rec.converged = false;
  }
  if (config.recordWallTime) {
    rec.wallTimeMs =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return rec;
}

const char* to_string(ScanAxis axis) {
  switch (axis) {
    case ScanAxis::N: return "n";
    case ScanAxis::M: return "M";
    case ScanAxis::R: return "r";
  }
  return "n";
}

ScanAxis scan_axis_from_string(const std::string& name) {
  if (name == "n") return ScanAxis::N;
  if (name == "M" || name == "m") return ScanAxis::M;
  if (name == "r") return ScanAxis::R;
  throw std::invalid_argument("unknown scan axis '" + name + "' (expected n, M or r)");
}

namespace {

std::size_t as_count(double v, const char* what) {
  if (!(v >= 1.0) || !std::isfinite(v))
    throw std::invalid_argument(std::string("scan grid: ") + what + " must be >= 1");
  return static_cast<std::size_t>(std::llround(v));
}

}  // namespace

TrialConfig ScanSpec::trial_config(std::size_t grid_index, int replicate) const {
  TrialConfig cfg = base;
  const double x = grid.at(grid_index);
  switch (axis) {
    case ScanAxis::N: cfg.n = as_count(x, "n"); break;
    case ScanAxis::M: {
      const std::size_t M = as_count(x, "M");
      cfg.dims = Dims(M, M);
      break;
    }
    case ScanAxis::R:
      cfg.rank = as_count(x, "r");
      if (nPerRank) cfg.n = as_count(*nPerRank * static_cast<double>(cfg.rank), "n");
      break;
  }
  cfg.replicate = replicate;
  const auto rep = static_cast<std::uint64_t>(replicate);
  cfg.seed = derive_seed(rootSeed, {static_cast<std::uint64_t>(grid_index), rep});
  cfg.truthSeed = derive_seed(rootSeed, {kTruthTag, rep});
  return cfg;
}

void ScanSpec::validate() const {
  if (grid.size() < 4) throw std::invalid_argument("rate_scan: grid needs at least 4 points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("rate_scan: grid must be strictly increasing");
  if (reps < 10) throw std::invalid_argument("rate_scan: reps must be at least 10");
  if (nPerRank && axis != ScanAxis::R) throw std::invalid_argument("rate_scan: nPerRank applies to axis r only");
  if (syntheticConstant && !(*syntheticConstant > 0.0))
    throw std::invalid_argument("rate_scan: synthetic constant must be positive");
  if (!(base.a > 0.0)) throw std::invalid_argument("rate_scan: a must be positive");
  base.noise.validate();
  base.solver.validate();
  if (calibrateOnce && base.estimator.mode != TuningMode::TheoremRule)
    throw std::invalid_argument("rate_scan: calibrateOnce requires theorem-rule tuning");
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const TrialConfig cfg = trial_config(g, 0);
    if (cfg.rank == 0 || cfg.rank > cfg.dims.m())
      throw std::invalid_argument("rate_scan: rank exceeds min(m1, m2) at grid point " + std::to_string(g));
    if (cfg.n == 0) throw std::invalid_argument("rate_scan: n must be positive");
    (void)cfg.sampling.build(cfg.dims);
    if (cfg.estimator.mode == TuningMode::Explicit) {
      EstimatorSpec probe = cfg.estimator;
      probe.a = cfg.a;
      probe.validate_resolved();
    }
    if (cfg.estimator.mode == TuningMode::TheoremRule && cfg.estimator.estimator == Estimator::LeastSquares &&
        cfg.noise.kind == NoiseKind::None && calibrateOnce)
      throw std::invalid_argument("rate_scan: cannot calibrate least squares without noise");
  }
}

std::vector<GridAggregate> aggregate(ScanAxis axis, const std::vector<double>& grid,
                                     const std::vector<TrialRecord>& trials) {
  std::vector<std::vector<double>> errors(grid.size());
  auto axis_value = [axis](const TrialRecord& t) -> double {
    switch (axis) {
      case ScanAxis::N: return static_cast<double>(t.n);
      case ScanAxis::M: return static_cast<double>(std::max(t.m1, t.m2));
      case ScanAxis::R: return static_cast<double>(t.r);
    }
    return 0.0;
  };
  for (const auto& t : trials) {
    const double v = axis_value(t);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (std::llround(grid[g]) == std::llround(v)) {
        errors[g].push_back(t.errorFro);
        break;
      }
    }
  }
  std::vector<GridAggregate> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out[g].x = grid[g];
    out[g].count = errors[g].size();
    if (errors[g].empty()) continue;
    out[g].meanError = stats::mean(errors[g]);
    out[g].medianError = stats::median(errors[g]);
    out[g].stderrError = std::sqrt(stats::variance(errors[g]) / static_cast<double>(errors[g].size()));
  }
  return out;
}

RateScanResult rate_scan(const ScanSpec& spec) {
  spec.validate();
  ScanSpec run = spec;
  RateScanResult out;
  out.axis = spec.axis;
  out.grid = spec.grid;
  out.reps = spec.reps;
  out.rootSeed = spec.rootSeed;

  if (spec.calibrateOnce && !spec.syntheticConstant) {
    const TrialConfig first = spec.trial_config(0, 0);
    EstimatorSpec est = first.estimator;
    est.a = first.a;
    est.pilot.seed = derive_seed(spec.rootSeed, {kCalibrationTag});
    const double C = calibrate_rule_constant(est, first.sampling.build(first.dims), first.noise, first.n);
    run.base.estimator.C = C;
    out.calibratedC = C;
  }

  const std::size_t total = spec.grid.size() * static_cast<std::size_t>(spec.reps);
  out.trials.resize(total);
  parallel_for(total, [&](std::size_t idx) {
    const std::size_t g = idx / static_cast<std::size_t>(spec.reps);
    const int rep = static_cast<int>(idx % static_cast<std::size_t>(spec.reps));
    const TrialConfig cfg = run.trial_config(g, rep);
    if (spec.syntheticConstant) {
      TrialRecord rec;
      rec.m1 = cfg.dims.m1;
      rec.m2 = cfg.dims.m2;
      rec.r = cfg.rank;
      rec.n = cfg.n;
      rec.estimator = cfg.estimator.estimator;
      rec.sigma = cfg.noise.sigma;
      rec.a = cfg.a;
      rec.replicate = rep;
      rec.seed = cfg.seed;
      rec.errorFro = *spec.syntheticConstant / spec.grid[g];
      rec.errorWeighted = rec.errorFro;
      rec.converged = true;
      out.trials[idx] = rec;
    } else {
      out.trials[idx] = run_trial(cfg);
    }
  });
  out.aggregates = aggregate(spec.axis, spec.grid, out.trials);
  return out;
}

PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_power_law: size mismatch");
  if (x.size() < 4) throw std::invalid_argument("fit_power_law: need at least four points");
  const std::size_t k = x.size();
  std::vector<double> lx(k), ly(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(x[i] > 0.0)) throw std::invalid_argument("fit_power_law: nonpositive abscissa");
    if (!(y[i] > 0.0) || !std::isfinite(y[i]))
      throw std::invalid_argument("fit_power_law: nonpositive mean error at point " + std::to_string(i));
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = stats::mean(lx), my = stats::mean(ly);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_power_law: abscissae are all equal");
  PowerLawFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.rSquared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  fit.pointCount = k;
  return fit;
}

PowerLawFit fit_power_law(const RateScanResult& result) {
  if (result.aggregates.size() < 4) throw std::invalid_argument("fit_power_law: need at least 4 grid points");
  std::vector<double> x, y;
  for (const auto& agg : result.aggregates) {
    x.push_back(agg.x);
    y.push_back(agg.meanError);
  }
  return fit_power_law(x, y);
}

const char* const kTrialCsvHeader =
    "m1,m2,r,n,estimator,sigma,a,replicate,seed,errorFro,errorWeighted,iterations,converged,wallTimeMs";

std::string trials_to_csv(const std::vector<TrialRecord>& trials) {
  std::string out = kTrialCsvHeader;
  out += '\n';
  for (const auto& t : trials) {
    std::ostringstream row;
    row << t.m1 << ',' << t.m2 << ',' << t.r << ',' << t.n << ',' << to_string(t.estimator) << ','
        << format_double(t.sigma) << ',' << format_double(t.a) << ',' << t.replicate << ',' << t.seed
        << ',' << format_double(t.errorFro) << ',' << format_double(t.errorWeighted) << ','
        << t.iterations << ',' << (t.converged ? 1 : 0) << ',' << format_double(t.wallTimeMs) << '\n';
    out += row.str();
  }
  return out;
}

namespace {

template <class T>
T parse_int(const std::string& s, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("trials CSV line " + std::to_string(line) + ": bad integer '" + s + "'");
  return v;
}

double parse_real(const std::string& s, std::size_t line) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("trials CSV line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace

std::vector<TrialRecord> trials_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTrialCsvHeader)
    throw std::invalid_argument("trials CSV: unexpected header");
  std::vector<TrialRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 14)
      throw std::invalid_argument("trials CSV line " + std::to_string(line_no) + ": expected 14 fields");
    TrialRecord t;
    t.m1 = parse_int<std::size_t>(f[0], line_no);
    t.m2 = parse_int<std::size_t>(f[1], line_no);
    t.r = parse_int<std::size_t>(f[2], line_no);
    t.n = parse_int<std::size_t>(f[3], line_no);
    t.estimator = estimator_from_string(f[4]);
    t.sigma = parse_real(f[5], line_no);
    t.a = parse_real(f[6], line_no);
    t.replicate = parse_int<int>(f[7], line_no);
    t.seed = parse_int<std::uint64_t>(f[8], line_no);
    t.errorFro = parse_real(f[9], line_no);
    t.errorWeighted = parse_real(f[10], line_no);
    t.iterations = parse_int<int>(f[11], line_no);
    t.converged = parse_int<int>(f[12], line_no) != 0;
    t.wallTimeMs = parse_real(f[13], line_no);
    out.push_back(t);
  }
  return out;
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string aggregates_to_json(const RateScanResult& result) {
  using nlohmann::json;
  json j;
  j["axis"] = to_string(result.axis);
  j["grid"] = result.grid;
  j["reps"] = result.reps;
  j["rootSeed"] = result.rootSeed;
  j["calibratedC"] = result.calibratedC ? json(*result.calibratedC) : json(nullptr);
  json points = json::array();
  for (const auto& a : result.aggregates) {
    points.push_back({{"x", a.x},
                      {"count", a.count},
                      {"meanError", number_or_null(a.meanError)},
                      {"medianError", number_or_null(a.medianError)},
                      {"stderr", number_or_null(a.stderrError)}});
  }
  j["aggregates"] = points;
  return j.dump(2) + "\n";
}

std::vector<GridAggregate> aggregates_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  std::vector<GridAggregate> out;
  for (const auto& p : j.at("aggregates")) {
    GridAggregate a;
    a.x = p.at("x").get<double>();
    a.count = p.at("count").get<std::size_t>();
    a.meanError = number_from(p.at("meanError"));
    a.medianError = number_from(p.at("medianError"));
    a.stderrError = number_from(p.at("stderr"));
    out.push_back(a);
  }
  return out;
}

std::string fit_to_json(const PowerLawFit& fit, ScanAxis axis) {
  nlohmann::json j{{"axis", to_string(axis)},
                   {"slope", fit.slope},
                   {"intercept", fit.intercept},
                   {"rSquared", fit.rSquared},
                   {"pointCount", fit.pointCount}};
  return j.dump(2) + "\n";
}

PowerLawFit fit_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  PowerLawFit fit;
  fit.slope = j.at("slope").get<double>();
  fit.intercept = j.at("intercept").get<double>();
  fit.rSquared = j.at("rSquared").get<double>();
  fit.pointCount = j.at("pointCount").get<std::size_t>();
  return fit;
}

void persist(const std::filesystem::path& dir, const RateScanResult& result, const PowerLawFit& fit,
             const ScanOutputNames& names) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
  write_file_atomic(dir / names.trials, trials_to_csv(result.trials));
  write_file_atomic(dir / names.aggregates, aggregates_to_json(result));
  write_file_atomic(dir / names.fit, fit_to_json(fit, result.axis));
}

}  // namespace mclab
