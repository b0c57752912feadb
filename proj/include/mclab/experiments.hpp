#pragma once

#include "mclab/core.hpp"
#include "mclab/sampling.hpp"
#include "mclab/solvers.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mclab {

/// How to build the sampling distribution for given dims.
struct SamplingSpec {
  enum class Kind { Uniform, Product };
  Kind kind = Kind::Uniform;
  std::vector<double> rowWeights;
  std::vector<double> colWeights;

  SamplingDistribution build(const Dims& dims) const;
};

struct TrialConfig {
  Dims dims{40, 40};
  std::size_t rank = 2;
  double a = 1.0;
  SamplingSpec sampling;
  NoiseModel noise = NoiseModel::gaussian(0.5);
  EstimatorSpec estimator;
  SolverConfig solver;
  std::size_t n = 2000;
  std::uint64_t seed = 0;       // observations and pilot streams
  std::uint64_t truthSeed = 0;  // ground truth stream
  int replicate = 0;
  bool recordWallTime = false;  // false writes 0 so outputs are byte-reproducible
};

struct TrialRecord {
  std::size_t m1 = 0, m2 = 0, r = 0, n = 0;
  Estimator estimator = Estimator::LeastSquares;
  double sigma = 0.0;
  double a = 0.0;
  int replicate = 0;
  std::uint64_t seed = 0;
  double errorFro = 0.0;       // ||A_hat - A0||_F^2 / (m1 m2)
  double errorWeighted = 0.0;  // sum_jk P_jk (A_hat - A0)_jk^2
  int iterations = 0;
  bool converged = false;
  double wallTimeMs = 0.0;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Generates A0, samples, tunes, fits and scores. Solver failures are recorded
/// as NaN errors with converged = false rather than thrown.
TrialRecord run_trial(const TrialConfig& config);

enum class ScanAxis { N, M, R };
const char* to_string(ScanAxis axis);
ScanAxis scan_axis_from_string(const std::string& name);

struct ScanSpec {
  ScanAxis axis = ScanAxis::N;
  std::vector<double> grid;
  TrialConfig base;
  int reps = 20;
  std::uint64_t rootSeed = 0;
  /// Axis r only: n = round(nPerRank * r).
  std::optional<double> nPerRank;
  /// Theorem-rule tuning: replace C by the pilot-calibrated constant at the first grid point.
  bool calibrateOnce = false;
  /// Harness self-test: skip solving and record errorFro = constant / x.
  std::optional<double> syntheticConstant;

  /// Fail-fast checks on every grid point; throws std::invalid_argument.
  void validate() const;
  TrialConfig trial_config(std::size_t grid_index, int replicate) const;
};

struct GridAggregate {
  double x = 0.0;
  std::size_t count = 0;
  double meanError = 0.0;
  double medianError = 0.0;
  double stderrError = 0.0;
};

struct RateScanResult {
  ScanAxis axis = ScanAxis::N;
  std::vector<double> grid;
  int reps = 0;
  std::uint64_t rootSeed = 0;
  std::optional<double> calibratedC;
  std::vector<TrialRecord> trials;
  std::vector<GridAggregate> aggregates;
};

/// Groups records by the axis value and summarizes errorFro.
std::vector<GridAggregate> aggregate(ScanAxis axis, const std::vector<double>& grid,
                                     const std::vector<TrialRecord>& trials);

/// Full factorial grid x replicates, deterministic in rootSeed regardless of
/// worker scheduling. Seeds: trial = derive(root, {grid, rep}),
/// truth = derive(root, {truth tag, rep}) (shared along the axis where dims allow).
RateScanResult rate_scan(const ScanSpec& spec);

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rSquared = 0.0;
  std::size_t pointCount = 0;
};

/// OLS of ln(y) on ln(x).
PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y);
PowerLawFit fit_power_law(const RateScanResult& result);

// Persistence.
extern const char* const kTrialCsvHeader;
std::string trials_to_csv(const std::vector<TrialRecord>& trials);
std::vector<TrialRecord> trials_from_csv(const std::string& text);
std::string aggregates_to_json(const RateScanResult& result);
std::string fit_to_json(const PowerLawFit& fit, ScanAxis axis);
PowerLawFit fit_from_json(const std::string& text);
std::vector<GridAggregate> aggregates_from_json(const std::string& text);

struct ScanOutputNames {
  std::string trials = "trials.csv";
  std::string aggregates = "aggregates.json";
  std::string fit = "fit.json";
};

/// Writes trials CSV, aggregates JSON and fit JSON under `dir` (each atomically).
void persist(const std::filesystem::path& dir, const RateScanResult& result, const PowerLawFit& fit,
             const ScanOutputNames& names = {});

}  // namespace mclab
