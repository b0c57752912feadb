#pragma once

#include "mclab/concentration.hpp"
#include "mclab/experiments.hpp"
#include "mclab/solvers.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>

namespace mclab {

/// Schema violation; `pointer` is the JSON pointer of the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string pointer, const std::string& message)
      : std::invalid_argument(pointer + ": " + message), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

struct ConcentrationSettings {
  MultiplierKind family = MultiplierKind::Rademacher;
  std::optional<double> tau;
  int reps = 200;
  double C = 1.0;
  std::optional<double> t;
};

struct ScanSettings {
  ScanAxis axis = ScanAxis::N;
  std::vector<double> grid;
  int reps = 20;
  std::optional<double> nPerRank;
  bool calibrate = false;
  std::optional<double> syntheticConstant;
  bool recordWallTime = false;
};

/// Everything a subcommand may read from the JSON config file. Every section
/// is optional; missing values take the library defaults.
struct RunConfig {
  Dims dims{40, 40};
  std::size_t rank = 2;
  double a = 1.0;
  std::uint64_t seed = 0;
  std::size_t n = 2000;
  SamplingSpec sampling;
  NoiseModel noise = NoiseModel::gaussian(0.5);
  std::optional<std::string> groundTruthFile;
  EstimatorSpec estimator;
  SolverConfig solver;
  ConcentrationSettings concentration;
  std::optional<ScanSettings> scan;
  ScanOutputNames outputs;

  TrialConfig trial() const;
  ScanSpec scan_spec() const;
};

/// Parses and validates; unknown keys and out-of-range values raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig parse_run_config_text(const std::string& text);

}  // namespace mclab
