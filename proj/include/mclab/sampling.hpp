#pragma once

#include "mclab/core.hpp"
#include "mclab/rng.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mclab {

/// Probability table P_jk over matrix entries. Immutable once built.
class SamplingDistribution {
 public:
  /// Validates nonnegativity and unit total mass (1e-12).
  explicit SamplingDistribution(Matrix probs);

  const Dims& dims() const { return dims_; }
  const Matrix& probs() const { return probs_; }
  double operator()(std::size_t j, std::size_t k) const {
    return probs_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  }
  Vector row_sums() const { return probs_.rowwise().sum(); }
  Vector col_sums() const { return probs_.colwise().sum().transpose(); }
  bool is_uniform() const { return uniform_; }

 private:
  Dims dims_;
  Matrix probs_;
  bool uniform_ = false;
};

SamplingDistribution make_uniform(const Dims& dims);

/// P_jk proportional to row_weights[j] * col_weights[k].
SamplingDistribution make_product(std::span<const double> row_weights,
                                  std::span<const double> col_weights);

/// The constants implied by a sampling distribution: row/column mass (L2),
/// minimum-mass spikiness (mu), and maximum-mass level (L3).
struct AssumptionConstants {
  double L2 = 0.0;
  double mu = 1.0;  // +inf when some P_jk == 0
  bool muInfinite = false;
  double L3 = 0.0;
  double maxProb = 0.0;
};

/// Reports constants; never rejects. Callers compare against their own thresholds.
AssumptionConstants validate_assumptions(const SamplingDistribution& P);

/// sqrt(sum_jk P_jk a_jk^2).
double norm_weighted_frobenius(const Matrix& A, const SamplingDistribution& P);

enum class NoiseKind { Gaussian, StudentT, TwoPoint, None };

/// Mean-zero noise with standard deviation `sigma`. Student-t is scaled by
/// sigma * sqrt((df - 2) / df) so its variance equals sigma^2.
struct NoiseModel {
  NoiseKind kind = NoiseKind::None;
  double sigma = 0.0;
  double df = 2.5;

  static NoiseModel gaussian(double sigma) { return {NoiseKind::Gaussian, sigma, 2.5}; }
  static NoiseModel student_t(double sigma, double df = 2.5) { return {NoiseKind::StudentT, sigma, df}; }
  static NoiseModel two_point(double sigma) { return {NoiseKind::TwoPoint, sigma, 2.5}; }
  static NoiseModel none() { return {NoiseKind::None, 0.0, 2.5}; }

  void validate() const;
  /// Exact variance of a single draw.
  double variance() const { return kind == NoiseKind::None ? 0.0 : sigma * sigma; }
};

const char* to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);

/// Stateful draw source for a NoiseModel bound to a caller-owned engine.
class NoiseGenerator {
 public:
  explicit NoiseGenerator(const NoiseModel& model);
  double operator()(Rng& rng);
  const NoiseModel& model() const { return model_; }

 private:
  NoiseModel model_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::student_t_distribution<double> student_{2.5};
  std::bernoulli_distribution coin_{0.5};
  double scale_ = 0.0;
};

/// Walker alias table: O(1) draws of an index from a discrete distribution.
class AliasTable {
 public:
  explicit AliasTable(std::span<const double> probs);
  std::size_t operator()(Rng& rng) const;
  std::size_t size() const { return prob_.size(); }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

struct Observation {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double y = 0.0;
};

/// n sampled (row, col, y) triples; repeated locations allowed.
struct ObservationSet {
  Dims dims;
  std::vector<Observation> records;

  std::size_t n() const { return records.size(); }
  /// Largest number of times any single entry was observed.
  std::size_t max_multiplicity() const;
  void validate() const;
};

ObservationSet sample_observations(const Matrix& A0, const SamplingDistribution& P,
                                   const NoiseModel& noise, std::size_t n, std::uint64_t seed);
inline ObservationSet sample_observations(const GroundTruth& gt, const SamplingDistribution& P,
                                          const NoiseModel& noise, std::size_t n,
                                          std::uint64_t seed) {
  return sample_observations(gt.matrix, P, noise, n, seed);
}

std::vector<double> noise_sample(const NoiseModel& noise, std::size_t count, std::uint64_t seed);

}  // namespace mclab
