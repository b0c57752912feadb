#include "mclab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace mclab {

SamplingDistribution::SamplingDistribution(Matrix probs) : dims_(dims_of(probs)), probs_(std::move(probs)) {
  if (!probs_.allFinite() || (probs_.array() < 0.0).any())
    throw std::invalid_argument("SamplingDistribution: probabilities must be finite and nonnegative");
  const double total = probs_.sum();
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("SamplingDistribution: probabilities must sum to 1 (got " +
                                std::to_string(total) + ")");
  const double u = 1.0 / static_cast<double>(dims_.size());
  uniform_ = ((probs_.array() - u).abs() <= 1e-15).all();
}

SamplingDistribution make_uniform(const Dims& dims) {
  return SamplingDistribution(
      Matrix::Constant(dims.m1, dims.m2, 1.0 / static_cast<double>(dims.size())));
}

SamplingDistribution make_product(std::span<const double> row_weights,
                                  std::span<const double> col_weights) {
  if (row_weights.empty() || col_weights.empty())
    throw std::invalid_argument("make_product: weights must be nonempty");
  auto positive = [](double w) { return w > 0.0 && std::isfinite(w); };
  if (!std::all_of(row_weights.begin(), row_weights.end(), positive) ||
      !std::all_of(col_weights.begin(), col_weights.end(), positive))
    throw std::invalid_argument("make_product: all weights must be positive");

  Eigen::Map<const Vector> rw(row_weights.data(), static_cast<Eigen::Index>(row_weights.size()));
  Eigen::Map<const Vector> cw(col_weights.data(), static_cast<Eigen::Index>(col_weights.size()));
  Matrix P = (rw / rw.sum()) * (cw / cw.sum()).transpose();
  // Absorb the last few ulps of normalization error.
  P /= P.sum();
  return SamplingDistribution(std::move(P));
}

double norm_weighted_frobenius(const Matrix& A, const SamplingDistribution& P) {
  require_dims(A, P.dims(), "norm_weighted_frobenius");
  return std::sqrt(A.cwiseAbs2().cwiseProduct(P.probs()).sum());
}

AssumptionConstants validate_assumptions(const SamplingDistribution& P) {
  const Dims& dims = P.dims();
  const double m = static_cast<double>(dims.m());
  const double lnd = std::log(static_cast<double>(dims.d()));

  AssumptionConstants c;
  c.L2 = m * std::max(P.row_sums().maxCoeff(), P.col_sums().maxCoeff());
  const double pmin = P.probs().minCoeff();
  if (pmin > 0.0) {
    c.mu = 1.0 / (static_cast<double>(dims.size()) * pmin);
  } else {
    c.mu = std::numeric_limits<double>::infinity();
    c.muInfinite = true;
  }
  c.maxProb = P.probs().maxCoeff();
  c.L3 = c.maxProb * m * lnd * lnd * lnd;
  return c;
}

void NoiseModel::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("NoiseModel: sigma must be finite and nonnegative");
  if (kind == NoiseKind::StudentT && !(df > 2.0))
    throw std::invalid_argument("NoiseModel: Student-t requires df > 2");
}

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::StudentT: return "studentT";
    case NoiseKind::TwoPoint: return "twoPoint";
    case NoiseKind::None: return "none";
  }
  return "none";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  static const std::map<std::string, NoiseKind> table{
      {"gaussian", NoiseKind::Gaussian}, {"studentT", NoiseKind::StudentT},
      {"studentt", NoiseKind::StudentT}, {"student_t", NoiseKind::StudentT}, {"t", NoiseKind::StudentT},
      {"twoPoint", NoiseKind::TwoPoint}, {"twopoint", NoiseKind::TwoPoint}, {"two_point", NoiseKind::TwoPoint},
      {"none", NoiseKind::None}};
  auto it = table.find(name);
  if (it == table.end()) throw std::invalid_argument("unknown noise kind '" + name + "'");
  return it->second;
}

NoiseGenerator::NoiseGenerator(const NoiseModel& model) : model_(model) {
  model_.validate();
  switch (model_.kind) {
    case NoiseKind::StudentT:
      student_ = std::student_t_distribution<double>(model_.df);
      scale_ = model_.sigma * std::sqrt((model_.df - 2.0) / model_.df);
      break;
    default:
      scale_ = model_.sigma;
  }
}

double NoiseGenerator::operator()(Rng& rng) {
  switch (model_.kind) {
    case NoiseKind::Gaussian: return scale_ * normal_(rng);
    case NoiseKind::StudentT: return scale_ * student_(rng);
    case NoiseKind::TwoPoint: return coin_(rng) ? scale_ : -scale_;
    case NoiseKind::None: return 0.0;
  }
  return 0.0;
}

AliasTable::AliasTable(std::span<const double> probs) : prob_(probs.size()), alias_(probs.size()) {
  const std::size_t K = probs.size();
  if (K == 0) throw std::invalid_argument("AliasTable: empty distribution");
  double total = 0.0;
  for (double p : probs) total += p;

  std::vector<double> scaled(K);
  std::vector<std::uint32_t> small, large;
  small.reserve(K);
  large.reserve(K);
  for (std::size_t i = 0; i < K; ++i) {
    scaled[i] = probs[i] / total * static_cast<double>(K);
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const auto s = small.back();
    small.pop_back();
    const auto l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto i : large) { prob_[i] = 1.0; alias_[i] = i; }
  for (auto i : small) { prob_[i] = 1.0; alias_[i] = i; }
}

std::size_t AliasTable::operator()(Rng& rng) const {
  // One 64-bit draw: high bits pick the column, low 53 bits the coin.
  const std::uint64_t bits = rng();
  const std::size_t col = static_cast<std::size_t>(
      (static_cast<unsigned __int128>(bits) * prob_.size()) >> 64);
  const double u = static_cast<double>(bits & ((1ULL << 53) - 1)) * 0x1.0p-53;
  return u < prob_[col] ? col : alias_[col];
}

std::size_t ObservationSet::max_multiplicity() const {
  std::vector<std::uint32_t> counts(dims.size(), 0);
  std::uint32_t best = 0;
  for (const auto& o : records) best = std::max(best, ++counts[o.row * dims.m2 + o.col]);
  return best;
}

void ObservationSet::validate() const {
  if (records.empty()) throw std::invalid_argument("ObservationSet: no records");
  for (const auto& o : records) {
    if (o.row >= dims.m1 || o.col >= dims.m2)
      throw DimensionError("ObservationSet: index (" + std::to_string(o.row) + "," +
                           std::to_string(o.col) + ") out of range");
    if (!std::isfinite(o.y)) throw std::invalid_argument("ObservationSet: non-finite value");
  }
}

ObservationSet sample_observations(const Matrix& A0, const SamplingDistribution& P,
                                   const NoiseModel& noise, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_observations: n must be positive");
  require_dims(A0, P.dims(), "sample_observations");

  // Row-major probs -> flat index j * m2 + k.
  const Matrix& probs = P.probs();
  AliasTable table(std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())));
  NoiseGenerator xi(noise);
  Rng rng = make_rng(seed);

  ObservationSet obs{P.dims(), {}};
  obs.records.reserve(n);
  const std::size_t m2 = P.dims().m2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t flat = table(rng);
    const auto j = static_cast<std::uint32_t>(flat / m2);
    const auto k = static_cast<std::uint32_t>(flat % m2);
    obs.records.push_back({j, k, A0(j, k) + xi(rng)});
  }
  return obs;
}

std::vector<double> noise_sample(const NoiseModel& noise, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("noise_sample: count must be positive");
  NoiseGenerator xi(noise);
  Rng rng = make_rng(seed);
  std::vector<double> out(count);
  for (auto& v : out) v = xi(rng);
  return out;
}

}  // namespace mclab
