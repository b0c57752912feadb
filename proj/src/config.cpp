#include "mclab/config.hpp"

#include <cmath>
#include <initializer_list>
#include <set>

namespace mclab {

namespace {

using nlohmann::json;

std::string child(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }

/// Object view that remembers its pointer and rejects keys outside the schema.
class Section {
 public:
  Section(const json& j, std::string ptr, std::initializer_list<const char*> allowed) : j_(j), ptr_(std::move(ptr)) {
    if (!j.is_object()) throw ConfigError(ptr_.empty() ? "/" : ptr_, "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!ok.count(it.key())) throw ConfigError(child(ptr_, it.key()), "unknown key");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& at(const char* key) const { return j_.at(key); }
  std::string ptr(const char* key) const { return child(ptr_, key); }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(ptr(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(ptr(key), "must be finite");
    return x;
  }
  double positive(const char* key, double fallback) const {
    const double x = number(key, fallback);
    if (!(x > 0.0)) throw ConfigError(ptr(key), "must be positive");
    return x;
  }
  double nonnegative(const char* key, double fallback) const {
    const double x = number(key, fallback);
    if (!(x >= 0.0)) throw ConfigError(ptr(key), "must be nonnegative");
    return x;
  }
  std::optional<double> opt_positive(const char* key) const {
    if (!has(key)) return std::nullopt;
    return positive(key, 0.0);
  }
  long long integer(const char* key, long long fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (std::isfinite(x) && x == std::floor(x) && std::fabs(x) < 9e15) return static_cast<long long>(x);
    }
    throw ConfigError(ptr(key), "expected an integer");
  }
  std::size_t count(const char* key, std::size_t fallback) const {
    const long long v = integer(key, static_cast<long long>(fallback));
    if (v < 1) throw ConfigError(ptr(key), "must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  std::uint64_t seed(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    throw ConfigError(ptr(key), "expected a nonnegative integer");
  }
  bool boolean(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!at(key).is_boolean()) throw ConfigError(ptr(key), "expected a boolean");
    return at(key).get<bool>();
  }
  std::string string(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!at(key).is_string()) throw ConfigError(ptr(key), "expected a string");
    return at(key).get<std::string>();
  }
  std::vector<double> numbers(const char* key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    const json& v = at(key);
    if (!v.is_array()) throw ConfigError(ptr(key), "expected an array of numbers");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(ptr(key) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

 private:
  const json& j_;
  std::string ptr_;
};

template <class F>
auto mapped(const Section& s, const char* key, F&& parse) {
  try {
    return parse();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(s.ptr(key), e.what());
  }
}

void parse_sampling(const Section& root, RunConfig& cfg) {
  if (!root.has("sampling")) return;
  Section s(root.at("sampling"), root.ptr("sampling"), {"kind", "rowWeights", "colWeights"});
  const std::string kind = s.string("kind", "uniform");
  if (kind == "uniform") {
    cfg.sampling.kind = SamplingSpec::Kind::Uniform;
    if (s.has("rowWeights") || s.has("colWeights"))
      throw ConfigError(s.ptr("rowWeights"), "weights are only valid with kind \"product\"");
  } else if (kind == "product") {
    cfg.sampling.kind = SamplingSpec::Kind::Product;
    cfg.sampling.rowWeights = s.numbers("rowWeights");
    cfg.sampling.colWeights = s.numbers("colWeights");
    if (cfg.sampling.rowWeights.size() != cfg.dims.m1)
      throw ConfigError(s.ptr("rowWeights"), "length must equal dims.m1");
    if (cfg.sampling.colWeights.size() != cfg.dims.m2)
      throw ConfigError(s.ptr("colWeights"), "length must equal dims.m2");
    for (std::size_t i = 0; i < cfg.sampling.rowWeights.size(); ++i)
      if (!(cfg.sampling.rowWeights[i] > 0.0))
        throw ConfigError(s.ptr("rowWeights") + "/" + std::to_string(i), "weights must be positive");
    for (std::size_t i = 0; i < cfg.sampling.colWeights.size(); ++i)
      if (!(cfg.sampling.colWeights[i] > 0.0))
        throw ConfigError(s.ptr("colWeights") + "/" + std::to_string(i), "weights must be positive");
  } else {
    throw ConfigError(s.ptr("kind"), "expected \"uniform\" or \"product\"");
  }
}

void parse_noise(const Section& root, RunConfig& cfg) {
  if (!root.has("noise")) return;
  Section s(root.at("noise"), root.ptr("noise"), {"kind", "sigma", "df"});
  NoiseModel noise;
  noise.kind = mapped(s, "kind", [&] { return noise_kind_from_string(s.string("kind", "gaussian")); });
  noise.sigma = noise.kind == NoiseKind::None ? s.nonnegative("sigma", 0.0) : s.positive("sigma", 0.5);
  noise.df = s.number("df", 2.5);
  if (noise.kind == NoiseKind::StudentT && !(noise.df > 2.0)) throw ConfigError(s.ptr("df"), "must exceed 2");
  if (noise.kind == NoiseKind::None) noise.sigma = 0.0;
  cfg.noise = noise;
}

void parse_estimator(const Section& root, RunConfig& cfg) {
  cfg.estimator.a = cfg.a;
  cfg.estimator.mode = TuningMode::TheoremRule;
  if (!root.has("estimator")) return;
  Section s(root.at("estimator"), root.ptr("estimator"), {"kind", "lambda", "tau", "tuning"});
  EstimatorSpec& e = cfg.estimator;
  e.estimator = mapped(s, "kind", [&] { return estimator_from_string(s.string("kind", "ls")); });
  if (s.has("lambda")) {
    const json& v = s.at("lambda");
    if (v.is_string()) {
      const std::string mode = v.get<std::string>();
      if (mode == "auto") e.mode = TuningMode::TheoremRule;
      else if (mode == "pilot") e.mode = TuningMode::Pilot;
      else throw ConfigError(s.ptr("lambda"), "expected \"auto\", \"pilot\" or a number");
    } else {
      e.lambda = s.nonnegative("lambda", 0.0);
      e.mode = TuningMode::Explicit;
    }
  } else {
    e.mode = TuningMode::TheoremRule;
  }
  e.tau = s.opt_positive("tau");
  if (e.tau && e.estimator != Estimator::Huber) throw ConfigError(s.ptr("tau"), "tau applies to huber only");
  if (s.has("tuning")) {
    Section t(s.at("tuning"), s.ptr("tuning"), {"C", "reps", "quantile"});
    e.C = t.positive("C", 1.0);
    e.pilot.reps = static_cast<int>(t.count("reps", 200));
    e.pilot.quantile = t.number("quantile", 0.95);
    if (!(e.pilot.quantile > 0.0 && e.pilot.quantile < 1.0))
      throw ConfigError(t.ptr("quantile"), "must lie in (0, 1)");
  }
}

void parse_solver(const Section& root, RunConfig& cfg) {
  if (!root.has("solver")) return;
  Section s(root.at("solver"), root.ptr("solver"),
            {"maxIters", "tolRelObjective", "tolKKT", "stepInit", "backtrackFactor", "sqrtSigmaFloor",
             "sqrtOuterIters", "dykstraIters", "dykstraTol", "kktEvery"});
  SolverConfig& c = cfg.solver;
  c.maxIters = static_cast<int>(s.count("maxIters", static_cast<std::size_t>(c.maxIters)));
  c.tolRelObjective = s.nonnegative("tolRelObjective", c.tolRelObjective);
  c.tolKKT = s.nonnegative("tolKKT", c.tolKKT);
  c.stepInit = s.opt_positive("stepInit");
  c.backtrackFactor = s.positive("backtrackFactor", c.backtrackFactor);
  if (!(c.backtrackFactor < 1.0)) throw ConfigError(s.ptr("backtrackFactor"), "must lie in (0, 1)");
  c.sqrtSigmaFloor = s.opt_positive("sqrtSigmaFloor");
  c.sqrtOuterIters = static_cast<int>(s.count("sqrtOuterIters", static_cast<std::size_t>(c.sqrtOuterIters)));
  c.dykstraIters = static_cast<int>(s.count("dykstraIters", static_cast<std::size_t>(c.dykstraIters)));
  c.dykstraTol = s.nonnegative("dykstraTol", c.dykstraTol);
  c.kktEvery = static_cast<int>(s.count("kktEvery", static_cast<std::size_t>(c.kktEvery)));
}

void parse_concentration(const Section& root, RunConfig& cfg) {
  if (!root.has("concentration")) return;
  Section s(root.at("concentration"), root.ptr("concentration"), {"family", "tau", "reps", "C", "t"});
  ConcentrationSettings& c = cfg.concentration;
  c.family = mapped(s, "family", [&] { return multiplier_kind_from_string(s.string("family", "rademacher")); });
  c.tau = s.opt_positive("tau");
  c.reps = static_cast<int>(s.count("reps", 200));
  c.C = s.positive("C", 1.0);
  c.t = s.opt_positive("t");
}

void parse_scan(const Section& root, RunConfig& cfg) {
  if (!root.has("scan")) return;
  Section s(root.at("scan"), root.ptr("scan"),
            {"axis", "grid", "reps", "nPerRank", "calibrate", "synthetic", "recordWallTime"});
  ScanSettings sc;
  sc.axis = mapped(s, "axis", [&] { return scan_axis_from_string(s.string("axis", "n")); });
  sc.grid = s.numbers("grid");
  if (sc.grid.size() < 4) throw ConfigError(s.ptr("grid"), "needs at least 4 points");
  for (std::size_t i = 0; i < sc.grid.size(); ++i) {
    if (!(sc.grid[i] > 0.0)) throw ConfigError(s.ptr("grid") + "/" + std::to_string(i), "must be positive");
    if (i > 0 && !(sc.grid[i] > sc.grid[i - 1]))
      throw ConfigError(s.ptr("grid") + "/" + std::to_string(i), "grid must be strictly increasing");
  }
  sc.reps = static_cast<int>(s.count("reps", 20));
  if (sc.reps < 10) throw ConfigError(s.ptr("reps"), "must be at least 10");
  sc.nPerRank = s.opt_positive("nPerRank");
  if (sc.nPerRank && sc.axis != ScanAxis::R) throw ConfigError(s.ptr("nPerRank"), "applies to axis r only");
  sc.calibrate = s.boolean("calibrate", false);
  if (sc.calibrate && cfg.estimator.mode != TuningMode::TheoremRule)
    throw ConfigError(s.ptr("calibrate"), "requires estimator.lambda = \"auto\"");
  if (s.has("synthetic")) {
    Section syn(s.at("synthetic"), s.ptr("synthetic"), {"constant"});
    sc.syntheticConstant = syn.positive("constant", 1.0);
  }
  sc.recordWallTime = s.boolean("recordWallTime", false);
  cfg.scan = sc;
}

void parse_outputs(const Section& root, RunConfig& cfg) {
  if (!root.has("outputs")) return;
  Section s(root.at("outputs"), root.ptr("outputs"), {"trials", "aggregates", "fit"});
  cfg.outputs.trials = s.string("trials", cfg.outputs.trials);
  cfg.outputs.aggregates = s.string("aggregates", cfg.outputs.aggregates);
  cfg.outputs.fit = s.string("fit", cfg.outputs.fit);
  for (const char* key : {"trials", "aggregates", "fit"})
    if (s.has(key) && s.string(key, "").empty()) throw ConfigError(s.ptr(key), "must be a nonempty file name");
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  Section root(j, "",
               {"dims", "rank", "a", "seed", "n", "sampling", "noise", "groundTruthFile", "estimator", "solver",
                "concentration", "scan", "outputs"});
  RunConfig cfg;
  if (root.has("dims")) {
    Section d(root.at("dims"), root.ptr("dims"), {"m1", "m2"});
    if (!d.has("m1")) throw ConfigError(d.ptr("m1"), "required");
    if (!d.has("m2")) throw ConfigError(d.ptr("m2"), "required");
    cfg.dims = Dims(d.count("m1", 1), d.count("m2", 1));
  }
  cfg.rank = root.count("rank", cfg.rank);
  if (cfg.rank > cfg.dims.m()) throw ConfigError(root.ptr("rank"), "must not exceed min(m1, m2)");
  cfg.a = root.positive("a", cfg.a);
  cfg.seed = root.seed("seed", cfg.seed);
  cfg.n = root.count("n", cfg.n);
  if (root.has("groundTruthFile")) cfg.groundTruthFile = root.string("groundTruthFile", "");
  parse_sampling(root, cfg);
  parse_noise(root, cfg);
  parse_estimator(root, cfg);
  parse_solver(root, cfg);
  parse_concentration(root, cfg);
  parse_scan(root, cfg);
  parse_outputs(root, cfg);

  if (cfg.estimator.mode == TuningMode::TheoremRule && cfg.estimator.estimator == Estimator::LeastSquares &&
      cfg.noise.kind == NoiseKind::None)
    throw ConfigError("/estimator/lambda", "theorem rule for least squares needs sigma > 0; give a number");
  return cfg;
}

RunConfig parse_run_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

TrialConfig RunConfig::trial() const {
  TrialConfig t;
  t.dims = dims;
  t.rank = rank;
  t.a = a;
  t.sampling = sampling;
  t.noise = noise;
  t.estimator = estimator;
  t.estimator.a = a;
  t.solver = solver;
  t.n = n;
  t.seed = seed;
  t.truthSeed = seed;
  if (scan) t.recordWallTime = scan->recordWallTime;
  return t;
}

ScanSpec RunConfig::scan_spec() const {
  if (!scan) throw ConfigError("/scan", "required for rate-scan");
  ScanSpec s;
  s.axis = scan->axis;
  s.grid = scan->grid;
  s.base = trial();
  s.reps = scan->reps;
  s.rootSeed = seed;
  s.nPerRank = scan->nPerRank;
  s.calibrateOnce = scan->calibrate;
  s.syntheticConstant = scan->syntheticConstant;
  return s;
}

}  // namespace mclab
