#include "mclab/cli.hpp"

#include "mclab/concentration.hpp"
#include "mclab/config.hpp"
#include "mclab/core.hpp"
#include "mclab/experiments.hpp"
#include "mclab/io.hpp"
#include "mclab/rng.hpp"
#include "mclab/sampling.hpp"
#include "mclab/solvers.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>

namespace mclab::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

RunConfig load_config(const std::string& path) {
  const std::string text = read_file(path);
  return parse_run_config_text(text);
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

fs::path sidecar_path(const fs::path& out) {
  fs::path p = out;
  if (p.extension() == ".json") return fs::path(out.string() + ".meta.json");
  return p.replace_extension(".json");
}

int cmd_generate(std::size_t m1, std::size_t m2, std::size_t rank, double a, std::uint64_t seed,
                 const std::string& out_path, std::ostream& out) {
  if (m1 == 0 || m2 == 0) throw UsageError("--m1 and --m2 must be positive");
  if (rank == 0 || rank > std::min(m1, m2)) throw UsageError("--rank must satisfy 1 <= rank <= min(m1, m2)");
  if (!(a > 0.0) || !std::isfinite(a)) throw UsageError("--a must be positive");
  const GroundTruth gt = generate_low_rank(Dims(m1, m2), rank, a, seed);
  write_matrix_csv(out_path, gt.matrix);
  out << "rank " << numerical_rank(gt.matrix) << "\n";
  out << "inf_norm " << format_double(norm_inf(gt.matrix)) << "\n";
  return kOk;
}

Matrix ground_truth_for(const RunConfig& cfg) {
  if (cfg.groundTruthFile) {
    Matrix A0 = read_matrix_csv(*cfg.groundTruthFile);
    if (dims_of(A0) != cfg.dims) throw ConfigError("/groundTruthFile", "matrix shape does not match dims");
    if (norm_inf(A0) > cfg.a) throw ConfigError("/groundTruthFile", "matrix exceeds the entrywise bound a");
    return A0;
  }
  return generate_low_rank(cfg.dims, cfg.rank, cfg.a, cfg.seed).matrix;
}

int cmd_simulate(const std::string& config_path, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = load_config(config_path);
  const Matrix A0 = ground_truth_for(cfg);
  const SamplingDistribution P = cfg.sampling.build(cfg.dims);
  // Same streams as run_trial, so a simulated file reproduces a trial's data.
  const ObservationSet obs = sample_observations(A0, P, cfg.noise, cfg.n, derive_seed(cfg.seed, {1}));
  write_observations_csv(out_path, obs);
  out << "wrote " << obs.n() << " observations to " << out_path << "\n";
  return kOk;
}

int cmd_solve(const std::string& obs_path, const std::string& config_path, const std::string& estimator,
              const std::string& lambda_flag, const std::string& out_path, bool strict, std::ostream& out,
              std::ostream& err) {
  RunConfig cfg = load_config(config_path);
  EstimatorSpec spec = cfg.estimator;
  spec.a = cfg.a;
  if (!estimator.empty()) {
    try {
      spec.estimator = estimator_from_string(estimator);
    } catch (const std::exception&) {
      throw UsageError("--estimator must be one of ls, huber, sqrt");
    }
    if (spec.estimator != Estimator::Huber) spec.tau.reset();
  }
  if (!lambda_flag.empty()) {
    if (lambda_flag == "auto") {
      spec.mode = TuningMode::TheoremRule;
    } else if (lambda_flag == "pilot") {
      spec.mode = TuningMode::Pilot;
    } else {
      double value = 0.0;
      try {
        std::size_t used = 0;
        value = std::stod(lambda_flag, &used);
        if (used != lambda_flag.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw UsageError("--lambda must be auto, pilot or a number");
      }
      if (!(value >= 0.0) || !std::isfinite(value)) throw UsageError("--lambda must be nonnegative");
      spec.mode = TuningMode::Explicit;
      spec.lambda = value;
    }
  }
  if (spec.mode != TuningMode::Explicit) spec.lambda.reset();
  const ObservationSet obs = read_observations_csv(obs_path, cfg.dims);
  const SamplingDistribution P = cfg.sampling.build(cfg.dims);
  spec.pilot.seed = derive_seed(cfg.seed, {2});
  if (spec.estimator == Estimator::Huber && !spec.tau && spec.mode == TuningMode::Explicit) {
    // An explicit lambda still needs a robustification level: take the theorem-rule tau.
    spec.tau = tune_from_theorem(spec, cfg.dims, obs.n(), std::optional<double>(cfg.noise.sigma), cfg.a).tau;
  }
  if (spec.estimator == Estimator::LeastSquares && spec.mode == TuningMode::TheoremRule &&
      !(cfg.noise.sigma > 0.0))
    throw UsageError("--lambda auto for least squares needs noise.sigma > 0 in the config");
  spec = resolve_tuning(spec, P, cfg.noise, obs.n());

  const SolveResult res = fit(obs, spec, cfg.solver);
  const double kkt = kkt_residual(res, obs, spec);
  write_matrix_csv(out_path, res.estimate);

  nlohmann::json side;
  side["estimator"] = to_string(spec.estimator);
  side["lambda"] = *spec.lambda;
  side["tau"] = spec.estimator == Estimator::Huber ? finite_or_null(*spec.tau) : nlohmann::json(nullptr);
  side["iterations"] = res.iterations;
  side["converged"] = res.converged;
  side["kktResidual"] = kkt;
  if (spec.estimator == Estimator::SquareRoot) {
    side["sigmaHat"] = res.sigmaHat;
    side["sigmaAtFloor"] = res.sigmaAtFloor;
    side["effectiveLambda"] = res.effectiveLambda;
  }
  write_file_atomic(sidecar_path(out_path), side.dump(2) + "\n");

  out << "lambda " << format_double(*spec.lambda) << "\n";
  out << "iterations " << res.iterations << (res.converged ? " (converged)" : " (not converged)") << "\n";
  out << "kkt " << format_double(kkt) << "\n";
  if (res.sigmaAtFloor) err << "warning: sigma-hat reached its floor (near-interpolation)\n";
  if (!res.converged) {
    err << "warning: solver did not converge\n";
    if (strict) return kNotConverged;
  }
  return kOk;
}

struct ConcentrationArgs {
  std::string family;
  std::size_t m1 = 0, m2 = 0, n = 0;
  int reps = 0;
  std::uint64_t seed = 0;
  std::string noise = "gaussian";
  double sigma = 1.0;
  double df = 2.5;
  std::optional<double> tau;
  double C = 1.0;
  std::optional<double> t;
  std::string out;
};

int cmd_concentration(const ConcentrationArgs& a, std::ostream& out) {
  if (a.m1 == 0 || a.m2 == 0) throw UsageError("--m1 and --m2 must be positive");
  if (a.n == 0) throw UsageError("--n must be positive");
  if (a.reps < 1) throw UsageError("--reps must be positive");
  MultiplierKind kind;
  NoiseModel noise;
  try {
    kind = multiplier_kind_from_string(a.family);
  } catch (const std::exception&) {
    throw UsageError("--family must be one of rademacher, noise, truncated, indicator");
  }
  try {
    noise.kind = noise_kind_from_string(a.noise);
    noise.sigma = noise.kind == NoiseKind::None ? 0.0 : a.sigma;
    noise.df = a.df;
    noise.validate();
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid noise flags: ") + e.what());
  }
  if (a.tau && !(*a.tau > 0.0)) throw UsageError("--tau must be positive");
  if (a.t && !(*a.t > 0.0)) throw UsageError("--t must be positive");
  if (!(a.C > 0.0)) throw UsageError("--C must be positive");
  MultiplierFamily family;
  switch (kind) {
    case MultiplierKind::Rademacher: family = MultiplierFamily::rademacher(); break;
    case MultiplierKind::Noise: family = MultiplierFamily::noise_family(noise); break;
    case MultiplierKind::TruncatedNoise:
      if (!a.tau) throw UsageError("--family truncated requires --tau");
      family = MultiplierFamily::truncated(noise, *a.tau);
      break;
    case MultiplierKind::IndicatorRademacher:
      if (!a.tau) throw UsageError("--family indicator requires --tau");
      family = MultiplierFamily::indicator(noise, *a.tau);
      break;
  }
  const Dims dims(a.m1, a.m2);
  if (dims.d() < 2) throw UsageError("m1 + m2 must be at least 2");
  const ConcentrationReport report =
      concentration_report(make_uniform(dims), family, a.n, a.reps, a.seed, a.C, a.t);
  const std::string json = report_to_json(report);
  if (a.out.empty()) {
    out << json;
  } else {
    write_file_atomic(a.out, json);
    out << "empirical mean " << format_double(report.empirical.mean) << "\n";
  }
  return kOk;
}

int cmd_rate_scan(const std::string& config_path, const std::string& out_dir, std::ostream& out,
                  std::ostream& err) {
  const RunConfig cfg = load_config(config_path);
  const ScanSpec spec = cfg.scan_spec();
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("/scan", e.what());
  }
  const RateScanResult result = rate_scan(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "'");
  const fs::path dir(out_dir);
  write_file_atomic(dir / cfg.outputs.trials, trials_to_csv(result.trials));
  write_file_atomic(dir / cfg.outputs.aggregates, aggregates_to_json(result));
  try {
    const PowerLawFit fit = fit_power_law(result);
    write_file_atomic(dir / cfg.outputs.fit, fit_to_json(fit, result.axis));
    out << "slope " << format_double(fit.slope) << "\n";
    out << "rSquared " << format_double(fit.rSquared) << "\n";
  } catch (const std::invalid_argument& e) {
    nlohmann::json failed{{"axis", to_string(result.axis)}, {"error", e.what()}};
    write_file_atomic(dir / cfg.outputs.fit, failed.dump(2) + "\n");
    err << "warning: power-law fit unavailable: " << e.what() << "\n";
  }
  if (result.calibratedC) out << "calibratedC " << format_double(*result.calibratedC) << "\n";
  const auto unconverged = std::count_if(result.trials.begin(), result.trials.end(),
                                         [](const TrialRecord& t) { return !t.converged; });
  if (unconverged > 0) err << "warning: " << unconverged << " trials did not converge\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Matrix completion lab: simulation, estimation and concentration diagnostics", "mclab"};
  app.require_subcommand(1);

  std::size_t m1 = 0, m2 = 0, rank = 0;
  double a = 1.0;
  std::uint64_t seed = 0;
  std::string out_path;
  auto* gen = app.add_subcommand("generate", "Write a random rank-r ground truth matrix as CSV");
  gen->add_option("--m1", m1, "rows")->required();
  gen->add_option("--m2", m2, "columns")->required();
  gen->add_option("--rank", rank, "rank")->required();
  gen->add_option("--a", a, "entrywise bound");
  gen->add_option("--seed", seed, "seed");
  gen->add_option("--out", out_path, "output CSV")->required();

  std::string config_path;
  auto* sim = app.add_subcommand("simulate", "Sample noisy observations per a JSON config");
  sim->add_option("--config", config_path, "RunConfig JSON")->required();
  sim->add_option("--out", out_path, "output observation CSV")->required();

  std::string obs_path, estimator, lambda_flag;
  bool strict = false;
  auto* solve = app.add_subcommand("solve", "Fit an estimator to an observation file");
  solve->add_option("--obs", obs_path, "observation CSV")->required();
  solve->add_option("--config", config_path, "RunConfig JSON")->required();
  solve->add_option("--estimator", estimator, "ls | huber | sqrt");
  solve->add_option("--lambda", lambda_flag, "auto | pilot | <float>");
  solve->add_option("--out", out_path, "estimate CSV (a .json sidecar is written next to it)")->required();
  solve->add_flag("--strict", strict, "exit 4 when the solver does not converge");

  ConcentrationArgs ca;
  double tau = 0.0, t = 0.0;
  auto* conc = app.add_subcommand("concentration", "Closed-form parameters, bounds and Monte Carlo spectral norms");
  conc->add_option("--family", ca.family, "rademacher | noise | truncated | indicator")->required();
  conc->add_option("--m1", ca.m1, "rows")->required();
  conc->add_option("--m2", ca.m2, "columns")->required();
  conc->add_option("--n", ca.n, "summands")->required();
  conc->add_option("--reps", ca.reps, "Monte Carlo replicates")->required();
  conc->add_option("--seed", ca.seed, "seed")->required();
  conc->add_option("--noise", ca.noise, "gaussian | studentT | twoPoint | none");
  conc->add_option("--sigma", ca.sigma, "noise standard deviation");
  conc->add_option("--df", ca.df, "Student-t degrees of freedom");
  auto* tau_opt = conc->add_option("--tau", tau, "truncation level");
  conc->add_option("--C", ca.C, "bound constant");
  auto* t_opt = conc->add_option("--t", t, "tail parameter (default 3 ln d)");
  conc->add_option("--out", ca.out, "output JSON (stdout when omitted)");

  std::string out_dir;
  auto* scan = app.add_subcommand("rate-scan", "Replicated error scan over n, M or r with a power-law fit");
  scan->add_option("--config", config_path, "RunConfig JSON with a scan section")->required();
  scan->add_option("--out-dir", out_dir, "output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (*tau_opt) ca.tau = tau;
  if (*t_opt) ca.t = t;

  try {
    if (*gen) return cmd_generate(m1, m2, rank, a, seed, out_path, out);
    if (*sim) return cmd_simulate(config_path, out_path, out);
    if (*solve) return cmd_solve(obs_path, config_path, estimator, lambda_flag, out_path, strict, out, err);
    if (*conc) return cmd_concentration(ca, out);
    if (*scan) return cmd_rate_scan(config_path, out_dir, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace mclab::cli
