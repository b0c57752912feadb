#include "mclab/cli.hpp"
#include "mclab/concentration.hpp"
#include "mclab/config.hpp"
#include "mclab/io.hpp"
#include "mclab/solvers.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

using namespace mclab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("mclab_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

json base_config() {
  return json{{"dims", {{"m1", 10}, {"m2", 8}}},
              {"rank", 2},
              {"a", 1.0},
              {"seed", 11},
              {"n", 400},
              {"noise", {{"kind", "gaussian"}, {"sigma", 0.2}}}};
}

json scan_config() {
  json c = base_config();
  c["scan"] = {{"axis", "n"}, {"grid", {200, 400, 800, 1600}}, {"reps", 10}};
  return c;
}

}  // namespace

TEST_CASE("generate writes m1 rows and is deterministic") {
  TempDir dir("gen");
  const Run a = cli_run({"generate", "--m1", "7", "--m2", "5", "--rank", "2", "--a", "1.5", "--seed", "3", "--out",
                         dir / "a.csv"});
  REQUIRE(a.code == cli::kOk);
  const std::string text = slurp(dir / "a.csv");
  CHECK(line_count(text) == 7);
  const Matrix A = matrix_from_csv(text);
  CHECK(A.rows() == 7);
  CHECK(A.cols() == 5);
  CHECK(numerical_rank(A) == 2);
  CHECK(norm_inf(A) <= 1.5);
  CHECK(a.out.find("rank 2") != std::string::npos);
  CHECK(a.out.find("inf_norm") != std::string::npos);

  REQUIRE(cli_run({"generate", "--m1", "7", "--m2", "5", "--rank", "2", "--a", "1.5", "--seed", "3", "--out",
                   dir / "b.csv"})
              .code == cli::kOk);
  CHECK(slurp(dir / "b.csv") == text);
  REQUIRE(cli_run({"generate", "--m1", "7", "--m2", "5", "--rank", "2", "--a", "1.5", "--seed", "4", "--out",
                   dir / "c.csv"})
              .code == cli::kOk);
  CHECK(slurp(dir / "c.csv") != text);
}

TEST_CASE("generate rejects bad flags") {
  TempDir dir("genbad");
  const Run r = cli_run({"generate", "--m1", "4", "--m2", "3", "--rank", "4", "--out", dir / "x.csv"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("min(m1, m2)") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "x.csv"));
  CHECK(cli_run({"generate", "--m1", "4", "--m2", "3", "--rank", "1", "--a", "0", "--out", dir / "x.csv"}).code ==
        cli::kUsage);
  CHECK(cli_run({"generate", "--m1", "4", "--m2", "3"}).code == cli::kUsage);
  CHECK(cli_run({"frobnicate"}).code == cli::kUsage);
  CHECK(cli_run({"generate", "--m1", "4", "--m2", "3", "--rank", "1", "--out", dir / "missing/sub/x.csv"}).code ==
        cli::kIo);
}

TEST_CASE("simulate writes n rows plus a header") {
  TempDir dir("sim");
  spit(dir / "cfg.json", base_config().dump());
  const Run r = cli_run({"simulate", "--config", dir / "cfg.json", "--out", dir / "obs.csv"});
  REQUIRE(r.code == cli::kOk);
  const std::string text = slurp(dir / "obs.csv");
  CHECK(text.rfind("row,col,y\n", 0) == 0);
  CHECK(line_count(text) == 401);
  const ObservationSet obs = observations_from_csv(text, Dims(10, 8));
  CHECK(obs.n() == 400);

  REQUIRE(cli_run({"simulate", "--config", dir / "cfg.json", "--out", dir / "obs2.csv"}).code == cli::kOk);
  CHECK(slurp(dir / "obs2.csv") == text);
}

TEST_CASE("simulate schema violations name the offending key") {
  TempDir dir("simbad");
  auto expect_pointer = [&](const json& cfg, const std::string& pointer) {
    spit(dir / "bad.json", cfg.dump());
    const Run r = cli_run({"simulate", "--config", dir / "bad.json", "--out", dir / "obs.csv"});
    CHECK(r.code == cli::kUsage);
    CHECK_MESSAGE(r.err.find(pointer) != std::string::npos, r.err);
    CHECK_FALSE(fs::exists(dir / "obs.csv"));
  };
  json neg = base_config();
  neg["n"] = -5;
  expect_pointer(neg, "/n");
  json unknown = base_config();
  unknown["noise"]["variance"] = 1.0;
  expect_pointer(unknown, "/noise/variance");
  json top = base_config();
  top["extra"] = true;
  expect_pointer(top, "/extra");
  json rank = base_config();
  rank["rank"] = 9;
  expect_pointer(rank, "/rank");
  json kind = base_config();
  kind["sampling"] = {{"kind", "zipf"}};
  expect_pointer(kind, "/sampling/kind");

  spit(dir / "broken.json", "{\"n\": ");
  CHECK(cli_run({"simulate", "--config", dir / "broken.json", "--out", dir / "obs.csv"}).code == cli::kUsage);
  CHECK(cli_run({"simulate", "--config", dir / "nonexistent.json", "--out", dir / "obs.csv"}).code == cli::kIo);
}

TEST_CASE("noiseless simulate draws values from the ground truth") {
  TempDir dir("simnone");
  REQUIRE(cli_run({"generate", "--m1", "6", "--m2", "9", "--rank", "2", "--seed", "8", "--out", dir / "gt.csv"})
              .code == cli::kOk);
  json cfg = base_config();
  cfg["dims"] = {{"m1", 6}, {"m2", 9}};
  cfg["noise"] = {{"kind", "none"}};
  cfg["estimator"] = {{"kind", "ls"}, {"lambda", 0.001}};
  cfg["groundTruthFile"] = dir / "gt.csv";
  spit(dir / "cfg.json", cfg.dump());
  REQUIRE(cli_run({"simulate", "--config", dir / "cfg.json", "--out", dir / "obs.csv"}).code == cli::kOk);

  const Matrix A0 = read_matrix_csv(dir / "gt.csv");
  std::set<double> values(A0.data(), A0.data() + A0.size());
  const ObservationSet obs = read_observations_csv(dir / "obs.csv", Dims(6, 9));
  REQUIRE(obs.n() == 400);
  for (std::size_t i = 0; i < obs.n(); ++i) {
    const auto& o = obs.records[i];
    REQUIRE(values.count(o.y) == 1);
    REQUIRE(o.y == A0(o.row, o.col));
  }
}

TEST_CASE("solve: sidecar lambda follows the tuning flag") {
  TempDir dir("solve");
  const json cfg = base_config();
  spit(dir / "cfg.json", cfg.dump());
  REQUIRE(cli_run({"simulate", "--config", dir / "cfg.json", "--out", dir / "obs.csv"}).code == cli::kOk);

  const RunConfig rc = parse_run_config(cfg);
  for (const char* est : {"ls", "huber", "sqrt"}) {
    CAPTURE(est);
    const Run r = cli_run({"solve", "--obs", dir / "obs.csv", "--config", dir / "cfg.json", "--estimator", est,
                           "--lambda", "auto", "--out", dir / "est.csv"});
    REQUIRE(r.code == cli::kOk);
    const json side = json::parse(slurp(dir / "est.json"));
    EstimatorSpec spec = rc.estimator;
    spec.estimator = estimator_from_string(est);
    const Tuning t = tune_from_theorem(spec, rc.dims, 400, rc.noise.sigma, rc.a);
    CHECK(side["lambda"].get<double>() == t.lambda);
    CHECK(side["estimator"] == to_string(spec.estimator));
    if (spec.estimator == Estimator::Huber) CHECK(side["tau"].get<double>() == t.tau);
    else CHECK(side["tau"].is_null());
    for (const char* key : {"iterations", "converged", "kktResidual"}) CHECK(side.contains(key));
    CHECK(side.contains("sigmaHat") == (spec.estimator == Estimator::SquareRoot));
    const Matrix A = read_matrix_csv(dir / "est.csv");
    CHECK(A.rows() == 10);
    CHECK(A.cols() == 8);
  }

  const Run fixed = cli_run({"solve", "--obs", dir / "obs.csv", "--config", dir / "cfg.json", "--estimator", "ls",
                             "--lambda", "0.01", "--out", dir / "fixed.csv"});
  REQUIRE(fixed.code == cli::kOk);
  CHECK(json::parse(slurp(dir / "fixed.json"))["lambda"].get<double>() == 0.01);
  const std::string first = slurp(dir / "fixed.csv");
  REQUIRE(cli_run({"solve", "--obs", dir / "obs.csv", "--config", dir / "cfg.json", "--estimator", "ls",
                   "--lambda", "0.01", "--out", dir / "fixed.csv"})
              .code == cli::kOk);
  CHECK(slurp(dir / "fixed.csv") == first);

  // A .json output keeps its own name; the sidecar goes next to it.
  REQUIRE(cli_run({"solve", "--obs", dir / "obs.csv", "--config", dir / "cfg.json", "--lambda", "0.01", "--out",
                   dir / "est_as.json"})
              .code == cli::kOk);
  CHECK(fs::exists(dir / "est_as.json.meta.json"));

  CHECK(cli_run({"solve", "--obs", dir / "obs.csv", "--config", dir / "cfg.json", "--lambda", "-1", "--out",
                 dir / "x.csv"})
            .code == cli::kUsage);
  CHECK(cli_run({"solve", "--obs", dir / "obs.csv", "--config", dir / "cfg.json", "--lambda", "lots", "--out",
                 dir / "x.csv"})
            .code == cli::kUsage);
  CHECK(cli_run({"solve", "--obs", dir / "obs.csv", "--config", dir / "cfg.json", "--estimator", "l1", "--out",
                 dir / "x.csv"})
            .code == cli::kUsage);
  CHECK(cli_run({"solve", "--obs", dir / "none.csv", "--config", dir / "cfg.json", "--out", dir / "x.csv"}).code ==
        cli::kIo);
}

TEST_CASE("solve: noiseless instance meets the KKT tolerance") {
  TempDir dir("solvenone");
  json cfg = base_config();
  cfg["noise"] = {{"kind", "none"}};
  cfg["n"] = 600;
  cfg["estimator"] = {{"kind", "ls"}, {"lambda", 1e-3}};
  cfg["solver"] = {{"tolKKT", 1e-7}, {"maxIters", 20000}};
  spit(dir / "cfg.json", cfg.dump());
  REQUIRE(cli_run({"simulate", "--config", dir / "cfg.json", "--out", dir / "obs.csv"}).code == cli::kOk);
  for (const char* est : {"ls", "huber", "sqrt"}) {
    CAPTURE(est);
    const Run r = cli_run({"solve", "--obs", dir / "obs.csv", "--config", dir / "cfg.json", "--estimator", est,
                           "--out", dir / "est.csv", "--strict"});
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    const json side = json::parse(slurp(dir / "est.json"));
    CHECK(side["converged"] == true);
    CHECK(side["kktResidual"].get<double>() <= 1e-7);
  }
}

TEST_CASE("solve: --strict turns non-convergence into exit 4") {
  TempDir dir("strict");
  json cfg = base_config();
  cfg["solver"] = {{"maxIters", 2}, {"tolKKT", 1e-14}};
  spit(dir / "cfg.json", cfg.dump());
  REQUIRE(cli_run({"simulate", "--config", dir / "cfg.json", "--out", dir / "obs.csv"}).code == cli::kOk);
  const std::vector<std::string> args{"solve", "--obs", dir / "obs.csv", "--config", dir / "cfg.json", "--lambda",
                                      "0.01", "--out", dir / "est.csv"};
  const Run lax = cli_run(args);
  CHECK(lax.code == cli::kOk);
  CHECK(json::parse(slurp(dir / "est.json"))["converged"] == false);
  CHECK(lax.err.find("did not converge") != std::string::npos);

  std::vector<std::string> strict = args;
  strict.push_back("--strict");
  CHECK(cli_run(strict).code == cli::kNotConverged);
  CHECK(fs::exists(dir / "est.csv"));
}

TEST_CASE("concentration: rademacher with one replicate of one summand") {
  const Run r = cli_run({"concentration", "--family", "rademacher", "--m1", "5", "--m2", "7", "--n", "1", "--reps",
                         "1", "--seed", "9"});
  REQUIRE(r.code == cli::kOk);
  const json j = json::parse(r.out);
  CHECK(j["empirical"]["mean"].get<double>() == 1.0);
  CHECK(j["empirical"]["reps"] == 1);
}

TEST_CASE("concentration: report schema and closed-form recomputation") {
  TempDir dir("conc");
  struct Case {
    std::vector<std::string> flags;
    MultiplierFamily family;
  };
  const NoiseModel g = NoiseModel::gaussian(0.5);
  const NoiseModel t = NoiseModel::student_t(1.0, 3.0);
  const std::vector<Case> cases{
      {{"--family", "rademacher"}, MultiplierFamily::rademacher()},
      {{"--family", "noise", "--noise", "gaussian", "--sigma", "0.5"}, MultiplierFamily::noise_family(g)},
      {{"--family", "truncated", "--noise", "student_t", "--sigma", "1", "--df", "3", "--tau", "2"},
       MultiplierFamily::truncated(t, 2.0)},
      {{"--family", "indicator", "--noise", "gaussian", "--sigma", "0.5", "--tau", "0.4"},
       MultiplierFamily::indicator(g, 0.4)},
  };
  for (const Case& c : cases) {
    CAPTURE(c.flags[1]);
    std::vector<std::string> args{"concentration", "--m1", "6", "--m2", "4", "--n", "50", "--reps", "20",
                                  "--seed", "2", "--C", "1.5", "--out", dir / "rep.json"};
    args.insert(args.end(), c.flags.begin(), c.flags.end());
    const Run r = cli_run(args);
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    const json j = json::parse(slurp(dir / "rep.json"));
    for (const char* k : {"params", "bounds", "empirical"}) REQUIRE(j.contains(k));
    for (const char* k : {"gamma", "gammaStar", "g", "R"}) CHECK(j["params"].contains(k));
    for (const char* k : {"sharpTail", "sharpExpectation", "bernstein"}) CHECK(j["bounds"].contains(k));
    for (const char* k : {"mean", "q50", "q90", "q99", "reps", "seed"}) CHECK(j["empirical"].contains(k));

    const ConcentrationParams p = closed_form_params(make_uniform(Dims(6, 4)), c.family, 50);
    CHECK(j["params"]["gamma"].get<double>() == doctest::Approx(p.gamma).epsilon(1e-14));
    CHECK(j["params"]["gammaStar"].get<double>() == doctest::Approx(p.gammaStar).epsilon(1e-14));
    CHECK(j["params"]["g"].get<double>() == doctest::Approx(p.g).epsilon(1e-14));
    if (p.R) {
      CHECK(j["params"]["R"].get<double>() == doctest::Approx(*p.R).epsilon(1e-14));
      const double tt = 3.0 * std::log(10.0);
      CHECK(j["bounds"]["sharpTail"].get<double>() ==
            doctest::Approx(sharp_tail_threshold(p, 10, tt, 1.5)).epsilon(1e-14));
    } else {
      CHECK(j["params"]["R"].is_null());
      CHECK(j["bounds"]["sharpTail"].is_null());
    }
    CHECK(j["bounds"]["bernstein"].is_null() == !p.R);
  }
}

TEST_CASE("concentration: invalid parameters exit 2") {
  const std::vector<std::string> base{"concentration", "--m1", "4", "--m2", "4", "--n", "10", "--reps", "5",
                                      "--seed", "1"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return cli_run(a).code;
  };
  CHECK(with({"--family", "cauchy"}) == cli::kUsage);
  CHECK(with({"--family", "truncated"}) == cli::kUsage);
  CHECK(with({"--family", "indicator", "--tau", "-1"}) == cli::kUsage);
  CHECK(with({"--family", "noise", "--sigma", "-2"}) == cli::kUsage);
  CHECK(with({"--family", "noise", "--noise", "laplace"}) == cli::kUsage);
  CHECK(with({"--family", "rademacher", "--C", "0"}) == cli::kUsage);
  CHECK(cli_run({"concentration", "--family", "rademacher", "--m1", "4", "--m2", "4", "--n", "10", "--reps", "0",
                 "--seed", "1"})
            .code == cli::kUsage);
}

TEST_CASE("rate-scan: synthetic mode recovers slope -1") {
  TempDir dir("scansyn");
  json cfg = scan_config();
  cfg["scan"]["synthetic"] = {{"constant", 4.0}};
  spit(dir / "cfg.json", cfg.dump());
  const Run r = cli_run({"rate-scan", "--config", dir / "cfg.json", "--out-dir", dir / "out"});
  REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
  const json fit = json::parse(slurp(dir.path / "out" / "fit.json"));
  CHECK(std::abs(fit["slope"].get<double>() + 1.0) <= 1e-10);
  CHECK(std::abs(fit["rSquared"].get<double>() - 1.0) <= 1e-10);
  const json agg = json::parse(slurp(dir.path / "out" / "aggregates.json"));
  CHECK(agg["axis"] == "n");
  CHECK(line_count(slurp(dir.path / "out" / "trials.csv")) == 41);
}

TEST_CASE("rate-scan: outputs are complete, atomic and byte-identical") {
  TempDir dir("scan");
  json cfg = scan_config();
  cfg["outputs"] = {{"trials", "t.csv"}, {"aggregates", "agg.json"}, {"fit", "f.json"}};
  spit(dir / "cfg.json", cfg.dump());
  REQUIRE(cli_run({"rate-scan", "--config", dir / "cfg.json", "--out-dir", dir / "a"}).code == cli::kOk);
  REQUIRE(cli_run({"rate-scan", "--config", dir / "cfg.json", "--out-dir", dir / "b"}).code == cli::kOk);
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir.path / "a")) names.insert(e.path().filename().string());
  CHECK(names == std::set<std::string>{"t.csv", "agg.json", "f.json"});
  for (const char* f : {"t.csv", "agg.json", "f.json"})
    CHECK(slurp(dir.path / "a" / f) == slurp(dir.path / "b" / f));
  const json fit = json::parse(slurp(dir.path / "a" / "f.json"));
  CHECK(fit["slope"].get<double>() < 0.0);
}

TEST_CASE("rate-scan: config errors exit 2 before any output") {
  TempDir dir("scanbad");
  auto expect_reject = [&](const json& cfg, const std::string& pointer) {
    spit(dir / "cfg.json", cfg.dump());
    const Run r = cli_run({"rate-scan", "--config", dir / "cfg.json", "--out-dir", dir / "out"});
    CHECK(r.code == cli::kUsage);
    CHECK_MESSAGE(r.err.find(pointer) != std::string::npos, r.err);
    CHECK_FALSE(fs::exists(dir / "out"));
  };
  json few = scan_config();
  few["scan"]["grid"] = {200, 400, 800};
  expect_reject(few, "/scan/grid");
  json order = scan_config();
  order["scan"]["grid"] = {200, 800, 400, 1600};
  expect_reject(order, "/scan/grid/2");
  json reps = scan_config();
  reps["scan"]["reps"] = 3;
  expect_reject(reps, "/scan/reps");
  json unknown = scan_config();
  unknown["scan"]["repeats"] = 10;
  expect_reject(unknown, "/scan/repeats");
  json cal = scan_config();
  cal["estimator"] = {{"kind", "ls"}, {"lambda", 0.1}};
  cal["scan"]["calibrate"] = true;
  expect_reject(cal, "/scan/calibrate");
  json per = scan_config();
  per["scan"]["nPerRank"] = 100;
  expect_reject(per, "/scan/nPerRank");
  json m = scan_config();
  m["scan"]["axis"] = "M";
  m["scan"]["grid"] = {1, 4, 6, 8};
  expect_reject(m, "/scan");
  expect_reject(base_config(), "/scan");
}

#ifdef MCLAB_CLI_PATH
TEST_CASE("the installed binary honours the exit-code contract") {
  TempDir dir("binary");
  const std::string exe = MCLAB_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((exe + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  CHECK(status("generate --m1 4 --m2 4 --rank 2 --out " + dir / "g.csv") == 0);
  CHECK(status("generate --m1 4 --m2 4 --rank 5 --out " + dir / "g.csv") == 2);
  CHECK(status("simulate --config " + dir / "missing.json" + " --out " + dir / "o.csv") == 3);
  CHECK(status("--help") == 0);
}
#endif
