#include "mclab/concentration.hpp"
#include "mclab/core.hpp"
#include "mclab/experiments.hpp"
#include "mclab/losses_prox.hpp"
#include "mclab/sampling.hpp"
#include "mclab/solvers.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mclab;

namespace {

ObservationSet make_observations(std::size_t m1, std::size_t m2, const std::vector<std::uint32_t>& rows,
                                 const std::vector<std::uint32_t>& cols, const std::vector<double>& y) {
  if (rows.size() != cols.size() || rows.size() != y.size())
    throw std::invalid_argument("rows, cols and y must have equal length");
  ObservationSet obs{Dims(m1, m2), {}};
  obs.records.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) obs.records.push_back({rows[i], cols[i], y[i]});
  obs.validate();
  return obs;
}

}  // namespace

PYBIND11_MODULE(_mclab, m) {
  m.doc() = "Nuclear-norm matrix completion under sampling with replacement.";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

  py::class_<Dims>(m, "Dims")
      .def(py::init<std::size_t, std::size_t>(), py::arg("m1"), py::arg("m2"))
      .def_readonly("m1", &Dims::m1)
      .def_readonly("m2", &Dims::m2)
      .def_property_readonly("M", &Dims::M)
      .def_property_readonly("m", &Dims::m)
      .def_property_readonly("d", &Dims::d);

  m.def("norm_frobenius", &norm_frobenius);
  m.def("norm_nuclear", &norm_nuclear);
  m.def("norm_spectral", &norm_spectral);
  m.def("norm_inf", &norm_inf);
  m.def("svd", [](const Matrix& A) {
    Svd s = svd(A);
    return py::make_tuple(Matrix(s.U), Vector(s.singular), Matrix(s.V));
  });
  m.def("top_singular_value", &top_singular_value, py::arg("A"), py::arg("rel_tol") = 1e-9);
  m.def("numerical_rank", &numerical_rank, py::arg("A"), py::arg("rel_tol") = 1e-8);
  m.def(
      "generate_low_rank",
      [](std::size_t m1, std::size_t m2, std::size_t rank, double a, std::uint64_t seed) {
        return generate_low_rank(Dims(m1, m2), rank, a, seed).matrix;
      },
      py::arg("m1"), py::arg("m2"), py::arg("rank"), py::arg("a") = 1.0, py::arg("seed") = 0);

  py::class_<SamplingDistribution>(m, "SamplingDistribution")
      .def(py::init<Matrix>(), py::arg("probs"))
      .def_property_readonly("probs", &SamplingDistribution::probs)
      .def_property_readonly("dims", &SamplingDistribution::dims)
      .def("row_sums", &SamplingDistribution::row_sums)
      .def("col_sums", &SamplingDistribution::col_sums)
      .def_property_readonly("is_uniform", &SamplingDistribution::is_uniform);
  m.def("make_uniform", [](std::size_t m1, std::size_t m2) { return make_uniform(Dims(m1, m2)); });
  m.def("make_product", [](const std::vector<double>& row, const std::vector<double>& col) {
    return make_product(row, col);
  });
  m.def("norm_weighted_frobenius", &norm_weighted_frobenius);
  m.def("validate_assumptions", [](const SamplingDistribution& P) {
    const AssumptionConstants c = validate_assumptions(P);
    py::dict d;
    d["L2"] = c.L2;
    d["mu"] = c.mu;
    d["L3"] = c.L3;
    d["maxProb"] = c.maxProb;
    return d;
  });

  py::class_<NoiseModel>(m, "NoiseModel")
      .def_static("gaussian", &NoiseModel::gaussian)
      .def_static("student_t", &NoiseModel::student_t, py::arg("sigma"), py::arg("df") = 2.5)
      .def_static("two_point", &NoiseModel::two_point)
      .def_static("none", &NoiseModel::none)
      .def_property_readonly("kind", [](const NoiseModel& n) { return std::string(to_string(n.kind)); })
      .def_readonly("sigma", &NoiseModel::sigma)
      .def_readonly("df", &NoiseModel::df)
      .def("variance", &NoiseModel::variance);
  m.def("noise_sample", &noise_sample, py::arg("noise"), py::arg("count"), py::arg("seed"));

  py::class_<ObservationSet>(m, "ObservationSet")
      .def(py::init(&make_observations), py::arg("m1"), py::arg("m2"), py::arg("rows"), py::arg("cols"),
           py::arg("y"))
      .def_property_readonly("n", &ObservationSet::n)
      .def_property_readonly("dims", [](const ObservationSet& o) { return o.dims; })
      .def("max_multiplicity", &ObservationSet::max_multiplicity)
      .def_property_readonly("rows",
                             [](const ObservationSet& o) {
                               std::vector<std::uint32_t> v;
                               for (const auto& r : o.records) v.push_back(r.row);
                               return v;
                             })
      .def_property_readonly("cols",
                             [](const ObservationSet& o) {
                               std::vector<std::uint32_t> v;
                               for (const auto& r : o.records) v.push_back(r.col);
                               return v;
                             })
      .def_property_readonly("y", [](const ObservationSet& o) {
        std::vector<double> v;
        for (const auto& r : o.records) v.push_back(r.y);
        return v;
      });
  m.def("sample_observations",
        py::overload_cast<const Matrix&, const SamplingDistribution&, const NoiseModel&, std::size_t,
                          std::uint64_t>(&sample_observations),
        py::arg("A0"), py::arg("P"), py::arg("noise"), py::arg("n"), py::arg("seed"));

  py::class_<LossKind>(m, "LossKind")
      .def_static("squared", &LossKind::squared)
      .def_static("huber", &LossKind::huber)
      .def_readonly("tau", &LossKind::tau);
  m.def("huber_value", &huber_value);
  m.def("huber_grad", &huber_grad);
  m.def("empirical_loss", &empirical_loss);
  m.def("empirical_gradient", &empirical_gradient);
  m.def("svt", py::overload_cast<const Matrix&, double>(&svt));
  m.def("project_inf_ball", &project_inf_ball);
  m.def(
      "prox_nuclear_inf",
      [](const Matrix& A, double lambda, double a, int iters, double tol) {
        return prox_nuclear_inf(A, ProxParams{lambda, a, iters, tol});
      },
      py::arg("A"), py::arg("lam"), py::arg("a"), py::arg("dykstra_iters") = 200, py::arg("dykstra_tol") = 1e-10);
  m.def("prox_objective", &prox_objective);

  py::enum_<Estimator>(m, "Estimator")
      .value("LeastSquares", Estimator::LeastSquares)
      .value("Huber", Estimator::Huber)
      .value("SquareRoot", Estimator::SquareRoot);
  py::enum_<TuningMode>(m, "TuningMode")
      .value("Explicit", TuningMode::Explicit)
      .value("TheoremRule", TuningMode::TheoremRule)
      .value("Pilot", TuningMode::Pilot);

  py::class_<EstimatorSpec>(m, "EstimatorSpec")
      .def(py::init<>())
      .def_readwrite("estimator", &EstimatorSpec::estimator)
      .def_readwrite("lam", &EstimatorSpec::lambda)
      .def_readwrite("tau", &EstimatorSpec::tau)
      .def_readwrite("a", &EstimatorSpec::a)
      .def_readwrite("mode", &EstimatorSpec::mode)
      .def_readwrite("C", &EstimatorSpec::C);

  py::class_<SolverConfig>(m, "SolverConfig")
      .def(py::init<>())
      .def_readwrite("max_iters", &SolverConfig::maxIters)
      .def_readwrite("tol_rel_objective", &SolverConfig::tolRelObjective)
      .def_readwrite("tol_kkt", &SolverConfig::tolKKT)
      .def_readwrite("sqrt_outer_iters", &SolverConfig::sqrtOuterIters);

  py::class_<SolveResult>(m, "SolveResult")
      .def_readonly("estimate", &SolveResult::estimate)
      .def_readonly("iterations", &SolveResult::iterations)
      .def_readonly("converged", &SolveResult::converged)
      .def_readonly("objective_trace", &SolveResult::objectiveTrace)
      .def_readonly("kkt_residual", &SolveResult::kktResidual)
      .def_readonly("sigma_hat", &SolveResult::sigmaHat)
      .def_readonly("lam", &SolveResult::lambda)
      .def_readonly("tau", &SolveResult::tau)
      .def_readonly("effective_lambda", &SolveResult::effectiveLambda);

  m.def(
      "tune_from_theorem",
      [](const EstimatorSpec& spec, std::size_t m1, std::size_t m2, std::size_t n, std::optional<double> sigma,
         double a) {
        const Tuning t = tune_from_theorem(spec, Dims(m1, m2), n, sigma, a);
        return py::make_tuple(t.lambda, t.tau);
      },
      py::arg("spec"), py::arg("m1"), py::arg("m2"), py::arg("n"), py::arg("sigma"), py::arg("a"));
  m.def("pilot_lambda", &pilot_lambda, py::arg("P"), py::arg("noise"), py::arg("n"), py::arg("tau"),
        py::arg("reps") = 200, py::arg("quantile") = 0.95, py::arg("seed") = 0);
  m.def("resolve_tuning", &resolve_tuning);
  m.def("fit", &fit, py::arg("obs"), py::arg("spec"), py::arg("config") = SolverConfig{},
        py::arg("init") = std::nullopt);
  m.def("kkt_residual", &kkt_residual);

  py::class_<MultiplierFamily>(m, "MultiplierFamily")
      .def_static("rademacher", &MultiplierFamily::rademacher)
      .def_static("noise_family", &MultiplierFamily::noise_family)
      .def_static("truncated", &MultiplierFamily::truncated)
      .def_static("indicator", &MultiplierFamily::indicator)
      .def_readonly("second_moment_bound", &MultiplierFamily::secondMomentBound)
      .def_readonly("abs_bound", &MultiplierFamily::absBound);
  py::class_<ConcentrationParams>(m, "ConcentrationParams")
      .def_readonly("gamma", &ConcentrationParams::gamma)
      .def_readonly("gamma_star", &ConcentrationParams::gammaStar)
      .def_readonly("g", &ConcentrationParams::g)
      .def_readonly("R", &ConcentrationParams::R);
  m.def("closed_form_params", &closed_form_params);
  m.def("sharp_tail_threshold", &sharp_tail_threshold);
  m.def("sharp_expectation_bound", &sharp_expectation_bound);
  m.def("bernstein_expectation_bound", &bernstein_expectation_bound);
  m.def(
      "empirical_spectral_norm",
      [](const SamplingDistribution& P, const MultiplierFamily& f, std::size_t n, int reps, std::uint64_t seed) {
        return empirical_spectral_norm(P, f, n, reps, seed).samples;
      },
      py::arg("P"), py::arg("family"), py::arg("n"), py::arg("reps"), py::arg("seed"));
  m.def("max_psi_alpha_bound", &max_psi_alpha_bound);
  m.def("truncated_variance_check", [](const NoiseModel& noise, double y, std::size_t samples, std::uint64_t seed) {
    const TruncatedVarianceReport r = truncated_variance_check(noise, y, samples, seed);
    return py::make_tuple(r.empiricalVar, r.bound, r.pass);
  });
  m.def(
      "concentration_report_json",
      [](const SamplingDistribution& P, const MultiplierFamily& f, std::size_t n, int reps, std::uint64_t seed,
         double C) { return report_to_json(concentration_report(P, f, n, reps, seed, C)); },
      py::arg("P"), py::arg("family"), py::arg("n"), py::arg("reps"), py::arg("seed"), py::arg("C") = 1.0);

  py::class_<PowerLawFit>(m, "PowerLawFit")
      .def_readonly("slope", &PowerLawFit::slope)
      .def_readonly("intercept", &PowerLawFit::intercept)
      .def_readonly("r_squared", &PowerLawFit::rSquared)
      .def_readonly("point_count", &PowerLawFit::pointCount);
  m.def("fit_power_law",
        py::overload_cast<const std::vector<double>&, const std::vector<double>&>(&fit_power_law));
}
