#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pogp/errors.hpp"
#include "pogp/hardness.hpp"
#include "pogp/model_io.hpp"
#include "pogp/pseudo_outcome.hpp"
#include "pogp/runner.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace pogp;

namespace {

py::dict dataset_dict(const Dataset& d) {
  py::dict out;
  out["x"] = d.covariates();
  out["t"] = d.treatments();
  out["y"] = d.outcomes();
  return out;
}

py::dict simulate(const std::string& sim_json) {
  const auto data = generate(sim_config_from_json(json::parse(sim_json)));
  py::dict out;
  out["obs"] = dataset_dict(data.obs);
  out["exp"] = dataset_dict(data.exp);
  out["in_distribution"] = py::dict(py::arg("x") = data.truth.in_distribution.x,
                                    py::arg("cate") = data.truth.in_distribution.cate);
  out["out_of_distribution"] = py::dict(py::arg("x") = data.truth.out_of_distribution.x,
                                        py::arg("cate") = data.truth.out_of_distribution.cate);
  return out;
}

Vector pseudo_outcomes(const std::vector<int>& t, const Vector& y, double pi) {
  if (static_cast<Eigen::Index>(t.size()) != y.size()) {
    throw Error(ErrorKind::DimensionMismatch, "t and y differ in length");
  }
  Vector out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) out[i] = ipw_weight(t[static_cast<size_t>(i)], pi) * y[i];
  return out;
}

/// Fits on (x, t, y) with residual targets pseudo_y - obs_gap.
std::string fit_model(const Matrix& x, const std::vector<int>& t, const Vector& y, double pi,
                      const std::string& model, const std::optional<Vector>& obs_gap,
                      const std::string& optimizer_json) {
  const Dataset exp(x, t, y, Environment::Experimental);
  const Vector gap = obs_gap.value_or(Vector::Zero(y.size()));
  if (gap.size() != y.size()) throw Error(ErrorKind::DimensionMismatch, "obs_gap and y differ in length");
  auto samples = ipw_transform(exp, PropensityModel::constant(pi), ObservationalModel::zero());
  for (size_t i = 0; i < samples.size(); ++i) samples[i].target_residual -= gap[static_cast<Eigen::Index>(i)];
  const auto opt = optimizer_from_json(json::parse(optimizer_json));
  const GpModel fitted = fit(initial_model(model_from_string(model), samples, pi), opt);
  return to_json(FittedModel{fitted, ObservationalModel::zero()}).dump();
}

py::dict predict_model(const std::string& model_json, const Matrix& x, const std::optional<Vector>& obs_gap,
                       double z) {
  const auto fitted = fitted_model_from_json(json::parse(model_json));
  const auto preds = predict_batch(posterior(fitted.model), fitted.obs_model, x, z);
  const Vector gap = obs_gap.value_or(Vector::Zero(x.rows()));
  if (gap.size() != x.rows()) throw Error(ErrorKind::DimensionMismatch, "obs_gap and x differ in length");
  const auto n = static_cast<Eigen::Index>(preds.size());
  Vector mean(n), std(n), low(n), high(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = preds[static_cast<size_t>(i)];
    mean[i] = p.mean_cate + gap[i];
    std[i] = p.std;
    low[i] = p.credible_low + gap[i];
    high[i] = p.credible_high + gap[i];
  }
  return py::dict(py::arg("mean") = mean, py::arg("std") = std, py::arg("low") = low, py::arg("high") = high);
}

std::string experiment(const std::string& config_json) {
  const auto table = run_experiment(experiment_config_from_json(json::parse(config_json)));
  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"model", to_string(r.model)},
                    {"grid", r.grid},
                    {"mse", r.mse.mean},
                    {"mse_se", r.mse.se},
                    {"coverage", r.coverage.mean},
                    {"coverage_se", r.coverage.se},
                    {"width", r.width.mean},
                    {"width_se", r.width.se}});
  }
  return rows.dump();
}

std::string bound_study(const std::string& config_json) {
  const auto study = run_bound_study(experiment_config_from_json(json::parse(config_json)));
  json rows = json::array();
  for (const auto& r : study.rows) {
    rows.push_back({{"n_e", r.n_e},
                    {"coverage", r.coverage.mean},
                    {"width_in", r.width_in.mean},
                    {"width_out", r.width_out.mean},
                    {"replications", r.replications_used}});
  }
  return rows.dump();
}

std::string power_curve(double band, const std::vector<int>& n_list, int trials, std::uint64_t seed, double alpha,
                        double outcome_bound) {
  BaseDistribution base;
  const EquivalenceTest test(alpha, [band](const Vector&) { return -band; }, [band](const Vector&) { return band; },
                             base.support);
  return to_json(power_collapse_curve(test, base, n_list, trials, seed, outcome_bound)).dump();
}

}  // namespace

PYBIND11_MODULE(_pogp, m) {
  m.doc() = "Pseudo-outcome GP estimation of conditional treatment effects";
  py::register_exception<Error>(m, "PogpError");
  m.def("simulate", &simulate, py::arg("sim_json"));
  m.def("pseudo_outcomes", &pseudo_outcomes, py::arg("t"), py::arg("y"), py::arg("propensity"));
  m.def("fit_model", &fit_model, py::arg("x"), py::arg("t"), py::arg("y"), py::arg("propensity"), py::arg("model"),
        py::arg("obs_gap"), py::arg("optimizer_json"));
  m.def("predict_model", &predict_model, py::arg("model_json"), py::arg("x"), py::arg("obs_gap"), py::arg("z"));
  m.def("experiment", &experiment, py::arg("config_json"));
  m.def("bound_study", &bound_study, py::arg("config_json"));
  m.def("power_curve", &power_curve, py::arg("band"), py::arg("n_list"), py::arg("trials"), py::arg("seed"),
        py::arg("alpha"), py::arg("outcome_bound"));
}
