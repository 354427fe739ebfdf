#include "pogp/model_io.hpp"

#include "pogp/errors.hpp"

namespace pogp {

using nlohmann::json;

namespace {

json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

MultitaskKernel kernel_of(const std::string& kind, double pi) {
  const auto prop = PropensityModel::constant(pi);
  if (kind == "naive") return MultitaskKernel::naive(SeKernel{});
  if (kind == "pseudo_fixed") return MultitaskKernel::pseudo_fixed(SeKernel{}, SeKernel{}, prop);
  if (kind == "lcm") return MultitaskKernel::lcm_trainable(SeKernel{}, SeKernel{}, {}, {}, prop);
  throw Error(ErrorKind::SchemaError, "unknown kernel kind '" + kind + "'");
}

const char* kind_name(MultitaskKernel::Kind k) {
  switch (k) {
    case MultitaskKernel::Kind::Naive:
      return "naive";
    case MultitaskKernel::Kind::PseudoFixed:
      return "pseudo_fixed";
    case MultitaskKernel::Kind::LcmTrainable:
      return "lcm";
  }
  return "?";
}

}  // namespace

json to_json(const FittedModel& f) {
  const auto& m = f.model;
  if (!m.kernel().propensity().is_constant()) {
    throw Error(ErrorKind::ValidationError, "only constant propensities can be serialized");
  }
  json points = json::array();
  for (const auto& p : m.points()) points.push_back({{"x", vec(p.x)}, {"task", p.task}});
  json hyper = json::object();
  const auto names = m.hyperparameter_names();
  const Vector h = m.hyperparameters();
  for (size_t i = 0; i < names.size(); ++i) hyper[names[i]] = h[static_cast<Eigen::Index>(i)];
  json obs;
  if (f.obs_model.is_ridge()) {
    const auto& c = f.obs_model.coefficients();
    obs = {{"kind", "ridge"},
           {"lambda", c.lambda},
           {"intercept", {c.intercept[0], c.intercept[1]}},
           {"slope", {vec(c.slope[0]), vec(c.slope[1])}}};
  } else {
    obs = {{"kind", "zero"}};
  }
  json out = {{"kernel", kind_name(m.kernel().kind())},
              {"propensity", m.kernel().propensity().constant_value()},
              {"hyperparameters", hyper},
              {"hyperparameter_vector", vec(h)},
              {"points", points},
              {"targets", vec(m.targets())},
              {"observational", obs}};
  if (m.report()) {
    const auto& r = *m.report();
    out["convergence"] = {{"final_mll", r.final_mll},     {"grad_norm", r.grad_norm},
                          {"iterations", r.iterations},   {"best_restart", r.best_restart},
                          {"failed_restarts", r.failed_restarts}, {"converged", r.converged}};
  }
  return out;
}

FittedModel fitted_model_from_json(const json& j) {
  try {
    std::vector<TaskPoint> points;
    for (const auto& p : j.at("points")) points.push_back({vec(p.at("x")), p.at("task").get<int>()});
    GpModel model(kernel_of(j.at("kernel").get<std::string>(), j.at("propensity").get<double>()), NoiseParams{},
                  std::move(points), vec(j.at("targets")));
    model.set_hyperparameters(vec(j.at("hyperparameter_vector")));
    const auto& o = j.at("observational");
    ObservationalModel obs = ObservationalModel::zero();
    if (o.at("kind") == "ridge") {
      RidgeCoefficients c;
      c.lambda = o.at("lambda").get<double>();
      for (int t = 0; t < 2; ++t) {
        c.intercept[t] = o.at("intercept").at(static_cast<size_t>(t)).get<double>();
        c.slope[t] = vec(o.at("slope").at(static_cast<size_t>(t)));
      }
      obs = ObservationalModel::ridge(std::move(c));
    } else if (o.at("kind") != "zero") {
      throw Error(ErrorKind::SchemaError, "unknown observational kind in model file");
    }
    return {std::move(model), std::move(obs)};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("malformed model file: ") + e.what());
  }
}

}  // namespace pogp
