#include "pogp/pseudo_outcome.hpp"

#include "pogp/errors.hpp"

namespace pogp {

double ipw_weight(int t, double pi) { return (static_cast<double>(t) - pi) / (pi * (1.0 - pi)); }

std::vector<PseudoSample> ipw_transform(const Dataset& exp, const PropensityModel& propensity,
                                        const ObservationalModel& obs_model) {
  if (exp.environment() != Environment::Experimental) {
    throw Error(ErrorKind::ValidationError, "ipw_transform expects an experimental dataset");
  }
  std::vector<PseudoSample> out;
  out.reserve(static_cast<size_t>(exp.size()));
  for (Eigen::Index i = 0; i < exp.size(); ++i) {
    PseudoSample s;
    s.covariates = exp.row(i);
    s.treatment = exp.treatments()[i];
    s.propensity = propensity(s.covariates);
    s.pseudo_y = ipw_weight(s.treatment, s.propensity) * exp.outcomes()[i];
    s.target_residual = s.pseudo_y - obs_model.predict_gap(s.covariates);
    out.push_back(std::move(s));
  }
  return out;
}

TaskCoefficients task_coefficients(double pi) {
  return TaskCoefficients{{1.0, 1.0, 1.0}, {-1.0 / (1.0 - pi), 1.0 / pi, 0.0}};
}

}  // namespace pogp
