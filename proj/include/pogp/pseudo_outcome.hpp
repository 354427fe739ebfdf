#pragma once

#include <array>
#include <vector>

#include "pogp/data.hpp"

namespace pogp {

/// One experimental row after the IPW transform.
struct PseudoSample {
  Vector covariates;
  int treatment = 0;
  double propensity = 0.5;
  /// ((t - pi) / (pi (1 - pi))) * y
  double pseudo_y = 0.0;
  /// pseudo_y - omega_hat_o(x); the GP regression target.
  double target_residual = 0.0;
};

/// IPW weight (t - pi) / (pi (1 - pi)).
double ipw_weight(int t, double pi);

/// Transform every experimental row. Throws OverlapViolation if pi(x) leaves
/// (delta, 1 - delta) on any row.
std::vector<PseudoSample> ipw_transform(const Dataset& exp, const PropensityModel& propensity,
                                        const ObservationalModel& obs_model);

/// Task mixing coefficients for tasks (t = 0, t = 1, CATE).
struct TaskCoefficients {
  std::array<double, 3> a;
  std::array<double, 3> b;
};

/// a = [1, 1, 1], b = [-1/(1 - pi), 1/pi, 0].
TaskCoefficients task_coefficients(double pi_at_x);

}  // namespace pogp
