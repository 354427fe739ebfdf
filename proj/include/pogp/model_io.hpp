#pragma once

#include <json.hpp>

#include "pogp/gp.hpp"

namespace pogp {

/// A fitted model with everything needed to predict: kernel variant,
/// hyperparameters, training points, targets and the observational gap model.
struct FittedModel {
  GpModel model;
  ObservationalModel obs_model;
};

/// Only constant propensities and ridge or zero observational models are
/// serializable; anything else raises ValidationError.
nlohmann::json to_json(const FittedModel& fitted);
FittedModel fitted_model_from_json(const nlohmann::json& j);

}  // namespace pogp
