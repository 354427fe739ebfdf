#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pogp/numerics.hpp"

namespace pogp {

enum class Environment { Observational, Experimental };

const char* to_string(Environment env);

/// Covariates, binary treatments and outcomes from one environment.
///
/// Invariants (checked on construction): n >= 1, all entries finite,
/// treatments in {0, 1}.
class Dataset {
 public:
  Dataset(Matrix covariates, std::vector<int> treatments, Vector outcomes, Environment environment,
          std::vector<std::string> covariate_names = {});

  Eigen::Index size() const { return covariates_.rows(); }
  Eigen::Index dim() const { return covariates_.cols(); }

  const Matrix& covariates() const { return covariates_; }
  const std::vector<int>& treatments() const { return treatments_; }
  const Vector& outcomes() const { return outcomes_; }
  Environment environment() const { return environment_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  Vector row(Eigen::Index i) const { return covariates_.row(i).transpose(); }

  /// Index of a named covariate column, or nullopt.
  std::optional<Eigen::Index> column_index(const std::string& name) const;

  Dataset with_outcomes(Vector outcomes) const;
  Dataset with_covariates(Matrix covariates) const;

  /// Rows with the given treatment.
  std::vector<Eigen::Index> arm_rows(int t) const;

 private:
  Matrix covariates_;
  std::vector<int> treatments_;
  Vector outcomes_;
  Environment environment_;
  std::vector<std::string> names_;
};

/// Column mapping for CSV ingestion.
struct CsvSchema {
  /// Empty: treatments are zero-filled (covariate-only files).
  std::string treatment_column = "t";
  /// Absent: outcomes are zero-filled (covariate-only files).
  std::optional<std::string> outcome_column;
  /// Empty: every column other than treatment/outcome is a covariate.
  std::vector<std::string> covariate_columns;
  Environment environment = Environment::Observational;
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes header `t,y,<covariate names>` with round-trip precision.
void write_csv(const std::filesystem::path& path, const Dataset& data);

/// Known propensity pi(x) = P(T = 1 | x, E = e) with a strict-overlap margin.
class PropensityModel {
 public:
  using Function = std::function<double(const Vector&)>;

  static PropensityModel constant(double p, double overlap_delta = 0.01);
  static PropensityModel tabulated(Function fn, double overlap_delta = 0.01);

  bool is_constant() const { return !fn_; }
  double overlap_delta() const { return delta_; }

  /// pi(x); throws OverlapViolation outside (delta, 1 - delta).
  double operator()(const Vector& x) const;

  /// Constant value; only meaningful when is_constant().
  double constant_value() const { return p_; }

 private:
  PropensityModel(double p, Function fn, double delta);
  double p_ = 0.5;
  Function fn_;
  double delta_ = 0.01;
};

/// Per-arm ridge coefficients: mu_t(x) = intercept[t] + slope[t]^T x.
struct RidgeCoefficients {
  double intercept[2] = {0.0, 0.0};
  Vector slope[2];
  double lambda = 0.0;
};

/// Fitted observational gap omega_hat_o(x) = mu_1(x) - mu_0(x).
class ObservationalModel {
 public:
  using Function = std::function<double(const Vector&)>;

  static ObservationalModel oracle(Function gap);
  static ObservationalModel ridge(RidgeCoefficients coefs);
  /// omega_hat_o == 0.
  static ObservationalModel zero();

  double predict_gap(const Vector& x) const;
  /// mu_t(x) for the ridge variant.
  double predict_arm(const Vector& x, int t) const;

  bool is_ridge() const { return ridge_.has_value(); }
  const RidgeCoefficients& coefficients() const;

 private:
  Function gap_;
  std::optional<RidgeCoefficients> ridge_;
};

/// Ridge regression per treatment arm with an unpenalized intercept.
ObservationalModel fit_observational_ridge(const Dataset& obs, double lambda);

/// prod_j ceil(1 + r_j / tau); throws Overflow beyond uint64.
std::uint64_t covering_number_hypercube(std::span<const double> side_lengths, double tau);

/// log of covering_number_hypercube, finite for any box and tau.
double log_covering_number_hypercube(std::span<const double> side_lengths, double tau);

/// Column-wise z-scoring. Constant columns are centred only.
struct Standardizer {
  Vector mean;
  Vector scale;
  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

/// Axis-aligned box [lower, upper].
struct Box {
  Vector lower;
  Vector upper;

  static Box cube(Eigen::Index d, double lo, double hi);
  static Box bounding(const Matrix& x);
  Eigen::Index dim() const { return lower.size(); }
  Vector side_lengths() const { return upper - lower; }
  bool contains(const Vector& x, double slack = 0.0) const;
  double volume() const;
  double diameter() const { return side_lengths().norm(); }
};

}  // namespace pogp
