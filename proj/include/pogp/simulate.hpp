#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pogp/data.hpp"
#include "pogp/kernels.hpp"

namespace pogp {

/// splitmix64 finalizer; derives independent stream seeds from one base seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Scrambled Halton points in [lower, upper]. Digit permutations are fixed by
/// `seed`, so the sequence is reproducible.
Matrix halton_points(Eigen::Index count, const Box& box, std::uint64_t seed = 0);

/// Rows of x with exact duplicates removed, in first-seen order.
Matrix unique_rows(const Matrix& x);

/// One draw of a zero-mean SE-kernel GP, realized on a grid and extended
/// off-grid by the posterior mean given the grid values.
class GpPriorSample {
 public:
  GpPriorSample() = default;
  GpPriorSample(SeKernel kernel, Matrix grid, Vector values, Vector weights);

  double operator()(const Vector& x) const;
  Vector evaluate(const Matrix& x) const;

  const Matrix& grid() const { return grid_; }
  const Vector& values() const { return values_; }
  const SeKernel& kernel() const { return kernel_; }

 private:
  SeKernel kernel_;
  Matrix grid_;
  Vector values_;
  Vector weights_;
  std::map<std::vector<double>, Eigen::Index> index_;
};

/// Throws ValidationError if the grid has duplicate rows, NotPositiveDefinite
/// if the jittered Gram cannot be factored.
GpPriorSample sample_gp_prior(const SeKernel& kernel, const Matrix& grid, std::uint64_t seed);

enum class Design { Synthetic, Ihdp, Robustness };

const char* to_string(Design d);
Design design_from_string(const std::string& s);

/// Coefficients of the synthetic outcome
///   mu(x, t) = linear * sum(x) + treat_linear * t * sum(x)
///            + quad * x_1^2 + treat_quad * t * x_1^2.
struct SyntheticOutcome {
  double linear = 1.0;
  double treat_linear = 1.0;
  double quad = 0.0;
  double treat_quad = 1.0;
};

struct SimConfig {
  Design design = Design::Synthetic;
  int d = 10;
  int n_o = 5000;
  int n_e = 1000;
  double treat_p = 0.5;
  /// Kernel of the cross-environment shift f_t.
  SeKernel gp_prior{};
  /// Standard deviation of the outcome noise.
  double noise_sigma0 = 0.5;
  std::uint64_t seed = 0;

  SyntheticOutcome synthetic;

  // IHDP-style designs.
  /// Empty: use the bundled surrogate covariates.
  std::string covariate_source;
  std::string smoker_column = "cig";
  std::string male_column = "sex";
  double weight_base = 0.8;
  double coefficient_density = 0.3;
  /// Multiplier on the squared-term coefficients of the robustness design.
  double squared_scale = 1.0;
  bool standardize = true;

  /// Quasi-random points added to the prior grid.
  int fill_points = 512;
  /// Points per evaluation grid.
  int eval_points = 1000;
};

struct EvalGrid {
  Matrix x;
  Vector cate;
};

/// Sparse linear coefficients of the IHDP-style outcome
///   mu(x, t) = main.x + treat.(t x) + main_sq.x^2 + treat_sq.(t x)^2.
struct LinearOutcome {
  Vector main;
  Vector treat;
  Vector main_sq;
  Vector treat_sq;
};

struct GroundTruth {
  std::function<double(const Vector&, int)> mean_outcome;  // observational mu(x, t)
  std::shared_ptr<const GpPriorSample> shift0;
  std::shared_ptr<const GpPriorSample> shift1;
  Box observational_box;
  Box experimental_box;
  EvalGrid in_distribution;
  EvalGrid out_of_distribution;
  std::optional<LinearOutcome> coefficients;

  double omega_o(const Vector& x) const { return mean_outcome(x, 1) - mean_outcome(x, 0); }
  /// f_1(x) - f_0(x).
  double shift(const Vector& x) const;
  double cate(const Vector& x) const { return omega_o(x) + shift(x); }
  /// Noiseless experimental outcome mean.
  double experimental_mean(const Vector& x, int t) const;
};

struct SimulatedData {
  Dataset obs;
  Dataset exp;
  GroundTruth truth;
};

SimulatedData generate_synthetic(const SimConfig& cfg);

/// `covariates` carries the covariate pool and its treatment column. Throws
/// SchemaError if the indicator columns are absent.
SimulatedData generate_ihdp(const SimConfig& cfg, const Dataset& covariates);

/// generate_ihdp with squared terms added to the outcome.
SimulatedData generate_robustness(const SimConfig& cfg, const Dataset& covariates);

/// Dispatch on cfg.design, loading or synthesizing covariates as needed.
SimulatedData generate(const SimConfig& cfg);

/// Per-row sampling weights weight_base^(smoker + male).
Vector ihdp_weights(const Dataset& covariates, const SimConfig& cfg);

/// 985 x 28 stand-in for the IHDP covariates: 7 continuous columns, 21
/// binary columns (including `sex` and `cig`) and a treatment column.
Dataset ihdp_surrogate_covariates(std::uint64_t seed = 2024);

}  // namespace pogp
