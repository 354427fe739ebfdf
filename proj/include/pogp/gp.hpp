#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pogp/kernels.hpp"
#include "pogp/numerics.hpp"
#include "pogp/pseudo_outcome.hpp"

namespace pogp {

/// Gradient-ascent settings for marginal-likelihood fitting.
struct OptimizerSettings {
  double step_size = 0.1;
  int max_iters = 500;
  double grad_tol = 1e-4;
  /// Random restarts in addition to the median-heuristic start.
  int restarts = 3;
  std::uint64_t seed = 0;
};

struct ConvergenceReport {
  double final_mll = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int best_restart = 0;
  int failed_restarts = 0;
  bool converged = false;
};

/// GP over pseudo-outcome residuals y_i = pseudo_y_i - omega_hat_o(x_i)
/// observed on arm tasks t_i in {0, 1}.
class GpModel {
 public:
  GpModel(MultitaskKernel kernel, NoiseParams noise, std::vector<TaskPoint> points, Vector targets);

  static GpModel from_pseudo_samples(MultitaskKernel kernel, NoiseParams noise,
                                     std::span<const PseudoSample> samples);

  const MultitaskKernel& kernel() const { return kernel_; }
  const NoiseParams& noise() const { return noise_; }
  const std::vector<TaskPoint>& points() const { return points_; }
  const Vector& targets() const { return targets_; }
  Eigen::Index size() const { return targets_.size(); }

  /// Free log-space hyperparameters; the set depends on the kernel variant:
  ///   naive:        log s, log l, log sigma (shared by both arms)
  ///   pseudo_fixed: log s_k, log l_k, log s_l, log l_l, log sigma0, log sigma1
  ///   lcm:          log l_k, log l_l, A0 (3), A1 (3), log sigma0, log sigma1
  /// LCM output scales are fixed at 1 because A0 and A1 carry the scale.
  Vector hyperparameters() const;
  void set_hyperparameters(const Vector& h);
  std::vector<std::string> hyperparameter_names() const;

  const std::optional<ConvergenceReport>& report() const { return report_; }
  void set_report(ConvergenceReport r) { report_ = r; }

 private:
  MultitaskKernel kernel_;
  NoiseParams noise_;
  std::vector<TaskPoint> points_;
  Vector targets_;
  std::optional<ConvergenceReport> report_;
};

double log_marginal_likelihood(const GpModel& model);

/// Analytic gradient in the order of GpModel::hyperparameters().
Vector mll_gradient(const GpModel& model);

/// Maximize the marginal likelihood over restarts. Deterministic given seed.
/// Throws AllRestartsFailed if every restart hits NotPositiveDefinite.
GpModel fit(const GpModel& model, const OptimizerSettings& settings);

/// Cached factorization of M_N + Sigma_N and alpha = (M_N + Sigma_N)^{-1} y_N.
class PosteriorState {
 public:
  explicit PosteriorState(GpModel model);

  const GpModel& model() const { return model_; }
  /// Empty when the model has no training data.
  const std::optional<CholeskyFactor>& chol() const { return chol_; }
  const Vector& alpha() const { return alpha_; }
  Eigen::Index size() const { return model_.size(); }

  /// Posterior mean and variance of the CATE-task gap at each row of `queries`.
  void gap_moments(const Matrix& queries, Vector& mean, Vector& variance) const;

 private:
  GpModel model_;
  std::optional<CholeskyFactor> chol_;
  Vector alpha_;
};

PosteriorState posterior(const GpModel& model);

inline constexpr double kZ95 = 1.959964;

struct CatePrediction {
  double mean_gap = 0.0;
  double std = 0.0;
  double mean_cate = 0.0;
  double credible_low = 0.0;
  double credible_high = 0.0;
};

CatePrediction predict(const PosteriorState& state, const ObservationalModel& obs_model, const Vector& x,
                       double z = kZ95);

std::vector<CatePrediction> predict_batch(const PosteriorState& state, const ObservationalModel& obs_model,
                                          const Matrix& queries, double z = kZ95);

/// Variances in [-1e-10, 0) clamp to 0; below that NegativeVariance is thrown.
inline constexpr double kVarianceClamp = 1e-10;

}  // namespace pogp
