#pragma once

#include <optional>
#include <span>

#include <Eigen/Core>

#include "pogp/data.hpp"
#include "pogp/numerics.hpp"

namespace pogp {

/// Task indices of the vector-valued GP. The CATE task is prediction-only.
inline constexpr int kControlTask = 0;
inline constexpr int kTreatedTask = 1;
inline constexpr int kCateTask = 2;

struct TaskPoint {
  Vector x;
  int task = kCateTask;
};

/// Isotropic squared-exponential kernel s^2 exp(-|x - x'|^2 / (2 l^2)),
/// parameterized in log space.
struct SeKernel {
  double log_output_scale = 0.0;
  double log_lengthscale = 0.0;

  static SeKernel natural(double output_scale, double lengthscale);

  double output_scale() const;
  double lengthscale() const;
  double variance() const;
  double from_squared_distance(double r2) const;
};

double kernel_eval(const SeKernel& k, const Vector& x, const Vector& xp);

/// s^2 e^{-1/2} / l, the maximum of |dk/dr|.
double kernel_lipschitz(const SeKernel& k);

/// PSD 2x2 task-mixing matrix A = L L^T with L = [[e^u, 0], [v, e^w]].
struct Coregionalization {
  double log_l00 = 0.0;
  double l10 = 0.0;
  double log_l11 = 0.0;

  static Coregionalization from_matrix(const Eigen::Matrix2d& a);
  Eigen::Matrix2d matrix() const;
  /// dA / d(parameter i), i in {0: log_l00, 1: l10, 2: log_l11}.
  Eigen::Matrix2d derivative(int i) const;
};

/// Per-arm observation noise standard deviations, in log space.
struct NoiseParams {
  double log_sigma0 = 0.0;
  double log_sigma1 = 0.0;

  static NoiseParams natural(double sigma0, double sigma1);
  double sigma(int t) const;
  double variance(int t) const;
};

/// Multitask kernel over (x, task) pairs for the three model variants.
///
/// Every variant is written as
///   K((x,t), (x',t')) = p^T A_k p' k(x,x') + q^T A_l q' l(x,x')
/// with 2-vector loadings p, q per point; see loadings().
class MultitaskKernel {
 public:
  enum class Kind { Naive, PseudoFixed, LcmTrainable };

  static MultitaskKernel naive(SeKernel k);
  static MultitaskKernel pseudo_fixed(SeKernel k, SeKernel l, PropensityModel propensity);
  static MultitaskKernel lcm_trainable(SeKernel k, SeKernel l, Coregionalization a0, Coregionalization a1,
                                       PropensityModel propensity);

  Kind kind() const { return kind_; }
  const SeKernel& k() const { return k_; }
  const SeKernel& l() const { return l_; }
  SeKernel& k() { return k_; }
  SeKernel& l() { return l_; }
  const Coregionalization& a0() const { return a0_; }
  const Coregionalization& a1() const { return a1_; }
  Coregionalization& a0() { return a0_; }
  Coregionalization& a1() { return a1_; }
  const PropensityModel& propensity() const { return propensity_; }

  struct Loadings {
    Eigen::Vector2d k;
    Eigen::Vector2d l;
  };
  Loadings loadings(const Vector& x, int task) const;
  Eigen::Matrix2d k_mixing() const;
  Eigen::Matrix2d l_mixing() const;

  /// Prior variance of the CATE task at x.
  double cate_prior_variance(const Vector& x) const;

 private:
  MultitaskKernel(Kind kind, SeKernel k, SeKernel l, PropensityModel propensity)
      : kind_(kind), k_(k), l_(l), propensity_(std::move(propensity)) {}

  Kind kind_;
  SeKernel k_;
  SeKernel l_;
  Coregionalization a0_;
  Coregionalization a1_;
  PropensityModel propensity_;
};

const char* to_string(MultitaskKernel::Kind kind);

/// Throws InvalidTask for tasks outside {0, 1, 2}.
double task_kernel_eval(const MultitaskKernel& kernel, const TaskPoint& p, const TaskPoint& q);

/// Pairwise task_kernel_eval; with noise, adds sigma_t^2 on arm-task rows.
SpdMatrix gram_matrix(const MultitaskKernel& kernel, std::span<const TaskPoint> points,
                      const NoiseParams* noise = nullptr);

/// rows x cols matrix of task_kernel_eval.
Matrix cross_covariance(const MultitaskKernel& kernel, std::span<const TaskPoint> rows,
                        std::span<const TaskPoint> cols);

/// Pairwise squared Euclidean distances between rows of a and b.
Matrix squared_distances(const Matrix& a, const Matrix& b);

}  // namespace pogp
