#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "pogp/data.hpp"
#include "pogp/gp.hpp"

namespace pogp {

struct BoundConfig {
  /// Failure probability of the band.
  double delta = 0.05;
  /// Covering radius; chosen by minimizing the mean half-width when absent.
  std::optional<double> tau;
  /// Support of the observational covariates.
  Box support;
  /// Lipschitz constant of the correction function; heuristic default when absent.
  std::optional<double> lipschitz_f;
  /// Seed for the Lipschitz heuristic's prior draws.
  std::uint64_t seed = 0;
};

struct BandPoint {
  Vector x;
  /// Point estimate of the CATE the band is centred on.
  double center = 0.0;
  double sigma = 0.0;
  double half_width = 0.0;
};

struct UniformBoundReport {
  double delta = 0.0;
  double tau = 0.0;
  double beta = 0.0;
  double log_covering = 0.0;
  /// Empty when the covering number exceeds 64 bits.
  std::optional<std::uint64_t> covering;
  double lipschitz_kernel = 0.0;
  double lipschitz_mean = 0.0;
  double lipschitz_f = 0.0;
  double omega_sigma = 0.0;
  double gamma = 0.0;
  std::vector<BandPoint> per_point;
};

/// L_k sqrt(n) |alpha|, a Lipschitz bound for the posterior mean of the gap.
double posterior_mean_lipschitz(const PosteriorState& state);

/// sqrt(2 tau L_k (1 + n |K^{-1}| s^2)), bounding |sigma(x) - sigma(x')| for |x - x'| <= tau.
double modulus_of_continuity(const PosteriorState& state, double tau);

/// Three times the largest empirical slope of three prior draws of the gap
/// process, each sampled densely along random segments through the box.
double default_lipschitz_f(const SeKernel& gap_kernel, const Box& support, std::uint64_t seed);

/// Half-widths B(x) = sqrt(beta) sigma(x) + gamma at each query row.
/// Throws QueryOutsideSupport for rows outside cfg.support.
UniformBoundReport uniform_band(const PosteriorState& state, const ObservationalModel& obs_model,
                                const BoundConfig& cfg, const Matrix& queries);

nlohmann::json to_json(const UniformBoundReport& report);

}  // namespace pogp
