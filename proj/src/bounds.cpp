#include "pogp/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "pogp/errors.hpp"

namespace pogp {

namespace {

// The low end of the spectrum clusters at the noise floor, so the Rayleigh
// quotient settles long before the eigenvector does; 1e-7 is ample for the bound.
constexpr double kEigenTol = 1e-7;
constexpr int kEigenIters = 20000;

/// The CATE-task kernel whose Lipschitz constant enters the bounds.
const SeKernel& gap_kernel(const MultitaskKernel& kernel) {
  if (kernel.kind() == MultitaskKernel::Kind::LcmTrainable) {
    throw Error(ErrorKind::ValidationError, "uniform bands are defined for the naive and pseudo-outcome kernels");
  }
  return kernel.k();
}

struct BandConstants {
  double lk = 0.0;
  double lnu = 0.0;
  double inv_norm_term = 0.0;  // n |K^{-1}| s^2
};

BandConstants band_constants(const PosteriorState& state) {
  const SeKernel& k = gap_kernel(state.model().kernel());
  BandConstants c;
  c.lk = kernel_lipschitz(k);
  if (state.chol()) {
    const double n = static_cast<double>(state.size());
    c.lnu = c.lk * std::sqrt(n) * state.alpha().norm();
    c.inv_norm_term = n * inverse_spectral_norm(*state.chol(), kEigenTol, kEigenIters) * k.variance();
  }
  return c;
}

double omega(const BandConstants& c, double tau) { return std::sqrt(2.0 * tau * c.lk * (1.0 + c.inv_norm_term)); }

}  // namespace

double posterior_mean_lipschitz(const PosteriorState& state) {
  const SeKernel& k = gap_kernel(state.model().kernel());
  if (!state.chol()) return 0.0;
  return kernel_lipschitz(k) * std::sqrt(static_cast<double>(state.size())) * state.alpha().norm();
}

double modulus_of_continuity(const PosteriorState& state, double tau) {
  if (!(tau >= 0.0)) throw Error(ErrorKind::ValidationError, "tau must be nonnegative");
  return omega(band_constants(state), tau);
}

double default_lipschitz_f(const SeKernel& gap, const Box& support, std::uint64_t seed) {
  constexpr int kDraws = 3;
  constexpr int kSegments = 16;
  constexpr int kPoints = 65;
  if (gap.variance() == 0.0) return 0.0;
  // The kernel is isotropic and stationary, so a path sampled along any
  // segment has the law of a 1-d draw over the segment's arc length.
  const double length = std::min(support.diameter(), 4.0 * gap.lengthscale());
  const double step = length / (kPoints - 1);
  Matrix g(kPoints, kPoints);
  for (int i = 0; i < kPoints; ++i)
    for (int j = 0; j < kPoints; ++j) g(i, j) = gap.from_squared_distance(std::pow((i - j) * step, 2));
  // Eigen-decomposition gives an exact square root for this near-singular Gram.
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
  const Matrix root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  double best = 0.0;
  for (int draw = 0; draw < kDraws; ++draw) {
    double slope = 0.0;
    for (int s = 0; s < kSegments; ++s) {
      Vector e(kPoints);
      for (auto& v : e) v = z(rng);
      const Vector path = root * e;
      for (int i = 1; i < kPoints; ++i) slope = std::max(slope, std::abs(path[i] - path[i - 1]) / step);
    }
    best = std::max(best, slope);
  }
  return 3.0 * best;
}

UniformBoundReport uniform_band(const PosteriorState& state, const ObservationalModel& obs_model,
                                const BoundConfig& cfg, const Matrix& queries) {
  if (!(cfg.delta > 0.0 && cfg.delta <= 1.0)) throw Error(ErrorKind::ValidationError, "delta must lie in (0, 1]");
  if (cfg.support.lower.size() != queries.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "support box and queries differ in dimension");
  }
  const double slack = 1e-9 * std::max(1.0, cfg.support.diameter());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    if (!cfg.support.contains(queries.row(i).transpose(), slack)) {
      throw Error(ErrorKind::QueryOutsideSupport, "query row " + std::to_string(i) + " lies outside the support box");
    }
  }
  const SeKernel& gap = gap_kernel(state.model().kernel());
  const BandConstants c = band_constants(state);
  const Vector sides = cfg.support.side_lengths();
  const std::span<const double> side_span(sides.data(), static_cast<size_t>(sides.size()));

  UniformBoundReport r;
  r.delta = cfg.delta;
  r.lipschitz_kernel = c.lk;
  r.lipschitz_mean = c.lnu;
  r.lipschitz_f = cfg.lipschitz_f ? *cfg.lipschitz_f : default_lipschitz_f(gap, cfg.support, cfg.seed);
  if (!(r.lipschitz_f >= 0.0)) throw Error(ErrorKind::ValidationError, "lipschitz_f must be nonnegative");

  Vector mean, var;
  state.gap_moments(queries, mean, var);
  const Vector sigma = var.cwiseSqrt();
  const double mean_sigma = sigma.size() > 0 ? sigma.mean() : 0.0;

  auto beta_at = [&](double tau) {
    return 2.0 * (log_covering_number_hypercube(side_span, tau) - std::log(cfg.delta));
  };
  auto gamma_at = [&](double tau, double beta) {
    return (c.lnu + r.lipschitz_f) * tau + std::sqrt(beta) * omega(c, tau);
  };
  auto objective = [&](double log_tau) {
    const double tau = std::exp(log_tau);
    const double beta = beta_at(tau);
    return std::sqrt(beta) * mean_sigma + gamma_at(tau, beta);
  };

  if (cfg.tau) {
    if (!(*cfg.tau > 0.0)) throw Error(ErrorKind::ValidationError, "tau must be positive");
    r.tau = *cfg.tau;
  } else {
    // Coarse scan to bracket (the covering number makes the objective a step
    // function), then golden-section refinement inside the bracket.
    const double diam = cfg.support.diameter();
    // gamma vanishes like sqrt(tau) while beta grows only like log(1/tau), so
    // the optimum can sit many decades below the diameter.
    const double lo = std::log(diam * 1e-12), hi = std::log(diam);
    constexpr int kScan = 128;
    int best = 0;
    double best_val = objective(lo);
    for (int i = 1; i <= kScan; ++i) {
      const double v = objective(lo + (hi - lo) * i / kScan);
      if (v < best_val) {
        best_val = v;
        best = i;
      }
    }
    double a = lo + (hi - lo) * std::max(best - 1, 0) / kScan;
    double b = lo + (hi - lo) * std::min(best + 1, kScan) / kScan;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = objective(x1), f2 = objective(x2);
    for (int it = 0; it < 60; ++it) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - g * (b - a);
        f1 = objective(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + g * (b - a);
        f2 = objective(x2);
      }
    }
    const double cand = f1 <= f2 ? x1 : x2;
    r.tau = std::exp(objective(cand) <= best_val ? cand : lo + (hi - lo) * best / kScan);
  }

  r.log_covering = log_covering_number_hypercube(side_span, r.tau);
  try {
    r.covering = covering_number_hypercube(side_span, r.tau);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Overflow) throw;
  }
  r.beta = beta_at(r.tau);
  r.omega_sigma = omega(c, r.tau);
  r.gamma = gamma_at(r.tau, r.beta);
  const double root_beta = std::sqrt(r.beta);
  r.per_point.reserve(static_cast<size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const Vector x = queries.row(i).transpose();
    r.per_point.push_back(
        BandPoint{x, obs_model.predict_gap(x) + mean[i], sigma[i], root_beta * sigma[i] + r.gamma});
  }
  return r;
}

nlohmann::json to_json(const UniformBoundReport& r) {
  nlohmann::json j;
  j["delta"] = r.delta;
  j["tau"] = r.tau;
  j["beta"] = r.beta;
  j["log_covering"] = r.log_covering;
  j["covering"] = r.covering ? nlohmann::json(*r.covering) : nlohmann::json(nullptr);
  j["lipschitz_kernel"] = r.lipschitz_kernel;
  j["lipschitz_mean"] = r.lipschitz_mean;
  j["lipschitz_f"] = r.lipschitz_f;
  j["omega_sigma"] = r.omega_sigma;
  j["gamma"] = r.gamma;
  auto& pts = j["per_point"] = nlohmann::json::array();
  for (const auto& p : r.per_point) {
    nlohmann::json row = nlohmann::json::array();
    for (double v : p.x) row.push_back(v);
    row.push_back(p.half_width);
    pts.push_back(std::move(row));
  }
  return j;
}

}  // namespace pogp
