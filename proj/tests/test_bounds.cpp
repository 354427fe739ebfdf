#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "pogp/bounds.hpp"
#include "pogp/errors.hpp"

namespace pogp {
namespace {

MultitaskKernel ours(double pi = 0.5) {
  return MultitaskKernel::pseudo_fixed(SeKernel::natural(1.0, 0.5), SeKernel::natural(0.5, 0.7),
                                       PropensityModel::constant(pi));
}

GpModel random_model(std::mt19937_64& rng, int n, int d, const MultitaskKernel& kern) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> z;
  std::vector<TaskPoint> pts;
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    Vector x(d);
    for (auto& v : x) v = u(rng);
    pts.push_back({x, i % 2});
    y[i] = std::sin(3 * x[0]) + 0.3 * z(rng);
  }
  return GpModel(kern, NoiseParams::natural(0.3, 0.4), pts, y);
}

TEST(PosteriorMeanLipschitz, ZeroTargets) {
  std::mt19937_64 rng(1);
  auto m = random_model(rng, 10, 2, ours());
  const GpModel zero(m.kernel(), m.noise(), m.points(), Vector::Zero(10));
  EXPECT_EQ(posterior_mean_lipschitz(posterior(zero)), 0.0);
}

TEST(PosteriorMeanLipschitz, SinglePointByHand) {
  const auto kern = ours();
  const GpModel m(kern, NoiseParams::natural(0.3, 0.4), {{Vector::Constant(1, 0.1), 1}}, Vector::Constant(1, 2.0));
  // Treated row at pi = 0.5: prior variance s_k^2 + b^2 s_l^2 + sigma_1^2 with b = 2.
  const double alpha = 2.0 / (1.0 + 4.0 * 0.25 + 0.16);
  const double lk = 1.0 * std::exp(-0.5) / 0.5;
  EXPECT_NEAR(posterior_mean_lipschitz(posterior(m)), lk * alpha, 1e-12);
}

TEST(PosteriorMeanLipschitz, DominatesEmpiricalSlopes) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.5, 1.5), small(-0.05, 0.05);
  for (int instance = 0; instance < 5; ++instance) {
    const int d = 1 + instance % 3;
    const auto state = posterior(random_model(rng, 30, d, ours()));
    const double bound = posterior_mean_lipschitz(state);
    Matrix a(2000, d), b(2000, d);
    for (int i = 0; i < 2000; ++i)
      for (int j = 0; j < d; ++j) {
        a(i, j) = u(rng);
        b(i, j) = a(i, j) + (i % 2 ? small(rng) : u(rng));
      }
    Vector ma, mb, va, vb;
    state.gap_moments(a, ma, va);
    state.gap_moments(b, mb, vb);
    for (int i = 0; i < 2000; ++i) {
      EXPECT_LE(std::abs(ma[i] - mb[i]) / (a.row(i) - b.row(i)).norm(), bound);
    }
  }
}

TEST(ModulusOfContinuity, Limits) {
  std::mt19937_64 rng(3);
  const auto state = posterior(random_model(rng, 12, 2, ours()));
  EXPECT_EQ(modulus_of_continuity(state, 0.0), 0.0);
  EXPECT_LT(modulus_of_continuity(state, 1e-14), 1e-5);
  const auto prior = posterior(GpModel(ours(), NoiseParams{}, {}, Vector(0)));
  const double lk = std::exp(-0.5) / 0.5;
  EXPECT_NEAR(modulus_of_continuity(prior, 0.3), std::sqrt(2 * 0.3 * lk), 1e-14);
}

TEST(ModulusOfContinuity, DominatesEmpiricalStdChanges) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.5, 1.5), unit(-1, 1);
  for (double tau : {0.01, 0.1, 0.5}) {
    const auto state = posterior(random_model(rng, 25, 2, ours()));
    const double bound = modulus_of_continuity(state, tau);
    Matrix a(3000, 2), b(3000, 2);
    for (int i = 0; i < 3000; ++i) {
      a.row(i) << u(rng), u(rng);
      Eigen::RowVector2d dir(unit(rng), unit(rng));
      b.row(i) = a.row(i) + tau * std::abs(unit(rng)) * dir.normalized();
    }
    Vector ma, mb, va, vb;
    state.gap_moments(a, ma, va);
    state.gap_moments(b, mb, vb);
    for (int i = 0; i < 3000; ++i) EXPECT_LE(std::abs(std::sqrt(va[i]) - std::sqrt(vb[i])), bound);
  }
}

BoundConfig unit_box(double delta, std::optional<double> tau) {
  BoundConfig cfg;
  cfg.delta = delta;
  cfg.tau = tau;
  cfg.support = Box::cube(1, -1.0, 1.0);
  cfg.lipschitz_f = 1.0;
  return cfg;
}

TEST(UniformBand, CoveringAndBetaExamples) {
  std::mt19937_64 rng(5);
  const auto state = posterior(random_model(rng, 8, 1, ours()));
  const Matrix q = Matrix::Constant(1, 1, 0.2);
  const auto r = uniform_band(state, ObservationalModel::zero(), unit_box(0.1, 1.0), q);
  ASSERT_TRUE(r.covering.has_value());
  EXPECT_EQ(*r.covering, 3u);
  EXPECT_NEAR(r.beta, 2.0 * std::log(30.0), 1e-12);
  const auto degenerate = uniform_band(state, ObservationalModel::zero(), unit_box(1.0, 1.0), q);
  EXPECT_NEAR(degenerate.beta, 2.0 * std::log(3.0), 1e-12);
  EXPECT_GT(degenerate.beta, 0.0);
}

TEST(UniformBand, StructureAndMonotonicityInDelta) {
  std::mt19937_64 rng(6);
  const auto state = posterior(random_model(rng, 20, 1, ours()));
  const Matrix q = Matrix::Random(50, 1);
  const auto obs = ObservationalModel::oracle([](const Vector& x) { return x[0]; });
  std::vector<double> previous;
  for (double delta : {0.01, 0.05, 0.2, 0.9}) {
    const auto r = uniform_band(state, obs, unit_box(delta, 0.05), q);
    EXPECT_GE(r.gamma, 0.0);
    EXPECT_GE(r.omega_sigma, 0.0);
    EXPECT_GE(r.lipschitz_mean, 0.0);
    for (size_t i = 0; i < r.per_point.size(); ++i) {
      const auto& p = r.per_point[i];
      EXPECT_GE(p.half_width, std::sqrt(r.beta) * p.sigma);
      if (!previous.empty()) EXPECT_LE(p.half_width, previous[i]);
    }
    previous.clear();
    for (const auto& p : r.per_point) previous.push_back(p.half_width);
  }
}

TEST(UniformBand, GammaTermsScaleAsTauAndRootTau) {
  std::mt19937_64 rng(7);
  const auto state = posterior(random_model(rng, 20, 2, ours()));
  // Regress log of each component on log tau over repeated halvings.
  std::vector<double> lt, lw, ll;
  double tau = 0.5;
  const double lnu = posterior_mean_lipschitz(state);
  for (int i = 0; i < 12; ++i, tau *= 0.5) {
    lt.push_back(std::log(tau));
    lw.push_back(std::log(modulus_of_continuity(state, tau)));
    ll.push_back(std::log((lnu + 1.0) * tau));
  }
  auto slope = [&](const std::vector<double>& y) {
    const double n = static_cast<double>(lt.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < lt.size(); ++i) {
      sx += lt[i];
      sy += y[i];
      sxx += lt[i] * lt[i];
      sxy += lt[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  EXPECT_NEAR(slope(lw), 0.5, 1e-10);
  EXPECT_NEAR(slope(ll), 1.0, 1e-10);
}

TEST(UniformBand, ErrorsAndVariants) {
  std::mt19937_64 rng(8);
  const auto state = posterior(random_model(rng, 6, 1, ours()));
  try {
    uniform_band(state, ObservationalModel::zero(), unit_box(0.1, 0.5), Matrix::Constant(1, 1, 1.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::QueryOutsideSupport);
  }
  const auto lcm = MultitaskKernel::lcm_trainable(SeKernel{}, SeKernel{}, Coregionalization{}, Coregionalization{},
                                                  PropensityModel::constant(0.5));
  EXPECT_THROW(posterior_mean_lipschitz(posterior(random_model(rng, 6, 1, lcm))), Error);
  // Naive kernel: the gap kernel is the shared kernel.
  const auto naive_state = posterior(random_model(rng, 6, 1, MultitaskKernel::naive(SeKernel::natural(2.0, 1.0))));
  EXPECT_NO_THROW(uniform_band(naive_state, ObservationalModel::zero(), unit_box(0.1, std::nullopt),
                               Matrix::Constant(1, 1, 0.0)));
}

TEST(UniformBand, TauSearchBeatsEndpoints) {
  std::mt19937_64 rng(9);
  const auto state = posterior(random_model(rng, 30, 2, ours()));
  const Matrix q = Matrix::Random(40, 2);
  BoundConfig cfg;
  cfg.delta = 0.05;
  cfg.support = Box::cube(2, -1.0, 1.0);
  cfg.lipschitz_f = 2.0;
  const auto chosen = uniform_band(state, ObservationalModel::zero(), cfg, q);
  auto mean_width = [](const UniformBoundReport& r) {
    double acc = 0;
    for (const auto& p : r.per_point) acc += p.half_width;
    return acc / static_cast<double>(r.per_point.size());
  };
  const double diam = cfg.support.diameter();
  for (double tau : {diam / 1e3, diam / 30, diam / 3, diam}) {
    cfg.tau = tau;
    EXPECT_LE(mean_width(chosen), mean_width(uniform_band(state, ObservationalModel::zero(), cfg, q)) + 1e-12);
  }
  const auto j = to_json(chosen);
  EXPECT_EQ(j["per_point"].size(), 40u);
  EXPECT_EQ(j["per_point"][0].size(), 3u);
  EXPECT_TRUE(j.contains("beta") && j.contains("gamma") && j.contains("covering"));
}

TEST(DefaultLipschitz, ScalesWithKernel) {
  const Box box = Box::cube(2, -1, 1);
  const double base = default_lipschitz_f(SeKernel::natural(1.0, 0.3), box, 1);
  EXPECT_GT(base, kernel_lipschitz(SeKernel::natural(1.0, 0.3)));
  EXPECT_EQ(base, default_lipschitz_f(SeKernel::natural(1.0, 0.3), box, 1));
  EXPECT_NEAR(default_lipschitz_f(SeKernel::natural(2.0, 0.3), box, 1), 2 * base, 1e-9 * base);
  EXPECT_EQ(default_lipschitz_f(SeKernel{-INFINITY, 0.0}, box, 1), 0.0);
}

TEST(UniformBand, CoversPriorDrawsOfTheGap) {
  // Training rows and a dense CATE grid drawn jointly from the model's prior.
  const auto kern = ours();
  const auto noise = NoiseParams::natural(0.3, 0.3);
  const int n = 40, grid = 100;
  const double delta = 0.05;
  int covered = 0;
  const int reps = 25;
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937_64 rng(500 + rep);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<TaskPoint> all;
    for (int i = 0; i < n; ++i) all.push_back({Vector::Constant(1, u(rng)), i % 2});
    for (int g = 0; g < grid; ++g) all.push_back({Vector::Constant(1, -1.0 + 2.0 * g / (grid - 1)), kCateTask});
    const auto chol = cholesky(gram_matrix(kern, all, &noise));
    std::normal_distribution<double> z;
    Vector e(n + grid);
    for (auto& v : e) v = z(rng);
    const Vector draw = chol.lower() * e;
    const GpModel m(kern, noise, std::vector<TaskPoint>(all.begin(), all.begin() + n), draw.head(n));
    Matrix q(grid, 1);
    for (int g = 0; g < grid; ++g) q(g, 0) = all[static_cast<size_t>(n + g)].x[0];
    BoundConfig cfg;
    cfg.delta = delta;
    cfg.support = Box::cube(1, -1, 1);
    cfg.seed = static_cast<std::uint64_t>(rep);
    const auto r = uniform_band(posterior(m), ObservationalModel::zero(), cfg, q);
    bool all_in = true;
    for (int g = 0; g < grid; ++g) {
      if (std::abs(r.per_point[static_cast<size_t>(g)].center - draw[n + g]) > r.per_point[static_cast<size_t>(g)].half_width) {
        all_in = false;
      }
    }
    covered += all_in;
  }
  EXPECT_GE(covered, static_cast<int>(std::ceil((1 - delta) * reps)));
}

}  // namespace
}  // namespace pogp
