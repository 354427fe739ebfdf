#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "pogp/errors.hpp"
#include "pogp/pseudo_outcome.hpp"

namespace pogp {
namespace {

Dataset one_row(int t, double y, double x = 0.0) {
  return Dataset(Matrix::Constant(1, 1, x), {t}, Vector::Constant(1, y), Environment::Experimental);
}

TEST(IpwTransform, HandExamples) {
  const auto half = PropensityModel::constant(0.5);
  auto s = ipw_transform(one_row(1, 2.0), half, ObservationalModel::zero());
  EXPECT_DOUBLE_EQ(s[0].pseudo_y, 4.0);
  EXPECT_DOUBLE_EQ(s[0].target_residual, 4.0);

  const auto one = ObservationalModel::oracle([](const Vector&) { return 1.0; });
  s = ipw_transform(one_row(0, 3.0), half, one);
  EXPECT_DOUBLE_EQ(s[0].pseudo_y, -6.0);
  EXPECT_DOUBLE_EQ(s[0].target_residual, -7.0);

  s = ipw_transform(one_row(1, 1.0), PropensityModel::constant(0.25), ObservationalModel::zero());
  EXPECT_DOUBLE_EQ(s[0].pseudo_y, 4.0);
}

TEST(IpwTransform, OverlapViolationOnAnyRow) {
  const auto pi = PropensityModel::tabulated([](const Vector& x) { return x[0]; }, 0.05);
  Matrix x(2, 1);
  x << 0.5, 0.01;
  const Dataset exp(x, {0, 1}, Vector::Ones(2), Environment::Experimental);
  try {
    ipw_transform(exp, pi, ObservationalModel::zero());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OverlapViolation);
  }
}

TEST(IpwTransform, RejectsObservationalData) {
  const Dataset obs(Matrix::Zero(1, 1), {0}, Vector::Zero(1), Environment::Observational);
  EXPECT_THROW(ipw_transform(obs, PropensityModel::constant(0.5), ObservationalModel::zero()), Error);
}

TEST(IpwTransform, MonteCarloMeanIsTheCate) {
  // mu(x, t) = 1 + 2x + t (0.5 + x^2): tau(x) = 0.5 + x^2.
  const double pi = 0.25;
  const double x = 0.8;
  const double tau = 0.5 + x * x;
  const int n = 200000;
  std::mt19937_64 rng(17);
  std::bernoulli_distribution treat(pi);
  std::normal_distribution<double> eps(0.0, 0.5);
  Matrix cov = Matrix::Constant(n, 1, x);
  std::vector<int> t(n);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    t[i] = treat(rng) ? 1 : 0;
    y[i] = 1 + 2 * x + t[i] * tau + eps(rng);
  }
  const auto s = ipw_transform(Dataset(cov, t, y, Environment::Experimental), PropensityModel::constant(pi),
                               ObservationalModel::zero());
  double mean = 0.0, sq = 0.0;
  for (const auto& p : s) {
    mean += p.pseudo_y;
    sq += p.pseudo_y * p.pseudo_y;
  }
  mean /= n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_LE(std::abs(mean - tau), 3.0 * se);
}

TEST(TaskCoefficients, Examples) {
  auto c = task_coefficients(0.5);
  EXPECT_EQ(c.a, (std::array<double, 3>{1, 1, 1}));
  EXPECT_EQ(c.b, (std::array<double, 3>{-2, 2, 0}));
  c = task_coefficients(0.25);
  EXPECT_DOUBLE_EQ(c.b[0], -4.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.b[1], 4.0);
  for (double pi : {0.1, 0.37, 0.9}) {
    c = task_coefficients(pi);
    EXPECT_EQ(c.a[2], 1.0);
    EXPECT_EQ(c.b[2], 0.0);
  }
}

TEST(TaskCoefficients, MatchIpwTransformOnUnitOutcomes) {
  for (double pi : {0.25, 0.6}) {
    const auto c = task_coefficients(pi);
    for (int t = 0; t < 2; ++t) {
      const auto s = ipw_transform(one_row(t, 1.0), PropensityModel::constant(pi), ObservationalModel::zero());
      EXPECT_NEAR(s[0].pseudo_y, c.b[t], 1e-15);
    }
  }
}

TEST(Decomposition, NoiselessPseudoOutcomeSplitsIntoCatePlusCorrection) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> up(0.05, 0.95);
  for (int trial = 0; trial < 200; ++trial) {
    // Random cubic mu(x, t) = sum_k c[t][k] x^k.
    double coef[2][4];
    for (auto& arm : coef)
      for (double& v : arm) v = u(rng);
    const double x = u(rng);
    const double pi = up(rng);
    auto mu = [&](int t) { return coef[t][0] + x * (coef[t][1] + x * (coef[t][2] + x * coef[t][3])); };
    const double tau = mu(1) - mu(0);
    const double phi = (1 - pi) * mu(1) + pi * mu(0);
    const auto c = task_coefficients(pi);
    for (int t = 0; t < 2; ++t) {
      const auto s = ipw_transform(one_row(t, mu(t), x), PropensityModel::constant(pi, 0.01),
                                   ObservationalModel::zero());
      const double lhs = s[0].pseudo_y;
      const double rhs = tau + c.b[t] * phi;
      EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
    }
  }
}

}  // namespace
}  // namespace pogp
