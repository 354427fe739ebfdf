#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "pogp/errors.hpp"
#include "pogp/hardness.hpp"
#include "pogp/pseudo_outcome.hpp"

namespace pogp {
namespace {

EquivalenceTest::Band constant_band(double c) {
  return [c](const Vector&) { return c; };
}

EquivalenceTest band_test(double c, double alpha = 0.05, Box support = Box::cube(1, -1, 1)) {
  return EquivalenceTest(alpha, constant_band(-c), constant_band(c), std::move(support));
}

double rejection_rate(const EquivalenceTest& test, const BaseDistribution& base, int n, int trials,
                      std::uint64_t seed) {
  int hits = 0;
  for (int k = 0; k < trials; ++k) hits += test.rejects(base.sample(n, seed * 100003 + k), base.propensity);
  return static_cast<double>(hits) / trials;
}

TEST(BuildMixture, SpikeMassAndWeight) {
  for (int n : {1, 2, 10, 57, 400}) {
    const auto q = build_mixture(BaseDistribution{}, n, 3.0);
    const double eps = 1.0 / (double(n) * n);
    EXPECT_LE(q.spike_probability, eps);
    EXPECT_GE(q.spike_probability, 0.999 * eps);
    EXPECT_DOUBLE_EQ(q.mix_weight, 1.0 / n);
    EXPECT_DOUBLE_EQ(q.spike_cate(), 6.0);
  }
}

TEST(BuildMixture, MultiDimensionalBoxIsCentred) {
  BaseDistribution base;
  base.support = Box{Vector::Constant(3, 0.0), Vector::Constant(3, 2.0)};
  const auto q = build_mixture(base, 10, 3.0);
  EXPECT_LE(q.spike_probability, 0.01);
  EXPECT_NEAR((0.5 * (q.spike_region.lower + q.spike_region.upper) - Vector::Constant(3, 1.0)).norm(), 0.0, 1e-12);
}

TEST(BuildMixture, Errors) {
  EXPECT_THROW(build_mixture(BaseDistribution{}, 0, 3.0), Error);
  try {
    build_mixture(BaseDistribution{}, 10, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ValidationError);
  }
  BaseDistribution far;
  far.support = Box{Vector::Constant(1, 1e6), Vector::Constant(1, 1e6 + 1)};
  try {
    build_mixture(far, 100000000, 3.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RegionTooSmall);
  }
}

TEST(SpikeMixture, FrequencyAndOutcomeBound) {
  BaseDistribution base;
  base.cate = [](const Vector& x) { return 0.5 * x[0]; };
  const auto q = build_mixture(base, 10, 3.0);
  std::vector<bool> flags;
  const int n = 100000;
  const Dataset d = q.sample(n, 7, &flags);
  int spikes = 0;
  for (int i = 0; i < n; ++i) {
    EXPECT_LE(std::abs(d.outcomes()[i]), q.outcome_bound);
    if (!flags[i]) continue;
    ++spikes;
    const Vector x = d.row(i);
    EXPECT_TRUE(x[0] >= q.spike_region.lower[0] && x[0] <= q.spike_region.upper[0]);
    // Pseudo-outcome on the spike equals the spike CATE exactly.
    EXPECT_DOUBLE_EQ(ipw_weight(d.treatments()[i], 0.5) * d.outcomes()[i], q.spike_cate());
  }
  const double se = std::sqrt(0.1 * 0.9 / n);
  EXPECT_NEAR(spikes / double(n), 0.1, 3 * se);
}

TEST(SpikeMixture, SpikeMeanExceedsBaseCate) {
  BaseDistribution base;
  base.cate = [](const Vector& x) { return x[0]; };
  const auto q = build_mixture(base, 20, base.outcome_sup());
  EXPECT_GT(q.spike_cate(), base.outcome_sup());
}

TEST(BaseDistribution, PseudoOutcomeIsUnbiased) {
  BaseDistribution base;
  base.propensity = 0.3;
  base.cate = [](const Vector&) { return 0.7; };
  const Dataset d = base.sample(200000, 3);
  double s = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) s += ipw_weight(d.treatments()[i], 0.3) * d.outcomes()[i];
  EXPECT_NEAR(s / d.size(), 0.7, 0.03);
}

TEST(EquivalenceTest, RejectsWellInsideBands) {
  EXPECT_GE(rejection_rate(band_test(1.2), BaseDistribution{}, 2000, 100, 1), 0.95);
}

TEST(EquivalenceTest, RarelyRejectsOutsideBands) {
  BaseDistribution base;
  base.cate = [](const Vector&) { return 2.0; };
  EXPECT_LE(rejection_rate(band_test(1.2), base, 400, 500, 2), 0.05);
}

// One bin sits on the band edge and the rest are deep inside, so the
// intersection-union test is exact to first order there.
TEST(EquivalenceTest, LevelAtBoundaryIsNearAlpha) {
  BaseDistribution base;
  base.cate = [](const Vector& x) { return x[0] >= 0.5 ? 1.2 : 0.0; };
  const int trials = 2000;
  const double rate = rejection_rate(band_test(1.2), base, 800, trials, 3);
  EXPECT_NEAR(rate, 0.05, 4 * std::sqrt(0.05 * 0.95 / trials));
}

// Every law whose correction touches a band edge is in the null; the test
// must hold its level on each.
TEST(EquivalenceTest, BoundaryNullsHoldLevel) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  const int trials = 1000;
  const double slack = 3 * std::sqrt(0.05 * 0.95 / trials);
  for (int k = 0; k < 20; ++k) {
    const double c = 0.5 + u(rng);
    const double slope = 0.5 * u(rng);
    const bool upper = k % 2 == 0;
    BaseDistribution base;
    base.propensity = 0.3 + 0.4 * u(rng);
    base.noise_half_width = 0.5 + u(rng);
    // Touches the band on the last bin and stays inside elsewhere.
    base.cate = [=](const Vector& x) { return (upper ? 1 : -1) * (c + slope * std::min(x[0] - 0.5, 0.0)); };
    const int n = 100 + 50 * (k % 7);
    const double rate = rejection_rate(band_test(c), base, n, trials, 100 + k);
    EXPECT_LE(rate, 0.05 + slack) << "config " << k;
  }
}

TEST(EquivalenceTest, InsufficientData) {
  const Dataset tiny = BaseDistribution{}.sample(12, 1);
  try {
    band_test(1.0).rejects(tiny, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

TEST(EquivalenceTest, ReferenceMatchesClass) {
  const auto a = band_test(1.0);
  const auto b = reference_equivalence_test(0.05, constant_band(-1.0), constant_band(1.0), Box::cube(1, -1, 1));
  for (int s = 0; s < 50; ++s) {
    const Dataset d = BaseDistribution{}.sample(200, s);
    EXPECT_EQ(a.rejects(d, 0.5), b.rejects(d, 0.5));
  }
}

TEST(EquivalenceTest, Preconditions) {
  EXPECT_THROW(band_test(1.0, 0.0), Error);
  EXPECT_THROW(band_test(1.0, 0.6), Error);
  EXPECT_THROW(EquivalenceTest(0.05, constant_band(-1), constant_band(1), Box::cube(1, -1, 1), 0), Error);
}

TEST(PowerCurve, ZeroMixingGivesEqualRates) {
  const auto curve = power_collapse_curve(band_test(1.2), BaseDistribution{}, {50, 100}, 300, 5, 3.0, 0.0);
  for (const auto& e : curve) {
    EXPECT_EQ(e.power_hat, e.level_hat);
    EXPECT_EQ(e.mc_stderr, 0.0);
    EXPECT_EQ(e.tv_bound, 0.0);
  }
}

TEST(PowerCurve, GapWithinTotalVariation) {
  const std::vector<int> ns{50, 100, 200, 400};
  const auto curve = power_collapse_curve(band_test(1.2), BaseDistribution{}, ns, 600, 9, 3.0);
  ASSERT_EQ(curve.size(), ns.size());
  for (size_t i = 0; i < curve.size(); ++i) {
    const auto& e = curve[i];
    EXPECT_EQ(e.n, ns[i]);
    EXPECT_DOUBLE_EQ(e.mix_weight, 1.0 / ns[i]);
    EXPECT_NEAR(e.tv_bound, 1 - std::pow(1 - 1.0 / ns[i], ns[i]), 1e-15);
    EXPECT_LE(std::abs(e.power_hat - e.level_hat), e.tv_bound + 3 * e.mc_stderr);
    EXPECT_GE(e.level_hat, 0.0);
    EXPECT_LE(e.power_hat, 1.0);
  }
  // Power stays close to level as n grows: the spike cannot be seen.
  EXPECT_LE(std::abs(curve.back().power_hat - curve.back().level_hat),
            std::abs(curve.front().power_hat - curve.front().level_hat) + 3 * curve.front().mc_stderr +
                3 * curve.back().mc_stderr);
}

TEST(PowerCurve, Deterministic) {
  const auto a = power_collapse_curve(band_test(1.2), BaseDistribution{}, {60}, 200, 4, 3.0);
  const auto b = power_collapse_curve(band_test(1.2), BaseDistribution{}, {60}, 200, 4, 3.0);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(PowerCurve, JsonAndPreconditions) {
  const auto curve = power_collapse_curve(band_test(1.2), BaseDistribution{}, {50}, 200, 1, 3.0);
  const auto j = to_json(curve);
  ASSERT_EQ(j.size(), 1u);
  for (const char* key : {"n", "level_hat", "power_hat", "mc_stderr", "tv_bound", "trials", "insufficient"}) {
    EXPECT_TRUE(j[0].contains(key)) << key;
  }
  EXPECT_THROW(power_collapse_curve(band_test(1.2), BaseDistribution{}, {50}, 100, 1, 3.0), Error);
}

}  // namespace
}  // namespace pogp
