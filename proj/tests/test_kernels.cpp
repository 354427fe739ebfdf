#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "pogp/errors.hpp"
#include "pogp/kernels.hpp"
#include "pogp/pseudo_outcome.hpp"

namespace pogp {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(SeKernel, Examples) {
  const auto k = SeKernel::natural(1.7, 0.8);
  const Vector x = vec({0.3, -1.2});
  EXPECT_DOUBLE_EQ(kernel_eval(k, x, x), 1.7 * 1.7);
  EXPECT_EQ(kernel_eval(k, x, vec({1e3, 0})), 0.0);

  // exp(-1/2) by its power series.
  double series = 0.0, term = 1.0;
  for (int n = 0; n < 30; ++n) {
    series += term;
    term *= -0.5 / (n + 1);
  }
  const auto unit = SeKernel::natural(1.0, 1.0);
  EXPECT_NEAR(kernel_eval(unit, vec({0, 0}), vec({0.6, 0.8})), series, 1e-15);
  EXPECT_NEAR(series, 0.60653, 1e-5);
  EXPECT_THROW(kernel_eval(unit, vec({0}), vec({0, 1})), Error);
}

TEST(KernelLipschitz, Examples) {
  EXPECT_NEAR(kernel_lipschitz(SeKernel::natural(1, 1)), std::exp(-0.5), 1e-15);
  EXPECT_LT(kernel_lipschitz(SeKernel::natural(1e-8, 1)), 1e-15);
  const double base = kernel_lipschitz(SeKernel::natural(1.3, 0.7));
  EXPECT_NEAR(kernel_lipschitz(SeKernel::natural(1.3, 1.4)), base / 2, 1e-15);
}

TEST(KernelLipschitz, GridSearchOfDifferenceQuotients) {
  // Maximize |k(r + h) - k(r)| / h over a dense grid in r.
  const auto k = SeKernel::natural(1.0, 1.0);
  const double h = 1e-6;
  double best = 0.0;
  for (double r = 0.0; r < 5.0; r += 1e-4) {
    best = std::max(best, std::abs(k.from_squared_distance((r + h) * (r + h)) - k.from_squared_distance(r * r)) / h);
  }
  EXPECT_NEAR(best, kernel_lipschitz(k), 1e-3);
}

TEST(KernelLipschitz, BoundsRandomTriples) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2, 2);
  std::uniform_real_distribution<double> ls(-1, 1);
  for (int trial = 0; trial < 2000; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 4);
    const SeKernel k{ls(rng), ls(rng)};
    Vector x(d), xp(d), z(d);
    for (int j = 0; j < d; ++j) {
      x[j] = u(rng);
      xp[j] = x[j] + 0.1 * u(rng);
      z[j] = u(rng);
    }
    const double q = std::abs(kernel_eval(k, x, z) - kernel_eval(k, xp, z)) / (x - xp).norm();
    EXPECT_LE(q, kernel_lipschitz(k) * (1 + 1e-12));
  }
}

TEST(TaskKernel, PseudoFixedExamples) {
  const auto k = SeKernel::natural(1.2, 0.9);
  const auto l = SeKernel::natural(0.7, 1.5);
  const auto kern = MultitaskKernel::pseudo_fixed(k, l, PropensityModel::constant(0.5));
  const Vector x = vec({0.1, 0.4});
  const Vector xp = vec({-0.3, 0.2});
  EXPECT_DOUBLE_EQ(task_kernel_eval(kern, {x, kCateTask}, {xp, kCateTask}), kernel_eval(k, x, xp));
  const auto c = task_coefficients(0.5);
  const double expected = c.a[0] * c.a[1] * kernel_eval(k, x, x) + c.b[0] * c.b[1] * kernel_eval(l, x, x);
  EXPECT_NEAR(task_kernel_eval(kern, {x, 0}, {x, 1}), expected, 1e-15);
  EXPECT_NEAR(expected, kernel_eval(k, x, x) - 4.0 * kernel_eval(l, x, x), 1e-15);
  try {
    task_kernel_eval(kern, {x, 3}, {x, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidTask);
  }
}

TEST(TaskKernel, NaiveIgnoresTasks) {
  const auto k = SeKernel::natural(1.1, 0.5);
  const auto kern = MultitaskKernel::naive(k);
  const Vector x = vec({0.2});
  const Vector xp = vec({0.5});
  for (int t = 0; t < 3; ++t)
    for (int tp = 0; tp < 3; ++tp) EXPECT_DOUBLE_EQ(task_kernel_eval(kern, {x, t}, {xp, tp}), kernel_eval(k, x, xp));
}

TEST(GramMatrix, Examples) {
  const auto k = SeKernel::natural(1.3, 0.6);
  const auto l = SeKernel::natural(0.4, 2.0);
  const auto kern = MultitaskKernel::pseudo_fixed(k, l, PropensityModel::constant(0.3));
  const Vector x = vec({0.5, -0.5});
  const TaskPoint cate[] = {{x, kCateTask}};
  const auto g1 = gram_matrix(kern, cate);
  ASSERT_EQ(g1.dim(), 1);
  EXPECT_DOUBLE_EQ(g1(0, 0), kernel_eval(k, x, x));

  const auto noise = NoiseParams::natural(0.4, 0.9);
  const TaskPoint twins[] = {{x, 1}, {x, 1}};
  const auto g2 = gram_matrix(kern, twins, &noise);
  const double b1 = 1.0 / 0.3;
  const double v = kernel_eval(k, x, x) + b1 * b1 * kernel_eval(l, x, x);
  EXPECT_NEAR(g2(0, 0), v + 0.81, 1e-12);
  EXPECT_NEAR(g2(1, 1), v + 0.81, 1e-12);
  EXPECT_NEAR(g2(0, 1), v, 1e-12);
  EXPECT_NEAR(g2(1, 0), v, 1e-12);

  const TaskPoint mixed[] = {{x, 0}, {x, kCateTask}};
  const auto g3 = gram_matrix(kern, mixed, &noise);
  EXPECT_NEAR(g3(1, 1), kernel_eval(k, x, x), 1e-12) << "CATE rows never receive noise";
}

TEST(GramMatrix, NoisyGramsOverDistinctPointsFactorWithoutJitter) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_real_distribution<double> up(0.1, 0.9);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 99);
    const int d = 1 + static_cast<int>(rng() % 3);
    std::vector<TaskPoint> pts;
    for (int i = 0; i < n; ++i) {
      Vector x(d);
      for (int j = 0; j < d; ++j) x[j] = u(rng);
      pts.push_back({x, static_cast<int>(rng() % 2)});
    }
    const SeKernel k{u(rng), u(rng)};
    const SeKernel l{u(rng), u(rng)};
    const auto noise = NoiseParams{u(rng) - 0.5, u(rng) - 0.5};
    const double pi = up(rng);
    const Coregionalization a0{u(rng), u(rng), u(rng)};
    const Coregionalization a1{u(rng), u(rng), u(rng)};
    for (const auto& kern : {MultitaskKernel::naive(k), MultitaskKernel::pseudo_fixed(k, l, PropensityModel::constant(pi)),
                             MultitaskKernel::lcm_trainable(k, l, a0, a1, PropensityModel::constant(pi))}) {
      const auto g = gram_matrix(kern, pts, &noise);
      const double schedule[] = {0.0};
      EXPECT_NO_THROW(cholesky(g, schedule)) << to_string(kern.kind()) << " n=" << n;
    }
    // Noise-free mixed-task Gram stays PSD (tiny jitter allowed).
    std::vector<TaskPoint> with_cate = pts;
    with_cate.push_back({pts[0].x * 0.5, kCateTask});
    EXPECT_NO_THROW(cholesky(gram_matrix(MultitaskKernel::pseudo_fixed(k, l, PropensityModel::constant(pi)), with_cate)));
  }
}

TEST(GramMatrix, LcmWithFixedMixingReproducesPseudoFixed) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double pi : {0.5, 0.25, 0.7}) {
    const auto c = task_coefficients(pi);
    // A0 = a a^T and A1 = b b^T on the arm tasks; both rank one.
    const auto rank_one = [](double v0, double v1) {
      return Coregionalization{std::log(std::abs(v0)), v1 * (v0 < 0 ? -1.0 : 1.0), -40.0};
    };
    const SeKernel k{0.0, u(rng)};
    const SeKernel l{0.0, u(rng)};
    const auto lcm = MultitaskKernel::lcm_trainable(k, l, rank_one(c.a[0], c.a[1]), rank_one(c.b[0], c.b[1]),
                                                    PropensityModel::constant(pi));
    const auto ours = MultitaskKernel::pseudo_fixed(k, l, PropensityModel::constant(pi));
    std::vector<TaskPoint> pts;
    for (int i = 0; i < 25; ++i) pts.push_back({Vector::Random(2), static_cast<int>(rng() % 2)});
    const auto gl = gram_matrix(lcm, pts);
    const auto go = gram_matrix(ours, pts);
    EXPECT_LE((gl.matrix() - go.matrix()).cwiseAbs().maxCoeff(), 1e-10) << "pi=" << pi;
  }
}

TEST(Coregionalization, RoundTripAndDerivatives) {
  Eigen::Matrix2d a;
  a << 2.0, -0.4, -0.4, 0.9;
  const auto c = Coregionalization::from_matrix(a);
  EXPECT_TRUE(c.matrix().isApprox(a, 1e-14));
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    Coregionalization p = c, m = c;
    (i == 0 ? p.log_l00 : i == 1 ? p.l10 : p.log_l11) += h;
    (i == 0 ? m.log_l00 : i == 1 ? m.l10 : m.log_l11) -= h;
    const Eigen::Matrix2d fd = (p.matrix() - m.matrix()) / (2 * h);
    EXPECT_LE((fd - c.derivative(i)).cwiseAbs().maxCoeff(), 1e-8) << i;
  }
}

}  // namespace
}  // namespace pogp
