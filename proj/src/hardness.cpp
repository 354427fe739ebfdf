#include "pogp/hardness.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "pogp/errors.hpp"
#include "pogp/pseudo_outcome.hpp"
#include "pogp/simulate.hpp"

namespace pogp {

namespace {

Vector uniform_in(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(box.lower.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = box.lower[j] + u(rng) * (box.upper[j] - box.lower[j]);
  return x;
}

struct Row {
  Vector x;
  int t;
  double y;
};

Row base_row(const BaseDistribution& base, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(base.propensity);
  std::uniform_real_distribution<double> noise(-base.noise_half_width, base.noise_half_width);
  Row r;
  r.x = uniform_in(base.support, rng);
  r.t = coin(rng) ? 1 : 0;
  r.y = r.t * base.cate(r.x) + noise(rng);
  return r;
}

Row spike_row(const SpikeMixture& q, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(q.base.propensity);
  Row r;
  r.x = uniform_in(q.spike_region, rng);
  r.t = coin(rng) ? 1 : 0;
  r.y = q.outcome_bound * (2.0 * r.t - 1.0);
  return r;
}

Dataset to_dataset(const std::vector<Row>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix x(n, rows.front().x.size());
  std::vector<int> t(rows.size());
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = rows[static_cast<size_t>(i)].x.transpose();
    t[static_cast<size_t>(i)] = rows[static_cast<size_t>(i)].t;
    y[i] = rows[static_cast<size_t>(i)].y;
  }
  return Dataset(std::move(x), std::move(t), std::move(y), Environment::Experimental);
}

/// Base rows and their coupled mixture rows: the mixture replaces row i by a
/// spike draw exactly when its coin falls below the mixing weight.
std::pair<std::vector<Row>, std::vector<Row>> coupled_rows(const SpikeMixture& q, Eigen::Index n, std::uint64_t seed,
                                                           std::vector<bool>* flags) {
  std::mt19937_64 rng(seed);
  std::mt19937_64 spike_rng(mix_seed(seed, 1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Row> p, mixed;
  p.reserve(static_cast<size_t>(n));
  mixed.reserve(static_cast<size_t>(n));
  if (flags) flags->assign(static_cast<size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    Row b = base_row(q.base, rng);
    const bool spike = u(rng) < q.mix_weight;
    mixed.push_back(spike ? spike_row(q, spike_rng) : b);
    if (spike && flags) (*flags)[static_cast<size_t>(i)] = true;
    p.push_back(std::move(b));
  }
  return {std::move(p), std::move(mixed)};
}

}  // namespace

Dataset BaseDistribution::sample(Eigen::Index n, std::uint64_t seed) const {
  if (n < 1) throw Error(ErrorKind::ValidationError, "sample size must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Row> rows;
  for (Eigen::Index i = 0; i < n; ++i) rows.push_back(base_row(*this, rng));
  return to_dataset(rows);
}

double BaseDistribution::outcome_sup() const {
  const Eigen::Index d = support.lower.size();
  double sup = std::abs(cate(0.5 * (support.lower + support.upper)));
  if (d <= 16) {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
      Vector corner(d);
      for (Eigen::Index j = 0; j < d; ++j) corner[j] = (mask >> j) & 1 ? support.upper[j] : support.lower[j];
      sup = std::max(sup, std::abs(cate(corner)));
    }
  }
  return sup + noise_half_width;
}

Dataset SpikeMixture::sample(Eigen::Index n, std::uint64_t seed, std::vector<bool>* spike_flags) const {
  if (n < 1) throw Error(ErrorKind::ValidationError, "sample size must be positive");
  return to_dataset(coupled_rows(*this, n, seed, spike_flags).second);
}

SpikeMixture build_mixture(const BaseDistribution& base, int n, double outcome_bound) {
  if (n < 1) throw Error(ErrorKind::ValidationError, "n must be positive");
  if (!(outcome_bound >= base.outcome_sup())) {
    throw Error(ErrorKind::ValidationError, "outcome bound M does not bound the base outcomes");
  }
  const double eps = 1.0 / (static_cast<double>(n) * n);
  const Vector center = 0.5 * (base.support.lower + base.support.upper);
  const Vector half = 0.5 * base.support.side_lengths();
  const double volume = base.support.volume();
  auto box_at = [&](double s) { return Box{center - s * half, center + s * half}; };
  auto probability = [&](double s) { return box_at(s).volume() / volume; };

  double lo = 0.0, hi = 1.0;
  if (probability(hi) > eps) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (probability(mid) <= eps ? lo : hi) = mid;
    }
  } else {
    lo = hi;
  }
  const Box spike = box_at(lo);
  for (Eigen::Index j = 0; j < center.size(); ++j) {
    if (!(spike.upper[j] > spike.lower[j])) {
      throw Error(ErrorKind::RegionTooSmall, "spike box collapsed before reaching base probability 1/n^2");
    }
  }
  SpikeMixture q;
  q.base = base;
  q.spike_region = spike;
  q.spike_probability = probability(lo);
  q.mix_weight = 1.0 / n;
  q.outcome_bound = outcome_bound;
  return q;
}

EquivalenceTest::EquivalenceTest(double alpha, Band lower, Band upper, Box support, int bins,
                                 ObservationalModel obs_model)
    : alpha_(alpha),
      lower_(std::move(lower)),
      upper_(std::move(upper)),
      support_(std::move(support)),
      bins_(bins),
      obs_model_(std::move(obs_model)) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw Error(ErrorKind::ValidationError, "alpha must lie in (0, 0.5)");
  if (bins < 1) throw Error(ErrorKind::ValidationError, "at least one bin is required");
  z_ = boost::math::quantile(boost::math::normal(), 1.0 - alpha);
}

bool EquivalenceTest::rejects(const Dataset& exp, double propensity) const {
  constexpr int kMinPerBin = 5;
  std::vector<double> sum(static_cast<size_t>(bins_)), sum_sq(static_cast<size_t>(bins_));
  std::vector<double> lo(static_cast<size_t>(bins_)), hi(static_cast<size_t>(bins_));
  std::vector<int> count(static_cast<size_t>(bins_));
  const double left = support_.lower[0], width = support_.upper[0] - support_.lower[0];
  for (Eigen::Index i = 0; i < exp.size(); ++i) {
    const Vector x = exp.row(i);
    const int t = exp.treatments()[static_cast<size_t>(i)];
    const double r = ipw_weight(t, propensity) * exp.outcomes()[i] - obs_model_.predict_gap(x);
    const auto b = static_cast<size_t>(std::clamp(static_cast<int>((x[0] - left) / width * bins_), 0, bins_ - 1));
    sum[b] += r;
    sum_sq[b] += r * r;
    lo[b] += lower_(x);
    hi[b] += upper_(x);
    ++count[b];
  }
  bool all_inside = true;
  for (size_t b = 0; b < sum.size(); ++b) {
    if (count[b] < kMinPerBin) {
      throw Error(ErrorKind::InsufficientData, "bin " + std::to_string(b) + " holds " + std::to_string(count[b]) +
                                                   " rows; at least 5 are required");
    }
    const double n = count[b];
    const double mean = sum[b] / n;
    const double var = std::max(sum_sq[b] / n - mean * mean, 0.0) * n / (n - 1.0);
    const double se = std::sqrt(var / n);
    // Both one-sided tests must reject at level alpha (intersection-union).
    if (!(mean - lo[b] / n > z_ * se && hi[b] / n - mean > z_ * se)) all_inside = false;
  }
  return all_inside;
}

EquivalenceTest reference_equivalence_test(double alpha, EquivalenceTest::Band lower, EquivalenceTest::Band upper,
                                           Box support, int bins) {
  return EquivalenceTest(alpha, std::move(lower), std::move(upper), std::move(support), bins);
}

std::vector<PowerEstimate> power_collapse_curve(const EquivalenceTest& test, const BaseDistribution& base,
                                                const std::vector<int>& n_list, int trials, std::uint64_t seed,
                                                double outcome_bound, std::optional<double> mix_weight_override) {
  if (trials < 200) throw Error(ErrorKind::ValidationError, "power_collapse_curve needs at least 200 trials");
  std::vector<PowerEstimate> curve;
  for (int n : n_list) {
    SpikeMixture q = build_mixture(base, n, outcome_bound);
    if (mix_weight_override) q.mix_weight = *mix_weight_override;
    auto decide = [&](const std::vector<Row>& rows, int& insufficient) {
      try {
        return test.rejects(to_dataset(rows), base.propensity) ? 1 : 0;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::InsufficientData) throw;
        ++insufficient;
        return 0;  // a test that cannot be computed does not reject
      }
    };
    PowerEstimate est;
    est.n = n;
    est.trials = trials;
    est.mix_weight = q.mix_weight;
    est.tv_bound = 1.0 - std::pow(1.0 - q.mix_weight, n);
    double level = 0, power = 0, diff_sq = 0;
    for (int k = 0; k < trials; ++k) {
      const auto [p_rows, q_rows] =
          coupled_rows(q, n, mix_seed(seed, static_cast<std::uint64_t>(n) * 1000003ULL + k), nullptr);
      const int rp = decide(p_rows, est.insufficient);
      const int rq = decide(q_rows, est.insufficient);
      level += rp;
      power += rq;
      diff_sq += (rq - rp) * (rq - rp);
    }
    const double m = trials;
    est.level_hat = level / m;
    est.power_hat = power / m;
    const double diff = est.power_hat - est.level_hat;
    est.mc_stderr = std::sqrt(std::max(diff_sq / m - diff * diff, 0.0) / (m - 1.0));
    est.level_stderr = std::sqrt(est.level_hat * (1 - est.level_hat) / m);
    est.power_stderr = std::sqrt(est.power_hat * (1 - est.power_hat) / m);
    curve.push_back(est);
  }
  return curve;
}

nlohmann::json to_json(const std::vector<PowerEstimate>& curve) {
  auto out = nlohmann::json::array();
  for (const auto& e : curve) {
    out.push_back({{"n", e.n},
                   {"level_hat", e.level_hat},
                   {"power_hat", e.power_hat},
                   {"mc_stderr", e.mc_stderr},
                   {"level_stderr", e.level_stderr},
                   {"power_stderr", e.power_stderr},
                   {"tv_bound", e.tv_bound},
                   {"mix_weight", e.mix_weight},
                   {"trials", e.trials},
                   {"insufficient", e.insufficient}});
  }
  return out;
}

}  // namespace pogp
