#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "pogp/data.hpp"

namespace pogp {

/// Base law P for the power demonstration: X uniform on `support`,
/// T ~ Ber(propensity), Y = T * cate(X) + U with U uniform on
/// [-noise_half_width, noise_half_width].
struct BaseDistribution {
  Box support = Box::cube(1, -1.0, 1.0);
  double propensity = 0.5;
  std::function<double(const Vector&)> cate = [](const Vector&) { return 0.0; };
  double noise_half_width = 1.0;

  Dataset sample(Eigen::Index n, std::uint64_t seed) const;
  /// Upper bound on |Y| under this law, evaluated over the support corners and centre.
  double outcome_sup() const;
};

/// Q = (1 - w) P + w R, where R puts X uniformly on a small box and emits
/// Y = M (2T - 1), so the pseudo-outcome on the spike is 2M.
struct SpikeMixture {
  BaseDistribution base;
  Box spike_region;
  /// Base probability of the spike region.
  double spike_probability = 0.0;
  double mix_weight = 0.0;
  double outcome_bound = 0.0;
  double spike_cate() const { return 2.0 * outcome_bound; }

  /// Draws n rows. With `spike_flags`, records which rows came from R.
  Dataset sample(Eigen::Index n, std::uint64_t seed, std::vector<bool>* spike_flags = nullptr) const;
};

/// mix_weight = 1/n; spike box centred on the support midpoint and shrunk by
/// bisection on its side length until its base probability is <= 1/n^2.
/// Throws RegionTooSmall if the box collapses in floating point first, and
/// ValidationError if M does not bound the base outcomes.
SpikeMixture build_mixture(const BaseDistribution& base, int n, double outcome_bound);

/// Two one-sided tests on binned pseudo-outcome residual means: rejects the
/// hypothesis that the correction function is not controlled by the bands
/// only if every bin mean lies significantly inside them.
class EquivalenceTest {
 public:
  using Band = std::function<double(const Vector&)>;

  EquivalenceTest(double alpha, Band lower, Band upper, Box support, int bins = 4,
                  ObservationalModel obs_model = ObservationalModel::zero());

  /// Throws InsufficientData if any bin holds fewer than 5 rows.
  bool rejects(const Dataset& exp, double propensity) const;

  double alpha() const { return alpha_; }
  int bins() const { return bins_; }

 private:
  double alpha_;
  double z_;
  Band lower_;
  Band upper_;
  Box support_;
  int bins_;
  ObservationalModel obs_model_;
};

EquivalenceTest reference_equivalence_test(double alpha, EquivalenceTest::Band lower,
                                           EquivalenceTest::Band upper, Box support, int bins = 4);

struct PowerEstimate {
  int n = 0;
  double level_hat = 0.0;
  double power_hat = 0.0;
  int trials = 0;
  /// Standard error of power_hat - level_hat over paired trials.
  double mc_stderr = 0.0;
  double level_stderr = 0.0;
  double power_stderr = 0.0;
  /// 1 - (1 - mix_weight)^n, the probability that any row comes from the spike.
  double tv_bound = 0.0;
  double mix_weight = 0.0;
  int insufficient = 0;
};

/// For each n, rejection rates under P^n and Q_n^n on coupled draws: both
/// datasets share their base rows and differ only where the spike fires.
/// `mix_weight_override` replaces 1/n (0 gives Q = P).
std::vector<PowerEstimate> power_collapse_curve(const EquivalenceTest& test, const BaseDistribution& base,
                                                const std::vector<int>& n_list, int trials, std::uint64_t seed,
                                                double outcome_bound,
                                                std::optional<double> mix_weight_override = std::nullopt);

nlohmann::json to_json(const std::vector<PowerEstimate>& curve);

}  // namespace pogp
