#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pogp/bounds.hpp"
#include "pogp/gp.hpp"
#include "pogp/simulate.hpp"

namespace pogp {

enum class ModelKind { Ours, Naive, Lcm };

const char* to_string(ModelKind m);
ModelKind model_from_string(const std::string& s);

struct ObservationalSpec {
  enum class Kind { Oracle, Ridge, Zero };
  Kind kind = Kind::Oracle;
  double lambda = 1e-3;
};

struct BoundStudySpec {
  double delta = 0.05;
  std::optional<double> tau;
  std::optional<double> lipschitz_f;
  std::vector<int> n_e_list{500, 1000};
};

struct ExperimentConfig {
  SimConfig sim;
  std::vector<ModelKind> models{ModelKind::Ours, ModelKind::Naive, ModelKind::Lcm};
  OptimizerSettings optimizer;
  /// Absent: the true observational gap for the synthetic design, ridge otherwise.
  std::optional<ObservationalSpec> observational;
  std::optional<BoundStudySpec> bound;
  int replications = 20;
  /// 0 uses every hardware thread.
  int threads = 0;
  std::string output_dir = "out";
};

SimConfig sim_config_from_json(const nlohmann::json& j, const std::string& path = "sim");
OptimizerSettings optimizer_from_json(const nlohmann::json& j, const std::string& path = "optimizer");
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& s);
nlohmann::json to_json(const ExperimentConfig& cfg);

ObservationalSpec default_observational(Design d);
ObservationalModel build_observational(const ObservationalSpec& spec, const SimulatedData& data);

/// Untrained model over the residual targets; fitting starts from the median heuristic.
GpModel initial_model(ModelKind kind, std::span<const PseudoSample> samples, double treat_p);

struct GridMetrics {
  double mse = 0.0;
  double coverage = 0.0;
  double width = 0.0;
};

/// Metrics of the 95% credible intervals against the true CATE on `grid`.
GridMetrics evaluate_grid(const PosteriorState& state, const ObservationalModel& obs_model, const EvalGrid& grid);

struct MetricSummary {
  double mean = 0.0;
  double se = 0.0;
  double ci_low() const { return mean - 1.96 * se; }
  double ci_high() const { return mean + 1.96 * se; }
};

/// Mean and standard error across replications.
MetricSummary summarize(const std::vector<double>& values);

struct MetricsRow {
  ModelKind model;
  std::string grid;
  MetricSummary mse;
  MetricSummary coverage;
  MetricSummary width;
};

struct ReplicationFailure {
  int replication = 0;
  std::string message;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  std::vector<ReplicationFailure> failures;
  int replications_used = 0;

  /// Throws ValidationError if the pair is absent.
  const MetricsRow& at(ModelKind model, const std::string& grid) const;
};

inline constexpr const char* kInDistribution = "in_distribution";
inline constexpr const char* kOutOfDistribution = "out_of_distribution";

/// Replications run on a thread pool and are reduced in index order, so the
/// table is deterministic given the seed. A failed replication is retried once
/// with a fresh optimizer seed, then excluded; more than 10% failures throw
/// RuntimeFailure.
MetricsTable run_experiment(const ExperimentConfig& cfg);

struct BoundStudyRow {
  int n_e = 0;
  /// Fraction of replications whose band contains the CATE at every grid point.
  MetricSummary coverage;
  MetricSummary width_in;
  MetricSummary width_out;
  int replications_used = 0;
};

struct BoundStudy {
  std::vector<BoundStudyRow> rows;
  std::vector<ReplicationFailure> failures;
};

/// Uniform bands for the pseudo-outcome model at each n_e in cfg.bound.
/// n_e = 0 gives the prior band of the configured prior kernel.
BoundStudy run_bound_study(const ExperimentConfig& cfg);

void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table);
void write_bound_csv(const std::filesystem::path& path, const BoundStudy& study);

/// Config hash, seed, command and library versions.
nlohmann::json run_manifest(const nlohmann::json& config, std::uint64_t seed, const std::string& command);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace pogp
