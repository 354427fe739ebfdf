// pogp: command-line entry points. Every subcommand reads one JSON config and
// writes its outputs plus manifest.json into the config's output_dir.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "pogp/config.hpp"
#include "pogp/hardness.hpp"
#include "pogp/model_io.hpp"
#include "pogp/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pogp;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

fs::path prepare_output(ConfigSection& s, const std::string& fallback) {
  std::string dir = fallback;
  s.get("output_dir", dir);
  fs::create_directories(dir);
  return dir;
}

void write_grid_csv(const fs::path& path, const EvalGrid& grid) {
  std::ofstream out(path);
  out << std::setprecision(17);
  for (Eigen::Index j = 0; j < grid.x.cols(); ++j) out << "x" << j << ",";
  out << "cate\n";
  for (Eigen::Index i = 0; i < grid.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.x.cols(); ++j) out << grid.x(i, j) << ",";
    out << grid.cate[i] << "\n";
  }
}

int cmd_simulate(const json& j) {
  ConfigSection s(j, "");
  const SimConfig sim = sim_config_from_json(s.raw("sim"));
  const fs::path out = prepare_output(s, "out");
  s.finish();
  const auto data = generate(sim);
  write_csv(out / "obs.csv", data.obs);
  write_csv(out / "exp.csv", data.exp);
  write_grid_csv(out / "truth_in_distribution.csv", data.truth.in_distribution);
  write_grid_csv(out / "truth_out_of_distribution.csv", data.truth.out_of_distribution);
  write_json(out / "manifest.json", run_manifest(j, sim.seed, "simulate"));
  std::cout << "wrote " << data.obs.size() << " observational and " << data.exp.size() << " experimental rows to "
            << out << "\n";
  return 0;
}

CsvSchema schema_from(ConfigSection& s, Environment env, bool with_outcome) {
  CsvSchema schema;
  schema.environment = env;
  s.get("treatment_column", schema.treatment_column);
  std::string y = "y";
  s.get("outcome_column", y);
  if (with_outcome) schema.outcome_column = y;
  s.get("covariate_columns", schema.covariate_columns);
  return schema;
}

int cmd_fit(const json& j) {
  ConfigSection s(j, "");
  const auto exp_path = s.require<std::string>("experimental");
  const CsvSchema schema = schema_from(s, Environment::Experimental, true);
  double pi = 0.5;
  s.get("propensity", pi);
  const ModelKind kind = model_from_string(s.has("model") ? s.require<std::string>("model") : "ours");
  OptimizerSettings opt;
  if (s.has("optimizer")) opt = optimizer_from_json(s.raw("optimizer"));

  ObservationalModel obs_model = ObservationalModel::zero();
  if (s.has("observational")) {
    auto o = s.child("observational");
    const auto k = o.require<std::string>("kind");
    if (k == "ridge") {
      double lambda = 1e-3;
      o.get("lambda", lambda);
      CsvSchema obs_schema = schema;
      obs_schema.environment = Environment::Observational;
      obs_model = fit_observational_ridge(load_csv(o.require<std::string>("data"), obs_schema), lambda);
    } else if (k != "zero") {
      o.fail("kind", "expected ridge or zero");
    }
    o.finish();
  }
  const fs::path out = prepare_output(s, "out");
  s.finish();
  if (!(pi > 0.0 && pi < 1.0)) throw Error(ErrorKind::ConfigError, "config key 'propensity': must lie in (0, 1)");

  const Dataset exp = load_csv(exp_path, schema);
  const auto samples = ipw_transform(exp, PropensityModel::constant(pi), obs_model);
  const GpModel model = fit(initial_model(kind, samples, pi), opt);
  write_json(out / "model.json", to_json(FittedModel{model, obs_model}));
  write_json(out / "manifest.json", run_manifest(j, opt.seed, "fit"));
  const auto& r = *model.report();
  std::cout << "fitted " << to_string(kind) << " on " << exp.size() << " rows: mll " << r.final_mll << ", grad "
            << r.grad_norm << (r.converged ? " (converged)" : " (iteration limit)") << "\n";
  return 0;
}

int cmd_predict(const json& j) {
  ConfigSection s(j, "");
  const auto model_path = s.require<std::string>("model");
  const auto query_path = s.require<std::string>("queries");
  CsvSchema schema;
  schema.treatment_column.clear();
  s.get("covariate_columns", schema.covariate_columns);
  double z = kZ95;
  s.get("z", z);
  const fs::path out = prepare_output(s, "out");
  s.finish();

  const FittedModel fitted = fitted_model_from_json(read_json_file(model_path));
  const Dataset queries = load_csv(query_path, schema);
  const auto state = posterior(fitted.model);
  const auto preds = predict_batch(state, fitted.obs_model, queries.covariates(), z);
  std::ofstream csv(out / "predictions.csv");
  csv << std::setprecision(12) << "mean_gap,std,mean_cate,credible_low,credible_high\n";
  for (const auto& p : preds) {
    csv << p.mean_gap << ',' << p.std << ',' << p.mean_cate << ',' << p.credible_low << ',' << p.credible_high << '\n';
  }
  write_json(out / "manifest.json", run_manifest(j, 0, "predict"));
  std::cout << "wrote " << preds.size() << " predictions to " << (out / "predictions.csv") << "\n";
  return 0;
}

int cmd_experiment(const json& j) {
  const auto cfg = experiment_config_from_json(j);
  fs::create_directories(cfg.output_dir);
  const auto table = run_experiment(cfg);
  write_metrics_csv(fs::path(cfg.output_dir) / "metrics.csv", table);
  write_json(fs::path(cfg.output_dir) / "manifest.json", run_manifest(j, cfg.sim.seed, "experiment"));
  std::cout << std::fixed << std::setprecision(3);
  for (const auto& r : table.rows) {
    std::cout << std::setw(6) << to_string(r.model) << "  " << std::setw(19) << r.grid << "  mse " << r.mse.mean
              << " +- " << 1.96 * r.mse.se << "  coverage " << r.coverage.mean << "  width " << r.width.mean << "\n";
  }
  std::cout << table.replications_used << " replications used, " << table.failures.size() << " excluded\n";
  return 0;
}

int cmd_bound(const json& j) {
  const auto cfg = experiment_config_from_json(j);
  if (!cfg.bound) throw Error(ErrorKind::ConfigError, "config key 'bound' is required");
  fs::create_directories(cfg.output_dir);
  const auto study = run_bound_study(cfg);
  write_bound_csv(fs::path(cfg.output_dir) / "bound_coverage.csv", study);
  write_json(fs::path(cfg.output_dir) / "manifest.json", run_manifest(j, cfg.sim.seed, "bound"));
  std::cout << std::fixed << std::setprecision(3);
  for (const auto& r : study.rows) {
    std::cout << "n_e " << std::setw(5) << r.n_e << "  coverage " << r.coverage.mean << "  width in "
              << r.width_in.mean << "  width out " << r.width_out.mean << "\n";
  }
  return 0;
}

int cmd_hardness(const json& j) {
  ConfigSection s(j, "");
  double alpha = 0.05, band = 1.2, outcome_bound = 3.0;
  int bins = 4, trials = 2000;
  std::uint64_t seed = 0;
  std::vector<int> n_list{50, 100, 200, 400};
  s.get("alpha", alpha);
  s.get("band", band);
  s.get("outcome_bound", outcome_bound);
  s.get("bins", bins);
  s.get("trials", trials);
  s.get("seed", seed);
  s.get("n_list", n_list);
  BaseDistribution base;
  if (s.has("base")) {
    auto b = s.child("base");
    int d = 1;
    double c = 0.0;
    b.get("d", d);
    b.get("propensity", base.propensity);
    b.get("noise_half_width", base.noise_half_width);
    b.get("cate", c);
    b.finish();
    if (d < 1) b.fail("d", "must be at least 1");
    base.support = Box::cube(d, -1.0, 1.0);
    base.cate = [c](const Vector&) { return c; };
  }
  const fs::path out = prepare_output(s, "out");
  s.finish();
  if (!(band > 0.0)) throw Error(ErrorKind::ConfigError, "config key 'band': must be positive");

  const EquivalenceTest test(alpha, [band](const Vector&) { return -band; },
                             [band](const Vector&) { return band; }, base.support, bins);
  const auto curve = power_collapse_curve(test, base, n_list, trials, seed, outcome_bound);
  write_json(out / "hardness.json", to_json(curve));
  write_json(out / "manifest.json", run_manifest(j, seed, "hardness"));
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& e : curve) {
    std::cout << "n " << std::setw(4) << e.n << "  level " << e.level_hat << "  power " << e.power_hat << "  gap "
              << e.power_hat - e.level_hat << " +- " << 3 * e.mc_stderr << "  tv " << e.tv_bound << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-outcome GP estimation of conditional treatment effects"};
  app.require_subcommand(1);
  std::string config;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const json&);
  };
  const Command commands[] = {
      {"simulate", "Simulate observational and experimental data with ground truth", cmd_simulate},
      {"fit", "Fit a GP model to an experimental CSV", cmd_fit},
      {"predict", "Predict CATE with credible intervals from a fitted model", cmd_predict},
      {"bound", "Uniform error band coverage study", cmd_bound},
      {"experiment", "Replicated model comparison producing metrics.csv", cmd_experiment},
      {"hardness", "Power collapse of an equivalence test against spike mixtures", cmd_hardness},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->add_option("-c,--config", config, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  try {
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) return c.run(read_json_file(config));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::ConfigError:
      case ErrorKind::ParseError:
      case ErrorKind::SchemaError:
        return kExitConfig;
      default:
        return kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
