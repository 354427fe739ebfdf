#include "pogp/runner.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <thread>

#include <Eigen/Core>

#include "pogp/config.hpp"
#include "pogp/errors.hpp"
#include "pogp/pseudo_outcome.hpp"

namespace pogp {

namespace {

using nlohmann::json;

SeKernel kernel_from_json(ConfigSection s) {
  double scale = 1.0, ell = 1.0;
  s.get("output_scale", scale);
  s.get("lengthscale", ell);
  s.finish();
  if (!(scale >= 0.0)) s.fail("output_scale", "must be nonnegative");
  if (!(ell > 0.0)) s.fail("lengthscale", "must be positive");
  // A zero output scale (no shift) maps to a vanishing log scale.
  return scale > 0.0 ? SeKernel::natural(scale, ell) : SeKernel{-1000.0, std::log(ell)};
}

json kernel_to_json(const SeKernel& k) {
  return {{"output_scale", k.log_output_scale <= -700.0 ? 0.0 : k.output_scale()}, {"lengthscale", k.lengthscale()}};
}

/// Runs f(i) for i in [0, n) on `threads` workers.
template <class F>
void parallel_for(int n, int threads, F f) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

bool retryable(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::AllRestartsFailed:
    case ErrorKind::NegativeVariance:
    case ErrorKind::NoConvergence:
      return true;
    default:
      return false;
  }
}

/// Calls body(attempt) and retries once on numerical failures. Returns the
/// failure message, or empty on success.
template <class F>
std::string with_retry(F body) {
  for (int attempt = 0;; ++attempt) {
    try {
      body(attempt);
      return {};
    } catch (const Error& e) {
      if (attempt == 0 && retryable(e)) continue;
      return std::string(to_string(e.kind())) + ": " + e.what();
    }
  }
}

void check_failures(int failed, int total, const std::vector<ReplicationFailure>& failures) {
  for (const auto& f : failures) std::cerr << "warning: replication " << f.replication << " excluded: " << f.message << "\n";
  if (failed * 10 > total) {
    throw Error(ErrorKind::RuntimeFailure,
                std::to_string(failed) + " of " + std::to_string(total) + " replications failed (limit 10%)");
  }
}

SimConfig replication_sim(const ExperimentConfig& cfg, int rep) {
  SimConfig s = cfg.sim;
  s.seed = mix_seed(cfg.sim.seed, static_cast<std::uint64_t>(rep));
  return s;
}

OptimizerSettings replication_optimizer(const ExperimentConfig& cfg, int rep, int attempt) {
  OptimizerSettings o = cfg.optimizer;
  o.seed = mix_seed(cfg.optimizer.seed, 1000ULL * static_cast<std::uint64_t>(rep) + static_cast<std::uint64_t>(attempt));
  return o;
}

GpModel fit_model(ModelKind kind, const SimulatedData& data, const ObservationalModel& obs,
                  const OptimizerSettings& opt, double treat_p) {
  const auto samples = ipw_transform(data.exp, PropensityModel::constant(treat_p), obs);
  return fit(initial_model(kind, samples, treat_p), opt);
}

}  // namespace

const char* to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Ours:
      return "ours";
    case ModelKind::Naive:
      return "naive";
    case ModelKind::Lcm:
      return "lcm";
  }
  return "?";
}

ModelKind model_from_string(const std::string& s) {
  if (s == "ours") return ModelKind::Ours;
  if (s == "naive") return ModelKind::Naive;
  if (s == "lcm") return ModelKind::Lcm;
  throw Error(ErrorKind::ConfigError, "unknown model '" + s + "' (expected ours, naive or lcm)");
}

SimConfig sim_config_from_json(const json& j, const std::string& path) {
  ConfigSection s(j, path);
  SimConfig c;
  if (s.has("design")) c.design = design_from_string(s.require<std::string>("design"));
  s.get("d", c.d);
  s.get("n_o", c.n_o);
  s.get("n_e", c.n_e);
  s.get("treat_p", c.treat_p);
  if (s.has("gp_prior")) c.gp_prior = kernel_from_json(s.child("gp_prior"));
  s.get("noise_sigma0", c.noise_sigma0);
  s.get("seed", c.seed);
  if (s.has("synthetic")) {
    auto o = s.child("synthetic");
    o.get("linear", c.synthetic.linear);
    o.get("treat_linear", c.synthetic.treat_linear);
    o.get("quad", c.synthetic.quad);
    o.get("treat_quad", c.synthetic.treat_quad);
    o.finish();
  }
  s.get("covariate_source", c.covariate_source);
  s.get("smoker_column", c.smoker_column);
  s.get("male_column", c.male_column);
  s.get("weight_base", c.weight_base);
  s.get("coefficient_density", c.coefficient_density);
  s.get("squared_scale", c.squared_scale);
  s.get("standardize", c.standardize);
  s.get("fill_points", c.fill_points);
  s.get("eval_points", c.eval_points);
  s.finish();
  if (c.d < 1) s.fail("d", "must be at least 1");
  if (c.n_o < 1) s.fail("n_o", "must be at least 1");
  if (c.n_e < 0) s.fail("n_e", "must be nonnegative");
  if (!(c.treat_p > 0.0 && c.treat_p < 1.0)) s.fail("treat_p", "must lie in (0, 1)");
  if (!(c.noise_sigma0 >= 0.0)) s.fail("noise_sigma0", "must be nonnegative");
  if (c.eval_points < 1) s.fail("eval_points", "must be at least 1");
  if (c.fill_points < 0) s.fail("fill_points", "must be nonnegative");
  return c;
}

OptimizerSettings optimizer_from_json(const json& j, const std::string& path) {
  ConfigSection s(j, path);
  OptimizerSettings o;
  s.get("step_size", o.step_size);
  s.get("max_iters", o.max_iters);
  s.get("grad_tol", o.grad_tol);
  s.get("restarts", o.restarts);
  s.get("seed", o.seed);
  s.finish();
  if (!(o.step_size > 0.0)) s.fail("step_size", "must be positive");
  if (o.max_iters < 0) s.fail("max_iters", "must be nonnegative");
  if (o.restarts < 0) s.fail("restarts", "must be nonnegative");
  return o;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ConfigSection s(j, "");
  ExperimentConfig c;
  if (s.has("sim")) c.sim = sim_config_from_json(s.raw("sim"));
  if (s.has("models")) {
    c.models.clear();
    for (const auto& m : s.raw("models")) {
      if (!m.is_string()) s.fail("models", "entries must be strings");
      c.models.push_back(model_from_string(m.get<std::string>()));
    }
    if (c.models.empty()) s.fail("models", "at least one model is required");
  }
  if (s.has("optimizer")) c.optimizer = optimizer_from_json(s.raw("optimizer"));
  if (s.has("observational")) {
    auto o = s.child("observational");
    ObservationalSpec spec;
    const auto kind = o.require<std::string>("kind");
    if (kind == "oracle") {
      spec.kind = ObservationalSpec::Kind::Oracle;
    } else if (kind == "ridge") {
      spec.kind = ObservationalSpec::Kind::Ridge;
    } else if (kind == "zero") {
      spec.kind = ObservationalSpec::Kind::Zero;
    } else {
      o.fail("kind", "expected oracle, ridge or zero");
    }
    o.get("lambda", spec.lambda);
    o.finish();
    if (!(spec.lambda >= 0.0)) o.fail("lambda", "must be nonnegative");
    c.observational = spec;
  }
  if (s.has("bound")) {
    auto b = s.child("bound");
    BoundStudySpec spec;
    b.get("delta", spec.delta);
    if (b.has("tau")) spec.tau = b.require<double>("tau");
    if (b.has("lipschitz_f")) spec.lipschitz_f = b.require<double>("lipschitz_f");
    b.get("n_e_list", spec.n_e_list);
    b.finish();
    if (!(spec.delta > 0.0 && spec.delta <= 1.0)) b.fail("delta", "must lie in (0, 1]");
    if (spec.n_e_list.empty()) b.fail("n_e_list", "must not be empty");
    for (int n : spec.n_e_list) {
      if (n < 0) b.fail("n_e_list", "sizes must be nonnegative");
    }
    c.bound = spec;
  }
  s.get("replications", c.replications);
  s.get("threads", c.threads);
  s.get("output_dir", c.output_dir);
  s.finish();
  if (c.replications < 1) s.fail("replications", "must be at least 1");
  if (c.sim.n_e < 1 && !c.bound) s.fail("sim", "n_e must be at least 1");
  return c;
}

json to_json(const SimConfig& c) {
  return {{"design", to_string(c.design)},
          {"d", c.d},
          {"n_o", c.n_o},
          {"n_e", c.n_e},
          {"treat_p", c.treat_p},
          {"gp_prior", kernel_to_json(c.gp_prior)},
          {"noise_sigma0", c.noise_sigma0},
          {"seed", c.seed},
          {"synthetic",
           {{"linear", c.synthetic.linear},
            {"treat_linear", c.synthetic.treat_linear},
            {"quad", c.synthetic.quad},
            {"treat_quad", c.synthetic.treat_quad}}},
          {"covariate_source", c.covariate_source},
          {"smoker_column", c.smoker_column},
          {"male_column", c.male_column},
          {"weight_base", c.weight_base},
          {"coefficient_density", c.coefficient_density},
          {"squared_scale", c.squared_scale},
          {"standardize", c.standardize},
          {"fill_points", c.fill_points},
          {"eval_points", c.eval_points}};
}

json to_json(const ExperimentConfig& c) {
  json models = json::array();
  for (auto m : c.models) models.push_back(to_string(m));
  json j = {{"sim", to_json(c.sim)},
            {"models", models},
            {"optimizer",
             {{"step_size", c.optimizer.step_size},
              {"max_iters", c.optimizer.max_iters},
              {"grad_tol", c.optimizer.grad_tol},
              {"restarts", c.optimizer.restarts},
              {"seed", c.optimizer.seed}}},
            {"replications", c.replications},
            {"threads", c.threads},
            {"output_dir", c.output_dir}};
  if (c.observational) {
    const char* kinds[] = {"oracle", "ridge", "zero"};
    j["observational"] = {{"kind", kinds[static_cast<int>(c.observational->kind)]},
                          {"lambda", c.observational->lambda}};
  }
  if (c.bound) {
    j["bound"] = {{"delta", c.bound->delta}, {"n_e_list", c.bound->n_e_list}};
    if (c.bound->tau) j["bound"]["tau"] = *c.bound->tau;
    if (c.bound->lipschitz_f) j["bound"]["lipschitz_f"] = *c.bound->lipschitz_f;
  }
  return j;
}

ObservationalSpec default_observational(Design d) {
  ObservationalSpec s;
  s.kind = d == Design::Synthetic ? ObservationalSpec::Kind::Oracle : ObservationalSpec::Kind::Ridge;
  return s;
}

ObservationalModel build_observational(const ObservationalSpec& spec, const SimulatedData& data) {
  switch (spec.kind) {
    case ObservationalSpec::Kind::Oracle: {
      auto truth = std::make_shared<GroundTruth>(data.truth);
      return ObservationalModel::oracle([truth](const Vector& x) { return truth->omega_o(x); });
    }
    case ObservationalSpec::Kind::Ridge:
      return fit_observational_ridge(data.obs, spec.lambda);
    case ObservationalSpec::Kind::Zero:
      return ObservationalModel::zero();
  }
  return ObservationalModel::zero();
}

GpModel initial_model(ModelKind kind, std::span<const PseudoSample> samples, double treat_p) {
  const auto prop = PropensityModel::constant(treat_p);
  switch (kind) {
    case ModelKind::Ours:
      return GpModel::from_pseudo_samples(MultitaskKernel::pseudo_fixed(SeKernel{}, SeKernel{}, prop), NoiseParams{},
                                          samples);
    case ModelKind::Naive:
      return GpModel::from_pseudo_samples(MultitaskKernel::naive(SeKernel{}), NoiseParams{}, samples);
    case ModelKind::Lcm:
      return GpModel::from_pseudo_samples(
          MultitaskKernel::lcm_trainable(SeKernel{}, SeKernel{}, Coregionalization{}, Coregionalization{}, prop),
          NoiseParams{}, samples);
  }
  throw Error(ErrorKind::ValidationError, "unknown model kind");
}

GridMetrics evaluate_grid(const PosteriorState& state, const ObservationalModel& obs_model, const EvalGrid& grid) {
  const auto preds = predict_batch(state, obs_model, grid.x);
  GridMetrics m;
  for (size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    const double truth = grid.cate[static_cast<Eigen::Index>(i)];
    m.mse += (p.mean_cate - truth) * (p.mean_cate - truth);
    m.coverage += (truth >= p.credible_low && truth <= p.credible_high) ? 1.0 : 0.0;
    m.width += p.credible_high - p.credible_low;
  }
  const double n = static_cast<double>(preds.size());
  m.mse /= n;
  m.coverage /= n;
  m.width /= n;
  return m;
}

MetricSummary summarize(const std::vector<double>& v) {
  MetricSummary s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

const MetricsRow& MetricsTable::at(ModelKind model, const std::string& grid) const {
  for (const auto& r : rows) {
    if (r.model == model && r.grid == grid) return r;
  }
  throw Error(ErrorKind::ValidationError, std::string("no metrics for ") + to_string(model) + " on " + grid);
}

MetricsTable run_experiment(const ExperimentConfig& cfg) {
  const int reps = cfg.replications;
  const size_t nm = cfg.models.size();
  // per replication: [model][grid] metrics
  std::vector<std::vector<std::array<GridMetrics, 2>>> results(static_cast<size_t>(reps));
  std::vector<std::string> errors(static_cast<size_t>(reps));
  const auto obs_spec = cfg.observational.value_or(default_observational(cfg.sim.design));

  parallel_for(reps, cfg.threads, [&](int rep) {
    errors[static_cast<size_t>(rep)] = with_retry([&](int attempt) {
      const auto data = generate(replication_sim(cfg, rep));
      const auto obs = build_observational(obs_spec, data);
      std::vector<std::array<GridMetrics, 2>> out(nm);
      for (size_t m = 0; m < nm; ++m) {
        const auto model =
            fit_model(cfg.models[m], data, obs, replication_optimizer(cfg, rep, attempt), cfg.sim.treat_p);
        const auto state = posterior(model);
        out[m][0] = evaluate_grid(state, obs, data.truth.in_distribution);
        out[m][1] = evaluate_grid(state, obs, data.truth.out_of_distribution);
      }
      results[static_cast<size_t>(rep)] = std::move(out);
    });
  });

  MetricsTable table;
  for (int rep = 0; rep < reps; ++rep) {
    if (!errors[static_cast<size_t>(rep)].empty()) table.failures.push_back({rep, errors[static_cast<size_t>(rep)]});
  }
  check_failures(static_cast<int>(table.failures.size()), reps, table.failures);
  table.replications_used = reps - static_cast<int>(table.failures.size());

  const char* grids[] = {kInDistribution, kOutOfDistribution};
  for (size_t m = 0; m < nm; ++m) {
    for (int g = 0; g < 2; ++g) {
      std::vector<double> mse, cov, width;
      for (int rep = 0; rep < reps; ++rep) {
        if (!errors[static_cast<size_t>(rep)].empty()) continue;
        const auto& r = results[static_cast<size_t>(rep)][m][static_cast<size_t>(g)];
        mse.push_back(r.mse);
        cov.push_back(r.coverage);
        width.push_back(r.width);
      }
      table.rows.push_back({cfg.models[m], grids[g], summarize(mse), summarize(cov), summarize(width)});
    }
  }
  return table;
}

BoundStudy run_bound_study(const ExperimentConfig& cfg) {
  if (!cfg.bound) throw Error(ErrorKind::ConfigError, "config key 'bound' is required for a bound study");
  const auto& spec = *cfg.bound;
  const int reps = cfg.replications;
  const auto obs_spec = cfg.observational.value_or(default_observational(cfg.sim.design));
  BoundStudy study;

  for (int n_e : spec.n_e_list) {
    struct Outcome {
      double covered = 0.0, width_in = 0.0, width_out = 0.0;
    };
    std::vector<Outcome> results(static_cast<size_t>(reps));
    std::vector<std::string> errors(static_cast<size_t>(reps));

    parallel_for(reps, cfg.threads, [&](int rep) {
      errors[static_cast<size_t>(rep)] = with_retry([&](int attempt) {
        SimConfig sim = replication_sim(cfg, rep);
        sim.n_e = std::max(n_e, 1);
        const auto data = generate(sim);
        const auto obs = build_observational(obs_spec, data);
        GpModel model = [&] {
          if (n_e > 0) return fit_model(ModelKind::Ours, data, obs, replication_optimizer(cfg, rep, attempt), sim.treat_p);
          // No experimental data: the prior of the simulated shift.
          const double s = std::max(cfg.sim.noise_sigma0, 1e-6);
          return GpModel(MultitaskKernel::pseudo_fixed(cfg.sim.gp_prior, cfg.sim.gp_prior,
                                                       PropensityModel::constant(sim.treat_p)),
                         NoiseParams::natural(s, s), {}, Vector());
        }();
        const auto state = posterior(model);
        BoundConfig bc;
        bc.delta = spec.delta;
        bc.tau = spec.tau;
        bc.lipschitz_f = spec.lipschitz_f;
        bc.support = data.truth.observational_box;
        bc.seed = sim.seed;
        Outcome o;
        bool all_in = true;
        for (int g = 0; g < 2; ++g) {
          const auto& grid = g == 0 ? data.truth.in_distribution : data.truth.out_of_distribution;
          const auto report = uniform_band(state, obs, bc, grid.x);
          double width = 0.0;
          for (size_t i = 0; i < report.per_point.size(); ++i) {
            const auto& p = report.per_point[i];
            if (std::abs(p.center - grid.cate[static_cast<Eigen::Index>(i)]) > p.half_width) all_in = false;
            width += 2.0 * p.half_width;
          }
          (g == 0 ? o.width_in : o.width_out) = width / static_cast<double>(report.per_point.size());
        }
        o.covered = all_in ? 1.0 : 0.0;
        results[static_cast<size_t>(rep)] = o;
      });
    });

    std::vector<ReplicationFailure> failures;
    for (int rep = 0; rep < reps; ++rep) {
      if (!errors[static_cast<size_t>(rep)].empty()) failures.push_back({rep, errors[static_cast<size_t>(rep)]});
    }
    check_failures(static_cast<int>(failures.size()), reps, failures);
    std::vector<double> cov, win, wout;
    for (int rep = 0; rep < reps; ++rep) {
      if (!errors[static_cast<size_t>(rep)].empty()) continue;
      cov.push_back(results[static_cast<size_t>(rep)].covered);
      win.push_back(results[static_cast<size_t>(rep)].width_in);
      wout.push_back(results[static_cast<size_t>(rep)].width_out);
    }
    study.rows.push_back({n_e, summarize(cov), summarize(win), summarize(wout), static_cast<int>(cov.size())});
    study.failures.insert(study.failures.end(), failures.begin(), failures.end());
  }
  return study;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::RuntimeFailure, "cannot write " + path.string());
  out << std::setprecision(10);
  out << "model,grid,mse,mse_se,coverage,coverage_se,width,width_se\n";
  for (const auto& r : table.rows) {
    out << to_string(r.model) << ',' << r.grid << ',' << r.mse.mean << ',' << r.mse.se << ',' << r.coverage.mean
        << ',' << r.coverage.se << ',' << r.width.mean << ',' << r.width.se << '\n';
  }
}

void write_bound_csv(const std::filesystem::path& path, const BoundStudy& study) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::RuntimeFailure, "cannot write " + path.string());
  out << std::setprecision(10);
  out << "n_e,coverage,coverage_se,width_in,width_in_se,width_out,width_out_se,replications\n";
  for (const auto& r : study.rows) {
    out << r.n_e << ',' << r.coverage.mean << ',' << r.coverage.se << ',' << r.width_in.mean << ','
        << r.width_in.se << ',' << r.width_out.mean << ',' << r.width_out.se << ',' << r.replications_used << '\n';
  }
}

json run_manifest(const json& config, std::uint64_t seed, const std::string& command) {
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << config_hash(config);
  return {{"command", command},
          {"config_hash", hash.str()},
          {"seed", seed},
          {"config", config},
          {"versions",
           {{"pogp", "0.1.0"},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__}}}};
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::RuntimeFailure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace pogp
