#include "pogp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pogp/errors.hpp"

namespace pogp {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::vector<int> first_primes(Eigen::Index count) {
  std::vector<int> primes;
  for (int c = 2; static_cast<Eigen::Index>(primes.size()) < count; ++c) {
    if (std::none_of(primes.begin(), primes.end(), [c](int p) { return c % p == 0; })) primes.push_back(c);
  }
  return primes;
}

enum Stream : std::uint64_t {
  kCovariates = 1,
  kTreatments,
  kNoise,
  kCoefficients,
  kSquaredCoefficients,
  kShift0,
  kShift1,
  kEvalGrid,
  kObservational,
};

}  // namespace

Matrix halton_points(Eigen::Index count, const Box& box, std::uint64_t seed) {
  const Eigen::Index d = box.lower.size();
  const auto primes = first_primes(d);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> perms(static_cast<size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    auto& p = perms[static_cast<size_t>(j)];
    p.resize(static_cast<size_t>(primes[j]));
    std::iota(p.begin(), p.end(), 0);
    // Digit 0 stays fixed so trailing zeros contribute nothing.
    std::shuffle(p.begin() + 1, p.end(), rng);
  }
  const Vector width = box.side_lengths();
  Matrix out(count, d);
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const int base = primes[j];
      const auto& perm = perms[static_cast<size_t>(j)];
      double u = 0.0, scale = 1.0 / base;
      for (std::uint64_t k = static_cast<std::uint64_t>(i + 1); k > 0; k /= base, scale /= base) {
        u += perm[k % base] * scale;
      }
      out(i, j) = box.lower[j] + u * width[j];
    }
  }
  return out;
}

Matrix unique_rows(const Matrix& x) {
  std::map<std::vector<double>, Eigen::Index> seen;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> key(static_cast<size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) key[static_cast<size_t>(j)] = x(i, j);
    if (seen.emplace(std::move(key), i).second) keep.push_back(i);
  }
  Matrix out(static_cast<Eigen::Index>(keep.size()), x.cols());
  for (size_t r = 0; r < keep.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(keep[r]);
  return out;
}

// ---------------------------------------------------------------------------
// GP prior draws

namespace {

std::vector<double> row_key(const Vector& x) { return std::vector<double>(x.data(), x.data() + x.size()); }

/// Several independent draws sharing one factorization of the grid Gram.
std::vector<GpPriorSample> sample_gp_priors(const SeKernel& kernel, const Matrix& grid,
                                            std::span<const std::uint64_t> seeds) {
  const auto n = grid.rows();
  if (n == 0) throw Error(ErrorKind::ValidationError, "prior grid is empty");
  if (unique_rows(grid).rows() != n) throw Error(ErrorKind::ValidationError, "prior grid has duplicate points");
  std::vector<GpPriorSample> out;
  if (kernel.variance() == 0.0) {
    for (size_t s = 0; s < seeds.size(); ++s) out.emplace_back(kernel, grid, Vector::Zero(n), Vector::Zero(n));
    return out;
  }
  const double ell = kernel.lengthscale();
  Matrix g = kernel.variance() * (-0.5 / (ell * ell) * squared_distances(grid, grid)).array().exp().matrix();
  g = 0.5 * (g + g.transpose()).eval();
  const auto chol = cholesky(SpdMatrix(std::move(g)));
  for (std::uint64_t seed : seeds) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    Vector e(n);
    for (auto& v : e) v = z(rng);
    Vector values = chol.lower() * e;
    Vector weights = solve_psd(chol, values);
    out.emplace_back(kernel, grid, std::move(values), std::move(weights));
  }
  return out;
}

}  // namespace

GpPriorSample::GpPriorSample(SeKernel kernel, Matrix grid, Vector values, Vector weights)
    : kernel_(kernel), grid_(std::move(grid)), values_(std::move(values)), weights_(std::move(weights)) {
  for (Eigen::Index i = 0; i < grid_.rows(); ++i) index_.emplace(row_key(grid_.row(i).transpose()), i);
}

double GpPriorSample::operator()(const Vector& x) const {
  if (x.size() != grid_.cols()) throw Error(ErrorKind::DimensionMismatch, "query dimension differs from grid");
  if (auto it = index_.find(row_key(x)); it != index_.end()) return values_[it->second];
  if (kernel_.variance() == 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < grid_.rows(); ++i) {
    acc += kernel_.from_squared_distance((grid_.row(i).transpose() - x).squaredNorm()) * weights_[i];
  }
  return acc;
}

Vector GpPriorSample::evaluate(const Matrix& x) const {
  if (x.cols() != grid_.cols()) throw Error(ErrorKind::DimensionMismatch, "query dimension differs from grid");
  Vector out(x.rows());
  if (kernel_.variance() == 0.0) return Vector::Zero(x.rows());
  const double ell = kernel_.lengthscale();
  const Matrix cross =
      kernel_.variance() * (-0.5 / (ell * ell) * squared_distances(x, grid_)).array().exp().matrix();
  out = cross * weights_;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (auto it = index_.find(row_key(x.row(i).transpose())); it != index_.end()) out[i] = values_[it->second];
  }
  return out;
}

GpPriorSample sample_gp_prior(const SeKernel& kernel, const Matrix& grid, std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  return std::move(sample_gp_priors(kernel, grid, seeds).front());
}

// ---------------------------------------------------------------------------

const char* to_string(Design d) {
  switch (d) {
    case Design::Synthetic: return "synthetic";
    case Design::Ihdp: return "ihdp";
    case Design::Robustness: return "robustness";
  }
  return "unknown";
}

Design design_from_string(const std::string& s) {
  if (s == "synthetic") return Design::Synthetic;
  if (s == "ihdp") return Design::Ihdp;
  if (s == "robustness") return Design::Robustness;
  throw Error(ErrorKind::ConfigError, "unknown design '" + s + "'");
}

double GroundTruth::shift(const Vector& x) const {
  return (shift1 ? (*shift1)(x) : 0.0) - (shift0 ? (*shift0)(x) : 0.0);
}

double GroundTruth::experimental_mean(const Vector& x, int t) const {
  const auto& f = t == 1 ? shift1 : shift0;
  return mean_outcome(x, t) + (f ? (*f)(x) : 0.0);
}

namespace {

void check_sizes(const SimConfig& cfg) {
  if (cfg.n_o < 1 || cfg.n_e < 1) throw Error(ErrorKind::ConfigError, "n_o and n_e must be at least 1");
  if (!(cfg.treat_p > 0.0 && cfg.treat_p < 1.0)) throw Error(ErrorKind::ConfigError, "treat_p must lie in (0, 1)");
  if (!(cfg.noise_sigma0 >= 0.0)) throw Error(ErrorKind::ConfigError, "noise_sigma0 must be nonnegative");
  if (cfg.eval_points < 1) throw Error(ErrorKind::ConfigError, "eval_points must be at least 1");
}

std::vector<int> bernoulli_draws(Eigen::Index n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(p);
  std::vector<int> t(static_cast<size_t>(n));
  for (auto& v : t) v = b(rng) ? 1 : 0;
  return t;
}

Vector noisy_outcomes(const Matrix& x, const std::vector<int>& t, double sigma, std::uint64_t seed,
                      const std::function<double(const Vector&, int)>& mean) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Vector y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    y[i] = mean(x.row(i).transpose(), t[static_cast<size_t>(i)]) + sigma * z(rng);
  }
  return y;
}

/// Draws both shifts on the union of the given point sets plus fill points.
void draw_shifts(GroundTruth& truth, const SimConfig& cfg, std::initializer_list<const Matrix*> parts,
                 const Box& fill_box) {
  Eigen::Index rows = cfg.fill_points;
  for (const Matrix* m : parts) rows += m->rows();
  Matrix all(rows, fill_box.lower.size());
  Eigen::Index at = 0;
  for (const Matrix* m : parts) {
    all.middleRows(at, m->rows()) = *m;
    at += m->rows();
  }
  if (cfg.fill_points > 0) {
    all.bottomRows(cfg.fill_points) = halton_points(cfg.fill_points, fill_box, mix_seed(cfg.seed, kEvalGrid) + 1);
  }
  const Matrix grid = unique_rows(all);
  const std::uint64_t seeds[] = {mix_seed(cfg.seed, kShift0), mix_seed(cfg.seed, kShift1)};
  auto draws = sample_gp_priors(cfg.gp_prior, grid, seeds);
  truth.shift0 = std::make_shared<const GpPriorSample>(std::move(draws[0]));
  truth.shift1 = std::make_shared<const GpPriorSample>(std::move(draws[1]));
}

void fill_eval_cate(GroundTruth& truth) {
  for (EvalGrid* g : {&truth.in_distribution, &truth.out_of_distribution}) {
    const Vector s = truth.shift1->evaluate(g->x) - truth.shift0->evaluate(g->x);
    g->cate.resize(g->x.rows());
    for (Eigen::Index i = 0; i < g->x.rows(); ++i) g->cate[i] = truth.omega_o(g->x.row(i).transpose()) + s[i];
  }
}

Dataset experimental_dataset(const GroundTruth& truth, const Matrix& x, const std::vector<int>& t,
                             const SimConfig& cfg, std::vector<std::string> names = {}) {
  const Vector f0 = truth.shift0->evaluate(x);
  const Vector f1 = truth.shift1->evaluate(x);
  std::mt19937_64 rng(mix_seed(cfg.seed, kNoise));
  std::normal_distribution<double> z;
  Vector y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int ti = t[static_cast<size_t>(i)];
    y[i] = truth.mean_outcome(x.row(i).transpose(), ti) + (ti == 1 ? f1[i] : f0[i]) + cfg.noise_sigma0 * z(rng);
  }
  return Dataset(x, t, y, Environment::Experimental, std::move(names));
}

}  // namespace

SimulatedData generate_synthetic(const SimConfig& cfg) {
  check_sizes(cfg);
  if (cfg.d < 1) throw Error(ErrorKind::ConfigError, "d must be at least 1");
  const Box obs_box = Box::cube(cfg.d, -3.0, 3.0);
  const Box exp_box = Box::cube(cfg.d, -1.0, 1.0);

  std::mt19937_64 rng(mix_seed(cfg.seed, kCovariates));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix xo(cfg.n_o, cfg.d), xe(cfg.n_e, cfg.d);
  for (Eigen::Index i = 0; i < xo.size(); ++i) xo.data()[i] = 3.0 * u(rng);
  for (Eigen::Index i = 0; i < xe.size(); ++i) xe.data()[i] = u(rng);

  GroundTruth truth;
  const SyntheticOutcome c = cfg.synthetic;
  truth.mean_outcome = [c](const Vector& x, int t) {
    const double s = x.sum();
    const double q = x[0] * x[0];
    return c.linear * s + c.treat_linear * t * s + c.quad * q + c.treat_quad * t * q;
  };
  truth.observational_box = obs_box;
  truth.experimental_box = exp_box;

  // Evaluation grids: quasi-random in the experimental box, and in the
  // observational box with the experimental box removed.
  const std::uint64_t grid_seed = mix_seed(cfg.seed, kEvalGrid);
  truth.in_distribution.x = halton_points(cfg.eval_points, exp_box, grid_seed);
  {
    Matrix out(cfg.eval_points, cfg.d);
    Eigen::Index kept = 0;
    for (Eigen::Index batch = 0; kept < cfg.eval_points; ++batch) {
      const Matrix cand = halton_points(4 * cfg.eval_points * (batch + 1), obs_box, grid_seed + 2);
      kept = 0;
      for (Eigen::Index i = 0; i < cand.rows() && kept < cfg.eval_points; ++i) {
        if (!exp_box.contains(cand.row(i).transpose())) out.row(kept++) = cand.row(i);
      }
    }
    truth.out_of_distribution.x = std::move(out);
  }
  draw_shifts(truth, cfg, {&xe, &truth.in_distribution.x, &truth.out_of_distribution.x}, obs_box);
  fill_eval_cate(truth);

  const auto to = bernoulli_draws(cfg.n_o, 0.5, mix_seed(cfg.seed, kObservational));
  const auto te = bernoulli_draws(cfg.n_e, cfg.treat_p, mix_seed(cfg.seed, kTreatments));
  Dataset obs(xo, to, noisy_outcomes(xo, to, cfg.noise_sigma0, mix_seed(cfg.seed, kObservational) + 1,
                                     truth.mean_outcome),
              Environment::Observational);
  Dataset exp = experimental_dataset(truth, xe, te, cfg);
  return SimulatedData{std::move(obs), std::move(exp), std::move(truth)};
}

// ---------------------------------------------------------------------------
// IHDP-style designs

Vector ihdp_weights(const Dataset& covariates, const SimConfig& cfg) {
  const auto smoker = covariates.column_index(cfg.smoker_column);
  const auto male = covariates.column_index(cfg.male_column);
  if (!smoker) throw Error(ErrorKind::SchemaError, "covariates lack indicator column '" + cfg.smoker_column + "'");
  if (!male) throw Error(ErrorKind::SchemaError, "covariates lack indicator column '" + cfg.male_column + "'");
  Vector w(covariates.size());
  for (Eigen::Index i = 0; i < covariates.size(); ++i) {
    const double s = covariates.covariates()(i, *smoker);
    const double m = covariates.covariates()(i, *male);
    if ((s != 0.0 && s != 1.0) || (m != 0.0 && m != 1.0)) {
      throw Error(ErrorKind::ValidationError, "indicator columns must be 0/1 (row " + std::to_string(i) + ")");
    }
    w[i] = std::pow(cfg.weight_base, s + m);
  }
  return w;
}

namespace {

Vector sparse_coefficients(Eigen::Index d, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution z(density);
  std::normal_distribution<double> n;
  Vector beta(d);
  for (auto& b : beta) {
    const bool on = z(rng);
    const double v = n(rng);
    b = on ? v : 0.0;
  }
  return beta;
}

SimulatedData generate_pool_design(const SimConfig& cfg, const Dataset& pool, bool squared) {
  check_sizes(cfg);
  const Vector weights = ihdp_weights(pool, cfg);
  const Matrix x = cfg.standardize ? Standardizer::fit(pool.covariates()).apply(pool.covariates())
                                   : pool.covariates();
  const Eigen::Index d = x.cols();
  const Eigen::Index n = x.rows();

  std::mt19937_64 rng(mix_seed(cfg.seed, kCovariates));
  std::uniform_int_distribution<Eigen::Index> uniform_row(0, n - 1);
  std::discrete_distribution<Eigen::Index> weighted_row(weights.data(), weights.data() + n);

  std::vector<Eigen::Index> obs_rows(static_cast<size_t>(cfg.n_o)), exp_rows(static_cast<size_t>(cfg.n_e));
  for (auto& r : obs_rows) r = uniform_row(rng);
  for (auto& r : exp_rows) r = weighted_row(rng);
  Matrix xo(cfg.n_o, d), xe(cfg.n_e, d);
  std::vector<int> to(obs_rows.size());
  for (size_t i = 0; i < obs_rows.size(); ++i) {
    xo.row(static_cast<Eigen::Index>(i)) = x.row(obs_rows[i]);
    to[i] = pool.treatments()[static_cast<size_t>(obs_rows[i])];
  }
  for (size_t i = 0; i < exp_rows.size(); ++i) xe.row(static_cast<Eigen::Index>(i)) = x.row(exp_rows[i]);

  LinearOutcome coef;
  {
    std::mt19937_64 crng(mix_seed(cfg.seed, kCoefficients));
    coef.main = sparse_coefficients(d, cfg.coefficient_density, crng);
    coef.treat = sparse_coefficients(d, cfg.coefficient_density, crng);
    std::mt19937_64 qrng(mix_seed(cfg.seed, kSquaredCoefficients));
    coef.main_sq = sparse_coefficients(d, cfg.coefficient_density, qrng) * (squared ? cfg.squared_scale : 0.0);
    coef.treat_sq = sparse_coefficients(d, cfg.coefficient_density, qrng) * (squared ? cfg.squared_scale : 0.0);
  }

  GroundTruth truth;
  truth.coefficients = coef;
  truth.mean_outcome = [coef](const Vector& v, int t) {
    const Vector sq = v.array().square().matrix();
    // (t x)^2 = t x^2 for binary t.
    return coef.main.dot(v) + t * coef.treat.dot(v) + coef.main_sq.dot(sq) + t * coef.treat_sq.dot(sq);
  };
  truth.observational_box = Box::bounding(x);
  truth.experimental_box = Box::bounding(xe);

  // Evaluation rows: weighted draws for in-distribution, uniform draws for out-of-distribution.
  std::mt19937_64 grng(mix_seed(cfg.seed, kEvalGrid));
  truth.in_distribution.x.resize(cfg.eval_points, d);
  truth.out_of_distribution.x.resize(cfg.eval_points, d);
  for (Eigen::Index i = 0; i < cfg.eval_points; ++i) {
    truth.in_distribution.x.row(i) = x.row(weighted_row(grng));
    truth.out_of_distribution.x.row(i) = x.row(uniform_row(grng));
  }
  draw_shifts(truth, cfg, {&x}, truth.observational_box);
  fill_eval_cate(truth);

  const auto te = bernoulli_draws(cfg.n_e, cfg.treat_p, mix_seed(cfg.seed, kTreatments));
  Dataset obs(xo, to, noisy_outcomes(xo, to, cfg.noise_sigma0, mix_seed(cfg.seed, kObservational) + 1,
                                     truth.mean_outcome),
              Environment::Observational, pool.covariate_names());
  Dataset exp = experimental_dataset(truth, xe, te, cfg, pool.covariate_names());
  return SimulatedData{std::move(obs), std::move(exp), std::move(truth)};
}

}  // namespace

SimulatedData generate_ihdp(const SimConfig& cfg, const Dataset& covariates) {
  return generate_pool_design(cfg, covariates, false);
}

SimulatedData generate_robustness(const SimConfig& cfg, const Dataset& covariates) {
  return generate_pool_design(cfg, covariates, true);
}

SimulatedData generate(const SimConfig& cfg) {
  if (cfg.design == Design::Synthetic) return generate_synthetic(cfg);
  const Dataset pool = cfg.covariate_source.empty()
                           ? ihdp_surrogate_covariates()
                           : load_csv(cfg.covariate_source, CsvSchema{});
  return cfg.design == Design::Ihdp ? generate_ihdp(cfg, pool) : generate_robustness(cfg, pool);
}

Dataset ihdp_surrogate_covariates(std::uint64_t seed) {
  struct Continuous {
    const char* name;
    double mean, sd;
  };
  struct Binary {
    const char* name;
    double p;
  };
  static constexpr Continuous kContinuous[] = {
      {"bw", 2.7, 0.65},  {"b_head", 33.0, 2.4},   {"preterm", 5.5, 2.3}, {"birth_o", 2.1, 1.1},
      {"nnhealth", 100.0, 10.0}, {"momage", 24.5, 5.9}, {"mom_score", 85.0, 18.0}};
  static constexpr Binary kBinary[] = {
      {"sex", 0.51},  {"twin", 0.09},    {"b_marr", 0.52},   {"mom_lths", 0.38}, {"mom_hs", 0.27},
      {"mom_scoll", 0.21}, {"cig", 0.35}, {"first", 0.45},  {"booze", 0.10},    {"drugs", 0.07},
      {"work_dur", 0.58}, {"prenatal", 0.96}, {"ark", 0.12}, {"ein", 0.12},     {"har", 0.13},
      {"mia", 0.10},  {"pen", 0.15},     {"tex", 0.13},      {"was", 0.17},      {"momwhite", 0.50},
      {"insured", 0.60}};
  constexpr Eigen::Index n = 985;
  constexpr Eigen::Index nc = std::size(kContinuous);
  constexpr Eigen::Index d = nc + std::size(kBinary);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Matrix x(n, d);
  std::vector<int> t(n);
  std::bernoulli_distribution treated(0.19);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < nc; ++j) x(i, j) = kContinuous[j].mean + kContinuous[j].sd * z(rng);
    for (Eigen::Index j = nc; j < d; ++j) {
      x(i, j) = std::bernoulli_distribution(kBinary[j - nc].p)(rng) ? 1.0 : 0.0;
    }
    t[static_cast<size_t>(i)] = treated(rng) ? 1 : 0;
  }
  std::vector<std::string> names;
  for (const auto& c : kContinuous) names.emplace_back(c.name);
  for (const auto& b : kBinary) names.emplace_back(b.name);
  return Dataset(std::move(x), std::move(t), Vector::Zero(n), Environment::Observational, std::move(names));
}

}  // namespace pogp
