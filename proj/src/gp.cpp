#include "pogp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "pogp/errors.hpp"

namespace pogp {

// ---------------------------------------------------------------------------
// GpModel

GpModel::GpModel(MultitaskKernel kernel, NoiseParams noise, std::vector<TaskPoint> points, Vector targets)
    : kernel_(std::move(kernel)), noise_(noise), points_(std::move(points)), targets_(std::move(targets)) {
  if (static_cast<Eigen::Index>(points_.size()) != targets_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "training points and targets differ in length");
  }
  for (const auto& p : points_) {
    if (p.task != kControlTask && p.task != kTreatedTask) {
      throw Error(ErrorKind::InvalidTask, "training points must be on arm tasks 0 or 1");
    }
    if (p.x.size() != points_.front().x.size()) {
      throw Error(ErrorKind::DimensionMismatch, "training points differ in dimension");
    }
  }
  if (kernel_.kind() == MultitaskKernel::Kind::Naive) noise_.log_sigma1 = noise_.log_sigma0;
}

GpModel GpModel::from_pseudo_samples(MultitaskKernel kernel, NoiseParams noise,
                                     std::span<const PseudoSample> samples) {
  std::vector<TaskPoint> points;
  Vector y(static_cast<Eigen::Index>(samples.size()));
  points.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    points.push_back(TaskPoint{samples[i].covariates, samples[i].treatment});
    y[static_cast<Eigen::Index>(i)] = samples[i].target_residual;
  }
  return GpModel(std::move(kernel), noise, std::move(points), std::move(y));
}

Vector GpModel::hyperparameters() const {
  using Kind = MultitaskKernel::Kind;
  switch (kernel_.kind()) {
    case Kind::Naive:
      return (Vector(3) << kernel_.k().log_output_scale, kernel_.k().log_lengthscale, noise_.log_sigma0)
          .finished();
    case Kind::PseudoFixed:
      return (Vector(6) << kernel_.k().log_output_scale, kernel_.k().log_lengthscale,
              kernel_.l().log_output_scale, kernel_.l().log_lengthscale, noise_.log_sigma0, noise_.log_sigma1)
          .finished();
    case Kind::LcmTrainable: {
      const auto& a0 = kernel_.a0();
      const auto& a1 = kernel_.a1();
      return (Vector(10) << kernel_.k().log_lengthscale, kernel_.l().log_lengthscale, a0.log_l00, a0.l10,
              a0.log_l11, a1.log_l00, a1.l10, a1.log_l11, noise_.log_sigma0, noise_.log_sigma1)
          .finished();
    }
  }
  return {};
}

void GpModel::set_hyperparameters(const Vector& h) {
  using Kind = MultitaskKernel::Kind;
  if (h.size() != hyperparameters().size()) {
    throw Error(ErrorKind::DimensionMismatch, "hyperparameter vector has the wrong length");
  }
  switch (kernel_.kind()) {
    case Kind::Naive:
      kernel_.k() = SeKernel{h[0], h[1]};
      noise_ = NoiseParams{h[2], h[2]};
      break;
    case Kind::PseudoFixed:
      kernel_.k() = SeKernel{h[0], h[1]};
      kernel_.l() = SeKernel{h[2], h[3]};
      noise_ = NoiseParams{h[4], h[5]};
      break;
    case Kind::LcmTrainable:
      kernel_.k() = SeKernel{0.0, h[0]};
      kernel_.l() = SeKernel{0.0, h[1]};
      kernel_.a0() = Coregionalization{h[2], h[3], h[4]};
      kernel_.a1() = Coregionalization{h[5], h[6], h[7]};
      noise_ = NoiseParams{h[8], h[9]};
      break;
  }
}

std::vector<std::string> GpModel::hyperparameter_names() const {
  using Kind = MultitaskKernel::Kind;
  switch (kernel_.kind()) {
    case Kind::Naive: return {"log_output_scale", "log_lengthscale", "log_sigma"};
    case Kind::PseudoFixed:
      return {"k.log_output_scale", "k.log_lengthscale", "l.log_output_scale", "l.log_lengthscale",
              "log_sigma0", "log_sigma1"};
    case Kind::LcmTrainable:
      return {"k.log_lengthscale", "l.log_lengthscale", "A0.log_l00", "A0.l10", "A0.log_l11",
              "A1.log_l00", "A1.l10", "A1.log_l11", "log_sigma0", "log_sigma1"};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Marginal likelihood engine

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

/// Caches everything about the training set that does not depend on the
/// hyperparameters, so each evaluation costs one Gram build plus one factorization.
class MllEngine {
 public:
  explicit MllEngine(const GpModel& model) : model_(model) {
    const auto n = model.size();
    const Eigen::Index d = n > 0 ? model.points().front().x.size() : 0;
    Matrix x(n, d);
    pk_.resize(n, 2);
    pl_.resize(n, 2);
    tasks_.resize(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& p = model.points()[static_cast<size_t>(i)];
      x.row(i) = p.x.transpose();
      const auto ld = model.kernel().loadings(p.x, p.task);
      pk_.row(i) = ld.k.transpose();
      pl_.row(i) = ld.l.transpose();
      tasks_[static_cast<size_t>(i)] = p.task;
    }
    r2_ = squared_distances(x, x);
    r2_ = 0.5 * (r2_ + r2_.transpose()).eval();
    r2_.diagonal().setZero();
  }

  struct Evaluation {
    double mll = -std::numeric_limits<double>::infinity();
    Vector grad;
  };

  Evaluation evaluate(const Vector& h, bool with_gradient) {
    model_.set_hyperparameters(h);
    build(model_);
    const SpdMatrix k(gram_);
    const CholeskyFactor chol = cholesky(k);
    const Vector& y = model_.targets();
    const Vector alpha = solve_psd(chol, y);
    Evaluation out;
    out.mll = -0.5 * y.dot(alpha) - 0.5 * log_det(chol) - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
    if (with_gradient) out.grad = gradient(chol, alpha);
    return out;
  }

  const GpModel& model() const { return model_; }

 private:
  void build(const GpModel& m) {
    const auto& kern = m.kernel();
    const double ellk = kern.k().lengthscale();
    kk_ = kern.k().variance() * (-0.5 / (ellk * ellk) * r2_).array().exp().matrix();
    mk_ = pk_ * kern.k_mixing() * pk_.transpose();
    gram_ = mk_.cwiseProduct(kk_);
    if (kern.kind() != MultitaskKernel::Kind::Naive) {
      const double elll = kern.l().lengthscale();
      kl_ = kern.l().variance() * (-0.5 / (elll * elll) * r2_).array().exp().matrix();
      ml_ = pl_ * kern.l_mixing() * pl_.transpose();
      gram_ += ml_.cwiseProduct(kl_);
    }
    for (Eigen::Index i = 0; i < gram_.rows(); ++i) gram_(i, i) += m.noise().variance(tasks_[i]);
  }

  Vector gradient(const CholeskyFactor& chol, const Vector& alpha) {
    using Kind = MultitaskKernel::Kind;
    const auto& kern = model_.kernel();
    // W = alpha alpha^T - K^{-1}; dMLL/dh = 1/2 sum(W o dK/dh).
    Matrix w = inverse_psd(chol);
    w = alpha * alpha.transpose() - w;

    const Matrix wk = w.cwiseProduct(kk_);
    const double ellk = kern.k().lengthscale();
    auto lengthscale_term = [&](const Matrix& wkern, const Matrix& mix, double ell) {
      return 0.5 * (wkern.cwiseProduct(mix).cwiseProduct(r2_)).sum() / (ell * ell);
    };
    auto noise_term = [&](int t) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        if (tasks_[i] == t) acc += w(i, i);
      }
      return model_.noise().variance(t) * acc;
    };

    Vector g(model_.hyperparameters().size());
    switch (kern.kind()) {
      case Kind::Naive:
        g[0] = wk.cwiseProduct(mk_).sum();
        g[1] = lengthscale_term(wk, mk_, ellk);
        g[2] = noise_term(0) + noise_term(1);
        break;
      case Kind::PseudoFixed: {
        const Matrix wl = w.cwiseProduct(kl_);
        const double elll = kern.l().lengthscale();
        g[0] = wk.cwiseProduct(mk_).sum();
        g[1] = lengthscale_term(wk, mk_, ellk);
        g[2] = wl.cwiseProduct(ml_).sum();
        g[3] = lengthscale_term(wl, ml_, elll);
        g[4] = noise_term(0);
        g[5] = noise_term(1);
        break;
      }
      case Kind::LcmTrainable: {
        const Matrix wl = w.cwiseProduct(kl_);
        const double elll = kern.l().lengthscale();
        g[0] = lengthscale_term(wk, mk_, ellk);
        g[1] = lengthscale_term(wl, ml_, elll);
        // sum_ij W_ij k_ij p_i^T dA p_j = tr(dA P^T (W o k) P)
        const Eigen::Matrix2d gk = pk_.transpose() * wk * pk_;
        const Eigen::Matrix2d gl = pl_.transpose() * wl * pl_;
        for (int i = 0; i < 3; ++i) {
          g[2 + i] = 0.5 * kern.a0().derivative(i).cwiseProduct(gk).sum();
          g[5 + i] = 0.5 * kern.a1().derivative(i).cwiseProduct(gl).sum();
        }
        g[8] = noise_term(0);
        g[9] = noise_term(1);
        break;
      }
    }
    return g;
  }

  GpModel model_;
  Matrix r2_;
  Eigen::MatrixX2d pk_;
  Eigen::MatrixX2d pl_;
  std::vector<int> tasks_;
  Matrix kk_, kl_, mk_, ml_, gram_;
};

double median_pairwise_distance(const GpModel& model) {
  const auto& pts = model.points();
  std::vector<double> d;
  const size_t n = pts.size();
  // Subsample for large n; the heuristic only needs a rough scale.
  const size_t stride = n > 400 ? n / 400 : 1;
  for (size_t i = 0; i < n; i += stride) {
    for (size_t j = i + stride; j < n; j += stride) d.push_back((pts[i].x - pts[j].x).norm());
  }
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

Vector median_heuristic_start(const GpModel& model) {
  using Kind = MultitaskKernel::Kind;
  const Vector& y = model.targets();
  const double var = y.size() > 1 ? (y.array() - y.mean()).square().mean() : 1.0;
  const double v = var > 0.0 ? var : 1.0;
  const double log_ell = std::log(median_pairwise_distance(model));
  const double third = 0.5 * std::log(v / 3.0);
  switch (model.kernel().kind()) {
    case Kind::Naive: {
      const double half = 0.5 * std::log(v / 2.0);
      return (Vector(3) << half, log_ell, half).finished();
    }
    case Kind::PseudoFixed: {
      double b2 = 0.0;
      for (const auto& p : model.points()) {
        const double b = model.kernel().loadings(p.x, p.task).l(0);
        b2 += b * b;
      }
      b2 = model.size() > 0 ? b2 / static_cast<double>(model.size()) : 1.0;
      return (Vector(6) << third, log_ell, third - 0.5 * std::log(b2), log_ell, third, third).finished();
    }
    case Kind::LcmTrainable:
      return (Vector(10) << log_ell, log_ell, third, 0.0, third, third, 0.0, third, third, third).finished();
  }
  return {};
}

struct AscentResult {
  Vector h;
  double mll;
  double grad_norm;
  int iterations;
  bool converged;
};

AscentResult gradient_ascent(MllEngine& engine, Vector h, const OptimizerSettings& s) {
  constexpr double kMaxMove = 1.0;  // largest per-step change of any log-hyperparameter
  auto current = engine.evaluate(h, true);
  if (!std::isfinite(current.mll)) throw Error(ErrorKind::NotPositiveDefinite, "non-finite start");
  double eta = s.step_size;
  int it = 0;
  bool converged = false;
  for (; it < s.max_iters; ++it) {
    const double gnorm = current.grad.cwiseAbs().maxCoeff();
    if (gnorm <= s.grad_tol) {
      converged = true;
      break;
    }
    double t = std::min(eta, kMaxMove / gnorm);
    bool accepted = false;
    MllEngine::Evaluation trial;
    Vector h_trial;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      h_trial = h + t * current.grad;
      try {
        trial = engine.evaluate(h_trial, false);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotPositiveDefinite) throw;
        continue;
      }
      if (std::isfinite(trial.mll) && trial.mll >= current.mll) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      converged = true;  // no ascent direction left at machine precision
      break;
    }
    auto next = engine.evaluate(h_trial, true);
    // Barzilai-Borwein step length for the next iteration.
    const Vector step = h_trial - h;
    const Vector dg = next.grad - current.grad;
    const double sy = std::abs(step.dot(dg));
    eta = sy > 0.0 ? std::clamp(step.squaredNorm() / sy, 1e-8, 1e4) : 2.0 * t;
    h = h_trial;
    current = std::move(next);
  }
  return AscentResult{h, current.mll, current.grad.cwiseAbs().maxCoeff(), it, converged};
}

}  // namespace

double log_marginal_likelihood(const GpModel& model) {
  MllEngine engine(model);
  return engine.evaluate(model.hyperparameters(), false).mll;
}

Vector mll_gradient(const GpModel& model) {
  MllEngine engine(model);
  return engine.evaluate(model.hyperparameters(), true).grad;
}

GpModel fit(const GpModel& model, const OptimizerSettings& settings) {
  if (model.size() < 2) throw Error(ErrorKind::ValidationError, "fit needs at least two training points");
  if (model.kernel().kind() != MultitaskKernel::Kind::Naive) {
    bool arm[2] = {false, false};
    for (const auto& p : model.points()) arm[p.task] = true;
    if (!arm[0] || !arm[1]) throw Error(ErrorKind::ValidationError, "fit needs both treatment arms");
  }
  MllEngine engine(model);
  std::mt19937_64 rng(settings.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  std::optional<AscentResult> best;
  int best_restart = 0;
  int failed = 0;
  const Eigen::Index p = model.hyperparameters().size();
  for (int r = 0; r <= settings.restarts; ++r) {
    Vector start(p);
    if (r == 0) {
      start = median_heuristic_start(model);
    } else {
      for (Eigen::Index i = 0; i < p; ++i) start[i] = unit(rng);
    }
    try {
      auto result = gradient_ascent(engine, start, settings);
      if (!best || result.mll > best->mll) {
        best = std::move(result);
        best_restart = r;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NotPositiveDefinite) throw;
      ++failed;
    }
  }
  if (!best) throw Error(ErrorKind::AllRestartsFailed, "every restart failed to factor the Gram matrix");
  GpModel out = model;
  out.set_hyperparameters(best->h);
  out.set_report(ConvergenceReport{best->mll, best->grad_norm, best->iterations, best_restart, failed,
                                   best->converged});
  return out;
}

// ---------------------------------------------------------------------------
// Posterior

PosteriorState::PosteriorState(GpModel model) : model_(std::move(model)) {
  if (model_.size() == 0) return;
  const SpdMatrix k = gram_matrix(model_.kernel(), model_.points(), &model_.noise());
  chol_ = cholesky(k);
  alpha_ = solve_psd(*chol_, model_.targets());
}

void PosteriorState::gap_moments(const Matrix& queries, Vector& mean, Vector& variance) const {
  const auto m = queries.rows();
  std::vector<TaskPoint> q;
  q.reserve(static_cast<size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) q.push_back(TaskPoint{queries.row(i).transpose(), kCateTask});
  Vector prior(m);
  for (Eigen::Index i = 0; i < m; ++i) prior[i] = model_.kernel().cate_prior_variance(q[i].x);
  if (!chol_) {
    mean = Vector::Zero(m);
    variance = prior;
    return;
  }
  const Matrix cross = cross_covariance(model_.kernel(), model_.points(), q);  // n x m
  mean = cross.transpose() * alpha_;
  Matrix v = cross;
  chol_->llt().matrixL().solveInPlace(v);
  variance = prior - v.colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (variance[i] < -kVarianceClamp) {
      throw Error(ErrorKind::NegativeVariance, "posterior variance " + std::to_string(variance[i]));
    }
    if (variance[i] < 0.0) variance[i] = 0.0;
  }
}

PosteriorState posterior(const GpModel& model) { return PosteriorState(model); }

std::vector<CatePrediction> predict_batch(const PosteriorState& state, const ObservationalModel& obs_model,
                                          const Matrix& queries, double z) {
  Vector mean, var;
  state.gap_moments(queries, mean, var);
  std::vector<CatePrediction> out(static_cast<size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    auto& p = out[static_cast<size_t>(i)];
    p.mean_gap = mean[i];
    p.std = std::sqrt(var[i]);
    p.mean_cate = obs_model.predict_gap(queries.row(i).transpose()) + p.mean_gap;
    p.credible_low = p.mean_cate - z * p.std;
    p.credible_high = p.mean_cate + z * p.std;
  }
  return out;
}

CatePrediction predict(const PosteriorState& state, const ObservationalModel& obs_model, const Vector& x,
                       double z) {
  if (!x.allFinite()) throw Error(ErrorKind::ValidationError, "query point is not finite");
  return predict_batch(state, obs_model, x.transpose(), z).front();
}

}  // namespace pogp
